"""Independent apex-to-apex reference simulator built on scipy.solve_ivp.

Deliberately written from the model equations alone, with scipy's own
event machinery, so it shares no integration code with the package.  Used
to cross-check the production kernel at tighter tolerances.
"""

import math

import numpy as np
from scipy.integrate import solve_ivp

from viarun.dynamics import ModelKind, ModelParams


def _stance_rhs(t, state, p: ModelParams):
    x, y, vx, vy = state
    l = math.hypot(x, y)
    if p.kind is ModelKind.SLIP:
        f = p.k * (p.l0 - l)
    else:
        arg = min(1.0, max(-1.0, 1.0 - 2.0 * l * l / (p.l0 * p.l0)))
        beta = math.acos(arg)
        sb = max(math.sin(beta), 1e-12)
        f = 4.0 * l * p.c * (p.beta0 - beta) / (p.l0 * p.l0 * sb)
    return [vx, vy, f / p.m * x / l, f / p.m * y / l - p.g]


def _flight_rhs(t, state, p: ModelParams):
    return [state[2], state[3], 0.0, -p.g]


def reference_step(y0, vx0, alpha, p: ModelParams, rtol=1e-9, atol=1e-11,
                   t_max=5.0):
    """Returns ("apex", y, vx) or ("failure", reason) or ("infeasible",)."""
    l_rest = p.l_rest
    td_h = l_rest * math.cos(alpha)
    if y0 < td_h:
        return ("infeasible",)

    def touchdown(t, s, p=p):
        return s[1] - td_h
    touchdown.terminal = True
    touchdown.direction = -1

    def ground(t, s, p=p):
        return s[1]
    ground.terminal = True
    ground.direction = -1

    sol = solve_ivp(_flight_rhs, (0.0, t_max), [0.0, y0, vx0, 0.0], args=(p,),
                    events=[touchdown, ground], rtol=rtol, atol=atol)
    if sol.t_events[1].size and not sol.t_events[0].size:
        return ("failure", "body_ground")
    if not sol.t_events[0].size:
        return ("failure", "timeout")
    td_state = sol.y_events[0][0]
    t_used = sol.t_events[0][0]

    def liftoff(t, s, p=p):
        return math.hypot(s[0], s[1]) - l_rest
    liftoff.terminal = True
    liftoff.direction = 1

    def crush(t, s, p=p):
        return math.hypot(s[0], s[1]) - 0.05 * l_rest
    crush.terminal = True
    crush.direction = -1

    def reversal(t, s, p=p):
        return s[2]
    reversal.terminal = True
    reversal.direction = -1

    stance0 = [-l_rest * math.sin(alpha), td_h, td_state[2], td_state[3]]
    sol = solve_ivp(_stance_rhs, (0.0, t_max - t_used), stance0, args=(p,),
                    events=[liftoff, ground, crush, reversal],
                    rtol=rtol, atol=atol, max_step=0.01)
    if sol.t_events[1].size or sol.t_events[2].size:
        return ("failure", "body_ground")
    if sol.t_events[3].size:
        return ("failure", "direction_reversal")
    if not sol.t_events[0].size:
        return ("failure", "timeout")
    lo_state = sol.y_events[0][0]
    t_used += sol.t_events[0][0]

    def apex(t, s, p=p):
        return s[3]
    apex.terminal = True
    apex.direction = -1

    sol = solve_ivp(_flight_rhs, (0.0, t_max - t_used), list(lo_state), args=(p,),
                    events=[apex, ground], rtol=rtol, atol=atol)
    if sol.t_events[1].size and not sol.t_events[0].size:
        return ("failure", "body_ground")
    if not sol.t_events[0].size:
        return ("failure", "timeout")
    ap = sol.y_events[0][0]
    return ("apex", float(ap[1]), float(ap[2]))


def stance_trajectory(y0, vx0, alpha, p: ModelParams, rtol=1e-10, atol=1e-12,
                      n_samples=200):
    """Dense stance-phase samples for energy-conservation checks, or None
    if the step never reaches stance."""
    l_rest = p.l_rest
    td_h = l_rest * math.cos(alpha)
    if y0 < td_h:
        return None
    t_td = math.sqrt(2.0 * max(y0 - td_h, 0.0) / p.g)
    stance0 = [-l_rest * math.sin(alpha), td_h, vx0, -p.g * t_td]

    def liftoff(t, s, p=p):
        return math.hypot(s[0], s[1]) - l_rest
    liftoff.terminal = True
    liftoff.direction = 1

    def ground(t, s, p=p):
        return s[1]
    ground.terminal = True
    ground.direction = -1

    sol = solve_ivp(_stance_rhs, (0.0, 5.0), stance0, args=(p,),
                    events=[liftoff, ground], rtol=rtol, atol=atol,
                    dense_output=True, max_step=0.01)
    t_end = sol.t[-1]
    ts = np.linspace(0.0, t_end, n_samples)
    return ts, sol.sol(ts)
