"""Jitted hybrid-dynamics kernel: one apex-to-apex step of a spring-mass hopper.

A Dormand-Prince 5(4) adaptive stepper drives each continuous phase
(flight, stance, flight); terminal conditions are bracketed on every
accepted step and refined with an Illinois regula-falsi until the event
function magnitude drops below the configured tolerance.  Everything here
is plain scalar math so numba can compile it to a few microseconds per
apex-to-apex step, which is what makes dense state-action grids cheap.
"""

import math

from numba import njit

# outcome codes shared with the public dynamics module
OUT_APEX = 0
OUT_FAIL_GROUND = 1
OUT_FAIL_REVERSAL = 2
OUT_FAIL_TIMEOUT = 3
OUT_INFEASIBLE = 4
OUT_DIVERGED = 5

KIND_SLIP = 0
KIND_NSLIP = 1

# phase codes
_PH_DESCENT = 1
_PH_STANCE = 2
_PH_ASCENT = 3

_H_INIT = 1e-4
_H_FLOOR = 1e-14
_STANCE_H_MAX = 0.01  # keeps event brackets dense across one spring cycle
_CRUSH_FRACTION = 0.05


@njit(cache=True, inline="always")
def _accel(is_stance, kind, x, y, m, g, l0, k, beta0, c):
    """Body acceleration; stance coordinates are relative to the foot."""
    if not is_stance:
        return 0.0, -g
    l = math.sqrt(x * x + y * y)
    if l < 1e-12:
        l = 1e-12
    if kind == KIND_SLIP:
        f = k * (l0 - l)
    else:
        # guards keep trial steps finite beyond the liftoff length; the
        # liftoff event fires before these regions are ever accepted
        arg = 1.0 - 2.0 * l * l / (l0 * l0)
        if arg < -1.0:
            arg = -1.0
        elif arg > 1.0:
            arg = 1.0
        beta = math.acos(arg)
        sb = math.sin(beta)
        if sb < 1e-12:
            sb = 1e-12
        f = 4.0 * l * c * (beta0 - beta) / (l0 * l0 * sb)
    fm = f / m
    return fm * x / l, fm * y / l - g


@njit(cache=True)
def _dp_step(is_stance, kind, x, y, vx, vy, h, m, g, l0, k, beta0, c, rtol, atol):
    """One Dormand-Prince 5(4) step; returns the 5th-order state and the
    scaled error norm of the embedded 4th-order difference."""
    ax, ay = _accel(is_stance, kind, x, y, m, g, l0, k, beta0, c)
    k1x, k1y, k1vx, k1vy = vx, vy, ax, ay

    x2 = x + h * (0.2 * k1x)
    y2 = y + h * (0.2 * k1y)
    vx2 = vx + h * (0.2 * k1vx)
    vy2 = vy + h * (0.2 * k1vy)
    ax, ay = _accel(is_stance, kind, x2, y2, m, g, l0, k, beta0, c)
    k2x, k2y, k2vx, k2vy = vx2, vy2, ax, ay

    a31, a32 = 3.0 / 40.0, 9.0 / 40.0
    x3 = x + h * (a31 * k1x + a32 * k2x)
    y3 = y + h * (a31 * k1y + a32 * k2y)
    vx3 = vx + h * (a31 * k1vx + a32 * k2vx)
    vy3 = vy + h * (a31 * k1vy + a32 * k2vy)
    ax, ay = _accel(is_stance, kind, x3, y3, m, g, l0, k, beta0, c)
    k3x, k3y, k3vx, k3vy = vx3, vy3, ax, ay

    a41, a42, a43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
    x4 = x + h * (a41 * k1x + a42 * k2x + a43 * k3x)
    y4 = y + h * (a41 * k1y + a42 * k2y + a43 * k3y)
    vx4 = vx + h * (a41 * k1vx + a42 * k2vx + a43 * k3vx)
    vy4 = vy + h * (a41 * k1vy + a42 * k2vy + a43 * k3vy)
    ax, ay = _accel(is_stance, kind, x4, y4, m, g, l0, k, beta0, c)
    k4x, k4y, k4vx, k4vy = vx4, vy4, ax, ay

    a51, a52 = 19372.0 / 6561.0, -25360.0 / 2187.0
    a53, a54 = 64448.0 / 6561.0, -212.0 / 729.0
    x5 = x + h * (a51 * k1x + a52 * k2x + a53 * k3x + a54 * k4x)
    y5 = y + h * (a51 * k1y + a52 * k2y + a53 * k3y + a54 * k4y)
    vx5 = vx + h * (a51 * k1vx + a52 * k2vx + a53 * k3vx + a54 * k4vx)
    vy5 = vy + h * (a51 * k1vy + a52 * k2vy + a53 * k3vy + a54 * k4vy)
    ax, ay = _accel(is_stance, kind, x5, y5, m, g, l0, k, beta0, c)
    k5x, k5y, k5vx, k5vy = vx5, vy5, ax, ay

    a61, a62, a63 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0
    a64, a65 = 49.0 / 176.0, -5103.0 / 18656.0
    x6 = x + h * (a61 * k1x + a62 * k2x + a63 * k3x + a64 * k4x + a65 * k5x)
    y6 = y + h * (a61 * k1y + a62 * k2y + a63 * k3y + a64 * k4y + a65 * k5y)
    vx6 = vx + h * (a61 * k1vx + a62 * k2vx + a63 * k3vx + a64 * k4vx + a65 * k5vx)
    vy6 = vy + h * (a61 * k1vy + a62 * k2vy + a63 * k3vy + a64 * k4vy + a65 * k5vy)
    ax, ay = _accel(is_stance, kind, x6, y6, m, g, l0, k, beta0, c)
    k6x, k6y, k6vx, k6vy = vx6, vy6, ax, ay

    b1, b3, b4 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0
    b5, b6 = -2187.0 / 6784.0, 11.0 / 84.0
    xn = x + h * (b1 * k1x + b3 * k3x + b4 * k4x + b5 * k5x + b6 * k6x)
    yn = y + h * (b1 * k1y + b3 * k3y + b4 * k4y + b5 * k5y + b6 * k6y)
    vxn = vx + h * (b1 * k1vx + b3 * k3vx + b4 * k4vx + b5 * k5vx + b6 * k6vx)
    vyn = vy + h * (b1 * k1vy + b3 * k3vy + b4 * k4vy + b5 * k5vy + b6 * k6vy)
    ax, ay = _accel(is_stance, kind, xn, yn, m, g, l0, k, beta0, c)
    k7x, k7y, k7vx, k7vy = vxn, vyn, ax, ay

    e1, e3, e4 = 71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0
    e5, e6, e7 = -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0
    ex = h * (e1 * k1x + e3 * k3x + e4 * k4x + e5 * k5x + e6 * k6x + e7 * k7x)
    ey = h * (e1 * k1y + e3 * k3y + e4 * k4y + e5 * k5y + e6 * k6y + e7 * k7y)
    evx = h * (e1 * k1vx + e3 * k3vx + e4 * k4vx + e5 * k5vx + e6 * k6vx + e7 * k7vx)
    evy = h * (e1 * k1vy + e3 * k3vy + e4 * k4vy + e5 * k5vy + e6 * k6vy + e7 * k7vy)

    sx = atol + rtol * max(abs(x), abs(xn))
    sy = atol + rtol * max(abs(y), abs(yn))
    svx = atol + rtol * max(abs(vx), abs(vxn))
    svy = atol + rtol * max(abs(vy), abs(vyn))
    r0, r1, r2, r3 = ex / sx, ey / sy, evx / svx, evy / svy
    err = math.sqrt(0.25 * (r0 * r0 + r1 * r1 + r2 * r2 + r3 * r3))
    return xn, yn, vxn, vyn, err


@njit(cache=True, inline="always")
def _n_events(pc):
    if pc == _PH_STANCE:
        return 4
    return 2


@njit(cache=True, inline="always")
def _event_value(pc, i, x, y, vx, vy, td_h, l_rest, l_min):
    """Event i of phase pc, ordered failure-first so ties resolve
    conservatively.  Descent: [ground, touchdown]; stance: [ground, crush,
    reversal, liftoff]; ascent: [ground, apex]."""
    if pc == _PH_DESCENT:
        if i == 0:
            return y
        return y - td_h
    if pc == _PH_STANCE:
        if i == 0:
            return y
        if i == 1:
            return math.sqrt(x * x + y * y) - l_min
        if i == 2:
            return vx
        return math.sqrt(x * x + y * y) - l_rest
    if i == 0:
        return y
    return vy


@njit(cache=True, inline="always")
def _event_direction(pc, i):
    # +1: trigger on rising crossings; -1: on falling crossings
    if pc == _PH_STANCE and i == 3:
        return 1
    return -1


@njit(cache=True, inline="always")
def _triggered(g_old, g_new, direction):
    if direction > 0:
        return (g_old < 0.0 and g_new >= 0.0) or (g_old == 0.0 and g_new > 0.0)
    return (g_old > 0.0 and g_new <= 0.0) or (g_old == 0.0 and g_new < 0.0)


@njit(cache=True)
def _locate_event(pc, i, is_stance, kind, x, y, vx, vy, h, g_old, g_new,
                  m, g, l0, k, beta0, c, rtol, atol, event_tol,
                  td_h, l_rest, l_min):
    """Illinois regula-falsi for the crossing time of event i inside an
    accepted step, evaluated on the one-step flow from the step's start."""
    if g_old == 0.0:
        return 0.0, x, y, vx, vy
    a, fa = 0.0, g_old
    b, fb = h, g_new
    bx, by, bvx, bvy, _ = _dp_step(is_stance, kind, x, y, vx, vy, h,
                                   m, g, l0, k, beta0, c, rtol, atol)
    if abs(fb) <= event_tol:
        return b, bx, by, bvx, bvy
    best_t, best_g = b, abs(fb)
    best_x, best_y, best_vx, best_vy = bx, by, bvx, bvy
    for _ in range(80):
        denom = fb - fa
        if denom == 0.0:
            tm = 0.5 * (a + b)
        else:
            tm = (a * fb - b * fa) / denom
        if tm <= a or tm >= b:
            tm = 0.5 * (a + b)
        xm, ym, vxm, vym, _ = _dp_step(is_stance, kind, x, y, vx, vy, tm,
                                       m, g, l0, k, beta0, c, rtol, atol)
        fm = _event_value(pc, i, xm, ym, vxm, vym, td_h, l_rest, l_min)
        if abs(fm) < best_g:
            best_t, best_g = tm, abs(fm)
            best_x, best_y, best_vx, best_vy = xm, ym, vxm, vym
        if abs(fm) <= event_tol:
            return tm, xm, ym, vxm, vym
        if (fm > 0.0) == (fa > 0.0):
            a, fa = tm, fm
            fb *= 0.5
        else:
            b, fb = tm, fm
            fa *= 0.5
        if b - a < 1e-15 * max(1.0, h):
            break
    return best_t, best_x, best_y, best_vx, best_vy


@njit(cache=True)
def _integrate_phase(pc, kind, t0, x, y, vx, vy, t_end, h_max,
                     m, g, l0, k, beta0, c, rtol, atol, event_tol,
                     td_h, l_rest, l_min):
    """Advance one continuous phase until an event fires or time runs out.

    Returns (status, event_index, t, x, y, vx, vy); status 0 = event fired,
    1 = reached t_end without an event, 2 = step size underflow.
    """
    is_stance = pc == _PH_STANCE
    nev = _n_events(pc)
    g_old = (0.0, 0.0, 0.0, 0.0)
    g0 = _event_value(pc, 0, x, y, vx, vy, td_h, l_rest, l_min)
    g1 = _event_value(pc, 1, x, y, vx, vy, td_h, l_rest, l_min)
    g2 = _event_value(pc, 2, x, y, vx, vy, td_h, l_rest, l_min) if nev > 2 else 1.0
    g3 = _event_value(pc, 3, x, y, vx, vy, td_h, l_rest, l_min) if nev > 3 else 1.0
    g_old = (g0, g1, g2, g3)

    t = t0
    h = _H_INIT
    # leftover spans below float resolution count as "reached the end"
    while t_end - t > 1e-14 * max(1.0, t_end):
        if h > h_max:
            h = h_max
        if h > t_end - t:
            h = t_end - t
        xn, yn, vxn, vyn, err = _dp_step(is_stance, kind, x, y, vx, vy, h,
                                         m, g, l0, k, beta0, c, rtol, atol)
        if not (err <= 1.0):  # also catches nan
            if err != err:  # nan: halve and retry
                h *= 0.5
            else:
                fac = 0.9 * err ** -0.2
                if fac < 0.2:
                    fac = 0.2
                h *= fac
            if h < _H_FLOOR:
                return 2, -1, t, x, y, vx, vy
            continue

        gn0 = _event_value(pc, 0, xn, yn, vxn, vyn, td_h, l_rest, l_min)
        gn1 = _event_value(pc, 1, xn, yn, vxn, vyn, td_h, l_rest, l_min)
        gn2 = _event_value(pc, 2, xn, yn, vxn, vyn, td_h, l_rest, l_min) if nev > 2 else 1.0
        gn3 = _event_value(pc, 3, xn, yn, vxn, vyn, td_h, l_rest, l_min) if nev > 3 else 1.0
        g_new = (gn0, gn1, gn2, gn3)

        hit = -1
        hit_t = h * 2.0
        hx, hy, hvx, hvy = xn, yn, vxn, vyn
        for i in range(nev):
            if _triggered(g_old[i], g_new[i], _event_direction(pc, i)):
                tau, ex_, ey_, evx_, evy_ = _locate_event(
                    pc, i, is_stance, kind, x, y, vx, vy, h,
                    g_old[i], g_new[i], m, g, l0, k, beta0, c,
                    rtol, atol, event_tol, td_h, l_rest, l_min)
                if tau < hit_t:
                    hit = i
                    hit_t = tau
                    hx, hy, hvx, hvy = ex_, ey_, evx_, evy_
        if hit >= 0:
            return 0, hit, t + hit_t, hx, hy, hvx, hvy

        t += h
        x, y, vx, vy = xn, yn, vxn, vyn
        g_old = g_new
        if err < 1e-12:
            fac = 10.0
        else:
            fac = 0.9 * err ** -0.2
            if fac > 10.0:
                fac = 10.0
            elif fac < 0.2:
                fac = 0.2
        h *= fac
    return 1, -1, t, x, y, vx, vy


@njit(cache=True)
def sim_step_kernel(x0, y0, vx0, alpha, kind, m, g, l0, k, beta0, c,
                    rtol, atol, event_tol, t_max):
    """Simulate apex -> touchdown -> stance -> liftoff -> apex.

    Returns (code, x, y, vx, vy, t) in world coordinates.  Codes follow the
    OUT_* constants; the state is the apex state on success and the state
    at the triggering event on failure.
    """
    if kind == KIND_SLIP:
        l_rest = l0
    else:
        l_rest = l0 * math.sin(0.5 * beta0)
    l_min = _CRUSH_FRACTION * l_rest
    td_h = l_rest * math.cos(alpha)

    if y0 < td_h:
        return OUT_INFEASIBLE, x0, y0, vx0, 0.0, 0.0
    if y0 <= 0.0:
        return OUT_FAIL_GROUND, x0, y0, vx0, 0.0, 0.0

    # descent: ballistic fall from apex to touchdown height
    st, ev, t, x, y, vx, vy = _integrate_phase(
        _PH_DESCENT, kind, 0.0, x0, y0, vx0, 0.0, t_max, t_max,
        m, g, l0, k, beta0, c, rtol, atol, event_tol, td_h, l_rest, l_min)
    if st == 2:
        return OUT_DIVERGED, x, y, vx, vy, t
    if st == 1:
        return OUT_FAIL_TIMEOUT, x, y, vx, vy, t
    if ev == 0:
        return OUT_FAIL_GROUND, x, y, vx, vy, t

    # stance: frame reset so the body sits at the landing geometry and the
    # foot is the origin
    foot_x = x + l_rest * math.sin(alpha)
    xs = -l_rest * math.sin(alpha)
    ys = td_h
    st, ev, t, xs, ys, vx, vy = _integrate_phase(
        _PH_STANCE, kind, t, xs, ys, vx, vy, t_max, _STANCE_H_MAX,
        m, g, l0, k, beta0, c, rtol, atol, event_tol, td_h, l_rest, l_min)
    if st == 2:
        return OUT_DIVERGED, foot_x + xs, ys, vx, vy, t
    if st == 1:
        return OUT_FAIL_TIMEOUT, foot_x + xs, ys, vx, vy, t
    if ev == 0 or ev == 1:
        return OUT_FAIL_GROUND, foot_x + xs, ys, vx, vy, t
    if ev == 2:
        return OUT_FAIL_REVERSAL, foot_x + xs, ys, vx, vy, t

    # ascent: ballistic rise from liftoff to apex
    x = foot_x + xs
    st, ev, t, x, y, vx, vy = _integrate_phase(
        _PH_ASCENT, kind, t, x, ys, vx, vy, t_max, t_max,
        m, g, l0, k, beta0, c, rtol, atol, event_tol, td_h, l_rest, l_min)
    if st == 2:
        return OUT_DIVERGED, x, y, vx, vy, t
    if st == 1:
        return OUT_FAIL_TIMEOUT, x, y, vx, vy, t
    if ev == 0:
        return OUT_FAIL_GROUND, x, y, vx, vy, t
    return OUT_APEX, x, y, vx, vy, t
