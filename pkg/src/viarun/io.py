"""Single-file artifact container: a JSON header line plus a CSV matrix.

Layout (UTF-8 text):

    {"format": "...", "version": 1, "shape": [r, c], "meta": {...}, "checksum": "..."}
    v00,v01,...
    v10,v11,...

The checksum is the SHA-256 hex digest of the canonical header (sorted
keys, no whitespace, ``checksum`` field removed) followed by a newline and
the raw payload bytes, so both metadata and matrix corruption are caught.
Floats are written with %.17g and round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
from io import StringIO

import numpy as np

FORMAT_VERSION = 1


class ArtifactError(ValueError):
    """Malformed artifact file."""


class ChecksumError(ArtifactError):
    """Stored checksum does not match the file contents."""


class VersionError(ArtifactError):
    """Artifact written by a newer format version."""


def _canonical(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode()


def _digest(header: dict, payload: bytes) -> str:
    return hashlib.sha256(_canonical(header) + b"\n" + payload).hexdigest()


def write_matrix(path: str | os.PathLike, fmt: str, meta: dict,
                 matrix: np.ndarray, value_format: str = "%.17g") -> None:
    matrix = np.atleast_2d(np.asarray(matrix))
    buf = StringIO()
    np.savetxt(buf, matrix, fmt=value_format, delimiter=",")
    payload = buf.getvalue().encode()
    header = {
        "format": fmt,
        "version": FORMAT_VERSION,
        "shape": list(matrix.shape),
        "meta": meta,
    }
    header["checksum"] = _digest(header, payload)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode())
        fh.write(b"\n")
        fh.write(payload)


def read_matrix(path: str | os.PathLike, fmt: str) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        first = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(first.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"{path}: not a viarun artifact") from exc
    if not isinstance(header, dict) or "checksum" not in header:
        raise ArtifactError(f"{path}: missing artifact header")
    stored = header.pop("checksum")
    if header.get("format") != fmt:
        raise ArtifactError(
            f"{path}: expected format {fmt!r}, found {header.get('format')!r}")
    version = header.get("version")
    if not isinstance(version, int):
        raise ArtifactError(f"{path}: missing format version")
    if version > FORMAT_VERSION:
        raise VersionError(
            f"{path}: format version {version} is newer than supported "
            f"({FORMAT_VERSION})")
    if _digest(header, payload) != stored:
        raise ChecksumError(f"{path}: checksum mismatch (truncated or edited?)")
    matrix = np.loadtxt(StringIO(payload.decode()), delimiter=",", ndmin=2)
    if list(matrix.shape) != header["shape"]:
        raise ArtifactError(f"{path}: shape mismatch")
    return header["meta"], matrix


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
