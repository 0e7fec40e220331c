"""Matrix containers: a JSON sidecar header next to a raw float64 payload.

``name.json`` holds ``rows``, ``cols``, ``dtype`` (always ``"f64le"``),
``order`` (always ``"row-major"``) and a semantic ``name``; ``name.bin``
holds ``rows * cols`` little-endian doubles.
"""

import json
import os
from pathlib import Path

import numpy as np

DTYPE = "f64le"
ORDER = "row-major"
_LE = np.dtype("<f8")


class ContainerError(OSError):
    """Malformed or unreadable container."""


def _paths(stem):
    stem = Path(stem)
    if stem.suffix in (".json", ".bin"):
        stem = stem.with_suffix("")
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def write_json(path, obj):
    """Write ``obj`` as JSON with sorted keys so output is reproducible."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_matrix(stem, M, name=None):
    """Write ``M`` (1-D arrays become a single row) as ``stem.json`` + ``stem.bin``."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    if M.ndim != 2:
        raise ValueError("containers hold 2-D matrices")
    header_path, payload_path = _paths(stem)
    header = {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "dtype": DTYPE,
              "order": ORDER, "name": name or header_path.stem}
    try:
        header_path.parent.mkdir(parents=True, exist_ok=True)
        write_json(header_path, header)
        payload_path.write_bytes(np.ascontiguousarray(M, dtype=_LE).tobytes())
    except OSError as exc:
        raise ContainerError(f"cannot write container {header_path}: {exc}") from exc
    return header_path, payload_path


def read_header(stem):
    header_path, _ = _paths(stem)
    try:
        header = json.loads(header_path.read_text())
    except (OSError, ValueError) as exc:
        raise ContainerError(f"cannot read header {header_path}: {exc}") from exc
    missing = {"rows", "cols", "dtype", "order"} - set(header)
    if missing:
        raise ContainerError(f"{header_path}: missing fields {sorted(missing)}")
    if header["dtype"] != DTYPE or header["order"] != ORDER:
        raise ContainerError(f"{header_path}: unsupported layout "
                             f"{header['dtype']}/{header['order']}")
    return header


def read_matrix(stem):
    """Read a container; the header is parsed and validated before the payload."""
    header = read_header(stem)
    _, payload_path = _paths(stem)
    rows, cols = int(header["rows"]), int(header["cols"])
    try:
        size = os.path.getsize(payload_path)
        if size != rows * cols * 8:
            raise ContainerError(f"{payload_path}: payload is {size} bytes, "
                                 f"expected {rows * cols * 8}")
        data = np.fromfile(payload_path, dtype=_LE)
    except OSError as exc:
        if isinstance(exc, ContainerError):
            raise
        raise ContainerError(f"cannot read payload {payload_path}: {exc}") from exc
    return data.astype(float, copy=False).reshape(rows, cols)


def operator_to_matrix(G):
    """Pack ``G`` as an ``L_H x 2K`` matrix: K indices then K weights, -1/0 padded."""
    counts = np.diff(G.indptr)
    K = int(counts.max()) if counts.size else 0
    out = np.full((G.L_H, 2 * K), -1.0)
    out[:, K:] = 0.0
    for i in range(G.L_H):
        lo, hi = G.indptr[i], G.indptr[i + 1]
        out[i, :hi - lo] = G.indices[lo:hi]
        out[i, K:K + hi - lo] = G.weights[lo:hi]
    return out


def matrix_to_operator(P, L_x, L_y, factor, kernel_width, sigma):
    """Inverse of :func:`operator_to_matrix`."""
    from hibcd.linalg import SpatialDecimationOperator

    P = np.asarray(P, dtype=float)
    K = P.shape[1] // 2
    keep = P[:, :K] >= 0
    indptr = np.zeros(P.shape[0] + 1, dtype=np.int64)
    np.cumsum(keep.sum(axis=1), out=indptr[1:])
    indices = P[:, :K][keep].astype(np.int64)
    weights = P[:, K:][keep]
    return SpatialDecimationOperator.from_neighborhoods(
        indptr, indices, weights, L_x, L_y, factor, kernel_width, sigma)
