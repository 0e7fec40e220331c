"""Projections and linear-optimization oracles.

Three constraint geometries are covered: the box ``[0, 1]``, the unit
simplex applied column by column, and a nuclear-norm ball applied to each
row reshaped into an image. Every projection is the prox of the set's
indicator, so it ignores the step size.
"""

import numpy as np

from hibcd import _backend
from hibcd.errors import NumericalFailure
from hibcd.linalg import principal_singular_pair


def prox_box01(X):
    return np.clip(X, 0.0, 1.0)


def lo_box01(grad):
    """Minimizer of ``<grad, Z>`` over the box; ``grad == 0`` maps to 0."""
    return (np.asarray(grad) < 0).astype(float)


def project_simplex(v):
    """Euclidean projection of a vector onto ``{x >= 0, sum(x) = 1}``.

    Sort-and-threshold, ``O(n log n)``.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a non-empty 1-D vector")
    return _backend.project_simplex_columns(np.ascontiguousarray(v[:, None]))[:, 0]


def prox_colwise_simplex(S):
    return _backend.project_simplex_columns(np.ascontiguousarray(S, dtype=float))


def lo_colwise_simplex(grad):
    """One-hot column at the smallest entry of each gradient column.

    Ties go to the smallest row index.
    """
    grad = np.asarray(grad)
    out = np.zeros(grad.shape)
    out[np.argmin(grad, axis=0), np.arange(grad.shape[1])] = 1.0
    return out


def simplex_feasible(S, tol=1e-9):
    S = np.asarray(S)
    return bool(np.all(S >= -tol) and np.allclose(S.sum(axis=0), 1.0, rtol=0, atol=tol))


def nuclear_norm(X):
    return float(np.linalg.svd(X, compute_uv=False).sum())


def project_nuclear_ball(X, gamma):
    """Projection onto ``{Y : ||Y||_* <= gamma}``.

    Points already inside are returned unchanged; otherwise the singular
    values are projected onto the l1 sphere of radius ``gamma``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    X = np.asarray(X, dtype=float)
    try:
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    if s.sum() <= gamma:
        return X.copy()
    s_new = gamma * project_simplex(s / gamma)
    return (U * s_new) @ Vt


class WarmStartStore:
    """Principal singular pairs remembered between oracle calls, by key."""

    def __init__(self):
        self._pairs = {}

    def get(self, key):
        return self._pairs.get(key)

    def put(self, key, u, v):
        self._pairs[key] = (u, v)

    def __len__(self):
        return len(self._pairs)

    def __contains__(self, key):
        return key in self._pairs


def lo_nuclear_ball(grad, gamma, warm=None, key=0, tol=1e-9, max_iter=300):
    """Minimizer ``-gamma u1 v1^T`` of ``<grad, Y>`` over the nuclear ball.

    The principal pair comes from the power method, started from the pair
    cached in ``warm`` under ``key`` when available.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    grad = np.asarray(grad, dtype=float)
    if not np.any(grad):
        return np.zeros(grad.shape)
    start = warm.get(key) if warm is not None else None
    pair = principal_singular_pair(grad, warm=start, tol=tol, max_iter=max_iter)
    if warm is not None:
        warm.put(key, pair.u, pair.v)
    return -gamma * np.outer(pair.u, pair.v)


def row_to_image(row, L_x, L_y):
    """Reshape an abundance row (length ``L_x * L_y``) into ``L_y x L_x``."""
    return np.reshape(row, (L_y, L_x), order="F")


def image_to_row(img):
    return np.reshape(img, -1, order="F")


def _check_rows(S, tau, L_x, L_y):
    S = np.asarray(S, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (S.shape[0],))
    if S.shape[1] != L_x * L_y:
        raise ValueError(f"rows have length {S.shape[1]}, expected {L_x}*{L_y}")
    if np.any(tau <= 0):
        raise ValueError("radii must be positive")
    return S, tau


def rowwise_nuclear_norms(S, L_x, L_y):
    return np.array([nuclear_norm(row_to_image(r, L_x, L_y)) for r in np.asarray(S)])


def prox_rowwise_nuclear(S, tau, L_x, L_y):
    S, tau = _check_rows(S, tau, L_x, L_y)
    out = np.empty_like(S)
    for i, row in enumerate(S):
        out[i] = image_to_row(project_nuclear_ball(row_to_image(row, L_x, L_y), tau[i]))
    return out


def lo_rowwise_nuclear(grad, tau, L_x, L_y, warm=None, tol=1e-9, max_iter=300):
    grad, tau = _check_rows(grad, tau, L_x, L_y)
    out = np.empty_like(grad)
    for i, row in enumerate(grad):
        Y = lo_nuclear_ball(row_to_image(row, L_x, L_y), tau[i], warm=warm, key=i,
                            tol=tol, max_iter=max_iter)
        out[i] = image_to_row(Y)
    return out


def rowwise_nuclear_feasible(S, tau, L_x, L_y, tol=1e-9):
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (np.shape(S)[0],))
    return bool(np.all(rowwise_nuclear_norms(S, L_x, L_y) <= tau * (1 + tol) + tol))
