"""Linear-algebra kernels shared by the solver.

Matrices are plain ``float64`` numpy arrays. Images are linearized
column-major over the spatial grid: pixel ``(j, k)`` of an ``L_y x L_x``
image (row ``j``, column ``k``) is column ``j + k * L_y`` of the
spectral-spatial matrix.
"""

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from hibcd import _backend

# callers multiply power-method estimates by this before using them as
# step-size bounds; the estimate is a Rayleigh quotient, hence from below
SAFETY_FACTOR = 1.0 + 1e-6


class ConvergenceWarning(UserWarning):
    """An iterative eigensolver hit ``max_iter``."""


def power_iteration_lambda_max(op, dim, tol=1e-10, max_iter=1000, seed=0, v0=None):
    """Largest eigenvalue of a symmetric PSD operator by the power method.

    Parameters
    ----------
    op : callable or ndarray
        Either a ``(dim, dim)`` matrix or a function ``v -> A v``.
    dim : int
        Dimension of the space ``op`` acts on.
    tol : float
        Stop once the Rayleigh quotient changes by less than ``tol``
        relative to its value.
    v0 : ndarray, optional
        Start vector; a seeded Gaussian vector otherwise.

    Returns
    -------
    float
        The final Rayleigh quotient, which never exceeds the true
        ``lambda_max``. A :class:`ConvergenceWarning` is issued when
        ``max_iter`` is reached first.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not callable(op):
        mat = np.asarray(op, dtype=float)
        op = mat.__matmul__
    if v0 is None:
        v = np.random.default_rng(seed).standard_normal(dim)
    else:
        v = np.array(v0, dtype=float).ravel()
    nv = np.linalg.norm(v)
    if nv == 0:
        v = np.ones(dim)
        nv = np.sqrt(dim)
    v /= nv
    lam = 0.0
    for _ in range(max_iter):
        w = op(v)
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return max(lam_new, 0.0)
        lam = lam_new
    warnings.warn(f"power iteration did not converge in {max_iter} steps",
                  ConvergenceWarning, stacklevel=2)
    return max(lam, 0.0)


class SingularPair(NamedTuple):
    sigma: float
    u: np.ndarray
    v: np.ndarray
    converged: bool


def principal_singular_pair(M, warm=None, tol=1e-8, max_iter=500, seed=0):
    """Principal singular triplet by alternating power iterations.

    ``warm`` is a previous ``(u, v)`` pair (or ``SingularPair``); its right
    vector seeds the iteration. Convergence is declared when
    ``||M^T u - sigma v|| <= tol * sigma``. A zero matrix gives
    ``sigma = 0`` with arbitrary unit vectors and ``converged=False``.
    """
    M = np.ascontiguousarray(M, dtype=float)
    m, n = M.shape
    if warm is not None and warm[1] is not None and np.any(warm[1]):
        v0 = np.asarray(warm[1], dtype=float)
    else:
        v0 = np.random.default_rng(seed).standard_normal(n)
    sigma, u, v, _, ok = _backend.power_pair(M, v0, float(tol), int(max_iter))
    if sigma == 0:
        u = np.zeros(m)
        u[0] = 1.0
        v = np.zeros(n)
        v[0] = 1.0
        return SingularPair(0.0, u, v, False)
    return SingularPair(float(sigma), u, v, bool(ok))


def simplex_null_basis(N):
    """Orthonormal basis ``Psi`` (N x N-1) of the null space of ``1^T``.

    Taken from the Householder reflector that maps ``e_1`` to
    ``1 / sqrt(N)``, so the result is reproducible for a given ``N``.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    w = np.full(N, 1.0 / np.sqrt(N))
    w[0] -= 1.0
    H = np.eye(N) - 2.0 * np.outer(w, w) / (w @ w)
    return H[:, 1:].copy()


@dataclass(frozen=True, eq=False)
class SpatialDecimationOperator:
    """Blur-and-downsample operator ``G`` (L x L_H) in neighborhood form.

    Column ``i`` of ``G`` is nonzero only on ``indices[indptr[i]:indptr[i+1]]``
    with the matching ``weights``. The transposed structure (``t_*``) is
    kept alongside so the adjoint is also a gather.
    """

    L_x: int
    L_y: int
    factor: int
    kernel_width: int
    sigma: float
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    t_indptr: np.ndarray = field(repr=False)
    t_indices: np.ndarray = field(repr=False)
    t_weights: np.ndarray = field(repr=False)

    @property
    def L(self):
        return self.L_x * self.L_y

    @property
    def L_H(self):
        return len(self.indptr) - 1

    @property
    def nnz(self):
        return len(self.indices)

    def neighborhood(self, i):
        """Return ``(indices, weights)`` of output pixel ``i``."""
        sl = slice(self.indptr[i], self.indptr[i + 1])
        return self.indices[sl], self.weights[sl]

    def to_dense(self):
        G = np.zeros((self.L, self.L_H))
        cols = np.repeat(np.arange(self.L_H), np.diff(self.indptr))
        G[self.indices, cols] = self.weights
        return G

    @classmethod
    def from_neighborhoods(cls, indptr, indices, weights, L_x, L_y, factor=1,
                           kernel_width=1, sigma=0.0):
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int64)
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        L = L_x * L_y
        if indptr[0] != 0 or indptr[-1] != len(indices) or np.any(np.diff(indptr) < 0):
            raise ValueError("malformed neighborhood pointer array")
        if len(indices) != len(weights):
            raise ValueError("indices and weights differ in length")
        if len(indices) and (indices.min() < 0 or indices.max() >= L):
            raise ValueError("neighbor index out of range")
        cols = np.repeat(np.arange(len(indptr) - 1, dtype=np.int64), np.diff(indptr))
        order = np.lexsort((cols, indices))
        t_indptr = np.zeros(L + 1, dtype=np.int64)
        np.cumsum(np.bincount(indices, minlength=L), out=t_indptr[1:])
        return cls(L_x, L_y, factor, kernel_width, sigma, indptr, indices, weights,
                   t_indptr, np.ascontiguousarray(cols[order]),
                   np.ascontiguousarray(weights[order]))


def build_spatial_operator(L_x, L_y, kernel_width=11, sigma=1.7, factor=4):
    """Truncated Gaussian blur followed by decimation by ``factor``.

    Low-resolution pixel ``(p, q)`` is centred on high-resolution pixel
    ``(p * factor + (factor - 1) // 2, q * factor + (factor - 1) // 2)``.
    Kernel taps falling outside the image are dropped and the remaining
    weights renormalized to sum to one.
    """
    if factor < 1 or L_x % factor or L_y % factor:
        raise ValueError(f"image dims {L_y}x{L_x} not divisible by factor {factor}")
    if kernel_width < 1 or kernel_width % 2 == 0:
        raise ValueError("kernel_width must be a positive odd integer")
    if kernel_width > 1 and not sigma > 0:
        raise ValueError("sigma must be positive")
    r = kernel_width // 2
    off = np.arange(-r, r + 1)
    if kernel_width == 1:
        g1 = np.ones(1)
    else:
        g1 = np.exp(-0.5 * (off / sigma) ** 2)
    ker = np.outer(g1, g1)  # [dy, dx]
    dy, dx = np.meshgrid(off, off, indexing="ij")
    dy, dx, ker = dy.ravel(), dx.ravel(), ker.ravel()

    hy, hx = L_y // factor, L_x // factor
    c0 = (factor - 1) // 2
    indptr = [0]
    indices = []
    weights = []
    for q in range(hx):
        for p in range(hy):
            # output index p + q * hy, column-major like the input grid
            jj = p * factor + c0 + dy
            kk = q * factor + c0 + dx
            ok = (jj >= 0) & (jj < L_y) & (kk >= 0) & (kk < L_x)
            w = ker[ok]
            indices.append(jj[ok] + kk[ok] * L_y)
            weights.append(w / w.sum())
            indptr.append(indptr[-1] + int(ok.sum()))
    return SpatialDecimationOperator.from_neighborhoods(
        np.array(indptr), np.concatenate(indices), np.concatenate(weights),
        L_x, L_y, factor, kernel_width, float(sigma))


def _as_rows(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        return X[None, :]
    return np.ascontiguousarray(X)


def apply_G(X, G):
    """Compute ``X G`` (M x L_H) from neighborhoods, without a dense ``G``."""
    X2 = _as_rows(X)
    if X2.shape[1] != G.L:
        raise ValueError(f"expected {G.L} columns, got {X2.shape[1]}")
    Y = _backend.csr_gather(X2, G.indptr, G.indices, G.weights)
    return Y[0] if np.ndim(X) == 1 else Y


def apply_Gt(Y, G):
    """Compute ``Y G^T`` (M x L), the adjoint of :func:`apply_G`."""
    Y2 = _as_rows(Y)
    if Y2.shape[1] != G.L_H:
        raise ValueError(f"expected {G.L_H} columns, got {Y2.shape[1]}")
    X = _backend.csr_gather(Y2, G.t_indptr, G.t_indices, G.t_weights)
    return X[0] if np.ndim(Y) == 1 else X


def lambda_max_GtG(G, dense=False, tol=1e-10, max_iter=5000, seed=0):
    """``lambda_max(G^T G)``; densely via ``eigvalsh`` when ``dense``."""
    if dense:
        Gd = G.to_dense()
        return float(np.linalg.eigvalsh(Gd.T @ Gd)[-1])

    def op(v):
        return apply_G(apply_Gt(v, G), G)

    # a positive start vector overlaps the Perron vector of the nonnegative G^T G
    v0 = np.ones(G.L_H) + 0.01 * np.random.default_rng(seed).standard_normal(G.L_H)
    return power_iteration_lambda_max(op, G.L_H, tol=tol, max_iter=max_iter, v0=v0)


def build_band_average_F(M, M_M):
    """Uniform band-averaging response: ``M_M`` contiguous groups of bands."""
    if M_M < 1 or M_M > M:
        raise ValueError(f"need 1 <= M_M <= M, got M_M={M_M}, M={M}")
    F = np.zeros((M_M, M))
    edges = np.linspace(0, M, M_M + 1).round().astype(int)
    for r in range(M_M):
        F[r, edges[r]:edges[r + 1]] = 1.0 / (edges[r + 1] - edges[r])
    return F


def lambda_max_sym(A):
    """Largest eigenvalue of a small symmetric matrix (dense)."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[-1])

