"""Numpy implementations of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np

# bound on the temporary (rows x nnz) gather buffer
_CHUNK_ENTRIES = 1 << 22


def csr_gather(X, indptr, indices, weights):
    X = np.ascontiguousarray(X, dtype=np.float64)
    rows = X.shape[0]
    n_out = len(indptr) - 1
    out = np.zeros((rows, n_out))
    counts = np.diff(indptr)
    nonempty = np.flatnonzero(counts)
    if rows == 0 or nonempty.size == 0:
        return out
    starts = indptr[nonempty]
    step = max(1, _CHUNK_ENTRIES // max(1, len(indices)))
    for lo in range(0, rows, step):
        prod = X[lo:lo + step][:, indices] * weights
        out[lo:lo + step, nonempty] = np.add.reduceat(prod, starts, axis=1)
    return out


def project_simplex_columns(V):
    V = np.asarray(V, dtype=np.float64)
    n = V.shape[0]
    U = -np.sort(-V, axis=0)
    css = np.cumsum(U, axis=0) - 1.0
    ind = np.arange(1, n + 1, dtype=np.float64)[:, None]
    cond = U - css / ind > 0
    # cond holds on a prefix of the sorted column; its length is rho + 1
    rho = n - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[rho, np.arange(V.shape[1])] / (rho + 1)
    return np.maximum(V - theta, 0.0)


def power_pair(M, v0, tol, max_iter):
    """numpy twin of the compiled ``power_pair``."""
    M = np.ascontiguousarray(M, dtype=float)
    v = np.array(v0, dtype=float)
    nrm = np.sqrt(v @ v)
    u = np.zeros(M.shape[0])
    sigma = 0.0
    it = 0
    if nrm == 0:
        return 0.0, u, v, 0, False
    v /= nrm
    Mt = M.T
    while it < max_iter:
        it += 1
        w = M @ v
        sigma = np.sqrt(w @ w)
        if sigma == 0:
            break
        u = w / sigma
        z = Mt @ u
        s2 = np.sqrt(z @ z)
        if s2 == 0:
            sigma = 0.0
            break
        r = z - sigma * v
        resid = np.sqrt(r @ r)
        v = z / s2
        sigma = s2
        if resid <= tol * sigma:
            return sigma, u, v, it, True
    return sigma, u, v, it, False
