"""Recovery-quality metrics and the bicubic-upsampling baseline."""

import warnings
from dataclasses import dataclass

import numpy as np


def sam(X, X_hat):
    """Spectral angle (radians) between matching columns.

    Returns ``(angles, mean_angle)``. Pixels where either spectrum is zero
    get angle 0 and trigger a ``RuntimeWarning``.
    """
    X = np.asarray(X, dtype=float)
    X_hat = np.asarray(X_hat, dtype=float)
    if X.shape != X_hat.shape:
        raise ValueError("shape mismatch")
    den = np.linalg.norm(X, axis=0) * np.linalg.norm(X_hat, axis=0)
    zero = den == 0
    if np.any(zero):
        warnings.warn(f"{int(zero.sum())} zero spectra; their angle is set to 0",
                      RuntimeWarning, stacklevel=2)
    cos = np.einsum("ij,ij->j", X, X_hat) / np.where(zero, 1.0, den)
    ang = np.arccos(np.clip(cos, -1.0, 1.0))
    ang[zero] = 0.0
    return ang, float(ang.mean())


def psnr_per_band(X, X_hat):
    """Per-band PSNR in dB; the peak is the band's ground-truth maximum.

    Bands reconstructed exactly get ``inf``.
    """
    X = np.asarray(X, dtype=float)
    X_hat = np.asarray(X_hat, dtype=float)
    if X.shape != X_hat.shape:
        raise ValueError("shape mismatch")
    mse = np.mean((X - X_hat) ** 2, axis=1)
    peak = X.max(axis=1)
    with np.errstate(divide="ignore"):
        return np.where(mse == 0, np.inf, 10.0 * np.log10(peak ** 2 / mse))


def ergas(X, X_hat, M_M, M=None):
    """ERGAS with resolution ratio ``S = sqrt(M_M / M)``.

    The per-band error is normalized by the squared mean of the
    *estimated* band. Bands whose estimate has zero mean are left out.
    """
    X = np.asarray(X, dtype=float)
    X_hat = np.asarray(X_hat, dtype=float)
    if X.shape != X_hat.shape:
        raise ValueError("shape mismatch")
    M = X.shape[0] if M is None else M
    ratio = np.sqrt(M_M / M)
    mse = np.mean((X - X_hat) ** 2, axis=1)
    mu = X_hat.mean(axis=1)
    keep = mu != 0
    if not np.all(keep):
        warnings.warn(f"{int((~keep).sum())} bands with zero mean skipped",
                      RuntimeWarning, stacklevel=2)
    if not np.any(keep):
        return float("nan")
    return float(100.0 / ratio * np.sqrt(np.mean(mse[keep] / mu[keep] ** 2)))


@dataclass
class EvaluationReport:
    sam_mean: float
    sam_mean_deg: float
    psnr: np.ndarray
    ergas: float
    sam_map: np.ndarray

    @property
    def psnr_mean(self):
        return float(np.mean(self.psnr))

    def as_dict(self):
        return {
            "sam_mean_rad": self.sam_mean,
            "sam_mean_deg": self.sam_mean_deg,
            "psnr_db": [float(v) for v in self.psnr],
            "psnr_mean_db": self.psnr_mean,
            "ergas": self.ergas,
        }


def evaluate(X, X_hat, M_M):
    ang, mean = sam(X, X_hat)
    return EvaluationReport(mean, float(np.degrees(mean)), psnr_per_band(X, X_hat),
                            ergas(X, X_hat, M_M, X.shape[0]), ang)


def _catmull_rom(t):
    t = np.abs(t)
    return np.where(t <= 1, (1.5 * t - 2.5) * t * t + 1,
                    np.where(t < 2, ((-0.5 * t + 2.5) * t - 4) * t + 2, 0.0))


def _upsample_matrix(n_lo, factor):
    """``(n_lo * factor) x n_lo`` Catmull-Rom interpolation with edge clamping.

    Low-resolution sample ``p`` sits at high-resolution coordinate
    ``p * factor + (factor - 1) // 2``, matching the decimation operator.
    """
    n_hi = n_lo * factor
    pos = (np.arange(n_hi) - (factor - 1) // 2) / factor
    base = np.floor(pos).astype(int)
    W = np.zeros((n_hi, n_lo))
    rows = np.arange(n_hi)
    for off in (-1, 0, 1, 2):
        idx = base + off
        w = _catmull_rom(pos - idx)
        np.add.at(W, (rows, np.clip(idx, 0, n_lo - 1)), w)
    return W


def naive_interpolation(Y_H, L_x, L_y, factor):
    """Bicubic (Catmull-Rom) upsampling of every band of ``Y_H``.

    Returns the ``M x (L_x * L_y)`` matrix in the column-major pixel order.
    """
    Y_H = np.asarray(Y_H, dtype=float)
    if L_x % factor or L_y % factor:
        raise ValueError("image dims not divisible by factor")
    hy, hx = L_y // factor, L_x // factor
    if Y_H.shape[1] != hy * hx:
        raise ValueError(f"Y_H has {Y_H.shape[1]} pixels, expected {hy * hx}")
    if factor == 1:
        return Y_H.copy()
    M = Y_H.shape[0]
    cube = Y_H.reshape(M, hx, hy).transpose(0, 2, 1)  # [band, row, col]
    Wy = _upsample_matrix(hy, factor)
    Wx = _upsample_matrix(hx, factor)
    up = np.einsum("yp,mpq,xq->mxy", Wy, cube, Wx)
    return up.reshape(M, L_x * L_y)
