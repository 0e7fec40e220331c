"""Synthetic scenes under the linear mixing model.

Ground truth ``X* = A* S*`` is decimated spectrally by band averaging
(``F``) and spatially by a truncated Gaussian blur plus downsampling
(``G``), then corrupted by white Gaussian noise at a target SNR.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import uniform_filter1d

from hibcd.linalg import apply_G, build_band_average_F, build_spatial_operator


@dataclass
class GroundTruth:
    A: np.ndarray
    S: np.ndarray

    @property
    def X(self):
        return self.A @ self.S


@dataclass
class ScenePair:
    Y_M: np.ndarray
    Y_H: np.ndarray
    F: np.ndarray
    G: object
    snr_db: tuple
    seed: int
    N: int
    truth: GroundTruth = None
    realized_snr_db: tuple = (float("nan"), float("nan"))

    @property
    def dims(self):
        M_M, M = self.F.shape
        return {"M": M, "M_M": M_M, "L_x": self.G.L_x, "L_y": self.G.L_y,
                "L": self.G.L, "L_H": self.G.L_H, "N": self.N}


def _smooth_fields(rng, n, L_x, L_y, window):
    fields = rng.standard_normal((n, L_y, L_x))
    if window > 1:
        fields = uniform_filter1d(fields, window, axis=1, mode="wrap")
        fields = uniform_filter1d(fields, window, axis=2, mode="wrap")
    fields -= fields.mean(axis=(1, 2), keepdims=True)
    sd = fields.std(axis=(1, 2), keepdims=True)
    # a window spanning the grid leaves a constant field
    fields /= np.where(sd > 1e-12, sd, 1.0)
    return fields


def generate_ground_truth(M, N, L_x, L_y, seed=0, smoothness=8, contrast=2.5):
    """Random smooth spectra and spatially correlated abundance maps.

    Each spectrum is a cumulative sum of positive, slowly varying
    increments scaled into ``[0, 1]``. Abundances are the softmax, across
    materials, of ``N`` standardized white-noise fields smoothed by a
    separable moving average of width ``smoothness`` (0 or 1 means no
    smoothing) and multiplied by ``contrast``.
    """
    L = L_x * L_y
    if not 1 <= N < min(M, L):
        raise ValueError(f"need 1 <= N < min(M, L); got N={N}, M={M}, L={L}")
    if smoothness < 0:
        raise ValueError("smoothness must be nonnegative")
    rng = np.random.default_rng(seed)

    log_rate = rng.standard_normal((M, N))
    log_rate = uniform_filter1d(log_rate, max(1, M // 8), axis=0, mode="nearest")
    inc = np.exp(3.0 * log_rate)
    A = np.cumsum(inc, axis=0)
    A /= A[-1]
    lo = rng.uniform(0.0, 0.3, size=N)
    hi = rng.uniform(0.7, 1.0, size=N)
    A = lo + (hi - lo) * A

    fields = contrast * _smooth_fields(rng, N, L_x, L_y, smoothness)
    fields -= fields.max(axis=0, keepdims=True)
    E = np.exp(fields)
    S_img = E / E.sum(axis=0, keepdims=True)
    # [material, row, col] -> column-major pixel order
    S = S_img.transpose(0, 2, 1).reshape(N, L)
    return GroundTruth(A, S)


def _noise(rng, signal, snr_db):
    if snr_db is None or np.isinf(snr_db):
        return np.zeros_like(signal)
    var = np.vdot(signal, signal) / (signal.size * 10.0 ** (snr_db / 10.0))
    return np.sqrt(var) * rng.standard_normal(signal.shape)


def realized_snr(signal, noise):
    nn = np.vdot(noise, noise)
    if nn == 0:
        return float("inf")
    return float(10.0 * np.log10(np.vdot(signal, signal) / nn))


def synthesize_observations(gt, F, G, snr_M_db=30.0, snr_H_db=None, seed=0):
    """Noisy MS and HS observations of ``gt``.

    ``snr_H_db`` defaults to ``snr_M_db``. ``None`` or ``inf`` means no
    noise for that sensor.
    """
    if snr_H_db is None:
        snr_H_db = snr_M_db
    X = gt.X
    if F.shape[1] != X.shape[0]:
        raise ValueError("F does not match the number of bands")
    rng = np.random.default_rng(seed)
    ym = F @ X
    yh = apply_G(X, G)
    vm = _noise(rng, ym, snr_M_db)
    vh = _noise(rng, yh, snr_H_db)
    return ScenePair(ym + vm, yh + vh, F, G, (snr_M_db, snr_H_db), seed, gt.A.shape[1], gt,
                     (realized_snr(ym, vm), realized_snr(yh, vh)))


@dataclass
class ScenePreset:
    M: int
    M_M: int
    L_x: int
    L_y: int
    N: int
    factor: int
    kernel_width: int = 11
    sigma: float = 1.7
    snr_db: float = 30.0
    smoothness: int = 8
    tau: float = None


PRESETS = {
    "chikusei-like": ScenePreset(M=128, M_M=4, L_x=1080, L_y=1080, N=20, factor=8,
                                 snr_db=20.0, smoothness=32, tau=300.0),
    "cuprite-like": ScenePreset(M=224, M_M=6, L_x=120, L_y=120, N=10, factor=4,
                                snr_db=30.0, smoothness=8, tau=10.0),
    "desk": ScenePreset(M=16, M_M=4, L_x=32, L_y=32, N=4, factor=4, snr_db=30.0,
                        smoothness=6, tau=30.0),
    "desk-recovery": ScenePreset(M=32, M_M=4, L_x=64, L_y=64, N=5, factor=4,
                                 snr_db=40.0, smoothness=8, tau=20.0),
}


def resolve_preset(preset="cuprite-like", **overrides):
    """A :class:`ScenePreset` by name (or as given), with fields overridden."""
    if isinstance(preset, ScenePreset):
        base = preset
    elif isinstance(preset, dict):
        base = ScenePreset(**preset)
    else:
        try:
            base = PRESETS[preset]
        except KeyError:
            raise ValueError(f"unknown preset {preset!r}; known: {sorted(PRESETS)}") from None
    unknown = set(overrides) - set(base.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown preset fields {sorted(unknown)}")
    return replace(base, **{k: v for k, v in overrides.items() if v is not None})


def wald_scene(preset="cuprite-like", seed=0, **overrides):
    """Build a ground truth and degrade it into an MS/HS pair.

    ``preset`` is a name from :data:`PRESETS`, a :class:`ScenePreset`, or a
    dict of its fields; keyword overrides replace individual fields.
    """
    p = resolve_preset(preset, **overrides)
    gt = generate_ground_truth(p.M, p.N, p.L_x, p.L_y, seed=seed, smoothness=p.smoothness)
    F = build_band_average_F(p.M, p.M_M)
    G = build_spatial_operator(p.L_x, p.L_y, p.kernel_width, p.sigma, p.factor)
    # separate stream for the noise
    return synthesize_observations(gt, F, G, p.snr_db, p.snr_db, seed=seed + 7919)
