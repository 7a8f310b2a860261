"""Physics-based low-light simulation for 4D light fields.

The sensor model is a global illumination scale ``alpha`` plus zero-mean
Gaussian noise whose per-pixel variance has a signal-independent part
(read noise, configured on the 0-255 intensity scale) and an optional
signal-dependent part (the heteroskedastic normal approximation of shot
noise). The system gain is folded into ``alpha``, which stands in for the
full illumination map during simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from math import ceil
from typing import Optional, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import ShapeError, ValueRangeError
from .lightfield import LightField4D, make_lightfield

RngLike = Union[np.random.Generator, int, None]


@dataclass
class NoiseParams:
    """Low-light simulation settings.

    ``fixed`` mode always uses ``alpha``; ``dynamic`` mode draws one alpha
    per light field, uniformly from ``alpha_range``. ``gaussian_sigma_255``
    is the read-noise standard deviation on the 0-255 scale.
    ``poisson_gain`` scales the signal-dependent variance term; 0 disables
    it (the protocol used for the fixed/dynamic synthetic datasets).
    """

    alpha_mode: str = "fixed"
    alpha: float = 0.2
    alpha_range: Tuple[float, float] = (0.1, 0.3)
    gaussian_sigma_255: float = 20.0
    poisson_gain: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha_mode not in ("fixed", "dynamic"):
            raise ValueError(f"alpha_mode must be 'fixed' or 'dynamic', got {self.alpha_mode!r}")
        if self.alpha_mode == "fixed" and not self.alpha > 0:
            raise ValueRangeError(f"alpha must be positive, got {self.alpha}")
        lo, hi = self.alpha_range
        if self.alpha_mode == "dynamic" and not (0 < lo <= hi):
            raise ValueRangeError(f"alpha_range must satisfy 0 < lo <= hi, got {self.alpha_range}")
        if self.gaussian_sigma_255 < 0 or self.poisson_gain < 0:
            raise ValueRangeError("noise magnitudes must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha_range"] = list(self.alpha_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseParams":
        d = dict(d)
        if "alpha_range" in d:
            d["alpha_range"] = tuple(d["alpha_range"])
        return cls(**d)


def _as_rng(rng: RngLike, default_seed: int = 0) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(default_seed if rng is None else rng)


def sample_alpha(params: NoiseParams, rng: RngLike = None) -> float:
    """Draw the illumination scale for one capture."""
    rng = _as_rng(rng, params.seed)
    if params.alpha_mode == "fixed":
        return float(params.alpha)
    lo, hi = params.alpha_range
    return float(rng.uniform(lo, hi))


def simulate_lowlight(
    lf_n: LightField4D,
    params: NoiseParams,
    rng: RngLike = None,
    clip: bool = True,
) -> Tuple[LightField4D, float]:
    """Darken a normal-light field and add heteroskedastic Gaussian noise.

    Computes ``alpha * lf + eta`` with per-pixel noise variance
    ``(gaussian_sigma_255 / 255)^2 + poisson_gain * alpha * lf``. One alpha
    is drawn per light field. With ``clip`` the result is saturated to
    [0, 1] (the default; disable it to measure raw noise statistics).
    Deterministic for a fixed rng/seed. Returns the simulated field and
    the alpha actually used.
    """
    x = lf_n.data
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueRangeError("input light field must be image-valued in [0,1]")
    rng = _as_rng(rng, params.seed)
    alpha = sample_alpha(params, rng)
    sigma = params.gaussian_sigma_255 / 255.0
    variance = sigma**2 + params.poisson_gain * alpha * x
    out = alpha * x
    if variance.max() > 0:
        out = out + rng.standard_normal(size=x.shape) * np.sqrt(variance)
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return make_lightfield(out, validate_range=False, meta=lf_n.meta), alpha


def make_synthetic_scene(base_image, disparity: float, U: int, V: int) -> LightField4D:
    """Build a Lambertian light field by translating one base image.

    View (u, v) is the base image shifted by ``disparity * (u - u_c)``
    spatial columns and ``disparity * (v - v_c)`` rows (bilinear sampling,
    center view u_c = U//2, v_c = V//2), so horizontal EPIs pair u with t
    and vertical EPIs pair v with s. The output is the central window that
    stays in bounds for every view; raises ShapeError when the shifts eat
    the whole image.
    """
    base = np.asarray(base_image, dtype=np.float64)
    if base.ndim != 3:
        raise ShapeError(f"base image needs 3 axes [s,t,c], got {base.ndim}")
    if U < 1 or V < 1:
        raise ShapeError("U and V must be >= 1")
    H, W, C = base.shape
    uc, vc = U // 2, V // 2
    margin_t = ceil(abs(disparity) * max(uc, U - 1 - uc))
    margin_s = ceil(abs(disparity) * max(vc, V - 1 - vc))
    Hs, Ws = H - 2 * margin_s, W - 2 * margin_t
    if Hs < 1 or Ws < 1:
        raise ShapeError(
            f"disparity {disparity} shifts exceed the {H}x{W} base image"
        )
    rows = margin_s + np.arange(Hs, dtype=np.float64)
    cols = margin_t + np.arange(Ws, dtype=np.float64)
    out = np.empty((U, V, Hs, Ws, C), dtype=np.float64)
    for u in range(U):
        for v in range(V):
            r = rows - disparity * (v - vc)
            c = cols - disparity * (u - uc)
            grid = np.meshgrid(r, c, indexing="ij")
            for ch in range(C):
                out[u, v, :, :, ch] = ndimage.map_coordinates(
                    base[:, :, ch], grid, order=1, mode="nearest"
                )
    return make_lightfield(np.clip(out, 0.0, 1.0))


def random_base_image(
    rng: RngLike,
    height: int,
    width: int,
    channels: int = 3,
    lo: float = 0.1,
    hi: float = 0.9,
) -> np.ndarray:
    """Smooth random test texture in [lo, hi], shape [height, width, channels].

    Sum of a coarse and a finer bilinearly upsampled uniform grid; enough
    structure for EPI/correlation and spectrum tests without any dataset.
    """
    rng = _as_rng(rng)
    img = np.zeros((height, width, channels), dtype=np.float64)
    for cell in (max(height, width) // 6 + 1, max(height, width) // 16 + 1):
        gh, gw = height // cell + 2, width // cell + 2
        coarse = rng.uniform(0.0, 1.0, size=(gh, gw, channels))
        ri = np.linspace(0, gh - 1.001, height)
        ci = np.linspace(0, gw - 1.001, width)
        grid = np.meshgrid(ri, ci, indexing="ij")
        for ch in range(channels):
            img[:, :, ch] += ndimage.map_coordinates(coarse[:, :, ch], grid, order=1)
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return lo + (hi - lo) * img
