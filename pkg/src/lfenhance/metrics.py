"""Evaluation: PSNR/SSIM over light fields and singular-value analysis.

PSNR uses peak 1.0 (the internal [0,1] domain) pooled over all views,
pixels and channels, capped at 100 dB so identical pairs stay finite.
The spectrum analysis matricizes the grayscale center view; tail singular
values of noisy captures sit well above those of clean ones, which is the
signature the compensation term removes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .errors import ShapeError
from .lightfield import LightField4D, make_lightfield, matricize_center_sai
from .train import ssim

PSNR_CAP_DB = 100.0


@dataclass
class MetricsRecord:
    """Per-light-field evaluation row."""

    name: str
    psnr_db: float
    ssim: float
    per_stage_psnr: Optional[List[float]] = None
    spectra: Optional[dict] = None
    extra: dict = field(default_factory=dict)


def _as_array(x) -> np.ndarray:
    if isinstance(x, LightField4D):
        return x.data
    return np.asarray(x, dtype=np.float64)


def psnr(a, b) -> float:
    """10*log10(1/MSE) over everything, capped at 100 dB."""
    xa, xb = _as_array(a), _as_array(b)
    if xa.shape != xb.shape:
        raise ShapeError(f"shape mismatch: {xa.shape} vs {xb.shape}")
    mse = float(np.mean((xa - xb) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def ssim_lf(a, b) -> float:
    """SSIM between two light fields (mean over views and channels)."""
    return float(ssim(_as_array(a), _as_array(b)))


def svd_spectrum(m: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Top-k singular values of a matrix, nonincreasing, plus their logs.

    Logs are floored at the smallest positive double so exact zeros from
    rank-deficient matrices stay finite.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-axis matrix, got {m.ndim} axes")
    if k > min(m.shape):
        raise ValueError(f"k={k} exceeds min(rows, cols)={min(m.shape)}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    s = np.linalg.svd(m, compute_uv=False)[:k]
    return s, np.log(np.maximum(s, np.finfo(np.float64).tiny))


def center_sai_spectrum(lf: LightField4D, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Spectrum of the grayscale center view matrix."""
    return svd_spectrum(matricize_center_sai(lf), k)


def evaluate_dataset(
    model,
    dataset: Sequence[Tuple[LightField4D, LightField4D]],
    names: Optional[Sequence[str]] = None,
    per_stage: bool = False,
    spectra_k: Optional[int] = None,
    perceptual_metric: Optional[Callable] = None,
) -> List[MetricsRecord]:
    """Enhance every pair and score it.

    Optionally records per-stage PSNR (the stage-progress diagnostic) and
    the top-``spectra_k`` log singular values of the dark input, the
    compensated input (dark minus the last stage's compensation) and the
    ground truth. A pluggable perceptual metric adds an ``extra`` column.
    """
    from .unfold import enhance

    if not dataset:
        raise ValueError("dataset is empty")
    records = []
    for i, (lf_d, lf_gt) in enumerate(dataset):
        name = names[i] if names else f"lf{i}"
        out, stages = enhance(lf_d, model, return_stages=True)
        rec = MetricsRecord(
            name=name,
            psnr_db=psnr(out, lf_gt),
            ssim=ssim_lf(out, lf_gt),
        )
        if per_stage:
            rec.per_stage_psnr = [
                psnr(np.clip(info["lf_n"], 0.0, 1.0), lf_gt.data) for info in stages
            ]
        if spectra_k:
            delta_last = stages[-1]["delta"]
            compensated = make_lightfield(lf_d.data - delta_last, validate_range=False)
            rec.spectra = {
                "input": center_sai_spectrum(lf_d, spectra_k)[1],
                "compensated": center_sai_spectrum(compensated, spectra_k)[1],
                "gt": center_sai_spectrum(lf_gt, spectra_k)[1],
            }
        if perceptual_metric is not None:
            rec.extra["perceptual"] = float(perceptual_metric(out.data, lf_gt.data))
        records.append(rec)
    return records
