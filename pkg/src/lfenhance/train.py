"""Training: composite loss, SSIM, cropping, schedule, optimizer loop.

The loss is lambda1 * L1 + lambda2 * (1 - SSIM) + lambda3 * perceptual,
with the perceptual term pluggable (a callable scoring two light fields)
and disabled by default since it needs external pretrained features. All
reductions are means so the weights balance independently of crop size.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DivergenceError, ShapeError
from .lightfield import LightField4D

DatasetPair = Tuple[LightField4D, LightField4D]


@dataclass
class LossWeights:
    """Weights of the L1 / SSIM / perceptual terms (defaults 1, 1, 0.1)."""

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 0.1

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


@dataclass
class TrainConfig:
    """Optimization settings.

    Defaults follow standard practice for this kind of restoration
    training: 32x32 spatial crops, batch 2, Adam(0.9, 0.999), initial
    learning rate 1e-4 halved every 1000 epochs.
    """

    crop_size: int = 32
    batch_size: int = 2
    lr0: float = 1e-4
    halve_every: int = 1000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epochs: int = 200
    seed: int = 0
    val_every: int = 10

    def __post_init__(self):
        if self.crop_size < 8:
            raise ValueError(f"crop_size must be >= 8, got {self.crop_size}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr0 > 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if self.halve_every < 1 or self.epochs < 0:
            raise ValueError("halve_every must be >= 1 and epochs >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def _gaussian_window(size: int, sigma: float, dtype, device) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2.0 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def _as_view_batch(x) -> torch.Tensor:
    # [s,t,c], [u,v,s,t,c] or batched [b,u,v,s,t,c] -> [views, c, s, t]
    if isinstance(x, np.ndarray):
        x = torch.from_numpy(x)
    if x.ndim == 3:
        return x.permute(2, 0, 1).unsqueeze(0)
    if x.ndim in (5, 6):
        s, t, c = x.shape[-3:]
        return x.reshape(-1, s, t, c).permute(0, 3, 1, 2)
    raise ShapeError(f"expected an image [s,t,c] or light field [u,v,s,t,c], got {x.ndim} axes")


def ssim(
    a,
    b,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 1.0,
) -> torch.Tensor:
    """Mean local SSIM with a Gaussian window (defaults 11, sigma 1.5).

    Accepts images [s,t,c] or light fields [u,v,s,t,c] (averaged over
    views and channels). Local statistics use valid windows only. For
    inputs smaller than the window the window shrinks to the largest odd
    size that fits, so the loss stays defined on tiny crops.
    """
    if tuple(np.shape(a)) != tuple(np.shape(b)):
        raise ShapeError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")
    xa = _as_view_batch(a)
    xb = _as_view_batch(b)
    h, w = xa.shape[-2:]
    win = min(window, h, w)
    if win % 2 == 0:
        win -= 1
    if win < 3:
        raise ShapeError(f"spatial size {h}x{w} too small for SSIM")
    c = xa.shape[1]
    kernel = _gaussian_window(win, sigma, xa.dtype, xa.device)
    kernel = kernel.expand(c, 1, win, win)

    def lstat(x):
        return F.conv2d(x, kernel, groups=c)

    mu_a = lstat(xa)
    mu_b = lstat(xb)
    var_a = lstat(xa * xa) - mu_a * mu_a
    var_b = lstat(xb * xb) - mu_b * mu_b
    cov = lstat(xa * xb) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return (num / den).mean()


def composite_loss_terms(
    lf_out: torch.Tensor,
    lf_gt: torch.Tensor,
    w: LossWeights,
    perceptual: Optional[Callable] = None,
) -> dict:
    """Individual loss terms plus their weighted total."""
    if tuple(lf_out.shape) != tuple(lf_gt.shape):
        raise ShapeError(f"shape mismatch: {tuple(lf_out.shape)} vs {tuple(lf_gt.shape)}")
    terms = {
        "l1": (lf_out - lf_gt).abs().mean(),
        "ssim": ssim(lf_out, lf_gt),
    }
    total = w.lambda1 * terms["l1"] + w.lambda2 * (1.0 - terms["ssim"])
    if perceptual is not None and w.lambda3 > 0:
        terms["perceptual"] = perceptual(lf_out, lf_gt)
        total = total + w.lambda3 * terms["perceptual"]
    terms["total"] = total
    return terms


def composite_loss(
    lf_out: torch.Tensor,
    lf_gt: torch.Tensor,
    w: LossWeights,
    perceptual: Optional[Callable] = None,
) -> torch.Tensor:
    """Weighted L1 + (1 - SSIM) + optional perceptual loss; zero iff equal
    (with the perceptual term absent or zero on identical inputs)."""
    return composite_loss_terms(lf_out, lf_gt, w, perceptual)["total"]


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Step schedule: lr0 halved every ``halve_every`` epochs."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * 0.5 ** (epoch // cfg.halve_every)


def sample_crops(
    dataset: Sequence[DatasetPair],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Draw ``batch_size`` aligned crop pairs.

    Each pair comes from one random light field; the same spatial window
    is applied to the dark input and the ground truth across all views.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    cs = cfg.crop_size
    batch = []
    for _ in range(cfg.batch_size):
        lf_d, lf_gt = dataset[int(rng.integers(len(dataset)))]
        S, T = lf_d.spatial
        if cs > S or cs > T:
            raise ShapeError(f"crop {cs} exceeds spatial size {S}x{T}")
        s0 = int(rng.integers(S - cs + 1))
        t0 = int(rng.integers(T - cs + 1))
        batch.append(
            (
                lf_d.data[:, :, s0 : s0 + cs, t0 : t0 + cs, :],
                lf_gt.data[:, :, s0 : s0 + cs, t0 : t0 + cs, :],
            )
        )
    return batch


def _validate(model, dataset):
    from .metrics import psnr

    model.eval()
    psnrs, ssims = [], []
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        for lf_d, lf_gt in dataset:
            out = model(torch.from_numpy(lf_d.data).to(dtype))
            gt = torch.from_numpy(lf_gt.data).to(dtype)
            psnrs.append(psnr(out.numpy(), lf_gt.data))
            ssims.append(float(ssim(out, gt)))
    model.train()
    return float(np.mean(psnrs)), float(np.mean(ssims))


def train(
    model,
    dataset: Sequence[DatasetPair],
    cfg: TrainConfig,
    w: Optional[LossWeights] = None,
    val_dataset: Optional[Sequence[DatasetPair]] = None,
    perceptual: Optional[Callable] = None,
    verbose: bool = False,
):
    """Optimize the model with Adam on randomly cropped pairs.

    One epoch is len(dataset)//batch_size steps (at least one). Each
    record logs the epoch, learning rate, mean loss terms and, every
    ``val_every`` epochs, validation PSNR/SSIM on full light fields.
    Raises DivergenceError as soon as the loss goes non-finite.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    w = w or LossWeights()
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    dtype = next(model.parameters()).dtype
    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.lr0, betas=(cfg.adam_beta1, cfg.adam_beta2)
    )
    steps_per_epoch = max(1, len(dataset) // cfg.batch_size)
    log = []
    model.train()
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr
        sums = {}
        for _ in range(steps_per_epoch):
            batch = sample_crops(dataset, cfg, rng)
            batch_d = torch.from_numpy(np.stack([d for d, _ in batch])).to(dtype)
            batch_gt = torch.from_numpy(np.stack([g for _, g in batch])).to(dtype)
            optimizer.zero_grad()
            out = model(batch_d)
            terms = composite_loss_terms(out, batch_gt, w, perceptual)
            loss = terms["total"]
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            for name, t in terms.items():
                sums[name] = sums.get(name, 0.0) + float(t)
        record = {"epoch": epoch, "lr": lr}
        record.update({f"loss_{k}": v / steps_per_epoch for k, v in sums.items()})
        if val_dataset and (epoch % cfg.val_every == 0 or epoch == cfg.epochs - 1):
            record["val_psnr"], record["val_ssim"] = _validate(model, val_dataset)
        log.append(record)
        if verbose:
            msg = f"epoch {epoch:4d} lr {lr:.2e} loss {record['loss_total']:.5f}"
            if "val_psnr" in record:
                msg += f" val_psnr {record['val_psnr']:.2f}"
            print(msg)
    return model, log


def grad_check(
    fn: Callable[..., torch.Tensor],
    inputs: Sequence[torch.Tensor],
    parameters: Sequence[torch.Tensor],
    step: float = 1e-5,
    rel_floor: float = 1e-6,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error of analytic vs central-finite-difference grads.

    ``fn(*inputs)`` must return a scalar; gradients are taken w.r.t.
    ``parameters``, which must be float64 (finite differences at step 1e-5
    are meaningless in single precision). The relative error of each
    entry is |a - n| / max(|a|, |n|, rel_floor). ``max_entries`` limits
    how many entries per parameter are probed (all by default).
    """
    parameters = list(parameters)
    for p in parameters:
        if p.dtype != torch.float64:
            raise ValueError("grad_check requires float64 parameters")
    loss = fn(*inputs)
    # parameters the loss provably does not depend on get zero gradients
    # (e.g. the last stage's proximal module, whose output nothing consumes)
    grads = torch.autograd.grad(loss, parameters, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(parameters, grads)]
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(parameters, grads):
            flat = p.reshape(-1)
            gflat = g.reshape(-1)
            idx = np.arange(flat.numel())
            if max_entries is not None and flat.numel() > max_entries:
                idx = rng.choice(flat.numel(), size=max_entries, replace=False)
            for i in idx:
                orig = float(flat[i])
                flat[i] = orig + step
                f_plus = float(fn(*inputs))
                flat[i] = orig - step
                f_minus = float(fn(*inputs))
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * step)
                analytic = float(gflat[i])
                denom = max(abs(analytic), abs(numeric), rel_floor)
                worst = max(worst, abs(analytic - numeric) / denom)
    return worst
