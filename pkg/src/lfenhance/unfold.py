"""Multi-stage unfolded enhancement.

Each stage mirrors one iteration of a half-quadratic splitting scheme for
the low-light imaging model: estimate an illumination map from the current
iterate, predict a content-associated compensation term, take one data
gradient step with a proximity pull toward the auxiliary variable, then
apply a learned proximal module to refresh the auxiliary variable.
Iterates stay unclamped between stages; only the final output is an image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import DenseStack, plane_conv
from .errors import DegenerateInputError, ShapeError
from .lightfield import LightField4D, make_lightfield

FEATURE_BLOCKS = ("dpef", "sas", "simplified")
ILLUMINATION_MODES = ("signal_dependent", "dual_variable")


@dataclass
class ModelConfig:
    """Architecture hyperparameters and ablation switches.

    Defaults are the full-scale configuration (3 stages, 6 layers, 32
    channels); toy runs shrink all three. ``angular`` fixes the view grid
    the model is built for (the ray-fusion weights are per view).
    """

    stages: int = 3
    layers: int = 6
    channels: int = 32
    angular: Tuple[int, int] = (5, 5)
    use_cdc: bool = True
    feature_block: str = "dpef"
    share_stage_weights: bool = False
    illumination: str = "signal_dependent"
    clamp_floor_i: float = 1e-2

    def __post_init__(self):
        if self.stages < 1 or self.layers < 1 or self.channels < 1:
            raise ValueError("stages, layers and channels must all be >= 1")
        if len(self.angular) != 2 or any(n < 1 for n in self.angular):
            raise ValueError(f"angular must be two positive sizes, got {self.angular}")
        if self.feature_block not in FEATURE_BLOCKS:
            raise ValueError(f"feature_block must be one of {FEATURE_BLOCKS}")
        if self.illumination not in ILLUMINATION_MODES:
            raise ValueError(f"illumination must be one of {ILLUMINATION_MODES}")
        if not 0 < self.clamp_floor_i < 1:
            raise ValueError("clamp_floor_i must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["angular"] = list(self.angular)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "angular" in d:
            d["angular"] = tuple(d["angular"])
        return cls(**d)


@dataclass
class StageState:
    """Iterate carried between stages: current estimate, auxiliary, index.

    ``illum`` is only populated in the dual-variable ablation, where the
    illumination map is optimized as independent state.
    """

    lf_n: torch.Tensor
    nu: torch.Tensor
    k: int = 0
    illum: Optional[torch.Tensor] = None


def _check_same_shape(name_a, a, name_b, b):
    if tuple(a.shape) != tuple(b.shape):
        raise ShapeError(
            f"{name_a} shape {tuple(a.shape)} != {name_b} shape {tuple(b.shape)}"
        )


def init_state(lf_d: torch.Tensor) -> StageState:
    """Start the iteration at the observation: lf_n = nu = lf_d, k = 0."""
    return StageState(lf_n=lf_d, nu=lf_d, k=0)


def coarse_illumination(lf_prev: torch.Tensor, lf_d: torch.Tensor, gamma) -> torch.Tensor:
    """Coarse illumination map: max over RGB of lf_prev - gamma*(lf_prev - lf_d).

    gamma interpolates between the current iterate and the dark input,
    suppressing brightness-mutation regions. Output is [u, v, s, t, 1].
    """
    _check_same_shape("lf_prev", lf_prev, "lf_d", lf_d)
    if lf_prev.shape[-1] != 3:
        raise ShapeError(f"illumination estimation needs 3 color channels, got {lf_prev.shape[-1]}")
    interp = lf_prev - gamma * (lf_prev - lf_d)
    return interp.max(dim=-1, keepdim=True).values


def refine_illumination(tilde_i: torch.Tensor, psi: nn.Module, clamp_floor: float) -> torch.Tensor:
    """One gradient-descent refinement of the coarse map.

    The closed-form refinement subtracts the regularizer gradient, which
    the module approximates: I = clamp(tilde_I - psi(tilde_I)). The floor
    keeps every gain strictly positive.
    """
    return torch.clamp(tilde_i - psi(tilde_i), clamp_floor, 1.0)


def compensation(lf_prev: torch.Tensor, lf_d: torch.Tensor, phi: nn.Module) -> torch.Tensor:
    """Content-associated compensation field.

    Feeds the dark input alongside the brightness-matched previous iterate
    (scaled by mean(lf_d)/mean(lf_prev)) through the compensation module.
    Output is unbounded, shaped like lf_d.
    """
    _check_same_shape("lf_prev", lf_prev, "lf_d", lf_d)
    if lf_prev.ndim == 6:
        dims = tuple(range(1, 6))
        m_prev = lf_prev.mean(dim=dims, keepdim=True)
        m_d = lf_d.mean(dim=dims, keepdim=True)
    else:
        m_prev = lf_prev.mean()
        m_d = lf_d.mean()
    if float(m_prev.detach().min()) < 1e-8:
        raise DegenerateInputError(
            f"mean(lf_prev)={float(m_prev.detach().min()):.3g} too small to normalize"
        )
    scale = m_d / m_prev
    return phi(torch.cat([lf_d, scale * lf_prev], dim=-1))


def data_gradient(
    illum: torch.Tensor, lf_prev: torch.Tensor, lf_d: torch.Tensor, delta: torch.Tensor
) -> torch.Tensor:
    """Gradient of the data term: I * (I * lf_prev - lf_d + delta)."""
    _check_same_shape("lf_prev", lf_prev, "lf_d", lf_d)
    _check_same_shape("delta", delta, "lf_d", lf_d)
    if illum.shape[:-1] != lf_prev.shape[:-1] or illum.shape[-1] != 1:
        raise ShapeError(
            f"illumination shape {tuple(illum.shape)} does not broadcast over {tuple(lf_prev.shape)}"
        )
    return illum * (illum * lf_prev - lf_d + delta)


def optimization_update(
    lf_prev: torch.Tensor, g: torch.Tensor, nu_prev: torch.Tensor, mu
) -> torch.Tensor:
    """Data update: lf_prev - (g + mu * (lf_prev - nu_prev)), unclamped."""
    _check_same_shape("g", g, "lf_prev", lf_prev)
    _check_same_shape("nu_prev", nu_prev, "lf_prev", lf_prev)
    return lf_prev - (g + mu * (lf_prev - nu_prev))


def proximal_regularize(lf_k: torch.Tensor, omega: nn.Module) -> torch.Tensor:
    """Learned proximal step in residual form: nu = lf_k + omega(lf_k)."""
    return lf_k + omega(lf_k)


class DeepModule(nn.Module):
    """Lift -> dense feature stack -> linear head.

    Used for the illumination gradient module (1 channel in/out), the
    compensation module (6 in, 3 out) and the proximal module (3 in/out).
    """

    def __init__(self, in_channels, out_channels, layers, channels, n_views, kind="dpef"):
        super().__init__()
        self.lift = nn.Conv2d(in_channels, channels, 3, padding=1)
        self.stack = DenseStack(layers, channels, n_views, kind=kind)
        self.head = nn.Conv2d(channels, out_channels, 3, padding=1)

    def forward(self, x):
        f = plane_conv(x, self.lift, "spatial")
        f = self.stack(f)
        return plane_conv(f, self.head, "spatial", activate=False)


def _softplus_inverse(y: float) -> float:
    return math.log(math.expm1(y))


class Stage(nn.Module):
    """Learnable parameters of one unfolding stage.

    gamma weights the illumination interpolation (absent in the
    dual-variable ablation); mu is kept positive through a softplus
    reparameterization (initial value 0.5). The compensation module is
    only allocated when the compensation path is enabled, so every
    parameter in the module participates in the forward pass.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        n_views = config.angular[0] * config.angular[1]
        if config.illumination == "signal_dependent":
            self.gamma = nn.Parameter(torch.tensor(0.5))
        self.mu_raw = nn.Parameter(torch.tensor(_softplus_inverse(0.5)))
        self.psi = DeepModule(1, 1, config.layers, config.channels, n_views, config.feature_block)
        if config.use_cdc:
            self.phi = DeepModule(6, 3, config.layers, config.channels, n_views, config.feature_block)
        self.omega = DeepModule(3, 3, config.layers, config.channels, n_views, config.feature_block)

    @property
    def mu(self):
        return F.softplus(self.mu_raw)


def _stage_forward(state: StageState, lf_d: torch.Tensor, stage: Stage, config: ModelConfig):
    floor = config.clamp_floor_i
    if config.illumination == "dual_variable":
        prev_i = state.illum
        if prev_i is None:
            prev_i = torch.clamp(lf_d.max(dim=-1, keepdim=True).values, floor, 1.0)
        illum = torch.clamp(prev_i - stage.psi(prev_i), floor, 1.0)
    else:
        tilde_i = coarse_illumination(state.lf_n, lf_d, stage.gamma)
        illum = refine_illumination(tilde_i, stage.psi, floor)
    if config.use_cdc:
        delta = compensation(state.lf_n, lf_d, stage.phi)
    else:
        delta = torch.zeros_like(lf_d)
    g = data_gradient(illum, state.lf_n, lf_d, delta)
    lf_k = optimization_update(state.lf_n, g, state.nu, stage.mu)
    nu_k = proximal_regularize(lf_k, stage.omega)
    new_state = StageState(
        lf_n=lf_k,
        nu=nu_k,
        k=state.k + 1,
        illum=illum if config.illumination == "dual_variable" else None,
    )
    info = {"lf_n": lf_k, "nu": nu_k, "illum": illum, "delta": delta}
    return new_state, info


def run_stage(state: StageState, lf_d: torch.Tensor, stage: Stage, config: ModelConfig) -> StageState:
    """Advance the iterate by one full stage (k -> k+1)."""
    return _stage_forward(state, lf_d, stage, config)[0]


class UnfoldEnhancer(nn.Module):
    """The full S-stage enhancement network.

    With ``share_stage_weights`` one stage's parameters are reused at
    every iteration; otherwise each stage owns its own modules.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        n_param_sets = 1 if config.share_stage_weights else config.stages
        self.stages = nn.ModuleList(Stage(config) for _ in range(n_param_sets))

    def stage_module(self, k: int) -> Stage:
        return self.stages[0 if self.config.share_stage_weights else k]

    def forward(self, lf_d: torch.Tensor, return_trace: bool = False):
        if lf_d.ndim not in (5, 6):
            raise ShapeError(
                f"expected a 5-axis light field tensor (or a 6-axis batch), got {lf_d.ndim} axes"
            )
        a0 = lf_d.ndim - 5
        if tuple(lf_d.shape[a0 : a0 + 2]) != tuple(self.config.angular):
            raise ShapeError(
                f"model built for angular {self.config.angular}, "
                f"input is {tuple(lf_d.shape[a0:a0 + 2])}"
            )
        if lf_d.shape[-1] != 3:
            raise ShapeError(f"enhancement needs 3 color channels, got {lf_d.shape[-1]}")
        state = init_state(lf_d)
        trace = []
        for k in range(self.config.stages):
            state, info = _stage_forward(state, lf_d, self.stage_module(k), self.config)
            trace.append(info)
        out = torch.clamp(state.lf_n, 0.0, 1.0)
        return (out, trace) if return_trace else out


def make_model(config: ModelConfig, seed: Optional[int] = None, dtype=torch.float32) -> UnfoldEnhancer:
    """Build an enhancer, optionally with seeded initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    return UnfoldEnhancer(config).to(dtype)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def channels_matching_params(config: ModelConfig, variant: str, max_channels: int = 256) -> int:
    """Channel width for an ablation variant that best matches the full
    model's parameter count (the ablations are compared at similar size)."""
    target = count_parameters(UnfoldEnhancer(config))
    best_c, best_gap = 1, None
    for c in range(1, max_channels + 1):
        trial = ModelConfig(**{**config.to_dict(), "feature_block": variant, "channels": c,
                               "angular": config.angular})
        n = count_parameters(UnfoldEnhancer(trial))
        gap = abs(n - target)
        if best_gap is None or gap < best_gap:
            best_c, best_gap = c, gap
        if n > target and c > 1:
            break
    return best_c


def enhance(lf_d: LightField4D, model: UnfoldEnhancer, return_stages: bool = False):
    """Enhance a light field; the public array-in/array-out entry point.

    Returns the clamped result as a LightField4D. With ``return_stages``
    also returns the per-stage diagnostics (numpy arrays: the unclamped
    iterate, auxiliary, illumination map and compensation per stage).
    """
    dtype = next(model.parameters()).dtype
    x = torch.from_numpy(np.ascontiguousarray(lf_d.data)).to(dtype)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            out, trace = model(x, return_trace=True)
    finally:
        model.train(was_training)
    result = make_lightfield(out.double().numpy(), validate_range=False, meta=lf_d.meta)
    if not return_stages:
        return result
    stages = [
        {name: t.double().numpy() for name, t in info.items()} for info in trace
    ]
    return result, stages
