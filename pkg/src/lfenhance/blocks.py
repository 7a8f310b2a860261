"""Feature interaction blocks for 5-axis feature fields [u, v, s, t, f].

The full block runs four plane convolutions (spatial, angular, horizontal
EPI, vertical EPI), boosts the two EPI features through a shared 1x1
convolution, converges all views into one ray-fusion feature, and reduces
the concatenation back to the working channel width. A spatial-angular
separable block and a no-fusion variant are provided as ablation baselines.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeError
from .lightfield import views_as_plane_batch

LEAKY_SLOPE = 0.2


def _activate(x, enabled: bool):
    return F.leaky_relu(x, LEAKY_SLOPE) if enabled else x


def plane_conv(f: torch.Tensor, conv: nn.Conv2d, plane: str, activate: bool = True) -> torch.Tensor:
    """2D convolution over the named plane of a feature field.

    Stride 1, zero padding preserving size (as configured on ``conv``),
    followed by a leaky ramp (slope 0.2) unless ``activate`` is off.
    """
    if f.shape[-1] != conv.in_channels:
        raise ShapeError(
            f"field has {f.shape[-1]} channels, conv expects {conv.in_channels}"
        )
    batch, layout = views_as_plane_batch(f, plane)
    y = conv(batch.permute(0, 3, 1, 2))
    y = _activate(y, activate)
    return layout.restore(y.permute(0, 2, 3, 1))


def epi_boost(f_epih: torch.Tensor, f_epiv: torch.Tensor, conv: nn.Conv2d, activate: bool = True) -> torch.Tensor:
    """Fuse horizontal and vertical EPI features: Conv(f_epiv + f_epih)."""
    if f_epih.shape != f_epiv.shape:
        raise ShapeError(f"EPI feature shapes differ: {tuple(f_epih.shape)} vs {tuple(f_epiv.shape)}")
    return plane_conv(f_epih + f_epiv, conv, "spatial", activate=activate)


def ray_fusion(f_in: torch.Tensor, beta: torch.Tensor, conv: nn.Conv2d, activate: bool = True) -> torch.Tensor:
    """Converge all views into one fused feature map, broadcast per view.

    Computes Conv(sum_i beta_i * f_in^i) over the N = U*V view slices and
    broadcasts the single fused map back to every view.
    """
    batched = f_in.ndim == 6
    U, V = (f_in.shape[1], f_in.shape[2]) if batched else (f_in.shape[0], f_in.shape[1])
    if beta.numel() != U * V:
        raise ShapeError(f"beta has {beta.numel()} weights, field has {U * V} views")
    w = beta.reshape(U, V, 1, 1, 1)
    if batched:
        mixed = (w * f_in).sum(dim=(1, 2))
    else:
        mixed = (w * f_in).sum(dim=(0, 1)).unsqueeze(0)
    y = conv(mixed.permute(0, 3, 1, 2))
    y = _activate(y, activate).permute(0, 2, 3, 1)
    if batched:
        b = f_in.shape[0]
        return y.unsqueeze(1).unsqueeze(1).expand(b, U, V, -1, -1, -1)
    return y.squeeze(0).unsqueeze(0).unsqueeze(0).expand(U, V, -1, -1, -1)


class InteractionBlock(nn.Module):
    """Plane convolutions + EPI boost + ray fusion, reduced to C channels.

    With ``include_fusion`` off the boost and ray-fusion branches are
    removed (the simplified ablation) and only the four plane features are
    concatenated.
    """

    def __init__(self, channels: int, n_views: int, include_fusion: bool = True):
        super().__init__()
        self.include_fusion = include_fusion
        self.spatial_conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.angular_conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.epi_h_conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.epi_v_conv = nn.Conv2d(channels, channels, 3, padding=1)
        n_feats = 4
        if include_fusion:
            self.boost_conv = nn.Conv2d(channels, channels, 1)
            self.mix_conv = nn.Conv2d(channels, channels, 1)
            self.beta = nn.Parameter(torch.full((n_views,), 1.0 / n_views))
            n_feats = 6
        self.fuse_conv = nn.Conv2d(n_feats * channels, channels, 1)

    def forward(self, f):
        f_spa = plane_conv(f, self.spatial_conv, "spatial")
        f_ang = plane_conv(f, self.angular_conv, "angular")
        f_eh = plane_conv(f, self.epi_h_conv, "epi_h")
        f_ev = plane_conv(f, self.epi_v_conv, "epi_v")
        feats = [f_spa, f_ang, f_eh, f_ev]
        if self.include_fusion:
            feats.append(epi_boost(f_eh, f_ev, self.boost_conv))
            feats.append(ray_fusion(f, self.beta, self.mix_conv))
        return plane_conv(torch.cat(feats, dim=-1), self.fuse_conv, "spatial")


class SeparableBlock(nn.Module):
    """Spatial-then-angular convolution pair (the SAS ablation baseline)."""

    def __init__(self, channels: int, n_views: int = 0):
        super().__init__()
        self.spatial_conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.angular_conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, f):
        f = plane_conv(f, self.spatial_conv, "spatial")
        return plane_conv(f, self.angular_conv, "angular")


_BLOCK_KINDS = {
    "dpef": lambda c, n: InteractionBlock(c, n, include_fusion=True),
    "simplified": lambda c, n: InteractionBlock(c, n, include_fusion=False),
    "sas": lambda c, n: SeparableBlock(c, n),
}


def make_block(kind: str, channels: int, n_views: int) -> nn.Module:
    if kind not in _BLOCK_KINDS:
        raise ValueError(f"unknown feature block {kind!r}, expected one of {sorted(_BLOCK_KINDS)}")
    return _BLOCK_KINDS[kind](channels, n_views)


class DenseStack(nn.Module):
    """L feature blocks joined by dense skips.

    Layer l consumes the channel concatenation of the stack input and all
    previous layer outputs, reduced to C channels by a per-layer 1x1
    convolution (l*C in, C out), and returns the last layer's output.
    """

    def __init__(self, layers: int, channels: int, n_views: int, kind: str = "dpef"):
        super().__init__()
        if layers < 1:
            raise ValueError(f"need at least one layer, got {layers}")
        self.blocks = nn.ModuleList(
            make_block(kind, channels, n_views) for _ in range(layers)
        )
        self.reducers = nn.ModuleList(
            nn.Conv2d((i + 1) * channels, channels, 1) for i in range(layers)
        )

    def forward(self, f):
        feats = [f]
        out = f
        for block, reducer in zip(self.blocks, self.reducers):
            out = block(plane_conv(torch.cat(feats, dim=-1), reducer, "spatial"))
            feats.append(out)
        return out
