"""4D light field data model.

A light field is stored as a 5-axis array indexed ``[u, v, s, t, c]``:
``(u, v)`` are the angular view indices, ``(s, t)`` the spatial row/column,
and ``c`` the color channel. Every module in this package uses this one
axis order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError, ValueRangeError

PLANES = ("spatial", "angular", "epi_h", "epi_v")

# Axis permutation from [u, v, s, t, c] to [b0, b1, rows, cols, c]: the first
# two permuted axes enumerate the slices of a plane, the middle two are the
# in-plane rows/columns a 2D convolution acts on.
_PLANE_PERM = {
    "spatial": (0, 1, 2, 3, 4),  # one (s, t) image per view (u, v)
    "angular": (2, 3, 0, 1, 4),  # one (u, v) patch per pixel (s, t)
    "epi_h": (1, 2, 0, 3, 4),    # one (u, t) slice per fixed (v, s)
    "epi_v": (0, 3, 1, 2, 4),    # one (v, s) slice per fixed (u, t)
}


@dataclass(frozen=True)
class LightField4D:
    """Validated light field array plus an optional provenance tag."""

    data: np.ndarray
    meta: Optional[str] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def angular(self):
        return self.data.shape[0], self.data.shape[1]

    @property
    def spatial(self):
        return self.data.shape[2], self.data.shape[3]

    @property
    def channels(self) -> int:
        return self.data.shape[4]


@dataclass(frozen=True)
class EpiSlice:
    """2D epipolar slice with the indices it was cut at.

    ``horizontal``: rows run over u, columns over t (v, s fixed).
    ``vertical``: rows run over v, columns over s (u, t fixed).
    """

    data: np.ndarray
    orientation: str
    fixed_angular: int
    fixed_spatial: int
    channel: int


def make_lightfield(raw, validate_range: bool = True, meta: Optional[str] = None) -> LightField4D:
    """Validate a 5-axis array and wrap it as a LightField4D.

    The array is copied to float64. Raises ShapeError for a wrong axis
    count or channel count, ValueRangeError for non-finite values or,
    when ``validate_range`` is set, values outside [0, 1].
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 5:
        raise ShapeError(f"light field needs 5 axes [u,v,s,t,c], got {arr.ndim}")
    if arr.shape[4] not in (1, 3):
        raise ShapeError(f"channel count must be 1 or 3, got {arr.shape[4]}")
    if any(n < 1 for n in arr.shape):
        raise ShapeError(f"all axes must be nonempty, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueRangeError("light field contains non-finite values")
    if validate_range and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueRangeError(
            f"values outside [0,1]: min={arr.min():.4g} max={arr.max():.4g}"
        )
    return LightField4D(data=arr.copy(), meta=meta)


def _check_index(name, value, bound):
    if not 0 <= value < bound:
        raise IndexError(f"{name}={value} out of range [0, {bound})")


def extract_sai(lf: LightField4D, u: int, v: int) -> np.ndarray:
    """Return a copy of the sub-aperture image at view (u, v), shape [s, t, c]."""
    _check_index("u", u, lf.data.shape[0])
    _check_index("v", v, lf.data.shape[1])
    return lf.data[u, v].copy()


def extract_epi(
    lf: LightField4D,
    orientation: str,
    fixed_angular: int,
    fixed_spatial: int,
    channel: int = 0,
) -> EpiSlice:
    """Cut a 2D epipolar slice out of a light field.

    ``horizontal`` fixes (v=fixed_angular, s=fixed_spatial) and returns the
    [u, t] slice; ``vertical`` fixes (u=fixed_angular, t=fixed_spatial) and
    returns the [v, s] slice. For a Lambertian scene with uniform disparity
    d, constant-intensity lines in the slice shift d spatial pixels per
    angular step.
    """
    U, V, S, T, C = lf.data.shape
    _check_index("channel", channel, C)
    if orientation == "horizontal":
        _check_index("v", fixed_angular, V)
        _check_index("s", fixed_spatial, S)
        sl = lf.data[:, fixed_angular, fixed_spatial, :, channel].copy()
    elif orientation == "vertical":
        _check_index("u", fixed_angular, U)
        _check_index("t", fixed_spatial, T)
        sl = lf.data[fixed_angular, :, :, fixed_spatial, channel].copy()
    else:
        raise ValueError(f"orientation must be 'horizontal' or 'vertical', got {orientation!r}")
    return EpiSlice(
        data=sl,
        orientation=orientation,
        fixed_angular=fixed_angular,
        fixed_spatial=fixed_spatial,
        channel=channel,
    )


@dataclass(frozen=True)
class PlaneLayout:
    """Inverse-permutation descriptor returned by views_as_plane_batch."""

    plane: str
    perm: tuple
    permuted_shape: tuple

    def restore(self, batch):
        """Undo the batching: bit-exact inverse of views_as_plane_batch.

        The channel count may differ from the forward pass (a convolution
        applied to the batch is allowed to change it).
        """
        inverse = tuple(int(i) for i in np.argsort(self.perm))
        shape = self.permuted_shape[:-1] + (batch.shape[-1],)
        return _permute(batch.reshape(shape), inverse)


def _permute(x, axes):
    # numpy arrays and torch tensors spell axis permutation differently
    if isinstance(x, np.ndarray):
        return x.transpose(axes)
    return x.permute(*axes)


def views_as_plane_batch(x, plane: str):
    """Reshape a 5-axis field so 2D ops act on the named plane.

    Returns ``(batch, layout)`` where ``batch`` has shape
    [n_slices, rows, cols, channels] and ``layout.restore(batch)`` is the
    bit-exact inverse. Works on numpy arrays and torch tensors. Planes:
    spatial (s,t), angular (u,v), epi_h (u,t), epi_v (v,s). A 6-axis
    input is treated as a leading batch of independent fields.
    """
    if plane not in _PLANE_PERM:
        raise ValueError(f"unknown plane {plane!r}, expected one of {PLANES}")
    if x.ndim == 5:
        perm = _PLANE_PERM[plane]
    elif x.ndim == 6:
        perm = (0,) + tuple(p + 1 for p in _PLANE_PERM[plane])
    else:
        raise ShapeError(f"expected a 5-axis field (or batched 6-axis), got {x.ndim} axes")
    permuted = _permute(x, perm)
    pshape = tuple(permuted.shape)
    lead = 1
    for n in pshape[:-3]:
        lead *= n
    batch = permuted.reshape(lead, pshape[-3], pshape[-2], pshape[-1])
    return batch, PlaneLayout(plane=plane, perm=perm, permuted_shape=pshape)


def matricize_center_sai(lf: LightField4D) -> np.ndarray:
    """Grayscale center sub-aperture image as an S-by-T matrix.

    The center view is (U//2, V//2); grayscale is the unweighted channel
    mean. This is the matrix the singular-value analysis operates on.
    """
    uc, vc = lf.data.shape[0] // 2, lf.data.shape[1] // 2
    return lf.data[uc, vc].mean(axis=-1)
