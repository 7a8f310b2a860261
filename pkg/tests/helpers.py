"""Shared test oracles and fixtures.

The convolution and SVD oracles here are deliberately independent of the
implementations they check: nested python loops and an eigendecomposition
of m^T m instead of library convolution/SVD calls.
"""

import math

import numpy as np
import torch

from lfenhance.simulate import (
    NoiseParams,
    make_synthetic_scene,
    random_base_image,
    simulate_lowlight,
)


def brute_force_conv2d(batch: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Nested-loop 2D correlation, stride 1, zero padding preserving size.

    batch [B, h, w, Cin], weight [Cout, Cin, kh, kw] -> [B, h, w, Cout].
    """
    B, H, W, Ci = batch.shape
    Co, Ci2, kh, kw = weight.shape
    assert Ci == Ci2
    ph, pw = kh // 2, kw // 2
    out = np.zeros((B, H, W, Co), dtype=np.float64)
    for b in range(B):
        for i in range(H):
            for j in range(W):
                for co in range(Co):
                    acc = float(bias[co])
                    for di in range(kh):
                        for dj in range(kw):
                            ii, jj = i + di - ph, j + dj - pw
                            if 0 <= ii < H and 0 <= jj < W:
                                acc += float(
                                    np.dot(batch[b, ii, jj, :], weight[co, :, di, dj])
                                )
                    out[b, i, j, co] = acc
    return out


def svd_via_eigendecomposition(m: np.ndarray) -> np.ndarray:
    """Singular values from the eigenvalues of m^T m, nonincreasing."""
    eigvals = np.linalg.eigvalsh(np.asarray(m, dtype=np.float64).T @ m)
    return np.sqrt(np.clip(eigvals[::-1], 0.0, None))


def set_identity_conv(conv):
    """Make a 1x1 (or odd kxk center-tap) conv the identity map."""
    with torch.no_grad():
        conv.weight.zero_()
        conv.bias.zero_()
        kh, kw = conv.weight.shape[2], conv.weight.shape[3]
        for c in range(conv.out_channels):
            conv.weight[c, c, kh // 2, kw // 2] = 1.0


def zero_module(module):
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()


def leaky(x, slope=0.2):
    return np.where(x >= 0, x, slope * x)


def build_toy_dataset(n, U=3, V=3, size=48, noise=None, seed=0, disparities=(0.6, 1.4)):
    """Paired (dark, clean) synthetic light fields for training tests."""
    rng = np.random.default_rng(seed)
    noise = noise or NoiseParams(
        alpha_mode="dynamic", alpha_range=(0.1, 0.3), gaussian_sigma_255=15.0
    )
    pairs = []
    for _ in range(n):
        d = float(rng.uniform(*disparities))
        margin = math.ceil(d * max(U // 2, V // 2)) + 1
        base = random_base_image(rng, size + 2 * margin, size + 2 * margin)
        gt = make_synthetic_scene(base, d, U, V)
        S, T = gt.spatial
        s0, t0 = (S - size) // 2, (T - size) // 2
        from lfenhance.lightfield import make_lightfield

        gt = make_lightfield(gt.data[:, :, s0 : s0 + size, t0 : t0 + size, :])
        lf_d, _ = simulate_lowlight(gt, noise, rng)
        pairs.append((lf_d, gt))
    return pairs
