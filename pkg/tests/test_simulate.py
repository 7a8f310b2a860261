"""Low-light simulation: alpha sampling, noise statistics, scene generation."""

import numpy as np
import pytest

from lfenhance.errors import ShapeError, ValueRangeError
from lfenhance.lightfield import make_lightfield
from lfenhance.simulate import (
    NoiseParams,
    make_synthetic_scene,
    random_base_image,
    sample_alpha,
    simulate_lowlight,
)


def constant_lf(value, shape=(2, 2, 8, 8, 3)):
    return make_lightfield(np.full(shape, value))


class TestNoiseParams:
    def test_invalid_alpha(self):
        with pytest.raises(ValueRangeError):
            NoiseParams(alpha_mode="fixed", alpha=0.0)

    def test_invalid_range(self):
        with pytest.raises(ValueRangeError):
            NoiseParams(alpha_mode="dynamic", alpha_range=(0.3, 0.1))
        with pytest.raises(ValueRangeError):
            NoiseParams(alpha_mode="dynamic", alpha_range=(0.0, 0.1))

    def test_negative_sigma(self):
        with pytest.raises(ValueRangeError):
            NoiseParams(gaussian_sigma_255=-1.0)

    def test_dict_round_trip(self):
        p = NoiseParams(alpha_mode="dynamic", alpha_range=(0.1, 0.3), seed=7)
        assert NoiseParams.from_dict(p.to_dict()) == p


class TestSampleAlpha:
    def test_fixed_exact(self):
        assert sample_alpha(NoiseParams(alpha_mode="fixed", alpha=0.2)) == 0.2

    def test_dynamic_in_range(self):
        p = NoiseParams(alpha_mode="dynamic", alpha_range=(0.1, 0.3))
        rng = np.random.default_rng(0)
        for _ in range(100):
            assert 0.1 <= sample_alpha(p, rng) <= 0.3

    def test_degenerate_range(self):
        p = NoiseParams(alpha_mode="dynamic", alpha_range=(0.2, 0.2))
        assert sample_alpha(p, np.random.default_rng(1)) == 0.2

    def test_reproducible_from_seed(self):
        p = NoiseParams(alpha_mode="dynamic", alpha_range=(0.1, 0.3), seed=42)
        assert sample_alpha(p) == sample_alpha(p)


class TestSimulateLowlight:
    def test_noiseless_identity(self):
        lf = constant_lf(0.37)
        out, alpha = simulate_lowlight(
            lf, NoiseParams(alpha=1.0, gaussian_sigma_255=0.0), rng=0
        )
        assert alpha == 1.0
        assert np.array_equal(out.data, lf.data)

    def test_pure_scaling_exact(self):
        rng = np.random.default_rng(2)
        lf = make_lightfield(rng.uniform(size=(2, 2, 6, 6, 3)))
        for alpha in (0.1, 0.5, 0.9):
            out, _ = simulate_lowlight(
                lf, NoiseParams(alpha=alpha, gaussian_sigma_255=0.0), rng=0
            )
            assert np.array_equal(out.data, np.clip(alpha * lf.data, 0.0, 1.0))

    def test_fixed_protocol_moments(self):
        # alpha=0.2, sigma255=20 on constant 0.5: mean 0.1, std 20/255
        # (pre-clipping; clipping at 0 would bias both moments)
        lf = constant_lf(0.5, shape=(3, 3, 200, 200, 3))
        p = NoiseParams(alpha=0.2, gaussian_sigma_255=20.0)
        out, _ = simulate_lowlight(lf, p, rng=123, clip=False)
        assert out.data.size >= 1_000_000
        assert abs(out.data.mean() - 0.1) < 0.01 * 0.1
        assert abs(out.data.std() - 20 / 255) < 0.02 * 20 / 255

    def test_signal_dependent_variance(self):
        lf = constant_lf(0.5, shape=(3, 3, 200, 200, 3))
        gain = 0.004
        p = NoiseParams(alpha=0.2, gaussian_sigma_255=0.0, poisson_gain=gain)
        out, _ = simulate_lowlight(lf, p, rng=9, clip=False)
        expected_var = gain * 0.2 * 0.5
        assert abs(out.data.var() - expected_var) < 0.02 * expected_var

    def test_clipping_bounds(self):
        lf = constant_lf(0.5)
        out, _ = simulate_lowlight(lf, NoiseParams(alpha=0.2, gaussian_sigma_255=80.0), rng=5)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0

    def test_same_seed_bit_identical(self):
        lf = constant_lf(0.5)
        p = NoiseParams(alpha=0.2, gaussian_sigma_255=20.0)
        a, _ = simulate_lowlight(lf, p, rng=77)
        b, _ = simulate_lowlight(lf, p, rng=77)
        assert np.array_equal(a.data, b.data)

    def test_different_seeds_differ(self):
        lf = constant_lf(0.5)
        p = NoiseParams(alpha=0.2, gaussian_sigma_255=20.0)
        a, _ = simulate_lowlight(lf, p, rng=1)
        b, _ = simulate_lowlight(lf, p, rng=2)
        assert not np.array_equal(a.data, b.data)

    def test_rejects_out_of_range_input(self):
        lf = make_lightfield(np.full((1, 1, 4, 4, 3), 1.5), validate_range=False)
        with pytest.raises(ValueRangeError):
            simulate_lowlight(lf, NoiseParams(), rng=0)

    def test_dynamic_alpha_per_lightfield(self):
        p = NoiseParams(alpha_mode="dynamic", alpha_range=(0.1, 0.3), gaussian_sigma_255=0.0)
        lf = constant_lf(1.0)
        out, alpha = simulate_lowlight(lf, p, rng=3)
        assert 0.1 <= alpha <= 0.3
        # one alpha for the whole field, not per pixel
        assert np.allclose(out.data, alpha)


class TestMakeSyntheticScene:
    def test_zero_disparity_replicates_base(self):
        rng = np.random.default_rng(0)
        base = random_base_image(rng, 16, 16)
        lf = make_synthetic_scene(base, 0.0, 3, 3)
        assert lf.shape == (3, 3, 16, 16, 3)
        for u in range(3):
            for v in range(3):
                assert np.allclose(lf.data[u, v], base)

    def test_single_view_equals_base(self):
        rng = np.random.default_rng(1)
        base = random_base_image(rng, 12, 10)
        lf = make_synthetic_scene(base, 2.0, 1, 1)
        assert lf.shape == (1, 1, 12, 10, 3)
        assert np.allclose(lf.data[0, 0], base)

    def test_integer_disparity_matches_index_shift(self):
        rng = np.random.default_rng(2)
        base = random_base_image(rng, 20, 20)
        U = V = 3
        lf = make_synthetic_scene(base, 1.0, U, V)
        margin = 1  # ceil(1.0 * max offset 1)
        S, T = lf.spatial
        for u in range(U):
            for v in range(V):
                # view (u,v)[i,j] = base[margin + i - (v-1), margin + j - (u-1)]
                expect = base[
                    margin - (v - 1) : margin - (v - 1) + S,
                    margin - (u - 1) : margin - (u - 1) + T,
                    :,
                ]
                assert np.allclose(lf.data[u, v], np.clip(expect, 0, 1), atol=1e-12)

    def test_oversized_disparity_rejected(self):
        base = np.full((8, 8, 3), 0.5)
        with pytest.raises(ShapeError):
            make_synthetic_scene(base, 5.0, 3, 3)

    def test_wrong_base_rank_rejected(self):
        with pytest.raises(ShapeError):
            make_synthetic_scene(np.zeros((8, 8)), 1.0, 3, 3)


class TestRandomBaseImage:
    def test_range_and_shape(self):
        img = random_base_image(0, 24, 32, lo=0.1, hi=0.9)
        assert img.shape == (24, 32, 3)
        assert img.min() >= 0.1 and img.max() <= 0.9

    def test_has_texture(self):
        img = random_base_image(4, 32, 32)
        assert img.std() > 0.05
