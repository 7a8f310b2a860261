"""Data model: construction, slicing, plane batching, matricization."""

import numpy as np
import pytest
import torch

from lfenhance.errors import ShapeError, ValueRangeError
from lfenhance.lightfield import (
    PLANES,
    extract_epi,
    extract_sai,
    make_lightfield,
    matricize_center_sai,
    views_as_plane_batch,
)
from lfenhance.simulate import make_synthetic_scene, random_base_image


class TestMakeLightfield:
    def test_zeros_valid(self):
        lf = make_lightfield(np.zeros((3, 3, 8, 8, 3)))
        assert lf.shape == (3, 3, 8, 8, 3)
        assert lf.angular == (3, 3) and lf.spatial == (8, 8) and lf.channels == 3

    def test_two_channels_rejected(self):
        with pytest.raises(ShapeError):
            make_lightfield(np.zeros((3, 3, 8, 8, 2)))

    def test_wrong_axis_count_rejected(self):
        with pytest.raises(ShapeError):
            make_lightfield(np.zeros((3, 8, 8, 3)))

    def test_out_of_range_rejected(self):
        bad = np.zeros((2, 2, 4, 4, 3))
        bad[0, 0, 0, 0, 0] = 1.5
        with pytest.raises(ValueRangeError):
            make_lightfield(bad)
        # same data passes when the range check is off
        assert make_lightfield(bad, validate_range=False).data.max() == 1.5

    def test_non_finite_rejected(self):
        bad = np.zeros((2, 2, 4, 4, 3))
        bad[1, 1, 2, 2, 1] = np.nan
        with pytest.raises(ValueRangeError):
            make_lightfield(bad, validate_range=False)

    def test_input_copied(self):
        raw = np.zeros((2, 2, 4, 4, 3))
        lf = make_lightfield(raw)
        raw[0, 0, 0, 0, 0] = 0.7
        assert lf.data[0, 0, 0, 0, 0] == 0.0


class TestExtractSai:
    def test_view_ramp(self):
        U, V = 3, 4
        peak = (U - 1) + (V - 1)
        data = np.zeros((U, V, 5, 6, 3))
        for u in range(U):
            for v in range(V):
                data[u, v] = (u + v) / peak
        lf = make_lightfield(data)
        sai = extract_sai(lf, 1, 2)
        assert sai.shape == (5, 6, 3)
        assert np.all(sai == 3 / peak)

    def test_constant(self):
        lf = make_lightfield(np.full((2, 2, 4, 4, 1), 0.5))
        assert np.all(extract_sai(lf, 1, 0) == 0.5)

    def test_index_out_of_range(self):
        lf = make_lightfield(np.zeros((2, 2, 4, 4, 3)))
        with pytest.raises(IndexError):
            extract_sai(lf, 2, 0)
        with pytest.raises(IndexError):
            extract_sai(lf, 0, -1)

    def test_returns_copy(self):
        lf = make_lightfield(np.zeros((2, 2, 4, 4, 3)))
        sai = extract_sai(lf, 0, 0)
        sai[0, 0, 0] = 0.9
        assert lf.data[0, 0, 0, 0, 0] == 0.0

    def test_matches_direct_indexing_everywhere(self):
        rng = np.random.default_rng(7)
        lf = make_lightfield(rng.uniform(size=(3, 2, 4, 5, 3)))
        for u in range(3):
            for v in range(2):
                assert np.array_equal(extract_sai(lf, u, v), lf.data[u, v])


class TestExtractEpi:
    def test_constant_lf_constant_slice(self):
        lf = make_lightfield(np.full((3, 3, 8, 8, 3), 0.25))
        sl = extract_epi(lf, "horizontal", 1, 4, channel=2)
        assert np.all(sl.data == 0.25)

    def test_shapes(self):
        lf = make_lightfield(np.zeros((3, 3, 8, 8, 3)))
        assert extract_epi(lf, "horizontal", 0, 0).data.shape == (3, 8)
        assert extract_epi(lf, "vertical", 0, 0).data.shape == (3, 8)

    def test_index_errors(self):
        lf = make_lightfield(np.zeros((3, 3, 8, 8, 3)))
        with pytest.raises(IndexError):
            extract_epi(lf, "horizontal", 3, 0)
        with pytest.raises(IndexError):
            extract_epi(lf, "vertical", 0, 8)
        with pytest.raises(ValueError):
            extract_epi(lf, "diagonal", 0, 0)

    @pytest.mark.parametrize("orientation", ["horizontal", "vertical"])
    def test_disparity_one_shifts_one_pixel_per_step(self, orientation):
        # scene with disparity 1: row du of the slice, shifted back by du
        # pixels, must best match row 0 (checked by minimum MSE over shifts)
        rng = np.random.default_rng(3)
        base = random_base_image(rng, 40, 40)
        lf = make_synthetic_scene(base, 1.0, 5, 5)
        sl = (
            extract_epi(lf, orientation, 2, lf.spatial[0] // 2, channel=0)
            if orientation == "horizontal"
            else extract_epi(lf, orientation, 2, lf.spatial[1] // 2, channel=0)
        )
        n_ang, n_spat = sl.data.shape
        interior = slice(n_ang + 1, n_spat - n_ang - 1)
        for du in range(1, n_ang):
            errs = []
            for shift in range(-n_ang, n_ang + 1):
                shifted = np.roll(sl.data[du], -shift)
                errs.append(np.mean((shifted[interior] - sl.data[0][interior]) ** 2))
            # row du is row 0 translated by d*du = du pixels (d = 1)
            best = int(np.argmin(errs)) - n_ang
            assert best == du, f"du={du}: best shift {best}"


class TestViewsAsPlaneBatch:
    @pytest.mark.parametrize("plane", PLANES)
    def test_round_trip_identity_numpy(self, plane):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(2, 3, 4, 5, 6))
        batch, layout = views_as_plane_batch(x, plane)
        assert np.array_equal(layout.restore(batch), x)

    @pytest.mark.parametrize("plane", PLANES)
    def test_round_trip_identity_torch(self, plane):
        x = torch.randn(2, 3, 4, 5, 6, dtype=torch.float64)
        batch, layout = views_as_plane_batch(x, plane)
        assert torch.equal(layout.restore(batch), x)

    @pytest.mark.parametrize("plane", PLANES)
    def test_round_trip_identity_batched(self, plane):
        x = torch.randn(3, 2, 2, 4, 5, 6)
        batch, layout = views_as_plane_batch(x, plane)
        assert torch.equal(layout.restore(batch), x)

    def test_spatial_shape(self):
        x = np.zeros((2, 2, 4, 4, 8))
        batch, _ = views_as_plane_batch(x, "spatial")
        assert batch.shape == (4, 4, 4, 8)

    def test_epi_h_shape(self):
        x = np.zeros((2, 2, 4, 4, 8))
        batch, _ = views_as_plane_batch(x, "epi_h")
        assert batch.shape == (8, 2, 4, 8)

    def test_epi_h_matches_index_enumeration(self):
        # brute-force check of which input entry lands where
        rng = np.random.default_rng(5)
        U, V, S, T, F = 2, 3, 4, 5, 2
        x = rng.normal(size=(U, V, S, T, F))
        batch, _ = views_as_plane_batch(x, "epi_h")
        for v in range(V):
            for s in range(S):
                for u in range(U):
                    for t in range(T):
                        for f in range(F):
                            assert batch[v * S + s, u, t, f] == x[u, v, s, t, f]

    def test_angular_matches_index_enumeration(self):
        rng = np.random.default_rng(6)
        U, V, S, T, F = 2, 3, 4, 5, 2
        x = rng.normal(size=(U, V, S, T, F))
        batch, _ = views_as_plane_batch(x, "angular")
        for s in range(S):
            for t in range(T):
                assert np.array_equal(batch[s * T + t], x[:, :, s, t, :])

    def test_unknown_plane(self):
        with pytest.raises(ValueError):
            views_as_plane_batch(np.zeros((1, 1, 2, 2, 1)), "radial")


class TestMatricizeCenterSai:
    def test_constant(self):
        lf = make_lightfield(np.full((3, 3, 8, 8, 3), 0.5))
        m = matricize_center_sai(lf)
        assert m.shape == (8, 8)
        assert np.all(m == 0.5)

    def test_rgb_mean(self):
        data = np.zeros((3, 3, 4, 4, 3))
        data[:, :, :, :] = [0.9, 0.3, 0.3]
        m = matricize_center_sai(make_lightfield(data))
        assert np.allclose(m, 0.5)

    def test_even_angular_uses_floor_center(self):
        data = np.zeros((2, 2, 4, 4, 3))
        data[1, 1] = 1.0
        m = matricize_center_sai(make_lightfield(data))
        assert np.all(m == 1.0)
