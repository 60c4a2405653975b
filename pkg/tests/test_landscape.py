"""Tests for single-path loss surfaces"""

import math

import numpy as np
import pytest

from app.core.errors import InvalidInputError
from app.core.ppgc import synthesize_channel
from app.models.schemas import ArrayConfig, PathParams
from app.services.landscape import (
    LossSurface,
    antenna_sweep,
    compute_surface,
    count_strict_local_minima,
    gradient_magnitude_stats,
    summarize,
)

REFERENCE = PathParams(gain=1.0, theta_a=0.3, theta_d=-0.2)


@pytest.fixture
def surface():
    """8x8 arrays on a 48x48 grid"""
    return compute_surface(REFERENCE, ArrayConfig(n_t=8, n_r=8), grid_size=48)


def synthetic_surface(values):
    axis = np.linspace(-1.0, 1.0, values.shape[0])
    return LossSurface(
        reference=PathParams(gain=1.0, theta_a=0.0, theta_d=0.0),
        array=ArrayConfig(n_t=2, n_r=2),
        theta_a_axis=axis,
        theta_d_axis=axis,
        values=values,
    )


class TestComputeSurface:
    """Tests for surface evaluation"""

    def test_zero_at_reference(self, surface):
        """The grid contains the reference angles, where the loss vanishes"""
        a = int(np.argmin(np.abs(surface.theta_a_axis - REFERENCE.theta_a)))
        d = int(np.argmin(np.abs(surface.theta_d_axis - REFERENCE.theta_d)))
        assert surface.theta_a_axis[a] == REFERENCE.theta_a
        assert surface.theta_d_axis[d] == REFERENCE.theta_d
        assert surface.values[a, d] == pytest.approx(0.0, abs=1e-12)

    def test_non_negative(self, surface):
        """Squared distances are never negative"""
        assert np.all(surface.values >= 0.0)

    def test_matches_direct_evaluation(self, surface):
        """Entries equal ||H_ref - H(theta_a, theta_d)||_F^2"""
        h_ref = synthesize_channel([REFERENCE], surface.array)
        for a, d in [(0, 0), (5, 40), (30, 12), (47, 47)]:
            path = PathParams(gain=1.0, theta_a=surface.theta_a_axis[a], theta_d=surface.theta_d_axis[d])
            expected = np.sum(np.abs(h_ref - synthesize_channel([path], surface.array)) ** 2)
            assert surface.values[a, d] == pytest.approx(expected, abs=1e-12)

    def test_bounded_by_four_for_unit_gain(self, surface):
        """||H_ref - H||^2 <= (||H_ref|| + ||H||)^2 = 4"""
        assert surface.values.max() <= 4.0 + 1e-12

    def test_global_minimum_on_grid(self):
        """Reference at 1.0 rad lands on the grid with loss at most 1e-12"""
        surface = compute_surface(PathParams(gain=1.0, theta_a=1.0, theta_d=1.0), ArrayConfig(n_t=16, n_r=16), grid_size=64)
        assert surface.values.min() <= 1e-12
        assert np.unravel_index(np.argmin(surface.values), surface.values.shape) == (
            int(np.argmin(np.abs(surface.theta_a_axis - 1.0))),
            int(np.argmin(np.abs(surface.theta_d_axis - 1.0))),
        )

    def test_reflection_symmetry(self):
        """theta -> pi - theta on both axes leaves the surface unchanged"""
        half_width = 0.4
        surface = compute_surface(
            PathParams(gain=1.0, theta_a=1.0, theta_d=1.0),
            ArrayConfig(n_t=8, n_r=8),
            grid_size=33,
            theta_range=(math.pi / 2 - half_width, math.pi / 2 + half_width),
        )
        np.testing.assert_allclose(surface.theta_a_axis + surface.theta_a_axis[::-1], math.pi, atol=1e-12)
        np.testing.assert_allclose(surface.values, surface.values[::-1, ::-1], atol=1e-9)

    def test_grid_too_small(self):
        """At least a 3x3 grid"""
        with pytest.raises(InvalidInputError):
            compute_surface(REFERENCE, ArrayConfig(), grid_size=2)

    def test_reversed_range(self):
        """Range bounds must increase"""
        with pytest.raises(InvalidInputError):
            compute_surface(REFERENCE, ArrayConfig(), grid_size=8, theta_range=(1.0, -1.0))


class TestLocalMinima:
    """Tests for strict local minimum counting"""

    def test_constant_surface(self):
        """Ties are not strict minima"""
        assert count_strict_local_minima(synthetic_surface(np.ones((9, 9)))) == 0

    def test_paraboloid(self):
        """One bowl, one minimum"""
        axis = np.linspace(-1.0, 1.0, 11)
        values = (axis[:, None] - 0.05) ** 2 + (axis[None, :] + 0.13) ** 2
        assert count_strict_local_minima(synthetic_surface(values)) == 1

    def test_boundary_points_ignored(self):
        """A minimum on the edge is not counted"""
        values = np.ones((5, 5))
        values[0, 2] = 0.0
        assert count_strict_local_minima(synthetic_surface(values)) == 0

    def test_reference_is_a_minimum(self, surface):
        """The reference point is a strict minimum"""
        assert count_strict_local_minima(surface) >= 1


class TestGradientStats:
    """Tests for distance-binned gradient magnitudes"""

    def test_counts_cover_grid(self, surface):
        """Every grid point lands in exactly one bin"""
        bins = gradient_magnitude_stats(surface, distance_bins=6)
        assert len(bins) == 6
        assert sum(b.count for b in bins) == 48 * 48

    def test_explicit_edges(self, surface):
        """Bin edges pass through unchanged"""
        bins = gradient_magnitude_stats(surface, distance_bins=[0.0, 0.5, 1.0])
        assert [(b.lower, b.upper) for b in bins] == [(0.0, 0.5), (0.5, 1.0)]

    def test_invalid_edges(self, surface):
        """Decreasing edges are rejected"""
        with pytest.raises(InvalidInputError):
            gradient_magnitude_stats(surface, distance_bins=[0.5, 0.1])

    def test_paraboloid_gradient_grows_with_distance(self):
        """|grad| = 2r for r^2, so outer bins are steeper"""
        axis = np.linspace(-1.0, 1.0, 41)
        values = axis[:, None] ** 2 + axis[None, :] ** 2
        bins = gradient_magnitude_stats(synthetic_surface(values), distance_bins=[0.0, 0.3, 0.6, 0.9])
        means = [b.mean_gradient for b in bins]
        assert means == sorted(means)

    def test_summary(self, surface):
        """Summary fields come from the surface"""
        summary = summarize(surface)
        assert (summary.antennas, summary.grid) == (8, 48)
        assert summary.minima_count == count_strict_local_minima(surface)


class TestAntennaSweep:
    """Tests for sweeping the array size"""

    def test_one_surface_per_size(self):
        """Results follow the antenna list"""
        results = antenna_sweep([2, 4], REFERENCE, grid_size=16)
        assert [summary.antennas for _, summary in results] == [2, 4]
        assert all(surface.values.shape == (16, 16) for surface, _ in results)

    @pytest.mark.slow
    def test_larger_arrays_are_less_convex(self):
        """Reference at 1.0 rad on 256x256: more minima and flatter far field as N grows"""
        reference = PathParams(gain=1.0, theta_a=1.0, theta_d=1.0)
        results = antenna_sweep([4, 16, 64], reference, grid_size=256)
        counts = [summary.minima_count for _, summary in results]
        far_gradients = [summary.gradient_bins[-1].mean_gradient for _, summary in results]
        assert counts[0] < counts[1] < counts[2]
        assert far_gradients[0] > far_gradients[1] > far_gradients[2]
        assert all(surface.values.min() <= 1e-12 for surface, _ in results)
