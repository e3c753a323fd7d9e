"""Region nests and partitions of unity."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pasting import Ball, GridSpec, MaskRegion, RegionError, Slab, build_partition, build_region_nest, bump_profile


@pytest.fixture(scope="module")
def nest():
    return build_region_nest(GridSpec(2, 64), Ball((np.pi, np.pi), 0.5), radii=(0.5, 1.5, 2.3))


class TestBumpProfile:
    @pytest.mark.parametrize("kind", ["quintic", "exp-flat"])
    def test_plateaus(self, kind):
        p = bump_profile(1.0, kind)
        assert p.value(-0.5) == 1.0 and p.value(0.0) == 1.0
        assert p.value(1.0) == 0.0 and p.value(3.0) == 0.0

    @pytest.mark.parametrize("kind", ["quintic", "exp-flat"])
    def test_derivatives_match_differences(self, kind):
        p = bump_profile(1.0, kind)
        t = np.linspace(0.05, 0.95, 37)
        e = 1e-6
        assert np.allclose(p.deriv(t), (p.value(t + e) - p.value(t - e)) / (2 * e), atol=1e-6)
        assert np.allclose(p.deriv2(t), (p.deriv(t + e) - p.deriv(t - e)) / (2 * e), atol=1e-4)

    @pytest.mark.parametrize("kind", ["quintic", "exp-flat"])
    def test_bounds_scale_with_radius(self, kind):
        p1, p2 = bump_profile(1.0, kind), bump_profile(0.25, kind)
        assert p2.c1_bound == pytest.approx(4 * p1.c1_bound)
        assert p2.c2_bound == pytest.approx(16 * p1.c2_bound)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            bump_profile(1.0, "gaussian")


class TestRegionNest:
    def test_strict_nesting(self, nest):
        assert np.all(nest.k <= nest.v) and np.all(nest.v <= nest.u) and np.all(nest.u <= nest.w)
        assert np.array_equal(nest.omega, nest.w & ~nest.v)
        assert (nest.u & ~nest.v).any() and (nest.w & ~nest.u).any()

    def test_default_radii_in_cells(self):
        spec = GridSpec(2, 64)
        n = build_region_nest(spec, Ball((1.0, 1.0), 0.3))
        assert n.radii == pytest.approx((4 * spec.h, 12 * spec.h, 16 * spec.h))

    def test_gaps_below_two_cells_rejected(self):
        spec = GridSpec(2, 64)
        with pytest.raises(RegionError):
            build_region_nest(spec, Ball((1.0, 1.0), 0.3), radii=(0.2, 0.25, 1.0))

    def test_empty_core_rejected(self):
        spec = GridSpec(2, 32)
        with pytest.raises(RegionError):
            build_region_nest(spec, MaskRegion(np.zeros(spec.shape, dtype=bool)))

    def test_core_covering_torus_rejected(self):
        spec = GridSpec(2, 32)
        with pytest.raises(RegionError):
            build_region_nest(spec, Ball((np.pi, np.pi), 3.0))

    def test_slab_wraps_periodically(self):
        spec = GridSpec(2, 64, 1.0)
        n = build_region_nest(spec, Slab(0, 0.0, 0.05))
        x, _ = spec.centers()
        assert n.k[(x < 0.04) | (x > 0.96)].all()

    def test_mask_matches_ball(self):
        spec = GridSpec(2, 64)
        ball = build_region_nest(spec, Ball((np.pi, np.pi), 0.5), radii=(0.5, 1.5, 2.3))
        mask = build_region_nest(spec, ball.k, radii=(0.5, 1.5, 2.3))
        # distances to cell centers of K undercut the true ball distance by < h
        assert np.sum(mask.w ^ ball.w) < 0.05 * ball.w.sum()


class TestPartition:
    @pytest.mark.parametrize("kind", ["quintic", "exp-flat"])
    def test_invariants(self, nest, kind):
        checks = build_partition(nest, kind).check()
        assert all(checks.values()), checks

    @pytest.mark.parametrize("kind", ["quintic", "exp-flat"])
    def test_gradient_scales_inversely_with_width(self, kind):
        spec = GridSpec(2, 256)
        grads = []
        for width in (0.5, 1.0):
            nest = build_region_nest(spec, Ball((np.pi, np.pi), 0.5), radii=(0.5, 0.5 + width, 0.5 + width + 0.5))
            grads.append(build_partition(nest, kind).grad_xi1.sup())
        assert grads[0] / grads[1] == pytest.approx(2.0, rel=0.15)

    def test_profile_too_wide(self, nest):
        with pytest.raises(RegionError):
            build_partition(nest, bump_profile(5.0))

    @settings(max_examples=15, deadline=None)
    @given(
        cx=st.floats(0.0, 2 * np.pi),
        cy=st.floats(0.0, 2 * np.pi),
        r=st.floats(0.2, 0.8),
        width=st.floats(0.4, 1.0),
    )
    def test_invariants_hold_anywhere(self, cx, cy, r, width):
        spec = GridSpec(2, 32)
        nest = build_region_nest(spec, Ball((cx, cy), r), radii=(0.45, 0.45 + width, 0.45 + width + 0.6))
        checks = build_partition(nest).check()
        assert all(checks.values()), checks
