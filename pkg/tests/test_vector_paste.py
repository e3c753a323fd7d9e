"""Divergence-free pasting of vector fields and smoothing."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pasting import (
    Ball,
    GridSpec,
    PastingRequest,
    SpecMismatchError,
    VectorGrid,
    blend,
    build_partition,
    curl_of_stream,
    c1_distance,
    divergence,
    leray_project,
    mollify_divfree,
    mollify_scalar,
    paste_c1,
    paste_support_controlled,
    smooth_field,
)
from pasting.scenarios import constant_pair, paste_nest, stream_field
from pasting.vector_paste import PastingError


@pytest.fixture(scope="module")
def setup64():
    X, Y = constant_pair(64, 1e-2)
    return X, Y, paste_nest(X.spec)


class TestBlend:
    def test_blend_exact_in_zones(self, setup64):
        X, Y, nest = setup64
        T, g = blend(X, Y, build_partition(nest))
        p = build_partition(nest)
        assert np.all(T.components[p.xi1_faces == 1.0] == Y.components[p.xi1_faces == 1.0])
        assert np.all(T.components[p.xi1_faces == 0.0] == X.components[p.xi1_faces == 0.0])
        # the defect lives on omega only
        assert np.all(g.values[~nest.omega] == 0.0)


class TestPasteC1:
    def test_certificates(self, setup64):
        X, Y, nest = setup64
        Z, rep = paste_c1(PastingRequest(X, Y, nest, with_holder=False))
        assert rep.ok, rep.certificates
        assert divergence(Z).sup() < 1e-8
        assert rep.delta_measured == pytest.approx(1e-2)

    def test_equal_inputs_paste_to_input(self, setup64):
        X, _, nest = setup64
        Z, rep = paste_c1(PastingRequest(X, X, nest, with_holder=False))
        assert Z.equals(X) and rep.distance["c1"] == 0.0

    def test_linear_in_the_perturbation(self, setup64):
        X, _, nest = setup64
        dists = []
        for d in (1e-1, 1e-3):
            _, Y = constant_pair(64, d)
            _, rep = paste_c1(PastingRequest(X, Y, nest, with_holder=False))
            dists.append(rep.c_obs)
        assert dists[0] == pytest.approx(dists[1], rel=1e-6)

    def test_rejects_divergent_input(self, setup64):
        X, _, nest = setup64
        rng = np.random.default_rng(0)
        bad = VectorGrid(X.spec, rng.normal(size=X.components.shape))
        with pytest.raises(PastingError) as exc:
            PastingRequest(X, bad, nest)
        assert exc.value.code == "not_divergence_free"

    def test_rejects_mismatched_grids(self, setup64):
        X, _, nest = setup64
        Y = VectorGrid.constant(GridSpec(2, 32), [1.0, 0.0])
        with pytest.raises(SpecMismatchError):
            PastingRequest(X, Y, nest)

    def test_epsilon_miss_is_flagged(self, setup64):
        X, Y, nest = setup64
        _, rep = paste_c1(PastingRequest(X, Y, nest, epsilon=1e-6, with_holder=False))
        assert rep.epsilon_missed

    @settings(max_examples=6, deadline=None)
    @given(a=st.floats(-1, 1), b=st.floats(-1, 1), kx=st.integers(1, 3), ky=st.integers(1, 3))
    def test_locality_for_divergence_free_pairs(self, a, b, kx, ky):
        spec = GridSpec(2, 32)
        X = curl_of_stream(spec, lambda x, y: a * np.sin(kx * x) * np.cos(ky * y))
        Y = curl_of_stream(spec, lambda x, y: b * np.cos(kx * x + ky * y))
        nest = paste_nest(spec)
        Z, rep = paste_c1(PastingRequest(X, Y, nest, with_holder=False))
        assert rep.z_equals_y_on_v and rep.z_equals_x_outside_w
        assert rep.div_residual_ok and rep.compat_ok


class TestLerayOracle:
    def test_global_projection_is_comparable_but_not_local(self):
        X, Y = constant_pair(128, 1e-2)
        nest = paste_nest(X.spec)
        T, _ = blend(X, Y, build_partition(nest))
        Z, _ = paste_c1(PastingRequest(X, Y, nest, with_holder=False))
        ZL = leray_project(T)
        assert divergence(ZL).sup() < 1e-12
        a = c1_distance(Z, X, with_holder=False).c1
        b = c1_distance(ZL, X, with_holder=False).c1
        assert c1_distance(Z, ZL, with_holder=False).c1 <= 2 * max(a, b)
        # the projection spreads the correction over the whole torus
        assert np.max(np.abs((ZL - X).components[:, ~nest.w])) > 1e-4


class TestSupportControl:
    def test_support_inside_neighbourhood(self):
        X, Y = constant_pair(64, 1e-2)
        K = Ball((np.pi, np.pi), 0.5)
        _, rep = paste_support_controlled(X, Y, K, 1.2, with_holder=False)
        assert rep.extra["support_ok"] and rep.support_radius <= 1.2

    def test_too_small_neighbourhood(self):
        X, Y = constant_pair(64, 1e-2)
        with pytest.raises(PastingError) as exc:
            paste_support_controlled(X, Y, Ball((np.pi, np.pi), 0.5), 0.3)
        assert exc.value.code == "support_too_small"


class TestMollify:
    def test_commutes_with_divergence(self):
        spec = GridSpec(2, 64)
        rng = np.random.default_rng(1)
        V = VectorGrid(spec, rng.normal(size=(2,) + spec.shape))
        lhs = divergence(mollify_divfree(V, 0.2)).values
        rhs = mollify_scalar(divergence(V), 0.2).values
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_preserves_divergence_free(self):
        M = mollify_divfree(stream_field(64), 0.3)
        assert divergence(M).sup() < 1e-12

    def test_fourier_attenuation(self):
        # a Gaussian of width eps damps the mode sin y by exp(-eps**2 / 2)
        spec = GridSpec(2, 64)
        V = VectorGrid.from_function(spec, lambda x, y: (np.sin(y), np.zeros_like(x)))
        M = mollify_divfree(V, 0.3)
        assert np.max(np.abs(M.components - np.exp(-0.045) * V.components)) < 1e-12

    def test_mass_preserved(self):
        spec = GridSpec(2, 32)
        V = VectorGrid.constant(spec, [2.0, -1.0])
        assert np.allclose(mollify_divfree(V, 0.5).components, V.components)

    def test_eps_below_grid_step(self):
        with pytest.raises(ValueError):
            mollify_divfree(stream_field(32), 0.01)


class TestSmooth:
    def test_divergence_and_convergence(self):
        X = stream_field(128)
        d = []
        for eps in (0.4, 0.2):
            Z, rep = smooth_field(X, eps)
            assert rep.div_residual_ok and rep.compat_ok
            assert divergence(Z).sup() < 1e-9
            d.append(rep.distance["c1"])
        assert d[1] < d[0]

    def test_global_policy(self):
        Z, rep = smooth_field(stream_field(64), 0.3, policy=None)
        assert rep.extra["policy"] == "global" and rep.div_residual_ok

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            smooth_field(stream_field(32), 0.3, policy="stripes")
