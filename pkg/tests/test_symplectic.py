"""Generating-function blends of twist maps."""
from __future__ import annotations

import numpy as np
import pytest

from pasting import GridSpec
from pasting.maps import (
    GeneratingFunction2D,
    MapError,
    blend_generating_functions,
    standard_generating_function,
    standard_map,
    symplectic_blend_2d,
    twist_map,
)


@pytest.fixture(scope="module")
def spec():
    return GridSpec(2, 64, 1.0)


class TestGeneratingFunction:
    def test_derivatives_match_differences(self):
        S = standard_generating_function(0.3)
        q, qp = np.array([0.1, 0.6]), np.array([0.4, -0.2])
        d, e = S.derivs(q, qp), 1e-6
        assert np.allclose(d["S1"], (S(q + e, qp) - S(q - e, qp)) / (2 * e), atol=1e-8)
        assert np.allclose(d["S2"], (S(q, qp + e) - S(q, qp - e)) / (2 * e), atol=1e-8)
        d1 = S.derivs(q + e, qp)
        assert np.allclose(d["S12"], (d1["S2"] - S.derivs(q - e, qp)["S2"]) / (2 * e), atol=1e-6)

    def test_twist_bound(self):
        assert standard_generating_function(0.3).twist_lower_bound() == pytest.approx(1.0)

    def test_twist_bound_detects_sign_change(self):
        def derivs(q, qp):
            z = np.zeros_like(q + qp)
            return {"S": z, "S1": z, "S2": z, "S11": z, "S12": np.cos(2 * np.pi * q), "S22": z}

        assert GeneratingFunction2D(derivs).twist_lower_bound(64) == 0.0


class TestTwistMap:
    def test_reproduces_standard_map(self, spec):
        h = twist_map(standard_generating_function(0.3), spec)
        assert np.max(np.abs(h.images - standard_map(spec, 0.3).images)) < 1e-12

    def test_implicit_jacobian_is_unimodular(self, spec):
        h = twist_map(standard_generating_function(0.7), spec)
        J = h.jac(h.centers())
        assert np.max(np.abs(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0] - 1.0)) < 1e-12


class TestBlend:
    def test_equal_functions_blend_to_themselves(self, spec):
        S = standard_generating_function(0.2)
        B, _ = blend_generating_functions(S, S, (0.0, 0.25), 0.3)
        q, qp = np.meshgrid(np.linspace(0, 1, 9), np.linspace(-0.5, 0.5, 9))
        for key in ("S1", "S2", "S12"):
            assert np.allclose(B.derivs(q, qp)[key], S.derivs(q, qp)[key], atol=1e-14)

    def test_zones_and_area(self, spec):
        Sf, Sg = standard_generating_function(0.1), standard_generating_function(0.3)
        h, rep = symplectic_blend_2d(Sf, Sg, [0.0, 0.25], 0.3, spec)
        assert rep["inner_cells"] > 0 and rep["outer_cells"] > 0
        assert rep["inner_error"] <= 1e-8 and rep["outer_error"] <= 1e-8
        assert rep["det_residual"] <= 1e-8 and rep["det_residual_implicit"] <= 1e-12

    def test_degenerate_twist_rejected(self, spec):
        Sf, Sg = standard_generating_function(0.1), standard_generating_function(3.0)
        with pytest.raises(MapError) as exc:
            symplectic_blend_2d(Sf, Sg, [0.0, 0.25], 0.3, spec)
        assert exc.value.code == "twist_degenerate"

    def test_period_mismatch(self, spec):
        Sf = standard_generating_function(0.1, 2.0)
        with pytest.raises(MapError) as exc:
            symplectic_blend_2d(Sf, Sf, [0.0, 0.25], 0.3, spec)
        assert exc.value.code == "spec_mismatch"

    def test_radius_bound(self, spec):
        S = standard_generating_function(0.1)
        with pytest.raises(MapError) as exc:
            symplectic_blend_2d(S, S, [0.0, 0.25], 0.6, spec)
        assert exc.value.code == "radius_too_large"
