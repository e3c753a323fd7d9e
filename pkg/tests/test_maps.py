"""Grid maps, Moser correction and conservative surgery."""
from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import brentq

from pasting import GridSpec, ScalarGrid
from pasting.maps import (
    Annulus,
    DensityField,
    GridMap,
    MapError,
    cat_map,
    conservative_paste_map,
    disk_rotation,
    identity_map,
    linearize_at_point,
    moser_correct,
    periodic_identity_surgery,
    point_det,
    shear_map,
    standard_map,
    translation_map,
)
from pasting.scenarios import rotation_orbit


@pytest.fixture(scope="module")
def unit128():
    return GridSpec(2, 128, 1.0)


class TestGridMap:
    def test_standard_map_jacobian_matches_differences(self, unit128):
        f = standard_map(unit128, 0.3)
        for x in ([0.1, 0.2], [0.7, 0.9]):
            exact = f.jacobian_at(x)
            g = GridMap(f.spec, f.images, f.degree, f.func, None)
            assert np.allclose(g.jacobian_at(x), exact, atol=1e-9)

    @pytest.mark.parametrize("make", [
        lambda s: standard_map(s, 0.3),
        lambda s: cat_map(s),
        lambda s: shear_map(s, 0.4),
        lambda s: translation_map(s, [0.1, -0.3]),
    ])
    def test_area_preserving_examples(self, unit128, make):
        assert np.max(np.abs(make(unit128).det().values - 1.0)) < 1e-6

    def test_disk_rotation_preserves_area(self, unit128):
        f = disk_rotation(unit128, (0.5, 0.5), 1.0, 0.2, 0.4)
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 1, size=(2, 200))
        assert np.max(np.abs(point_det(f, pts, 1e-4) - 1.0)) < 1e-8

    def test_bad_images_rejected(self, unit128):
        with pytest.raises(MapError) as exc:
            GridMap(unit128, np.zeros((2, 4, 4)), np.eye(2))
        assert exc.value.code == "bad_shape"

    def test_non_integer_degree_rejected(self, unit128):
        with pytest.raises(MapError) as exc:
            GridMap(unit128, identity_map(unit128).images, 0.5 * np.eye(2))
        assert exc.value.code == "bad_degree"


class TestMoser:
    def test_uniform_density_gives_identity(self):
        spec = GridSpec(2, 32)
        d = DensityField(ScalarGrid(spec, np.ones(spec.shape)), 1.0)
        chi, res = moser_correct(d, 10)
        assert res <= 1e-12
        assert np.max(np.abs(chi.images - chi.centers())) <= 1e-12

    def test_one_dimensional_closed_form(self):
        # theta(chi(x)) chi'(x) = lam integrates to Theta(chi(x)) = lam x + c
        spec = GridSpec(1, 256)
        (x,) = spec.centers()
        theta = ScalarGrid(spec, 1 + 0.2 * np.sin(x))
        d = DensityField(theta, float(theta.values.mean()))
        chi, _ = moser_correct(d, 100)
        big_theta = lambda y: y - 0.2 * np.cos(y)  # noqa: E731
        c = big_theta(chi.images[0, 0]) - d.lam * x[0]
        exact = np.array([brentq(lambda y: big_theta(y) - d.lam * xi - c, xi - 1, xi + 1) for xi in x])
        assert np.max(np.abs(exact - chi.images[0])) < 1e-6

    def test_residual_improves_with_resolution(self):
        res = []
        for n, steps in ((64, 25), (128, 50)):
            spec = GridSpec(2, n)
            x, y = spec.centers()
            theta = ScalarGrid(spec, 1 + 0.2 * np.sin(x) * np.sin(y))
            _, r = moser_correct(DensityField(theta, float(theta.values.mean())), steps)
            res.append(r)
        assert res[1] < res[0] / 4

    def test_nonpositive_density_rejected(self):
        spec = GridSpec(2, 16)
        with pytest.raises(MapError) as exc:
            DensityField(ScalarGrid(spec, np.zeros(spec.shape)), 1.0)
        assert exc.value.code == "density_nonpositive"

    def test_tolerance_enforced(self):
        spec = GridSpec(2, 16)
        x, y = spec.centers()
        theta = ScalarGrid(spec, 1 + 0.4 * np.sin(x) * np.sin(y))
        with pytest.raises(MapError) as exc:
            moser_correct(DensityField(theta, float(theta.values.mean())), 2, tol=1e-14)
        assert exc.value.code == "moser_residual"

    def test_annulus_correction_is_local(self, unit128):
        h, _ = linearize_at_point(standard_map(unit128, 0.3), [0.3, 0.4], 0.1)
        ann = Annulus((0.3, 0.4), 0.05, 0.1)
        chi, res = moser_correct(DensityField.of(h, ann), 30)
        dist = np.linalg.norm(unit128.periodic_delta(h.centers() - np.array([0.3, 0.4]).reshape(2, 1, 1)), axis=0)
        moved = np.any(chi.images != chi.centers(), axis=0)
        assert not moved[(dist < 0.05) | (dist > 0.1)].any()
        assert res < 1e-3


class TestLinearize:
    def test_linear_map_is_unchanged(self, unit128):
        f = cat_map(unit128)
        h, dens = linearize_at_point(f, [0.3, 0.4], 0.1)
        assert np.max(np.abs(h.images - f.images)) < 1e-12
        assert np.max(np.abs(dens.theta.values - 1.0)) < 1e-9

    def test_theta_deviation_shrinks_with_radius(self):
        spec = GridSpec(2, 256, 1.0)
        f = standard_map(spec, 0.3)
        devs = [np.max(np.abs(linearize_at_point(f, [0.3, 0.4], r)[1].theta.values - 1)) for r in (0.2, 0.1)]
        assert devs[1] < 0.7 * devs[0]


class TestConservativePaste:
    def test_certificates(self, unit128):
        g, rep = conservative_paste_map(standard_map(unit128, 0.3), [0.3, 0.4], 0.1)
        assert rep["equals_f_outside_r"] and rep["affine_inside_half_r"]
        assert rep["det_residual"] < 1e-3
        assert rep["support_radius"] <= 0.1

    def test_linear_map_is_fixed(self, unit128):
        f = cat_map(unit128)
        g, rep = conservative_paste_map(f, [0.3, 0.4], 0.1)
        assert g.distance_to(f) < 1e-9

    @pytest.mark.parametrize("r,code", [(0.01, "radius_too_small"), (0.3, "radius_too_large")])
    def test_radius_limits(self, unit128, r, code):
        with pytest.raises(MapError) as exc:
            conservative_paste_map(standard_map(unit128, 0.3), [0.3, 0.4], r)
        assert exc.value.code == code


class TestPeriodicSurgery:
    def test_identity_needs_no_change(self):
        spec = GridSpec(2, 64, 1.0)
        f = identity_map(spec)
        g, rep = periodic_identity_surgery(f, [0.5, 0.5], 1, 0.12, steps=10, n_samples=50)
        assert rep["identity_error"] < 1e-12 and g.distance_to(f) < 1e-12

    def test_rotation_period_five(self, unit128):
        c, angle, r_rigid, r_outer, x, r = rotation_orbit()
        f = disk_rotation(unit128, c, angle, r_rigid, r_outer)
        _, rep = periodic_identity_surgery(f, x, 5, r, steps=20, n_samples=100)
        assert rep["identity_error"] <= 1e-9 and rep["equals_f_outside_r"]

    def test_cat_map_rejected_with_its_eigenvalues(self, unit128):
        with pytest.raises(MapError) as exc:
            periodic_identity_surgery(cat_map(unit128), [0.0, 0.0], 1, 0.1)
        assert exc.value.code == "derivative_not_identity"
        ev = sorted(np.abs(exc.value.eigenvalues))
        assert ev == pytest.approx([(3 - 5**0.5) / 2, (3 + 5**0.5) / 2], rel=1e-9)

    def test_orbit_too_close(self, unit128):
        c, angle, r_rigid, r_outer, x, _ = rotation_orbit()
        f = disk_rotation(unit128, c, angle, r_rigid, r_outer)
        with pytest.raises(MapError) as exc:
            periodic_identity_surgery(f, x, 5, 0.12)
        assert exc.value.code == "orbit_too_close"

    def test_non_periodic_point(self, unit128):
        with pytest.raises(MapError) as exc:
            periodic_identity_surgery(translation_map(unit128, [0.1, 0.0]), [0.5, 0.5], 3, 0.1)
        assert exc.value.code == "not_periodic"
