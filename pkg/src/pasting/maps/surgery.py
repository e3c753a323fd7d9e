"""Conservative surgery of torus maps.

``linearize_at_point`` blends a map with an affine model near a point; the
blend is no longer area preserving, and ``moser_correct`` builds a map
``chi`` with ``det(D chi) * theta(chi) = lambda`` (the Moser trick with the
affine density path ``(1 - t) lambda + t theta``).  ``conservative_paste_map``
composes the two.

Two generators ``w`` with ``div w = lambda - theta`` are available:

* global: one spectral Poisson solve on the torus;
* annulus: an explicit polar construction on ``a <= |y - x| <= b``.  The
  angular mean of ``lambda - theta`` is carried by a radial field and every
  other angular mode by a tangential one, so ``w`` vanishes identically
  off the annulus and ``chi`` is exactly the identity there.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline, RectBivariateSpline

from ..grid import GridSpec, ScalarGrid, pair_increments
from ..regions import bump_profile
from .gridmap import GridMap, MapError, PeriodicSampler, _det

__all__ = [
    "DensityField",
    "Annulus",
    "linearize_at_point",
    "moser_correct",
    "conservative_paste_map",
    "periodic_identity_surgery",
    "holder_convexity",
    "point_det",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Annulus:
    center: tuple
    inner: float
    outer: float

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError(f"need 0 < inner < outer, got {self.inner}, {self.outer}")


def point_det(func, pts, step: float) -> np.ndarray:
    """``det Df`` at ``pts`` (shape ``(2, ...)``) by fourth-order differences of ``func``."""
    pts = np.asarray(pts, dtype=float)
    cols = []
    for j in range(pts.shape[0]):
        e = np.zeros((pts.shape[0],) + (1,) * (pts.ndim - 1))
        e[j] = step
        cols.append((-func(pts + 2 * e) + 8 * func(pts + e) - 8 * func(pts - e) + func(pts - 2 * e)) / (12 * step))
    J = np.stack(cols, axis=1)
    return _det(J)


def _lift_delta(spec: GridSpec, y, x):
    return spec.periodic_delta(y - np.asarray(x, dtype=float).reshape((-1,) + (1,) * (np.ndim(y) - 1)))


def _within(spec: GridSpec, y, x, radius: float) -> np.ndarray:
    return np.sum(_lift_delta(spec, y, x) ** 2, axis=0) < radius**2


class _PolarGenerator:
    """Compactly supported ``w`` with ``div w = lam - theta`` on an annulus."""

    def __init__(self, spec: GridSpec, theta, ann: Annulus):
        self.spec, self.ann = spec, ann
        self.x = np.asarray(ann.center, dtype=float)
        a, b = ann.inner, ann.outer
        h = spec.h
        n_r = 2 * int(np.ceil(4 * (b - a) / h / 2)) + 1
        n_phi = int(2 ** np.ceil(np.log2(max(64, 16 * np.pi * b / h))))
        rho = np.linspace(a, b, n_r)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        R, P = np.meshgrid(rho, phi, indexing="ij")
        pts = self.x.reshape(2, 1, 1) + np.stack([R * np.cos(P), R * np.sin(P)])
        th = theta(pts)
        th0 = th.mean(axis=1)
        # lam makes the radial flux vanish at the outer radius, in the same quadrature
        area = cumulative_simpson(rho, x=rho, initial=0.0)
        mass = cumulative_simpson(th0 * rho, x=rho, initial=0.0)
        self.lam = float(mass[-1] / area[-1])
        flux = self.lam * area - mass  # int_a^rho (lam - theta_0) s ds
        flux[-1] = 0.0
        wr = flux / rho
        # tangential part: angular antiderivative of the non-mean modes
        ghat = np.fft.rfft(self.lam - th, axis=1)
        m = np.arange(ghat.shape[1])
        Hhat = np.zeros_like(ghat)
        Hhat[:, 1:] = ghat[:, 1:] / (1j * m[1:])
        wphi = rho[:, None] * np.fft.irfft(Hhat, n=n_phi, axis=1)
        self._wr = CubicSpline(rho, wr)
        pad = 4
        phi_ext = 2 * np.pi * np.arange(-pad, n_phi + pad) / n_phi
        wphi_ext = np.concatenate([wphi[:, -pad:], wphi, wphi[:, :pad]], axis=1)
        self._wphi = RectBivariateSpline(rho, phi_ext, wphi_ext, kx=3, ky=3)

    def active(self, pts) -> np.ndarray:
        d = np.sqrt(np.sum(_lift_delta(self.spec, pts, self.x) ** 2, axis=0))
        return (d > self.ann.inner) & (d < self.ann.outer)

    def __call__(self, pts) -> np.ndarray:
        delta = _lift_delta(self.spec, pts, self.x)
        rho = np.sqrt(np.sum(delta**2, axis=0))
        phi = np.arctan2(delta[1], delta[0]) % (2 * np.pi)
        inside = (rho > self.ann.inner) & (rho < self.ann.outer)
        rc = np.clip(rho, self.ann.inner, self.ann.outer)
        wr = np.where(inside, self._wr(rc), 0.0)
        wp = np.where(inside, self._wphi.ev(rc, phi), 0.0)
        c, s = delta[0] / rc, delta[1] / rc
        return np.stack([wr * c - wp * s, wr * s + wp * c])


class _SpectralGenerator:
    def __init__(self, spec: GridSpec, theta: np.ndarray, lam: float):
        k1 = 2 * np.pi * np.fft.fftfreq(spec.n, d=spec.h)
        ks = np.meshgrid(*([k1] * spec.dim), indexing="ij")
        k2 = sum(k**2 for k in ks)
        k2.flat[0] = 1.0
        phat = -np.fft.fftn(lam - theta) / k2  # Laplacian(phi) = lam - theta
        phat.flat[0] = 0.0
        w = [np.fft.ifftn(1j * k * phat).real for k in ks]
        self.w = [PeriodicSampler(spec, wa) for wa in w]

    def active(self, pts) -> np.ndarray:
        return np.ones(np.shape(pts)[1:], dtype=bool)

    def __call__(self, pts) -> np.ndarray:
        return np.stack([wa(pts) for wa in self.w])


@dataclass(frozen=True, eq=False)
class DensityField:
    """Density ``theta`` of a map and its target level ``lam``.

    With an ``annulus`` the correction is confined to it, and ``lam`` is the
    annulus mean of ``theta``.
    """

    theta: ScalarGrid
    lam: float
    annulus: Annulus | None = None
    density: object = None  # pointwise theta; defaults to a spline of the grid values

    def __post_init__(self):
        if not np.all(self.theta.values > 0):
            raise MapError("density_nonpositive", f"min theta = {self.theta.values.min():.3e}")
        if not self.lam > 0:
            raise MapError("density_nonpositive", f"lambda = {self.lam}")

    @classmethod
    def of(cls, m: GridMap, annulus: Annulus | None = None) -> "DensityField":
        theta = m.det()
        if m.func is not None and annulus is not None:
            # steep blends need pointwise differences; off the outer disk the grid stencil is kept
            step = 1e-4 * annulus.outer

            def density(pts):
                return point_det(m.func, pts, step)

            y = m.centers()
            near = _within(m.spec, y, annulus.center, annulus.outer + 3 * m.spec.h)
            vals = theta.values.copy()
            vals[near] = density(y[:, near])
            theta = ScalarGrid(m.spec, vals)
        else:
            density = PeriodicSampler(m.spec, theta.values)
        if not np.all(theta.values > 0):
            raise MapError("folded", f"det Dh reaches {theta.values.min():.3e} <= 0; radius too large")
        if annulus is None:
            return cls(theta, float(np.mean(theta.values)), None, density)
        gen = _PolarGenerator(m.spec, density, annulus)
        return cls(theta, gen.lam, annulus, density)


class _MoserFlow:
    """Time-1 flow of ``u_t = w / ((1 - t) lam + t theta)`` by fixed-step RK4."""

    def __init__(self, d: DensityField, steps: int):
        spec = d.theta.spec
        self.spec, self.lam, self.steps = spec, d.lam, steps
        self.theta = d.density if d.density is not None else PeriodicSampler(spec, d.theta.values)
        if d.annulus is None:
            self.w = _SpectralGenerator(spec, d.theta.values, d.lam)
        else:
            self.w = _PolarGenerator(spec, self.theta, d.annulus)

    def velocity(self, y, t):
        rho = (1 - t) * self.lam + t * self.theta(y)
        if np.any(rho <= 0):
            raise MapError("density_nonpositive", "interpolated density path reached zero")
        return self.w(y) / rho

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = pts.copy()
        act = self.w.active(pts)
        if not act.any():
            return out
        y = pts[:, act]
        dt = 1.0 / self.steps
        for i in range(self.steps):
            t = i * dt
            k1 = self.velocity(y, t)
            k2 = self.velocity(y + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = self.velocity(y + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = self.velocity(y + dt * k3, t + dt)
            y = y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[:, act] = y
        return out


def moser_correct(d: DensityField, steps: int = 100, *, tol: float | None = None) -> tuple[GridMap, float]:
    """Map ``chi`` with ``det(D chi) * theta(chi) = lam`` and its sup residual."""
    if steps < 1:
        raise ValueError("steps must be positive")
    spec = d.theta.spec
    if d.annulus is not None and spec.dim != 2:
        raise ValueError("annulus correction is two-dimensional")
    flow = _MoserFlow(d, steps)
    y0 = np.stack(spec.centers())
    chi = GridMap(spec, flow(y0), np.eye(spec.dim), flow, None, "moser")
    if d.annulus is None:
        residual = float(np.max(np.abs(_det(chi.jacobian()) * flow.theta(chi.images) - d.lam)))
    else:
        # pointwise differences: grid stencils cannot resolve the steep blend profile
        act = flow.w.active(y0)
        residual = 0.0
        if act.any():
            ya = y0[:, act]
            detc = point_det(flow, ya, 1e-4 * d.annulus.outer)
            residual = float(np.max(np.abs(detc * flow.theta(chi.images[:, act]) - d.lam)))
    if tol is not None and residual > tol:
        raise MapError("moser_residual", f"residual {residual:.3e} > {tol:.1e}")
    return chi, residual


# --------------------------------------------------------------------------
# linearization blend


def _check_radius(spec: GridSpec, r: float):
    if r < 6 * spec.h:
        raise MapError("radius_too_small", f"r = {r:.4g} is below 6 cells (h = {spec.h:.4g})")
    if r >= spec.L / 4:
        raise MapError("radius_too_large", f"B_r does not fit in a chart: r = {r:.4g} >= L/4")


def _blend_with_model(f: GridMap, x, r: float, A, fx, profile: str = "exp-flat", name=None) -> GridMap:
    """``h = rho * model + (1 - rho) * f`` with ``rho`` = 1 on B_{r/2}(x), 0 off B_r(x)."""
    spec = f.spec
    x = np.asarray(x, dtype=float)
    A = np.asarray(A, dtype=float)
    fx = np.asarray(fx, dtype=float)
    prof = bump_profile(r / 2, profile)
    D = f.degree

    def blend(y, fy):
        delta = _lift_delta(spec, y, x)
        shape = (-1,) + (1,) * (y.ndim - 1)
        # affine model lifted consistently with f's degree away from the base cell
        model = (fx.reshape(shape) + np.einsum("ij,j...->i...", A, delta)
                 + np.einsum("ij,j...->i...", D, y - x.reshape(shape) - delta))
        dist = np.sqrt(np.sum(delta**2, axis=0))
        rho = prof.value((dist - r / 2) / (r / 2))
        return np.where(rho == 1.0, model, np.where(rho == 0.0, fy, rho * model + (1.0 - rho) * fy))

    def func(y):
        return blend(y, f(y))

    return GridMap(spec, blend(f.centers(), f.images), D, func, None, name or f"linearized({f.name})")


def linearize_at_point(f: GridMap, x, r: float, profile: str = "exp-flat") -> tuple[GridMap, DensityField]:
    """Blend ``f`` with its first-order Taylor model at ``x``.

    ``h`` is the affine map ``f(x) + Df(x)(y - x)`` on ``B_{r/2}(x)`` and equals
    ``f`` (bitwise) outside ``B_r(x)``.  Returns ``h`` and its density.
    """
    _check_radius(f.spec, r)
    x = np.asarray(x, dtype=float)
    A = f.jacobian_at(x)
    fx = f(x.reshape(-1, 1))[:, 0]
    h = _blend_with_model(f, x, r, A, fx, profile)
    return h, DensityField.of(h)


# --------------------------------------------------------------------------
# conservative pasting of maps


def holder_convexity(g: ScalarGrid, alpha: float, **kw) -> dict:
    """Hölder seminorm against its C0/Lipschitz interpolation bound, over one pair set."""
    osc, lip, semi = pair_increments(g, alpha, **kw)
    bound = osc ** (1 - alpha) * lip**alpha
    return {"seminorm": semi, "osc": osc, "lip": lip, "bound": bound, "holds": bool(semi <= bound * (1 + 1e-12))}


def _jacobian_holder(Jd: np.ndarray, spec: GridSpec, alpha: float) -> float:
    return max(
        pair_increments(ScalarGrid(spec, Jd[i, j]), alpha)[2]
        for i in range(Jd.shape[0]) for j in range(Jd.shape[1])
    )


def _compose(h: GridMap, chi: GridMap, name: str) -> GridMap:
    def func(y):
        return h(chi(y))

    return GridMap(h.spec, h(chi.images), h.degree, func, None, name)


def _paste_with_model(f: GridMap, x, r, A, fx, *, steps, profile, alpha, name=None):
    spec = f.spec
    h = _blend_with_model(f, x, r, A, fx, profile, name)
    dens = DensityField.of(h, Annulus(tuple(np.asarray(x, dtype=float)), r / 2, r))
    chi, residual = moser_correct(dens, steps)
    g = _compose(h, chi, name or f"pasted({f.name})")

    y = f.centers()
    dist = np.sqrt(np.sum(_lift_delta(spec, y, x) ** 2, axis=0))
    near = dist < r + 3 * spec.h  # g == f bitwise beyond r
    changed = np.any(g.images != f.images, axis=0)
    Jg, Jf = g.jacobian(), f.jacobian()
    Jd = Jg - Jf
    c0 = f.distance_to(g)
    inner, outer = dist <= r / 2, dist >= r
    report = {
        "lambda": dens.lam,
        "moser_residual": residual,
        "det_residual": float(np.max(np.abs(point_det(g, y[:, near], 1e-4 * r) - 1.0))),
        "det_residual_grid": float(np.max(np.abs(_det(Jg) - 1.0))),
        "theta_minus_one_sup": float(np.max(np.abs(dens.theta.values - 1.0))),
        "equals_f_outside_r": bool(np.array_equal(g.images[:, outer], f.images[:, outer])),
        "affine_inside_half_r": bool(np.array_equal(g.images[:, inner], h.images[:, inner])),
        "support_radius": float(dist[changed].max()) if changed.any() else 0.0,
        "c0_distance": c0,
        "c1_distance": c0 + float(np.max(np.abs(Jd))),
        "jacobian_holder_distance": _jacobian_holder(Jd, spec, alpha),
        "alpha": alpha,
    }
    return g, h, report


def _c2_norm(f: GridMap) -> float:
    J = f.jacobian()
    best = 0.0
    for i in range(J.shape[0]):
        for j in range(J.shape[1]):
            for a in range(J.shape[0]):
                dd = (np.roll(J[i, j], -1, axis=a) - np.roll(J[i, j], 1, axis=a)) / (2 * f.spec.h)
                best = max(best, float(np.max(np.abs(dd))))
    return best


def conservative_paste_map(
    f: GridMap,
    x,
    r: float,
    alpha: float = 0.5,
    *,
    steps: int = 40,
    profile: str = "exp-flat",
) -> tuple[GridMap, dict]:
    """Area-preserving ``g = h o chi``: affine on ``B_{r/2}(x)``, equal to ``f`` off ``B_r(x)``.

    ``chi`` is the annulus Moser correction on ``r/2 <= |y - x| <= r``, so
    both equalities are bitwise on grid points.
    """
    _check_radius(f.spec, r)
    x = np.asarray(x, dtype=float)
    A = f.jacobian_at(x)
    fx = f(x.reshape(-1, 1))[:, 0]
    g, h, report = _paste_with_model(f, x, r, A, fx, steps=steps, profile=profile, alpha=alpha)
    c2 = _c2_norm(f)
    report["f_c2"] = c2
    report["c1_bound_reference"] = c2 * r ** (1 - alpha)
    return g, report


def _orbit(f: GridMap, x, n: int) -> np.ndarray:
    pts = [np.asarray(x, dtype=float)]
    for _ in range(n):
        pts.append(f(pts[-1].reshape(-1, 1))[:, 0])
    return np.array(pts)


def _patchwork(f: GridMap, centers, r: float, pieces) -> GridMap:
    """``f`` with ``B_r(centers[j])`` replaced by ``pieces[j]`` (disjoint balls)."""
    spec = f.spec

    def merge(y, fy, evaluate):
        out = fy.copy()
        for c, p in zip(centers, pieces):
            sel = _within(spec, y, c, r)
            if sel.any():
                out[:, sel] = evaluate(p, y, sel)
        return out

    def func(y):
        y = np.asarray(y, dtype=float)
        return merge(y, f(y), lambda p, yy, sel: p(yy[:, sel]))

    images = merge(f.centers(), f.images, lambda p, yy, sel: p.images[:, sel])
    return GridMap(spec, images, f.degree, func, None, f"surgery({f.name})")


def periodic_identity_surgery(
    f: GridMap,
    x,
    period_n: int,
    r: float,
    *,
    steps: int = 40,
    n_samples: int = 400,
    seed: int = 0,
    orbit_tol: float = 1e-8,
    derivative_tol: float = 1e-6,
) -> tuple[GridMap, dict]:
    """Perturb ``f`` along the orbit of a periodic point so that ``g^n = id`` near ``x``.

    Requires the ``n``-step derivative at ``x`` to be (numerically) the
    identity; the last affine model absorbs the remaining mismatch.
    """
    spec = f.spec
    _check_radius(spec, r)
    orbit = _orbit(f, x, period_n)
    gap = spec.periodic_delta(orbit[-1] - orbit[0])
    if np.max(np.abs(gap)) > orbit_tol:
        raise MapError("not_periodic", f"orbit returns within {np.max(np.abs(gap)):.3e} > {orbit_tol:.1e}")
    jacs = [f.jacobian_at(p) for p in orbit[:-1]]
    P = np.eye(spec.dim)
    for A in jacs:
        P = A @ P
    if np.max(np.abs(P - np.eye(spec.dim))) > derivative_tol:
        eig = np.linalg.eigvals(P)
        err = MapError(
            "derivative_not_identity",
            f"D f^{period_n}(x) has eigenvalues {np.round(eig, 6).tolist()}",
        )
        err.eigenvalues = eig
        raise err
    if period_n > 1:
        sep = min(
            float(np.linalg.norm(spec.periodic_delta(orbit[i] - orbit[j])))
            for i in range(period_n) for j in range(i)
        )
        if sep <= 2 * r:
            raise MapError("orbit_too_close", f"orbit points {sep:.4g} apart need r < {sep / 2:.4g}")

    # affine models: exact derivative for all but the last, which closes the loop
    models = [A.copy() for A in jacs]
    prefix = np.eye(spec.dim)
    for A in jacs[:-1]:
        prefix = A @ prefix
    models[-1] = np.linalg.inv(prefix)
    targets = [orbit[j + 1] for j in range(period_n)]
    targets[-1] = orbit[0] + spec.L * np.round((orbit[-1] - orbit[0]) / spec.L)

    # supports are disjoint, so every piece is pasted against f itself
    pieces, reports = [], []
    for j in range(period_n):
        gj, _, rep = _paste_with_model(f, orbit[j], r, models[j], targets[j], steps=steps,
                                       profile="exp-flat", alpha=0.5, name=f"surgery[{j}]")
        pieces.append(gj)
        reports.append(rep)
    g = _patchwork(f, orbit[:period_n], r, pieces)

    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, n_samples)
    rad = (r / 4) * np.sqrt(rng.uniform(0, 1, n_samples))
    y = orbit[0].reshape(-1, 1) + np.stack([rad * np.cos(ang), rad * np.sin(ang)])
    z = y
    for _ in range(period_n):
        z = g(z)
    cert = float(np.max(np.linalg.norm(spec.periodic_delta(z - y), axis=0)))
    return g, {
        "identity_error": cert,
        "orbit": orbit.tolist(),
        "derivative_product": P.tolist(),
        "det_residual": max(rep["det_residual"] for rep in reports),
        "moser_residual": max(rep["moser_residual"] for rep in reports),
        "equals_f_outside_r": all(rep["equals_f_outside_r"] for rep in reports),
    }
