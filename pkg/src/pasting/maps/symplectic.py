"""Area-preserving blends of twist maps through generating functions.

A twist map ``(q, p) -> (q', p')`` of the torus is generated by ``S(q, q')``
through ``p = -dS/dq`` and ``p' = dS/dq'``.  Any function with nonzero mixed
derivative ``S_12`` generates an area-preserving map, so a bump-weighted
combination of two generating functions gives a conservative map that agrees
with one map where the weight is 1 and with the other where it is 0.

The weight is a bump in the generating coordinates ``(u, v) = (q, q' - q)``,
doubly periodic, so the blend keeps the lift symmetries of standard-type
generating functions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..grid import GridSpec
from ..regions import bump_profile
from .gridmap import GridMap, MapError
from .surgery import point_det

__all__ = [
    "GeneratingFunction2D",
    "standard_generating_function",
    "blend_generating_functions",
    "symplectic_blend_2d",
    "twist_map",
]

_KEYS = ("S", "S1", "S2", "S11", "S12", "S22")


@dataclass(frozen=True, eq=False)
class GeneratingFunction2D:
    """Generating function ``S(q, q')`` with analytic partial derivatives.

    ``derivs(q, qp)`` returns a dict with keys ``S, S1, S2, S11, S12, S22``
    (``1`` is ``q``, ``2`` is ``q'``).  ``L`` is the period of the torus.
    """

    derivs: Callable
    L: float = 1.0
    name: str = "S"

    def __call__(self, q, qp):
        return self.derivs(np.asarray(q, dtype=float), np.asarray(qp, dtype=float))["S"]

    def on_product_grid(self, n: int, key: str = "S") -> np.ndarray:
        """Values on the ``n x n`` lattice of ``(q, q' - q)`` cell centers."""
        c = (np.arange(n) + 0.5) * self.L / n
        Q, V = np.meshgrid(c, c, indexing="ij")
        return self.derivs(Q, Q + V)[key]

    def twist_lower_bound(self, n: int = 256) -> float:
        """``min |S_12|`` over the product lattice, or 0 if ``S_12`` changes sign.

        A positive value means ``q'`` is a well-defined function of ``(q, p)``.
        """
        s12 = self.on_product_grid(n, "S12")
        if s12.min() <= 0 <= s12.max():
            return 0.0
        return float(np.min(np.abs(s12)))


def standard_generating_function(k: float, L: float = 1.0) -> GeneratingFunction2D:
    """``S = (q' - q)**2 / 2 - k L**2 cos(2 pi q / L) / (4 pi**2)``, the standard map's."""
    a = 2 * np.pi / L

    def derivs(q, qp):
        d = qp - q
        one = np.ones(np.broadcast_shapes(np.shape(q), np.shape(qp)))
        return {
            "S": 0.5 * d**2 - k * np.cos(a * q) / a**2,
            "S1": -d + k * np.sin(a * q) / a,
            "S2": d * one,
            "S11": 1.0 + k * np.cos(a * q) * one,
            "S12": -one,
            "S22": one,
        }

    return GeneratingFunction2D(derivs, L, f"standard(k={k})")


class _Weight:
    """Doubly periodic radial bump in ``(u, v) = (q, q' - q)`` with analytic derivatives.

    Equal to 1 on ``B_{r/2}(center)`` and 0 off ``B_r(center)``.
    """

    def __init__(self, center, r: float, L: float, profile: str = "exp-flat"):
        self.c = np.asarray(center, dtype=float)
        self.r, self.L = r, L
        self.prof = bump_profile(r / 2, profile)

    def _delta(self, u, v):
        du = u - self.c[0]
        dv = v - self.c[1]
        return du - self.L * np.round(du / self.L), dv - self.L * np.round(dv / self.L)

    def value(self, q, qp):
        du, dv = self._delta(q, qp - q)
        rho = np.hypot(du, dv)
        return self.prof.value((rho - self.r / 2) / (self.r / 2))

    def derivs(self, q, qp):
        """Value and ``(q, q')`` derivatives up to second order."""
        du, dv = self._delta(q, qp - q)
        rho = np.hypot(du, dv)
        t = (rho - self.r / 2) / (self.r / 2)
        b0 = self.prof.value(t)
        b1 = self.prof.deriv(t) * (2 / self.r)
        b2 = self.prof.deriv2(t) * (4 / self.r**2)
        # b1 and b2 vanish on the plateau, so the safe radius only guards 0/0
        rs = np.where(rho > 0, rho, 1.0)
        eu, ev = du / rs, dv / rs
        Wu, Wv = b1 * eu, b1 * ev
        Wuu = b2 * eu * eu + b1 * (1 - eu * eu) / rs
        Wvv = b2 * ev * ev + b1 * (1 - ev * ev) / rs
        Wuv = b2 * eu * ev - b1 * eu * ev / rs
        # chain rule for u = q, v = q' - q
        return {
            "w": b0,
            "w1": Wu - Wv,
            "w2": Wv,
            "w11": Wuu - 2 * Wuv + Wvv,
            "w12": Wuv - Wvv,
            "w22": Wvv,
        }


def blend_generating_functions(
    Sf: GeneratingFunction2D, Sg: GeneratingFunction2D, center, r: float, profile: str = "exp-flat"
) -> tuple[GeneratingFunction2D, _Weight]:
    """``S = Sf + w (Sg - Sf)`` with ``w`` the bump around ``center`` in ``(q, q' - q)``."""
    if Sf.L != Sg.L:
        raise MapError("spec_mismatch", "generating functions live on different tori")
    W = _Weight(center, r, Sf.L, profile)
    # generating functions are defined up to a constant; pinning Sg - Sf to
    # zero at the bump centre keeps the weight's curvature terms small
    cq, cv = W.c
    offset = float(Sg(cq, cq + cv) - Sf(cq, cq + cv))

    def derivs(q, qp):
        f, g, w = Sf.derivs(q, qp), Sg.derivs(q, qp), W.derivs(q, qp)
        D = {k: g[k] - f[k] for k in _KEYS}
        D["S"] = D["S"] - offset
        return {
            "S": f["S"] + w["w"] * D["S"],
            "S1": f["S1"] + w["w1"] * D["S"] + w["w"] * D["S1"],
            "S2": f["S2"] + w["w2"] * D["S"] + w["w"] * D["S2"],
            "S11": f["S11"] + w["w11"] * D["S"] + 2 * w["w1"] * D["S1"] + w["w"] * D["S11"],
            "S12": (f["S12"] + w["w12"] * D["S"] + w["w1"] * D["S2"]
                    + w["w2"] * D["S1"] + w["w"] * D["S12"]),
            "S22": f["S22"] + w["w22"] * D["S"] + 2 * w["w2"] * D["S2"] + w["w"] * D["S22"],
        }

    return GeneratingFunction2D(derivs, Sf.L, f"blend({Sf.name}, {Sg.name})"), W


def _newton(S: GeneratingFunction2D, q, p, qp0, tol: float, max_iter: int):
    """Solve ``-S1(q, q') = p`` for ``q'`` cell by cell (damped Newton)."""
    qp = qp0.copy()
    scale = 1.0 + np.abs(p)
    for it in range(max_iter):
        d = S.derivs(q, qp)
        F = d["S1"] + p
        if np.all(np.abs(F) <= tol * scale):
            return qp, it
        if np.any(d["S12"] == 0):
            raise MapError("twist_degenerate", "S_12 vanished during the Newton solve")
        step = -F / d["S12"]
        # halve the step wherever the residual would not decrease
        lam = np.ones_like(qp)
        for _ in range(30):
            trial = qp + lam * step
            Ft = S.derivs(q, trial)["S1"] + p
            bad = np.abs(Ft) > np.abs(F)
            if not bad.any():
                break
            lam = np.where(bad, lam / 2, lam)
        qp = qp + lam * step
    d = S.derivs(q, qp)
    F = d["S1"] + p
    if np.all(np.abs(F) <= tol * scale):
        return qp, max_iter
    raise MapError("newton_no_convergence", f"residual {np.max(np.abs(F)):.3e} after {max_iter} iterations")


def twist_map(
    S: GeneratingFunction2D,
    spec: GridSpec,
    *,
    guess: GeneratingFunction2D | None = None,
    tol: float = 1e-13,
    max_iter: int = 50,
    degree=((1, 1), (0, 1)),
    name: str | None = None,
) -> GridMap:
    """The map generated by ``S``, with an exact (implicit-function) Jacobian.

    ``guess`` supplies the starting point of each Newton solve (its own
    solution from ``q' = q + p``); by default ``S`` itself is used.
    """
    if spec.dim != 2:
        raise ValueError("twist maps are two-dimensional")
    start = guess if guess is not None else S

    def solve(y):
        y = np.asarray(y, dtype=float)
        q, p = y[0], y[1]
        qp0, _ = _newton(start, q, p, q + p, tol, max_iter) if start is not S else (q + p, 0)
        qp, _ = _newton(S, q, p, qp0, tol, max_iter)
        return q, qp

    def func(y):
        q, qp = solve(y)
        return np.stack([qp, S.derivs(q, qp)["S2"]])

    def jac(y):
        q, qp = solve(y)
        d = S.derivs(q, qp)
        dqp_dq = -d["S11"] / d["S12"]
        dqp_dp = -1.0 / d["S12"]
        return np.array([
            [dqp_dq, dqp_dp],
            [d["S12"] + d["S22"] * dqp_dq, d["S22"] * dqp_dp],
        ])

    return GridMap.from_function(spec, func, np.asarray(degree), jac, name or f"twist({S.name})")


def symplectic_blend_2d(
    Sf: GeneratingFunction2D,
    Sg: GeneratingFunction2D,
    x,
    r: float,
    spec: GridSpec,
    *,
    profile: str = "exp-flat",
    tol: float = 1e-13,
    max_iter: int = 50,
    det_step: float | None = None,
    twist_margin: float = 1e-3,
) -> tuple[GridMap, dict]:
    """Conservative map equal to the ``Sg``-map near ``x`` and the ``Sf``-map away from it.

    The bump is centred at ``(x_q, q'(x) - x_q)`` in generating coordinates,
    where ``q'(x)`` is the ``Sf``-image of ``x``; zones are reported by the
    weight at each cell's solved ``(q, q')``.
    """
    if spec.L != Sf.L:
        raise MapError("spec_mismatch", f"grid period {spec.L} differs from generating-function period {Sf.L}")
    x = np.asarray(x, dtype=float)
    if not 0 < r < spec.L / 2:
        raise MapError("radius_too_large", f"need 0 < r < L/2, got {r}")
    fmap = twist_map(Sf, spec, tol=tol, max_iter=max_iter, name=Sf.name)
    gmap = twist_map(Sg, spec, guess=Sf, tol=tol, max_iter=max_iter, name=Sg.name)
    x_img = fmap(x.reshape(2, 1))[:, 0]
    S, W = blend_generating_functions(Sf, Sg, (x[0], x_img[0] - x[0]), r, profile)
    twist = S.twist_lower_bound(max(2 * spec.n, 256))
    if twist <= twist_margin:
        raise MapError("twist_degenerate", f"blended S has min |S_12| = {twist:.3e}")
    h = twist_map(S, spec, guess=Sf, tol=tol, max_iter=max_iter, name=f"symplectic_blend({Sf.name}, {Sg.name})")

    y = h.centers()
    q, qp = y[0], h.images[0]
    w = W.value(q, qp)
    inner, outer = w == 1.0, w == 0.0
    err_in = float(np.max(np.abs(h.images - gmap.images)[:, inner])) if inner.any() else 0.0
    err_out = float(np.max(np.abs(h.images - fmap.images)[:, outer])) if outer.any() else 0.0
    det_exact = h.jac(y)
    det_exact = det_exact[0, 0] * det_exact[1, 1] - det_exact[0, 1] * det_exact[1, 0]
    det_fd = point_det(h, y, det_step if det_step is not None else 1e-5 * spec.L)
    report = {
        "twist_lower_bound": twist,
        "inner_cells": int(inner.sum()),
        "outer_cells": int(outer.sum()),
        "inner_error": err_in,
        "outer_error": err_out,
        "det_residual": float(np.max(np.abs(det_fd - 1.0))),
        "det_residual_implicit": float(np.max(np.abs(det_exact - 1.0))),
        "grid_det_residual": float(np.max(np.abs(h.det().values - 1.0))),
        "c0_distance_to_f": h.distance_to(fmap),
    }
    return h, report
