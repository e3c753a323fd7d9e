"""C1 pasting of divergence-free fields, its support-controlled variant, and
mollifier smoothing.

The pasted field is ``Z = T - v`` where ``T = xi1 Y + (1 - xi1) X`` is the
partition blend and ``v`` solves ``div v = div T`` inside the annulus
``Omega = W \\ V`` with ``v`` zero on every face not interior to Omega.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import (
    GridSpec,
    ScalarGrid,
    SpecMismatchError,
    VectorGrid,
    c1_distance,
    c1_norm,
    divergence,
    holder_norm,
)
from .regions import (
    PartitionPair,
    RegionError,
    RegionNest,
    Slab,
    build_partition,
    build_region_nest,
    face_masks,
)
from .solver import DivergenceProblem, SolveReport, check_compatibility, solve_divergence

__all__ = [
    "PastingRequest",
    "PastingReport",
    "PastingError",
    "blend",
    "paste_c1",
    "paste_support_controlled",
    "gaussian_weights",
    "mollify_divfree",
    "mollify_scalar",
    "smooth_field",
    "support_nest",
    "support_radius",
]

log = logging.getLogger(__name__)


class PastingError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def blend(X: VectorGrid, Y: VectorGrid, partition: PartitionPair) -> tuple[VectorGrid, ScalarGrid]:
    """``T = xi1 Y + (1 - xi1) X`` on faces and its divergence ``g``.

    Faces with ``xi1`` exactly 0 or 1 copy ``X`` or ``Y`` verbatim, so the
    locality certificates downstream are bitwise.
    """
    if X.spec != Y.spec or X.spec != partition.nest.spec:
        raise SpecMismatchError(f"blend inputs live on different grids: {X.spec}, {Y.spec}")
    xi = partition.xi1_faces
    x, y = X.components, Y.components
    T = np.where(xi == 1.0, y, np.where(xi == 0.0, x, x + xi * (y - x)))
    Tg = VectorGrid(X.spec, T)
    return Tg, divergence(Tg)


@dataclass
class PastingRequest:
    X: VectorGrid
    Y: VectorGrid
    nest: RegionNest
    profile: str = "quintic"
    epsilon: float = np.inf
    tol: float = 1e-10
    div_tol: float = 1e-10
    compat_tol: float | None = None
    alpha: float = 0.5
    trace: str = "full"
    with_holder: bool = True

    def __post_init__(self):
        if self.X.spec != self.Y.spec:
            raise SpecMismatchError(f"X on {self.X.spec}, Y on {self.Y.spec}")
        if self.nest.spec != self.X.spec:
            raise SpecMismatchError(f"nest on {self.nest.spec}, fields on {self.X.spec}")
        scale = max(c1_norm(self.X)[0] + c1_norm(self.X)[1], 1.0)
        divx = divergence(self.X).sup()
        divy = float(np.max(np.abs(divergence(self.Y).values[self.nest.u])))
        if divx > self.div_tol * scale or divy > self.div_tol * scale:
            raise PastingError(
                "not_divergence_free",
                f"|div X| = {divx:.3e}, |div Y| on U = {divy:.3e} exceed {self.div_tol:.1e} * {scale:.3g}",
            )


@dataclass
class PastingReport:
    delta_measured: float
    blend_defect: dict
    solve: dict
    distance: dict
    z_equals_y_on_v: bool
    z_equals_x_outside_w: bool
    div_residual: float
    div_residual_ok: bool
    compat_defect: float
    compat_ok: bool
    support_radius: float
    epsilon: float
    epsilon_missed: bool
    c_obs: float
    extra: dict = field(default_factory=dict)

    @property
    def certificates(self) -> dict:
        return {
            "z_equals_y_on_v": self.z_equals_y_on_v,
            "z_equals_x_outside_w": self.z_equals_x_outside_w,
            "div_residual_ok": self.div_residual_ok,
            "compat_ok": self.compat_ok,
            "solver_converged": bool(self.solve.get("converged", True)),
        }

    @property
    def ok(self) -> bool:
        return all(self.certificates.values())

    def as_dict(self) -> dict:
        d = asdict(self)
        d["certificates"] = self.certificates
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, default=float)


def support_radius(D: VectorGrid, nest: RegionNest) -> float:
    """Largest distance to K over faces where ``D`` is nonzero (0 if ``D == 0``)."""
    best = 0.0
    for a in range(D.spec.dim):
        nz = D.components[a] != 0.0
        if nz.any():
            d = nest.distance(tuple(c[nz] for c in D.spec.face_centers(a)))
            best = max(best, float(np.max(d)))
    return best


def _c1_on(V: VectorGrid, cells) -> float:
    c0, jac = c1_norm(V, face_masks(cells))
    return c0 + jac


def _run_paste(X, Y, nest, partition, *, epsilon, tol, compat_tol, alpha, trace, with_holder, delta=None):
    spec = X.spec
    T, g = blend(X, Y, partition)
    gsup = g.sup()
    omega_measure = float(nest.omega.sum() * spec.cell_volume)
    compat = abs(check_compatibility(g, nest))
    ctol = compat_tol if compat_tol is not None else 1e-12 * gsup * omega_measure
    outside = float(np.max(np.abs(g.values[~nest.omega]))) if (~nest.omega).any() else 0.0

    xscale = sum(c1_norm(X))
    if gsup == 0.0:
        v = VectorGrid.zeros(spec)
        solve = SolveReport(0, 0.0, 0.0, 0.0, [], 0.0, 0.0, 0.0, True, trace)
    else:
        # the certificate is a sup bound against |X|, the solver stops on relative l2
        solver_tol = 0.01 * tol * min(1.0, max(xscale, 1.0) / gsup)
        v, solve = solve_divergence(DivergenceProblem(g, nest, tol=solver_tol, trace=trace))
    Z = T - v
    div_res = divergence(Z).sup()
    dist = c1_distance(Z, X, alpha, with_holder=with_holder)
    if delta is None:
        delta = _c1_on(Y - X, nest.u)
    defect = {"c0": gsup, "c1": gsup + _scalar_c1(g), "outside_omega": outside}
    if with_holder and gsup > 0:
        defect["holder_alpha"] = holder_norm(g, alpha)
    report = PastingReport(
        delta_measured=float(delta),
        blend_defect=defect,
        solve=solve.as_dict(),
        distance=dist.as_dict(),
        z_equals_y_on_v=_equal_on_cells(Z, Y, nest.v),
        z_equals_x_outside_w=_equal_on_cells(Z, X, ~nest.w),
        div_residual=div_res,
        div_residual_ok=bool(div_res <= tol * max(xscale, 1.0)),
        compat_defect=compat,
        compat_ok=bool(compat <= ctol),
        support_radius=support_radius(Z - X, nest),
        epsilon=float(epsilon),
        epsilon_missed=bool(dist.c1 > epsilon),
        c_obs=float(dist.c1 / delta) if delta > 0 else 0.0,
    )
    return Z, report


def _scalar_c1(g: ScalarGrid) -> float:
    h = g.spec.h
    return max(
        float(np.max(np.abs(np.roll(g.values, -1, axis=a) - np.roll(g.values, 1, axis=a)))) / (2 * h)
        for a in range(g.spec.dim)
    )


def _equal_on_cells(A: VectorGrid, B: VectorGrid, cells) -> bool:
    """Bitwise equality on every face touching a cell of ``cells``."""
    cells = np.asarray(cells, dtype=bool)
    for a in range(A.spec.dim):
        touch = cells | np.roll(cells, -1, axis=a)
        if not np.array_equal(A.components[a][touch], B.components[a][touch]):
            return False
    return True


def paste_c1(req: PastingRequest) -> tuple[VectorGrid, PastingReport]:
    """Paste ``Y`` (near K) into ``X`` (far away) keeping the result divergence free."""
    partition = build_partition(req.nest, req.profile)
    Z, report = _run_paste(
        req.X, req.Y, req.nest, partition,
        epsilon=req.epsilon, tol=req.tol, compat_tol=req.compat_tol,
        alpha=req.alpha, trace=req.trace, with_holder=req.with_holder,
    )
    if report.epsilon_missed:
        log.info("epsilon missed: |Z - X|_C1 = %.3e > %.3e", report.distance["c1"], req.epsilon)
    return Z, report


def support_nest(spec: GridSpec, K, delta_support: float) -> RegionNest:
    """Nest with ``W`` inside the closed ``delta_support`` neighbourhood of K."""
    h = spec.h
    if delta_support < 6 * h:
        raise PastingError(
            "support_too_small",
            f"delta_support = {delta_support:.4g} is below 6 cells (h = {h:.4g})",
        )
    outer = max(2.5 * h, 0.25 * delta_support)
    r_v = max(2.0 * h, 0.25 * delta_support)
    r_u = delta_support - outer
    try:
        return build_region_nest(spec, K, radii=(r_v, r_u, delta_support))
    except RegionError as exc:
        raise PastingError("support_too_small", str(exc)) from None


def paste_support_controlled(
    X: VectorGrid,
    Y: VectorGrid,
    K,
    delta_support: float,
    epsilon: float = np.inf,
    **kw,
) -> tuple[VectorGrid, PastingReport]:
    """Pasting with ``support(Z - X)`` inside the ``delta_support`` neighbourhood of K."""
    nest = support_nest(X.spec, K, delta_support)
    req = PastingRequest(X, Y, nest, epsilon=epsilon, **kw)
    Z, report = paste_c1(req)
    report.extra["delta_support"] = float(delta_support)
    report.extra["support_ok"] = bool(report.support_radius <= delta_support)
    # input closeness that would give epsilon at the observed constant
    report.extra["required_delta"] = float(epsilon / report.c_obs) if report.c_obs > 0 else float("inf")
    return Z, report


# --------------------------------------------------------------------------
# mollification


def gaussian_weights(spec: GridSpec, eps: float) -> np.ndarray:
    """Normalized periodic Gaussian weights on the 1D lattice offsets ``j h``."""
    j = np.arange(spec.n)
    x = spec.periodic_delta(j * spec.h)
    w = np.exp(-0.5 * (x / eps) ** 2)
    return w / w.sum()


def _gaussian_symbol(spec: GridSpec, eps: float) -> np.ndarray:
    if eps < spec.h * (1 - 1e-12):
        raise ValueError(f"eps = {eps:.4g} is below the grid step {spec.h:.4g}")
    w_hat = np.fft.fft(gaussian_weights(spec, eps)).real  # symmetric kernel: real transform
    symbol = np.ones(spec.shape)
    for a in range(spec.dim):
        shape = [1] * spec.dim
        shape[a] = spec.n
        symbol = symbol * w_hat.reshape(shape)
    return symbol


def mollify_scalar(g: ScalarGrid, eps: float) -> ScalarGrid:
    """Periodic convolution of a scalar grid with the separable discrete Gaussian."""
    symbol = _gaussian_symbol(g.spec, eps)
    return ScalarGrid(g.spec, np.fft.ifftn(np.fft.fftn(g.values) * symbol).real)


def mollify_divfree(X: VectorGrid, eps: float) -> VectorGrid:
    """Componentwise periodic convolution with a separable discrete Gaussian.

    The same kernel is used on every staggered sub-lattice, so convolution
    commutes with the discrete divergence and divergence-free input stays
    divergence free up to roundoff.
    """
    spec = X.spec
    symbol = _gaussian_symbol(spec, eps)
    axes = tuple(range(1, spec.dim + 1))
    out = np.fft.ifftn(np.fft.fftn(X.components, axes=axes) * symbol, axes=axes).real
    return VectorGrid(spec, out)


def _band_partition(spec: GridSpec, axis: int = 0) -> PartitionPair:
    """Two overlapping bands covering the torus: a partition along one axis."""
    L = spec.L
    nest = build_region_nest(spec, Slab(axis, 0.25 * L, 0.05 * L), radii=(0.05 * L, 0.15 * L, 0.15 * L + 3 * spec.h))
    return build_partition(nest, "quintic")


def smooth_field(
    X: VectorGrid,
    eps: float,
    policy: str | None = "bands",
    *,
    tol: float = 1e-10,
    alpha: float = 0.5,
    with_holder: bool = False,
) -> tuple[VectorGrid, PastingReport]:
    """Divergence-free smoothing ``Z`` of ``X`` with ``|Z - X|_C1 -> 0`` as eps -> 0.

    ``policy=None`` mollifies once globally.  ``"bands"`` mollifies at two
    widths (``eps`` and ``eps / 2``), glues them with a partition along x and
    repairs the gluing defect ``grad xi1 . (X1 - X2)`` with the solver.
    """
    spec = X.spec
    X1 = mollify_divfree(X, eps)
    if policy is None:
        dist = c1_distance(X1, X, alpha, with_holder=with_holder)
        div_res = divergence(X1).sup()
        report = PastingReport(
            delta_measured=0.0, blend_defect={"c0": 0.0}, solve={}, distance=dist.as_dict(),
            z_equals_y_on_v=True, z_equals_x_outside_w=True, div_residual=div_res,
            div_residual_ok=bool(div_res <= tol * max(sum(c1_norm(X)), 1.0)),
            compat_defect=0.0, compat_ok=True, support_radius=float("nan"),
            epsilon=float(eps), epsilon_missed=False, c_obs=0.0, extra={"policy": "global"},
        )
        return X1, report
    if policy != "bands":
        raise ValueError(f"unknown smoothing policy {policy!r}")
    X2 = mollify_divfree(X, max(eps / 2, spec.h))
    partition = _band_partition(spec)
    Z, report = _run_paste(
        X2, X1, partition.nest, partition,
        epsilon=np.inf, tol=tol, compat_tol=None, alpha=alpha, trace="full",
        with_holder=with_holder, delta=1.0,
    )
    # measure against the original field, not the coarser mollification
    dist = c1_distance(Z, X, alpha, with_holder=with_holder)
    report.distance = dist.as_dict()
    report.c_obs = 0.0
    report.extra = {"policy": "bands", "eps": float(eps), "eps_inner": float(max(eps / 2, spec.h))}
    return Z, report

