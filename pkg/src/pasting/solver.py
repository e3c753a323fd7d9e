"""Discrete divergence equation ``div v = g`` with ``v`` supported in a region.

The solution is ``v = w * grad(u)`` on the faces interior to the region and
zero everywhere else, where ``u`` solves the masked Neumann problem
``div(w grad u) = g - mean(g)`` by conjugate gradients.  Because every face
touching the complement is zero, extending ``v`` by zero gives an exact
discrete solution on the whole torus.

Two trace modes are offered:

``"normal"``
    ``w == 1``: the l2 minimum-norm solution.  Only the normal trace
    vanishes on the region boundary; the tangential trace is reported.
``"full"``
    ``w`` ramps smoothly from 0 on the boundary to 1 deep inside, which
    makes the whole field vanish (to third order) at the boundary.  ``v`` is
    then minimum-norm for the ``1/w``-weighted inner product.  This is the
    mode the pasting pipelines use: without it the tangential jump makes the
    C1 size of ``v`` grow like ``1/h``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .grid import GridSpec, ScalarGrid, VectorGrid, c1_norm, divergence, gradient
from .regions import RegionNest, face_masks

__all__ = [
    "DivergenceProblem",
    "SolveReport",
    "SolverError",
    "boundary_weights",
    "check_compatibility",
    "solve_divergence",
    "leray_project",
    "region_components",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def _region_mask(spec: GridSpec, region) -> np.ndarray:
    if region is None:
        return np.ones(spec.shape, dtype=bool)
    if isinstance(region, RegionNest):
        return region.omega
    m = np.asarray(region, dtype=bool)
    if m.shape != spec.shape:
        raise ValueError(f"region mask shape {m.shape} does not match grid {spec.shape}")
    return m


def region_components(mask) -> tuple[np.ndarray, int]:
    """Periodic face-connected components. Returns labels (-1 outside) and count."""
    mask = np.asarray(mask, dtype=bool)
    idx = -np.ones(mask.shape, dtype=np.int64)
    cells = np.flatnonzero(mask.ravel())
    idx.ravel()[cells] = np.arange(len(cells))
    rows, cols = [], []
    for a in range(mask.ndim):
        both = mask & np.roll(mask, -1, axis=a)
        rows.append(idx[both])
        cols.append(np.roll(idx, -1, axis=a)[both])
    rows = np.concatenate(rows) if rows else np.array([], dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.array([], dtype=np.int64)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(cells), len(cells)))
    ncomp, lab = connected_components(graph, directed=False)
    labels = -np.ones(mask.shape, dtype=np.int64)
    labels.ravel()[cells] = lab
    return labels, ncomp


def boundary_weights(spec: GridSpec, mask, layer: float | None = None, fraction: float = 1.0) -> np.ndarray:
    """Face weights vanishing on the boundary of ``mask`` and 1 deep inside.

    The weight is a quintic smoothstep of the distance from the face center to
    the complement (nearest outside cell center, minus h/2).  ``layer``
    defaults to ``fraction`` times the largest such distance, so the ramp is
    fixed in physical units.  The default ramp spans the whole half-width of
    the region: narrower ramps are steeper and need finer grids before the
    C1 size of the solution settles.
    """
    mask = np.asarray(mask, dtype=bool)
    interior = face_masks(mask)
    outside = np.argwhere(~mask)
    if len(outside) == 0:
        return interior.astype(float)
    tree = cKDTree((outside + 0.5) * spec.h, boxsize=spec.L)
    dist = np.zeros((spec.dim,) + spec.shape)
    for a in range(spec.dim):
        sel = interior[a]
        pts = np.stack([c[sel] % spec.L for c in spec.face_centers(a)], axis=1)
        d, _ = tree.query(pts)
        dist[a][sel] = d - 0.5 * spec.h
    if layer is None:
        layer = fraction * float(dist.max()) if interior.any() else spec.h
    t = np.clip(dist / layer, 0.0, 1.0)
    w = np.clip(t**3 * (10.0 - 15.0 * t + 6.0 * t**2), 0.0, 1.0)
    return np.where(interior, w, 0.0)


@dataclass
class DivergenceProblem:
    g: ScalarGrid
    region: object = None  # RegionNest, boolean cell mask, or None for the whole torus
    tol: float = 1e-10
    max_iter: int | None = None
    trace: str = "full"
    compat_tol: float | None = None
    face_weights: np.ndarray | None = None
    precondition: bool | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.trace not in ("full", "normal"):
            raise ValueError(f"trace must be 'full' or 'normal', got {self.trace!r}")


@dataclass
class SolveReport:
    iterations: int
    residual_l2: float
    residual_rel: float
    compat_defect: float
    component_defects: list
    outside_defect: float
    boundary_tangential_max: float
    constant_estimate: float
    converged: bool
    trace: str

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def check_compatibility(g: ScalarGrid, region=None) -> float:
    """``sum over region cells of g * h**d``; zero is required for solvability."""
    mask = _region_mask(g.spec, region)
    return float(np.sum(g.values[mask]) * g.spec.cell_volume)


def _apply(u, wf, h):
    """``div(wf * grad u)`` with periodic rolls."""
    out = np.zeros_like(u)
    for a in range(u.ndim):
        flux = wf[a] * (np.roll(u, -1, axis=a) - u)
        out += flux - np.roll(flux, 1, axis=a)
    return out / (h * h)


def solve_divergence(p: DivergenceProblem) -> tuple[VectorGrid, SolveReport]:
    g = p.g
    spec = g.spec
    h = spec.h
    mask = _region_mask(spec, p.region)
    interior = face_masks(mask)
    if p.face_weights is not None:
        wf = np.where(interior, p.face_weights, 0.0)
    elif p.trace == "full":
        wf = boundary_weights(spec, mask)
    else:
        wf = interior.astype(float)
    if np.any(interior & (wf <= 0)):
        raise ValueError("face weights must be positive on interior faces")

    labels, ncomp = region_components(mask)
    inside = labels >= 0
    lab = labels[inside]
    counts = np.bincount(lab, minlength=ncomp).astype(float)
    comp_int = np.bincount(lab, weights=g.values[inside], minlength=ncomp)
    component_defects = [float(x * spec.cell_volume) for x in comp_int]
    compat_defect = float(np.sum(np.abs(comp_int)) * spec.cell_volume)
    gscale = g.sup()
    if p.compat_tol is not None and compat_defect > p.compat_tol:
        raise SolverError(
            "compatibility",
            f"region integral of g is {compat_defect:.3e} > compat_tol {p.compat_tol:.3e}",
        )
    outside_defect = float(np.max(np.abs(g.values[~mask]))) if (~mask).any() else 0.0

    def project(r):
        means = np.bincount(lab, weights=r[inside], minlength=ncomp) / counts
        r[inside] -= means[lab]
        return r

    b = np.zeros(spec.shape)
    b[inside] = g.values[inside]
    project(b)
    b = -b  # solve B u = -g' with B = -div(w grad) (positive semidefinite)

    precond = p.precondition if p.precondition is not None else (p.trace == "full" or p.face_weights is not None)
    diag = np.zeros(spec.shape)
    for a in range(spec.dim):
        diag += wf[a] + np.roll(wf[a], 1, axis=a)
    diag /= h * h
    minv = np.where(inside & (diag > 0), 1.0 / np.where(diag > 0, diag, 1.0), 0.0) if precond else inside.astype(float)

    max_iter = p.max_iter if p.max_iter is not None else 20 * spec.n
    bnorm = float(np.linalg.norm(b))
    u = np.zeros(spec.shape)
    it = 0
    if bnorm > 0:
        r = b.copy()
        z = minv * r
        d = z.copy()
        rz = float(np.vdot(r, z))
        while it < max_iter:
            Bd = -_apply(d, wf, h)
            Bd[~inside] = 0.0
            alpha = rz / float(np.vdot(d, Bd))
            u += alpha * d
            r -= alpha * Bd
            project(r)
            it += 1
            if np.linalg.norm(r) <= p.tol * bnorm:
                break
            z = minv * r
            rz_new = float(np.vdot(r, z))
            d = z + (rz_new / rz) * d
            rz = rz_new

    v = VectorGrid(spec, wf * gradient(ScalarGrid(spec, u)).components)
    # true residual against the mean-adjusted target
    gadj = np.zeros(spec.shape)
    gadj[inside] = g.values[inside]
    project(gadj)
    res = divergence(v).values - gadj
    res_l2 = float(np.sqrt(np.sum(res**2) * spec.cell_volume))
    gnorm = float(np.linalg.norm(gadj))
    res_rel = float(np.linalg.norm(res) / gnorm) if gnorm > 0 else float(np.linalg.norm(res))
    converged = res_rel <= max(p.tol, 1e-14) * 10 if gnorm > 0 else True

    # tangential trace: interior faces with a non-interior neighbour across another axis
    tang = 0.0
    for a in range(spec.dim):
        near = np.zeros(spec.shape, dtype=bool)
        for bx in range(spec.dim):
            if bx != a:
                near |= ~np.roll(interior[a], 1, axis=bx) | ~np.roll(interior[a], -1, axis=bx)
        sel = interior[a] & near
        if sel.any():
            tang = max(tang, float(np.max(np.abs(v.components[a][sel]))))
    c0, jac = c1_norm(v)
    report = SolveReport(
        iterations=it,
        residual_l2=res_l2,
        residual_rel=res_rel,
        compat_defect=compat_defect,
        component_defects=component_defects,
        outside_defect=outside_defect,
        boundary_tangential_max=tang,
        constant_estimate=(c0 + jac) / gscale if gscale > 0 else 0.0,
        converged=bool(converged),
        trace=p.trace if p.face_weights is None else "weighted",
    )
    if not converged:
        raise SolverError(
            "no_convergence",
            f"residual {res_rel:.3e} after {it} iterations (tol {p.tol:.1e})",
        )
    log.debug("divergence solve: %d iterations, residual %.3e", it, res_rel)
    return v, report


def _laplacian_symbol(spec: GridSpec) -> np.ndarray:
    n, h = spec.n, spec.h
    k_full = np.fft.fftfreq(n) * n
    k_half = np.fft.rfftfreq(n) * n
    axes = [k_full] * (spec.dim - 1) + [k_half]
    grids = np.meshgrid(*axes, indexing="ij")
    return -sum((4.0 / h**2) * np.sin(np.pi * k / n) ** 2 for k in grids)


def leray_project(V: VectorGrid) -> VectorGrid:
    """Remove the discrete gradient part of ``V`` with one FFT Poisson solve."""
    spec = V.spec
    dhat = np.fft.rfftn(divergence(V).values)
    lam = _laplacian_symbol(spec)
    lam.flat[0] = 1.0
    uhat = dhat / lam
    uhat.flat[0] = 0.0
    u = np.fft.irfftn(uhat, s=spec.shape, axes=tuple(range(spec.dim)))
    return V - gradient(ScalarGrid(spec, u))
