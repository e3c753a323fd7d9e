"""Nested regions K ⊂ V ⊂ U ⊂ W on the torus and the partition of unity.

Everything is driven by a continuous, 1-Lipschitz distance ``d_K`` to the
core set K.  Given nest radii ``r_V < r_U < r_W`` the partition function is
``xi1(x) = profile((d_K(x) - r_V) / (r_U - r_V))``, evaluated exactly at face
centers and cell centers.  Masks are chosen so that the discrete blend is
exactly local:

* V holds the cells whose every face has ``d_K <= r_V`` (so ``xi1 == 1``);
* U holds every cell touching a face with ``xi1 > 0``;
* W holds the cells with ``d_K <= r_W``; cells outside W only see ``xi1 == 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .grid import GridSpec, ScalarGrid, VectorGrid, gradient

__all__ = [
    "Ball",
    "Slab",
    "MaskRegion",
    "RegionError",
    "RegionNest",
    "BumpProfile",
    "PartitionPair",
    "bump_profile",
    "build_region_nest",
    "build_partition",
    "face_masks",
]


class RegionError(ValueError):
    code = "region_invalid"


# --------------------------------------------------------------------------
# core-set descriptors


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def distance(self, spec: GridSpec, coords) -> np.ndarray:
        r2 = sum(spec.periodic_delta(x - c) ** 2 for x, c in zip(coords, self.center))
        return np.maximum(np.sqrt(r2) - self.radius, 0.0)


@dataclass(frozen=True)
class Slab:
    """Band ``|x_axis - center| <= half_width`` (periodic)."""

    axis: int
    center: float
    half_width: float

    def distance(self, spec: GridSpec, coords) -> np.ndarray:
        d = np.abs(spec.periodic_delta(coords[self.axis] - self.center)) - self.half_width
        out = np.maximum(d, 0.0)
        return np.broadcast_to(out, np.broadcast_shapes(*(np.shape(c) for c in coords))).copy()


@dataclass(frozen=True, eq=False)
class MaskRegion:
    """Explicit cell mask; distances are exact periodic Euclidean distances
    to the nearest masked cell center."""

    mask: np.ndarray

    def distance(self, spec: GridSpec, coords) -> np.ndarray:
        pts = np.argwhere(np.asarray(self.mask, dtype=bool))
        if len(pts) == 0:
            return np.full(np.shape(coords[0]), np.inf)
        tree = cKDTree((pts + 0.5) * spec.h % spec.L, boxsize=spec.L)
        q = np.stack([np.asarray(c, dtype=float).ravel() % spec.L for c in coords], axis=1)
        d, _ = tree.query(q)
        return d.reshape(np.shape(coords[0]))


# --------------------------------------------------------------------------
# bump profiles


def _logistic_parts(t):
    """For the exp-flat profile: E(t) = 1/t - 1/(1-t), s = sigmoid(E), s(1-s)."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        E = 1.0 / t - 1.0 / (1.0 - t)
        e = np.exp(-np.abs(E))
        s = np.where(E >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        ds = e / (1.0 + e) ** 2
    return E, s, ds


@dataclass(frozen=True)
class BumpProfile:
    """Radial profile: 1 at normalized distance ``t <= 0``, 0 at ``t >= 1``.

    ``c1_bound`` and ``c2_bound`` bound the first two derivatives with respect
    to physical distance, i.e. ``max|p'| / r`` and ``max|p''| / r**2``.
    """

    r: float
    kind: str
    c1_bound: float
    c2_bound: float

    def value(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        if self.kind == "quintic":
            return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)
        _, s, _ = _logistic_parts(t)
        return np.where(t <= 0.0, 1.0, np.where(t >= 1.0, 0.0, s))

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t > 0.0) & (t < 1.0)
        tc = np.clip(t, 0.0, 1.0)
        if self.kind == "quintic":
            d = -30.0 * tc**2 * (1.0 - tc) ** 2
        else:
            tt = np.where(inside, tc, 0.5)
            E, _, ds = _logistic_parts(tt)
            dE = -1.0 / tt**2 - 1.0 / (1.0 - tt) ** 2
            d = ds * dE
        return np.where(inside, d, 0.0)

    def deriv2(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t > 0.0) & (t < 1.0)
        tc = np.clip(t, 0.0, 1.0)
        if self.kind == "quintic":
            d = -60.0 * tc * (1.0 - tc) * (1.0 - 2.0 * tc)
        else:
            tt = np.where(inside, tc, 0.5)
            E, s, ds = _logistic_parts(tt)
            dE = -1.0 / tt**2 - 1.0 / (1.0 - tt) ** 2
            d2E = 2.0 / tt**3 - 2.0 / (1.0 - tt) ** 3
            d = ds * (1.0 - 2.0 * s) * dE**2 + ds * d2E
        return np.where(inside, d, 0.0)

    def __call__(self, dist):
        return self.value(np.asarray(dist, dtype=float) / self.r)


_EXP_FLAT_BOUNDS = None


def _exp_flat_bounds():
    global _EXP_FLAT_BOUNDS
    if _EXP_FLAT_BOUNDS is None:
        probe = BumpProfile(1.0, "exp-flat", 0.0, 0.0)
        t = np.linspace(0.0, 1.0, 200_001)
        # dense-sampling maxima, padded for the gaps between samples
        _EXP_FLAT_BOUNDS = (
            float(np.max(np.abs(probe.deriv(t)))) * (1 + 1e-6),
            float(np.max(np.abs(probe.deriv2(t)))) * (1 + 1e-4),
        )
    return _EXP_FLAT_BOUNDS


def bump_profile(r: float, kind: str = "quintic") -> BumpProfile:
    if not r > 0:
        raise ValueError(f"profile radius must be positive, got {r}")
    if kind == "quintic":
        return BumpProfile(r, kind, 15.0 / 8.0 / r, 10.0 / np.sqrt(3.0) / r**2)
    if kind == "exp-flat":
        b1, b2 = _exp_flat_bounds()
        return BumpProfile(r, kind, b1 / r, b2 / r**2)
    raise ValueError(f"unknown profile kind {kind!r}")


# --------------------------------------------------------------------------
# region nest


def face_masks(cell_mask) -> np.ndarray:
    """Faces whose two adjacent cells are both in ``cell_mask``."""
    m = np.asarray(cell_mask, dtype=bool)
    return np.stack([m & np.roll(m, -1, axis=a) for a in range(m.ndim)])


def touching_faces(cell_mask) -> np.ndarray:
    """Faces with at least one adjacent cell in ``cell_mask``."""
    m = np.asarray(cell_mask, dtype=bool)
    return np.stack([m | np.roll(m, -1, axis=a) for a in range(m.ndim)])


@dataclass(frozen=True, eq=False)
class RegionNest:
    spec: GridSpec
    core: object
    radii: tuple[float, float, float]
    k: np.ndarray
    v: np.ndarray
    u: np.ndarray
    w: np.ndarray
    omega: np.ndarray
    boundary_faces: tuple[np.ndarray, ...] = field(repr=False)

    def distance(self, coords) -> np.ndarray:
        return self.core.distance(self.spec, coords)

    def summary(self) -> dict:
        h = self.spec.h
        return {
            "radii": list(self.radii),
            "cells": {name: int(getattr(self, name).sum()) for name in ("k", "v", "u", "w", "omega")},
            "omega_measure": float(self.omega.sum() * self.spec.cell_volume),
            # staircase boundary: number of faces on the boundary of omega
            "omega_boundary_faces": int(sum(len(b) for b in self.boundary_faces)),
            "transition_cells": (self.radii[1] - self.radii[0]) / h,
        }


def build_region_nest(
    spec: GridSpec,
    k,
    margin_cells: int = 4,
    width_cells: int | None = None,
    *,
    radii: tuple[float, float, float] | None = None,
) -> RegionNest:
    """Build K ⊂ V ⊂ U ⊂ W around the core descriptor ``k``.

    ``k`` is a :class:`Ball`, :class:`Slab`, :class:`MaskRegion` or a boolean
    array.  Radii (distances from K) default to ``r_V = margin``,
    ``r_U = r_V + width``, ``r_W = r_U + margin`` in cells; ``width`` defaults
    to twice the margin.  Pass ``radii`` to fix the geometry in physical units.
    """
    if isinstance(k, np.ndarray):
        if k.shape != spec.shape:
            raise RegionError(f"mask shape {k.shape} does not match grid {spec.shape}")
        k = MaskRegion(k.astype(bool))
    h = spec.h
    if radii is None:
        if margin_cells < 2:
            raise RegionError("margins must be at least 2 cells")
        width_cells = 2 * margin_cells if width_cells is None else width_cells
        r_v = margin_cells * h
        r_u = r_v + width_cells * h
        r_w = r_u + margin_cells * h
    else:
        r_v, r_u, r_w = (float(r) for r in radii)
    if not (r_v >= 2 * h - 1e-12 and r_u - r_v >= 2 * h - 1e-12 and r_w - r_u >= 2.5 * h - 1e-12):
        raise RegionError(
            f"nest radii {r_v:.4g} < {r_u:.4g} < {r_w:.4g} need 2-cell gaps (h = {h:.4g})"
        )

    d = k.distance(spec, spec.centers())
    kmask = d <= 0.0
    if isinstance(k, MaskRegion):
        kmask = np.asarray(k.mask, dtype=bool)
    if not kmask.any():
        raise RegionError("core set K is empty")
    v = d <= r_v - 0.5 * h
    u = d < r_u + 0.5 * h
    w = d <= r_w
    if w.all():
        raise RegionError("K too large: W covers the whole torus, no room for the exterior")
    if not ((v & ~kmask).any() and (u & ~v).any() and (w & ~u).any()):
        raise RegionError("nest is not strictly increasing at this resolution")
    omega = w & ~v
    boundary = tuple(np.argwhere(omega != np.roll(omega, -1, axis=a)) for a in range(spec.dim))
    return RegionNest(spec, k, (r_v, r_u, r_w), kmask | (d <= 0.0), v, u, w, omega, boundary)


# --------------------------------------------------------------------------
# partition of unity


@dataclass(frozen=True, eq=False)
class PartitionPair:
    xi1: ScalarGrid
    xi2: ScalarGrid
    grad_xi1: VectorGrid
    xi1_faces: np.ndarray
    profile: BumpProfile
    nest: RegionNest

    def xi2_faces(self) -> np.ndarray:
        return 1.0 - self.xi1_faces

    def check(self) -> dict:
        """Evaluate the partition invariants; every value should be True."""
        nest = self.nest
        x1 = self.xi1.values
        outside_omega = ~touching_faces(nest.omega)
        fv = touching_faces(nest.v)
        fout = touching_faces(~nest.w)
        return {
            "sum_is_one": bool(np.all(self.xi1.values + self.xi2.values == 1.0)),
            "bounded": bool(np.all((x1 >= 0) & (x1 <= 1))),
            "one_on_v": bool(np.all(x1[nest.v] == 1.0)),
            "zero_outside_w": bool(np.all(x1[~nest.w] == 0.0)),
            "faces_one_on_v": bool(np.all(self.xi1_faces[fv] == 1.0)),
            "faces_zero_outside_w": bool(np.all(self.xi1_faces[fout] == 0.0)),
            "faces_supported_in_u": bool(np.all(self.xi1_faces[~face_masks(nest.u)] == 0.0)),
            "gradient_in_omega": bool(np.all(self.grad_xi1.components[outside_omega] == 0.0)),
        }


def build_partition(nest: RegionNest, profile: BumpProfile | str = "quintic") -> PartitionPair:
    spec = nest.spec
    r_v, r_u, _ = nest.radii
    width = r_u - r_v
    if width < 2 * spec.h - 1e-12:
        raise RegionError("transition annulus thinner than 2 cells")
    if isinstance(profile, str):
        profile = bump_profile(width, profile)
    if profile.r > width * (1 + 1e-12):
        raise RegionError(f"profile radius {profile.r:.4g} exceeds the transition width {width:.4g}")

    xi1 = profile(nest.distance(spec.centers()) - r_v)
    faces = np.stack([profile(nest.distance(spec.face_centers(a)) - r_v) for a in range(spec.dim)])
    xi1_grid = ScalarGrid(spec, xi1)
    return PartitionPair(
        xi1=xi1_grid,
        xi2=ScalarGrid(spec, 1.0 - xi1),
        grad_xi1=gradient(xi1_grid),
        xi1_faces=faces,
        profile=profile,
        nest=nest,
    )
