"""Torus maps sampled at cell centers, plus a small library of built-in maps.

A map ``f`` of the torus ``R^d / (L Z)^d`` is stored through a lift: ``images``
holds ``f(y)`` in the plane for every cell center ``y``.  The lift satisfies
``f(y + L m) = f(y) + L * degree @ m`` for integer vectors ``m``, so
``f(y) - degree @ y`` is a periodic function and can be differenced safely.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter

from ..grid import GridSpec, ScalarGrid

__all__ = [
    "GridMap",
    "MapError",
    "PeriodicSampler",
    "fd_jacobian",
    "cat_map",
    "standard_map",
    "shear_map",
    "disk_rotation",
    "identity_map",
    "translation_map",
    "linear_map",
]


class MapError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def _fd4(P: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order centered periodic difference along ``axis``."""
    return (
        -np.roll(P, -2, axis=axis) + 8 * np.roll(P, -1, axis=axis)
        - 8 * np.roll(P, 1, axis=axis) + np.roll(P, 2, axis=axis)
    ) / (12.0 * h)


def fd_jacobian(periodic_part: np.ndarray, degree: np.ndarray, h: float) -> np.ndarray:
    """Jacobian ``J[i, j] = d f_i / d y_j`` from the periodic part of a lift."""
    d = periodic_part.shape[0]
    J = np.empty((d, d) + periodic_part.shape[1:])
    for i in range(d):
        for j in range(d):
            J[i, j] = _fd4(periodic_part[i], j, h) + degree[i, j]
    return J


def _det(J: np.ndarray) -> np.ndarray:
    if J.shape[0] == 1:
        return J[0, 0]
    if J.shape[0] == 2:
        return J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    return np.linalg.det(np.moveaxis(J, (0, 1), (-2, -1)))


class PeriodicSampler:
    """Cubic-spline evaluation of periodic grid data at arbitrary points.

    ``offset`` gives the sample positions ``(i + offset[a]) h`` along each
    axis (0.5 for cell centers, 1.0 on the normal axis of a face array).
    """

    def __init__(self, spec: GridSpec, values, offset=None, order: int = 3):
        self.spec = spec
        self.order = order
        self.offset = np.full(spec.dim, 0.5) if offset is None else np.asarray(offset, dtype=float)
        self.coeffs = spline_filter(np.asarray(values, dtype=float), order=order, mode="grid-wrap")
        self.zero = not np.any(values)

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        shape = pts.shape[1:]
        if self.zero:
            return np.zeros(shape)
        idx = np.stack([pts[a].ravel() / self.spec.h - self.offset[a] for a in range(self.spec.dim)])
        out = map_coordinates(self.coeffs, idx, order=self.order, mode="grid-wrap", prefilter=False)
        return out.reshape(shape)


@dataclass(frozen=True, eq=False)
class GridMap:
    """A torus map sampled at cell centers.

    ``func`` (optional) evaluates the same lift at arbitrary points given as
    an array of shape ``(d, ...)``; ``jac`` (optional) returns its exact
    Jacobian with shape ``(d, d, ...)``.
    """

    spec: GridSpec
    images: np.ndarray
    degree: np.ndarray
    func: Callable | None = None
    jac: Callable | None = None
    name: str = "map"

    def __post_init__(self):
        imgs = np.asarray(self.images, dtype=float)
        if imgs.shape != (self.spec.dim,) + self.spec.shape:
            raise MapError("bad_shape", f"images have shape {imgs.shape}")
        if not np.all(np.isfinite(imgs)):
            raise MapError("non_finite", "map images contain NaN/inf")
        deg = np.asarray(self.degree)
        if deg.shape != (self.spec.dim, self.spec.dim) or not np.array_equal(deg, np.round(deg)):
            raise MapError("bad_degree", f"degree must be an integer {self.spec.dim}x{self.spec.dim} matrix")
        object.__setattr__(self, "images", imgs)
        object.__setattr__(self, "degree", deg.astype(float))

    @classmethod
    def from_function(cls, spec: GridSpec, func, degree, jac=None, name: str = "map") -> "GridMap":
        y = np.stack(spec.centers())
        return cls(spec, func(y), np.asarray(degree), func, jac, name)

    def centers(self) -> np.ndarray:
        return np.stack(self.spec.centers())

    def periodic_part(self) -> np.ndarray:
        return self.images - np.einsum("ij,j...->i...", self.degree, self.centers())

    def jacobian(self) -> np.ndarray:
        """Fourth-order finite-difference Jacobian, shape ``(d, d, n, ...)``."""
        return fd_jacobian(self.periodic_part(), self.degree, self.spec.h)

    def det(self) -> ScalarGrid:
        return ScalarGrid(self.spec, _det(self.jacobian()))

    def __call__(self, pts) -> np.ndarray:
        if self.func is None:
            raise MapError("no_evaluator", f"{self.name} has no off-grid evaluator")
        return self.func(np.asarray(pts, dtype=float))

    def jacobian_at(self, x, step: float = 1e-4) -> np.ndarray:
        """Jacobian at a single point: exact if available, else 4th-order differences of ``func``."""
        x = np.asarray(x, dtype=float)
        if self.jac is not None:
            return np.asarray(self.jac(x.reshape(-1, 1)))[..., 0]
        d = x.size
        J = np.empty((d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = step
            pts = np.stack([x + 2 * e, x + e, x - e, x - 2 * e], axis=1)
            f = self(pts)
            J[:, j] = (-f[:, 0] + 8 * f[:, 1] - 8 * f[:, 2] + f[:, 3]) / (12 * step)
        return J

    def distance_to(self, other: "GridMap", mask=None) -> float:
        """Sup distance between two maps on the torus (optionally on a cell mask)."""
        d = self.spec.periodic_delta(self.images - other.images)
        d = np.sqrt(np.sum(d**2, axis=0))
        if mask is not None:
            d = d[np.asarray(mask, dtype=bool)]
        return float(d.max()) if d.size else 0.0


# --------------------------------------------------------------------------
# built-in maps


def linear_map(spec: GridSpec, A, name: str = "linear") -> GridMap:
    A = np.asarray(A, dtype=float)

    def func(y):
        return np.einsum("ij,j...->i...", A, y)

    def jac(y):
        return np.broadcast_to(A.reshape(A.shape + (1,) * (y.ndim - 1)), A.shape + y.shape[1:])

    return GridMap.from_function(spec, func, np.round(A), jac, name)


def cat_map(spec: GridSpec) -> GridMap:
    return linear_map(spec, [[2.0, 1.0], [1.0, 1.0]], name="cat")


def identity_map(spec: GridSpec) -> GridMap:
    return linear_map(spec, np.eye(spec.dim), name="identity")


def translation_map(spec: GridSpec, shift) -> GridMap:
    shift = np.asarray(shift, dtype=float)

    def func(y):
        return y + shift.reshape((-1,) + (1,) * (y.ndim - 1))

    def jac(y):
        eye = np.eye(spec.dim)
        return np.broadcast_to(eye.reshape(eye.shape + (1,) * (y.ndim - 1)), eye.shape + y.shape[1:])

    return GridMap.from_function(spec, func, np.eye(spec.dim), jac, "translation")


def standard_map(spec: GridSpec, k: float) -> GridMap:
    """``(x, y) -> (x + y', y')`` with ``y' = y + k L sin(2 pi x / L) / (2 pi)``.

    With ``L = 1`` this is the usual Chirikov standard map.
    """
    L = spec.L
    c = k / (2 * np.pi)

    def func(y):
        kick = c * L * np.sin(2 * np.pi * y[0] / L)
        p = y[1] + kick
        return np.stack([y[0] + p, p])

    def jac(y):
        dk = k * np.cos(2 * np.pi * y[0] / L)
        one = np.ones_like(dk)
        return np.array([[one + dk, one], [dk, one]])

    return GridMap.from_function(spec, func, np.array([[1, 1], [0, 1]]), jac, f"standard(k={k})")


def shear_map(spec: GridSpec, a: float = 0.5, y0: float = 0.0) -> GridMap:
    """``(x, y) -> (x + a L (1 - cos(2 pi (y - y0) / L)) / (2 pi), y)``.

    Every point on the line ``y = y0`` is fixed with identity derivative.
    """
    L = spec.L

    def func(y):
        s = 2 * np.pi * (y[1] - y0) / L
        return np.stack([y[0] + a * L * (1 - np.cos(s)) / (2 * np.pi), y[1]])

    def jac(y):
        s = 2 * np.pi * (y[1] - y0) / L
        one, zero = np.ones_like(s), np.zeros_like(s)
        return np.array([[one, a * np.sin(s)], [zero, one]])

    return GridMap.from_function(spec, func, np.eye(2), jac, f"shear(a={a})")


def _quintic_step(t):
    t = np.clip(t, 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t**2)


def disk_rotation(spec: GridSpec, center, angle: float, r_rigid: float, r_outer: float) -> GridMap:
    """Rotation by ``angle`` about ``center`` on the disk of radius ``r_rigid``,
    untwisting to the identity at ``r_outer``.

    Rotating each circle about the center by a radius-dependent angle keeps
    area, so the map is conservative everywhere.
    """
    if not 0 < r_rigid < r_outer < spec.L / 2:
        raise ValueError("need 0 < r_rigid < r_outer < L/2")
    c = np.asarray(center, dtype=float)

    def func(y):
        d = spec.periodic_delta(y - c.reshape((2,) + (1,) * (y.ndim - 1)))
        rho = np.sqrt(d[0] ** 2 + d[1] ** 2)
        phi = angle * _quintic_step((rho - r_rigid) / (r_outer - r_rigid))
        cs, sn = np.cos(phi), np.sin(phi)
        return y + np.stack([(cs - 1) * d[0] - sn * d[1], sn * d[0] + (cs - 1) * d[1]])

    return GridMap.from_function(spec, func, np.eye(2), None, f"disk_rotation({angle:.4g})")
