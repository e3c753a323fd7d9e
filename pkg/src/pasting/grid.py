"""Periodic staggered (MAC) grids on flat tori and their discrete calculus.

Scalars live at cell centers ``(i + 1/2) h``.  Component ``a`` of a vector
field lives on the faces normal to axis ``a``; face index ``i`` sits at
``x_a = (i + 1) h``, i.e. between cells ``i`` and ``i + 1``.  With this layout
the forward-difference gradient is exactly the negative adjoint of the
backward-difference divergence, so ``divergence(gradient(u))`` is the usual
periodic 2d+1 point Laplacian.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridSpec",
    "ScalarGrid",
    "VectorGrid",
    "NormReport",
    "SpecMismatchError",
    "divergence",
    "gradient",
    "laplacian",
    "curl_of_stream",
    "inner",
    "jacobian",
    "c1_norm",
    "c1_distance",
    "holder_norm",
    "pair_increments",
]


class SpecMismatchError(ValueError):
    """Two fields that must share a grid do not."""

    code = "spec_mismatch"


@dataclass(frozen=True)
class GridSpec:
    dim: int
    n: int
    L: float = 2.0 * np.pi

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"domain length must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axis_coords(self, offset: float = 0.5) -> np.ndarray:
        return (np.arange(self.n) + offset) * self.h

    def centers(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates, one broadcastable array per axis."""
        x = self.axis_coords(0.5)
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def face_centers(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinates of the faces normal to ``axis``."""
        axes = [self.axis_coords(1.0 if b == axis else 0.5) for b in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def periodic_delta(self, d):
        """Wrap coordinate differences into ``[-L/2, L/2)``."""
        return (np.asarray(d) + 0.5 * self.L) % self.L - 0.5 * self.L


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.spec.shape:
            raise ValueError(f"expected shape {self.spec.shape}, got {v.shape}")
        _check_finite(v, "scalar grid")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ScalarGrid":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "ScalarGrid":
        return cls(spec, np.broadcast_to(fn(*spec.centers()), spec.shape).copy())

    def _same(self, other):
        if isinstance(other, ScalarGrid):
            if other.spec != self.spec:
                raise SpecMismatchError(f"{self.spec} vs {other.spec}")
            return other.values
        return other

    def __add__(self, other):
        return ScalarGrid(self.spec, self.values + self._same(other))

    def __sub__(self, other):
        return ScalarGrid(self.spec, self.values - self._same(other))

    def __mul__(self, other):
        return ScalarGrid(self.spec, self.values * self._same(other))

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return ScalarGrid(self.spec, -self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def total(self) -> float:
        """Integral over the torus (midpoint rule)."""
        return float(np.sum(self.values) * self.spec.cell_volume)


@dataclass(frozen=True, eq=False)
class VectorGrid:
    spec: GridSpec
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=np.float64)
        expected = (self.spec.dim,) + self.spec.shape
        if c.shape != expected:
            raise ValueError(f"expected shape {expected}, got {c.shape}")
        _check_finite(c, "vector grid")
        object.__setattr__(self, "components", c)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "VectorGrid":
        return cls(spec, np.zeros((spec.dim,) + spec.shape))

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "VectorGrid":
        """Sample ``fn(*coords) -> sequence of components`` on the faces.

        Component ``a`` is evaluated at the faces normal to axis ``a``.
        """
        comps = np.empty((spec.dim,) + spec.shape)
        for a in range(spec.dim):
            comps[a] = np.broadcast_to(fn(*spec.face_centers(a))[a], spec.shape)
        return cls(spec, comps)

    @classmethod
    def constant(cls, spec: GridSpec, value) -> "VectorGrid":
        value = np.asarray(value, dtype=float).reshape((spec.dim,) + (1,) * spec.dim)
        return cls(spec, np.broadcast_to(value, (spec.dim,) + spec.shape).copy())

    def _same(self, other):
        if isinstance(other, VectorGrid):
            if other.spec != self.spec:
                raise SpecMismatchError(f"{self.spec} vs {other.spec}")
            return other.components
        return other

    def __add__(self, other):
        return VectorGrid(self.spec, self.components + self._same(other))

    def __sub__(self, other):
        return VectorGrid(self.spec, self.components - self._same(other))

    def __mul__(self, other):
        if isinstance(other, VectorGrid):
            raise TypeError("componentwise product of two vector grids is not defined")
        return VectorGrid(self.spec, self.components * other)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorGrid(self.spec, -self.components)

    def sup(self) -> float:
        return float(np.max(np.abs(self.components)))

    def equals(self, other: "VectorGrid") -> bool:
        """Bitwise equality of the face data."""
        return self.spec == other.spec and np.array_equal(self.components, other.components)


def _require_same(a, b):
    if a.spec != b.spec:
        raise SpecMismatchError(f"grid specs differ: {a.spec} vs {b.spec}")


def divergence(V: VectorGrid) -> ScalarGrid:
    h = V.spec.h
    out = np.zeros(V.spec.shape)
    for a in range(V.spec.dim):
        c = V.components[a]
        out += c - np.roll(c, 1, axis=a)
    return ScalarGrid(V.spec, out / h)


def gradient(u: ScalarGrid) -> VectorGrid:
    h = u.spec.h
    comps = np.stack([np.roll(u.values, -1, axis=a) - u.values for a in range(u.spec.dim)])
    return VectorGrid(u.spec, comps / h)


def curl_of_stream(spec: GridSpec, psi) -> VectorGrid:
    """Discretely divergence-free 2D field ``(d psi/dy, -d psi/dx)``.

    ``psi(x, y)`` is sampled at the cell corners ``((i + 1) h, (j + 1) h)`` and
    differenced along the faces, so ``divergence`` of the result is zero up
    to roundoff.
    """
    if spec.dim != 2:
        raise ValueError("stream functions are only defined in 2D")
    x = spec.axis_coords(1.0)
    P = np.broadcast_to(psi(*np.meshgrid(x, x, indexing="ij")), spec.shape)
    u = (P - np.roll(P, 1, axis=1)) / spec.h
    v = -(P - np.roll(P, 1, axis=0)) / spec.h
    return VectorGrid(spec, np.stack([u, v]))


def laplacian(u: ScalarGrid) -> ScalarGrid:
    return divergence(gradient(u))


def inner(a, b) -> float:
    """Grid inner product ``sum(a * b) * h**d`` for two scalar or two vector grids."""
    _require_same(a, b)
    x = a.values if isinstance(a, ScalarGrid) else a.components
    y = b.values if isinstance(b, ScalarGrid) else b.components
    return float(np.sum(x * y) * a.spec.cell_volume)


def jacobian(V: VectorGrid) -> np.ndarray:
    """Centered-difference Jacobian entries ``J[a, b] = d V_a / d x_b`` on V_a's faces."""
    h = V.spec.h
    d = V.spec.dim
    J = np.empty((d, d) + V.spec.shape)
    for a in range(d):
        for b in range(d):
            c = V.components[a]
            J[a, b] = (np.roll(c, -1, axis=b) - np.roll(c, 1, axis=b)) / (2.0 * h)
    return J


@dataclass(frozen=True)
class NormReport:
    """Norms of a difference field.

    ``c1`` follows the sum convention ``sup|D| + sup|jacobian entries|``; both
    parts are kept so the max convention can be recovered.
    """

    c0: float
    c1: float
    holder_alpha: float
    alpha: float
    jacobian_sup: float = 0.0

    def as_dict(self) -> dict:
        return {
            "c0": self.c0,
            "c1": self.c1,
            "jacobian_sup": self.jacobian_sup,
            "holder_alpha": self.holder_alpha,
            "alpha": self.alpha,
        }


def _masked_jacobian_sup(V: VectorGrid, face_mask) -> float:
    J = jacobian(V)
    if face_mask is None:
        return float(np.max(np.abs(J))) if J.size else 0.0
    best = 0.0
    for a in range(V.spec.dim):
        m = face_mask[a]
        for b in range(V.spec.dim):
            ok = m & np.roll(m, -1, axis=b) & np.roll(m, 1, axis=b)
            if ok.any():
                best = max(best, float(np.max(np.abs(J[a, b][ok]))))
    return best


def c1_norm(V: VectorGrid, face_mask=None) -> tuple[float, float]:
    """Return ``(sup norm, sup of jacobian entries)``, optionally restricted to faces."""
    if face_mask is None:
        c0 = V.sup()
    else:
        face_mask = np.asarray(face_mask, dtype=bool)
        c0 = float(np.max(np.abs(V.components[face_mask]))) if face_mask.any() else 0.0
    return c0, _masked_jacobian_sup(V, face_mask)


def c1_distance(
    A: VectorGrid,
    B: VectorGrid,
    alpha: float = 0.5,
    face_mask=None,
    *,
    with_holder: bool = True,
) -> NormReport:
    """C0 / C1 / Hölder distance between two vector grids.

    ``face_mask`` (shape ``(dim, n, ...)``) restricts the measurement to a set
    of faces; jacobian entries only count where the whole stencil is inside.
    """
    _require_same(A, B)
    D = A - B
    c0, jac = c1_norm(D, face_mask)
    if with_holder:
        hold = max(
            holder_norm(ScalarGrid(D.spec, np.where(face_mask[a], D.components[a], 0.0))
                        if face_mask is not None else ScalarGrid(D.spec, D.components[a]), alpha)
            for a in range(D.spec.dim)
        )
    else:
        hold = float("nan")
    return NormReport(c0=c0, c1=c0 + jac, holder_alpha=hold, alpha=alpha, jacobian_sup=jac)


# --------------------------------------------------------------------------
# Hölder seminorm by pair scanning

_EXHAUSTIVE_LIMIT = 4096
_N_SAMPLES = 1_000_000


def _offsets(spec: GridSpec, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Integer offsets ``s != 0`` with ``|s| h <= radius``, one of each ``±s`` pair."""
    m = int(np.floor(radius / spec.h + 1e-9))
    m = min(m, spec.n // 2 - 1)
    rng = np.arange(-m, m + 1)
    grids = np.meshgrid(*([rng] * spec.dim), indexing="ij")
    S = np.stack([g.ravel() for g in grids], axis=1)
    dist = np.sqrt(np.sum(S.astype(float) ** 2, axis=1)) * spec.h
    keep = (dist > 0) & (dist <= radius * (1 + 1e-12))
    S, dist = S[keep], dist[keep]
    # lexicographic half: first nonzero coordinate positive
    first = np.array([s[np.flatnonzero(s)[0]] for s in S]) if len(S) else np.array([])
    half = first > 0
    return S[half], dist[half]


def pair_increments(
    g: ScalarGrid,
    alpha: float,
    *,
    cutoff: float | None = None,
    seed: int = 0,
    n_samples: int = _N_SAMPLES,
) -> tuple[float, float, float]:
    """Scan grid pairs ``0 < dist <= cutoff`` and return
    ``(max |dg|, max |dg|/dist, max |dg|/dist**alpha)``.

    The pair set is exhaustive when the grid has at most 4096 cells; otherwise
    a fixed-seed sample (half anchored on cells where ``g`` is not locally
    constant, offsets drawn with density ``1/|s|**d``) gives lower bounds.  All three maxima are taken over
    the same pairs.
    """
    spec = g.spec
    cutoff = spec.L / 4 if cutoff is None else cutoff
    S, dist = _offsets(spec, cutoff)
    v = g.values
    if len(S) == 0:
        return 0.0, 0.0, 0.0
    if v.size <= _EXHAUSTIVE_LIMIT:
        osc = lip = hol = 0.0
        for s, d in zip(S, dist):
            diff = np.max(np.abs(v - np.roll(v, tuple(-s), axis=tuple(range(spec.dim)))))
            osc = max(osc, diff)
            lip = max(lip, diff / d)
            hol = max(hol, diff / d**alpha)
        return float(osc), float(lip), float(hol)

    rng = np.random.default_rng(seed)
    flat = v.ravel()
    active = np.zeros(spec.shape, dtype=bool)
    for a in range(spec.dim):
        active |= v != np.roll(v, 1, axis=a)
        active |= v != np.roll(v, -1, axis=a)
    active_idx = np.flatnonzero(active.ravel())
    n_any = n_samples // 2 if active_idx.size else n_samples
    anchors = rng.integers(0, flat.size, size=n_any)
    if active_idx.size:
        anchors = np.concatenate([anchors, active_idx[rng.integers(0, active_idx.size, size=n_samples - n_any)]])
    # equal sampling mass per distance scale: short pairs carry the Lipschitz
    # and small-scale Hölder maxima, and are few among all offsets
    wts = dist ** (-float(spec.dim))
    pick = rng.choice(len(S), size=anchors.size, p=wts / wts.sum())
    sign = np.where(rng.integers(0, 2, size=anchors.size) == 1, 1, -1)
    idx = np.array(np.unravel_index(anchors, spec.shape))
    other = (idx + sign * S[pick].T) % spec.n
    diff = np.abs(flat[anchors] - v[tuple(other)])
    d = dist[pick]
    return float(diff.max()), float(np.max(diff / d)), float(np.max(diff / d**alpha))


def holder_norm(g: ScalarGrid, alpha: float, **kw) -> float:
    """``sup|g| + max |g(x) - g(y)| / dist(x, y)**alpha`` over the scanned pairs."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return g.sup() + pair_increments(g, alpha, **kw)[2]
