"""Eigenvalue and cocycle diagnostics for conservative flows.

* ``classify_singularity``: spectral type of the linearization at a zero of a
  divergence-free field in three dimensions.
* ``floquet_multipliers``: monodromy of a periodic orbit from the variational
  equation.
* ``linear_poincare_cocycle`` and ``domination_estimate``: finite-time test
  for a dominated splitting of the flow transverse to the orbit.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .grid import VectorGrid

__all__ = [
    "DiagnosticsError",
    "LinearizationMatrix",
    "SpectralClass",
    "OrbitCocycle",
    "DominationEstimate",
    "FloquetResult",
    "classify_singularity",
    "floquet_multipliers",
    "flow_with_derivative",
    "linear_poincare_cocycle",
    "domination_estimate",
    "rotation_cocycle",
    "grid_field",
    "harmonic_oscillator",
    "cat_suspension",
]

TAGS = (
    "hyperbolic_saddle",
    "elliptic",
    "lorenz_like_expanding",
    "lorenz_like_contracting",
    "saddle_focus",
    "degenerate",
)


class DiagnosticsError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def _jsonable(z):
    z = complex(z)
    return [z.real, z.imag] if z.imag else z.real


# --------------------------------------------------------------------------
# singularities


@dataclass(frozen=True)
class LinearizationMatrix:
    """Derivative of a vector field at a singularity."""

    A: np.ndarray
    trace_tol: float = 1e-8

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] not in (2, 3):
            raise DiagnosticsError("dimension", f"expected a 2x2 or 3x3 matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise DiagnosticsError("non_finite", "matrix has NaN/inf entries")
        object.__setattr__(self, "A", A)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.A, 2))

    def is_trace_free(self) -> bool:
        return abs(np.trace(self.A)) <= self.trace_tol * max(self.norm, 1e-300)


@dataclass
class SpectralClass:
    tag: str
    eigenvalues: np.ndarray
    margins: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "tag": self.tag,
            "eigenvalues": [_jsonable(z) for z in self.eigenvalues],
            "margins": self.margins,
        }


def classify_singularity(A, re_tol: float | None = None) -> SpectralClass:
    """Spectral type of a trace-free 3x3 linearization.

    Real hyperbolic spectra are sorted ``l2 <= l3 <= l1``; the subtype is
    contracting when ``l3 < 0`` (then ``-l3 < l1`` is checked) and expanding
    when ``l3 > 0`` (then ``-l3 > l2``).  ``margins["lorenz"]`` is the slack
    of that inequality.
    """
    M = A if isinstance(A, LinearizationMatrix) else LinearizationMatrix(A)
    if M.A.shape != (3, 3):
        raise DiagnosticsError("dimension", "singularities are classified in dimension 3")
    if not M.is_trace_free():
        raise DiagnosticsError(
            "trace_violation", f"|trace| = {abs(np.trace(M.A)):.3e} exceeds {M.trace_tol:.1e} * |A|"
        )
    tol = 1e-8 * M.norm if re_tol is None else re_tol
    ev = np.linalg.eigvals(M.A)
    re, im = ev.real, ev.imag
    margins = {"min_abs_real": float(np.min(np.abs(re))), "re_tol": tol}
    central = np.abs(re) <= tol
    if central.any():
        tag = "elliptic" if np.any(np.abs(im[central]) > tol) else "degenerate"
        return SpectralClass(tag, ev, margins)
    if np.any(np.abs(im) > tol):
        return SpectralClass("saddle_focus", ev, margins)
    l2, l3, l1 = np.sort(re)
    if l3 < 0:
        slack = l1 + l3  # -l3 < l1
        tag = "lorenz_like_contracting"
    else:
        slack = -(l2 + l3)  # -l3 > l2
        tag = "lorenz_like_expanding"
    margins.update({"lambda1": float(l1), "lambda2": float(l2), "lambda3": float(l3), "lorenz": float(slack)})
    if slack <= 0:
        tag = "hyperbolic_saddle"
    return SpectralClass(tag, np.array([l2, l3, l1]), margins)


# --------------------------------------------------------------------------
# fields and flows


def _fd_jacobian(X: Callable, x, step: float = 1e-6) -> np.ndarray:
    d = x.size
    J = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        J[:, j] = (np.asarray(X(x + e)) - np.asarray(X(x - e))) / (2 * step)
    return J


def grid_field(V: VectorGrid) -> Callable:
    """Cubic-spline evaluation of a staggered grid field at a single point."""
    from .maps.gridmap import PeriodicSampler

    spec = V.spec
    samplers = []
    for a in range(spec.dim):
        off = np.full(spec.dim, 0.5)
        off[a] = 1.0
        samplers.append(PeriodicSampler(spec, V.components[a], offset=off))

    def X(x):
        pts = np.asarray(x, dtype=float).reshape(-1, 1)
        return np.array([s(pts)[0] for s in samplers])

    return X


def harmonic_oscillator():
    """``x' = y, y' = -x`` and its Jacobian."""
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return (lambda x: A @ x), (lambda x: A)


def cat_suspension():
    """``(u' , z') = (B u, 1)`` with ``exp(B) = [[2, 1], [1, 1]]``.

    The time-1 map is the cat matrix on the ``u`` plane, so the orbit of the
    origin closes up with ``z`` taken modulo 1.
    """
    from scipy.linalg import logm

    B = np.real(logm(np.array([[2.0, 1.0], [1.0, 1.0]])))
    J = np.zeros((3, 3))
    J[:2, :2] = B

    def X(x):
        return np.array([B[0] @ x[:2], B[1] @ x[:2], 1.0])

    return X, (lambda x: J)


def flow_with_derivative(X: Callable, x0, T: float, steps: int, jac: Callable | None = None):
    """RK4 for the orbit, its variational equation, and ``int_0^T div X``.

    Returns ``(x_T, M, div_integral)`` with ``M`` the time-``T`` flow derivative.
    """
    x = np.asarray(x0, dtype=float).copy()
    d = x.size
    Jf = jac if jac is not None else (lambda y: _fd_jacobian(X, y))
    M = np.eye(d)
    dt = T / steps
    div = 0.0

    def rhs(y, P):
        J = np.asarray(Jf(y), dtype=float)
        return np.asarray(X(y), dtype=float), J @ P, float(np.trace(J))

    for _ in range(steps):
        k1, m1, t1 = rhs(x, M)
        k2, m2, t2 = rhs(x + 0.5 * dt * k1, M + 0.5 * dt * m1)
        k3, m3, t3 = rhs(x + 0.5 * dt * k2, M + 0.5 * dt * m2)
        k4, m4, t4 = rhs(x + dt * k3, M + dt * m3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        M = M + dt / 6 * (m1 + 2 * m2 + 2 * m3 + m4)
        div += dt / 6 * (t1 + 2 * t2 + 2 * t3 + t4)
    return x, M, div


def _wrap(d, periods):
    if periods is None:
        return d
    P = np.asarray(periods, dtype=float)
    out = d.copy()
    fin = np.isfinite(P)
    out[fin] = d[fin] - P[fin] * np.round(d[fin] / P[fin])
    return out


@dataclass
class FloquetResult:
    multipliers: np.ndarray
    trivial_index: int
    classification: SpectralClass
    monodromy: np.ndarray
    return_error: float
    liouville_product: float
    liouville_expected: float

    def as_dict(self) -> dict:
        return {
            "multipliers": [_jsonable(z) for z in self.multipliers],
            "trivial_index": self.trivial_index,
            "classification": self.classification.as_dict(),
            "monodromy": self.monodromy.tolist(),
            "return_error": self.return_error,
            "liouville_product": self.liouville_product,
            "liouville_expected": self.liouville_expected,
        }


def floquet_multipliers(
    X,
    x0,
    T: float,
    *,
    jac: Callable | None = None,
    steps: int | None = None,
    periods=None,
    return_tol: float = 1e-8,
    unit_tol: float = 1e-6,
    det_tol: float = 1e-6,
) -> FloquetResult:
    """Floquet multipliers of the periodic orbit through ``x0`` with period ``T``.

    ``X`` is a callable field or a ``VectorGrid``.  ``periods`` lists the
    period of each coordinate (``inf`` for unbounded ones) for the return
    check.  The trivial multiplier is the one whose eigenvector is most
    aligned with ``X(x0)``; the orbit is elliptic when any other multiplier
    lies within ``unit_tol`` of the unit circle.
    """
    if isinstance(X, VectorGrid):
        X = grid_field(X)
    x0 = np.asarray(x0, dtype=float)
    steps = steps if steps is not None else 1000
    if steps < 1000:
        raise DiagnosticsError("step_too_coarse", "use at least 1000 steps per period")
    xT, M, div = flow_with_derivative(X, x0, T, steps, jac)
    ret = float(np.max(np.abs(_wrap(xT - x0, periods))))
    if ret > return_tol:
        raise DiagnosticsError("orbit_not_closed", f"orbit returns within {ret:.3e} > {return_tol:.1e}")
    detM = float(np.linalg.det(M))
    expected = float(np.exp(div))
    if abs(detM - expected) > det_tol * max(1.0, abs(expected)):
        raise DiagnosticsError("step_too_coarse", f"det drift {abs(detM - expected):.3e} > {det_tol:.1e}")
    mu, vecs = np.linalg.eig(M)
    v = np.asarray(X(x0), dtype=float)
    vn = v / np.linalg.norm(v)
    align = np.abs(vn @ vecs) / np.linalg.norm(vecs, axis=0)
    triv = int(np.argmin(np.abs(mu - 1.0) + (1.0 - align)))
    others = np.delete(mu, triv)
    gap = float(np.min(np.abs(np.abs(others) - 1.0))) if others.size else np.inf
    tag = "elliptic" if gap <= unit_tol else "hyperbolic_saddle"
    cls = SpectralClass(tag, others, {"unit_circle_gap": gap, "unit_tol": unit_tol})
    return FloquetResult(mu, triv, cls, M, ret, detM, expected)


# --------------------------------------------------------------------------
# cocycles and domination


@dataclass
class OrbitCocycle:
    """2x2 matrices along an orbit with their base points."""

    matrices: np.ndarray
    base_points: np.ndarray | None = None
    dets: np.ndarray | None = None  # volume-corrected step determinants, when known

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=float)
        if m.ndim != 3 or m.shape[1:] != (2, 2):
            raise DiagnosticsError("dimension", f"cocycle matrices must have shape (N, 2, 2), got {m.shape}")
        if np.any(np.abs(np.linalg.det(m)) == 0):
            raise DiagnosticsError("singular", "cocycle contains a singular matrix")
        self.matrices = m

    def __len__(self):
        return len(self.matrices)

    def scaled(self, c: float) -> "OrbitCocycle":
        return OrbitCocycle(c * self.matrices, self.base_points)


def rotation_cocycle(angle: float, n: int) -> OrbitCocycle:
    """Rotations by ``angle * i`` (``i = 0..n-1``); isometric, so never dominated."""
    t = angle * np.arange(n)
    c, s = np.cos(t), np.sin(t)
    return OrbitCocycle(np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], 1))


def _normal_frame(v, E_prev=None) -> np.ndarray:
    """Orthonormal basis (columns) of the plane normal to ``v``.

    With ``E_prev`` the previous frame is projected and re-orthonormalized,
    which keeps consecutive frames close.
    """
    u = v / np.linalg.norm(v)
    if E_prev is None:
        ref = np.eye(3)[:, np.argsort(np.abs(u))[:2]]
    else:
        ref = E_prev
    P = ref - np.outer(u, u @ ref)
    Q, R = np.linalg.qr(P)
    return Q * np.sign(np.diag(R))


def linear_poincare_cocycle(
    X: Callable,
    x0,
    T_step: float,
    n: int,
    *,
    jac: Callable | None = None,
    steps_per_sample: int = 1000,
    min_speed: float = 1e-8,
) -> OrbitCocycle:
    """Time-``T_step`` flow derivatives acting on the normal planes along an orbit."""
    x = np.asarray(x0, dtype=float)
    if x.size != 3:
        raise DiagnosticsError("dimension", "the linear Poincare flow is built for 3D fields")
    v = np.asarray(X(x), dtype=float)
    if np.linalg.norm(v) < min_speed:
        raise DiagnosticsError("near_singularity", f"|X| = {np.linalg.norm(v):.3e} at the base point")
    E = _normal_frame(v)
    mats, pts, dets = [], [x.copy()], []
    for _ in range(n):
        x1, Phi, _ = flow_with_derivative(X, x, T_step, steps_per_sample, jac)
        v1 = np.asarray(X(x1), dtype=float)
        if np.linalg.norm(v1) < min_speed:
            raise DiagnosticsError("near_singularity", f"|X| = {np.linalg.norm(v1):.3e} along the orbit")
        E1 = _normal_frame(v1, E)
        P = E1.T @ Phi @ E
        mats.append(P)
        dets.append(np.linalg.det(P) * np.linalg.norm(v1) / np.linalg.norm(v))
        x, v, E = x1, v1, E1
        pts.append(x.copy())
    return OrbitCocycle(np.array(mats), np.array(pts[:-1]), np.array(dets))


def _log_ratio_series(mats: np.ndarray, start: int, n_max: int) -> np.ndarray:
    """``log(s2 / s1)`` of the products of ``1..n_max`` steps from ``start``.

    The running product is renormalized each step and its determinant is
    tracked in log form, so neither quantity under- or overflows.
    """
    out = np.empty(n_max)
    M = np.eye(2)
    logdet = 0.0
    logscale = 0.0
    for k in range(n_max):
        A = mats[start + k]
        M = A @ M
        logdet += np.log(abs(np.linalg.det(A)))
        c = np.linalg.norm(M, 2)
        M = M / c
        logscale += np.log(c)
        out[k] = logdet - 2 * (logscale + np.log(np.linalg.norm(M, 2)))
    return out


@dataclass
class DominationEstimate:
    C: float
    lam: float
    verdict: str
    ratios: np.ndarray  # shape (base points, n_max)
    fit_residual: float
    window: tuple

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ratios"] = np.asarray(self.ratios).tolist()
        d["window"] = list(self.window)
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def domination_estimate(
    c: OrbitCocycle,
    n_max: int = 20,
    *,
    n_base: int | None = None,
    n_min: int = 5,
    margin: float = 0.05,
    residual_tol: float = 0.1,
    flat_level: float = 0.9,
) -> DominationEstimate:
    """Fit ``s2/s1 <= C lam**n`` for the ``n``-step products of the cocycle.

    The worst ratio over base points is fitted in log scale on
    ``n_min..n_max``; ``C >= 1`` is the smallest constant covering every
    ``n`` in ``1..n_max`` with the fitted ``lam``.
    """
    N = len(c)
    if N < n_max:
        raise DiagnosticsError("too_short", f"cocycle has {N} steps, need n_max = {n_max}")
    n_base = n_base if n_base is not None else N - n_max + 1
    n_base = max(1, min(n_base, N - n_max + 1))
    logs = np.array([_log_ratio_series(c.matrices, i, n_max) for i in range(n_base)])
    worst = logs.max(axis=0)
    ns = np.arange(1, n_max + 1)
    lo = min(n_min, n_max) - 1
    win = slice(lo, n_max)
    if n_max - lo >= 2:
        slope, icpt = np.polyfit(ns[win], worst[win], 1)
        resid = float(np.sqrt(np.mean((worst[win] - (slope * ns[win] + icpt)) ** 2)))
    else:
        slope, resid = float(worst[-1] / n_max), 0.0
    lam = float(min(np.exp(slope), 1.0))
    C = float(max(1.0, np.exp(np.max(worst - ns * np.log(lam)))))
    ratios = np.exp(logs)
    if lam <= 1 - margin and resid <= residual_tol:
        verdict = "dominated"
    elif np.all(ratios >= flat_level):
        verdict = "not_dominated"
    else:
        verdict = "inconclusive"
    return DominationEstimate(C, lam, verdict, ratios, resid, (lo + 1, n_max))
