"""Built-in inputs shared by the command line and the acceptance suite."""
from __future__ import annotations

import numpy as np

from .grid import GridSpec, ScalarGrid, VectorGrid, curl_of_stream
from .regions import Ball, build_region_nest

__all__ = [
    "PASTE_CENTER",
    "PASTE_RADII",
    "constant_pair",
    "paste_nest",
    "stream_field",
    "sine_density",
    "rotation_orbit",
]

PASTE_CENTER = (np.pi, np.pi)
PASTE_CORE = 0.5
PASTE_RADII = (0.5, 1.5, 2.3)


def constant_pair(n: int, delta: float, L: float = 2 * np.pi) -> tuple[VectorGrid, VectorGrid]:
    """``X = (1, 0)`` and ``Y = X + delta (1, 0)``."""
    spec = GridSpec(2, n, L)
    return VectorGrid.constant(spec, [1.0, 0.0]), VectorGrid.constant(spec, [1.0 + delta, 0.0])


def paste_core() -> Ball:
    return Ball(PASTE_CENTER, PASTE_CORE)


def paste_nest(spec: GridSpec):
    return build_region_nest(spec, paste_core(), radii=PASTE_RADII)


def stream_field(n: int, L: float = 2 * np.pi) -> VectorGrid:
    """Divergence-free field of the stream function ``sin x sin y + cos(2x + y) / 2``."""
    return curl_of_stream(GridSpec(2, n, L), lambda x, y: np.sin(x) * np.sin(y) + 0.5 * np.cos(2 * x + y))


def sine_density(n: int, amplitude: float = 0.2) -> ScalarGrid:
    """``1 + amplitude sin x sin y`` on the ``2 pi`` torus."""
    spec = GridSpec(2, n, 2 * np.pi)
    x, y = spec.centers()
    return ScalarGrid(spec, 1.0 + amplitude * np.sin(x) * np.sin(y))


def rotation_orbit():
    """Rotation by ``2 pi / 5`` about the centre of the unit torus, and a point of period 5.

    Returns ``(center, angle, r_rigid, r_outer, x, r)``: the map rotates the
    disk of radius ``r_rigid`` rigidly and untwists by ``r_outer``.
    """
    c = np.array([0.5, 0.5])
    return c, 2 * np.pi / 5, 0.3, 0.45, c + np.array([0.18, 0.0]), 0.08
