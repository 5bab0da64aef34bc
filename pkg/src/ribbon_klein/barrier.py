"""Smoothed oblique gate barrier and its projection onto transverse modes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ribbon import ModeSpace, RibbonGeometry


@dataclass(frozen=True)
class BarrierSpec:
    """Barrier height ``V0`` (eV), plateau-to-plateau length ``D`` and
    transition length ``d`` (angstrom), and tilt ``theta`` (radians)."""

    V0: float
    D: float
    d: float
    theta: float = 0.0

    def __post_init__(self):
        if self.D < 0 or self.d < 0:
            raise ValueError("barrier lengths D and d must be non-negative")
        if not abs(self.theta) < math.pi / 2:
            raise ValueError("|theta| must be below pi/2")

    def reach(self, geom: RibbonGeometry) -> float:
        """Largest ``|y|`` at which the barrier is nonzero anywhere across the ribbon."""
        x_offset = geom.effective_width - geom.W / 2.0
        return (self.D + self.d) / 2.0 + x_offset * abs(math.tan(self.theta))


def profile_1d(y, spec: BarrierSpec):
    """Barrier profile along the ribbon axis with a half-sine transition of length ``d``."""
    ay = np.abs(np.asarray(y, dtype=float))
    inner = (spec.D - spec.d) / 2.0
    outer = (spec.D + spec.d) / 2.0
    shape = np.ones_like(ay) if spec.d == 0 else 0.5 * (1.0 - np.sin(np.pi * (2.0 * ay - spec.D) / (2.0 * spec.d)))
    shape = np.where(ay <= inner, 1.0, np.where(ay >= outer, 0.0, shape))
    out = spec.V0 * shape
    return float(out) if out.ndim == 0 else out


def oblique_value(x, y, spec: BarrierSpec, W: float):
    """``V(x, y)`` for the barrier tilted by ``theta`` about ``x = W/2``."""
    shifted = np.asarray(y, dtype=float) - (np.asarray(x, dtype=float) - W / 2.0) * math.tan(spec.theta)
    return profile_1d(shifted, spec)


GAUSS_NODES = 24


def _breakpoints(y: float, spec: BarrierSpec, geom: RibbonGeometry) -> list[float]:
    """Points in ``x`` where the barrier profile stops being smooth at row ``y``."""
    width = geom.effective_width
    t = math.tan(spec.theta)
    if t == 0:
        return [0.0, width]
    kinks = {0.0, (spec.D - spec.d) / 2.0, (spec.D + spec.d) / 2.0}
    # a near-zero tilt sends kinks to +-inf, which the range filter drops
    with np.errstate(over="ignore"):
        xs = {geom.W / 2.0 + (y - s * u) / t for u in kinks for s in (1, -1)}
    return [0.0] + sorted(x for x in xs if 0.0 < x < width) + [width]


def _gauss_nodes(y: float, spec: BarrierSpec, geom: RibbonGeometry, quad_pts: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes, ``quad_pts`` per a0 on average, split at profile kinks."""
    ref_x, ref_w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    panel = GAUSS_NODES * geom.constants.a0 / quad_pts
    xs, ws = [], []
    edges = _breakpoints(y, spec, geom)
    for lo, hi in zip(edges[:-1], edges[1:]):
        n_panels = max(1, int(math.ceil((hi - lo) / panel)))
        cuts = np.linspace(lo, hi, n_panels + 1)
        half = np.diff(cuts)[:, None] / 2.0
        mid = (cuts[:-1] + cuts[1:])[:, None] / 2.0
        xs.append((mid + half * ref_x).ravel())
        ws.append((half * ref_w).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def _trapezoid_nodes(geom: RibbonGeometry, quad_pts: int) -> tuple[np.ndarray, np.ndarray]:
    width = geom.effective_width
    panels = max(1, int(math.ceil(quad_pts * width / geom.constants.a0)))
    x = np.linspace(0.0, width, panels + 1)
    w = np.full(panels + 1, width / panels)
    w[0] = w[-1] = width / (2 * panels)
    return x, w


def _project(x: np.ndarray, wv: np.ndarray, q: np.ndarray) -> np.ndarray:
    # cos(a - b) = cos a cos b + sin a sin b turns each row into a pair of GEMMs
    c = np.cos(np.outer(x, q))
    s = np.sin(np.outer(x, q))
    m = (c * wv[:, None]).T @ c + (s * wv[:, None]).T @ s
    return 0.5 * (m + m.T)


def project_rows(
    y_rows, space: ModeSpace, spec: BarrierSpec, geom: RibbonGeometry, quad_pts: int = 4, rule: str = "gauss"
) -> np.ndarray:
    """Mode-projected potential for every row in ``y_rows``.

    Returns an array of shape ``(len(y_rows), n_modes, n_modes)`` holding
    ``(1/W') * int_0^W' V(x, y) cos((q_n - q_n') x) dx`` with ``W' = W + a0/2``.

    ``rule="gauss"`` integrates each smooth stretch of the profile separately
    with composite Gauss-Legendre; ``rule="trapezoid"`` uses a uniform
    trapezoid grid with ``quad_pts`` panels per a0. Both are exact for the
    off-diagonal entries of an untilted barrier.
    """
    if quad_pts < 2:
        raise ValueError("quad_pts must be >= 2 points per a0")
    if rule not in ("gauss", "trapezoid"):
        raise ValueError("rule must be 'gauss' or 'trapezoid'")
    y_rows = np.atleast_1d(np.asarray(y_rows, dtype=float))
    q = space.q_values
    out = np.zeros((len(y_rows), len(q), len(q)))
    if rule == "trapezoid":
        x, w = _trapezoid_nodes(geom, quad_pts)
    for i, y in enumerate(y_rows):
        if abs(y) >= spec.reach(geom) or spec.V0 == 0:
            continue
        if rule == "gauss":
            x, w = _gauss_nodes(y, spec, geom, quad_pts)
        wv = oblique_value(x, y, spec, geom.W) * (w / geom.effective_width)
        out[i] = _project(x, wv, q)
    return out


def project_potential(
    y_m: float, space: ModeSpace, spec: BarrierSpec, geom: RibbonGeometry, quad_pts: int = 4, rule: str = "gauss"
) -> np.ndarray:
    """Real symmetric ``n_modes x n_modes`` potential matrix at one row."""
    return project_rows([y_m], space, spec, geom, quad_pts, rule)[0]


@dataclass(frozen=True)
class PotentialTable:
    """Projected potential for every device row; energy independent."""

    rows: np.ndarray
    quadrature_points_per_a0: int
    rule: str = "gauss"

    def __len__(self):
        return len(self.rows)


def build_potential_table(
    geom: RibbonGeometry, space: ModeSpace, spec: BarrierSpec, quad_pts: int = 4, rule: str = "gauss"
) -> PotentialTable:
    rows = project_rows(geom.row_positions(), space, spec, geom, quad_pts, rule)
    rows.setflags(write=False)
    return PotentialTable(rows=rows, quadrature_points_per_a0=quad_pts, rule=rule)
