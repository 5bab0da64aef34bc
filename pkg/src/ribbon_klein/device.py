"""A ribbon, a barrier and a mode basis bundled into something that can be solved per energy."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .barrier import BarrierSpec, PotentialTable, build_potential_table
from .observables import ldos_profile, transmission
from .rgf import (
    DeviceBlocks,
    DeviceGreen,
    coupling_block,
    effective_eta,
    gamma_matrix,
    rgf_solve,
    surface_self_energy_analytic,
)
from .ribbon import ModeSpace, RibbonGeometry, enumerate_modes

log = logging.getLogger(__name__)


@dataclass
class EnergyPoint:
    energy: float
    transmission: float
    ldos: np.ndarray | None = None


class Device:
    """Two pristine semi-infinite leads attached to a gated device region.

    The projected potential table is built once here and shared read-only by
    every energy solve, so one instance may be used from several threads.
    """

    def __init__(self, geom: RibbonGeometry, space: ModeSpace, barrier: BarrierSpec, quad_pts: int = 4):
        self.geom = geom
        self.space = space
        self.barrier = barrier
        self.table: PotentialTable = build_potential_table(geom, space, barrier, quad_pts)
        self.b = coupling_block(space, geom.delta, geom.constants)
        self.b.setflags(write=False)
        self._check_lead_rows()

    @classmethod
    def build(cls, N: int, n_modes: int, delta: float, total_length: float, barrier: BarrierSpec, quad_pts: int = 4):
        geom = RibbonGeometry.from_length(N, delta, total_length)
        return cls(geom, enumerate_modes(N, n_modes, geom.constants), barrier, quad_pts)

    def _check_lead_rows(self):
        limit = 1e-6 * abs(self.barrier.V0)
        for m in (0, self.geom.M - 1):
            peak = np.max(np.abs(self.table.rows[m]))
            if peak > limit:
                log.warning("potential at lead-adjacent row %d is %.3g eV; leads are treated as pristine", m, peak)

    def blocks(self, E: float, eta: float) -> DeviceBlocks:
        return DeviceBlocks(E, eta, self.space, self.table, self.geom.constants)

    def self_energy(self, E: float, eta: float) -> np.ndarray:
        return surface_self_energy_analytic(E, eta, self.space, self.geom.delta, self.geom.constants)

    def green(self, E: float, eta: float = 0.0, diagonal: str = "none") -> tuple[DeviceGreen, np.ndarray]:
        """Solve at one energy. Returns the Green function and the (shared) lead self-energy.

        The broadening floor only enters the lead self-energy, where it
        regularizes the subband edges. The device rows carry ``eta`` exactly,
        so an ``eta = 0`` device conserves current.
        """
        if eta < 0:
            raise ValueError("eta must be >= 0")
        sigma = self.self_energy(E, effective_eta(eta))
        green = rgf_solve(self.blocks(E, eta), self.b, sigma, sigma, diagonal=diagonal)
        green.energy, green.eta = E, eta
        return green, sigma

    def solve(self, E: float, eta: float = 0.0, with_ldos: bool = False) -> EnergyPoint:
        green, sigma = self.green(E, eta, diagonal="trace" if with_ldos else "none")
        gam = gamma_matrix(sigma)
        return EnergyPoint(
            energy=E,
            transmission=transmission(green, gam, gam),
            ldos=ldos_profile(green) if with_ldos else None,
        )

    def transmission(self, E: float, eta: float = 0.0) -> float:
        return self.solve(E, eta).transmission
