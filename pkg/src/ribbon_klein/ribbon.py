"""Armchair graphene nanoribbon geometry and transverse-mode bookkeeping.

Lengths are in angstrom, energies in eV, momenta in inverse angstrom.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PhysicalConstants:
    """Material constants used throughout the model.

    ``hbar_vF`` corresponds to a Fermi velocity of 1e6 m/s.
    """

    a0: float = 2.46
    hbar_vF: float = 6.582
    kB: float = 8.617e-5

    def __post_init__(self):
        for name in ("a0", "hbar_vF", "kB"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


DEFAULT_CONSTANTS = PhysicalConstants()


class Classification(enum.Enum):
    METALLIC = "metallic"
    SEMICONDUCTING = "semiconducting"


def classify_ribbon(N: int) -> Classification:
    """Metallic iff ``N + 1`` is a multiple of three."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return Classification.METALLIC if (N + 1) % 3 == 0 else Classification.SEMICONDUCTING


def subband_momentum(n: int, N: int, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Quantized transverse momentum ``(2 pi / a0) (n / (N + 1) + 1 / 3)``.

    Evaluated from the integer ``3n + N + 1`` so that the metallic zero mode
    comes out as exactly ``0.0``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    return 2.0 * math.pi / constants.a0 * (3 * n + N + 1) / (3 * (N + 1))


@dataclass(frozen=True)
class RibbonGeometry:
    """Ribbon width index ``N`` plus the finite-difference grid of the device.

    ``M`` grid rows of spacing ``delta`` make up the device region between the
    two semi-infinite leads.
    """

    N: int
    delta: float
    M: int
    constants: PhysicalConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if self.M < 3:
            raise ValueError("M must be >= 3")

    @classmethod
    def from_length(
        cls, N: int, delta: float, total_length: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
    ) -> "RibbonGeometry":
        return cls(N=N, delta=delta, M=int(round(total_length / delta)), constants=constants)

    @property
    def W(self) -> float:
        return self.N * self.constants.a0 / 2.0

    @property
    def effective_width(self) -> float:
        """``W + a0/2``, the width over which the transverse basis is normalized."""
        return self.W + self.constants.a0 / 2.0

    @property
    def total_length(self) -> float:
        return self.M * self.delta

    @property
    def classification(self) -> Classification:
        return classify_ribbon(self.N)

    def row_positions(self) -> np.ndarray:
        """Coordinates of the device rows, uniform on ``[-L/2, L/2 - delta]``."""
        return -self.total_length / 2.0 + self.delta * np.arange(self.M)


@dataclass(frozen=True)
class Mode:
    n: int
    gamma: int
    q: float


@dataclass(frozen=True)
class ModeSpace:
    """Ordered (n, gamma) basis of one block of the lattice equation.

    Block index ``2 i`` holds ``(n_i, +1)`` and ``2 i + 1`` holds ``(n_i, -1)``.
    """

    modes: tuple[Mode, ...]

    @property
    def n_modes(self) -> int:
        return len(self.modes) // 2

    @property
    def block_dim(self) -> int:
        return len(self.modes)

    @property
    def n_values(self) -> np.ndarray:
        return np.array([m.n for m in self.modes[0::2]], dtype=int)

    @property
    def q_values(self) -> np.ndarray:
        """Transverse momentum of each distinct subband, in basis order."""
        return np.array([m.q for m in self.modes[0::2]], dtype=float)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([m.gamma for m in self.modes], dtype=int)

    @property
    def q_per_index(self) -> np.ndarray:
        return np.array([m.q for m in self.modes], dtype=float)


def enumerate_modes(N: int, n_modes: int, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> ModeSpace:
    """Keep the ``n_modes`` subbands with the smallest ``|q_n|``.

    Ties in ``|q_n|`` go to the smaller ``n``. The comparison uses the exact
    integer ``|3n + N + 1|`` so degenerate pairs in metallic ribbons are
    ordered deterministically.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 1 <= n_modes <= N:
        raise ValueError(f"n_modes must lie in [1, N={N}], got {n_modes}")
    center = -(N + 1) // 3
    candidates = range(center - n_modes - 1, center + n_modes + 2)
    chosen = sorted(candidates, key=lambda n: (abs(3 * n + N + 1), n))[:n_modes]
    modes = []
    for n in chosen:
        q = subband_momentum(n, N, constants)
        modes.append(Mode(n, +1, q))
        modes.append(Mode(n, -1, q))
    return ModeSpace(tuple(modes))


def dispersion(mode: Mode, k: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    return mode.gamma * constants.hbar_vF * math.hypot(mode.q, k)


def mode_onsets(space: ModeSpace, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> list[float]:
    """Sorted distinct subband edges ``hbar vF |q_n|``."""
    if space.n_modes == 0:
        return []
    edges = constants.hbar_vF * np.abs(space.q_values)
    return sorted(set(edges.tolist()))


def open_channel_count(
    space: ModeSpace, energy: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> int:
    """Number of subbands propagating at ``energy``.

    A subband is open strictly above its edge; degenerate subbands count
    separately.
    """
    edges = constants.hbar_vF * np.abs(space.q_values)
    return int(np.count_nonzero(edges < abs(energy)))


def z_factor(q: float, k: float) -> complex:
    """Phase ``sqrt(q - ik) / sqrt(q + ik)`` on the principal branch."""
    if q == 0 and k == 0:
        raise ValueError("z_factor is undefined at q = k = 0")
    return complex(np.sqrt(complex(q, -k)) / np.sqrt(complex(q, k)))


def channel_counts(space: ModeSpace, energies: Sequence[float], constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    return np.array([open_channel_count(space, e, constants) for e in energies], dtype=int)
