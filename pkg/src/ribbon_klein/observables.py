"""Transmission, local density of states and conductance from device Green functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure
from .rgf import DeviceGreen
from .ribbon import DEFAULT_CONSTANTS, PhysicalConstants

# The central difference used for d/dy admits a second, staggered branch
# (k -> pi/delta - k) for every propagating subband. Both branches carry one
# channel each and a smooth barrier does not mix them, so the raw trace counts
# every physical channel twice.
LATTICE_BRANCHES = 2


@dataclass
class TransmissionCurve:
    energies: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)


@dataclass
class LdosMap:
    """``values[m, j]`` is DOS(m, energies[j]) in 1/eV per grid row."""

    energies: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ThermalSpec:
    mu: float
    temperature: float = 0.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def transmission_trace(green: DeviceGreen, gamma_L: np.ndarray, gamma_U: np.ndarray) -> complex:
    """Raw ``Tr[G(0,M-1) Gamma_U G(0,M-1)^dagger Gamma_L]``."""
    g = green.corner
    if g.shape != gamma_L.shape or g.shape != gamma_U.shape:
        raise ValueError("Green function and broadening shapes disagree")
    flow = (g @ gamma_U) @ g.conj().T
    return complex(np.sum(flow * gamma_L.T))


def transmission(green: DeviceGreen, gamma_L: np.ndarray, gamma_U: np.ndarray) -> float:
    """Transmission per physical channel.

    The Caroli trace is divided by ``LATTICE_BRANCHES`` so a clean ribbon
    gives one unit per open subband. A residual imaginary part above
    ``1e-9 (1 + |T|)`` is treated as a numerical failure.
    """
    tr = transmission_trace(green, gamma_L, gamma_U) / LATTICE_BRANCHES
    if abs(tr.imag) > 1e-9 * (1.0 + abs(tr.real)):
        raise NumericalFailure(f"transmission trace has imaginary part {tr.imag:.3e}")
    return tr.real


def ldos(green: DeviceGreen, m: int) -> float:
    """``-Im Tr G(m, m) / pi``."""
    if green.diag_trace is None:
        raise ValueError("Green function was solved without diagonal blocks")
    M = len(green.diag_trace)
    if not 0 <= m < M:
        raise ValueError(f"row index {m} outside [0, {M})")
    return -green.diag_trace[m].imag / math.pi


def ldos_profile(green: DeviceGreen) -> np.ndarray:
    if green.diag_trace is None:
        raise ValueError("Green function was solved without diagonal blocks")
    return -green.diag_trace.imag / math.pi


def thermal_kernel(energies, mu: float, kT: float) -> np.ndarray:
    """``-df/dE`` of the Fermi-Dirac distribution."""
    x = (np.asarray(energies, dtype=float) - mu) / (2.0 * kT)
    return 1.0 / (4.0 * kT * np.cosh(x) ** 2)


def conductance(
    energies, values, thermal: ThermalSpec, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """Landauer-Buttiker conductance in units of ``2e^2/h``.

    At finite temperature the curve must cover ``mu +- 10 kB T`` with spacing
    no coarser than ``kB T / 4``; the thermal kernel is integrated over that
    window with the trapezoid rule and normalized by its own discrete
    integral, so a constant transmission is reproduced exactly. At zero
    temperature the transmission is linearly interpolated at ``mu``.
    """
    e = np.asarray(energies, dtype=float)
    t = np.asarray(values, dtype=float)
    if e.ndim != 1 or e.shape != t.shape or len(e) < 2:
        raise ValueError("energies and values must be matching 1D arrays of length >= 2")
    if np.any(np.diff(e) <= 0):
        raise ValueError("energies must be strictly increasing")
    mu = thermal.mu
    if thermal.temperature == 0:
        if not e[0] <= mu <= e[-1]:
            raise ValueError(f"mu = {mu} outside the energy grid")
        return float(np.interp(mu, e, t))

    kT = constants.kB * thermal.temperature
    lo, hi = mu - 10 * kT, mu + 10 * kT
    slack = 1e-12 * max(1.0, abs(mu))
    if e[0] > lo + slack or e[-1] < hi - slack:
        raise ValueError(f"energy grid must cover [{lo:.6g}, {hi:.6g}] eV")
    inside = (e >= lo - slack) & (e <= hi + slack)
    if np.any(np.diff(e[inside]) > kT / 4 * (1 + 1e-9)):
        raise ValueError(f"energy spacing must not exceed kB T / 4 = {kT / 4:.6g} eV")
    ew = e[inside]
    kernel = thermal_kernel(ew, mu, kT)
    # the window holds 1 - 9e-5 of the kernel's weight; dividing it out keeps sigma a weighted mean of T
    return float(np.trapezoid(kernel * t[inside], ew) / np.trapezoid(kernel, ew))


def klein_2d(theta: float, k: float, D: float) -> float:
    """Transmission of a massless Dirac particle through a square barrier in a 2D sheet."""
    if not abs(theta) < math.pi / 2:
        raise ValueError("|theta| must be below pi/2")
    c2 = math.cos(theta) ** 2
    # 1 - cos^2(kD) sin^2(theta) rewritten so that kD = m pi returns exactly 1
    return c2 / (c2 + (math.sin(theta) * math.sin(k * D)) ** 2)


def peak_spacing_estimate(D: float, W: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Quantum-well level spacing ``hbar vF / max(D, W)``."""
    if not (D > 0 and W > 0):
        raise ValueError("D and W must be positive")
    return constants.hbar_vF / max(D, W)
