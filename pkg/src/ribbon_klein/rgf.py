"""Block-tridiagonal lattice equation, lead self-energies and the recursive solver.

The device matrix has diagonal blocks ``a_m``, super-diagonal ``+b`` and
sub-diagonal ``-b``. Because ``b`` is real and antisymmetric the matrix equals
``(E + i eta) - H`` with ``H`` Hermitian, so its inverse is an ordinary
retarded Green function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .barrier import PotentialTable
from .errors import NumericalFailure
from .ribbon import DEFAULT_CONSTANTS, ModeSpace, PhysicalConstants

ETA_MIN = 1e-9
DENSE_LIMIT = 4000


def effective_eta(eta: float) -> float:
    """Broadening used for the lead self-energy; never below ``ETA_MIN``."""
    return max(float(eta), ETA_MIN)


def coupling_block(space: ModeSpace, delta: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """``b = b~ / (2 delta)`` with ``b~[(n,g),(n',g')] = hbar vF (g' - g)/2 delta_nn'``."""
    g = space.gammas
    same_n = np.equal.outer(np.repeat(np.arange(space.n_modes), 2), np.repeat(np.arange(space.n_modes), 2))
    btilde = constants.hbar_vF * (g[None, :] - g[:, None]) / 2.0 * same_n
    return btilde / (2.0 * delta)


def kinetic_diagonal(space: ModeSpace, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """``gamma hbar vF q_n`` for every basis index."""
    return space.gammas * constants.hbar_vF * space.q_per_index


def assemble_block(
    E: float,
    eta: float,
    m: int,
    space: ModeSpace,
    table: PotentialTable,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Diagonal block ``a_m = (E + i eta) 1 + D(y_m)`` of the lattice equation.

    The projected potential enters only the same-gamma sub-blocks.
    """
    dim = space.block_dim
    a = np.zeros((dim, dim), dtype=complex)
    v = table.rows[m]
    a[0::2, 0::2] = -v
    a[1::2, 1::2] = -v
    a[np.diag_indices(dim)] += complex(E, eta) + kinetic_diagonal(space, constants)
    return a


class DeviceBlocks(Sequence):
    """Lazy sequence of the ``M`` diagonal blocks at one energy."""

    def __init__(self, E, eta, space, table, constants=DEFAULT_CONSTANTS):
        self.E, self.eta = E, eta
        self.space, self.table, self.constants = space, table, constants
        self._base = np.diag(complex(E, eta) + kinetic_diagonal(space, constants))

    def __len__(self):
        return len(self.table)

    def __getitem__(self, m):
        if isinstance(m, slice):
            return [self[i] for i in range(*m.indices(len(self)))]
        if m < 0:
            m += len(self)
        a = self._base.copy()
        v = self.table.rows[m]
        a[0::2, 0::2] -= v
        a[1::2, 1::2] -= v
        return a


def surface_self_energy_analytic(
    E: float,
    eta: float,
    space: ModeSpace,
    delta: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Closed-form diagonal surface self-energy of a pristine semi-infinite lead.

    Per basis index ``(n, gamma)``::

        sigma = (1 - sqrt(1 - 1/(delta^2 (E~^2/(hbar vF)^2 - q^2)))) (E~ + gamma hbar vF q) / 2

    with ``E~ = E + i eta``. The principal root is used unless it gives a
    positive imaginary part, in which case the other root is taken. ``eta``
    is floored at ``ETA_MIN``.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    et = complex(E, effective_eta(eta))
    hv = constants.hbar_vF
    q = space.q_per_index
    x = delta**2 * (et**2 / hv**2 - q**2)
    root = np.sqrt(1.0 - 1.0 / x)
    scale = 0.5 * (et + space.gammas * hv * q)
    sigma = scale * (1.0 - root)
    flip = sigma.imag > 0
    sigma[flip] = (scale * (1.0 + root))[flip]
    return np.diag(sigma)


def surface_self_energy_iterative(
    a_lead: np.ndarray,
    b: np.ndarray,
    eta: float,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Self-energy ``-b g b`` with ``g`` solving ``[a + b g b] g = 1``.

    Solved by layer decimation, which iterates the same fixed point on a lead
    whose effective cell doubles every step. ``a_lead`` must already contain
    ``E + i eta``; ``eta`` is only checked for positivity. Converged when
    successive self-energies differ by less than ``tol`` in max-norm.

    Lead rows are paired before decimating. A single row block is singular
    up to ``eta`` at every subband edge, which costs the iteration most of
    its digits there; the two-row cell only becomes singular at
    ``|E| >= hbar vF / (2 delta)``.
    """
    if not eta > 0:
        raise ValueError("iterative self-energy needs eta > 0")
    a = np.asarray(a_lead, dtype=complex)
    b = np.asarray(b, dtype=complex)
    n = len(a)
    zero = np.zeros_like(a)
    # cell = (row -1, row -2); going deeper the hop is A[-2,-3] = -b, coming back A[-3,-2] = +b
    eps_s = np.block([[a, -b], [b, a]])
    eps = eps_s.copy()
    alpha = np.block([[zero, zero], [-b, zero]])
    beta = np.block([[zero, b], [zero, zero]])
    sigma = np.zeros_like(a)
    residual = np.inf
    for _ in range(max_iter):
        g = np.linalg.solve(eps, np.concatenate([alpha, beta], axis=1))
        g_alpha, g_beta = g[:, : 2 * n], g[:, 2 * n :]
        eps_s = eps_s - alpha @ g_beta
        eps = eps - alpha @ g_beta - beta @ g_alpha
        alpha = -alpha @ g_alpha
        beta = -beta @ g_beta
        surface = np.linalg.inv(eps_s)[:n, :n]
        new = -b @ surface @ b
        residual = np.max(np.abs(new - sigma))
        sigma = new
        if residual < tol:
            return sigma
    raise NumericalFailure(f"surface self-energy did not converge, last residual {residual:.3e}")


def gamma_matrix(sigma: np.ndarray) -> np.ndarray:
    """Broadening ``i (sigma - sigma^dagger)``."""
    return 1j * (sigma - sigma.conj().T)


@dataclass
class DeviceGreen:
    """Green-function blocks of the device region.

    ``corner`` is ``G(0, M-1)``. ``diag`` holds every ``G(m, m)`` when the
    solve kept them; ``diag_trace`` holds their traces whenever any diagonal
    information was requested.
    """

    corner: np.ndarray
    diag: np.ndarray | None = None
    diag_trace: np.ndarray | None = None
    energy: float | None = None
    eta: float | None = None

    @property
    def M(self) -> int | None:
        if self.diag_trace is not None:
            return len(self.diag_trace)
        return None


class _Sandwich:
    """Computes ``b @ X @ b``; signed-permutation couplings skip the GEMMs."""

    def __init__(self, b: np.ndarray):
        self.b = b
        nz = b != 0
        self.monomial = bool(np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1))
        if self.monomial:
            self.rows = np.argmax(nz, axis=1)
            self.row_vals = b[np.arange(len(b)), self.rows]
            self.cols = np.argmax(nz, axis=0)
            self.col_vals = b[self.cols, np.arange(len(b))]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if not self.monomial:
            return self.b @ x @ self.b
        return (self.row_vals[:, None] * x[self.rows][:, self.cols]) * self.col_vals[None, :]


def _inverse(mat: np.ndarray, row: int) -> np.ndarray:
    try:
        inv = np.linalg.inv(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"singular pivot block at row {row}") from exc
    if not np.all(np.isfinite(inv)):
        raise NumericalFailure(f"non-finite pivot inverse at row {row}")
    return inv


def rgf_solve(
    blocks: Sequence[np.ndarray],
    b: np.ndarray,
    sigma_L: np.ndarray,
    sigma_U: np.ndarray,
    diagonal: str = "full",
) -> DeviceGreen:
    """Recursive Green function solve of the block-tridiagonal device matrix.

    A forward sweep from the lower lead builds the left-connected blocks
    ``gL_m = (a_m + b gL_{m-1} b)^-1`` and the corner ``G(0, m)`` of each
    truncated system. When ``diagonal`` is ``"full"`` or ``"trace"`` the
    left-connected blocks are stored and a backward sweep returns
    ``G(m, m) = gL_m - gL_m b G(m+1, m+1) b gL_m``. With ``"none"`` only the
    corner is produced and memory stays O(1) in ``M``.
    """
    if diagonal not in ("full", "trace", "none"):
        raise ValueError("diagonal must be 'full', 'trace' or 'none'")
    M = len(blocks)
    if M < 3:
        raise ValueError("rgf_solve needs at least 3 rows")
    b = np.asarray(b)
    keep = diagonal != "none"
    left = [] if keep else None
    sandwich = _Sandwich(b)

    g = _inverse(np.asarray(blocks[0]) - sigma_L, 0)
    corner = g
    if keep:
        left.append(g)
    for m in range(1, M):
        a = np.asarray(blocks[m])
        if m == M - 1:
            a = a - sigma_U
        g = _inverse(a + sandwich(g), m)
        corner = -(corner @ b) @ g
        if keep:
            left.append(g)

    if not keep:
        return DeviceGreen(corner=corner)

    dim = b.shape[0]
    diag = np.empty((M, dim, dim), dtype=complex) if diagonal == "full" else None
    traces = np.empty(M, dtype=complex)
    G = left[-1]
    traces[-1] = np.trace(G)
    if diag is not None:
        diag[-1] = G
    for m in range(M - 2, -1, -1):
        gl = left[m]
        G = gl - gl @ sandwich(G) @ gl
        traces[m] = np.trace(G)
        if diag is not None:
            diag[m] = G
        left[m] = None
    return DeviceGreen(corner=corner, diag=diag, diag_trace=traces)


def assemble_dense(
    blocks: Sequence[np.ndarray], b: np.ndarray, sigma_L: np.ndarray, sigma_U: np.ndarray
) -> np.ndarray:
    """Full device matrix with self-energies folded into the end blocks."""
    M = len(blocks)
    dim = b.shape[0]
    A = np.zeros((M * dim, M * dim), dtype=complex)
    for m in range(M):
        s = slice(m * dim, (m + 1) * dim)
        A[s, s] = blocks[m]
        if m + 1 < M:
            t = slice((m + 1) * dim, (m + 2) * dim)
            A[s, t] = b
            A[t, s] = -b
    A[:dim, :dim] -= sigma_L
    A[-dim:, -dim:] -= sigma_U
    return A


def dense_solve(
    blocks: Sequence[np.ndarray], b: np.ndarray, sigma_L: np.ndarray, sigma_U: np.ndarray
) -> DeviceGreen:
    """Reference solve by LU inversion of the whole device matrix."""
    M = len(blocks)
    dim = b.shape[0]
    if M * dim > DENSE_LIMIT:
        raise ValueError(f"dense solve limited to dimension {DENSE_LIMIT}, got {M * dim}")
    A = assemble_dense(blocks, b, sigma_L, sigma_U)
    try:
        G = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular device matrix") from exc
    diag = np.stack([G[m * dim:(m + 1) * dim, m * dim:(m + 1) * dim] for m in range(M)])
    return DeviceGreen(
        corner=G[:dim, -dim:].copy(),
        diag=diag,
        diag_trace=np.trace(diag, axis1=1, axis2=2),
    )
