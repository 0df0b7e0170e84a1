"""Stationary coupled-channel scattering for a projectile on a trapped oscillator.

The projectile (mass ``m``, coordinate ``x1``) sees the channel potential
``E_n delta_{n'n} + V_{n'n}(x1)``.  The coupled equations::

    -(hbar^2/2m) psi''_{n'} + sum_n [E_n delta_{n'n} + V_{n'n}] psi_n = E psi_{n'}

are discretised with Numerov's method on the full line and solved as one
sparse boundary-value problem.  Boundary rows impose purely outgoing
(open) or decaying (closed) discrete waves, which keeps strongly closed
channels stable without any propagation.

Amplitudes are flux-normalised with the continuum momenta
``k_n = sqrt(2m(E - E_n))/hbar``, so the unitarity defect of the returned
S-matrix measures the discretisation error directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, ContractError, ConvergenceError, NumericalError
from .grids import Grid1D
from .oscillator import OscillatorSpec, potential_matrix

__all__ = [
    "ChannelSet",
    "SMatrix",
    "TransitionTable",
    "ThresholdWarning",
    "make_channels",
    "solve_smatrix",
    "transition_probabilities",
    "unitarity_defect",
    "reciprocity_defect",
    "solve_at_energy",
]


class ThresholdWarning(UserWarning):
    """A channel sits exactly at threshold and is treated as closed."""


@dataclass(frozen=True, eq=False)
class ChannelSet:
    spec: OscillatorSpec
    m: float
    E_total: float
    n_channels: int
    energies: np.ndarray
    k: np.ndarray  # real momentum for open channels, 0 otherwise
    kappa: np.ndarray  # decay constant for closed channels, 0 otherwise
    open_count: int

    @property
    def hbar(self) -> float:
        return self.spec.hbar

    def kinetic(self, n: int) -> float:
        return self.E_total - self.energies[n]


def make_channels(
    spec: OscillatorSpec, m: float, E_total: float, n_channels: int | None = None, closed_buffer: int = 10
) -> ChannelSet:
    """Channel energies and asymptotic momenta at total energy ``E_total``.

    Channels are open when ``E_total > E_n``; a channel exactly at threshold
    is closed with a :class:`ThresholdWarning`.  By default ``closed_buffer``
    closed channels are added above the highest open one.
    """
    if not m > 0:
        raise ConfigurationError(f"projectile mass must be > 0, got {m}")
    hw = spec.quantum
    # count of channels with E_n < E_total, with exact-threshold detection
    level = E_total / hw - 0.5
    n_floor = math.floor(level + 1e-12)
    at_threshold = abs(level - round(level)) < 1e-12 and round(level) >= 0
    open_count = max(0, n_floor + 1)
    if at_threshold:
        open_count = int(round(level))
        warnings.warn(
            f"E_total={E_total} is exactly at the threshold of channel {open_count}; treated as closed",
            ThresholdWarning,
            stacklevel=2,
        )
    if open_count < 1:
        raise ConfigurationError(f"E_total={E_total} leaves no open channel (ground level {0.5 * hw})")
    if n_channels is None:
        n_channels = open_count + closed_buffer
    if n_channels < open_count + 2:
        raise ConfigurationError(f"n_channels={n_channels} must be >= open_count + 2 = {open_count + 2}")
    energies = spec.energies(n_channels)
    ekin = E_total - energies
    k = np.zeros(n_channels)
    kappa = np.zeros(n_channels)
    k[:open_count] = np.sqrt(2.0 * m * ekin[:open_count]) / spec.hbar
    kappa[open_count:] = np.sqrt(np.maximum(-2.0 * m * ekin[open_count:], 0.0)) / spec.hbar
    return ChannelSet(spec, float(m), float(E_total), int(n_channels), energies, k, kappa, int(open_count))


@dataclass
class SMatrix:
    """Flux-normalised S-matrix blocks at one total energy.

    ``R[n', n]`` and ``T[n', n]`` are reflection/transmission amplitudes for
    incidence from the left in open channel ``n``; ``R_right``/``T_right``
    are the same for incidence from the right.
    """

    E_total: float
    R: np.ndarray
    T: np.ndarray
    R_right: np.ndarray
    T_right: np.ndarray
    k: np.ndarray

    @property
    def open_count(self) -> int:
        return self.R.shape[0]

    def full(self) -> np.ndarray:
        """``[[R, T_right], [T, R_right]]``: rows are outgoing (left, right), columns incoming."""
        return np.block([[self.R, self.T_right], [self.T, self.R_right]])

    def to_dict(self) -> dict:
        def enc(a):
            return [[[float(z.real), float(z.imag)] for z in row] for row in a]

        return {
            "E_total": float(self.E_total),
            "open_channels": int(self.open_count),
            "k": [float(v) for v in self.k],
            "R": enc(self.R),
            "T": enc(self.T),
            "R_right": enc(self.R_right),
            "T_right": enc(self.T_right),
        }


def unitarity_defect(S: SMatrix) -> float:
    """``max |S^dagger S - I|`` over the full open-channel matrix."""
    full = S.full()
    return float(np.max(np.abs(full.conj().T @ full - np.eye(full.shape[0]))))


def reciprocity_defect(S: SMatrix) -> float:
    """``max |S - S^T|`` (time-reversal symmetry for real symmetric couplings)."""
    full = S.full()
    return float(np.max(np.abs(full - full.T)))


def _discrete_waves(w_inf: np.ndarray, h: float) -> np.ndarray:
    """Per-step factor of the free Numerov solution: ``exp(i k h)`` (open) or ``exp(-kappa h)`` (closed)."""
    c = (1.0 + 5.0 * h * h * w_inf / 12.0) / (1.0 - h * h * w_inf / 12.0)
    out = np.empty(len(w_inf), dtype=complex)
    open_ = w_inf < 0
    if np.any(np.abs(c[open_]) > 1.0):
        raise ConvergenceError("grid too coarse: a free wave is not representable by the Numerov recurrence")
    out[open_] = c[open_] + 1j * np.sqrt(1.0 - c[open_] ** 2)
    closed = ~open_
    out[closed] = c[closed] - np.sqrt(np.maximum(c[closed] ** 2 - 1.0, 0.0))
    return out


def _assemble(W: np.ndarray, h: float, lam: np.ndarray) -> sp.csc_matrix:
    J, N, _ = W.shape
    eye = np.eye(N)
    A = eye - (h * h / 12.0) * W
    B = 2.0 * eye + (10.0 * h * h / 12.0) * W
    a_idx = np.arange(N)
    rows, cols, vals = [], [], []
    # interior rows j = 1..J-2
    j = np.arange(1, J - 1)
    r = (j[:, None, None] * N + a_idx[None, :, None]) * np.ones((1, 1, N), dtype=int)
    for shift, blocks in ((-1, A[:-2]), (0, -B[1:-1]), (1, A[2:])):
        c = ((j + shift)[:, None, None] * N + a_idx[None, None, :]) * np.ones((1, N, 1), dtype=int)
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(blocks.ravel().astype(complex))
    # boundary rows: psi_0 - lam psi_1 = rhs ; psi_{J-1} - lam psi_{J-2} = rhs
    rows += [a_idx, a_idx, (J - 1) * N + a_idx, (J - 1) * N + a_idx]
    cols += [a_idx, N + a_idx, (J - 1) * N + a_idx, (J - 2) * N + a_idx]
    vals += [np.ones(N, complex), -lam, np.ones(N, complex), -lam]
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(J * N, J * N)
    )
    return mat.tocsc()


def solve_smatrix(channels: ChannelSet, Vmat: np.ndarray, x1_grid: Grid1D, max_defect: float = 1e-4) -> SMatrix:
    """Solve the coupled-channel problem on ``x1_grid`` and return the S-matrix.

    Raises :class:`ConvergenceError` if the unitarity defect exceeds
    ``max_defect`` (refine the grid).
    """
    Vmat = np.asarray(Vmat, dtype=float)
    J, N = x1_grid.n_points, channels.n_channels
    if Vmat.shape != (J, N, N):
        raise ContractError(f"Vmat shape {Vmat.shape} does not match grid ({J}) and channels ({N})")
    peak = float(np.max(np.abs(Vmat)))
    ends = float(np.max(np.abs(Vmat[[0, 1, -2, -1]])))
    if peak > 0 and ends >= 1e-10 * peak:
        raise ConfigurationError(
            f"coupling not negligible at grid ends ({ends:.2e} vs peak {peak:.2e}); widen the x1 grid"
        )
    h = x1_grid.dx
    k_top = float(np.max(channels.k[: channels.open_count]))
    if 2.0 * np.pi / k_top < 12.0 * h:
        raise ConfigurationError(
            f"grid spacing {h:.4g} resolves the shortest wavelength {2 * np.pi / k_top:.4g} with < 12 points"
        )
    hbar, m, E = channels.hbar, channels.m, channels.E_total
    scale = 2.0 * m / hbar**2
    W = scale * (Vmat + np.diag(channels.energies)[None] - E * np.eye(N)[None])
    w_inf = scale * (channels.energies - E)
    lam = _discrete_waves(w_inf, h)
    n_open = channels.open_count
    kt = np.angle(lam[:n_open]) / h  # discrete wavenumbers of the open channels
    x0, xe = x1_grid.x[0], x1_grid.x[-1]

    mat = _assemble(W, h, lam)
    rhs = np.zeros((J * N, 2 * n_open), dtype=complex)
    for n in range(n_open):
        rhs[n, n] = np.exp(1j * kt[n] * x0) * (1.0 - lam[n] ** 2)
        rhs[(J - 1) * N + n, n_open + n] = np.exp(-1j * kt[n] * xe) * (1.0 - lam[n] ** 2)
    try:
        sol = splu(mat).solve(rhs)
    except RuntimeError as exc:
        raise NumericalError(f"coupled-channel matrix is singular: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise NumericalError("non-finite coupled-channel solution")
    resid = np.linalg.norm(mat @ sol - rhs) / np.linalg.norm(rhs)
    if resid > 1e-8:
        raise ConvergenceError(f"ill-conditioned matching: relative residual {resid:.2e}")

    psi = sol.reshape(J, N, 2 * n_open)
    left = psi[0, :n_open]
    right = psi[-1, :n_open]
    inc_left = np.exp(1j * kt * x0)
    inc_right = np.exp(-1j * kt * xe)
    R = (left[:, :n_open] - np.diag(inc_left)) * np.exp(1j * kt * x0)[:, None]
    T = right[:, :n_open] * np.exp(-1j * kt * xe)[:, None]
    R_right = (right[:, n_open:] - np.diag(inc_right)) * np.exp(-1j * kt * xe)[:, None]
    T_right = left[:, n_open:] * np.exp(1j * kt * x0)[:, None]
    k = channels.k[:n_open]
    flux = np.sqrt(k[:, None] / k[None, :])
    S = SMatrix(E, R * flux, T * flux, R_right * flux, T_right * flux, k.copy())
    defect = unitarity_defect(S)
    if defect > max_defect:
        raise ConvergenceError(f"unitarity defect {defect:.2e} exceeds {max_defect:.0e}; refine the x1 grid")
    return S


@dataclass
class TransitionTable:
    """``P_R[n', n]``, ``P_T[n', n]``: probabilities for left incidence in channel ``n``."""

    E_total: float
    P_R: np.ndarray
    P_T: np.ndarray

    @property
    def P_total(self) -> np.ndarray:
        return self.P_R + self.P_T

    def row_sums(self) -> np.ndarray:
        """Total outgoing probability per incoming channel."""
        return self.P_total.sum(axis=0)

    def rows(self) -> list[tuple]:
        n = self.P_R.shape[0]
        return [
            (self.E_total, n_in, n_out, float(self.P_R[n_out, n_in]), float(self.P_T[n_out, n_in]))
            for n_in in range(n)
            for n_out in range(n)
        ]


def transition_probabilities(S: SMatrix) -> TransitionTable:
    return TransitionTable(S.E_total, np.abs(S.R) ** 2, np.abs(S.T) ** 2)


def solve_at_energy(
    spec: OscillatorSpec,
    m: float,
    V,
    E_total: float,
    x1_grid: Grid1D,
    n_channels: int | None = None,
    quad_nodes: int | None = None,
    max_defect: float = 1e-4,
) -> tuple[ChannelSet, SMatrix]:
    """Convenience wrapper: channels, coupling matrix and S-matrix in one call."""
    channels = make_channels(spec, m, E_total, n_channels)
    q = quad_nodes if quad_nodes is not None else 2 * channels.n_channels + 40
    Vmat = potential_matrix(spec, V, x1_grid, channels.n_channels, q)
    return channels, solve_smatrix(channels, Vmat, x1_grid, max_defect=max_defect)
