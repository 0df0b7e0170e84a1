"""Uniform periodic grids, Gaussian wavepackets and spectral observables.

Both physical models live on a one-dimensional periodic box.  Fields carry
``C`` internal components (four joint-spin states for the flyby model, the
oscillator channels for the trapped-oscillator model) stored as an array of
shape ``(n_points, C)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.fft as sfft

from .errors import BoundaryContactError, ConfigurationError, ContractError, NumericalError, ObservableError

__all__ = [
    "Grid1D",
    "ComplexField",
    "WavepacketSpec",
    "Observables",
    "make_grid",
    "gaussian_packet",
    "to_momentum",
    "to_position",
    "observables",
    "check_boundary",
    "momentum_histogram",
]


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid ``x_j = x_min + j*dx`` on the periodic interval ``[x_min, x_max)``."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not np.isfinite(self.x_min) or not np.isfinite(self.x_max) or self.x_max <= self.x_min:
            raise ConfigurationError(f"degenerate interval [{self.x_min}, {self.x_max}]")
        if int(self.n_points) != self.n_points or self.n_points < 8 or not _is_power_of_two(int(self.n_points)):
            raise ConfigurationError(f"n_points must be a power of two >= 8, got {self.n_points}")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / self.length

    @property
    def k_max(self) -> float:
        return np.pi / self.dx

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @cached_property
    def k_values(self) -> np.ndarray:
        # standard FFT ordering: 0, dk, ..., -dk
        return 2.0 * np.pi * sfft.fftfreq(self.n_points, d=self.dx)

    def kinetic(self, mass: float, hbar: float = 1.0) -> np.ndarray:
        """Kinetic energy ``hbar^2 k^2 / 2m`` on the k grid."""
        return (hbar * self.k_values) ** 2 / (2.0 * mass)

    def max_kinetic(self, mass: float, hbar: float = 1.0) -> float:
        return (hbar * self.k_max) ** 2 / (2.0 * mass)


def make_grid(x_min: float, x_max: float, n_points: int) -> Grid1D:
    return Grid1D(float(x_min), float(x_max), int(n_points))


@dataclass(frozen=True)
class WavepacketSpec:
    """Minimal-uncertainty packet centred at ``x0`` with mean wavenumber ``direction*k0``."""

    x0: float
    k0: float
    sigma: float
    direction: int = 1

    @property
    def k_mean(self) -> float:
        return self.direction * self.k0

    def validate(self, grid: Grid1D) -> None:
        if self.direction not in (1, -1):
            raise ConfigurationError(f"direction must be +1 or -1, got {self.direction}")
        if not self.sigma > 4.0 * grid.dx:
            raise ConfigurationError(f"sigma={self.sigma} not resolvable on dx={grid.dx} (need sigma > 4 dx)")
        if not abs(self.k_mean) < 0.5 * grid.k_max:
            raise ConfigurationError(f"|k0|={abs(self.k0)} exceeds anti-aliasing margin {0.5 * grid.k_max}")
        lo, hi = grid.x_min + 5.0 * self.sigma, grid.x_max - 5.0 * self.sigma
        if not lo <= self.x0 <= hi:
            raise ConfigurationError(f"packet centre x0={self.x0} outside [{lo}, {hi}]")


@dataclass
class ComplexField:
    """Complex amplitudes of shape ``(n_points, C)`` on ``grid``.

    ``representation`` is ``"position"`` (measure ``dx``) or ``"momentum"``
    (continuum-normalised amplitudes in FFT order, measure ``dk``).
    """

    grid: Grid1D
    amplitudes: np.ndarray
    representation: Literal["position", "momentum"] = "position"

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] != self.grid.n_points:
            raise ContractError(f"amplitudes shape {a.shape} incompatible with grid of {self.grid.n_points} points")
        if not np.all(np.isfinite(a)):
            raise NumericalError("field contains NaN or Inf")
        self.amplitudes = a

    @property
    def components(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def measure(self) -> float:
        return self.grid.dx if self.representation == "position" else self.grid.dk

    def squared_norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.measure)

    def component_norms(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=0) * self.measure

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.amplitudes.copy(), self.representation)


def gaussian_packet(grid: Grid1D, spec: WavepacketSpec, components: int = 1, occupied: int = 0) -> ComplexField:
    """Normalised packet ``exp(-(x-x0)^2/4 sigma^2 + i k x)`` in one component."""
    spec.validate(grid)
    if not 0 <= occupied < components:
        raise ConfigurationError(f"occupied component {occupied} out of range for {components} components")
    x = grid.x
    psi = np.exp(-((x - spec.x0) ** 2) / (4.0 * spec.sigma**2) + 1j * spec.k_mean * x)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
    amps = np.zeros((grid.n_points, components), dtype=complex)
    amps[:, occupied] = psi
    return ComplexField(grid, amps)


def to_momentum(f: ComplexField) -> ComplexField:
    """Discrete approximation of ``(2 pi)^(-1/2) int psi(x) exp(-ikx) dx`` per component."""
    if f.representation == "momentum":
        return f.copy()
    g = f.grid
    phase = np.exp(-1j * g.k_values * g.x_min) * (g.dx / np.sqrt(2.0 * np.pi))
    amps = sfft.fft(f.amplitudes, axis=0) * phase[:, None]
    return ComplexField(g, amps, "momentum")


def to_position(f: ComplexField) -> ComplexField:
    if f.representation == "position":
        return f.copy()
    g = f.grid
    phase = np.exp(1j * g.k_values * g.x_min) * (np.sqrt(2.0 * np.pi) / g.dx)
    amps = sfft.ifft(f.amplitudes * phase[:, None], axis=0)
    return ComplexField(g, amps, "position")


@dataclass(frozen=True)
class Observables:
    norm2: float
    mean_x: float
    mean_p: float
    mean_kinetic: float


def _real_expectation(value: complex, scale: float, what: str) -> float:
    if abs(value.imag) > 1e-10 * max(abs(value.real), scale):
        raise NumericalError(f"<{what}> has imaginary residue {value.imag:.3e}")
    return float(value.real)


def observables(f: ComplexField, mass: float, hbar: float = 1.0) -> Observables:
    """Norm, mean position, mean momentum and mean kinetic energy.

    Expectation values are normalised by the squared norm; momentum moments are
    evaluated spectrally.
    """
    if mass <= 0:
        raise ConfigurationError(f"mass must be positive, got {mass}")
    pos = to_position(f) if f.representation == "momentum" else f
    g = pos.grid
    psi = pos.amplitudes
    norm2 = pos.squared_norm()
    if not norm2 > 0:
        raise ObservableError("observables undefined for a zero-norm field")
    mean_x = float(np.sum(g.x[:, None] * np.abs(psi) ** 2) * g.dx / norm2)
    phi = sfft.fft(psi, axis=0)
    p_psi = sfft.ifft(hbar * g.k_values[:, None] * phi, axis=0)
    t_psi = sfft.ifft(g.kinetic(mass, hbar)[:, None] * phi, axis=0)
    p_val = np.vdot(psi, p_psi) * g.dx / norm2
    t_val = np.vdot(psi, t_psi) * g.dx / norm2
    scale = hbar * g.k_max
    mean_p = _real_expectation(p_val, scale * 1e-6, "p")
    mean_t = _real_expectation(t_val, g.max_kinetic(mass, hbar) * 1e-6, "p^2/2m")
    return Observables(norm2, mean_x, mean_p, mean_t)


def check_boundary(grid: Grid1D, amplitudes: np.ndarray, tol: float = 1e-8, width: int = 10) -> float:
    """Raise :class:`BoundaryContactError` if the edge density exceeds ``tol`` of the total.

    ``amplitudes`` may be ``(n_points, C)`` or ``(C, n_points)``; the spatial
    axis is identified by its length.
    """
    a = np.asarray(amplitudes)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] != grid.n_points:
        a = a.T
    dens = np.sum(np.abs(a) ** 2, axis=1)
    total = dens.sum()
    edge = dens[:width].sum() + dens[-width:].sum()
    frac = float(edge / total) if total > 0 else 0.0
    if frac >= tol:
        raise BoundaryContactError(
            f"density within {width} dx of the box edge is {frac:.3e} of total (limit {tol:.0e}); enlarge the box"
        )
    return frac


def momentum_histogram(
    f: ComplexField, bins: int = 64, k_range: tuple[float, float] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of momentum probability per component.

    Returns ``(edges, probs)`` with ``probs`` of shape ``(bins, C)``; each column
    sums to that component's squared norm (up to mass outside ``k_range``).
    """
    mom = to_momentum(f) if f.representation == "position" else f
    g = mom.grid
    if k_range is None:
        k_range = (-g.k_max, g.k_max)
    weights = np.abs(mom.amplitudes) ** 2 * g.dk
    edges = np.linspace(k_range[0], k_range[1], bins + 1)
    probs = np.stack(
        [np.histogram(g.k_values, bins=edges, weights=weights[:, c])[0] for c in range(mom.components)], axis=1
    )
    return edges, probs
