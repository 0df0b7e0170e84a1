"""Harmonic-oscillator basis for the trapped particle.

The trapped coordinate is measured in units of the oscillator length
``a = sqrt(hbar / (M Omega))``, ``X = x2 / a``.  An interaction ``V(x1 - x2)``
is expanded in physicists' Hermite polynomials of ``X``::

    V(x1 - a X) = sum_n H_n(X) V_n(x1)

with ``V_n(x1) = [2^n n! sqrt(pi)]^-1  int exp(-X^2) H_n(X) V(x1 - a X) dX``.
The same quadrature gives the channel matrix elements
``V_{n'n}(x1) = <phi_n'| V(x1 - a X) |phi_n>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigurationError, DomainError, NumericalError
from .grids import Grid1D

__all__ = [
    "N_MAX_GLOBAL",
    "OscillatorSpec",
    "PotentialSpec",
    "ExpansionCoefficients",
    "dimensionless_coordinate",
    "hermite",
    "hermite_table",
    "normalized_hermite_table",
    "eigenfunction",
    "gauss_hermite",
    "expand_potential",
    "potential_matrix",
    "hermite_bracket",
]

N_MAX_GLOBAL = 64


@dataclass(frozen=True)
class OscillatorSpec:
    M: float
    Omega: float
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("M", "Omega", "hbar"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigurationError(f"oscillator {name} must be positive and finite, got {v}")

    @property
    def length_scale(self) -> float:
        return math.sqrt(self.hbar / (self.M * self.Omega))

    @property
    def quantum(self) -> float:
        return self.hbar * self.Omega

    def energies(self, n_channels: int) -> np.ndarray:
        return self.quantum * (np.arange(n_channels) + 0.5)


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Symmetric interaction ``V(d)`` between the two particles.

    Use the constructors :meth:`gaussian`, :meth:`soft_core` and
    :meth:`tabulated`.  Tabulated samples are given for ``d >= 0`` and
    extended as ``V(|d|)``.
    """

    kind: str
    V0: float = 0.0
    w: float = 1.0
    steepness: float = 1.0
    d_samples: tuple = ()
    v_samples: tuple = ()

    @classmethod
    def gaussian(cls, V0: float, w: float) -> "PotentialSpec":
        if not w > 0:
            raise ConfigurationError(f"gaussian width must be > 0, got {w}")
        return cls("gaussian", V0=float(V0), w=float(w))

    @classmethod
    def soft_core(cls, V0: float, w: float, steepness: float) -> "PotentialSpec":
        if not (w > 0 and steepness > 0):
            raise ConfigurationError("soft_core needs w > 0 and steepness > 0")
        return cls("soft_core", V0=float(V0), w=float(w), steepness=float(steepness))

    @classmethod
    def tabulated(cls, d, v) -> "PotentialSpec":
        d = np.asarray(d, dtype=float)
        v = np.asarray(v, dtype=float)
        if d.ndim != 1 or d.shape != v.shape or d.size < 4:
            raise ConfigurationError("tabulated potential needs matching 1D arrays with >= 4 samples")
        if d[0] != 0.0 or np.any(np.diff(d) <= 0):
            raise ConfigurationError("tabulated distances must start at 0 and increase strictly")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("tabulated potential values must be finite")
        return cls("tabulated", d_samples=tuple(d), v_samples=tuple(v))

    @property
    def d_max(self) -> float:
        return self.d_samples[-1] if self.kind == "tabulated" else math.inf

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        ad = np.abs(d)
        if self.kind == "gaussian":
            return self.V0 * np.exp(-0.5 * (ad / self.w) ** 2)
        if self.kind == "soft_core":
            return 0.5 * self.V0 * (1.0 - np.tanh((ad - self.w) * self.steepness))
        if self.kind == "tabulated":
            if np.any(ad > self.d_max):
                raise DomainError(f"tabulated potential evaluated at |d| = {ad.max():.4g} > d_max = {self.d_max:.4g}")
            return _spline(self.d_samples, self.v_samples)(ad)
        raise ConfigurationError(f"unknown potential kind {self.kind!r}")


@lru_cache(maxsize=16)
def _spline(d: tuple, v: tuple) -> CubicSpline:
    # zero slope at d = 0 keeps V(|d|) smooth through the origin
    return CubicSpline(np.array(d), np.array(v), bc_type=((1, 0.0), "not-a-knot"))


def dimensionless_coordinate(spec: OscillatorSpec, x2):
    return np.asarray(x2, dtype=float) / spec.length_scale


def _check_order(n: int) -> None:
    if not 0 <= n <= N_MAX_GLOBAL:
        raise ConfigurationError(f"Hermite order {n} outside [0, {N_MAX_GLOBAL}]")


def hermite_table(n_max: int, X) -> np.ndarray:
    """``H_0 .. H_{n_max}`` at ``X``; shape ``(n_max + 1,) + X.shape``."""
    _check_order(n_max)
    X = np.asarray(X, dtype=float)
    out = np.empty((n_max + 1,) + X.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = 2.0 * X
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_max):
            out[n + 1] = 2.0 * X * out[n] - 2.0 * n * out[n - 1]
    bad = ~np.isfinite(out)
    if bad.any():
        n_bad, *idx = np.argwhere(bad)[0]
        x_bad = X[tuple(idx)] if X.ndim else float(X)
        raise NumericalError(f"H_{n_bad}({x_bad}) overflows double precision")
    return out


def hermite(n: int, X):
    """Physicists' Hermite polynomial via ``H_{n+1} = 2X H_n - 2n H_{n-1}``."""
    return hermite_table(n, X)[n]


def normalized_hermite_table(n_max: int, X) -> np.ndarray:
    """``H_n(X) / sqrt(2^n n! sqrt(pi))`` for ``n = 0..n_max`` by the normalised recurrence."""
    _check_order(n_max)
    X = np.asarray(X, dtype=float)
    out = np.empty((n_max + 1,) + X.shape)
    out[0] = np.pi**-0.25
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * X * out[0]
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_max):
            out[n + 1] = math.sqrt(2.0 / (n + 1)) * X * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"normalised Hermite table overflows for |X| up to {np.max(np.abs(X)):.4g}")
    return out


def eigenfunction(spec: OscillatorSpec, n: int, X):
    """Oscillator eigenfunction ``phi_n(X)``, orthonormal with respect to ``dX``."""
    X = np.asarray(X, dtype=float)
    return normalized_hermite_table(n, X)[n] * np.exp(-0.5 * X**2)


@lru_cache(maxsize=32)
def gauss_hermite(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``int exp(-X^2) f(X) dX`` (Golub-Welsch)."""
    if n_nodes < 1:
        raise ConfigurationError("need at least one quadrature node")
    off = np.sqrt(np.arange(1, n_nodes) / 2.0)
    nodes, vecs = eigh_tridiagonal(np.zeros(n_nodes), off)
    weights = math.sqrt(math.pi) * vecs[0] ** 2
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _x1_values(x1_grid) -> np.ndarray:
    return x1_grid.x if isinstance(x1_grid, Grid1D) else np.atleast_1d(np.asarray(x1_grid, dtype=float))


def _sample_potential(spec: OscillatorSpec, V: Callable, x1: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    d = x1[:, None] - spec.length_scale * nodes[None, :]
    vals = np.asarray(V(d), dtype=float)
    if vals.shape != d.shape:
        vals = np.broadcast_to(vals, d.shape)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("interaction potential returned non-finite values")
    return vals


@dataclass
class ExpansionCoefficients:
    """``values[n, j] = V_n(x1[j])`` for ``n = 0..n_max``."""

    n_max: int
    x1: np.ndarray
    values: np.ndarray

    def reconstruct(self, X, n_terms: int | None = None) -> np.ndarray:
        """``sum_{n < n_terms} H_n(X) V_n(x1)``, shape ``(len(x1), len(X))``."""
        n_terms = self.n_max + 1 if n_terms is None else n_terms
        H = hermite_table(n_terms - 1, np.atleast_1d(X))
        return self.values[:n_terms].T @ H


def expand_potential(
    spec: OscillatorSpec, V: Callable, x1_grid, n_max: int, quad_nodes: int
) -> ExpansionCoefficients:
    """Hermite coefficients ``V_n(x1)`` of ``V(x1 - a X)`` by Gauss-Hermite quadrature."""
    _check_order(n_max)
    if quad_nodes < 2 * n_max:
        raise ConfigurationError(f"quad_nodes={quad_nodes} must be >= 2*n_max={2 * n_max}")
    x1 = _x1_values(x1_grid)
    nodes, weights = gauss_hermite(quad_nodes)
    vals = _sample_potential(spec, V, x1, nodes)
    hn = normalized_hermite_table(n_max, nodes)
    # V_n = (pi^{1/4} sqrt(2^n n!))^{-1} sum_i w_i hn_i V_i
    n = np.arange(n_max + 1)
    scale = np.exp(-0.25 * math.log(math.pi) - 0.5 * (n * math.log(2.0) + np.array([math.lgamma(k + 1) for k in n])))
    coeffs = (hn * weights) @ vals.T * scale[:, None]
    return ExpansionCoefficients(n_max, x1, coeffs)


def potential_matrix(spec: OscillatorSpec, V: Callable, x1_grid, n_channels: int, quad_nodes: int) -> np.ndarray:
    """Channel coupling ``V_{n'n}(x1)``, shape ``(len(x1), n_channels, n_channels)``."""
    if not 1 <= n_channels <= N_MAX_GLOBAL + 1:
        raise ConfigurationError(f"n_channels={n_channels} outside [1, {N_MAX_GLOBAL + 1}]")
    if quad_nodes < 2 * n_channels + 20:
        raise ConfigurationError(f"quad_nodes={quad_nodes} must be >= 2*n_channels + 20 = {2 * n_channels + 20}")
    x1 = _x1_values(x1_grid)
    nodes, weights = gauss_hermite(quad_nodes)
    vals = _sample_potential(spec, V, x1, nodes)
    hn = normalized_hermite_table(n_channels - 1, nodes)
    prod = (hn[:, None, :] * hn[None, :, :]).reshape(n_channels * n_channels, -1)
    mat = ((vals * weights) @ prod.T).reshape(len(x1), n_channels, n_channels)
    return 0.5 * (mat + np.swapaxes(mat, 1, 2))


def hermite_bracket(n_out: int, m: int, n_in: int, quad_nodes: int = 120) -> float:
    """``<phi_n_out| H_m(X) |phi_n_in>`` by quadrature (exact for enough nodes)."""
    nodes, weights = gauss_hermite(quad_nodes)
    hn = normalized_hermite_table(max(n_out, n_in), nodes)
    return float(np.sum(weights * hn[n_out] * hn[n_in] * hermite(m, nodes)))
