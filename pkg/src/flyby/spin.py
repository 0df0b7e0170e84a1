"""Spin-1/2 operators, the Zeeman term and the dipole-dipole coupling.

Joint spin states are ordered ``(uu, ud, du, dd)`` with the first label
belonging to the trapped particle and the second to the flyby particle.
Particle 1 sits at the origin, particle 2 moves on the line ``y = b`` and
the field points along ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = ["EncCoupling", "spin_operators", "zeeman_matrix", "dipole_matrix", "spin_potential", "BRANCH_LABELS"]

BRANCH_LABELS = ("uu", "ud", "du", "dd")

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True)
class EncCoupling:
    """Parameters of the two-spin interaction.

    ``g`` is the dipole strength (energy x length^3), ``b`` the impact
    parameter, ``gamma`` the gyromagnetic ratio of particle 1 and ``B`` the
    field magnitude at particle 1.
    """

    g: float
    b: float
    gamma: float
    B: float
    hbar: float = 1.0

    def __post_init__(self):
        if not self.b > 0:
            raise ConfigurationError(f"impact parameter b must be > 0, got {self.b}")
        if not self.B >= 0:
            raise ConfigurationError(f"field magnitude B must be >= 0, got {self.B}")
        if not np.isfinite(self.g) or not np.isfinite(self.gamma):
            raise ConfigurationError("g and gamma must be finite")
        if not self.hbar > 0:
            raise ConfigurationError(f"hbar must be > 0, got {self.hbar}")

    @property
    def zeeman_splitting(self) -> float:
        return abs(self.gamma * self.B * self.hbar)


def spin_operators(hbar: float = 1.0) -> dict[str, np.ndarray]:
    """Keys ``S1x, S1y, S1z, S2x, S2y, S2z`` as 4x4 matrices on the joint space."""
    eye = np.eye(2, dtype=complex)
    ops = {}
    for name, s in zip("xyz", _PAULI):
        ops[f"S1{name}"] = np.kron(0.5 * hbar * s, eye)
        ops[f"S2{name}"] = np.kron(eye, 0.5 * hbar * s)
    return ops


def zeeman_matrix(coupling: EncCoupling) -> np.ndarray:
    """``-gamma B S1z``; the ``s1 = down`` sector sits ``gamma B hbar`` above ``s1 = up``."""
    return -coupling.gamma * coupling.B * spin_operators(coupling.hbar)["S1z"]


def dipole_matrix(coupling: EncCoupling, x) -> np.ndarray:
    """Dipole-dipole coupling ``(g/r^3)[S1.S2 - 3 (S1.n)(S2.n)]`` at flight coordinate ``x``.

    ``n = (x, b, 0)/r`` is the unit separation vector.  A scalar ``x`` gives a
    4x4 matrix, an array gives shape ``x.shape + (4, 4)``.
    """
    x = np.asarray(x, dtype=float)
    ops = spin_operators(coupling.hbar)
    s1 = [ops["S1x"], ops["S1y"], ops["S1z"]]
    s2 = [ops["S2x"], ops["S2y"], ops["S2z"]]
    r = np.hypot(x, coupling.b)
    nx, ny = x / r, coupling.b / r
    dot = sum(a @ b for a, b in zip(s1, s2))
    xx, xy, yx, yy = s1[0] @ s2[0], s1[0] @ s2[1], s1[1] @ s2[0], s1[1] @ s2[1]
    nx_, ny_ = nx[..., None, None], ny[..., None, None]
    tensor = nx_**2 * xx + nx_ * ny_ * (xy + yx) + ny_**2 * yy
    return (coupling.g / r**3)[..., None, None] * (dot - 3.0 * tensor)


def spin_potential(coupling: EncCoupling, x) -> np.ndarray:
    """Pointwise Zeeman + dipole matrix field."""
    return zeeman_matrix(coupling) + dipole_matrix(coupling, x)
