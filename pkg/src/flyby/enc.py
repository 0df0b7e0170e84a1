"""Two-spin flyby: a trapped spin in a field and a moving spin that passes by.

The Hamiltonian is ``p^2/2m (x) 1_4 - gamma B S1z + D(x)`` where ``x`` is the
flight coordinate of particle 2 and ``D`` the dipole coupling from
:mod:`flyby.spin`.  After the flyby, the state is split by joint spin
outcome and each branch's kinetic energy is compared with the Zeeman energy
it released or absorbed.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, ContractError, FlybyError, InteractionActiveError
from .grids import ComplexField, Grid1D, WavepacketSpec, gaussian_packet, momentum_histogram, to_momentum
from .spin import BRANCH_LABELS, EncCoupling, dipole_matrix, zeeman_matrix
from .splitop import EnergyLedger, SplitOperator

__all__ = [
    "EncConfig",
    "Branch",
    "BranchReport",
    "ScanRow",
    "EncRunResult",
    "initial_state",
    "apply_hamiltonian",
    "propagate",
    "branch_decompose",
    "spin_density_matrix",
    "entanglement_entropy",
    "run_enc",
    "scan_field",
]

UP = np.array([1.0, 0.0], dtype=complex)
DOWN = np.array([0.0, 1.0], dtype=complex)


@dataclass(frozen=True)
class EncConfig:
    grid: Grid1D
    packet: WavepacketSpec
    coupling: EncCoupling
    m: float
    spin1_init: tuple
    spin2_init: tuple
    dt: float
    t_final: float
    ledger_stride: int = 100

    def __post_init__(self):
        object.__setattr__(self, "spin1_init", tuple(complex(c) for c in self.spin1_init))
        object.__setattr__(self, "spin2_init", tuple(complex(c) for c in self.spin2_init))
        if not self.m > 0:
            raise ConfigurationError(f"mass m must be > 0, got {self.m}")
        for name in ("spin1_init", "spin2_init"):
            v = np.array(getattr(self, name))
            if v.shape != (2,):
                raise ConfigurationError(f"{name} must be a 2-vector")
            if abs(np.vdot(v, v).real - 1.0) > 1e-12:
                raise ConfigurationError(f"{name} is not normalised (|v|^2 = {np.vdot(v, v).real!r})")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        steps = self.t_final / self.dt
        if not self.t_final > 0 or abs(steps - round(steps)) > 1e-6 or round(steps) > 10**7:
            raise ConfigurationError(f"t_final/dt = {steps} must be an integer in [1, 1e7]")
        margin = self.dt * self.grid.max_kinetic(self.m, self.coupling.hbar) / self.coupling.hbar
        if not margin < 0.5:
            raise ConfigurationError(f"dt * max kinetic energy / hbar = {margin:.3f} must be < 0.5")
        if self.ledger_stride < 1:
            raise ConfigurationError("ledger_stride must be >= 1")
        self.packet.validate(self.grid)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def initial_s1(self) -> int | None:
        """Index of the Zeeman eigenstate particle 1 starts in (0 = up, 1 = down), else None."""
        v = np.abs(np.array(self.spin1_init))
        for idx in (0, 1):
            if abs(v[idx] - 1.0) < 1e-12:
                return idx
        return None


@lru_cache(maxsize=8)
def _propagator(grid: Grid1D, coupling: EncCoupling, m: float, dt: float) -> SplitOperator:
    zee = zeeman_matrix(coupling)
    dip = dipole_matrix(coupling, grid.x)
    return SplitOperator(grid, m, coupling.hbar, zee, dip, dt)


def _check_grid(state: ComplexField, config: EncConfig) -> None:
    if state.grid != config.grid or state.components != 4:
        raise ContractError("state does not live on the configured grid with 4 spin components")


def initial_state(config: EncConfig) -> ComplexField:
    """Product of the Gaussian packet and ``spin1 (x) spin2``."""
    packet = gaussian_packet(config.grid, config.packet, components=1).amplitudes[:, 0]
    spins = np.kron(np.array(config.spin1_init), np.array(config.spin2_init))
    return ComplexField(config.grid, packet[:, None] * spins[None, :])


def apply_hamiltonian(state: ComplexField, config: EncConfig) -> ComplexField:
    _check_grid(state, config)
    op = _propagator(config.grid, config.coupling, config.m, config.dt)
    return ComplexField(config.grid, op.apply_hamiltonian(state.amplitudes.T).T)


def propagate(state: ComplexField, config: EncConfig) -> tuple[ComplexField, EnergyLedger]:
    """Evolve ``state`` to ``config.t_final``; the ledger is sampled every ``ledger_stride`` steps."""
    _check_grid(state, config)
    op = _propagator(config.grid, config.coupling, config.m, config.dt)
    psi, ledger = op.run(state.amplitudes.T, config.t_final, config.ledger_stride)
    return ComplexField(config.grid, psi.T), ledger


def spin_density_matrix(state: ComplexField) -> np.ndarray:
    """Reduced 4x4 joint-spin density matrix (spatial coordinate traced out)."""
    psi = state.amplitudes
    rho = psi.T @ psi.conj() * state.grid.dx
    return rho / np.trace(rho).real


def entanglement_entropy(rho: np.ndarray) -> float:
    """Von Neumann entropy (natural log) of a density matrix."""
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log(w)))


@dataclass(frozen=True)
class Branch:
    label: str
    s1: int
    s2: int
    probability: float
    mean_momentum: float
    mean_kinetic: float
    zeeman_energy: float


@dataclass
class BranchReport:
    branches: list[Branch]
    k_edges: np.ndarray
    histogram: np.ndarray  # (bins, 4): momentum probability per branch

    def probability(self, label: str) -> float:
        return self[label].probability

    def __getitem__(self, label: str) -> Branch:
        for b in self.branches:
            if b.label == label:
                return b
        raise KeyError(label)

    def flip_probability(self, initial_s1: int) -> float:
        return float(sum(b.probability for b in self.branches if b.s1 != initial_s1))

    def noflip_kinetic(self, initial_s1: int) -> float:
        keep = [b for b in self.branches if b.s1 == initial_s1 and b.probability > 0]
        total = sum(b.probability for b in keep)
        return float(sum(b.probability * b.mean_kinetic for b in keep) / total) if total > 0 else math.nan

    def kinetic_shifts(self, initial_s1: int) -> dict[str, float]:
        """``E_kin(flip branch) - E_kin(no-flip branches)`` for each populated flip branch."""
        ref = self.noflip_kinetic(initial_s1)
        return {b.label: b.mean_kinetic - ref for b in self.branches if b.s1 != initial_s1 and b.probability > 0}

    def mean_flip_shift(self, initial_s1: int) -> float:
        flips = [b for b in self.branches if b.s1 != initial_s1 and b.probability > 0]
        total = sum(b.probability for b in flips)
        if total == 0:
            return math.nan
        ref = self.noflip_kinetic(initial_s1)
        return float(sum(b.probability * (b.mean_kinetic - ref) for b in flips) / total)

    def kinetic_plus_zeeman(self) -> float:
        return float(sum(b.probability * (b.mean_kinetic + b.zeeman_energy) for b in self.branches))


def branch_decompose(state: ComplexField, config: EncConfig, bins: int = 64, int_tol: float = 1e-6) -> BranchReport:
    """Project the final state onto the four joint-spin outcomes.

    Refuses while the dipole coupling still contributes more than ``int_tol``
    of the total energy, since branch energies are then not separately defined.
    """
    _check_grid(state, config)
    op = _propagator(config.grid, config.coupling, config.m, config.dt)
    m = op.measure(state.amplitudes.T)
    if abs(m["E_int"]) >= int_tol * abs(m["E_total"]):
        raise InteractionActiveError(
            f"interaction energy {m['E_int']:.3e} is not negligible against total {m['E_total']:.3e}; "
            "propagate further before branch analysis"
        )
    hbar = config.coupling.hbar
    grid = config.grid
    phi = sfft.fft(state.amplitudes, axis=0)
    weights = np.abs(phi) ** 2
    zee = np.real(np.diag(zeeman_matrix(config.coupling)))
    norms = state.component_norms()
    branches = []
    for c, label in enumerate(BRANCH_LABELS):
        w = weights[:, c]
        tot = w.sum()
        if tot > 0:
            mean_p = float(np.sum(hbar * grid.k_values * w) / tot)
            mean_t = float(np.sum(grid.kinetic(config.m, hbar) * w) / tot)
        else:
            mean_p = mean_t = math.nan
        branches.append(Branch(label, c // 2, c % 2, float(norms[c]), mean_p, mean_t, float(zee[c])))
    edges, hist = momentum_histogram(to_momentum(state), bins=bins)
    return BranchReport(branches, edges, hist)


@dataclass
class EncRunResult:
    config: EncConfig
    ledger: EnergyLedger
    report: BranchReport
    final: ComplexField
    entropy_initial: float
    entropy_final: float

    @property
    def initial_s1(self) -> int | None:
        return self.config.initial_s1()

    @property
    def flip_probability(self) -> float:
        s1 = self.initial_s1
        return math.nan if s1 is None else self.report.flip_probability(s1)

    @property
    def zeeman_change(self) -> float:
        """Zeeman energy change of particle 1 on a flip (``-/+ gamma B hbar``)."""
        s1 = self.initial_s1
        if s1 is None:
            return math.nan
        zee = np.real(np.diag(zeeman_matrix(self.config.coupling)))
        return float(zee[2 * (1 - s1)] - zee[2 * s1])


def run_enc(config: EncConfig) -> EncRunResult:
    """Full pipeline: build the initial product state, propagate, decompose."""
    psi0 = initial_state(config)
    s0 = entanglement_entropy(spin_density_matrix(psi0))
    final, ledger = propagate(psi0, config)
    report = branch_decompose(final, config)
    s1 = entanglement_entropy(spin_density_matrix(final))
    return EncRunResult(config, ledger, report, final, s0, s1)


@dataclass(frozen=True)
class ScanRow:
    B: float
    P_flip: float
    dE_kin_flip: float
    drift: float
    shifts: dict
    zeeman_change: float


def _scan_point(config: EncConfig) -> ScanRow:
    try:
        res = run_enc(config)
    except FlybyError as exc:
        raise type(exc)(f"B={config.coupling.B}: {exc}") from exc
    s1 = res.initial_s1
    return ScanRow(
        B=config.coupling.B,
        P_flip=res.flip_probability,
        dE_kin_flip=res.report.mean_flip_shift(s1),
        drift=res.ledger.energy_drift(),
        shifts=res.report.kinetic_shifts(s1),
        zeeman_change=res.zeeman_change,
    )


def scan_field(template: EncConfig, B_values, workers: int = 1) -> list[ScanRow]:
    """Run the flyby for each field value; rows are returned in input order."""
    if template.initial_s1() is None:
        raise ConfigurationError("field scans require spin1_init to be a Zeeman eigenstate (|up> or |down>)")
    configs = [replace(template, coupling=replace(template.coupling, B=float(B))) for B in B_values]
    if workers <= 1 or len(configs) <= 1:
        return [_scan_point(c) for c in configs]
    with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
        return list(pool.map(_scan_point, configs))


def flip_turnover(rows: list[ScanRow]) -> int:
    """Index of the largest flip probability in a scan."""
    return int(np.argmax([r.P_flip for r in rows]))
