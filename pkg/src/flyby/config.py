"""Experiment configuration files (YAML) and their validation.

Unknown fields are rejected everywhere.  Validation errors are reported as
:class:`~flyby.errors.ConfigurationError` with a dotted path to the
offending field, e.g. ``enc.m: Field required``.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import grids, oscillator, spin
from .oscillator import N_MAX_GLOBAL
from .errors import ConfigurationError

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "dump_config",
    "spin_vector",
]

KINDS = ("enc-run", "enc-scan-b", "nash-smatrix", "nash-wavepacket", "hermite-check")
_REQUIRED_BLOCKS = {
    "enc-run": {"enc"},
    "enc-scan-b": {"enc", "scan"},
    "nash-smatrix": {"nash"},
    "nash-wavepacket": {"nash", "wavepacket"},
    "hermite-check": {"hermite"},
}
_ALL_BLOCKS = {"enc", "scan", "nash", "wavepacket", "hermite"}

_NAMED_SPINS = {
    "up": (1.0, 0.0),
    "down": (0.0, 1.0),
    "plus_x": (1 / math.sqrt(2), 1 / math.sqrt(2)),
    "minus_x": (1 / math.sqrt(2), -1 / math.sqrt(2)),
    "plus_y": (1 / math.sqrt(2), 1j / math.sqrt(2)),
    "minus_y": (1 / math.sqrt(2), -1j / math.sqrt(2)),
}

SpinEntry = Union[float, tuple[float, float]]


def spin_vector(value) -> tuple[complex, complex]:
    """Named state or two amplitudes (real, or ``[re, im]`` pairs)."""
    if isinstance(value, str):
        return tuple(complex(c) for c in _NAMED_SPINS[value])
    return tuple(complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c) for c in value)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridBlock(_Strict):
    x_min: float
    x_max: float
    n_points: int

    def build(self) -> grids.Grid1D:
        return grids.make_grid(self.x_min, self.x_max, self.n_points)


class PacketBlock(_Strict):
    x0: float
    k0: float
    sigma: float = Field(gt=0)
    direction: Literal[1, -1] = 1


class CouplingBlock(_Strict):
    g: float
    b: float = Field(gt=0)
    gamma: float
    B: float = Field(ge=0)


class EncBlock(_Strict):
    grid: GridBlock
    packet: PacketBlock
    coupling: CouplingBlock
    m: float = Field(gt=0)
    hbar: float = Field(default=1.0, gt=0)
    spin1_init: Union[Literal[tuple(_NAMED_SPINS)], tuple[SpinEntry, SpinEntry]] = "down"
    spin2_init: Union[Literal[tuple(_NAMED_SPINS)], tuple[SpinEntry, SpinEntry]] = "plus_x"
    dt: float = Field(gt=0)
    t_final: float = Field(gt=0)
    ledger_stride: int = Field(default=100, ge=1)

    def build(self, B: float | None = None):
        from .enc import EncConfig

        c = self.coupling
        return EncConfig(
            grid=self.grid.build(),
            packet=grids.WavepacketSpec(self.packet.x0, self.packet.k0, self.packet.sigma, self.packet.direction),
            coupling=spin.EncCoupling(c.g, c.b, c.gamma, c.B if B is None else B, self.hbar),
            m=self.m,
            spin1_init=spin_vector(self.spin1_init),
            spin2_init=spin_vector(self.spin2_init),
            dt=self.dt,
            t_final=self.t_final,
            ledger_stride=self.ledger_stride,
        )


class ScanBlock(_Strict):
    B_values: tuple[float, ...] = Field(min_length=1)
    workers: int = Field(default=1, ge=1)

    @field_validator("B_values")
    @classmethod
    def _non_negative(cls, v):
        if any(b < 0 for b in v):
            raise ValueError("field values must be >= 0")
        return v


class OscillatorBlock(_Strict):
    M: float = Field(gt=0)
    Omega: float = Field(gt=0)
    hbar: float = Field(default=1.0, gt=0)

    def build(self) -> oscillator.OscillatorSpec:
        return oscillator.OscillatorSpec(self.M, self.Omega, self.hbar)


class PotentialBlock(_Strict):
    kind: Literal["gaussian", "soft_core", "tabulated"]
    V0: Optional[float] = None
    w: Optional[float] = None
    steepness: Optional[float] = None
    d: Optional[tuple[float, ...]] = None
    v: Optional[tuple[float, ...]] = None

    @model_validator(mode="after")
    def _fields_for_kind(self):
        need = {"gaussian": ("V0", "w"), "soft_core": ("V0", "w", "steepness"), "tabulated": ("d", "v")}[self.kind]
        missing = [n for n in need if getattr(self, n) is None]
        if missing:
            raise ValueError(f"potential kind {self.kind!r} requires {', '.join(missing)}")
        extra = [n for n in ("V0", "w", "steepness", "d", "v") if n not in need and getattr(self, n) is not None]
        if extra:
            raise ValueError(f"potential kind {self.kind!r} does not take {', '.join(extra)}")
        return self

    def build(self) -> oscillator.PotentialSpec:
        if self.kind == "gaussian":
            return oscillator.PotentialSpec.gaussian(self.V0, self.w)
        if self.kind == "soft_core":
            return oscillator.PotentialSpec.soft_core(self.V0, self.w, self.steepness)
        return oscillator.PotentialSpec.tabulated(self.d, self.v)


class NashBlock(_Strict):
    oscillator: OscillatorBlock
    potential: PotentialBlock
    m: float = Field(gt=0)
    E_total: Union[float, tuple[float, ...]]
    n_channels: Optional[int] = Field(default=None, ge=3)
    closed_buffer: int = Field(default=10, ge=2)
    quad_nodes: Optional[int] = Field(default=None, ge=2)
    smatrix_grid: GridBlock = GridBlock(x_min=-20.0, x_max=20.0, n_points=4096)

    @property
    def energies(self) -> tuple[float, ...]:
        return (self.E_total,) if isinstance(self.E_total, float) else tuple(self.E_total)


class WavepacketBlock(_Strict):
    grid: GridBlock
    incoming: int = Field(default=0, ge=0)
    sigma_factor: float = Field(default=60.0, gt=0)
    x0: Optional[float] = None
    direction: Literal[1, -1] = 1
    dt: float = Field(gt=0)
    t_final: float = Field(gt=0)
    ledger_stride: int = Field(default=100, ge=1)


class HermiteBlock(_Strict):
    oscillator: OscillatorBlock
    potential: PotentialBlock
    x1_grid: GridBlock
    n_max: int = Field(default=12, ge=1, le=N_MAX_GLOBAL)
    n_channels: int = Field(default=7, ge=1)
    quad_nodes: int = Field(default=60, ge=2)


class ExperimentConfig(_Strict):
    kind: Literal[KINDS]
    output_dir: str = "results"
    emit: tuple[Literal["csv", "json"], ...] = ("csv", "json")
    enc: Optional[EncBlock] = None
    scan: Optional[ScanBlock] = None
    nash: Optional[NashBlock] = None
    wavepacket: Optional[WavepacketBlock] = None
    hermite: Optional[HermiteBlock] = None

    @field_validator("emit")
    @classmethod
    def _dedupe(cls, v):
        return tuple(sorted(set(v)))

    @model_validator(mode="after")
    def _blocks_match_kind(self):
        need = _REQUIRED_BLOCKS[self.kind]
        present = {b for b in _ALL_BLOCKS if getattr(self, b) is not None}
        missing = sorted(need - present)
        if missing:
            raise ValueError(f"kind {self.kind!r} requires block(s): {', '.join(missing)}")
        extra = sorted(present - need)
        if extra:
            raise ValueError(f"kind {self.kind!r} does not use block(s): {', '.join(extra)}")
        return self


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("<root>: config must be a mapping")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(_format_validation(exc)) from None
    _check_physics(cfg)
    return cfg


def _check_physics(cfg: ExperimentConfig) -> None:
    """Build the module-level objects once so their invariants are checked up front."""
    try:
        if cfg.enc is not None:
            cfg.enc.build()
        if cfg.nash is not None:
            cfg.nash.oscillator.build()
            cfg.nash.potential.build()
            cfg.nash.smatrix_grid.build()
        if cfg.wavepacket is not None:
            cfg.wavepacket.grid.build()
        if cfg.hermite is not None:
            cfg.hermite.oscillator.build()
            cfg.hermite.potential.build()
            cfg.hermite.x1_grid.build()
    except ConfigurationError as exc:
        raise ConfigurationError(f"{cfg.kind}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    """Normalised YAML; ``parse_config(yaml.safe_load(dump_config(c))) == c``."""
    data = cfg.model_dump(mode="json", exclude_none=True)
    return yaml.safe_dump(data, sort_keys=False)


def config_echo(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json", exclude_none=True)
