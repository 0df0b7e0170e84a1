"""Experiment dispatch and report writing.

Each experiment kind produces a :class:`Report`: named CSV tables, a JSON
summary and a small set of headline metrics.  :func:`emit_report` writes
the tables and summary (byte-identical for identical configs);
:func:`run_config` additionally writes ``manifest.json`` with the config
echo, toolkit version, wall time and headline metrics, or ``error.json``
on failure.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from . import __version__
from .channels import (
    make_channels,
    reciprocity_defect,
    solve_smatrix,
    transition_probabilities,
    unitarity_defect,
)
from .config import ExperimentConfig, config_echo
from .enc import flip_turnover, run_enc, scan_field
from .errors import ConfigurationError, DomainError, FlybyError
from .grids import WavepacketSpec
from .io import write_csv, write_json
from .nash import extract_quanta_exchange, incoming_packet, matched_wavenumber, propagate_channels
from .oscillator import (
    expand_potential,
    gauss_hermite,
    hermite_bracket,
    hermite_table,
    potential_matrix,
)
from .splitop import EnergyLedger
from .spin import BRANCH_LABELS

__all__ = ["Report", "RunOutcome", "execute", "emit_report", "run_config", "exit_code_for"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


@dataclass
class Report:
    kind: str
    tables: dict = field(default_factory=dict)  # filename -> (header, rows)
    summary: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)


@dataclass
class RunOutcome:
    exit_code: int
    files: list
    manifest: dict


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigurationError, DomainError)):
        return EXIT_CONFIG
    if isinstance(exc, FlybyError):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_NUMERICAL


def _ledger_table(ledger: EnergyLedger):
    return EnergyLedger.COLUMNS, ledger.rows()


# -- flyby model ----------------------------------------------------------------


def _enc_run(cfg: ExperimentConfig, workers: int) -> Report:
    res = run_enc(cfg.enc.build())
    rep = Report(cfg.kind)
    rep.tables["ledger.csv"] = _ledger_table(res.ledger)
    rep.tables["branches.csv"] = (
        ("branch", "s1", "s2", "probability", "mean_momentum", "mean_kinetic", "zeeman_energy"),
        [(b.label, b.s1, b.s2, b.probability, b.mean_momentum, b.mean_kinetic, b.zeeman_energy)
         for b in res.report.branches],
    )
    edges, hist = res.report.k_edges, res.report.histogram
    rep.tables["momentum_histogram.csv"] = (
        ("k_low", "k_high") + tuple(f"P_{lab}" for lab in BRANCH_LABELS),
        [(edges[i], edges[i + 1], *hist[i]) for i in range(len(hist))],
    )
    s1 = res.initial_s1
    metrics = {
        "energy_drift": res.ledger.energy_drift(),
        "variance_drift": res.ledger.variance_drift(),
        "norm_defect": res.ledger.norm_defect(),
        "P_flip": res.flip_probability,
    }
    if s1 is not None:
        metrics["zeeman_change"] = res.zeeman_change
        metrics["dE_kin_flip"] = res.report.kinetic_shifts(s1)
    rep.metrics = metrics
    rep.summary = dict(
        metrics,
        entanglement_entropy_initial=res.entropy_initial,
        entanglement_entropy_final=res.entropy_final,
        branches={b.label: {"probability": b.probability, "mean_momentum": b.mean_momentum,
                            "mean_kinetic": b.mean_kinetic} for b in res.report.branches},
        E_total_initial=float(res.ledger.E_total[0]),
        E_total_final=float(res.ledger.E_total[-1]),
    )
    return rep


def _enc_scan(cfg: ExperimentConfig, workers: int) -> Report:
    rows = scan_field(cfg.enc.build(), cfg.scan.B_values, workers=workers)
    rep = Report(cfg.kind)
    rep.tables["scan.csv"] = (
        ("B", "P_flip", "dE_kin_flip", "drift"),
        [(r.B, r.P_flip, r.dE_kin_flip, r.drift) for r in rows],
    )
    i_max = flip_turnover(rows)
    tail = [r.P_flip for r in rows[i_max:]]
    p_max = rows[i_max].P_flip
    rep.metrics = {
        "P_flip": [r.P_flip for r in rows],
        "turnover_B": rows[i_max].B,
        "tail_strictly_decreasing": bool(all(b < a for a, b in zip(tail, tail[1:]))),
        "suppression_ratio": rows[-1].P_flip / p_max if p_max > 0 else math.nan,
        "max_drift": max(r.drift for r in rows),
    }
    rep.summary = dict(rep.metrics, rows=[
        {"B": r.B, "P_flip": r.P_flip, "dE_kin_flip": r.dE_kin_flip, "drift": r.drift,
         "branch_shifts": r.shifts, "zeeman_change": r.zeeman_change} for r in rows
    ])
    return rep


# -- trapped-oscillator model ---------------------------------------------------


def _quad_nodes(nash, n_channels: int) -> int:
    return nash.quad_nodes if nash.quad_nodes is not None else 2 * n_channels + 40


def _nash_smatrix(cfg: ExperimentConfig, workers: int) -> Report:
    nash = cfg.nash
    spec, V, grid = nash.oscillator.build(), nash.potential.build(), nash.smatrix_grid.build()
    rep = Report(cfg.kind)
    s_rows, p_rows, e_rows, mats = [], [], [], []
    vcache = {}
    for E in nash.energies:
        ch = make_channels(spec, nash.m, E, nash.n_channels, nash.closed_buffer)
        if ch.n_channels not in vcache:
            vcache[ch.n_channels] = potential_matrix(spec, V, grid, ch.n_channels, _quad_nodes(nash, ch.n_channels))
        S = solve_smatrix(ch, vcache[ch.n_channels], grid)
        for block, arr in (("R", S.R), ("T", S.T), ("R_right", S.R_right), ("T_right", S.T_right)):
            for n_out in range(arr.shape[0]):
                for n_in in range(arr.shape[1]):
                    z = arr[n_out, n_in]
                    s_rows.append((E, block, n_out, n_in, z.real, z.imag))
        p_rows.extend(transition_probabilities(S).rows())
        e_rows.append((E, ch.open_count, ch.n_channels, unitarity_defect(S), reciprocity_defect(S)))
        mats.append(S.to_dict())
    rep.tables["smatrix.csv"] = (("E_total", "block", "n_out", "n_in", "re", "im"), s_rows)
    rep.tables["probabilities.csv"] = (("E_total", "n_in", "n_out", "P_reflection", "P_transmission"), p_rows)
    rep.tables["energy_scan.csv"] = (
        ("E_total", "open_count", "n_channels", "unitarity_defect", "reciprocity_defect"), e_rows
    )
    rep.metrics = {
        "unitarity_defect": max(r[3] for r in e_rows),
        "reciprocity_defect": max(r[4] for r in e_rows),
    }
    rep.summary = dict(rep.metrics, smatrices=mats)
    return rep


def coupling_range(grid_x: np.ndarray, Vmat: np.ndarray, rel: float = 1e-10) -> float:
    """Largest ``|x1|`` where the channel coupling exceeds ``rel`` of its peak."""
    mag = np.max(np.abs(Vmat), axis=(1, 2))
    peak = mag.max()
    if peak == 0:
        return 0.0
    return float(np.max(np.abs(grid_x[mag >= rel * peak])))


def _nash_wavepacket(cfg: ExperimentConfig, workers: int) -> Report:
    nash, wp = cfg.nash, cfg.wavepacket
    if len(nash.energies) != 1:
        raise ConfigurationError("nash.E_total: nash-wavepacket needs a single energy")
    spec, V = nash.oscillator.build(), nash.potential.build()
    grid = wp.grid.build()
    ch = make_channels(spec, nash.m, nash.energies[0], nash.n_channels, nash.closed_buffer)
    q = _quad_nodes(nash, ch.n_channels)
    Vmat = potential_matrix(spec, V, grid, ch.n_channels, q)
    k0, sigma = matched_wavenumber(ch, wp.incoming, wp.sigma_factor)
    x0 = wp.x0 if wp.x0 is not None else -wp.direction * (coupling_range(grid.x, Vmat) + 6.0 * sigma)
    psi0 = incoming_packet(grid, ch, WavepacketSpec(x0, k0, sigma, wp.direction), wp.incoming)
    final, ledger = propagate_channels(psi0, ch, Vmat, wp.dt, wp.t_final, wp.ledger_stride)
    mean_e, spread = float(ledger.E_total[0]), float(math.sqrt(ledger.var_H[0]))
    table = extract_quanta_exchange(final, ch, Vmat, mean_e, spread, wp.incoming)

    # stationary reference at the packet's mean energy, same channel count
    sgrid = nash.smatrix_grid.build()
    ch_ref = make_channels(spec, nash.m, mean_e, ch.n_channels)
    S = solve_smatrix(ch_ref, potential_matrix(spec, V, sgrid, ch.n_channels, q), sgrid)
    P_ref = transition_probabilities(S).P_total[:, wp.incoming]

    rep = Report(cfg.kind)
    rep.tables["ledger.csv"] = _ledger_table(ledger)
    rep.tables["populations.csv"] = (
        ("time",) + tuple(f"P_{n}" for n in range(ch.n_channels)),
        [(t, *p) for t, p in zip(ledger.times, ledger.populations)],
    )
    rep.tables["quanta.csv"] = (
        ("channel", "quanta", "probability", "P_reflected", "P_transmitted", "mean_momentum", "mean_kinetic",
         "energy_closure"),
        [(r.channel, r.quanta, r.probability, r.P_reflected, r.P_transmitted, r.mean_momentum, r.mean_kinetic,
          r.energy_closure) for r in table.rows],
    )
    cross = []
    for n in range(S.open_count):
        p_wp = table.rows[n].probability
        tol = max(0.05 * P_ref[n], 0.005)
        cross.append((n, p_wp, float(P_ref[n]), abs(p_wp - P_ref[n]), tol))
    rep.tables["cross_check.csv"] = (("channel", "P_wavepacket", "P_smatrix", "abs_diff", "tolerance"), cross)
    rep.metrics = {
        "energy_drift": ledger.energy_drift(),
        "variance_drift": ledger.variance_drift(),
        "norm_defect": ledger.norm_defect(),
        "probabilities": [r.probability for r in table.rows],
        "max_cross_check_excess": max(r[3] - r[4] for r in cross),
    }
    rep.summary = dict(
        rep.metrics,
        k0=k0,
        sigma=sigma,
        x0=x0,
        mean_energy=mean_e,
        energy_spread=spread,
        max_energy_closure=table.max_closure(),
        smatrix=S.to_dict(),
    )
    return rep


def _hermite_check(cfg: ExperimentConfig, workers: int) -> Report:
    h = cfg.hermite
    spec, V, grid = h.oscillator.build(), h.potential.build(), h.x1_grid.build()
    a = spec.length_scale
    x1 = grid.x
    coeffs = expand_potential(spec, V, grid, h.n_max, max(h.quad_nodes, 2 * h.n_max))
    nq = max(h.quad_nodes, 2 * h.n_channels + 20)
    vmat = potential_matrix(spec, V, grid, h.n_channels, nq)

    checks = []
    # orthogonality of H_m, H_n under exp(-X^2) for m, n <= 12 with 80 nodes
    nodes, weights = gauss_hermite(80)
    H = hermite_table(12, nodes)
    gram = (H * weights) @ H.T
    norms = np.array([2.0**n * math.factorial(n) * math.sqrt(math.pi) for n in range(13)])
    checks.append(("hermite_orthogonality", float(np.max(np.abs(gram / np.sqrt(np.outer(norms, norms)) - np.eye(13)))), 1e-9))
    c = expand_potential(spec, lambda d: np.full_like(d, 1.7), grid, h.n_max, max(h.quad_nodes, 2 * h.n_max)).values
    target = np.zeros_like(c)
    target[0] = 1.7
    checks.append(("constant_expansion", float(np.max(np.abs(c - target))), 1e-10))
    c = expand_potential(spec, lambda d: d, grid, h.n_max, max(h.quad_nodes, 2 * h.n_max)).values
    target = np.zeros_like(c)
    target[0] = x1
    target[1] = -a / 2
    checks.append(("linear_expansion", float(np.max(np.abs(c - target))), 1e-10))
    # dense trapezoid oracle on X in [-12, 12]
    X = np.linspace(-12.0, 12.0, 100_001)
    Hd = hermite_table(h.n_max, X)
    wX = np.exp(-X**2)
    dense = np.empty_like(coeffs.values)
    for j, xv in enumerate(x1):
        f = wX * V(xv - a * X)
        dense[:, j] = trapezoid(Hd * f, X, axis=1) / np.array(
            [2.0**n * math.factorial(n) * math.sqrt(math.pi) for n in range(h.n_max + 1)])
    checks.append(("dense_quadrature_oracle", float(np.max(np.abs(coeffs.values - dense))), 1e-8))
    # V_{n'n} = sum_m V_m <phi_n'|H_m|phi_n>
    nc = min(h.n_channels, 7)
    big = expand_potential(spec, V, grid, 2 * (nc - 1), max(h.quad_nodes, 4 * (nc - 1)))
    err = 0.0
    for i in range(nc):
        for k in range(nc):
            approx = sum(big.values[mm] * hermite_bracket(i, mm, k) for mm in range(i + k + 1))
            err = max(err, float(np.max(np.abs(approx - vmat[:, i, k]))))
    checks.append(("matrix_consistency", err, 1e-8))
    vmat2 = potential_matrix(spec, V, grid, h.n_channels, 2 * nq)
    checks.append(("quadrature_refinement", float(np.max(np.abs(vmat2 - vmat))), 1e-9))

    rep = Report(cfg.kind)
    rep.tables["coefficients.csv"] = (
        ("x1",) + tuple(f"V_{n}" for n in range(h.n_max + 1)),
        [(x1[j], *coeffs.values[:, j]) for j in range(len(x1))],
    )
    pairs = [(i, k) for i in range(h.n_channels) for k in range(h.n_channels)]
    rep.tables["channel_matrix.csv"] = (
        ("x1",) + tuple(f"V_{i}_{k}" for i, k in pairs),
        [(x1[j], *(vmat[j, i, k] for i, k in pairs)) for j in range(len(x1))],
    )
    rep.tables["checks.csv"] = (
        ("check", "value", "tolerance", "passed"),
        [(name, val, tol, val < tol) for name, val, tol in checks],
    )
    rep.metrics = {name: val for name, val, _ in checks}
    rep.metrics["all_passed"] = all(val < tol for _, val, tol in checks)
    rep.summary = dict(rep.metrics, length_scale=a)
    return rep


_HANDLERS = {
    "enc-run": _enc_run,
    "enc-scan-b": _enc_scan,
    "nash-smatrix": _nash_smatrix,
    "nash-wavepacket": _nash_wavepacket,
    "hermite-check": _hermite_check,
}


def execute(cfg: ExperimentConfig, workers: int | None = None) -> Report:
    if workers is None:
        workers = cfg.scan.workers if cfg.scan is not None else 1
    return _HANDLERS[cfg.kind](cfg, workers)


def emit_report(report: Report, emit, output_dir) -> list[Path]:
    """Write CSV tables and/or ``summary.json`` into ``output_dir``."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if "csv" in emit:
        for name, (header, rows) in report.tables.items():
            files.append(write_csv(out / name, header, rows))
    if "json" in emit:
        files.append(write_json(out / "summary.json", {"kind": report.kind, **report.summary}))
    return files


def run_config(
    cfg: ExperimentConfig, output_dir=None, emit=None, workers: int | None = None
) -> RunOutcome:
    """Execute ``cfg`` and write its report, manifest or error file.  Never raises for module errors."""
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    emit = tuple(sorted(set(emit if emit is not None else cfg.emit)))
    start = time.perf_counter()
    try:
        report = execute(cfg, workers)
        files = emit_report(report, emit, out)
    except (FlybyError, OSError) as exc:
        code = exit_code_for(exc)
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, "kind": cfg.kind}
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "error.json", err)
        except OSError:
            pass
        return RunOutcome(code, [], err)
    manifest = {
        "kind": cfg.kind,
        "toolkit_version": __version__,
        "config": config_echo(cfg),
        "wall_time_s": time.perf_counter() - start,
        "metrics": report.metrics,
        "files": sorted(p.name for p in files),
    }
    files.append(write_json(out / "manifest.json", manifest))
    return RunOutcome(EXIT_OK, files, manifest)
