import math

import numpy as np
import pytest

from flyby.channels import make_channels, solve_at_energy, transition_probabilities
from flyby.errors import ConfigurationError, ContractError, InteractionActiveError
from flyby.grids import WavepacketSpec, make_grid, observables
from flyby.nash import (
    extract_quanta_exchange,
    incoming_packet,
    matched_wavenumber,
    propagate_channels,
)
from flyby.oscillator import OscillatorSpec, PotentialSpec, gauss_hermite, potential_matrix

SPEC = OscillatorSpec(M=1.0, Omega=1.0)
POT = PotentialSpec.gaussian(1.0, 1.0)
GRID = make_grid(-400.0, 400.0, 2048)
E = 2.75


@pytest.fixture(scope="module")
def setup():
    ch = make_channels(SPEC, 1.0, E, n_channels=7)
    V = potential_matrix(SPEC, POT, GRID, 7, 60)
    k0, sigma = matched_wavenumber(ch, 0, 40.0)
    psi0 = incoming_packet(GRID, ch, WavepacketSpec(-(10 + 6 * sigma), k0, sigma), 0)
    return ch, V, k0, sigma, psi0


@pytest.fixture(scope="module")
def collision(setup):
    ch, V, k0, sigma, psi0 = setup
    final, ledger = propagate_channels(psi0, ch, V, 0.01, 180.0, 100)
    table = extract_quanta_exchange(final, ch, V, ledger.E_total[0], math.sqrt(ledger.var_H[0]))
    return final, ledger, table


def test_matched_packet_has_requested_mean_energy(setup):
    ch, V, k0, sigma, psi0 = setup
    assert sigma == pytest.approx(40.0 / k0)
    obs = observables(psi0, mass=1.0)
    assert obs.mean_kinetic + ch.energies[0] == pytest.approx(E, abs=1e-12)


def test_closed_incoming_channel_rejected(setup):
    ch = setup[0]
    with pytest.raises(ConfigurationError):
        matched_wavenumber(ch, 4, 40.0)
    with pytest.raises(ConfigurationError):
        incoming_packet(GRID, ch, WavepacketSpec(-100.0, 1.0, 10.0), incoming=5)


def test_shape_and_stability_contracts(setup):
    ch, V, k0, sigma, psi0 = setup
    with pytest.raises(ContractError):
        propagate_channels(psi0, ch, V[:, :5, :5], 0.01, 1.0)
    with pytest.raises(ConfigurationError, match="max kinetic"):
        propagate_channels(psi0, ch, V, 0.05, 1.0)


def test_conservation(collision):
    _, ledger, table = collision
    assert ledger.energy_drift() < 1e-6
    assert ledger.norm_defect() < 1e-10
    assert table.probabilities().sum() == pytest.approx(1.0, abs=1e-10)


def test_outcomes_match_energy_averaged_smatrix(setup, collision):
    ch, V, k0, sigma, _ = setup
    table = collision[2]
    # |phi(k)|^2 is Gaussian with exp(-2 sigma^2 (k - k0)^2); average P(E(k)) over it
    X, W = gauss_hermite(15)
    avg = np.zeros(3)
    sgrid = make_grid(-20.0, 20.0, 4096)
    for x, w in zip(X, W):
        k = k0 + x / (math.sqrt(2.0) * sigma)
        _, S = solve_at_energy(SPEC, 1.0, POT, 0.5 + 0.5 * k * k, sgrid, n_channels=7)
        p = transition_probabilities(S).P_total[:, 0]
        avg[: len(p)] += w / math.sqrt(math.pi) * p[:3]
    np.testing.assert_allclose(table.probabilities()[:3], avg, atol=1e-5)
    assert np.all(table.probabilities()[3:] < 1e-8)


def test_energy_closure_per_channel(collision):
    table = collision[2]
    assert table.max_closure() < 3 * table.energy_spread
    rows = table.rows
    assert [r.quanta for r in rows] == list(range(7))
    for r in rows[:3]:
        assert r.P_reflected + r.P_transmitted == pytest.approx(r.probability)


def test_refuses_while_coupled(setup):
    ch, V, k0, sigma, psi0 = setup
    mid, ledger = propagate_channels(psi0, ch, V, 0.01, 58.0, 100)
    with pytest.raises(InteractionActiveError):
        extract_quanta_exchange(mid, ch, V, ledger.E_total[0], math.sqrt(ledger.var_H[0]))


def test_uncoupled_packet_stays_in_its_channel():
    ch = make_channels(SPEC, 1.0, E, n_channels=5)
    grid = make_grid(-200.0, 200.0, 1024)
    V = np.zeros((grid.n_points, 5, 5))
    k0, sigma = matched_wavenumber(ch, 1, 20.0)
    psi0 = incoming_packet(grid, ch, WavepacketSpec(-60.0, k0, sigma), 1)
    final, ledger = propagate_channels(psi0, ch, V, 0.01, 40.0, 100)
    table = extract_quanta_exchange(final, ch, V, ledger.E_total[0], math.sqrt(ledger.var_H[0]), incoming=1)
    np.testing.assert_allclose(table.probabilities(), [0, 1, 0, 0, 0], atol=1e-14)
    assert table.rows[1].quanta == 0
    assert abs(table.rows[1].energy_closure) < 1e-12
    assert ledger.energy_drift() < 1e-13


def test_uncoupled_points_take_the_phase_shortcut(setup):
    ch, V, k0, sigma, psi0 = setup
    from flyby.splitop import SplitOperator

    internal = np.diag(ch.energies)
    fast = SplitOperator(GRID, 1.0, 1.0, internal, V, 0.01)
    # a negligible coupling everywhere forces the dense exponential at every point
    dense_V = V + 1e-300 * (1 - np.eye(7))[None]
    slow = SplitOperator(GRID, 1.0, 1.0, internal, dense_V, 0.01)
    assert fast._region.stop - fast._region.start < GRID.n_points // 4
    assert slow._region == slice(0, GRID.n_points)
    a = fast.advance(psi0.amplitudes.T.copy(), 200)
    b = slow.advance(psi0.amplitudes.T.copy(), 200)
    np.testing.assert_allclose(a, b, atol=1e-13)
