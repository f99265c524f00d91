import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from cvqkd.channel import ChannelParams
from cvqkd.leakage import (DiscreteJoint, LeakageLedger, NumericFailure, cloner_covariance, cloner_posterior,
                           error_position_table, mc_error_position_info, net_key_rate, total_leakage)
from cvqkd.rates import eve_variance_bound, paranoid_globals
from cvqkd.reconciliation import GaussianPair, SliceConfig
from cvqkd.reconciliation.slices import quantile_boundaries

from oracles import grid_error_position_info, mutual_information


def two_slice(pair, scale=1.0):
    return SliceConfig(2, quantile_boundaries(pair.var_ref, 2, scale), 1, scale=scale)


@pytest.mark.parametrize("g,eps", [(0.49, 0.0), (0.79, 0.1), (1.0, 0.0), (1.0, 0.2), (0.26, 0.05)])
def test_cloner_reproduces_the_observed_channel(g, eps):
    p = ChannelParams(g_line=g, eps_line=eps)
    S = cloner_covariance(p)
    assert S[0, 0] == pytest.approx(p.v_a)
    assert S[0, 1] == pytest.approx(math.sqrt(g) * p.v_a)
    # Bob's value includes his detector noise, which Eve does not control
    assert S[1, 1] == pytest.approx(g * (p.v + p.chi_line) + p.detector_noise)
    assert np.linalg.eigvalsh(S).min() > -1e-9


@pytest.mark.parametrize("g,eps", [(0.49, 0.0), (0.79, 0.1), (1.0, 0.2), (0.26, 0.05)])
def test_cloner_saturates_the_bound(g, eps):
    p = ChannelParams(g_line=g, eps_line=eps)
    post = cloner_posterior(p)
    bound = eve_variance_bound(g, p.chi_line, p.v) + p.detector_noise
    assert post.covariance[1, 1] == pytest.approx(bound, rel=1e-9)


def test_paranoid_cloner_uses_global_channel():
    p = ChannelParams(g_line=0.5)
    S = cloner_covariance(p, "paranoid")
    g, chi = paranoid_globals(p)
    eta = g / p.g_line
    # Bob's row is kept in physical units: the global channel scaled back by 1 / sqrt(eta)
    assert S[1, 1] * eta == pytest.approx(g * (p.v + chi))
    assert S[1, 1] == pytest.approx(p.g_line * (p.v + p.chi_line) + p.detector_noise)
    assert S[0, 1] * math.sqrt(eta) == pytest.approx(math.sqrt(g) * p.v_a)


def test_noiseless_line_leaves_eve_nothing():
    post = cloner_posterior(ChannelParams(g_line=1.0, eps_line=0.0))
    assert post.eve_dim == 0
    assert not post.sample_means(5, np.random.default_rng(0)).any()


def test_error_position_table_partitions_the_line():
    pair = GaussianPair.from_channel(0.49, 26.0, 2.2)
    cfg = SliceConfig(5, quantile_boundaries(pair.var_ref, 5, 3.0), 2)
    table = error_position_table(pair, cfg)
    assert table.edges.shape[0] == cfg.n_cells
    assert table.codes.shape == (cfg.n_cells, table.edges.shape[1] - 1)
    assert np.all(table.edges[:, 0] == -np.inf) and np.all(table.edges[:, -1] == np.inf)
    assert np.all(np.diff(table.edges, axis=1) >= 0)
    assert table.codes.min() >= 0 and table.codes.max() < 8


# ---------------------------------------------------------------- discrete toy


def discretized_gaussian(n=16, seed=0, noiseless=False):
    """16^3 grid of (A, B, E) with a correlated Gaussian weight."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(-3, 3, n)
    cov = np.array([[1.0, 0.8, 0.5], [0.8, 1.0, 0.6], [0.5, 0.6, 1.0]])
    A, B, E = np.meshgrid(grid, grid, grid, indexing="ij")
    pmf = multivariate_normal(np.zeros(3), cov).pdf(np.stack([A, B, E], axis=-1))
    if noiseless:
        pmf = pmf * (np.abs(A - B) < 1e-12)
    pmf *= 1 + 0.1 * rng.random(pmf.shape)
    return DiscreteJoint(grid, grid, grid, pmf / pmf.sum())


def toy_decode(dec, cells):
    # upper slice guessed from the sign of the decoder's value, lower slice known
    return (dec >= 0).astype(np.int64)[:, None]


def exhaustive_oracle(model, config, reference=1):
    """Sum over every grid point, one conditional table per Eve value."""
    total = 0.0
    for k in range(model.e.size):
        joint = np.zeros((config.n_cells, 2))
        for i, a in enumerate(model.a):
            for j, b in enumerate(model.b):
                ref, dec = (b, a) if reference == 1 else (a, b)
                cell = int(np.searchsorted(config.boundaries, ref, side="right"))
                err = int((dec >= 0) != (cell >> 1))
                joint[cell, err] += model.pmf[i, j, k]
        pe = joint.sum()
        if pe > 0:
            total += pe * mutual_information(joint)
    return total


@pytest.mark.parametrize("reference", [1, 0])
def test_discrete_toy_matches_exhaustive_oracle(reference):
    model = discretized_gaussian()
    config = SliceConfig(2, [-1.0, 0.0, 1.0], 1)
    exact = exhaustive_oracle(model, config, reference)
    est = mc_error_position_info(model, config, 20_000, np.random.default_rng(1), decode=toy_decode,
                                 direction="reverse" if reference == 1 else "direct")
    assert exact > 0.01
    assert abs(est.bits_per_element - exact) < 3 * est.stderr
    assert 0 <= est.bits_per_element <= est.h_delta


def test_discrete_noiseless_gives_zero():
    model = discretized_gaussian(noiseless=True)
    config = SliceConfig(2, [-1.0, 0.0, 1.0], 1)
    est = mc_error_position_info(model, config, 1000, np.random.default_rng(0), decode=toy_decode)
    assert est.bits_per_element == 0.0 and est.h_delta == 0.0


def test_discrete_model_needs_rule():
    with pytest.raises(ValueError):
        mc_error_position_info(discretized_gaussian(4), SliceConfig(2, [-1.0, 0.0, 1.0], 1), 10)


# ---------------------------------------------------------------- continuous model


def test_continuous_model_matches_grid_oracle():
    # unit transmission with excess noise: Eve holds a single noisy copy
    p = ChannelParams(g_line=1.0, eps_line=0.2, v_a=10.0)
    post = cloner_posterior(p)
    assert post.eve_dim == 1
    pair = GaussianPair.from_channel(p.g_line, p.v_a, p.chi_tot)
    cfg = two_slice(pair)
    z = np.linspace(-8, 8, 201)
    w = np.exp(-0.5 * z * z)
    w /= w.sum()
    sd = math.sqrt(post.eve_covariance[0, 0])
    decoder = (pair.var_ref, pair.var_dec, pair.cov)
    oracle = sum(wi * grid_error_position_info(post.gain[:, 0] * sd * zi, post.covariance, cfg.edges, decoder, 20001)
                 for zi, wi in zip(z, w))
    est = mc_error_position_info(p, cfg, 20_000, np.random.default_rng(2), decoder=pair)
    assert abs(est.bits_per_element - oracle) < 3 * est.stderr


def test_vanishing_errors_give_vanishing_leakage():
    p = ChannelParams(g_line=1.0, eps_line=0.01, n_el=0.0, n_hom=0.0, v_a=1e10)
    pair = GaussianPair.from_channel(1.0, p.v_a, p.chi_tot)
    est = mc_error_position_info(p, two_slice(pair), 500, np.random.default_rng(0), decoder=pair)
    assert est.bits_per_element < 1e-6


@settings(max_examples=12, deadline=None)
@given(st.floats(0.2, 1.0), st.floats(0.0, 0.3), st.floats(4.0, 50.0), st.sampled_from(["realistic", "paranoid"]),
       st.floats(0.8, 3.5))
def test_estimate_within_entropy_bounds(g, eps, v_a, mode, scale):
    p = ChannelParams(g_line=g, eps_line=eps, v_a=v_a)
    pair = GaussianPair.from_channel(g, v_a, p.chi_tot)
    cfg = SliceConfig(4, quantile_boundaries(pair.var_ref, 4, scale), 1)
    est = mc_error_position_info(p, cfg, 300, np.random.default_rng(0), mode=mode, decoder=pair,
                                 check_convergence=False)
    assert -1e-12 <= est.bits_per_element <= est.h_delta + 1e-12
    assert est.h_delta <= cfg.m - cfg.disclose_count


def test_direct_reconciliation_reference():
    p = ChannelParams(g_line=0.8, eps_line=0.05)
    pair = GaussianPair.from_channel(0.8, p.v_a, p.chi_tot, reverse=False)
    est = mc_error_position_info(p, two_slice(pair), 2000, np.random.default_rng(0), decoder=pair,
                                 direction="direct")
    assert 0 < est.bits_per_element < est.h_delta


def test_unconverged_quadrature_is_reported():
    p = ChannelParams(g_line=0.49)
    pair = GaussianPair.from_channel(0.49, p.v_a, p.chi_tot)
    cfg = SliceConfig(5, quantile_boundaries(pair.var_ref, 5, 3.0), 2)
    with pytest.raises(NumericFailure):
        mc_error_position_info(p, cfg, 300, np.random.default_rng(0), decoder=pair, order=1)


def test_estimate_unpacks():
    p = ChannelParams(g_line=0.7)
    pair = GaussianPair.from_channel(0.7, p.v_a, p.chi_tot)
    est, se = mc_error_position_info(p, two_slice(pair), 100, np.random.default_rng(0), decoder=pair)
    assert se > 0 and est > 0
    with pytest.raises(ValueError):
        mc_error_position_info(p, two_slice(pair), 1)


# ---------------------------------------------------------------- ledger


def test_ledger_total_and_validation():
    led = LeakageLedger(quantum_bound_bits=10.5, error_position_bits=2.0, pad_consumed_bits=7, n_elements=3)
    assert total_leakage(led) == 19.5
    assert led.as_dict()["total_bits"] == 19.5
    with pytest.raises(ValueError):
        LeakageLedger(quantum_bound_bits=-1.0)


def test_net_key_rate():
    assert net_key_rate(2.0, 0.5, 800e3) == pytest.approx(1.2e6)
    assert net_key_rate(1.0, 1.5, 800e3) == 0.0
    assert net_key_rate(2.0, 1.0, 800e3, kept_fraction=0.8, duty_cycle=0.05) == pytest.approx(32e3)
    with pytest.raises(ValueError):
        net_key_rate(1.0, -0.1, 800e3)
