import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvqkd.channel import (Attack, Basis, Burst, ChannelParams, draw_modulation, quantize, simulate_burst,
                           transmit_and_measure)
from cvqkd.rates import eve_variance_bound


def test_params_derived_quantities():
    p = ChannelParams(g_line=0.5, eps_line=0.1)
    assert p.v == pytest.approx(41.7)
    assert p.chi_vac == pytest.approx(1.0)
    assert p.chi_line == pytest.approx(1.1)
    assert p.chi_tot == pytest.approx(1.1 + 0.6 / 0.5)
    assert p.losses_db == pytest.approx(3.0103, abs=1e-4)


@pytest.mark.parametrize("kw", [dict(g_line=0), dict(g_line=1.2), dict(eps_line=-0.1), dict(n_el=-1),
                                dict(v_a=0), dict(n0=0)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ChannelParams(**kw)


def test_same_seed_same_burst():
    p = ChannelParams(g_line=0.7)
    assert simulate_burst(p, 500, seed=4).equals(simulate_burst(p, 500, seed=4))
    assert not simulate_burst(p, 500, seed=4).equals(simulate_burst(p, 500, seed=5))


def test_sifting_keeps_the_measured_quadrature():
    b = simulate_burst(ChannelParams(), 1000, seed=1)
    a, y = b.sifted()
    assert np.array_equal(a[b.basis == Basis.X], b.x_a[b.basis == Basis.X])
    assert np.array_equal(a[b.basis == Basis.P], b.p_a[b.basis == Basis.P])
    assert y.size == 1000
    assert 0.45 < b.basis.mean() < 0.55


@pytest.mark.parametrize("g,eps", [(1.0, 0.0), (0.49, 0.0), (0.26, 0.05), (0.79, 0.2)])
def test_measured_moments(g, eps):
    p = ChannelParams(g_line=g, eps_line=eps)
    n = 200_000
    a, y = simulate_burst(p, n, seed=11).sifted()
    var_b = g * (p.v + p.chi_line) + p.detector_noise
    cov = math.sqrt(g) * p.v_a
    assert np.var(y) == pytest.approx(var_b, abs=4 * var_b * math.sqrt(2 / n))
    assert np.mean(a * y) == pytest.approx(cov, abs=4 * math.sqrt((p.v_a * var_b + cov**2) / n))


@pytest.mark.parametrize("g,eps", [(1.0, 0.0), (1.0, 0.1), (0.49, 0.0), (0.6, 0.1)])
def test_cloner_reproduces_bob_statistics(g, eps):
    p = ChannelParams(g_line=g, eps_line=eps)
    n = 100_000
    plain = simulate_burst(p, n, seed=2)
    attacked = simulate_burst(p, n, seed=3, attack=Attack.ENTANGLING_CLONER)
    assert attacked.y_e is not None and plain.y_e is None
    for b in (plain, attacked):
        a, y = b.sifted()
        resid = y - math.sqrt(g) * a
        expected = g * (1 + p.chi_line) + p.detector_noise
        assert np.var(resid) == pytest.approx(expected, abs=4 * expected * math.sqrt(2 / n))


def test_cloner_meets_heisenberg_bound():
    p = ChannelParams(g_line=0.49, eps_line=0.05)
    n = 100_000
    b = simulate_burst(p, n, seed=9, attack="entangling_cloner")
    resid = b.y_b - b.y_e
    bound = eve_variance_bound(p.g_line, p.chi_line, p.v) + p.detector_noise
    assert np.var(resid) == pytest.approx(bound, abs=3 * bound * math.sqrt(2 / (n - 1)))


def test_quantize():
    x = np.array([-10.0, -0.1, 0.0, 0.1, 10.0])
    q = quantize(x, 2, 1.0)
    assert q.tolist() == [-0.75, -0.25, 0.25, 0.25, 0.75]
    assert np.array_equal(quantize(x, None, 1.0), x)
    with pytest.raises(ValueError):
        quantize(x, 0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.floats(0.5, 20))
def test_quantize_error_bounded(bits, fs):
    x = np.linspace(-fs, fs, 101)[:-1]
    step = 2 * fs / (1 << bits)
    assert np.max(np.abs(quantize(x, bits, fs) - x)) <= step / 2 + 1e-12


def test_digitized_burst_is_close_to_analog():
    p = ChannelParams(g_line=0.8)
    analog = simulate_burst(p, 5000, seed=1)
    digital = simulate_burst(p, 5000, seed=1, dac_bits=12, adc_bits=12)
    assert np.max(np.abs(analog.y_b - digital.y_b)) < 0.1


def test_modulation_variance():
    x, pq = draw_modulation(40.7, 100_000, np.random.default_rng(0))
    assert np.var(x) == pytest.approx(40.7, rel=0.02) and np.var(pq) == pytest.approx(40.7, rel=0.02)
    with pytest.raises(ValueError):
        draw_modulation(40.7, 0, np.random.default_rng(0))


def test_unmeasured_burst_cannot_be_sifted():
    n = 4
    b = Burst(np.zeros(n), np.zeros(n), np.zeros(n, np.uint8), np.full(n, np.nan))
    with pytest.raises(RuntimeError):
        b.sifted()
    out = transmit_and_measure(b, ChannelParams(), np.random.default_rng(0))
    assert out.measured


def test_csv_and_npz_roundtrip(tmp_path):
    b = simulate_burst(ChannelParams(g_line=0.5), 50, seed=7, attack=Attack.ENTANGLING_CLONER)
    b.to_csv(tmp_path / "b.csv")
    back = Burst.from_csv(tmp_path / "b.csv")
    assert np.allclose(back.y_b, b.y_b, rtol=1e-8) and np.array_equal(back.basis, b.basis)
    b.to_npz(tmp_path / "b.npz")
    assert Burst.from_npz(tmp_path / "b.npz").equals(b)


def test_pulse_records():
    b = simulate_burst(ChannelParams(), 3, seed=0)
    recs = list(b)
    assert len(recs) == 3 and recs[1].y_b == b.y_b[1] and recs[0].basis in (Basis.X, Basis.P)
