import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvqkd.channel import ChannelParams
from cvqkd.rates import (REFERENCE_ROWS, NoiseAssumption, alice_conditional_variance, compute_rates, delta_i_dr,
                         delta_i_rr, eve_variance_bound, i_ae, i_ba, i_be, ideal_rate, paranoid_globals,
                         security_thresholds)

# (V, G, I_BA, I_BE, I_AE) at eps = 0, N_el = 0.33, N_hom = 0.27, realistic mode.
# Computed at 30 significant digits with mpmath from the conditional variances
# V_B = G(V + chi) + N, V_B|A = G(1 + chi) + N, V_B|E = 1/(G(chi + 1/V)) + N.
FROZEN = [
    (41.7, 1.00, 2.362257, 0.000000, 0.000000),
    (38.6, 0.79, 2.145102, 1.332024, 1.576578),
    (32.3, 0.68, 1.919098, 1.347871, 1.730764),
    (27.0, 0.49, 1.581951, 1.261927, 1.916951),
    (43.7, 0.26, 1.494456, 1.355251, 2.513356),
]

gains = st.floats(0.01, 1.0)
noises = st.floats(0.0, 3.0)
variances = st.floats(1.5, 100.0)


@pytest.mark.parametrize("v,g,iba,ibe,iae", FROZEN)
def test_frozen_table_values(v, g, iba, ibe, iae):
    r = compute_rates(ChannelParams(g_line=g, v_a=v - 1))
    assert r.i_ba == pytest.approx(iba, abs=1e-6)
    assert r.i_be == pytest.approx(ibe, abs=1e-6)
    assert r.i_ae == pytest.approx(iae, abs=1e-6)
    assert r.delta_rr == pytest.approx(iba - ibe, abs=1e-6)


def test_table1_row_shape():
    assert len(REFERENCE_ROWS) == 5
    assert [r.practical_rr_kbps for r in REFERENCE_ROWS] == [1690, 470, 185, 75, None]
    assert REFERENCE_ROWS[3].ideal_dr_kbps == 0


@given(gains, noises, variances)
def test_heisenberg_saturation(g, chi, v):
    vmin = alice_conditional_variance(g, chi, 1.0 / v, v)
    assert vmin * eve_variance_bound(g, chi, v) == pytest.approx(1.0, rel=1e-13)


def test_heisenberg_saturation_exact_rationals():
    g, chi, v = Fraction(49, 100), Fraction(1, 3), Fraction(27)
    assert g * (1 / v + chi) * (1 / (g * (chi + 1 / v))) == 1
    assert alice_conditional_variance(0.5, 0.25, 0.25, 4.0) * eve_variance_bound(0.5, 0.25, 4.0) == 1.0


def test_conditional_variance_rejects_unphysical_state():
    with pytest.raises(ValueError):
        alice_conditional_variance(0.5, 0.1, 0.01, 10.0)
    assert alice_conditional_variance(0.5, 0.1, 1.0, 10.0) == pytest.approx(0.55)


@given(variances, gains, noises)
def test_rr_delta_matches_information_difference_without_detector(v, g, eps):
    chi = (1 - g) / g + eps
    direct = i_ba(v, chi) - i_be(v, g, chi, 0.0, 0.0)
    if i_be(v, g, chi, 0.0, 0.0) > 0:
        assert delta_i_rr(v, g, chi) == pytest.approx(direct, abs=1e-9)
    assert delta_i_dr(v, chi) == pytest.approx(i_ba(v, chi) - i_ae(v, chi), abs=1e-9)


@given(variances, gains, noises)
def test_eve_never_exceeds_bob_when_noise_is_pure_loss(v, g, eps):
    chi = (1 - g) / g
    assert i_be(v, g, chi, 0.33, 0.27) <= i_ba(v, chi + 0.6 / g) + 1e-12


def test_dr_threshold_sweep_crossing():
    for eps in (0.0, 0.05, 0.2, 0.5):
        gs = np.linspace(0.3, 1.0, 7001)
        d = np.array([delta_i_dr(41.7, (1 - g) / g + eps) for g in gs])
        crossing = gs[np.argmax(d > 0)]
        g_min, _ = security_thresholds(41.7, eps)
        assert abs(crossing - g_min) < 0.01


@pytest.mark.parametrize("v,g", [(27.0, 0.49), (43.7, 0.26)])
def test_dr_rate_is_zero_below_half_transmission(v, g):
    r = compute_rates(ChannelParams(g_line=g, v_a=v - 1))
    assert ideal_rate(r.delta_dr) == 0.0


def test_security_thresholds():
    g_min, rr_ok = security_thresholds(41.7, 0.0)
    assert g_min == 0.5 and rr_ok
    assert not security_thresholds(41.7, 0.6)[1]
    assert security_thresholds(41.7, 2.5)[0] == math.inf
    assert security_thresholds(41.7, 1.5)[0] == 2.0
    with pytest.raises(ValueError):
        security_thresholds(41.7, -0.1)


def test_rr_threshold_matches_delta_sign():
    v = 41.7
    for eps in (0.3, 0.45, 0.5, 0.6):
        g = 1e-3
        secure = delta_i_rr(v, g, (1 - g) / g + eps) > 0
        assert secure == security_thresholds(v, eps)[1]


def test_ideal_rate():
    assert ideal_rate(2.362257) == pytest.approx(1_889_805.6)
    assert ideal_rate(-0.1) == 0.0
    assert ideal_rate(1.0, kept_fraction=0.8) == pytest.approx(640e3)


def test_table1_ideal_column_consistency():
    for row in REFERENCE_ROWS:
        derived = row.i_ba * (1 - row.i_be_pct / 100) * 800
        assert abs(derived - row.ideal_rr_kbps) <= 15


@given(st.floats(5.0, 60.0), st.floats(0.05, 1.0), st.floats(0.0, 0.3), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_realistic_never_exceeds_paranoid(v, g, eps, n_el, n_hom):
    chi = (1 - g) / g + eps
    assert i_be(v, g, chi, n_el, n_hom, "realistic") <= i_be(v, g, chi, n_el, n_hom, "paranoid") + 1e-12


def test_paranoid_globals():
    p = ChannelParams(g_line=0.5)
    g, chi = paranoid_globals(p)
    assert g == pytest.approx(0.5 / 1.27) and chi == pytest.approx(p.chi_tot)
    assert paranoid_globals(p, eta=0.81)[0] == pytest.approx(0.405)
    with pytest.raises(ValueError):
        paranoid_globals(p, eta=1.5)


def test_paranoid_bob_variance_is_unchanged():
    p = ChannelParams(g_line=0.68)
    real, para = compute_rates(p, "realistic"), compute_rates(p, NoiseAssumption.PARANOID)
    # both descriptions of the detector give Bob the same noise, but not the same Eve
    assert para.i_ba == real.i_ba
    assert para.i_be > real.i_be
    assert para.v_b_given_a_min * para.v_b_given_e_min == pytest.approx(1.0)


def test_report_fields():
    r = compute_rates(ChannelParams(g_line=0.79, v_a=37.6))
    d = r.as_dict()
    assert d["mode"] == "realistic" and set(d) >= {"i_ba", "i_be", "delta_rr", "delta_dr"}
    assert r.i_be_fraction == pytest.approx(0.620961, abs=1e-5)


def test_input_validation():
    with pytest.raises(ValueError):
        i_ba(0.5, 1.0)
    with pytest.raises(ValueError):
        i_ae(10.0, -1.0)
    with pytest.raises(ValueError):
        delta_i_rr(10.0, 1.5, 0.0)
    with pytest.raises(ValueError):
        i_be(10.0, 0.0, 0.0, 0.0, 0.0)
