import math

import numpy as np
import pytest

from cvqkd.channel import ChannelParams
from cvqkd.classical import OneTimePad
from cvqkd.leakage import total_leakage
from cvqkd.privacy import final_key_length
from cvqkd.session import VERIFY_BITS, AbortReason, SessionConfig, run_session

FAST = dict(burst_length=20_000, leakage_samples=1000, slicing_samples=200)


def row1(**kw):
    return SessionConfig(channel=ChannelParams(g_line=1.0, v_a=40.7), **{**FAST, **kw})


@pytest.fixture(scope="module")
def done():
    return run_session(row1(seed=1))


def test_default_burst_keeps_48000():
    assert SessionConfig().n_kept == 48_000
    assert row1().n_kept == 16_000


def test_row1_session_agrees_on_a_key(done):
    assert done.ok and done.abort_reason is None
    assert done.keys_match and np.array_equal(done.alice_key, done.bob_key)
    assert done.alice_key.size == done.key_length > 0
    assert done.net_rate > 0
    assert 0.8 < done.efficiency < 0.95


def test_accounting_invariants(done):
    led, t = done.ledger, done.transcript
    n = done.n_kept
    assert led.pad_consumed_bits == t.pad_consumed == done.next_pad.size
    assert done.key_length == final_key_length(done.gross_bits, int(math.ceil(total_leakage(led))), 0)
    assert led.quantum_bound_bits == pytest.approx(done.rate_report.i_be * n)
    # what the pad paid for is exactly what reconciliation disclosed, plus the hashes
    verify = VERIFY_BITS * (done.plan.config.m - done.plan.config.disclose_count + 1)
    assert t.pad_consumed == t.disclosed_bits + t.parity_bits_exchanged + verify
    assert abs(done.gross_bits - t.pad_consumed - (math.floor(n * done.i_rec) - verify)) <= 1
    cfg = row1()
    assert done.net_rate == pytest.approx(done.key_length / cfg.burst_length * cfg.pulse_rate)


def test_report_and_summary(done):
    row = done.report_row()
    assert row["keys_match"] == 1 and row["ledger.pad_consumed_bits"] == done.ledger.pad_consumed_bits
    assert "rates.i_be" in row and "slices.disclose_count" in row
    assert "net_rate = " in done.summary()


def test_same_seed_replays_the_same_transcript(done):
    again = run_session(row1(seed=1))
    assert again.transcript.to_log() == done.transcript.to_log()
    assert np.array_equal(again.alice_key, done.alice_key)
    other = run_session(row1(seed=2))
    assert not np.array_equal(other.alice_key[:256], done.alice_key[:256])


def test_refilled_pad_pays_for_the_next_block(done):
    # a replay of the same block consumes exactly what the first one produced
    pad = OneTimePad(done.next_pad)
    again = run_session(row1(seed=1), pad=pad)
    assert again.ok and pad.remaining == 0


@pytest.mark.parametrize("g,eps,v_a,direction", [(0.10, 0.6, 40.7, "reverse"), (0.49, 0.0, 26.0, "direct")])
def test_insecure_channels_abort(g, eps, v_a, direction):
    cfg = SessionConfig(channel=ChannelParams(g_line=g, eps_line=eps, v_a=v_a), direction=direction, **FAST)
    res = run_session(cfg)
    assert res.abort_reason == AbortReason.INSECURE
    assert res.alice_key.size == 0 and not res.ok
    assert res.transcript.pad_consumed == 0


def test_small_bootstrap_key_underflows():
    res = run_session(row1(bootstrap_key_bits=500))
    assert res.abort_reason == AbortReason.PAD_UNDERFLOW
    assert res.alice_key.size == 0


def test_too_few_disclosed_samples():
    res = run_session(row1(min_disclosed=10_000))
    assert res.abort_reason == AbortReason.ESTIMATION_FAILURE


@pytest.mark.parametrize("kw", [dict(disclosed_fraction=0.0), dict(burst_length=0), dict(duty_cycle=1.5),
                                dict(pulse_rate=-1.0), dict(direction="sideways")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SessionConfig(**kw)
