"""One burst through the whole protocol, both parties in one process.

modulate -> transmit -> sift -> estimate -> reconcile -> account leakage
-> privacy amplification -> verify, with the classical traffic paid for by
a one-time pad that the produced key refills.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .channel import DEFAULT_BURST_LENGTH, Attack, ChannelParams, simulate_burst
from .classical import ALICE, BOB, ClassicalChannel, OneTimePad, PadUnderflow, Transcript
from .estimation import ChannelEstimate, EstimationError, disclose, estimate_channel
from .gf2 import PA_FIELD, FieldSpec
from .leakage import LeakageLedger, mc_error_position_info, net_key_rate, total_leakage
from .privacy import digest64, draw_public_element, final_key_length, hash_extract, \
    margin_for_security_parameter, plan_blocks
from .rates import PULSE_RATE_HZ, NoiseAssumption, RateReport, compute_rates
from .reconciliation import CascadeSchedule, Direction, GaussianPair, ReconciliationFailure, SlicePlan, \
    build_slices, reconcile_burst
from .reconciliation.slices import NoKeyPossible

__all__ = ["AbortReason", "SessionConfig", "SessionResult", "run_session"]

log = logging.getLogger(__name__)

VERIFY_BITS = 64


class AbortReason:
    INSECURE = "insecure"
    RECONCILIATION_FAILURE = "reconciliation-failure"
    PAD_UNDERFLOW = "pad-underflow"
    ESTIMATION_FAILURE = "estimation-failure"
    NO_KEY = "no-key"


@dataclass(frozen=True)
class SessionConfig:
    channel: ChannelParams = field(default_factory=ChannelParams)
    burst_length: int = DEFAULT_BURST_LENGTH
    pulse_rate: float = PULSE_RATE_HZ
    disclosed_fraction: float = 0.2
    direction: Direction = Direction.REVERSE
    mode: NoiseAssumption = NoiseAssumption.REALISTIC
    duty_cycle: float = 1.0
    bootstrap_key_bits: Optional[int] = None
    seed: int = 0
    attack: Attack = Attack.NONE
    # estimation and security policy
    pessimistic: bool = True
    k_sigma: float = 3.0
    eta: Optional[float] = None
    min_disclosed: int = 1000
    safety_margin: int = 0
    security_epsilon: Optional[float] = None
    # reconciliation
    slices: int = 5
    disclose: str = "optimize"
    allowed_disclose: Tuple[int, ...] = (2, 3)
    cascade: CascadeSchedule = field(default_factory=lambda: CascadeSchedule(growth=8.0, min_blocks=16))
    cascade_overhead: float = 1.08
    leakage_aware_slicing: bool = True
    # leakage estimation
    leakage_samples: int = 10_000
    slicing_samples: int = 500
    quadrature_order: int = 24
    pa_field: FieldSpec = PA_FIELD

    def __post_init__(self):
        if not 0 < self.disclosed_fraction < 1:
            raise ValueError("disclosed_fraction must lie in (0, 1)")
        if self.burst_length <= 0:
            raise ValueError("burst_length must be positive")
        if not 0 < self.duty_cycle <= 1:
            raise ValueError("duty_cycle must lie in (0, 1]")
        if self.pulse_rate <= 0:
            raise ValueError("pulse_rate must be positive")
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "mode", NoiseAssumption(self.mode))
        object.__setattr__(self, "attack", Attack(self.attack))

    @property
    def n_kept(self) -> int:
        return self.burst_length - int(round(self.disclosed_fraction * self.burst_length))

    @property
    def default_bootstrap_bits(self) -> int:
        """Worst case for one block: every slice sent and as many parities again, plus hashes."""
        return 2 * self.slices * self.n_kept + VERIFY_BITS * (self.slices + 1)

    def with_(self, **changes) -> "SessionConfig":
        return replace(self, **changes)


@dataclass
class SessionResult:
    alice_key: np.ndarray
    bob_key: np.ndarray
    keys_match: bool
    rate_report: Optional[RateReport]
    ledger: LeakageLedger
    i_rec: float
    net_rate: float
    abort_reason: Optional[str] = None
    estimate: Optional[ChannelEstimate] = None
    plan: Optional[SlicePlan] = None
    transcript: Transcript = field(default_factory=Transcript)
    next_pad: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    gross_bits: int = 0
    key_length: int = 0
    n_kept: int = 0
    seed: int = 0
    error_position_stderr: float = 0.0
    i_ba: float = 0.0
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.abort_reason is None and self.keys_match and self.net_rate > 0

    @property
    def efficiency(self) -> float:
        return self.i_rec / self.i_ba if self.i_ba > 0 else math.nan

    def report_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {"seed": self.seed, "abort_reason": self.abort_reason or "",
                                  "keys_match": int(self.keys_match), "n_kept": self.n_kept,
                                  "i_rec": self.i_rec, "efficiency": self.efficiency,
                                  "gross_bits": self.gross_bits, "key_length": self.key_length,
                                  "net_rate": self.net_rate}
        if self.rate_report is not None:
            row.update({f"rates.{k}": v for k, v in self.rate_report.as_dict().items()})
        row.update({f"ledger.{k}": v for k, v in self.ledger.as_dict().items()})
        if self.plan is not None:
            row["slices.disclose_count"] = self.plan.config.disclose_count
            row["slices.scale"] = self.plan.config.scale
        return row

    def summary(self) -> str:
        lines = [f"seed = {self.seed}", f"abort_reason = {self.abort_reason or 'none'}",
                 f"keys_match = {self.keys_match}", f"key_length = {self.key_length}",
                 f"i_rec = {self.i_rec:.4f}", f"efficiency = {self.efficiency:.3f}",
                 f"net_rate = {self.net_rate:.1f}"]
        if self.detail:
            lines.append(f"detail = {self.detail}")
        for k, v in self.report_row().items():
            if k.startswith(("rates.", "ledger.", "slices.")):
                lines.append(f"{k} = {v}")
        return "\n".join(lines)


def _split_lengths(total: int, weights: List[int]) -> List[int]:
    """Integers proportional to ``weights`` summing to ``total`` (largest remainder)."""
    w = np.asarray(weights, dtype=np.float64)
    exact = total * w / w.sum()
    base = np.floor(exact).astype(int)
    short = total - int(base.sum())
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:short]] += 1
    return base.tolist()


def _pa_plan(n: int, m: int, out_len: int, field_spec: FieldSpec, rng_public: np.random.Generator):
    """Element ranges, public hashing element and output length for each block."""
    blocks = plan_blocks(n, m, field_spec)
    lengths = _split_lengths(out_len, [hi - lo for lo, hi in blocks])
    return [(blk, draw_public_element(field_spec, rng_public), ln) for blk, ln in zip(blocks, lengths)]


def _extract(bits: np.ndarray, m: int, plan, field_spec: FieldSpec) -> np.ndarray:
    parts = [hash_extract(bits[lo * m:hi * m], r, ln, field_spec) for (lo, hi), r, ln in plan if ln > 0]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint8)


def _aborted(config: SessionConfig, reason: str, detail: str = "", **kwargs) -> SessionResult:
    log.info("session %d aborted: %s %s", config.seed, reason, detail)
    empty = np.zeros(0, dtype=np.uint8)
    defaults = dict(alice_key=empty, bob_key=empty.copy(), keys_match=False, rate_report=None,
                    ledger=LeakageLedger(), i_rec=0.0, net_rate=0.0, abort_reason=reason,
                    seed=config.seed, detail=detail)
    defaults.update(kwargs)
    return SessionResult(**defaults)


def run_session(config: SessionConfig, rng: Optional[np.random.Generator] = None,
                pad: Optional[OneTimePad] = None) -> SessionResult:
    """Distil a key from one simulated burst.

    Parameters
    ----------
    config : SessionConfig
    rng : numpy Generator, optional
        Source of the protocol's own randomness (disclosed subset, public
        hashing element, bootstrap pad); defaults to one seeded from
        ``config.seed``.  The burst itself is always generated from
        ``config.seed``.
    pad : OneTimePad, optional
        Key left over from the previous block; a random bootstrap key of
        ``config.bootstrap_key_bits`` is used otherwise.

    Returns
    -------
    SessionResult
        Never raises for protocol-level failures; ``abort_reason`` says why
        no key was produced.
    """
    rng = rng if rng is not None else np.random.default_rng([config.seed, 1])
    seeds = rng.integers(0, 2**63 - 1, size=4)
    rng_disclose, rng_public, rng_pad, rng_mc = (np.random.default_rng(int(s)) for s in seeds)
    params = config.channel
    reverse = config.direction is Direction.REVERSE
    m = config.slices

    burst = simulate_burst(params, config.burst_length, config.seed, config.attack)
    alice, bob = burst.sifted()

    # parameter estimation on a public random subset
    shown, kept = disclose(alice.size, config.disclosed_fraction, rng_disclose)
    try:
        estimate = estimate_channel(alice[shown], bob[shown], params.n_el, params.n_hom, params.v_a,
                                    min_samples=config.min_disclosed, n0=params.n0)
        op = estimate.operating_point(pessimistic=config.pessimistic, k_sigma=config.k_sigma)
    except EstimationError as exc:
        return _aborted(config, AbortReason.ESTIMATION_FAILURE, str(exc))
    rates = compute_rates(op, config.mode, config.eta)
    advantage = rates.delta_rr if reverse else rates.delta_dr
    if advantage <= 0:
        return _aborted(config, AbortReason.INSECURE, f"information advantage {advantage:.4f} bit <= 0",
                        rate_report=rates, estimate=estimate, i_ba=rates.i_ba)

    a_key, b_key = alice[kept], bob[kept]
    n = a_key.size
    try:
        pair = GaussianPair.from_estimate(estimate, reverse)
    except (NoKeyPossible, ValueError) as exc:
        return _aborted(config, AbortReason.ESTIMATION_FAILURE, str(exc), rate_report=rates, estimate=estimate)
    direction = config.direction.value

    def errpos(cfg, samples, gen):
        return mc_error_position_info(op, cfg, samples, gen, mode=config.mode, decoder=pair,
                                      direction=direction, order=config.quadrature_order, eta=config.eta,
                                      check_convergence=samples == config.leakage_samples)

    penalty = None
    if config.leakage_aware_slicing:
        def penalty(cfg):
            return errpos(cfg, config.slicing_samples, np.random.default_rng(int(seeds[3]) + 1)).bits_per_element
    plan = build_slices(pair, m, disclose=config.disclose, allowed_disclose=config.allowed_disclose,
                        cascade_overhead=config.cascade_overhead, penalty=penalty)

    pad = pad if pad is not None else OneTimePad.random(
        config.bootstrap_key_bits or config.default_bootstrap_bits, rng_pad)
    channel = ClassicalChannel(pad)
    common = dict(rate_report=rates, estimate=estimate, plan=plan, transcript=channel.transcript,
                  n_kept=n, i_ba=rates.i_ba)
    try:
        rec = reconcile_burst(a_key, b_key, plan.config, pair, channel, config.direction, config.cascade)
    except PadUnderflow as exc:
        return _aborted(config, AbortReason.PAD_UNDERFLOW, str(exc), **common)
    except ReconciliationFailure as exc:
        return _aborted(config, AbortReason.RECONCILIATION_FAILURE, str(exc), **common)

    # leakage ledger; the final verification hash is paid for up front
    ep = errpos(plan.config, config.leakage_samples, rng_mc)
    quantum = rates.i_be if reverse else rates.i_ae
    pad_bits = channel.transcript.pad_consumed + VERIFY_BITS
    ledger = LeakageLedger(quantum_bound_bits=quantum * n, error_position_bits=ep.bits_per_element * n,
                           pad_consumed_bits=pad_bits, mc_stderr=ep.stderr * n, n_elements=n)
    margin = config.safety_margin
    if config.security_epsilon is not None:
        margin += margin_for_security_parameter(config.security_epsilon)
    gross = int(math.floor(n * rec.cell_entropy))
    key_len = final_key_length(gross, int(math.ceil(total_leakage(ledger))), margin)
    common.update(ledger=ledger, i_rec=rec.i_rec, gross_bits=gross, error_position_stderr=ep.stderr)
    if key_len == 0:
        return _aborted(config, AbortReason.NO_KEY, "leakage exceeds the reconciled information", **common)

    # privacy amplification: the first pad_bits output bits refill the pad
    out_len = key_len + pad_bits
    pa_plan = _pa_plan(n, m, out_len, config.pa_field, rng_public)
    alice_out = _extract(rec.key_bits(ALICE), m, pa_plan, config.pa_field)
    bob_out = _extract(rec.key_bits(BOB), m, pa_plan, config.pa_field)

    try:
        h = digest64(bob_out)
        channel.send(BOB, "verify", np.array([(h >> i) & 1 for i in range(VERIFY_BITS)], dtype=np.uint8))
    except PadUnderflow as exc:
        return _aborted(config, AbortReason.PAD_UNDERFLOW, str(exc), **common)
    theirs = channel.receive(ALICE, "verify")
    match = int(sum(int(b) << i for i, b in enumerate(theirs))) == digest64(alice_out)
    channel.send(ALICE, "verify_result", [match], encrypt=False)
    channel.receive(BOB, "verify_result")
    assert channel.transcript.pad_consumed == ledger.pad_consumed_bits
    if not match:
        return _aborted(config, AbortReason.RECONCILIATION_FAILURE, "final key hashes differ", **common)

    rate = net_key_rate(gross / n, (gross - key_len) / n, config.pulse_rate, n / config.burst_length,
                        config.duty_cycle)
    return SessionResult(alice_key=alice_out[pad_bits:], bob_key=bob_out[pad_bits:],
                         keys_match=bool(np.array_equal(alice_out, bob_out)), net_rate=rate,
                         next_pad=alice_out[:pad_bits], key_length=key_len, seed=config.seed, **common)
