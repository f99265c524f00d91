"""Sliced error correction of one burst of Gaussian key elements."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..classical import ALICE, BOB, ClassicalChannel
from .cascade import CascadeParams, cascade_reconcile
from .slices import GaussianPair, SliceConfig, cell_probabilities, decode_slice, predicted_ber

__all__ = ["CascadeSchedule", "Direction", "ReconciliationResult", "reconcile_burst"]


class Direction(str, Enum):
    DIRECT = "direct"
    REVERSE = "reverse"


@dataclass(frozen=True)
class CascadeSchedule:
    """How each Cascade-corrected slice sets its block sizes.

    ``k1 = max(2, round(alpha / BER))`` with the slice's predicted error
    rate, then blocks grow by ``growth`` per pass, never beyond a
    ``1 / min_blocks`` share of the slice.
    """

    alpha: float = 0.73
    growth: float = 2.0
    passes: int = 4
    seed: int = 0
    min_blocks: int = 1

    def params_for(self, ber: float, slice_index: int) -> CascadeParams:
        k1 = max(2, round(self.alpha / ber)) if ber > 0 else 1 << 30
        return CascadeParams(passes=self.passes, k1=k1, growth=self.growth,
                             seed=self.seed * 1009 + slice_index, min_blocks=self.min_blocks)


@dataclass
class ReconciliationResult:
    reference_bits: np.ndarray
    corrected_bits: np.ndarray
    config: SliceConfig
    direction: Direction
    i_rec: float
    cell_entropy: float
    initial_ber: np.ndarray
    parity_bits: int

    @property
    def n_elements(self) -> int:
        return self.reference_bits.shape[0]

    @property
    def success(self) -> bool:
        return bool(np.array_equal(self.reference_bits, self.corrected_bits))

    def key_bits(self, party: str) -> np.ndarray:
        """All slices of every element, element-major (element i occupies bits i*m .. i*m+m-1)."""
        corrector_is_alice = self.direction is Direction.REVERSE
        own = self.corrected_bits if (party == ALICE) == corrector_is_alice else self.reference_bits
        return own.reshape(-1).copy()


def _plugin_entropy(cells: np.ndarray, n_cells: int) -> float:
    p = np.bincount(cells, minlength=n_cells) / cells.size
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def reconcile_burst(alice, bob, config: SliceConfig, pair: GaussianPair, channel: ClassicalChannel,
                    direction: Direction | str = Direction.REVERSE,
                    schedule: Optional[CascadeSchedule] = None) -> ReconciliationResult:
    """Bring both parties to the reference's slice bits.

    Parameters
    ----------
    alice, bob : array_like
        Key elements kept after sifting and estimation.
    config : SliceConfig
        Thresholds in units of the reference party's values.
    pair : GaussianPair
        Public model of (reference, decoder) built from the channel estimate.
    channel : ClassicalChannel
        Encrypted, logged classical channel.
    direction : Direction
        ``reverse`` takes Bob's slices as reference, ``direct`` Alice's.

    Returns
    -------
    ReconciliationResult
        ``i_rec`` is the empirical cell entropy minus the fully sent slices
        minus Cascade parities, per element.
    """
    direction = Direction(direction)
    schedule = schedule or CascadeSchedule()
    alice = np.asarray(alice, dtype=np.float64)
    bob = np.asarray(bob, dtype=np.float64)
    if alice.shape != bob.shape:
        raise ValueError("alice and bob hold different numbers of elements")
    if direction is Direction.REVERSE:
        ref_values, dec_values, reference_party = bob, alice, BOB
    else:
        ref_values, dec_values, reference_party = alice, bob, ALICE
    corrector = ALICE if reference_party == BOB else BOB
    n, m, d = ref_values.size, config.m, config.disclose_count

    # reference side
    ref_cells = config.cells(ref_values)
    ref_bits = ((config.labels[ref_cells][:, None] >> np.arange(m)) & 1).astype(np.uint8)

    # both sides know the public model, hence the expected error rates
    ber = predicted_ber(pair, config)
    parity_before = channel.transcript.parity_bits_exchanged

    out = np.zeros((n, m), dtype=np.uint8)
    for j in range(d):
        channel.send(reference_party, "disclosed", ref_bits[:, j])
        out[:, j] = channel.receive(corrector, "disclosed")

    probs = cell_probabilities(pair, dec_values, config.edges)
    initial_ber = np.zeros(m)
    weights = 1 << np.arange(m)
    for j in range(d, m):
        known_lower = (out[:, :j].astype(np.int64) * weights[:j]).sum(axis=1)
        guess = decode_slice(probs, known_lower, j, config.labels)
        initial_ber[j] = float(np.mean(guess != ref_bits[:, j]))
        out[:, j] = cascade_reconcile(ref_bits[:, j], guess, schedule.params_for(float(ber[j]), j), channel,
                                      reference_party=reference_party, slice_index=j)

    parity = channel.transcript.parity_bits_exchanged - parity_before
    h_q = _plugin_entropy(ref_cells, config.n_cells)
    i_rec = h_q - d - parity / n
    return ReconciliationResult(ref_bits, out, config, direction, i_rec, h_q, initial_ber, parity)
