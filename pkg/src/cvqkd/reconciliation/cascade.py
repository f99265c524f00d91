"""Cascade with encrypted parities.

The corrector names the ranges it wants compared (in the clear) and the
reference holder answers with its parities XORed with pad bits.  An
eavesdropper therefore follows the bisection, i.e. learns where the errors
were, but never a parity value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..classical import BOB, ClassicalChannel
from ..privacy import digest64

__all__ = ["CascadeParams", "ReconciliationFailure", "cascade_reconcile"]

Range = Tuple[int, int, int]  # (pass, lo, hi) in that pass's permuted order


class ReconciliationFailure(RuntimeError):
    """The strings still differ after the last pass."""


@dataclass(frozen=True)
class CascadeParams:
    """Block schedule: pass ``p`` uses blocks of ``k1 * growth**p`` bits.

    Pass 0 works on the natural order; later passes on a permutation drawn
    from ``seed``, which both parties know.  ``min_blocks`` caps the block
    length at ``ceil(n / min_blocks)`` so that fast-growing schedules on
    low-error slices keep splitting the string into several blocks.
    """

    passes: int = 4
    k1: int = 16
    growth: float = 2.0
    seed: int = 0
    min_blocks: int = 1

    def __post_init__(self):
        if self.passes < 2:
            raise ValueError("Cascade needs at least two passes")
        if self.k1 < 2:
            raise ValueError("initial block length must be >= 2")
        if self.growth < 1:
            raise ValueError("block growth factor must be >= 1")
        if self.min_blocks < 1:
            raise ValueError("min_blocks must be >= 1")

    @classmethod
    def for_ber(cls, ber: float, **kwargs) -> "CascadeParams":
        """Classic prescription ``k1 = 0.73 / BER``."""
        k1 = max(2, round(0.73 / ber)) if ber > 0 else 1 << 30
        return cls(k1=k1, **kwargs)

    def block_size(self, p: int, n: int) -> int:
        cap = max(2, -(-n // self.min_blocks))
        return int(min(max(n, 1), cap, max(2, round(self.k1 * self.growth**p))))


def _permutations(n: int, params: CascadeParams) -> List[np.ndarray]:
    perms = [np.arange(n)]
    for p in range(1, params.passes):
        perms.append(np.random.default_rng([params.seed, p]).permutation(n))
    return perms


def cascade_reconcile(reference, noisy, params: CascadeParams, channel: ClassicalChannel, *,
                      reference_party: str = BOB, slice_index: int = 0,
                      element_index: Optional[Sequence[int]] = None) -> np.ndarray:
    """Correct ``noisy`` towards ``reference``.

    Parameters
    ----------
    reference, noisy : array_like of {0, 1}
        The two parties' bits for one slice.
    channel : ClassicalChannel
        Carries and logs every message; its pad pays for each parity and
        the final 64-bit verification hash.
    reference_party : str
        Holder of ``reference`` (Bob for reverse reconciliation).
    slice_index, element_index
        Labels for the error positions recorded in the transcript.

    Returns
    -------
    ndarray of uint8
        The corrector's bits after the last pass.

    Raises
    ------
    ReconciliationFailure
        If the verification hashes disagree.
    PadUnderflow
        If the pad runs out.
    """
    ref = np.asarray(reference, dtype=np.uint8).ravel()
    work = np.asarray(noisy, dtype=np.uint8).ravel().copy()
    n = ref.size
    if work.size != n:
        raise ValueError("reference and noisy strings differ in length")
    corrector = channel._peer(reference_party)
    labels = np.arange(n) if element_index is None else np.asarray(element_index)

    perms = _permutations(n, params)
    where = [np.argsort(perm) for perm in perms]
    sizes = [params.block_size(p, n) for p in range(params.passes)]
    # reference holder: prefix XOR per pass for O(1) range parities
    prefix = [np.concatenate([[0], np.bitwise_xor.accumulate(ref[perm])]).astype(np.uint8) for perm in perms]

    known: Dict[Range, int] = {}
    flipped_all: List[int] = []

    def exchange(ranges: List[Range]) -> None:
        channel.send(corrector, "parity_request", ranges, encrypt=False)
        asked = channel.receive(reference_party, "parity_request")
        answer = np.fromiter((prefix[p][hi] ^ prefix[p][lo] for p, lo, hi in asked), np.uint8, len(asked))
        channel.send(reference_party, "parity", answer)
        got = channel.receive(corrector, "parity")
        known.update(zip(ranges, got.tolist()))

    def parity(r: Range) -> int:
        p, lo, hi = r
        return int(work[perms[p][lo:hi]].sum() & 1)

    def bisect(ranges: List[Range]) -> List[int]:
        active, flipped = list(ranges), []

        def flip(e: int) -> None:
            work[e] ^= 1
            flipped.append(e)

        while active:
            # a flip made for another range may already have fixed this one
            active = [r for r in active if parity(r) != known[r]]
            for p, lo, hi in active:
                if hi - lo == 1:
                    flip(int(perms[p][lo]))
            active = [r for r in active if r[2] - r[1] > 1]
            need = sorted({(p, lo, (lo + hi) // 2) for p, lo, hi in active} - known.keys())
            if need:
                exchange(need)
            nxt = []
            for p, lo, hi in active:
                mid = (lo + hi) // 2
                left = (p, lo, mid)
                if parity(left) != known[left]:
                    sub = left
                else:
                    sub = (p, mid, hi)
                    known.setdefault(sub, known[(p, lo, hi)] ^ known[left])
                if sub[2] - sub[1] == 1:
                    flip(int(perms[p][sub[1]]))
                else:
                    nxt.append(sub)
            active = nxt
        return flipped

    for p in range(params.passes):
        k = sizes[p]
        blocks = [(p, lo, min(lo + k, n)) for lo in range(0, n, k)]
        exchange(blocks)
        pending = [b for b in blocks if parity(b) != known[b]]
        while pending:
            flipped = bisect(pending)
            flipped_all.extend(flipped)
            touched = set()
            for e in flipped:
                for q in range(p + 1):
                    lo = (int(where[q][e]) // sizes[q]) * sizes[q]
                    touched.add((q, lo, min(lo + sizes[q], n)))
            pending = sorted(b for b in touched if parity(b) != known[b])

    channel.transcript.error_positions.update((int(labels[e]), slice_index) for e in flipped_all)

    h = digest64(ref)
    channel.send(reference_party, "verify", np.array([(h >> i) & 1 for i in range(64)], dtype=np.uint8))
    theirs = channel.receive(corrector, "verify")
    ok = int(sum(int(b) << i for i, b in enumerate(theirs))) == digest64(work)
    channel.send(corrector, "verify_result", [ok], encrypt=False)
    channel.receive(reference_party, "verify_result")
    if not ok:
        raise ReconciliationFailure(f"slice {slice_index}: strings differ after {params.passes} passes")
    return work
