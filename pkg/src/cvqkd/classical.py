"""Authenticated classical channel, one-time pad and transcript.

Both parties live in one process.  Messages go through ordered per-direction
queues and every message is logged.  Data payloads are XORed with pad bits
shared by both sides; control messages (block ranges to compare, pass/fail
flags) travel in the clear and carry no key-dependent bits beyond what the
error positions already reveal.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional, Set, Tuple

import numpy as np

__all__ = [
    "ALICE",
    "BOB",
    "ClassicalChannel",
    "Message",
    "OneTimePad",
    "PadUnderflow",
    "Transcript",
]

ALICE = "alice"
BOB = "bob"


class PadUnderflow(RuntimeError):
    """Not enough shared secret bits left to encrypt a message."""


class OneTimePad:
    """Shared secret bit string consumed front to back, never reused."""

    def __init__(self, bits):
        self._bits = np.asarray(bits, dtype=np.uint8).ravel().copy()
        self._pos = 0

    @classmethod
    def random(cls, n_bits: int, rng: np.random.Generator) -> "OneTimePad":
        return cls(rng.integers(0, 2, n_bits, dtype=np.uint8))

    @property
    def consumed(self) -> int:
        return self._pos

    @property
    def remaining(self) -> int:
        return self._bits.size - self._pos

    def take(self, n: int) -> Tuple[int, np.ndarray]:
        """Reserve ``n`` bits; returns (offset, bits)."""
        if n > self.remaining:
            raise PadUnderflow(f"need {n} pad bits, {self.remaining} left")
        off = self._pos
        self._pos += n
        return off, self._bits[off:self._pos]

    def segment(self, offset: int, n: int) -> np.ndarray:
        return self._bits[offset:offset + n]

    def extend(self, bits) -> None:
        self._bits = np.concatenate([self._bits, np.asarray(bits, dtype=np.uint8).ravel()])


@dataclass(frozen=True)
class Message:
    seq: int
    sender: str
    receiver: str
    kind: str
    payload_bits: int
    encrypted: bool
    pad_counter: int
    control_items: int = 0


@dataclass
class Transcript:
    """Record of everything sent over the classical channel."""

    messages: List[Message] = field(default_factory=list)
    parity_bits_exchanged: int = 0
    disclosed_bits: int = 0
    verification_bits: int = 0
    pad_consumed: int = 0
    error_positions: Set[Tuple[int, int]] = field(default_factory=set)

    @property
    def payload_bits(self) -> int:
        return sum(m.payload_bits for m in self.messages)

    def count(self, kind: str) -> int:
        return sum(m.payload_bits for m in self.messages if m.kind == kind)

    def delta_mask(self, n_elements: int, n_slices: int) -> np.ndarray:
        mask = np.zeros((n_elements, n_slices), dtype=bool)
        if self.error_positions:
            idx = np.array(sorted(self.error_positions))
            mask[idx[:, 0], idx[:, 1]] = True
        return mask

    def to_log(self) -> str:
        lines = ["seq\tdirection\tkind\tsize\tencrypted\tpad_counter"]
        for m in self.messages:
            size = m.payload_bits if m.encrypted else m.control_items
            lines.append(f"{m.seq}\t{m.sender}->{m.receiver}\t{m.kind}\t{size}\t{int(m.encrypted)}\t{m.pad_counter}")
        return "\n".join(lines) + "\n"

    def summary(self) -> Dict[str, int]:
        return {
            "messages": len(self.messages),
            "parity_bits": self.parity_bits_exchanged,
            "disclosed_bits": self.disclosed_bits,
            "verification_bits": self.verification_bits,
            "pad_consumed": self.pad_consumed,
            "error_positions": len(self.error_positions),
        }


_COUNTERS = {"parity": "parity_bits_exchanged", "disclosed": "disclosed_bits", "verify": "verification_bits"}


class ClassicalChannel:
    """Ordered, reliable duplex delivery between Alice and Bob.

    ``send`` with ``encrypt=True`` takes a bit array, XORs it with fresh pad
    bits and queues the ciphertext; ``receive`` decrypts with the same pad
    segment.  Anything else is sent as a clear control message.
    """

    def __init__(self, pad: OneTimePad, transcript: Optional[Transcript] = None):
        self.pad = pad
        self.transcript = transcript if transcript is not None else Transcript()
        self._queues: Dict[str, Deque[Tuple[Message, Any, Optional[int]]]] = {ALICE: deque(), BOB: deque()}
        self.eavesdropped: List[Tuple[Message, Any]] = []

    @staticmethod
    def _peer(party: str) -> str:
        if party not in (ALICE, BOB):
            raise ValueError(f"unknown party {party!r}")
        return BOB if party == ALICE else ALICE

    def send(self, sender: str, kind: str, payload: Any, encrypt: bool = True) -> Message:
        receiver = self._peer(sender)
        tr = self.transcript
        if encrypt:
            bits = np.asarray(payload, dtype=np.uint8).ravel()
            offset, key = self.pad.take(bits.size)
            wire = bits ^ key
            tr.pad_consumed += bits.size
            attr = _COUNTERS.get(kind)
            if attr:
                setattr(tr, attr, getattr(tr, attr) + bits.size)
            msg = Message(len(tr.messages), sender, receiver, kind, bits.size, True, self.pad.consumed)
        else:
            wire, offset = payload, None
            items = len(payload) if hasattr(payload, "__len__") else 1
            msg = Message(len(tr.messages), sender, receiver, kind, 0, False, self.pad.consumed, items)
        tr.messages.append(msg)
        self._queues[receiver].append((msg, wire, offset))
        self.eavesdropped.append((msg, wire))
        return msg

    def receive(self, receiver: str, kind: Optional[str] = None) -> Any:
        queue = self._queues[receiver]
        if not queue:
            raise RuntimeError(f"{receiver} has no pending message")
        msg, wire, offset = queue.popleft()
        if kind is not None and msg.kind != kind:
            raise RuntimeError(f"{receiver} expected {kind!r}, got {msg.kind!r}")
        if msg.encrypted:
            return wire ^ self.pad.segment(offset, msg.payload_bits)
        return wire

    def pending(self, receiver: str) -> int:
        return len(self._queues[receiver])
