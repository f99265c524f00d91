"""Privacy amplification by multiplication in GF(2^n).

The reconciled bits become the coefficients of a polynomial, which is
multiplied by a publicly drawn nonzero field element; the key is the
requested number of low-order coefficients of the product.  For a fixed
pair of distinct inputs the product of their difference with a uniform
nonzero multiplier is uniform over the nonzero elements, so truncated
multiplication is a universal family.
"""

from __future__ import annotations

import hashlib
import math
from typing import List, Tuple

import numpy as np

from .gf2 import PA_FIELD, BinaryPolynomial, FieldSpec, bits_to_int, gf2x_mul_mod, int_to_bits

__all__ = [
    "hash_extract",
    "draw_public_element",
    "final_key_length",
    "margin_for_security_parameter",
    "plan_blocks",
    "pack_bits",
    "unpack_bits",
    "digest64",
]


def hash_extract(reconciled, r: BinaryPolynomial, out_len: int,
                 field: FieldSpec = PA_FIELD, method: str = "auto") -> np.ndarray:
    """Compress ``reconciled`` to ``out_len`` bits.

    Parameters
    ----------
    reconciled : array_like of {0, 1}
        At most ``field.n`` bits; bit ``i`` is the coefficient of ``x**i``.
    r : BinaryPolynomial
        Public nonzero multiplier, already reduced into the field.
    out_len : int
        Number of least significant product coefficients to keep.

    Returns
    -------
    ndarray of uint8
    """
    bits = np.asarray(reconciled, dtype=np.uint8).ravel()
    if bits.size > field.n:
        raise ValueError(f"{bits.size} input bits exceed the field degree {field.n}")
    if not 0 < out_len <= field.n:
        raise ValueError(f"out_len must lie in (0, {field.n}], got {out_len}")
    if r.is_zero():
        raise ValueError("the hashing multiplier must be nonzero")
    product = gf2x_mul_mod(BinaryPolynomial(bits_to_int(bits)), r, field, method)
    low = product.value & ((1 << out_len) - 1)
    return int_to_bits(low, out_len)


def draw_public_element(field: FieldSpec, rng: np.random.Generator) -> BinaryPolynomial:
    """Uniform nonzero element from a public-coin generator shared by both parties."""
    nbytes = (field.n + 7) // 8
    while True:
        raw = rng.integers(0, 256, size=nbytes, dtype=np.uint8).tobytes()
        value = int.from_bytes(raw, "little") & ((1 << field.n) - 1)
        if value:
            return BinaryPolynomial(value)


def final_key_length(i_rec_bits: int, leakage_bits: int, safety_margin: int = 0) -> int:
    if min(i_rec_bits, leakage_bits, safety_margin) < 0:
        raise ValueError("bit counts must be non-negative")
    return max(0, int(i_rec_bits) - int(leakage_bits) - int(safety_margin))


def margin_for_security_parameter(epsilon: float) -> int:
    """Extra bits removed so the output is ``epsilon``-close to uniform (leftover hash lemma)."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    return math.ceil(2 * math.log2(1 / epsilon))


def plan_blocks(n_elements: int, bits_per_element: int, field: FieldSpec = PA_FIELD) -> List[Tuple[int, int]]:
    """Split ``n_elements`` into contiguous runs whose bits fit in one field element.

    The last run may be shorter; its polynomial is implicitly zero-padded.
    """
    if bits_per_element <= 0:
        raise ValueError("bits_per_element must be positive")
    per_block = field.n // bits_per_element
    if per_block == 0:
        raise ValueError("a single element does not fit into the field")
    return [(start, min(start + per_block, n_elements)) for start in range(0, n_elements, per_block)]


def pack_bits(bits) -> bytes:
    """Little-endian bit order, zero-padded to whole 64-bit words."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    padded = np.zeros(-(-bits.size // 64) * 64, dtype=np.uint8)
    padded[: bits.size] = bits
    return np.packbits(padded, bitorder="little").tobytes()


def unpack_bits(data: bytes, length: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:length].copy()


def digest64(bits) -> int:
    """64-bit verification hash of a bit string (length-prefixed)."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    h = hashlib.blake2b(digest_size=8)
    h.update(len(bits).to_bytes(8, "little"))
    h.update(pack_bits(bits))
    return int.from_bytes(h.digest(), "little")
