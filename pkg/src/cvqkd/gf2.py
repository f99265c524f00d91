"""Polynomial arithmetic over GF(2) and binary extension fields.

Polynomials are stored as Python integers: bit ``i`` is the coefficient of
``x**i``.  Two carry-less multiplication back ends are provided.  The
shift-and-xor one works word-parallel on Python's big integers.  The FFT
one convolves the coefficient vectors in floating point and reduces the
counts mod 2.  It is exact as long as the counts stay well below 2**52,
which holds for any operand this package uses.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "BinaryPolynomial",
    "FieldSpec",
    "clmul",
    "poly_mod",
    "poly_gcd",
    "gf2x_mul_mod",
    "field_pow",
    "field_inverse",
    "is_irreducible",
    "bits_to_int",
    "int_to_bits",
    "PA_FIELD",
    "VERIFICATION_CEILING",
]

VERIFICATION_CEILING = 4096

# Moduli whose irreducibility is taken from the literature rather than
# checked at construction time (too large for the squaring test).
KNOWN_IRREDUCIBLE = frozenset({(110503, (519,))})

_FFT_THRESHOLD_BITS = 4096


def bits_to_int(bits) -> int:
    """Little-endian bit vector to integer."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size == 0:
        return 0
    packed = np.packbits(bits & 1, bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")


def int_to_bits(value: int, length: Optional[int] = None) -> np.ndarray:
    """Integer to little-endian bit vector of ``length`` bits (uint8)."""
    if value < 0:
        raise ValueError("negative integers have no polynomial form")
    if length is None:
        length = max(value.bit_length(), 1)
    nbytes = (length + 7) // 8
    if value.bit_length() > length:
        raise ValueError(f"value needs {value.bit_length()} bits, only {length} requested")
    raw = np.frombuffer(value.to_bytes(nbytes, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:length].copy()


def _clmul_shift(a: int, b: int) -> int:
    if a.bit_length() < b.bit_length():
        a, b = b, a
    out = 0
    shift = 0
    while b:
        if b & 1:
            out ^= a << shift
        b >>= 1
        shift += 1
    return out


def _clmul_fft(a: int, b: int) -> int:
    la, lb = a.bit_length(), b.bit_length()
    size = 1 << (la + lb - 1).bit_length()
    fa = np.fft.rfft(int_to_bits(a, la).astype(np.float64), size)
    fb = np.fft.rfft(int_to_bits(b, lb).astype(np.float64), size)
    counts = np.fft.irfft(fa * fb, size)[: la + lb - 1]
    parity = (np.rint(counts).astype(np.int64) & 1).astype(np.uint8)
    return bits_to_int(parity)


def clmul(a: int, b: int, method: str = "auto") -> int:
    """Carry-less product of two GF(2) polynomials given as integers.

    ``method`` is ``"shift"``, ``"fft"`` or ``"auto"`` (FFT once both
    operands exceed a few thousand bits).  All methods return identical
    results.
    """
    if a == 0 or b == 0:
        return 0
    if method == "auto":
        method = "fft" if min(a.bit_length(), b.bit_length()) > _FFT_THRESHOLD_BITS else "shift"
    if method == "shift":
        return _clmul_shift(a, b)
    if method == "fft":
        return _clmul_fft(a, b)
    raise ValueError(f"unknown multiplication method {method!r}")


def poly_mod(a: int, m: int) -> int:
    """Remainder of ``a`` divided by ``m`` (schoolbook long division)."""
    if m == 0:
        raise ZeroDivisionError("polynomial division by zero")
    dm = m.bit_length()
    while a.bit_length() >= dm:
        a ^= m << (a.bit_length() - dm)
    return a


def poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, poly_mod(a, b)
    return a


@lru_cache(maxsize=1)
def _square_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint16)
    for byte in range(256):
        spread = 0
        for i in range(8):
            if byte >> i & 1:
                spread |= 1 << (2 * i)
        table[byte] = spread
    return table


def _square(a: int) -> int:
    # Squaring in characteristic 2 only interleaves zeros between the bits.
    if a == 0:
        return 0
    raw = np.frombuffer(a.to_bytes((a.bit_length() + 7) // 8, "little"), dtype=np.uint8)
    spread = _square_table()[raw].astype("<u2")
    return int.from_bytes(spread.tobytes(), "little")


class BinaryPolynomial:
    """An element of GF(2)[x].

    The zero polynomial is canonical (``value == 0``) and has degree -1.
    """

    __slots__ = ("value",)

    def __init__(self, value: int = 0):
        if value < 0:
            raise ValueError("polynomial coefficients are bits; negative value")
        self.value = int(value)

    @classmethod
    def from_bits(cls, bits) -> "BinaryPolynomial":
        return cls(bits_to_int(bits))

    @classmethod
    def from_exponents(cls, exponents: Iterable[int]) -> "BinaryPolynomial":
        value = 0
        for e in exponents:
            value ^= 1 << e
        return cls(value)

    @classmethod
    def from_words(cls, words) -> "BinaryPolynomial":
        """Build from little-endian 64-bit words (word 0 holds x^0..x^63)."""
        words = np.asarray(words, dtype="<u8")
        return cls(int.from_bytes(words.tobytes(), "little"))

    def to_bits(self, length: Optional[int] = None) -> np.ndarray:
        return int_to_bits(self.value, length)

    def to_words(self, count: Optional[int] = None) -> np.ndarray:
        if count is None:
            count = max((self.value.bit_length() + 63) // 64, 1)
        return np.frombuffer(self.value.to_bytes(8 * count, "little"), dtype="<u8").copy()

    @property
    def degree(self) -> int:
        return self.value.bit_length() - 1

    def is_zero(self) -> bool:
        return self.value == 0

    def __bool__(self) -> bool:
        return self.value != 0

    def __eq__(self, other) -> bool:
        if isinstance(other, BinaryPolynomial):
            return self.value == other.value
        return NotImplemented

    def __hash__(self) -> int:
        return hash(("gf2x", self.value))

    def __add__(self, other: "BinaryPolynomial") -> "BinaryPolynomial":
        return BinaryPolynomial(self.value ^ other.value)

    __xor__ = __add__
    __sub__ = __add__

    def __mul__(self, other: "BinaryPolynomial") -> "BinaryPolynomial":
        return BinaryPolynomial(clmul(self.value, other.value))

    def __mod__(self, other: "BinaryPolynomial") -> "BinaryPolynomial":
        return BinaryPolynomial(poly_mod(self.value, other.value))

    def __repr__(self) -> str:
        if self.value == 0:
            return "BinaryPolynomial(0)"
        terms = [i for i in range(self.value.bit_length() - 1, -1, -1) if self.value >> i & 1]
        if len(terms) > 6:
            return f"BinaryPolynomial(degree={self.degree}, weight={len(terms)})"
        return "BinaryPolynomial(" + " + ".join("1" if t == 0 else f"x^{t}" for t in terms) + ")"


class FieldSpec:
    """GF(2^n) represented as GF(2)[x] modulo a sparse polynomial.

    The modulus is ``x^n + sum(x^t for t in taps) + 1``.  A single tap gives
    the trinomial form used for privacy amplification.  Fields with
    ``n <= VERIFICATION_CEILING`` are checked for irreducibility on
    construction; larger ones must be listed as known or passed with
    ``assume_irreducible=True``.
    """

    def __init__(self, n: int, k: Union[int, Sequence[int]], *, assume_irreducible: bool = False):
        taps = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
        taps = tuple(sorted({int(t) for t in taps}, reverse=True))
        if n < 2:
            raise ValueError("extension degree must be at least 2")
        if not taps or any(not 0 < t < n for t in taps):
            raise ValueError(f"middle exponents must lie in (0, {n}), got {taps}")
        self.n = int(n)
        self.taps = taps
        self.modulus = (1 << n) | 1
        for t in taps:
            self.modulus |= 1 << t
        self._mask = (1 << n) - 1
        self._fold = tuple(taps) + (0,)

        verdict = is_irreducible(self)
        if verdict is False:
            raise ValueError(f"modulus {self.describe()} is reducible over GF(2)")
        if verdict is None and not (assume_irreducible or (self.n, self.taps) in KNOWN_IRREDUCIBLE):
            raise ValueError(
                f"cannot verify {self.describe()} above degree {VERIFICATION_CEILING}; "
                "pass assume_irreducible=True to accept it"
            )
        self.verified = verdict is True

    @property
    def k(self) -> int:
        return self.taps[0]

    @property
    def is_trinomial(self) -> bool:
        return len(self.taps) == 1

    def describe(self) -> str:
        return " + ".join([f"x^{self.n}"] + [f"x^{t}" for t in self.taps] + ["1"])

    def reduce(self, value: int) -> int:
        n, mask, fold = self.n, self._mask, self._fold
        while value >> n:
            high = value >> n
            value &= mask
            for t in fold:
                value ^= high << t
        return value

    def element(self, value) -> BinaryPolynomial:
        if isinstance(value, BinaryPolynomial):
            value = value.value
        return BinaryPolynomial(self.reduce(int(value)))

    def __eq__(self, other) -> bool:
        return isinstance(other, FieldSpec) and (self.n, self.taps) == (other.n, other.taps)

    def __hash__(self) -> int:
        return hash((self.n, self.taps))

    def __repr__(self) -> str:
        return f"FieldSpec({self.describe()})"


def _check_operand(p: BinaryPolynomial, field: FieldSpec, name: str) -> None:
    if p.value.bit_length() > field.n:
        raise ValueError(f"{name} has degree {p.degree} >= field degree {field.n}")


def gf2x_mul_mod(a: BinaryPolynomial, b: BinaryPolynomial, field: FieldSpec,
                 method: str = "auto") -> BinaryPolynomial:
    """``a * b mod modulus``; both operands must already be reduced."""
    _check_operand(a, field, "a")
    _check_operand(b, field, "b")
    return BinaryPolynomial(field.reduce(clmul(a.value, b.value, method)))


def field_pow(a: BinaryPolynomial, e: int, field: FieldSpec) -> BinaryPolynomial:
    _check_operand(a, field, "a")
    result, base = 1, a.value
    while e:
        if e & 1:
            result = field.reduce(clmul(result, base))
        base = field.reduce(_square(base))
        e >>= 1
    return BinaryPolynomial(result)


def field_inverse(a: BinaryPolynomial, field: FieldSpec) -> BinaryPolynomial:
    """Inverse via a^(2^n - 2); only practical for small n."""
    if a.is_zero():
        raise ZeroDivisionError("zero has no multiplicative inverse")
    return field_pow(a, (1 << field.n) - 2, field)


def _prime_factors(n: int) -> Tuple[int, ...]:
    out, p = [], 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return tuple(out)


def _x_pow_2_pow(m: int, reduce) -> int:
    t = 2  # the polynomial x
    for _ in range(m):
        t = reduce(_square(t))
    return t


def is_irreducible(field, ceiling: int = VERIFICATION_CEILING) -> Optional[bool]:
    """Rabin's test for the field modulus.

    Returns True or False, or None when ``n`` exceeds ``ceiling`` and the
    question is left unverified.  ``field`` may be a FieldSpec or a raw
    ``(n, taps)`` pair.
    """
    if isinstance(field, FieldSpec):
        n, taps = field.n, field.taps
    else:
        n, taps = field
        taps = (taps,) if isinstance(taps, (int, np.integer)) else tuple(taps)
    modulus = (1 << n) | 1
    for t in taps:
        modulus |= 1 << t
    if n > ceiling:
        return None
    mask = (1 << n) - 1
    fold = tuple(taps) + (0,)

    def reduce(v: int) -> int:
        while v >> n:
            high = v >> n
            v &= mask
            for t in fold:
                v ^= high << t
        return v

    if _x_pow_2_pow(n, reduce) != 2:
        return False
    for q in _prime_factors(n):
        t = _x_pow_2_pow(n // q, reduce)
        if poly_gcd(modulus, t ^ 2) != 1:
            return False
    return True


PA_FIELD = FieldSpec(110503, 519)
