"""Quantizer, slice labels and multistage decoding for Gaussian key elements.

The reference party's value is cut into ``2**m`` cells; the cell's
``m``-bit label gives one bit per slice, least significant slice first.
The other party decodes slice ``j`` knowing the reference's slices below
``j`` and its own correlated value, by picking the more probable bit under
the Gaussian model of the pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "GaussianPair",
    "NoKeyPossible",
    "SliceConfig",
    "SlicePlan",
    "build_slices",
    "cell_probabilities",
    "decode_slice",
    "expected_i_rec",
    "predicted_ber",
    "quantile_boundaries",
    "slice_encode",
    "slice_entropies",
]

DEFAULT_SLICES = 5
_SCALES = np.round(np.arange(0.8, 4.01, 0.05), 2)


class NoKeyPossible(ValueError):
    """The estimated channel carries no usable correlation."""


@dataclass(frozen=True)
class SliceConfig:
    """Quantizer thresholds and labelling.

    ``boundaries`` holds the ``2**m - 1`` finite thresholds; the outer cells
    extend to infinity.  Cells are right-closed at their lower edge: a value
    equal to a threshold falls into the cell on its right.
    """

    m: int
    boundaries: np.ndarray
    disclose_count: int
    label_map: Tuple[int, ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.float64)
        object.__setattr__(self, "boundaries", b)
        if self.m < 1:
            raise ValueError("need at least one slice")
        if b.shape != ((1 << self.m) - 1,):
            raise ValueError(f"{(1 << self.m) - 1} thresholds expected for m = {self.m}, got {b.size}")
        if np.any(np.diff(b) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if not 0 <= self.disclose_count < self.m:
            raise ValueError("disclose_count must lie in [0, m)")
        labels = tuple(self.label_map) or tuple(range(1 << self.m))
        if sorted(labels) != list(range(1 << self.m)):
            raise ValueError("label_map must be a permutation of the cell indices")
        object.__setattr__(self, "label_map", labels)

    @property
    def n_cells(self) -> int:
        return 1 << self.m

    @property
    def labels(self) -> np.ndarray:
        return np.asarray(self.label_map, dtype=np.int64)

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[-np.inf], self.boundaries, [np.inf]])

    def cells(self, values) -> np.ndarray:
        return np.searchsorted(self.boundaries, np.asarray(values, dtype=np.float64), side="right")

    def encode(self, values) -> np.ndarray:
        """Per-element labels as integers."""
        return self.labels[self.cells(values)]

    def bits(self, values) -> np.ndarray:
        """``(n, m)`` array; column ``j`` is slice ``j``."""
        lab = self.encode(np.atleast_1d(values))
        return ((lab[:, None] >> np.arange(self.m)) & 1).astype(np.uint8)


def slice_encode(value, config: SliceConfig) -> np.ndarray:
    """The ``m`` slice bits of one value (or an ``(n, m)`` array for many)."""
    out = config.bits(value)
    return out[0] if np.ndim(value) == 0 else out


@dataclass(frozen=True)
class GaussianPair:
    """Zero-mean jointly Gaussian (reference, decoder) values."""

    var_ref: float
    var_dec: float
    cov: float

    def __post_init__(self):
        if self.var_ref <= 0 or self.var_dec <= 0:
            raise NoKeyPossible("variances must be positive")
        if self.cov * self.cov >= self.var_ref * self.var_dec:
            raise ValueError("covariance matrix is not positive definite")

    @property
    def cond_sd(self) -> float:
        return math.sqrt(self.var_ref - self.cov**2 / self.var_dec)

    @property
    def snr(self) -> float:
        return self.cov**2 / (self.var_ref * self.var_dec - self.cov**2)

    @property
    def mutual_information(self) -> float:
        return 0.5 * math.log2(1.0 + self.snr)

    def conditional_mean(self, dec) -> np.ndarray:
        return (self.cov / self.var_dec) * np.asarray(dec, dtype=np.float64)

    @classmethod
    def from_channel(cls, g: float, v_a: float, chi_tot: float, reverse: bool = True) -> "GaussianPair":
        """Alice's amplitude and Bob's measurement for a line of transmission ``g``.

        Bob's value is ``sqrt(g) * (a + noise)`` with input-referred noise
        variance ``1 + chi_tot`` (vacuum of the coherent state included).
        """
        if g <= 0 or v_a <= 0:
            raise NoKeyPossible("no correlation without transmission and modulation")
        var_a = v_a
        var_b = g * (v_a + 1.0 + chi_tot)
        cov = math.sqrt(g) * v_a
        return cls(var_b, var_a, cov) if reverse else cls(var_a, var_b, cov)

    @classmethod
    def from_estimate(cls, estimate, reverse: bool = True) -> "GaussianPair":
        return cls.from_channel(estimate.g_hat, estimate.v_a, estimate.chi_tot_hat, reverse)


def cell_probabilities(pair: GaussianPair, dec, edges: np.ndarray) -> np.ndarray:
    """``P(reference in cell | decoder value)``, shape ``(n, cells)``."""
    mu = pair.conditional_mean(dec)
    z = (edges[None, :] - mu[:, None]) / pair.cond_sd
    return np.diff(ndtr(z), axis=1)


def decode_slice(probs: np.ndarray, known_lower: np.ndarray, j: int, labels: np.ndarray) -> np.ndarray:
    """Most probable value of slice ``j`` given the reference's lower slices."""
    low = labels & ((1 << j) - 1)
    consistent = low[None, :] == np.asarray(known_lower)[:, None]
    p = np.where(consistent, probs, 0.0)
    p1 = p[:, ((labels >> j) & 1) == 1].sum(axis=1)
    p0 = p.sum(axis=1) - p1
    return (p1 > p0).astype(np.uint8)


def _decoder_grid(pair: GaussianPair, points: int = 4001) -> Tuple[np.ndarray, np.ndarray]:
    sd = math.sqrt(pair.var_dec)
    x = np.linspace(-9.0, 9.0, points) * sd
    w = np.exp(-0.5 * (x / sd) ** 2)
    return x, w / w.sum()


def predicted_ber(pair: GaussianPair, config: SliceConfig, points: int = 4001) -> np.ndarray:
    """Per-slice error rate of multistage decoding, lower slices assumed correct."""
    x, w = _decoder_grid(pair, points)
    probs = cell_probabilities(pair, x, config.edges)
    labels = config.labels
    out = np.empty(config.m)
    for j in range(config.m):
        low = labels & ((1 << j) - 1)
        bit = (labels >> j) & 1
        err = np.zeros(x.size)
        for lower in range(1 << j):
            sel = low == lower
            p1 = probs[:, sel & (bit == 1)].sum(axis=1)
            p0 = probs[:, sel & (bit == 0)].sum(axis=1)
            err += np.minimum(p0, p1)
        out[j] = float(err @ w)
    return out


def slice_entropies(pair: GaussianPair, config: SliceConfig) -> Tuple[float, np.ndarray]:
    """``H(Q)`` of the reference cell and ``H(S_j | S_<j)`` per slice."""
    pc = np.diff(ndtr(config.edges / math.sqrt(pair.var_ref)))
    labels = config.labels

    def entropy_of_partition(mask: int) -> float:
        groups = np.bincount(labels & mask, weights=pc, minlength=mask + 1)
        g = groups[groups > 0]
        return float(-(g * np.log2(g)).sum())

    joint = [0.0] + [entropy_of_partition((1 << (j + 1)) - 1) for j in range(config.m)]
    return joint[-1], np.diff(joint)


def _h2(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-300, 0.5)
    return -(p * np.log2(p) + (1 - p) * np.log2(1 - p))


def expected_i_rec(pair: GaussianPair, config: SliceConfig, cascade_overhead: float) -> float:
    """Predicted reconciled bits per element: ``H(Q) - d - sum f h(BER_j)``."""
    hq, _ = slice_entropies(pair, config)
    ber = predicted_ber(pair, config, points=1201)
    return hq - config.disclose_count - cascade_overhead * float(_h2(ber[config.disclose_count:]).sum())


def quantile_boundaries(var_ref: float, m: int, scale: float) -> np.ndarray:
    q = ndtri(np.arange(1, 1 << m) / (1 << m))
    return scale * math.sqrt(var_ref) * q


@dataclass(frozen=True)
class SlicePlan:
    config: SliceConfig
    predicted_ber: np.ndarray
    expected_i_rec: float
    i_ab: float = 0.0
    penalty: float = 0.0

    @property
    def objective(self) -> float:
        return self.expected_i_rec - self.penalty


def build_slices(pair: GaussianPair, m: int = DEFAULT_SLICES, *, disclose: str | int = "optimize",
                 allowed_disclose: Sequence[int] = (2, 3), cascade_overhead: float = 1.1,
                 scales: Optional[Sequence[float]] = None,
                 penalty: Optional[Callable[[SliceConfig], float]] = None) -> SlicePlan:
    """Choose thresholds and the number of fully sent slices.

    Thresholds are the Gaussian quantiles of the reference variable
    stretched by a common factor.  The factor, and with ``disclose =
    "optimize"`` also the disclosed-slice count, maximise the predicted
    reconciled information, with Cascade leaking ``cascade_overhead`` times
    the binary entropy of each remaining slice's error rate, minus an
    optional ``penalty`` (e.g. the error-position leakage).  With a penalty
    the search runs on a coarse grid first and is then refined around the
    best point.
    ``disclose = "threshold"`` sends 3 slices when the pair carries less
    than 2 bits and 2 otherwise; an integer fixes the count.
    """
    if pair.snr <= 0:
        raise NoKeyPossible("non-positive signal-to-noise ratio")
    i_ab = pair.mutual_information
    if disclose == "optimize":
        counts = [d for d in allowed_disclose if 0 <= d < m]
    elif disclose == "threshold":
        counts = [3 if i_ab < 2.0 else 2]
    else:
        counts = [int(disclose)]
    if not counts:
        raise ValueError("no admissible disclosed-slice count")

    def plan(d: int, s: float) -> SlicePlan:
        cfg = SliceConfig(m, quantile_boundaries(pair.var_ref, m, s), d, scale=s)
        return SlicePlan(cfg, np.empty(0), expected_i_rec(pair, cfg, cascade_overhead), i_ab,
                         penalty(cfg) if penalty else 0.0)

    if scales is None:
        scales = _SCALES[::5] if penalty else _SCALES
    best = max((plan(d, float(s)) for d in counts for s in scales), key=lambda p: p.objective)
    if penalty and len(scales) > 1:
        step = float(np.min(np.diff(np.sort(scales))))
        fine = best.config.scale + np.arange(-0.8, 0.81, 0.2) * step
        d = best.config.disclose_count
        best = max([best] + [plan(d, round(float(s), 4)) for s in fine if s > 0], key=lambda p: p.objective)
    return SlicePlan(best.config, predicted_ber(pair, best.config), best.expected_i_rec, i_ab, best.penalty)
