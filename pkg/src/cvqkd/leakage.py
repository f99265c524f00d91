"""What Eve may know about the reconciled key.

Two sources: the quantum channel (bounded by the entangling-cloner rates)
and the error positions revealed by encrypted Cascade.  The second term,
``I(K; Delta | E)``, is averaged over Eve's outcomes by Monte Carlo.  For
each outcome the pair (Alice, Bob) is Gaussian with a fixed covariance and
a mean linear in the outcome.  The inner integral runs over the reference
value cell by cell (Gauss-Legendre) and is exact over the decoder's value,
whose decision regions are intervals.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .channel import ChannelParams
from .rates import NoiseAssumption, paranoid_globals
from .reconciliation.slices import GaussianPair, SliceConfig, cell_probabilities

__all__ = [
    "ClonerPosterior",
    "DiscreteJoint",
    "LeakageLedger",
    "NumericFailure",
    "cloner_covariance",
    "cloner_posterior",
    "error_position_table",
    "mc_error_position_info",
    "net_key_rate",
    "total_leakage",
]

DEFAULT_SAMPLES = 10_000
DEFAULT_ORDER = 24


class NumericFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Eve's model


def cloner_covariance(params: ChannelParams, mode: NoiseAssumption | str = NoiseAssumption.REALISTIC,
                      eta: Optional[float] = None) -> np.ndarray:
    """Covariance of (A, B, E...) for the entangling cloner matching ``params``.

    Eve injects one half of an EPR pair of variance ``N`` into a beam
    splitter of transmission ``G`` and keeps the other half and the
    reflected beam.  With unit transmission there is no beam splitter;
    Eve's best option is then a noisy copy of the line output that meets
    the conditional-variance bound (no copy at all if the line is noiseless).
    In realistic mode Bob's detector noise is added after the line and is
    unknown to Eve; in paranoid mode the cloner reproduces the global
    channel including the detector, and Bob's row is rescaled by
    ``1 / sqrt(eta)`` so his value stays in the physical units the
    slice thresholds refer to.
    """
    mode = NoiseAssumption(mode)
    v_a = params.v_a
    v = v_a + 1.0
    if mode is NoiseAssumption.REALISTIC:
        g, chi, det = params.g_line, params.chi_line, params.detector_noise
    else:
        (g, chi), det = paranoid_globals(params, eta), 0.0
    if g < 1.0 - 1e-12:
        eps = max(chi - (1.0 - g) / g, 0.0)
        N = 1.0 + g * eps / (1.0 - g)
        c = math.sqrt(max(N * N - 1.0, 0.0))
        sg, sr = math.sqrt(g), math.sqrt(1.0 - g)
        # order: A, line, E1, E2
        S = np.array([
            [v_a, sg * v_a, 0.0, sr * v_a],
            [sg * v_a, g * v + (1 - g) * N, sr * c, sg * sr * (v - N)],
            [0.0, sr * c, N, -sg * c],
            [sr * v_a, sg * sr * (v - N), -sg * c, (1 - g) * v + g * N],
        ])
    else:
        v_line = v + chi
        target = 1.0 / (chi + 1.0 / v)
        if target >= v_line - 1e-12:
            S = np.array([[v_a, v_a], [v_a, v_line]])
        else:
            # E = line + independent noise, scaled to the MMSE estimate
            extra = target * v_line / (v_line - target)
            k = v_line / (v_line + extra)
            S = np.array([
                [v_a, v_a, k * v_a],
                [v_a, v_line, k * v_line],
                [k * v_a, k * v_line, k * k * (v_line + extra)],
            ])
    S = S.copy()
    S[1, 1] += det
    if mode is NoiseAssumption.PARANOID:
        scale = 1.0 / math.sqrt(g / params.g_line)
        S[1, :] *= scale
        S[:, 1] *= scale
    return S


@dataclass(frozen=True)
class ClonerPosterior:
    """(A, B) given Eve's outcome: fixed covariance, mean ``gain @ e``."""

    covariance: np.ndarray
    gain: np.ndarray
    eve_covariance: np.ndarray

    @property
    def eve_dim(self) -> int:
        return self.eve_covariance.shape[0]

    def mean(self, e) -> np.ndarray:
        e = np.atleast_2d(e)
        return e @ self.gain.T

    @property
    def mean_covariance(self) -> np.ndarray:
        """Covariance of the posterior mean over Eve's outcomes."""
        if self.eve_dim == 0:
            return np.zeros((2, 2))
        return self.gain @ self.eve_covariance @ self.gain.T

    def sample_means(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.eve_dim == 0:
            return np.zeros((n, 2))
        e = rng.multivariate_normal(np.zeros(self.eve_dim), self.eve_covariance, size=n, method="cholesky")
        return self.mean(e)


def cloner_posterior(params: ChannelParams, mode: NoiseAssumption | str = NoiseAssumption.REALISTIC,
                     eta: Optional[float] = None) -> ClonerPosterior:
    S = cloner_covariance(params, mode, eta)
    s_ab, s_ae, s_ee = S[:2, :2], S[:2, 2:], S[2:, 2:]
    if s_ee.size == 0:
        return ClonerPosterior(s_ab.copy(), np.zeros((2, 0)), s_ee.copy())
    gain = np.linalg.solve(s_ee, s_ae.T).T
    cov = s_ab - gain @ s_ae.T
    cov = 0.5 * (cov + cov.T)
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise ValueError("posterior covariance is not positive definite; parameters are unphysical")
    return ClonerPosterior(cov, gain, s_ee.copy())


# --------------------------------------------------------------------------
# decision regions of the decoder


def _decision_breaks(decoder: GaussianPair, config: SliceConfig, cell: int, j: int,
                     grid: np.ndarray, grid_probs: np.ndarray) -> List[float]:
    """Decoder values where the slice-``j`` decision flips, given ``cell``'s lower slices."""
    labels = config.labels
    lower = labels[cell] & ((1 << j) - 1)
    sel = (labels & ((1 << j) - 1)) == lower
    one = sel & (((labels >> j) & 1) == 1)
    zero = sel & (((labels >> j) & 1) == 0)

    def margin(x: float) -> float:
        p = cell_probabilities(decoder, np.array([x]), config.edges)[0]
        return float(p[one].sum() - p[zero].sum())

    s = np.sign(grid_probs[:, one].sum(axis=1) - grid_probs[:, zero].sum(axis=1))
    return [brentq(margin, grid[i], grid[i + 1], xtol=1e-10)
            for i in np.flatnonzero(s[:-1] * s[1:] < 0)]


def _midpoint(lo: float, hi: float) -> float:
    if np.isinf(lo) and np.isinf(hi):
        return 0.0
    if np.isinf(lo):
        return hi - 1.0
    if np.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class _CellIntervals:
    edges: np.ndarray   # (cells, L+1) decoder-value breakpoints, -inf/inf at ends
    codes: np.ndarray   # (cells, L) error pattern index on each interval


def error_position_table(decoder: GaussianPair, config: SliceConfig,
                         corrected: Optional[Sequence[int]] = None) -> _CellIntervals:
    """For each reference cell, the decoder-value intervals and their error patterns.

    The pattern bit ``t`` is set when the decoder's guess for the ``t``-th
    corrected slice differs from the cell's label bit.
    """
    corrected = list(range(config.disclose_count, config.m)) if corrected is None else list(corrected)
    grid = np.linspace(-12.0, 12.0, 8001) * math.sqrt(decoder.var_dec)
    grid_probs = cell_probabilities(decoder, grid, config.edges)
    per_cell = []
    labels = config.labels
    for cell in range(config.n_cells):
        breaks = sorted({b for j in corrected
                         for b in _decision_breaks(decoder, config, cell, j, grid, grid_probs)})
        e = np.concatenate([[-np.inf], breaks, [np.inf]])
        mids = np.array([_midpoint(lo, hi) for lo, hi in zip(e[:-1], e[1:])])
        probs = cell_probabilities(decoder, mids, config.edges)
        code = np.zeros(mids.size, dtype=np.int64)
        for t, j in enumerate(corrected):
            lower = labels[cell] & ((1 << j) - 1)
            sel = (labels & ((1 << j) - 1)) == lower
            bit = (labels >> j) & 1
            p1 = probs[:, sel & (bit == 1)].sum(axis=1)
            p0 = probs[:, sel & (bit == 0)].sum(axis=1)
            guess = (p1 > p0).astype(np.int64)
            code |= (guess != bit[cell]).astype(np.int64) << t
        per_cell.append((e, code))
    width = max(len(c) for _, c in per_cell)
    edges = np.full((config.n_cells, width + 1), np.inf)
    codes = np.zeros((config.n_cells, width), dtype=np.int64)
    for cell, (e, c) in enumerate(per_cell):
        edges[cell, :e.size] = e
        codes[cell, :c.size] = c
    return _CellIntervals(edges, codes)


# --------------------------------------------------------------------------
# inner integral and Monte Carlo


def _mi_from_joint(joint: np.ndarray) -> np.ndarray:
    """Mutual information (bits) of ``(..., K, D)`` joint tables."""
    joint = np.clip(joint, 0.0, None)
    total = joint.sum(axis=(-2, -1), keepdims=True)
    p = joint / total
    pk = p.sum(axis=-1, keepdims=True)
    pd = p.sum(axis=-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(p > 0, p * np.log2(p / (pk * pd)), 0.0)
    mi = term.sum(axis=(-2, -1))
    # rounding in the normalisation leaves ~1e-16 where the answer is exactly zero
    return np.where(mi > 1e-13, mi, 0.0)


def _joint_tables(means: np.ndarray, post: np.ndarray, config: SliceConfig, table: _CellIntervals,
                  reference: int, order: int, n_codes: int) -> np.ndarray:
    """P(K = cell, Delta = code | e) for a batch of posterior means, shape (S, cells, codes)."""
    ref, dec = reference, 1 - reference
    s_rr, s_dd, s_rd = post[ref, ref], post[dec, dec], post[ref, dec]
    sd_r = math.sqrt(s_rr)
    sd_d = math.sqrt(s_dd - s_rd**2 / s_rr)
    slope = s_rd / s_rr
    mu_r, mu_d = means[:, ref], means[:, dec]
    nodes, weights = np.polynomial.legendre.leggauss(order)
    S = means.shape[0]
    out = np.zeros((S, config.n_cells, n_codes))
    b_edges = config.edges
    lo_all = mu_r - 9.0 * sd_r
    hi_all = mu_r + 9.0 * sd_r
    for cell in range(config.n_cells):
        lo = np.maximum(b_edges[cell], lo_all)
        hi = np.minimum(b_edges[cell + 1], hi_all)
        ok = hi > lo
        if not ok.any():
            continue
        half = np.where(ok, 0.5 * (hi - lo), 0.0)
        mid = 0.5 * (hi + lo)
        r = mid[:, None] + half[:, None] * nodes[None, :]              # (S, order)
        w = half[:, None] * weights[None, :] * np.exp(-0.5 * ((r - mu_r[:, None]) / sd_r) ** 2) / (sd_r * math.sqrt(2 * math.pi))
        dmean = mu_d[:, None] + slope * (r - mu_r[:, None])           # (S, order)
        z = (table.edges[cell][None, None, :] - dmean[:, :, None]) / sd_d
        cdf = ndtr(z)                                                  # (S, order, L+1)
        mass = np.diff(cdf, axis=2)                                    # (S, order, L)
        contrib = np.einsum("so,sol->sl", w, mass)
        for code in np.unique(table.codes[cell]):
            sel = table.codes[cell] == code
            out[:, cell, code] += contrib[:, sel].sum(axis=1)
    return out


def _reference_index(direction: str) -> int:
    return 1 if direction == "reverse" else 0


@dataclass(frozen=True)
class ErrorPositionEstimate:
    bits_per_element: float
    stderr: float
    h_delta: float
    samples: int

    def __iter__(self):
        yield self.bits_per_element
        yield self.stderr


@dataclass(frozen=True)
class DiscreteJoint:
    """Finite joint law of (A, B, E) for brute-force checks.

    ``pmf[i, j, k]`` is the probability of ``(a[i], b[j], e[k])``.
    """

    a: np.ndarray
    b: np.ndarray
    e: np.ndarray
    pmf: np.ndarray

    def key_and_delta(self, config: SliceConfig, decode: Callable[[np.ndarray, np.ndarray], np.ndarray],
                      reference: int = 1) -> Tuple[np.ndarray, np.ndarray]:
        """Cell of the reference value and error pattern on the (a, b) grid."""
        A, B = np.meshgrid(self.a, self.b, indexing="ij")
        ref, dec = (B, A) if reference == 1 else (A, B)
        cells = config.cells(ref.ravel()).reshape(ref.shape)
        guess = decode(dec.ravel(), cells.ravel()).reshape(ref.shape + (-1,))
        corrected = range(config.disclose_count, config.m)
        labels = config.labels[cells]
        code = np.zeros(ref.shape, dtype=np.int64)
        for t, j in enumerate(corrected):
            code |= (guess[..., t] != ((labels >> j) & 1)).astype(np.int64) << t
        return cells, code


def _mc_average(values: np.ndarray) -> Tuple[float, float]:
    n = values.size
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def mc_error_position_info(params, config: SliceConfig, samples: int = DEFAULT_SAMPLES,
                           rng: Optional[np.random.Generator] = None, *,
                           mode: NoiseAssumption | str = NoiseAssumption.REALISTIC,
                           decoder: Optional[GaussianPair] = None, direction: str = "reverse",
                           order: int = DEFAULT_ORDER, eta: Optional[float] = None,
                           decode: Optional[Callable] = None, check_convergence: bool = True,
                           batch: int = 2000) -> ErrorPositionEstimate:
    """Monte Carlo estimate of ``I(K; Delta | E)`` per key element.

    Parameters
    ----------
    params : ChannelParams or DiscreteJoint
        Channel seen by Eve (the continuous cloner model) or a finite toy law.
    config : SliceConfig
        Quantizer; ``K`` is the reference's cell (all slices) and ``Delta``
        the error pattern on the slices above ``config.disclose_count``.
    decoder : GaussianPair, optional
        Public model the decoder uses for its guesses; defaults to the one
        implied by ``params``.
    decode : callable, optional
        Decision rule ``decode(dec_values, ref_cells) -> (n, slices)`` for
        the discrete model.

    Returns
    -------
    ErrorPositionEstimate
        Estimate, its standard error, the model entropy ``H(Delta)`` and
        the sample count.  Iterating yields ``(estimate, stderr)``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if samples < 2:
        raise ValueError("need at least two samples")
    n_codes = 1 << (config.m - config.disclose_count)
    reference = _reference_index(direction)

    if isinstance(params, DiscreteJoint):
        if decode is None:
            raise ValueError("a discrete model needs an explicit decision rule")
        cells, code = params.key_and_delta(config, decode, reference)
        pe = params.pmf.sum(axis=(0, 1))
        draws = rng.choice(pe.size, size=samples, p=pe / pe.sum())
        joint_all = np.zeros((pe.size, config.n_cells, n_codes))
        flat = cells * n_codes + code
        for k in range(pe.size):
            joint_all[k] = np.bincount(flat.ravel(), weights=params.pmf[:, :, k].ravel(),
                                       minlength=config.n_cells * n_codes).reshape(config.n_cells, n_codes)
        mi = _mi_from_joint(joint_all)
        est, se = _mc_average(mi[draws])
        marginal = joint_all.sum(axis=(0, 1))
        return ErrorPositionEstimate(est, se, _entropy(marginal), samples)

    post = cloner_posterior(params, mode, eta)
    if decoder is None:
        reverse = direction == "reverse"
        chi = params.chi_tot
        decoder = GaussianPair.from_channel(params.g_line, params.v_a, chi, reverse)
    table = error_position_table(decoder, config)
    means = post.sample_means(samples, rng)
    mi = np.empty(samples)
    marginal = np.zeros(n_codes)
    for start in range(0, samples, batch):
        part = means[start:start + batch]
        joint = _joint_tables(part, post.covariance, config, table, reference, order, n_codes)
        mi[start:start + batch] = _mi_from_joint(joint)
        marginal += joint.sum(axis=(0, 1))
    if check_convergence:
        probe = means[: min(200, samples)]
        coarse = _mi_from_joint(_joint_tables(probe, post.covariance, config, table, reference, order, n_codes))
        fine = _mi_from_joint(_joint_tables(probe, post.covariance, config, table, reference, 2 * order, n_codes))
        gap = float(np.abs(coarse - fine).max())
        if gap > 1e-3:
            raise NumericFailure(f"inner quadrature not converged: order {order} vs {2 * order} differ by {gap:.2e} bit")
    est, se = _mc_average(mi)
    return ErrorPositionEstimate(est, se, _entropy(marginal), samples)


def _entropy(weights: np.ndarray) -> float:
    p = np.asarray(weights, dtype=np.float64)
    p = p[p > 0] / p.sum()
    return float(-(p * np.log2(p)).sum())


# --------------------------------------------------------------------------
# ledger


@dataclass(frozen=True)
class LeakageLedger:
    """Bits Eve may know about one block's reconciled string."""

    quantum_bound_bits: float = 0.0
    error_position_bits: float = 0.0
    pad_consumed_bits: int = 0
    mc_stderr: float = 0.0
    n_elements: int = 0

    def __post_init__(self):
        for name in ("quantum_bound_bits", "error_position_bits", "pad_consumed_bits", "mc_stderr"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def as_dict(self) -> Dict[str, float]:
        d = asdict(self)
        d["total_bits"] = total_leakage(self)
        return d


def total_leakage(ledger: LeakageLedger) -> float:
    return ledger.quantum_bound_bits + ledger.error_position_bits + ledger.pad_consumed_bits


def net_key_rate(i_rec: float, leakage: float, pulse_rate: float, kept_fraction: float = 1.0,
                 duty_cycle: float = 1.0) -> float:
    """Secret bits per second; a negative per-element balance yields no key."""
    if min(i_rec, leakage, pulse_rate, kept_fraction, duty_cycle) < 0:
        raise ValueError("rates and fractions must be >= 0")
    return max(0.0, i_rec - leakage) * pulse_rate * kept_fraction * duty_cycle
