"""Gaussian modulation, lossy/noisy line, homodyne detection and cloner attack.

All variances are in shot-noise units.  ``n0`` only rescales the sampled
amplitudes so that the vacuum variance of the stored values equals ``n0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterator, Optional, Tuple

import numpy as np

__all__ = [
    "Attack",
    "Basis",
    "Burst",
    "ChannelParams",
    "PulseRecord",
    "draw_modulation",
    "quantize",
    "simulate_burst",
    "transmit_and_measure",
]

DEFAULT_BURST_LENGTH = 60_000
# Bob's detector, in shot-noise units.
N_EL = 0.33
N_HOM = 0.27


class Basis(IntEnum):
    X = 0
    P = 1


class Attack(str, Enum):
    NONE = "none"
    ENTANGLING_CLONER = "entangling_cloner"


@dataclass(frozen=True)
class ChannelParams:
    """Line and detector description in shot-noise units.

    ``v`` is Alice's total field variance ``v_a + 1``; ``chi_tot`` refers the
    detector noise back to the line input.
    """

    g_line: float = 1.0
    eps_line: float = 0.0
    n_el: float = N_EL
    n_hom: float = N_HOM
    v_a: float = 40.7
    n0: float = 1.0

    def __post_init__(self):
        if not 0 < self.g_line <= 1:
            raise ValueError(f"g_line must lie in (0, 1], got {self.g_line}")
        if self.eps_line < 0:
            raise ValueError(f"eps_line must be >= 0, got {self.eps_line}")
        if self.n_el < 0 or self.n_hom < 0:
            raise ValueError("detector noises must be >= 0")
        if self.v_a <= 0:
            raise ValueError(f"v_a must be > 0, got {self.v_a}")
        if self.n0 <= 0:
            raise ValueError(f"n0 must be > 0, got {self.n0}")

    @property
    def v(self) -> float:
        return self.v_a + 1.0

    @property
    def chi_vac(self) -> float:
        return (1.0 - self.g_line) / self.g_line

    @property
    def chi_line(self) -> float:
        return self.chi_vac + self.eps_line

    @property
    def detector_noise(self) -> float:
        return self.n_el + self.n_hom

    @property
    def chi_tot(self) -> float:
        return self.chi_line + self.detector_noise / self.g_line

    @property
    def losses_db(self) -> float:
        return -10.0 * math.log10(self.g_line)

    def with_(self, **changes) -> "ChannelParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class PulseRecord:
    x_a: float
    p_a: float
    basis: Basis
    y_b: float
    y_e: Optional[float] = None


@dataclass
class Burst:
    """Columnar per-pulse record.

    ``y_b`` is NaN until the burst has gone through :func:`transmit_and_measure`;
    ``y_e`` is only present for attack simulations.
    """

    x_a: np.ndarray
    p_a: np.ndarray
    basis: np.ndarray
    y_b: np.ndarray
    seed: Optional[int] = None
    y_e: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.x_a)
        if n == 0:
            raise ValueError("a burst needs at least one pulse")
        for name in ("p_a", "basis", "y_b"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has the wrong length")
        if self.y_e is not None and len(self.y_e) != n:
            raise ValueError("column y_e has the wrong length")

    @property
    def length(self) -> int:
        return len(self.x_a)

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> PulseRecord:
        y_e = None if self.y_e is None else float(self.y_e[i])
        return PulseRecord(float(self.x_a[i]), float(self.p_a[i]), Basis(int(self.basis[i])),
                           float(self.y_b[i]), y_e)

    def __iter__(self) -> Iterator[PulseRecord]:
        return (self[i] for i in range(self.length))

    @property
    def measured(self) -> bool:
        return not np.isnan(self.y_b).any()

    def alice_values(self) -> np.ndarray:
        """Alice's amplitude in the quadrature Bob measured (sifted key element)."""
        return np.where(self.basis == Basis.X, self.x_a, self.p_a)

    def sifted(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.measured:
            raise RuntimeError("burst has not been measured yet")
        return self.alice_values(), self.y_b.copy()

    def equals(self, other: "Burst") -> bool:
        cols = ("x_a", "p_a", "basis", "y_b")
        same = all(np.array_equal(getattr(self, c), getattr(other, c), equal_nan=c != "basis")
                   for c in cols)
        if (self.y_e is None) != (other.y_e is None):
            return False
        return same and (self.y_e is None or np.array_equal(self.y_e, other.y_e))

    # serialization -------------------------------------------------------

    def to_csv(self, path) -> None:
        header = ["index", "x_a", "p_a", "basis", "y_b"] + (["y_e"] if self.y_e is not None else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.length):
                row = [i, f"{self.x_a[i]:.9g}", f"{self.p_a[i]:.9g}", Basis(int(self.basis[i])).name,
                       f"{self.y_b[i]:.9g}"]
                if self.y_e is not None:
                    row.append(f"{self.y_e[i]:.9g}")
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "Burst":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no pulses")
        col = lambda k: np.array([float(r[k]) for r in rows])
        basis = np.array([Basis[r["basis"]] for r in rows], dtype=np.uint8)
        y_e = col("y_e") if "y_e" in rows[0] else None
        return cls(col("x_a"), col("p_a"), basis, col("y_b"), y_e=y_e)

    def to_npz(self, path) -> None:
        arrays = dict(x_a=self.x_a, p_a=self.p_a, basis=self.basis, y_b=self.y_b,
                      seed=np.array(-1 if self.seed is None else self.seed))
        if self.y_e is not None:
            arrays["y_e"] = self.y_e
        np.savez(path, **arrays)

    @classmethod
    def from_npz(cls, path) -> "Burst":
        with np.load(Path(path)) as z:
            seed = int(z["seed"])
            y_e = z["y_e"] if "y_e" in z.files else None
            return cls(z["x_a"], z["p_a"], z["basis"], z["y_b"],
                       seed=None if seed < 0 else seed, y_e=y_e)


def draw_modulation(v_a: float, n: int, rng: np.random.Generator, n0: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Alice's two Gaussian amplitudes per pulse, each with variance ``v_a * n0``."""
    if n <= 0:
        raise ValueError(f"pulse count must be positive, got {n}")
    if v_a <= 0:
        raise ValueError(f"modulation variance must be positive, got {v_a}")
    scale = math.sqrt(v_a * n0)
    x_a = rng.normal(0.0, scale, n)
    p_a = rng.normal(0.0, scale, n)
    return x_a, p_a


def _cloner_line(q_in: np.ndarray, params: ChannelParams, v_in: float,
                 rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Line output and Eve's linear estimate of it under the entangling cloner.

    Eve feeds one half of an EPR pair (variance N) into a beam splitter of
    transmission G and keeps the other half plus the reflected beam.
    """
    g, chi = params.g_line, params.chi_line
    n = len(q_in)
    target = 1.0 / (g * (chi + 1.0 / v_in))
    if g < 1.0:
        N = 1.0 + g * params.eps_line / (1.0 - g)
        c = math.sqrt(max(N * N - 1.0, 0.0))
        e0 = rng.normal(0.0, math.sqrt(N), n)
        # e1 | e0 ~ N(c/N e0, 1/N); Eve knows the basis, so one sign convention suffices
        e1 = (c / N) * e0 + rng.normal(0.0, math.sqrt(1.0 / N), n)
        line = math.sqrt(g) * q_in + math.sqrt(1.0 - g) * e0
        e2 = math.sqrt(1.0 - g) * q_in - math.sqrt(g) * e0
        cov_le = np.array([math.sqrt(1.0 - g) * c, math.sqrt(g * (1.0 - g)) * (v_in - N)])
        s_ee = np.array([[N, -math.sqrt(g) * c], [-math.sqrt(g) * c, (1.0 - g) * v_in + g * N]])
        coef = np.linalg.solve(s_ee, cov_le)
        y_e = coef[0] * e1 + coef[1] * e2
    else:
        # unit transmission: additive noise only; any Gaussian copy with the
        # right conditional variance realises the bound
        line = q_in + rng.normal(0.0, math.sqrt(chi), n) if chi > 0 else q_in.copy()
        v_line = v_in + chi
        if target >= v_line:
            y_e = np.zeros(n)
        else:
            extra = target * v_line / (v_line - target)
            copy = line + rng.normal(0.0, math.sqrt(extra), n)
            y_e = copy * (v_line / (v_line + extra))
    return line, y_e


def transmit_and_measure(burst: Burst, params: ChannelParams, rng: np.random.Generator,
                         attack: Attack | str = Attack.NONE, prep_noise: float = 1.0) -> Burst:
    """Send every pulse through the line and measure one random quadrature.

    ``prep_noise`` is the variance of Alice's field around her drawn
    amplitude: 1 for coherent states, down to ``1/V`` for the entanglement
    based equivalent.  Only the measured quadrature's channel noise is drawn.
    """
    attack = Attack(attack)
    if burst.x_a is None or np.isnan(burst.x_a).any() or np.isnan(burst.p_a).any():
        raise RuntimeError("burst carries no modulation")
    if prep_noise <= 0:
        raise ValueError("prep_noise must be positive")
    n = burst.length
    s0 = math.sqrt(params.n0)
    basis = rng.integers(0, 2, n).astype(np.uint8)
    q = np.where(basis == Basis.X, burst.x_a, burst.p_a) / s0
    q_in = q + rng.normal(0.0, math.sqrt(prep_noise), n)
    v_in = float(params.v_a + prep_noise)

    y_e = None
    if attack is Attack.NONE:
        b = rng.normal(0.0, math.sqrt(params.chi_line), n) if params.chi_line > 0 else 0.0
        line = math.sqrt(params.g_line) * (q_in + b)
    else:
        line, y_e = _cloner_line(q_in, params, v_in, rng)
    det = params.detector_noise
    y_b = line + (rng.normal(0.0, math.sqrt(det), n) if det > 0 else 0.0)
    return Burst(burst.x_a, burst.p_a, basis, y_b * s0, seed=burst.seed,
                 y_e=None if y_e is None else y_e * s0, meta=dict(burst.meta, attack=attack.value))


def quantize(values, bits: Optional[int], full_scale: float) -> np.ndarray:
    """Uniform mid-rise quantizer over ``[-full_scale, full_scale]``.

    ``bits=None`` disables the stage.  Out-of-range samples clip to the
    outermost levels.
    """
    values = np.asarray(values, dtype=np.float64)
    if bits is None:
        return values.copy()
    if bits < 1:
        raise ValueError("quantizer needs at least one bit")
    if full_scale <= 0:
        raise ValueError("quantizer range must be positive")
    levels = 1 << bits
    step = 2.0 * full_scale / levels
    idx = np.clip(np.floor(values / step), -(levels // 2), levels // 2 - 1)
    return (idx + 0.5) * step


def simulate_burst(params: ChannelParams, length: int = DEFAULT_BURST_LENGTH, seed: int = 0,
                   attack: Attack | str = Attack.NONE, *, prep_noise: float = 1.0,
                   dac_bits: Optional[int] = None, adc_bits: Optional[int] = None,
                   dac_range: Optional[float] = None, adc_range: Optional[float] = None) -> Burst:
    """Modulate, transmit and measure one burst from a single seed.

    Digitization is off unless ``dac_bits``/``adc_bits`` are given; the
    default full scale is six standard deviations of the digitized signal.
    """
    rng = np.random.default_rng(seed)
    v_mod = params.v_a + 1.0 - prep_noise if prep_noise != 1.0 else params.v_a
    x_a, p_a = draw_modulation(v_mod, length, rng, params.n0)
    if dac_bits is not None:
        fs = dac_range or 6.0 * math.sqrt(v_mod * params.n0)
        x_a, p_a = quantize(x_a, dac_bits, fs), quantize(p_a, dac_bits, fs)
    empty = np.full(length, np.nan)
    burst = Burst(x_a, p_a, np.zeros(length, dtype=np.uint8), empty, seed=seed)
    run_params = params.with_(v_a=v_mod) if v_mod != params.v_a else params
    out = transmit_and_measure(burst, run_params, rng, attack, prep_noise=prep_noise)
    if adc_bits is not None:
        v_b = params.g_line * (params.v + params.chi_line) + params.detector_noise
        fs = adc_range or 6.0 * math.sqrt(v_b * params.n0)
        out.y_b = quantize(out.y_b, adc_bits, fs)
    return out
