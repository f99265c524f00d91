"""Conditional-variance bounds and Shannon rates for the Gaussian channel.

Everything is in shot-noise units and bits per key element.  ``chi`` always
denotes noise referred to the line input.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

from .channel import ChannelParams

__all__ = [
    "NoiseAssumption",
    "RateReport",
    "REFERENCE_ROWS",
    "ReferenceRow",
    "alice_conditional_variance",
    "compute_rates",
    "delta_i_dr",
    "delta_i_rr",
    "eve_variance_bound",
    "i_ae",
    "i_ba",
    "i_be",
    "ideal_rate",
    "paranoid_globals",
    "security_thresholds",
]

PULSE_RATE_HZ = 800e3


class NoiseAssumption(str, Enum):
    """Whether Bob's detector noises are outside Eve's reach (realistic) or hers (paranoid)."""

    REALISTIC = "realistic"
    PARANOID = "paranoid"


def _check(v: float, chi: float) -> None:
    if v < 1:
        raise ValueError(f"field variance must be >= 1, got {v}")
    if chi < 0:
        raise ValueError(f"noise must be >= 0, got {chi}")


def alice_conditional_variance(g: float, chi: float, s: float, v: float, n0: float = 1.0) -> float:
    """Bob's variance given Alice's data when her field has ``s`` noise around her estimate.

    ``s = 1`` is a coherent state; ``s = 1/v`` is the entanglement-limited minimum.
    """
    _check(v, chi)
    if g <= 0:
        raise ValueError("transmission must be positive")
    # relative slack so that s = 1/v computed in floating point is accepted
    if s < (1.0 / v) * (1 - 1e-12):
        raise ValueError(f"s = {s} below 1/v = {1 / v} is unphysical")
    return g * (s + chi) * n0


def eve_variance_bound(g: float, chi: float, v: float, n0: float = 1.0) -> float:
    """Lower bound on Eve's conditional variance of Bob's quadrature."""
    _check(v, chi)
    if g <= 0:
        raise ValueError("transmission must be positive")
    return n0 / (g * (chi + 1.0 / v))


def i_ba(v: float, chi_tot: float) -> float:
    _check(v, chi_tot)
    return 0.5 * math.log2((v + chi_tot) / (1.0 + chi_tot))


def i_ae(v: float, chi_e: float) -> float:
    """Eve's information on Alice's data for the cloner matching noise ``chi_e``."""
    _check(v, chi_e)
    return 0.5 * math.log2((1.0 + chi_e * v) / (1.0 + chi_e))


def delta_i_rr(v: float, g: float, chi: float) -> float:
    _check(v, chi)
    if not 0 < g <= 1:
        raise ValueError("transmission must lie in (0, 1]")
    return -0.5 * math.log2(g * g * (1.0 + chi) * (1.0 / v + chi))


def delta_i_dr(v: float, chi: float) -> float:
    _check(v, chi)
    return 0.5 * math.log2((v + chi) / (1.0 + chi * v))


def paranoid_globals(params: ChannelParams, eta: Optional[float] = None) -> Tuple[float, float]:
    """Global (G, chi) when the detector belongs to Eve.

    The detector is a beam splitter of transmission ``eta`` followed by
    electronics noise.  Up to the constant rescaling of Bob's output by
    ``sqrt(eta)``, which changes no information quantity, the total
    input-referred noise stays ``chi_tot`` while the global transmission
    drops to ``g_line * eta``.  The default
    ``eta = 1 / (1 + n_hom)`` is the efficiency whose vacuum contribution,
    referred to the detector input, equals ``n_hom``.
    """
    return params.g_line * _detector_efficiency(params.n_hom, eta), params.chi_tot


def _detector_efficiency(n_hom: float, eta: Optional[float]) -> float:
    if eta is None:
        return 1.0 / (1.0 + n_hom)
    if not 0 < eta <= 1:
        raise ValueError(f"detector efficiency must lie in (0, 1], got {eta}")
    return eta


def i_be(v: float, g_line: float, chi_line: float, n_el: float, n_hom: float,
         mode: NoiseAssumption | str = NoiseAssumption.REALISTIC, eta: Optional[float] = None) -> float:
    """Upper bound on Eve's information on Bob's data under the entangling cloner."""
    mode = NoiseAssumption(mode)
    _check(v, chi_line)
    if not 0 < g_line <= 1:
        raise ValueError("transmission must lie in (0, 1]")
    if mode is NoiseAssumption.REALISTIC:
        det = n_el + n_hom
        v_b = g_line * (v + chi_line) + det
        v_be = eve_variance_bound(g_line, chi_line, v) + det
    else:
        g = g_line * _detector_efficiency(n_hom, eta)
        chi = chi_line + (n_el + n_hom) / g_line
        v_b = g * (v + chi)
        v_be = eve_variance_bound(g, chi, v)
    return max(0.0, 0.5 * math.log2(v_b / v_be))


def security_thresholds(v: float, eps: float) -> Tuple[float, bool]:
    """(minimum transmission for DR, whether RR survives arbitrarily high loss)."""
    if v <= 1:
        raise ValueError("field variance must exceed 1")
    if eps < 0:
        raise ValueError("excess noise must be >= 0")
    # a value above 1 means no physical line makes DR secure
    g_min_dr = 1.0 / (2.0 - eps) if eps < 2.0 else math.inf
    return g_min_dr, eps < (v - 1.0) / (2.0 * v)


@dataclass(frozen=True)
class RateReport:
    i_ba: float
    i_be: float
    i_ae: float
    delta_rr: float
    delta_dr: float
    v_b: float
    v_b_given_a_coh: float
    v_b_given_a_min: float
    v_b_given_e_min: float
    mode: NoiseAssumption

    @property
    def i_be_fraction(self) -> float:
        return self.i_be / self.i_ba if self.i_ba > 0 else math.nan

    def as_dict(self) -> Dict[str, float]:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


def compute_rates(params: ChannelParams, mode: NoiseAssumption | str = NoiseAssumption.REALISTIC,
                  eta: Optional[float] = None) -> RateReport:
    """All rates and conditional variances for one operating point."""
    mode = NoiseAssumption(mode)
    v, g, chi_line, det = params.v, params.g_line, params.chi_line, params.detector_noise
    chi_tot = params.chi_tot
    ba = i_ba(v, chi_tot)
    be = i_be(v, g, chi_line, params.n_el, params.n_hom, mode, eta)
    if mode is NoiseAssumption.REALISTIC:
        ae = i_ae(v, chi_line)
        v_b = g * (v + chi_line) + det
        v_coh = g * (1.0 + chi_line) + det
        v_min = g * (1.0 / v + chi_line) + det
        v_e = eve_variance_bound(g, chi_line, v) + det
    else:
        gp, _ = paranoid_globals(params, eta)
        ae = i_ae(v, chi_tot)
        v_b = gp * (v + chi_tot)
        v_coh = gp * (1.0 + chi_tot)
        v_min = gp * (1.0 / v + chi_tot)
        v_e = eve_variance_bound(gp, chi_tot, v)
    return RateReport(i_ba=ba, i_be=be, i_ae=ae, delta_rr=ba - be, delta_dr=ba - ae,
                      v_b=v_b, v_b_given_a_coh=v_coh, v_b_given_a_min=v_min,
                      v_b_given_e_min=v_e, mode=mode)


def ideal_rate(delta_bits: float, pulse_rate: float = PULSE_RATE_HZ, kept_fraction: float = 1.0) -> float:
    """Secret bits per second for a per-element advantage; negative advantage gives no key."""
    return max(0.0, delta_bits) * pulse_rate * kept_fraction


@dataclass(frozen=True)
class ReferenceRow:
    v: float
    g_line: float
    losses_db: float
    i_ba: float
    i_be_pct: float
    i_rec_pct: float
    ideal_rr_kbps: float
    practical_rr_kbps: Optional[float]
    ideal_dr_kbps: float
    practical_dr_kbps: Optional[float]


# Published operating points of the 780 nm experiment (None: no key produced).
REFERENCE_ROWS = (
    ReferenceRow(41.7, 1.00, 0.0, 2.39, 0, 88, 1920, 1690, 1910, 1660),
    ReferenceRow(38.6, 0.79, 1.0, 2.17, 58, 85, 730, 470, 540, 270),
    ReferenceRow(32.3, 0.68, 1.7, 1.93, 67, 79, 510, 185, 190, None),
    ReferenceRow(27.0, 0.49, 3.1, 1.66, 72, 78, 370, 75, 0, None),
    ReferenceRow(43.7, 0.26, 5.9, 1.48, 93, 71, 85, None, 0, None),
)
