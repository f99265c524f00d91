"""Channel estimation from the publicly compared sample of key elements."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Tuple

import numpy as np

from .channel import Basis, Burst, ChannelParams

__all__ = [
    "ChannelEstimate",
    "EstimationError",
    "InsufficientData",
    "decompose_noise",
    "disclose",
    "estimate_by_basis",
    "estimate_channel",
]

log = logging.getLogger(__name__)

MIN_DISCLOSED = 1000


class EstimationError(RuntimeError):
    """The disclosed sample does not describe a usable channel."""


class InsufficientData(EstimationError):
    pass


def decompose_noise(chi_line: float, g: float) -> Tuple[float, float]:
    """Split input-referred line noise into its loss part and the excess."""
    if not 0 < g <= 1:
        raise ValueError(f"transmission must lie in (0, 1], got {g}")
    chi_vac = (1.0 - g) / g
    return chi_vac, chi_line - chi_vac


@dataclass(frozen=True)
class ChannelEstimate:
    g_hat: float
    chi_line_hat: float
    chi_vac_hat: float
    eps_hat: float
    chi_tot_hat: float
    v_b_hat: float
    residual_var: float
    g_stderr: float
    chi_line_stderr: float
    chi_vac_stderr: float
    eps_stderr: float
    chi_tot_stderr: float
    n_disclosed: int
    v_a: float
    n_el: float
    n_hom: float

    @property
    def eps_for_rates(self) -> float:
        """Excess noise clamped at zero; the raw value stays in ``eps_hat``."""
        if self.eps_hat < -self.eps_stderr:
            log.warning("excess noise %.4f is negative beyond one standard error", self.eps_hat)
        return max(self.eps_hat, 0.0)

    def operating_point(self, pessimistic: bool = True, k_sigma: float = 3.0) -> ChannelParams:
        """Channel parameters to feed the security bounds.

        With ``pessimistic`` the transmission is lowered and the line noise
        raised by ``k_sigma`` standard errors.
        """
        g = self.g_hat
        chi = self.chi_vac_hat + self.eps_for_rates
        if pessimistic:
            g = g - k_sigma * self.g_stderr
            chi = chi + k_sigma * self.chi_line_stderr
        g = min(g, 1.0)
        if g <= 0:
            raise EstimationError("transmission is not resolved from zero at the requested confidence")
        eps = max(chi - (1.0 - g) / g, 0.0)
        return ChannelParams(g_line=g, eps_line=eps, n_el=self.n_el, n_hom=self.n_hom, v_a=self.v_a)

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)

    def to_text(self) -> str:
        lines = []
        for key, value in self.as_dict().items():
            lines.append(f"{key} = {value}" if isinstance(value, int) else f"{key} = {value:.6g}")
        return "\n".join(lines)


def estimate_channel(alice, bob, n_el: float, n_hom: float, v_a: float, *,
                     min_samples: int = MIN_DISCLOSED, n0: float = 1.0) -> ChannelEstimate:
    """Least-squares estimate of transmission and input-referred noises.

    Bob's value is regressed on Alice's through the origin (both are zero
    mean by construction).  The slope squared estimates the transmission;
    the residual variance, after removing the calibrated detector noise,
    gives the line noise.  Standard errors use the large-sample variances
    of the slope and of the residual variance, propagated to first order.
    """
    if v_a <= 0:
        raise ValueError("modulation variance must be positive")
    x = np.asarray(alice, dtype=np.float64) / math.sqrt(n0)
    y = np.asarray(bob, dtype=np.float64) / math.sqrt(n0)
    if x.shape != y.shape:
        raise ValueError("alice and bob samples differ in length")
    n = x.size
    if n < max(min_samples, 3):
        raise InsufficientData(f"{n} disclosed pairs, at least {min_samples} required")

    sxx = float(x @ x)
    beta = float(x @ y) / sxx
    resid = y - beta * x
    s2 = float(resid @ resid) / (n - 1)
    if beta <= 0:
        raise EstimationError(f"non-positive regression slope {beta:.4g}")

    det = n_el + n_hom
    g = beta * beta
    se_beta = math.sqrt(s2 / sxx)
    se_g = 2.0 * beta * se_beta
    se_s2 = s2 * math.sqrt(2.0 / (n - 1))

    chi_tot = s2 / g - 1.0
    chi_line = (s2 - det) / g - 1.0
    chi_vac = (1.0 - g) / g
    eps = chi_line - chi_vac

    def se(d_ds2: float, d_dg: float) -> float:
        return math.hypot(d_ds2 * se_s2, d_dg * se_g)

    return ChannelEstimate(
        g_hat=g,
        chi_line_hat=chi_line,
        chi_vac_hat=chi_vac,
        eps_hat=eps,
        chi_tot_hat=chi_tot,
        v_b_hat=float(np.var(y, ddof=1)),
        residual_var=s2,
        g_stderr=se_g,
        chi_line_stderr=se(1.0 / g, -(s2 - det) / g**2),
        chi_vac_stderr=se_g / g**2,
        eps_stderr=se(1.0 / g, -(s2 - det - 1.0) / g**2),
        chi_tot_stderr=se(1.0 / g, -s2 / g**2),
        n_disclosed=n,
        v_a=v_a,
        n_el=n_el,
        n_hom=n_hom,
    )


def disclose(n: int, fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Pick the publicly compared subset; returns (disclosed, kept) sorted index arrays."""
    if not 0 < fraction < 1:
        raise ValueError(f"disclosed fraction must lie in (0, 1), got {fraction}")
    count = int(round(fraction * n))
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=count, replace=False)] = True
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def estimate_by_basis(burst: Burst, params: ChannelParams, **kwargs) -> Dict[Basis, ChannelEstimate]:
    """Separate estimates for the pulses measured in x and in p."""
    alice, bob = burst.sifted()
    out = {}
    for basis in Basis:
        sel = burst.basis == basis
        out[basis] = estimate_channel(alice[sel], bob[sel], params.n_el, params.n_hom, params.v_a,
                                      n0=params.n0, **kwargs)
    return out
