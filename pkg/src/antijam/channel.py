"""Downlink channel model for a soldier/IoBT-device link under jamming.

The soldier decodes a block when its SINR clears ``sinr_threshold``. Fading
enters as a multiplicative power gain on both the soldier and jammer paths, so
the success probability reduces to two dimensionless constants ``V`` (noise
margin) and ``W`` (jammer-to-signal ratio at threshold). Retransmissions are
requested until the per-step success target is met, capped at
``max_retransmissions``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from scipy import integrate

from .exceptions import InvalidParameterError, NumericFailure

__all__ = [
    "FadingModel",
    "LinkBudget",
    "StageChannelOutcome",
    "dbm_to_mw",
    "mw_to_dbm",
    "derived_constants",
    "success_probability",
    "success_probability_vw",
    "retransmission_count",
    "unit_delay",
    "stage_delay",
    "stage_outcome",
]

QUAD_EPSABS = 1e-10
QUAD_LIMIT = 200


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class FadingModel:
    """Distribution of the fading power gain ``g``.

    Only the exponential law is supported: a Rayleigh amplitude with unit
    variance gives an exponentially distributed power gain of unit mean.
    """

    kind: str = "exponential"
    mean: float = 1.0

    def __post_init__(self):
        if self.kind != "exponential":
            raise InvalidParameterError(f"unsupported fading kind {self.kind!r}")
        if not self.mean > 0:
            raise InvalidParameterError("fading mean must be positive")

    def pdf(self, g: float) -> float:
        if g < 0:
            return 0.0
        return math.exp(-g / self.mean) / self.mean


@dataclass(frozen=True)
class LinkBudget:
    """Radio parameters of one soldier/device link, linear units throughout."""

    soldier_tx_power_mw: float = 100.0
    jammer_tx_power_mw: float = 100.0
    soldier_distance_m: float = 100.0
    jammer_distance_m: float = 100.0
    pathloss_exponent: float = 4.0
    noise_power_mw: float = dbm_to_mw(-95.0)
    sinr_threshold: float = 100.0
    success_target: float = 0.9
    max_retransmissions: int = 20
    block_size_bits: float = 6e6
    bandwidth_hz: float = 20e6

    def __post_init__(self):
        positive = (
            "soldier_tx_power_mw",
            "jammer_tx_power_mw",
            "soldier_distance_m",
            "jammer_distance_m",
            "noise_power_mw",
            "block_size_bits",
            "bandwidth_hz",
        )
        for name in positive:
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be positive and finite, got {value!r}")
        if self.pathloss_exponent < 2:
            raise InvalidParameterError("pathloss_exponent must be >= 2")
        # zero is tolerated here so the reduced constants have a well-defined
        # limit; unit_delay rejects it.
        if self.sinr_threshold < 0:
            raise InvalidParameterError("sinr_threshold must be nonnegative")
        if not 0 < self.success_target < 1:
            raise InvalidParameterError("success_target must lie in (0, 1)")
        if int(self.max_retransmissions) != self.max_retransmissions or self.max_retransmissions < 1:
            raise InvalidParameterError("max_retransmissions must be a positive integer")


@dataclass(frozen=True)
class StageChannelOutcome:
    success_prob: float
    retransmissions: int
    unit_delay_s: float
    stage_delay_s: float


def derived_constants(link: LinkBudget) -> tuple[float, float]:
    """Return ``(V, W)`` for ``link``.

    ``V = gamma * sigma^2 / (d_s^-lambda P_S)`` and
    ``W = d_a^-lambda P_A gamma / (d_s^-lambda P_S)``.
    """
    signal = link.soldier_distance_m ** (-link.pathloss_exponent) * link.soldier_tx_power_mw
    jam = link.jammer_distance_m ** (-link.pathloss_exponent) * link.jammer_tx_power_mw
    v = link.sinr_threshold * link.noise_power_mw / signal
    w = jam * link.sinr_threshold / signal
    return v, w


def _closed_form(v, w, jammed, fading):
    # P(g_s > V) = exp(-V/mu); jamming adds the factor E[exp(-W g_a / mu)] = 1/(1+W)
    unjammed = math.exp(-v / fading.mean)
    if not jammed:
        return unjammed
    return unjammed / (1.0 + w)


def _quad(func, lo, hi, epsabs):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(func, lo, hi, epsabs=epsabs, epsrel=epsabs, limit=QUAD_LIMIT)
        except integrate.IntegrationWarning as exc:
            # rerun quietly to recover the last estimate for the caller
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                value, abserr = integrate.quad(func, lo, hi, epsabs=epsabs, epsrel=epsabs, limit=QUAD_LIMIT)
            raise NumericFailure(f"quadrature did not converge: {exc}", value, abserr) from None
    return value


def _quadrature(v, w, jammed, fading):
    pdf = fading.pdf
    if not jammed or w == 0.0:
        return _quad(pdf, v, math.inf, QUAD_EPSABS)

    def inner(g_s):
        upper = (g_s - v) / w
        if upper <= 0.0:
            return 0.0
        return _quad(pdf, 0.0, upper, QUAD_EPSABS * 1e-2)

    # the inner integral vanishes for g_s < V, so the outer range starts there
    return _quad(lambda g_s: pdf(g_s) * inner(g_s), v, math.inf, QUAD_EPSABS)


def success_probability_vw(
    v: float, w: float, jammed: bool, fading: FadingModel | None = None, method: str = "closed_form"
) -> float:
    """Success probability from the reduced constants ``V`` and ``W``.

    ``method="quadrature"`` integrates the fading densities directly and is
    the reference the closed form is checked against.
    """
    fading = fading or FadingModel()
    if v < 0 or w < 0:
        raise InvalidParameterError("V and W must be nonnegative")
    if method == "closed_form":
        q = _closed_form(v, w, jammed, fading)
    elif method == "quadrature":
        q = _quadrature(v, w, jammed, fading)
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    return min(1.0, max(0.0, q))


def success_probability(
    link: LinkBudget, fading: FadingModel | None = None, jammed: bool = False, method: str = "closed_form"
) -> float:
    v, w = derived_constants(link)
    return success_probability_vw(v, w, jammed, fading, method)


def retransmission_count(q_x: float, q_hat: float, k_hat: int) -> int:
    """Number of transmissions needed so that ``(1 - q_x)^k`` drops to ``1 - q_hat``.

    ``q_x = 1`` needs a single attempt; ``q_x = 0`` saturates at ``k_hat``.
    """
    if not 0 < q_hat < 1:
        raise InvalidParameterError("q_hat must lie in (0, 1)")
    if k_hat < 1:
        raise InvalidParameterError("k_hat must be >= 1")
    if not 0.0 <= q_x <= 1.0:
        raise InvalidParameterError("q_x must lie in [0, 1]")
    if q_x >= 1.0:
        return 1
    if q_x <= 0.0:
        return int(k_hat)
    ratio = math.log1p(-q_hat) / math.log1p(-q_x)
    # slack absorbs rounding when the ratio is an exact integer (q_x == q_hat)
    k = math.ceil(ratio - 1e-12)
    return int(max(1, min(k, k_hat)))


def unit_delay(link: LinkBudget) -> float:
    """Seconds to deliver one block, with the rate taken at the SINR threshold."""
    if link.sinr_threshold <= 0:
        raise InvalidParameterError("sinr_threshold must be positive for a nonzero decoding rate")
    return link.block_size_bits / (link.bandwidth_hz * math.log2(1.0 + link.sinr_threshold))


def stage_outcome(
    link: LinkBudget,
    fading: FadingModel | None = None,
    soldier_connects: bool = True,
    attacker_jams: bool = False,
    method: str = "closed_form",
) -> StageChannelOutcome:
    q = success_probability(link, fading, attacker_jams, method)
    k = retransmission_count(q, link.success_target, link.max_retransmissions)
    t = unit_delay(link)
    return StageChannelOutcome(q, k, t, k * t if soldier_connects else 0.0)


def stage_delay(
    link: LinkBudget,
    fading: FadingModel | None = None,
    soldier_connects: bool = True,
    attacker_jams: bool = False,
    method: str = "closed_form",
) -> float:
    if not soldier_connects:
        return 0.0
    return stage_outcome(link, fading, True, attacker_jams, method).stage_delay_s
