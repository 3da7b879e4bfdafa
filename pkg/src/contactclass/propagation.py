"""Bluetooth RSSI propagation and per-decision error probabilities.

Received power follows ``P_RX = gamma * P_TX / d**nu``; on a dB scale
``RSSI = tx_power - 10 nu log10(d) + eta`` with ``eta = 10 log10(gamma)``.
An elementary decision compares the (summed) RSSI against the level expected
at the critical distance, so all error probabilities below are functions of
``d / d_c`` and the fading law only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ConvergenceError, DomainError
from .numerics import bessel_i, clamp_probability, gaussian_q, marcum_q_complement, marcum_q

PERSON_RADIUS = 1.0 / math.sqrt(math.pi)  # radius of a 1 m^2 disc


@dataclass(frozen=True)
class PropagationConfig:
    tx_power: float = 0.0  # dBm
    path_loss_exponent: float = 2.0
    critical_distance: float = 2.0  # m

    def __post_init__(self):
        if not self.path_loss_exponent >= 1:
            raise DomainError("path loss exponent must be >= 1")
        if not self.critical_distance > 0:
            raise DomainError("critical distance must be positive")


@dataclass(frozen=True)
class RiceFading:
    """Rice fading of the power gain.

    ``gamma_r`` is the line-of-sight power and ``sigma_r_sq`` the per-component
    scatter variance, in the same power unit (pW for the fitted values).
    """

    gamma_r: float = 247.0
    sigma_r_sq: float = 9.15

    def __post_init__(self):
        if not (self.gamma_r > 0 and self.sigma_r_sq > 0):
            raise DomainError("Rice parameters must be positive")

    @property
    def mean_power(self) -> float:
        return self.gamma_r + 2.0 * self.sigma_r_sq

    @property
    def mean_eta(self) -> float:
        # threshold sits at the mean power, expressed in dB
        return 10.0 * math.log10(self.mean_power)

    def sample_gain(self, rng: np.random.Generator, size) -> np.ndarray:
        sigma = math.sqrt(self.sigma_r_sq)
        re = math.sqrt(self.gamma_r) + sigma * rng.standard_normal(size)
        im = sigma * rng.standard_normal(size)
        return re * re + im * im


@dataclass(frozen=True)
class LognormalFading:
    """Gaussian fading on the dB scale, ``eta ~ N(eta_l, sigma_l^2)``."""

    sigma_l: float = 1.60
    eta_l: float = 0.0

    def __post_init__(self):
        if not self.sigma_l > 0:
            raise DomainError("sigma_l must be positive")

    @property
    def mean_eta(self) -> float:
        return self.eta_l

    def sample_gain(self, rng: np.random.Generator, size) -> np.ndarray:
        return 10.0 ** (self.sample_eta(rng, size) / 10.0)

    def sample_eta(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.eta_l + self.sigma_l * rng.standard_normal(size)


FadingModel = Union[RiceFading, LognormalFading]

# Fitted values: Rice at 2 m, lognormal at 2 m (missed detection) and 4 m
# (false alarm).
RICE_2M = RiceFading(247.0, 9.15)
LOGNORMAL_2M = LognormalFading(1.60)
LOGNORMAL_4M = LognormalFading(1.97)


@dataclass(frozen=True)
class CrowdLayout:
    """Densest packing around a user: one person per ``1/density`` m^2.

    The m-th nearest person sits at ``sqrt(m / (pi * density))``.
    """

    radii: tuple
    critical_distance: float

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.size == 0:
            raise DomainError("crowd layout is empty")
        if np.any(np.diff(r) <= 0):
            raise DomainError("radii must be strictly increasing")
        if r[-1] > self.critical_distance:
            raise DomainError("outermost radius exceeds the critical distance")

    @classmethod
    def densest_packing(cls, critical_distance: float = 2.0, density: float = 1.0) -> "CrowdLayout":
        if not density > 0:
            raise DomainError("density must be positive")
        m_c = math.floor(math.pi * density * critical_distance**2)
        # guard against floor landing one too high through rounding
        while m_c > 0 and math.sqrt(m_c / (math.pi * density)) > critical_distance:
            m_c -= 1
        if m_c < 1:
            raise DomainError("no person fits inside the critical distance")
        radii = tuple(math.sqrt(m / (math.pi * density)) for m in range(1, m_c + 1))
        return cls(radii, critical_distance)

    @property
    def size(self) -> int:
        return len(self.radii)


def _check_distance(d):
    arr = np.asarray(d, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("distance must be positive")
    return arr


def expected_rssi(cfg: PropagationConfig, d, mean_eta: float = 0.0):
    """Mean RSSI in dBm at distance ``d``."""
    arr = _check_distance(d)
    out = cfg.tx_power - cfg.path_loss_exponent * 10.0 * np.log10(arr) + mean_eta
    return float(out) if out.ndim == 0 else out


def decision_threshold(cfg: PropagationConfig, mean_eta: float = 0.0) -> float:
    """RSSI level expected at the critical distance."""
    return cfg.tx_power - cfg.path_loss_exponent * 10.0 * math.log10(cfg.critical_distance) + mean_eta


def rice_power_pdf(fading: RiceFading, gamma, n: int = 1):
    """Density of the sum of ``n`` independent Rice power samples.

    Noncentral chi-square with ``2n`` degrees of freedom, scaled by sigma^2.
    """
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    s2 = fading.sigma_r_sq
    ng = n * fading.gamma_r
    out = np.zeros_like(g)
    for i, x in enumerate(g):
        if x <= 0:
            out[i] = 0.0 if n > 1 or x < 0 else math.exp(-ng / (2 * s2)) / (2 * s2)
            continue
        arg = math.sqrt(n * x * fading.gamma_r) / s2
        # exp(-(x+ng)/2s2) I(arg) = exp(-(sqrt x - sqrt ng)^2 / 2s2) * ive(arg)
        log_val = (
            -math.log(2 * s2)
            + 0.5 * (n - 1) * math.log(x / ng)
            - (math.sqrt(x) - math.sqrt(ng)) ** 2 / (2 * s2)
        )
        out[i] = math.exp(log_val) * bessel_i(n - 1, arg, scaled=True)
    return float(out[0]) if np.ndim(gamma) == 0 else out


def _rice_args(fading: RiceFading, cfg: PropagationConfig, n: int, d: float):
    sigma = math.sqrt(fading.sigma_r_sq)
    gamma_c = n * fading.mean_power
    a = math.sqrt(n * fading.gamma_r) / sigma
    b = math.sqrt(gamma_c) * (d / cfg.critical_distance) ** (cfg.path_loss_exponent / 2.0) / sigma
    return a, b


def _check_n(n):
    if n < 1 or int(n) != n:
        raise DomainError("n must be a positive integer")


def pi_md_rice(fading: RiceFading, cfg: PropagationConfig, n: int, d: float) -> float:
    """Missed detection for ``n`` summed Rice powers at ``0 < d <= d_c``."""
    _check_n(n)
    if not 0 < d <= cfg.critical_distance:
        raise DomainError("missed detection needs 0 < d <= d_c")
    a, b = _rice_args(fading, cfg, n, d)
    return marcum_q_complement(n, a, b)


def pi_fa_rice(fading: RiceFading, cfg: PropagationConfig, n: int, d: float) -> float:
    """False alarm for ``n`` summed Rice powers at ``d >= d_c``.

    Same threshold as :func:`pi_md_rice`; the probability that the power sum
    still exceeds it beyond the critical distance.
    """
    _check_n(n)
    if not d >= cfg.critical_distance:
        raise DomainError("false alarm needs d >= d_c")
    a, b = _rice_args(fading, cfg, n, d)
    return marcum_q(n, a, b)


def _lognormal_arg(fading, cfg, n, ratio):
    return math.sqrt(n) * cfg.path_loss_exponent * 10.0 * np.log10(ratio) / fading.sigma_l


def pi_fa_lognormal(fading: LognormalFading, cfg: PropagationConfig, n: int, d):
    """False alarm for ``n`` summed RSSI values at ``d >= d_c``."""
    _check_n(n)
    arr = np.asarray(d, dtype=float)
    if np.any(~(arr >= cfg.critical_distance)):
        raise DomainError("false alarm needs d >= d_c")
    return gaussian_q(_lognormal_arg(fading, cfg, n, arr / cfg.critical_distance))


def pi_md_lognormal(fading: LognormalFading, cfg: PropagationConfig, n: int, d):
    """Missed detection for ``n`` summed RSSI values at ``0 < d <= d_c``.

    Mirror image of the false alarm: ``pi_md(d) == pi_fa(d_c**2 / d)``.
    """
    _check_n(n)
    arr = _check_distance(d)
    if np.any(arr > cfg.critical_distance):
        raise DomainError("missed detection needs 0 < d <= d_c")
    return gaussian_q(_lognormal_arg(fading, cfg, n, cfg.critical_distance / arr))


def pi_md(fading: FadingModel, cfg: PropagationConfig, n: int, d: float) -> float:
    if isinstance(fading, RiceFading):
        return pi_md_rice(fading, cfg, n, d)
    return float(pi_md_lognormal(fading, cfg, n, d))


def pi_fa(fading: FadingModel, cfg: PropagationConfig, n: int, d: float) -> float:
    if isinstance(fading, RiceFading):
        return pi_fa_rice(fading, cfg, n, d)
    return float(pi_fa_lognormal(fading, cfg, n, d))


def decision_error(fading: FadingModel, cfg: PropagationConfig, n: int, d: float) -> float:
    """Probability of a wrong elementary decision: missed detection inside
    the critical distance, false alarm outside."""
    if d <= cfg.critical_distance:
        return pi_md(fading, cfg, n, d)
    return pi_fa(fading, cfg, n, d)


def crowd_average_pi_md(curve: Callable[[float], float], layout: CrowdLayout) -> float:
    """Average of ``curve`` over the people of a densest-packing layout."""
    if layout.size == 0:
        raise DomainError("crowd layout is empty")
    return clamp_probability(sum(float(curve(r)) for r in layout.radii) / layout.size)


def shell_occupancy(k, critical_distance: float):
    """People on the k-th annulus of width 2*delta outside the contact zone."""
    k = np.asarray(k, dtype=float)
    inner = critical_distance + 2.0 * PERSON_RADIUS * k
    outer = inner + 2.0 * PERSON_RADIUS
    return math.pi * (outer**2 - inner**2)


def shell_distance(k, critical_distance: float):
    """Mid-annulus distance of shell k."""
    return critical_distance + PERSON_RADIUS * (2.0 * np.asarray(k, dtype=float) + 1.0)


def shell_product(
    curve: Callable[[float], float],
    critical_distance: float,
    max_shells: int = 10_000,
    term_tol: float = 1e-12,
) -> float:
    """``1 - prod_k (1 - curve(d_k))**occupancy(k)`` over densely packed shells.

    Shells are added until a shell contributes less than ``term_tol`` to the
    log of the no-alarm probability while contributions are shrinking.
    """
    if max_shells < 1:
        raise DomainError("max_shells must be >= 1")
    log_clear = 0.0
    prev = math.inf
    for k in range(max_shells):
        p = float(curve(float(shell_distance(k, critical_distance))))
        if p >= 1.0:
            return 1.0
        term = float(shell_occupancy(k, critical_distance)) * -math.log1p(-p)
        log_clear -= term
        if term < term_tol and term <= prev:
            return clamp_probability(-math.expm1(log_clear))
        prev = term
    raise ConvergenceError(f"shell product not converged after {max_shells} shells")


def total_pfa_shells(
    fading: LognormalFading, cfg: PropagationConfig, n: int, max_shells: int = 10_000
) -> float:
    """Probability that anyone in a densely packed crowd outside the contact
    zone triggers a false alarm."""
    _check_n(n)
    return shell_product(
        lambda d: float(pi_fa_lognormal(fading, cfg, n, d)),
        cfg.critical_distance,
        max_shells=max_shells,
    )


def pi_md_curve(fading: FadingModel, cfg: PropagationConfig, n: int) -> Callable[[float], float]:
    return lambda d: pi_md(fading, cfg, n, d)
