"""Accumulating elementary decisions over a contact episode.

An elementary decision (c1-hat) is taken once per interval from ``n``
measurements; the episode is classified as a close contact once ``x0`` of them
are positive. This module turns per-decision error probabilities into
episode-level missed detections, spreading probabilities and expected
numbers of unnecessary quarantines.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import special

from .errors import DomainError
from .numerics import Tolerance, binom_pmf, clamp_probability, find_root, log_binom
from .propagation import CrowdLayout, LognormalFading, PropagationConfig, crowd_average_pi_md, pi_md_lognormal, total_pfa_shells

SECONDS_PER_WINDOW = 900  # 15 minutes of accumulated contact
DECISIONS_PER_DAY_FACTOR = 24 * 4  # 15-minute windows per day


class Model(str, enum.Enum):
    A = "A"  # one decision every 15 s, 60 needed
    B = "B"  # timer started by a threshold crossing
    C = "C"  # few long intervals


_C_INTERVALS = {3: 300.0, 5: 180.0}


@dataclass(frozen=True)
class DecisionPolicy:
    model: Model
    n: int
    x0: int
    interval_seconds: float
    x_max: int = 0  # 0 selects the daily default 96 * x0

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.n < 1 or self.x0 < 1:
            raise DomainError("n and x0 must be positive integers")
        if not self.interval_seconds > 0:
            raise DomainError("interval must be positive")
        if self.model is Model.A and (self.x0 != 60 or self.interval_seconds != 15.0):
            raise DomainError("model A takes 60 decisions at 15 s intervals")
        if self.model is Model.B and self.x0 != 1:
            raise DomainError("model B takes a single decision")
        if self.model is Model.C and _C_INTERVALS.get(self.x0) != self.interval_seconds:
            raise DomainError("model C uses x0=3 with 300 s or x0=5 with 180 s intervals")
        if self.x_max == 0:
            object.__setattr__(self, "x_max", DECISIONS_PER_DAY_FACTOR * self.x0)
        if self.x_max < self.x0:
            raise DomainError("x_max must be >= x0")

    @classmethod
    def model_a(cls, n: int, x_max: int = 0) -> "DecisionPolicy":
        return cls(Model.A, n, 60, 15.0, x_max)

    @classmethod
    def model_b(cls, n: int, x_max: int = 0) -> "DecisionPolicy":
        return cls(Model.B, n, 1, float(SECONDS_PER_WINDOW), x_max)

    @classmethod
    def model_c(cls, n: int, x0: int = 5, x_max: int = 0) -> "DecisionPolicy":
        if x0 not in _C_INTERVALS:
            raise DomainError("model C needs x0 in {3, 5}")
        return cls(Model.C, n, x0, _C_INTERVALS[x0], x_max)

    @property
    def rate(self) -> Fraction:
        """Measurements per second, ``x0 * n / 900``."""
        return Fraction(self.x0 * self.n, SECONDS_PER_WINDOW)


def _validate_pmf(pmf, what):
    arr = np.asarray(pmf, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"{what} pmf must be a non-empty 1-d array")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} pmf must be finite and non-negative")
    if abs(arr.sum() - 1.0) > 1e-9:
        raise DomainError(f"{what} pmf sums to {arr.sum()!r}, not 1")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ContactTimeDistribution:
    """Distribution of the number of decision intervals spent in contact.

    ``pmf[x]`` is the probability of exactly ``x`` intervals.
    """

    pmf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pmf", _validate_pmf(self.pmf, "contact time"))

    @property
    def x_max(self) -> int:
        return len(self.pmf) - 1

    def __call__(self, x: int) -> float:
        return float(self.pmf[x]) if 0 <= x < len(self.pmf) else 0.0

    @classmethod
    def point_mass(cls, x: int) -> "ContactTimeDistribution":
        if x < 0:
            raise DomainError("count must be >= 0")
        pmf = np.zeros(x + 1)
        pmf[x] = 1.0
        return cls(pmf)

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "ContactTimeDistribution":
        """Uniform on the integers lo..hi inclusive."""
        if not 0 <= lo <= hi:
            raise DomainError("need 0 <= lo <= hi")
        pmf = np.zeros(hi + 1)
        pmf[lo:] = 1.0 / (hi - lo + 1)
        return cls(pmf)

    @classmethod
    def truncated_geometric(cls, p: float, x_max: int) -> "ContactTimeDistribution":
        """``P(x) ~ (1-p)**x p`` on 0..x_max, renormalized."""
        if not 0 < p <= 1:
            raise DomainError("p must lie in (0, 1]")
        w = (1.0 - p) ** np.arange(x_max + 1) * p
        return cls(w / w.sum())


@dataclass(frozen=True)
class ExposureDistribution:
    """Number of radio contacts ``y`` with one fellow, plus the mean number
    ``k_y`` of fellows in radio range per day."""

    pmf: np.ndarray
    k_y: float

    def __post_init__(self):
        object.__setattr__(self, "pmf", _validate_pmf(self.pmf, "exposure"))
        if not self.k_y >= 0:
            raise DomainError("k_y must be >= 0")

    @classmethod
    def point_mass(cls, y: int, k_y: float) -> "ExposureDistribution":
        pmf = np.zeros(y + 1)
        pmf[y] = 1.0
        return cls(pmf, k_y)


def _check_prob(p, name):
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {p!r}")


def combined_pmd(x: int, x0: int, pi_md: float) -> float:
    """Probability that fewer than ``x0`` of ``x`` elementary decisions
    detect the contact."""
    if x < 0:
        raise DomainError("x must be >= 0")
    _check_prob(pi_md, "pi_md")
    if x < x0:
        return 1.0
    # P(Bin(x, 1 - pi_md) <= x0 - 1)
    if pi_md == 0.0:
        return 0.0
    if pi_md == 1.0:
        return 1.0
    return clamp_probability(float(special.bdtr(x0 - 1, x, 1.0 - pi_md)))


@dataclass(frozen=True)
class SpreadingResult:
    probability: float
    dominant_term: float  # only the m = x0-1 term of each inner sum
    poisson_estimate: float  # binomial coefficients replaced by x0**x'/x'!
    no_tracing: float  # K p_i P(x >= x0)

    @property
    def reduction(self) -> float:
        return self.probability / self.no_tracing if self.no_tracing > 0 else 0.0


def _check_support(px: ContactTimeDistribution, x_max: int):
    if px.x_max > x_max and px.pmf[x_max + 1 :].sum() > 1e-12:
        raise DomainError(f"contact-time support exceeds x_max={x_max}")


def spreading_probability(
    K: float, p_i: float, px: ContactTimeDistribution, policy: DecisionPolicy, pi_md: float
) -> SpreadingResult:
    """Expected probability that an infected fellow is missed by tracing.

    ``K p_i sum_{x >= x0} p_X(x) p_md(x)`` summed up to ``policy.x_max``.
    """
    if not K >= 0:
        raise DomainError("K must be >= 0")
    _check_prob(p_i, "p_i")
    _check_prob(pi_md, "pi_md")
    _check_support(px, policy.x_max)
    x0 = policy.x0
    top = min(policy.x_max, px.x_max)
    total = dominant = poisson = no_trace = 0.0
    pi_d = 1.0 - pi_md
    for x in range(x0, top + 1):
        w = px(x)
        if w == 0.0:
            continue
        no_trace += w
        total += w * combined_pmd(x, x0, pi_md)
        dominant += w * binom_pmf(x, x0 - 1, pi_d)
        xp = x - x0 + 1
        if pi_md > 0:
            poisson += w * math.exp(xp * math.log(x0 * pi_md) - math.lgamma(xp + 1))
    poisson *= pi_d ** (x0 - 1)
    scale = K * p_i
    return SpreadingResult(scale * total, scale * dominant, scale * poisson, scale * no_trace)


def reduction_factor(policy_or_x0, pi_md_av: float) -> float:
    """Figure of merit ``x0 * pi_md``: how strongly tracing reduces spreading."""
    x0 = policy_or_x0.x0 if isinstance(policy_or_x0, DecisionPolicy) else int(policy_or_x0)
    return x0 * pi_md_av


def false_alarm_given_exposure(
    y: int, x0: int, px: ContactTimeDistribution, pi_md: float, pi_fa: float
) -> float:
    """Probability of a false close-contact verdict after ``y`` radio contacts.

    Of the ``y`` contacts, ``x`` fall inside the contact zone; ``m < x0`` of
    those are detected and ``q`` of the remaining ``y - x`` are wrongly
    flagged, with ``m + q >= x0``. Values of ``x`` above ``y`` cannot occur
    together with ``y`` and are skipped.
    """
    if y < 0:
        raise DomainError("y must be >= 0")
    _check_prob(pi_md, "pi_md")
    _check_prob(pi_fa, "pi_fa")
    if y < x0:
        return 0.0
    total = 0.0
    for x in range(0, min(y, px.x_max) + 1):
        w = px(x)
        if w == 0.0:
            continue
        inner = 0.0
        for m in range(0, min(x, x0 - 1) + 1):
            need = x0 - m
            if need > y - x:
                continue
            # P(Bin(y-x, pi_fa) >= need)
            tail = float(special.bdtrc(need - 1, y - x, pi_fa)) if 0 < pi_fa < 1 else float(pi_fa == 1.0)
            inner += binom_pmf(x, m, 1.0 - pi_md) * tail
        total += w * inner
    return clamp_probability(total)


def expected_quarantines(
    py: ExposureDistribution,
    px: ContactTimeDistribution,
    p_i: float,
    policy_or_x0,
    pi_md: float,
    pi_fa: float,
) -> float:
    """Expected number of people quarantined without being close contacts."""
    _check_prob(p_i, "p_i")
    x0 = policy_or_x0.x0 if isinstance(policy_or_x0, DecisionPolicy) else int(policy_or_x0)
    s = 0.0
    for y in range(x0, len(py.pmf)):
        w = float(py.pmf[y])
        if w:
            s += w * false_alarm_given_exposure(y, x0, px, pi_md, pi_fa)
    return py.k_y * p_i * s


def leading_quarantine_term(k_y: float, y: int, x0: int, pi_fa: float) -> float:
    """``K_Y C(y, x0) pi_fa**x0``: the x = x0 term of the binomial tail."""
    return k_y * math.comb(y, x0) * pi_fa**x0


def stirling_leading_term(y: int, x0: int, pi_fa: float) -> float:
    """Large-y approximation of ``C(y, x0) pi_fa**x0``."""
    if not y > x0:
        raise DomainError("need y > x0")
    return math.sqrt(y / (2 * math.pi * x0 * (y - x0))) * ((y / x0 - 1) * math.e * pi_fa) ** x0


def solve_pfa_target(
    k_y: float, y: int, x0: int, target: float = 2.0, tol: Tolerance = Tolerance(1e-14, 1e-12)
) -> float:
    """Largest tolerable ``pi_fa``: solves ``K_Y C(y, x0) pi_fa**x0 = target``.

    Returns 1.0 when even ``pi_fa = 1`` stays below the target.
    """
    if not y >= x0 >= 1:
        raise DomainError("need y >= x0 >= 1")
    if not (target > 0 and k_y > 0):
        raise DomainError("target and k_y must be positive")
    # work on log scale: C(y, x0) overflows long before y reaches daily counts
    log_c = math.log(k_y) + log_binom(y, x0) - math.log(target)
    if log_c <= 0:
        return 1.0
    return find_root(lambda p: log_c + x0 * math.log(p), 1e-300, 1.0, tol)


def large_x0_limit(ratio: float) -> float:
    """Limit of the solved ``pi_fa`` for ``y = ratio * x0`` as x0 grows."""
    if not ratio >= 1:
        raise DomainError("ratio must be >= 1")
    if ratio == 1:
        return 1.0
    return (ratio - 1) ** (ratio - 1) / ratio**ratio


@dataclass(frozen=True)
class PerformanceRow:
    n: int
    x0: int
    pi_md_av: float
    reduction: float
    p_fa: float
    rate: Fraction


def crowd_pi_md_lognormal(fading: LognormalFading, cfg: PropagationConfig, layout: CrowdLayout, n: int) -> float:
    return crowd_average_pi_md(lambda d: float(pi_md_lognormal(fading, cfg, n, d)), layout)


def performance_table(
    fading_md: LognormalFading,
    cfg: PropagationConfig,
    layout: CrowdLayout,
    n_values: Sequence[int],
    x0_values: Sequence[int],
    fading_fa: LognormalFading | None = None,
) -> list:
    """Rows of (n, x0) performance figures, n-major.

    ``fading_md`` drives the crowd-averaged missed detection and
    ``fading_fa`` (defaulting to the same law) the shell-product false alarm.
    """
    fading_fa = fading_fa or fading_md
    rows = []
    for n in n_values:
        pmd = crowd_pi_md_lognormal(fading_md, cfg, layout, n)
        pfa = total_pfa_shells(fading_fa, cfg, n)
        for x0 in x0_values:
            rows.append(
                PerformanceRow(n, x0, pmd, reduction_factor(x0, pmd), pfa, Fraction(x0 * n, SECONDS_PER_WINDOW))
            )
    return rows
