"""Seeded Monte Carlo oracle and classifier state machines.

Random streams are derived with ``SeedSequence(seed, spawn_key=(i,))`` for
chunk or trial index ``i``, so results do not depend on how work is split
or ordered.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .episode import DecisionPolicy, Model, SECONDS_PER_WINDOW
from .errors import DomainError, SimulationError
from .propagation import (
    FadingModel,
    LognormalFading,
    PropagationConfig,
    RiceFading,
    decision_threshold,
    expected_rssi,
)

WILSON_Z = 1.959963984540054  # two-sided 95%
CHUNK = 100_000


def stream(seed: int, index: int) -> np.random.Generator:
    """Generator for work unit ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _as_rng(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def sample_eta(fading: FadingModel, rng: np.random.Generator, size) -> np.ndarray:
    """Fading term in dB."""
    if isinstance(fading, LognormalFading):
        return fading.sample_eta(rng, size)
    return 10.0 * np.log10(fading.sample_gain(rng, size))


def sample_rssi(fading: FadingModel, cfg: PropagationConfig, d: float, rng_seed, size=None):
    """RSSI draws in dBm at distance ``d``."""
    if not d > 0:
        raise DomainError("distance must be positive")
    rng = _as_rng(rng_seed)
    eta = sample_eta(fading, rng, 1 if size is None else size)
    out = expected_rssi(cfg, d) + eta
    return float(out[0]) if size is None else out


def threshold_for(fading: FadingModel, cfg: PropagationConfig) -> float:
    """Per-measurement RSSI threshold: the mean level at the critical distance."""
    return decision_threshold(cfg, fading.mean_eta)


@dataclass(frozen=True)
class EmpiricalEstimate:
    probability: float
    lower: float
    upper: float
    trials: int
    count: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)


def wilson_interval(count: int, trials: int, z: float = WILSON_Z):
    if trials < 1:
        raise DomainError("need at least one trial")
    p = count / trials
    den = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    # the bounds touch 0 and 1 exactly at the extremes; rounding would miss them
    lo = 0.0 if count == 0 else max(0.0, centre - half)
    hi = 1.0 if count == trials else min(1.0, centre + half)
    return lo, hi


def binomial_se(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def count_decision_errors(
    fading: FadingModel, cfg: PropagationConfig, n: int, d: float, trials: int, rng: np.random.Generator
) -> int:
    """Wrong elementary decisions among ``trials`` aggregates of ``n`` draws.

    Rice fading aggregates received power, lognormal fading aggregates dB,
    matching how each closed form is built.
    """
    inside = d <= cfg.critical_distance
    ratio = (d / cfg.critical_distance) ** cfg.path_loss_exponent
    if isinstance(fading, RiceFading):
        # sum of n gains against n * mean gain, scaled by the path loss ratio
        g = fading.sample_gain(rng, (trials, n)).sum(axis=1)
        stat = g - n * fading.mean_power * ratio
    else:
        eta = fading.sample_eta(rng, (trials, n)).sum(axis=1) - n * fading.eta_l
        stat = eta - n * 10.0 * np.log10(ratio)
    positive = stat >= 0.0
    return int(np.count_nonzero(~positive if inside else positive))


def estimate_pi_empirical(
    fading: FadingModel, cfg: PropagationConfig, n: int, d: float, trials: int, rng_seed: int
) -> EmpiricalEstimate:
    """Monte Carlo missed-detection (d <= d_c) or false-alarm (d > d_c)
    probability with a Wilson 95% interval."""
    if trials < 1000:
        raise DomainError("need at least 1000 trials")
    return _estimate(fading, cfg, n, d, trials, rng_seed)


def _estimate(fading, cfg, n, d, trials, rng_seed) -> EmpiricalEstimate:
    if n < 1:
        raise DomainError("n must be >= 1")
    if not d > 0:
        raise DomainError("distance must be positive")
    if trials < 1:
        raise DomainError("need at least one trial")
    count = 0
    done = 0
    # keep each chunk near CHUNK * 4 random draws
    chunk_size = max(1, CHUNK // max(1, n // 4))
    i = 0
    while done < trials:
        m = min(chunk_size, trials - done)
        count += count_decision_errors(fading, cfg, n, d, m, stream(rng_seed, i))
        done += m
        i += 1
    lo, hi = wilson_interval(count, trials)
    return EmpiricalEstimate(count / trials, lo, hi, trials, count)


def crowd_experiment(
    fading: FadingModel, cfg: PropagationConfig, radii: Sequence[float], n: int, trials: int, rng_seed: int
) -> EmpiricalEstimate:
    """Missed-detection rate pooled over fellows at the given radii."""
    count = 0
    for j, r in enumerate(radii):
        count += count_decision_errors(fading, cfg, n, r, trials, stream(rng_seed, j))
    total = trials * len(radii)
    lo, hi = wilson_interval(count, total)
    return EmpiricalEstimate(count / total, lo, hi, total, count)


# classifier -----------------------------------------------------------------


class Verdict(str, enum.Enum):
    PENDING = "pending"
    C1 = "C1"
    NOT_C1 = "notC1"


@dataclass(frozen=True)
class Episode:
    """Scripted encounter: sample times (s), distances (m), headings (deg)."""

    times: np.ndarray
    distances: np.ndarray
    headings: np.ndarray
    measurement_period: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        d = np.asarray(self.distances, dtype=float)
        h = np.asarray(self.headings, dtype=float) if self.headings is not None else np.zeros_like(t)
        if t.ndim != 1 or d.shape != t.shape or h.shape != t.shape:
            raise DomainError("times, distances and headings must be equal-length 1-d arrays")
        if len(t) and np.any(np.diff(t) <= 0):
            raise DomainError("times must be strictly increasing")
        if np.any(~(d > 0)):
            raise DomainError("distances must be positive")
        if not self.measurement_period > 0:
            raise DomainError("measurement period must be positive")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "headings", h)

    def __len__(self):
        return len(self.times)

    @classmethod
    def constant(cls, distance: float, policy: DecisionPolicy, intervals: int, heading: float = 0.0) -> "Episode":
        """``intervals`` decision intervals with ``policy.n`` evenly spaced
        measurements each."""
        if intervals < 1:
            raise DomainError("need at least one interval")
        period = policy.interval_seconds / policy.n
        k = intervals * policy.n
        t = np.arange(k) * period
        return cls(t, np.full(k, float(distance)), np.full(k, float(heading)), period)


@dataclass
class ClassifierState:
    policy: DecisionPolicy
    accumulated_rssi: float = 0.0
    samples_in_block: int = 0
    interval_count: int = 0
    c1_hits: int = 0
    timer_started: bool = False
    compatible_seconds: float = 0.0
    verdict: Verdict = Verdict.PENDING

    def check(self):
        if self.c1_hits > self.interval_count:
            raise SimulationError("more hits than completed intervals")
        if self.verdict is Verdict.C1 and self.policy.model is not Model.B and self.c1_hits < self.policy.x0:
            raise SimulationError("C1 verdict before x0 hits")


@dataclass(frozen=True)
class TraceRow:
    time: float
    distance: float
    rssi: float
    decision: Optional[bool]  # set on the sample that closes a block
    interval_sum: float
    verdict: Verdict


@dataclass
class ClassifierResult:
    verdict: Verdict
    state: ClassifierState
    trace: List[TraceRow] = field(default_factory=list)
    decisions: List[bool] = field(default_factory=list)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "distance_m", "rssi_dBm", "decision", "interval_sum_dBm", "verdict"])
        for r in self.trace:
            dec = "" if r.decision is None else int(r.decision)
            w.writerow([f"{r.time:.6f}", f"{r.distance:.6f}", f"{r.rssi:.6f}", dec, f"{r.interval_sum:.6f}", r.verdict.value])
        return buf.getvalue()


def run_classifier(
    episode: Episode,
    policy: DecisionPolicy,
    fading: FadingModel,
    cfg: PropagationConfig,
    rng_seed,
    keep_trace: bool = True,
) -> ClassifierResult:
    """Run one decision model over an episode.

    Every block of ``policy.n`` consecutive measurements yields an
    elementary decision: the summed RSSI against ``n`` times the threshold.
    Models A and C declare C1 once ``x0`` blocks were positive. Model B
    starts a timer at the first positive block and adds the duration of
    each further positive block; C1 iff 15 minutes accumulate by the end.
    """
    if len(episode) == 0:
        raise DomainError("empty episode")
    rng = _as_rng(rng_seed)
    eta = sample_eta(fading, rng, len(episode))
    rssi = expected_rssi(cfg, episode.distances) + eta
    theta = threshold_for(fading, cfg)
    n = policy.n
    state = ClassifierState(policy)
    res = ClassifierResult(Verdict.PENDING, state)
    block_seconds = n * episode.measurement_period
    for i in range(len(episode)):
        state.accumulated_rssi += rssi[i]
        state.samples_in_block += 1
        decision = None
        block_sum = state.accumulated_rssi
        if state.samples_in_block == n:
            decision = bool(state.accumulated_rssi >= n * theta)
            res.decisions.append(decision)
            state.interval_count += 1
            state.accumulated_rssi = 0.0
            state.samples_in_block = 0
            if decision:
                state.c1_hits += 1
                if policy.model is Model.B:
                    state.timer_started = True
                    state.compatible_seconds += block_seconds
                elif state.verdict is Verdict.PENDING and state.c1_hits >= policy.x0:
                    state.verdict = Verdict.C1
        if keep_trace:
            res.trace.append(TraceRow(episode.times[i], episode.distances[i], rssi[i], decision, block_sum, state.verdict))
    if policy.model is Model.B:
        state.verdict = Verdict.C1 if state.compatible_seconds >= SECONDS_PER_WINDOW - 1e-9 else Verdict.NOT_C1
    elif state.verdict is Verdict.PENDING:
        state.verdict = Verdict.NOT_C1
    state.check()
    if keep_trace and res.trace:
        last = res.trace[-1]
        res.trace[-1] = TraceRow(last.time, last.distance, last.rssi, last.decision, last.interval_sum, state.verdict)
    res.verdict = state.verdict
    return res


def episode_miss_rate(
    distance: float,
    policy: DecisionPolicy,
    intervals: int,
    fading: FadingModel,
    cfg: PropagationConfig,
    episodes: int,
    seed: int,
) -> EmpiricalEstimate:
    """Fraction of constant-distance episodes that do not end in C1."""
    ep = Episode.constant(distance, policy, intervals)
    missed = 0
    for k in range(episodes):
        r = run_classifier(ep, policy, fading, cfg, stream(seed, k), keep_trace=False)
        missed += r.verdict is not Verdict.C1
    lo, hi = wilson_interval(missed, episodes)
    return EmpiricalEstimate(missed / episodes, lo, hi, episodes, missed)


# poses ----------------------------------------------------------------------

CRITICAL_POSES = frozenset("ade")


@dataclass(frozen=True)
class Pose:
    label: str
    category1: bool  # pose counts as critical inside the critical distance


@dataclass(frozen=True)
class PoseVerdict:
    pose: Pose
    critical: bool


def _orientation(offset: float, sector: float) -> str:
    a = abs((offset + 180.0) % 360.0 - 180.0)
    if a <= sector:
        return "toward"
    if a >= 180.0 - sector:
        return "away"
    return "side"


def classify_pose(
    distance: float,
    heading_a: float,
    heading_b: float,
    d_c: float = 2.0,
    pose_b_distance: float = 1.0,
    sector: float = 45.0,
) -> PoseVerdict:
    """Label the relative pose of two fellows and decide criticality.

    Headings are in degrees in a frame where the line from A to B points at
    0; A looks at B with heading 0 and B looks at A with heading 180.
    """
    if not distance > 0:
        raise DomainError("distance must be positive")
    for h in (heading_a, heading_b):
        if not 0.0 <= h < 360.0:
            raise DomainError("headings must lie in [0, 360)")
    oa = _orientation(heading_a, sector)
    ob = _orientation(heading_b - 180.0, sector)
    table = {
        ("toward", "toward"): "a",
        ("away", "toward"): "b",
        ("toward", "away"): "c",
        ("side", "toward"): "d",
        ("toward", "side"): "e",
    }
    label = table.get((oa, ob), "f")
    pose = Pose(label, label in CRITICAL_POSES)
    if label in CRITICAL_POSES:
        critical = distance < d_c
    elif label == "b":
        critical = distance < pose_b_distance
    else:
        critical = False
    return PoseVerdict(pose, critical)
