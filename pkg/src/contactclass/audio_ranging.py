"""Audio ranging: delay accuracy, decision curves and two-way time transfer.

Devices exchange spread-spectrum audio bursts. Each device timestamps its
own transmission as heard by its own microphone and the peer's transmission;
the two time differences combine into a propagation delay in which all
unknown transmit/receive latencies and clock offsets cancel.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, SimulationError
from .numerics import gaussian_q

SOUND_SPEED = 343.0  # m/s
LOCAL_PATH_M = 0.14  # speaker to microphone on the same phone

SIGNAL_S = 0.350
PROPAGATION_GUARD_S = 0.010
INTERNAL_S = 0.040
SLOT_S = SIGNAL_S + PROPAGATION_GUARD_S + INTERNAL_S


@dataclass(frozen=True)
class AudioRangingConfig:
    """Ranging signal and receiver parameters.

    ``correlator_spacing`` is the early-to-late distance of the DLL
    correlators in chips; early and late sit half of it on either side of
    the prompt.
    """

    chip_duration: float = 1e-3
    correlator_spacing: float = 1.0
    sound_speed: float = SOUND_SPEED
    carrier_hz: float = 18_000.0
    code_length: int = 350
    calibration_esn0_db: float = 6.0
    sample_rate: float = 48_000.0
    lowpass_hz: float = 2_000.0

    def __post_init__(self):
        if not 0 < self.correlator_spacing < 2:
            raise DomainError("correlator spacing must lie in (0, 2)")
        if not (self.chip_duration > 0 and self.sound_speed > 0):
            raise DomainError("chip duration and sound speed must be positive")
        if self.code_length < 2:
            raise DomainError("code needs at least 2 chips")
        if not (self.carrier_hz > 0 and self.lowpass_hz > 0 and self.sample_rate > 0):
            raise DomainError("carrier, low-pass and sample rate must be positive")

    @property
    def chip_rate(self) -> float:
        return 1.0 / self.chip_duration

    @property
    def signal_duration(self) -> float:
        return self.code_length * self.chip_duration


@dataclass(frozen=True)
class DeviceTimingProfile:
    """Per-device latencies (seconds) and clock offset.

    ``clock_offset`` is added to true time to get the device's local time.
    ``range_bias`` is an additive distance error (m) from microphone and
    speaker placement.
    """

    tx_delay: float = 0.0
    rx_delay: float = 0.0
    local_path: float = LOCAL_PATH_M / SOUND_SPEED
    clock_offset: float = 0.0
    range_bias: float = 0.0

    def __post_init__(self):
        if min(self.tx_delay, self.rx_delay, self.local_path) < 0:
            raise DomainError("device delays must be >= 0")


@dataclass(frozen=True)
class RangingExchange:
    # A's clock
    t_tx_a: float
    t_rx_a: float
    t_self_rx_a: float
    # B's clock
    t_tx_b: float
    t_rx_b: float
    t_self_rx_b: float
    delta_a: float
    delta_b: float

    @property
    def tau(self) -> float:
        return 0.5 * (self.delta_a + self.delta_b)


def delay_std(cfg: AudioRangingConfig, esn0_db: float) -> float:
    """Standard deviation (s) of the DLL delay estimate at a given E/N0."""
    if not math.isfinite(esn0_db):
        raise DomainError("E/N0 must be finite")
    spacing = cfg.correlator_spacing
    if spacing >= 2:
        raise DomainError("variance diverges for spacing >= 2")
    snr = 10.0 ** (esn0_db / 10.0)
    var = spacing / (4.0 * snr) * (1.0 + 3.0 / ((2.0 - spacing) * snr))
    return cfg.chip_duration * math.sqrt(var)


def delay_std_m(cfg: AudioRangingConfig, esn0_db: float) -> float:
    return delay_std(cfg, esn0_db) * cfg.sound_speed


def pi_md_audio(sigma: float, d_c: float, d):
    """Probability that a ranging estimate puts a contact at ``d <= d_c``
    beyond the critical distance."""
    arr = np.asarray(d, dtype=float)
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if np.any(~(arr > 0)) or np.any(arr > d_c):
        raise DomainError("missed detection needs 0 < d <= d_c")
    return gaussian_q((d_c - arr) / sigma)


def pi_fa_audio(sigma: float, d_c: float, d):
    """Probability that a ranging estimate puts a fellow at ``d > d_c``
    inside the critical distance."""
    arr = np.asarray(d, dtype=float)
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if np.any(~(arr > d_c)):
        raise DomainError("false alarm needs d > d_c")
    return gaussian_q((arr - d_c) / sigma)


def _check_stamps(*stamps):
    for t in stamps:
        if t < 0:
            raise SimulationError(f"negative timestamp {t!r}")


def two_way_exchange(
    profile_a: DeviceTimingProfile,
    profile_b: DeviceTimingProfile,
    distance: float,
    cfg: AudioRangingConfig = AudioRangingConfig(),
    start: float = 0.0,
    gap: float = SLOT_S,
    timestamp_noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
):
    """Simulate one A-then-B exchange and recover the distance.

    A starts its burst at true time ``start``, B ``gap`` seconds later.
    Optional Gaussian noise of std ``timestamp_noise`` is added to each of
    the four reception timestamps.

    Returns
    -------
    (RangingExchange, float)
        The timestamps and the recovered distance in meters.
    """
    if not distance > 0:
        raise DomainError("distance must be positive")
    if timestamp_noise < 0:
        raise DomainError("timestamp noise must be >= 0")
    if timestamp_noise > 0 and rng is None:
        raise DomainError("noisy exchange needs an rng")
    c = cfg.sound_speed
    tau_p = distance / c
    # microphone/speaker geometry: seen as extra path on each device's side
    bias_a = profile_a.range_bias / c
    bias_b = profile_b.range_bias / c

    def noise():
        return float(rng.normal(0.0, timestamp_noise)) if timestamp_noise > 0 else 0.0

    t0 = start
    t1 = start + gap
    off_a, off_b = profile_a.clock_offset, profile_b.clock_offset
    # true times of the acoustic events
    a_leaves = t0 + profile_a.tx_delay
    b_leaves = t1 + profile_b.tx_delay
    t_tx_a = t0 + off_a
    t_self_rx_a = a_leaves + profile_a.local_path + profile_a.rx_delay + off_a + noise()
    t_rx_b = a_leaves + tau_p + bias_b + profile_b.rx_delay + off_b + noise()
    t_tx_b = t1 + off_b
    t_self_rx_b = b_leaves + profile_b.local_path + profile_b.rx_delay + off_b + noise()
    t_rx_a = b_leaves + tau_p + bias_a + profile_a.rx_delay + off_a + noise()
    _check_stamps(t_tx_a, t_rx_a, t_self_rx_a, t_tx_b, t_rx_b, t_self_rx_b)

    delta_a = t_rx_a - t_self_rx_a + profile_a.local_path
    delta_b = t_rx_b - t_self_rx_b + profile_b.local_path
    ex = RangingExchange(t_tx_a, t_rx_a, t_self_rx_a, t_tx_b, t_rx_b, t_self_rx_b, delta_a, delta_b)
    return ex, ex.tau * c


@dataclass(frozen=True)
class Schedule:
    device_ids: tuple
    slot_starts: tuple  # true time of each transmission, ascending-id order
    slot_seconds: float

    @property
    def k(self) -> int:
        return len(self.device_ids)

    @property
    def cycle_seconds(self) -> float:
        return self.k * self.slot_seconds

    @property
    def n_values(self) -> int:
        """Number of published time differences."""
        return self.k * (self.k - 1)


def networked_schedule(k: int, cfg: AudioRangingConfig = AudioRangingConfig(), device_ids: Optional[Sequence[int]] = None) -> Schedule:
    """Prearranged cycle: devices transmit one after another by ascending id."""
    if k < 2:
        raise DomainError("a network needs at least 2 devices")
    ids = tuple(sorted(device_ids)) if device_ids is not None else tuple(range(k))
    if len(ids) != k or len(set(ids)) != k:
        raise DomainError("need k distinct device ids")
    slot = cfg.signal_duration + PROPAGATION_GUARD_S + INTERNAL_S
    return Schedule(ids, tuple(i * slot for i in range(k)), slot)


@dataclass
class NetworkResult:
    schedule: Schedule
    events: list = field(default_factory=list)  # (slot, tx_id, rx_id, local time)
    deltas: dict = field(default_factory=dict)  # (observer, peer) -> delta t
    distances: dict = field(default_factory=dict)  # (i, j), i < j -> meters

    def transcript_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot", "tx_id", "rx_id", "t_local_s"])
        for slot, tx, rx, t in self.events:
            w.writerow([slot, tx, rx, f"{t:.12f}"])
        return buf.getvalue()

    def deltas_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["observer_id", "peer_id", "delta_t_s"])
        for (i, j), v in sorted(self.deltas.items()):
            w.writerow([i, j, f"{v:.12f}"])
        return buf.getvalue()

    def distances_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id_a", "id_b", "distance_m"])
        for (i, j), v in sorted(self.distances.items()):
            w.writerow([i, j, f"{v:.9f}"])
        return buf.getvalue()


def simulate_network(
    positions: Sequence,
    profiles: Optional[Sequence[DeviceTimingProfile]] = None,
    cfg: AudioRangingConfig = AudioRangingConfig(),
    start: float = 0.0,
    timestamp_noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> NetworkResult:
    """Run one networked cycle for devices at ``positions`` (1-d or 2-d, m).

    Every device timestamps every burst, including its own; afterwards each
    publishes ``k - 1`` differences and every pair solves its distance.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    k = len(pos)
    sched = networked_schedule(k, cfg)
    profiles = list(profiles) if profiles is not None else [DeviceTimingProfile() for _ in range(k)]
    if len(profiles) != k:
        raise DomainError("need one timing profile per device")
    if timestamp_noise > 0 and rng is None:
        raise DomainError("noisy simulation needs an rng")
    c = cfg.sound_speed
    res = NetworkResult(sched)
    heard = {}
    for slot, tx in enumerate(sched.device_ids):
        leaves = start + sched.slot_starts[slot] + profiles[tx].tx_delay
        for rx in sched.device_ids:
            p = profiles[rx]
            if rx == tx:
                path = p.local_path
            else:
                dist = float(np.linalg.norm(pos[tx] - pos[rx]))
                if not dist > 0:
                    raise DomainError("devices must not coincide")
                path = (dist + p.range_bias) / c
            t = leaves + path + p.rx_delay + p.clock_offset
            if timestamp_noise > 0:
                t += float(rng.normal(0.0, timestamp_noise))
            _check_stamps(t)
            heard[(rx, tx)] = t
            res.events.append((slot, tx, rx, t))
    for i in sched.device_ids:
        for j in sched.device_ids:
            if i != j:
                res.deltas[(i, j)] = heard[(i, j)] - heard[(i, i)] + profiles[i].local_path
    for a, i in enumerate(sched.device_ids):
        for j in sched.device_ids[a + 1 :]:
            res.distances[(i, j)] = 0.5 * (res.deltas[(i, j)] + res.deltas[(j, i)]) * c
    return res
