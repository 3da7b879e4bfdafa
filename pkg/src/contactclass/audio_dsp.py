"""Baseband receiver for the audio ranging signal.

A truncated m-sequence BPSK-modulates an audio carrier. The receiver mixes
the microphone signal down to complex baseband, low-pass filters it in the
frequency domain, correlates against the reference, picks the earliest strong
peak on a half-chip grid and refines it with an early-late power
discriminator.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.signal import max_len_seq

from .audio_ranging import AudioRangingConfig, delay_std
from .errors import ConfigError, DomainError
from .numerics import find_root, marcum_q

# Degree-9 feedback taps giving maximal-length sequences whose 350-chip
# truncations cross-correlate below 0.19 of the autocorrelation peak.
CODE_TAPS = (
    (4,), (5,), (1, 2, 7), (1, 3, 4), (1, 4, 5), (1, 5, 7), (2, 3, 5),
    (2, 4, 7), (2, 4, 8), (2, 5, 7), (2, 7, 8), (3, 4, 6), (3, 5, 6),
)
_CODE_DEGREE = 9

# Correlation power relative to the noise floor, |C|^2 / (N0 E_ref), has
# mean 1 on noise alone.
_FIRST_PATH_FRACTION = 0.5


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1:
            raise DomainError("waveform must be one channel")
        if not np.all(np.isfinite(s)):
            raise DomainError("waveform samples must be finite")
        if not self.sample_rate > 0:
            raise DomainError("sample rate must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def energy(self) -> float:
        return float(np.sum(self.samples**2) / self.sample_rate)


@dataclass(frozen=True)
class CorrelationResult:
    delay_estimate: Optional[float]  # seconds, None when not acquired
    peak_magnitude: float  # |C|^2 / (N0 E_ref) at the estimate
    esn0_estimate: float  # dB
    acquired: bool
    frequency_offset: float = 0.0


def spreading_code(length: int, code_seed: int = 0) -> np.ndarray:
    """+-1 chips of an m-sequence from the seed-selected polynomial.

    Seeds are taken modulo the size of the polynomial family.
    """
    if length < 1:
        raise DomainError("code length must be >= 1")
    taps = CODE_TAPS[code_seed % len(CODE_TAPS)]
    period = 2**_CODE_DEGREE - 1
    seq = max_len_seq(_CODE_DEGREE, taps=list(taps), length=max(length, period))[0]
    seq = np.resize(seq, length)  # repeats the period if more chips are asked for
    return seq * 2.0 - 1.0


def _check_rate(cfg: AudioRangingConfig, sample_rate: float):
    need = 2.0 * (cfg.carrier_hz + cfg.chip_rate)
    if sample_rate < need:
        raise ConfigError(f"sample rate {sample_rate} Hz below {need} Hz for this carrier")


def generate_ranging_signal(cfg: AudioRangingConfig, code_seed: int = 0) -> Waveform:
    """Unit-amplitude BPSK burst of ``cfg.code_length`` rectangular chips."""
    fs = cfg.sample_rate
    _check_rate(cfg, fs)
    code = spreading_code(cfg.code_length, code_seed)
    n = int(round(cfg.signal_duration * fs))
    t = np.arange(n) / fs
    chip = np.minimum((t / cfg.chip_duration + 1e-9).astype(int), cfg.code_length - 1)
    return Waveform(code[chip] * np.cos(2 * np.pi * cfg.carrier_hz * t), fs)


def _baseband_spectrum(x: np.ndarray, fs: float, carrier: float, half_band: float, m: int):
    """Spectrum of LPF(sqrt(2) x exp(-j w t)) on ``m`` bins plus the kept mask."""
    t = np.arange(len(x)) / fs
    z = sfft.fft(math.sqrt(2.0) * x * np.exp(-2j * np.pi * carrier * t), m)
    f = sfft.fftfreq(m, 1.0 / fs)
    keep = np.abs(f) <= half_band
    return z, f, keep


def estimate_n0(wf: Waveform, bandwidth: float, carrier_hz: float = 18_000.0) -> float:
    """Noise density from the power of the filtered complex baseband.

    ``bandwidth`` is the two-sided baseband width B_S; the filter keeps
    ``|f| <= B_S / 2``. Returns ``mean(|z|^2) / B_S``.
    """
    if not bandwidth > 0:
        raise DomainError("bandwidth must be positive")
    if len(wf.samples) == 0:
        raise DomainError("empty waveform")
    n = len(wf.samples)
    z, _, keep = _baseband_spectrum(wf.samples, wf.sample_rate, carrier_hz, bandwidth / 2.0, n)
    z[~keep] = 0.0
    # Parseval: sum |z_t|^2 = sum |Z_f|^2 / n
    power = float(np.sum(np.abs(z) ** 2)) / n / n
    return power / bandwidth


def acquisition_threshold(cfg: AudioRangingConfig, detection_probability: float = 0.99) -> float:
    """Correlation-power threshold (in noise units) that a single cell at the
    calibration E/N0 crosses with the requested probability."""
    if not 0 < detection_probability < 1:
        raise DomainError("detection probability must lie in (0, 1)")
    snr = 10.0 ** (cfg.calibration_esn0_db / 10.0)
    a = math.sqrt(2.0 * snr)
    # 2|C|^2/(N0 E) is noncentral chi-square, 2 dof, noncentrality 2 E/N0
    return find_root(lambda th: marcum_q(1, a, math.sqrt(2.0 * th)) - detection_probability, 1e-12, 4.0 * (snr + 10.0))


class _Correlator:
    """Correlation of a received waveform against the reference at any lag."""

    def __init__(self, rx: Waveform, reference: Waveform, cfg: AudioRangingConfig, freq_offset: float = 0.0):
        fs = rx.sample_rate
        m = sfft.next_fast_len(len(rx.samples) + len(reference.samples))
        half = cfg.lowpass_hz
        z, f, keep = _baseband_spectrum(rx.samples, fs, cfg.carrier_hz + freq_offset, half, m)
        r, _, _ = _baseband_spectrum(reference.samples, fs, cfg.carrier_hz, half, m)
        self.f = f[keep]
        self.x = z[keep] * np.conj(r[keep]) / (m * fs)
        self.ref_energy = float(np.sum(np.abs(r[keep]) ** 2)) / (m * fs)
        zt = z.copy()
        zt[~keep] = 0.0
        # noise density from the filtered input, |f| <= half
        zt = sfft.ifft(zt)[: len(rx.samples)]
        self.n0 = float(np.mean(np.abs(zt) ** 2)) / (2.0 * half)

    def power(self, lags) -> np.ndarray:
        lags = np.atleast_1d(np.asarray(lags, dtype=float))
        out = np.empty(len(lags))
        for i in range(0, len(lags), 256):
            blk = lags[i : i + 256]
            c = np.exp(2j * np.pi * np.outer(blk, self.f)) @ self.x
            out[i : i + 256] = np.abs(c) ** 2
        return out

    def normalized(self, lags) -> np.ndarray:
        return self.power(lags) / (self.n0 * self.ref_energy) if self.n0 > 0 else np.full(np.size(lags), np.inf)


def _first_path(grid: np.ndarray, p: np.ndarray, fraction: float) -> int:
    """Earliest local maximum within ``fraction`` of the strongest cell."""
    top = p.max()
    for i in range(len(p)):
        if p[i] < fraction * top:
            continue
        left = p[i - 1] if i > 0 else -np.inf
        right = p[i + 1] if i + 1 < len(p) else -np.inf
        if p[i] >= left and p[i] >= right:
            return i
    return int(np.argmax(p))


def _dll(corr: _Correlator, start: float, cfg: AudioRangingConfig) -> float:
    """Early-late power discriminator with a halving step."""
    tc = cfg.chip_duration
    half = 0.5 * cfg.correlator_spacing * tc
    est = start
    step = tc / 16.0
    last = 0.0
    for _ in range(64):
        early, late = corr.power([est - half, est + half])
        s = float(np.sign(late - early))
        if s == 0.0:
            break
        if last and s != last:
            step /= 2.0
        if step < tc / 256.0:
            break
        est += s * step
        last = s
    return est


def acquire_and_track(
    rx: Waveform,
    reference: Waveform,
    cfg: AudioRangingConfig = AudioRangingConfig(),
    search: Optional[Sequence[float]] = None,
    frequency_search: bool = False,
    threshold: Optional[float] = None,
) -> CorrelationResult:
    """Estimate the arrival time of ``reference`` inside ``rx``.

    Parameters
    ----------
    search : (lo, hi), optional
        Delay window in seconds; defaults to every lag at which the whole
        burst fits inside ``rx``.
    frequency_search : bool
        Also try carrier offsets of -2..2 Hz in 1 Hz steps.
    threshold : float, optional
        Acquisition threshold on |C|^2 / (N0 E_ref); defaults to
        :func:`acquisition_threshold`.
    """
    if rx.sample_rate != reference.sample_rate:
        raise ConfigError("received and reference sample rates differ")
    _check_rate(cfg, rx.sample_rate)
    tc = cfg.chip_duration
    if search is None:
        search = (0.0, max(0.0, rx.duration - reference.duration))
    lo, hi = float(search[0]), float(search[1])
    if hi < lo:
        raise DomainError("empty search window")
    grid = np.arange(math.ceil(lo / (tc / 2) - 1e-9), math.floor(hi / (tc / 2) + 1e-9) + 1) * (tc / 2)
    if len(grid) == 0:
        grid = np.array([0.5 * (lo + hi)])
    th = acquisition_threshold(cfg) if threshold is None else threshold

    offsets = (-2.0, -1.0, 0.0, 1.0, 2.0) if frequency_search else (0.0,)
    best = None
    for off in offsets:
        corr = _Correlator(rx, reference, cfg, off)
        p = corr.normalized(grid)
        if best is None or p.max() > best[1].max():
            best = (corr, p, off)
    corr, p, off = best
    coarse = grid[_first_path(grid, p, _FIRST_PATH_FRACTION)]
    if corr.n0 == 0.0:
        # noiseless input: every nonzero peak is acquired
        est = _dll(corr, coarse, cfg)
        return CorrelationResult(est, math.inf, math.inf, bool(corr.power([est])[0] > 0), off)
    est = _dll(corr, coarse, cfg)
    peak = float(corr.normalized([est])[0])
    esn0 = 10.0 * math.log10(max(peak - 1.0, 1e-12))
    if peak < th:
        return CorrelationResult(None, peak, esn0, False, off)
    return CorrelationResult(est, peak, esn0, True, off)


def _delay_signal(ref: np.ndarray, fs: float, delay: float, n_out: int) -> np.ndarray:
    """``ref`` shifted by a fractional ``delay`` through an FFT phase ramp."""
    m = sfft.next_fast_len(2 * n_out)
    spec = sfft.rfft(ref, m)
    f = sfft.rfftfreq(m, 1.0 / fs)
    return sfft.irfft(spec * np.exp(-2j * np.pi * f * delay), m)[:n_out]


def simulate_reception(
    reference: Waveform,
    delay: float,
    esn0_db: Optional[float],
    rng: Optional[np.random.Generator] = None,
    echoes: Sequence = (),
    tail: float = 0.05,
) -> Waveform:
    """Received microphone signal: delayed reference, echoes, white noise.

    ``echoes`` holds (extra delay s, relative amplitude) pairs. Noise is
    scaled so that reference energy over N0 equals ``esn0_db``; ``None``
    means noiseless.
    """
    if delay < 0:
        raise DomainError("delay must be >= 0")
    fs = reference.sample_rate
    extra = max([delay] + [delay + e for e, _ in echoes])
    n_out = len(reference.samples) + int(math.ceil((extra + tail) * fs))
    x = _delay_signal(reference.samples, fs, delay, n_out)
    for e, amp in echoes:
        x = x + amp * _delay_signal(reference.samples, fs, delay + e, n_out)
    if esn0_db is not None:
        if rng is None:
            raise DomainError("noisy reception needs an rng")
        n0 = reference.energy / 10.0 ** (esn0_db / 10.0)
        # two-sided density N0/2 at sample rate fs
        x = x + rng.normal(0.0, math.sqrt(n0 * fs / 2.0), n_out)
    return Waveform(x, fs)


@dataclass(frozen=True)
class VarianceExperiment:
    esn0_db: float
    errors_chips: np.ndarray  # nan for trials that were not acquired
    predicted_std_chips: float

    @property
    def acquired(self) -> np.ndarray:
        return np.isfinite(self.errors_chips)

    @property
    def acquisition_rate(self) -> float:
        return float(np.mean(self.acquired))

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.errors_chips[self.acquired]))

    @property
    def std_error(self) -> float:
        return float(np.std(self.errors_chips[self.acquired], ddof=1))

    @property
    def std_ratio(self) -> float:
        return self.std_error / self.predicted_std_chips


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trial ``index``; results do not depend on
    evaluation order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def variance_experiment(
    cfg: AudioRangingConfig,
    esn0_db: float,
    trials: int,
    seed: int,
    window_chips: float = 0.75,
    code_seed: int = 0,
) -> VarianceExperiment:
    """Delay-error statistics of the tracking receiver.

    Each trial draws a delay of 10 ms plus a uniform fraction of a chip,
    adds noise at ``esn0_db`` and searches ``window_chips`` around the true
    delay.
    """
    if trials < 2:
        raise DomainError("need at least 2 trials")
    ref = generate_ranging_signal(cfg, code_seed)
    tc = cfg.chip_duration
    errs = np.full(trials, np.nan)
    for i in range(trials):
        rng = trial_rng(seed, i)
        tau = 0.010 + rng.uniform(0.0, tc)
        rx = simulate_reception(ref, tau, esn0_db, rng)
        res = acquire_and_track(rx, ref, cfg, search=(tau - window_chips * tc, tau + window_chips * tc))
        if res.acquired:
            errs[i] = (res.delay_estimate - tau) / tc
    return VarianceExperiment(esn0_db, errs, delay_std(cfg, esn0_db) / tc)


def write_waveform(path, wf: Waveform) -> None:
    """Raw little-endian float32 samples plus a ``.json`` sidecar."""
    path = os.fspath(path)
    wf.samples.astype("<f4").tofile(path)
    with open(path + ".json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"sample_rate": wf.sample_rate, "length": len(wf.samples)}) + "\n")


def read_waveform(path) -> Waveform:
    path = os.fspath(path)
    with open(path + ".json", encoding="utf-8") as fh:
        meta = json.loads(fh.readline())
    samples = np.fromfile(path, dtype="<f4").astype(float)
    if len(samples) != int(meta["length"]):
        raise DomainError(f"{path}: expected {meta['length']} samples, found {len(samples)}")
    return Waveform(samples, float(meta["sample_rate"]))
