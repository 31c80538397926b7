"""FMCW waveform synthesis, beat-frequency math, interference power geometry,
and the ordered-statistics noise-level estimator.

Two fidelity paths are provided to callers:

* a sample-level path (``synth_chirp_frame`` → ``synth_received`` →
  ``mix_and_spectrum`` → ``estimate_noise_level``) that synthesizes baseband
  samples and runs the full receiver pipeline, and
* closed-form helpers (``beat_frequencies``, ``interference_power_*``) used by
  the fast analytic environment path.

Conventions: unnormalized forward FFT; the interference-free spectral level
``N_IF`` is calibrated once per (geometry, FFT) configuration by a seeded
Monte-Carlo run and scales linearly with the noise power ``sigma2``.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import C_LIGHT, synth_rx, synth_tx

DB = 10.0  # dB per decade


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / DB)


@dataclass(frozen=True)
class RadarParams:
    """Per-radar waveform and physics constants.

    Defaults follow the standard 76-GHz automotive configuration: triangular
    chirps of 200 MHz bandwidth, 50 us chirp interval, 5 ms frames in a
    100 ms period; LRR transmit power 25 dBmW, SRR 15 dBmW, antenna gain
    48 dB, effective area 5 mm^2, decay coefficient 0.1.
    """

    bandwidth: float = 200e6            # B, Hz
    chirp_interval: float = 50e-6       # Tc, s
    frame_duration: float = 5e-3        # Tf, s
    period: float = 100e-3              # T, s
    base_freq: float = 76e9             # f0, Hz
    n_subbands: int = 2                 # M
    tx_power_lrr: float = db_to_linear(25.0) * 1e-3   # P_L, W (25 dBmW)
    tx_power_srr: float = db_to_linear(15.0) * 1e-3   # P_S, W (15 dBmW)
    antenna_gain: float = db_to_linear(48.0)          # G
    effective_area: float = 5e-6        # Ae, m^2
    decay: float = 0.1                  # g
    lane_gap: float = 4.0               # L, m
    noise_power: float = 5e-9           # sigma^2, W
    eta_threshold: float = 11.0         # eta_0
    discard_count: int = 20             # K
    fft_size: int = 4096                # Mf
    sample_rate: float = 20e6           # fs, Hz
    beamwidth: float = math.radians(10.0)  # 3 dB beamwidth of p_r
    cfar_factor: float = 8.0            # detection threshold over noise mean

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if not (0 < self.chirp_interval <= self.frame_duration <= self.period):
            raise ValueError("need 0 < Tc <= Tf <= T")
        if self.n_subbands < 1:
            raise ValueError("n_subbands must be >= 1")
        if not (0 <= self.discard_count < self.fft_size):
            raise ValueError("need 0 <= K < Mf")
        if self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        if not (0 < self.decay <= 1):
            raise ValueError("decay must be in (0, 1]")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")

    def carrier(self, subband: int) -> float:
        """Carrier frequency f_m = f0 + m*B of subband m."""
        if not 0 <= subband < self.n_subbands:
            raise ValueError(f"subband {subband} not in [0, {self.n_subbands})")
        return self.base_freq + subband * self.bandwidth

    @property
    def chirp_rate(self) -> float:
        return self.bandwidth / self.chirp_interval

    @property
    def frame_samples(self) -> int:
        return int(self.frame_duration * self.sample_rate)

    @property
    def half_samples(self) -> int:
        """Samples in one chirp half (one up- or down-ramp)."""
        return int(round(self.chirp_interval * self.sample_rate))

    def with_(self, **kw) -> "RadarParams":
        return replace(self, **kw)


@dataclass
class ChirpTrain:
    samples: np.ndarray          # complex baseband, length frame_samples
    subband: int
    chirp_interval: float
    sample_rate: float


@dataclass
class SpectrumSamples:
    bins: np.ndarray             # complex, length Mf
    bin_width: float             # Δf = fs / Mf

    @property
    def frequencies(self) -> np.ndarray:
        """Signed bin frequencies (fftfreq layout)."""
        mf = len(self.bins)
        return np.fft.fftfreq(mf, d=1.0 / (self.bin_width * mf))


@dataclass(frozen=True)
class EchoSpec:
    range_m: float               # D
    radial_velocity: float       # v, positive = approaching
    rx_power: float              # P_S at the receiver, W

    def __post_init__(self):
        if self.range_m <= 0:
            raise ValueError("range_m must be positive")


@dataclass(frozen=True)
class InterfererSpec:
    distance: float              # D', one-way path, m
    relative_velocity: float     # v'
    rx_power: float              # P_I, W
    chirp_interval: float        # Tc' of the interfering radar

    def __post_init__(self):
        if self.distance <= 0:
            raise ValueError("distance must be positive")
        if self.rx_power < 0:
            raise ValueError("rx_power must be non-negative")


# ---------------------------------------------------------------------------
# Waveform synthesis and receiver pipeline
# ---------------------------------------------------------------------------

def synth_chirp_frame(params: RadarParams, subband: int) -> ChirpTrain:
    """Unit-amplitude baseband samples of one frame of triangular chirps.

    The subband enters only via the carrier, which mixing removes; it is kept
    as metadata. The baseband phase ramps at rate B/Tc up on [0, Tc) and down
    on [Tc, 2Tc), repeated across the frame.
    """
    if not 0 <= subband < params.n_subbands:
        raise ValueError(f"subband {subband} not in [0, {params.n_subbands})")
    samples = synth_tx(params.frame_samples, params.sample_rate,
                       params.bandwidth, params.chirp_interval)
    return ChirpTrain(samples, subband, params.chirp_interval, params.sample_rate)


def synth_received(params: RadarParams, tx: ChirpTrain,
                   echoes, interferers, rng: np.random.Generator) -> np.ndarray:
    """Received baseband samples: echoes + interference + circular noise.

    Echoes are two-way (delay 2(D - vt)/c); interference is one-way
    ((D' - v't)/c) with the interferer's own chirp rate. Noise has total
    power sigma2 (split across I/Q).
    """
    e = np.array([[s.range_m, s.radial_velocity, s.rx_power] for s in echoes],
                 dtype=np.float64).reshape(len(echoes), 3)
    i = np.array([[s.distance, s.relative_velocity, s.rx_power, s.chirp_interval]
                  for s in interferers], dtype=np.float64).reshape(len(interferers), 4)
    if np.any(e[:, 2] < 0) or np.any(i[:, 2] < 0):
        raise ValueError("received powers must be non-negative")
    n = len(tx.samples)
    fm = params.carrier(tx.subband)
    out = synth_rx(n, params.sample_rate, params.bandwidth,
                   params.chirp_interval, fm, e, i)
    if params.noise_power > 0:
        s = math.sqrt(params.noise_power / 2.0)
        out = out + rng.normal(0.0, s, n) + 1j * rng.normal(0.0, s, n)
    return out


def mix_and_spectrum(params: RadarParams, rx: np.ndarray, tx: ChirpTrain,
                     window: str = "none"):
    """Dechirp and transform: returns (up_spectrum, down_spectrum).

    The received signal is mixed with the conjugate transmit replica; the
    first up-chirp window [0, Tc) and down-chirp window [Tc, 2Tc) are each
    zero-padded to Mf points and transformed (unnormalized FFT).

    ``window="hann"`` applies a Hann taper before the transform; use it for
    peak detection (it suppresses the rectangular window's -13 dB sidelobes).
    The noise-estimation path must use ``"none"`` to match the N_IF
    calibration.
    """
    if len(rx) != len(tx.samples):
        raise ValueError("rx and tx length mismatch")
    mixed = rx * np.conj(tx.samples)
    nh = params.half_samples
    mf = params.fft_size
    if window == "hann":
        taper = np.hanning(nh)
    elif window == "none":
        taper = None
    else:
        raise ValueError(f"unknown window {window!r}")
    up_td = mixed[:nh]
    down_td = mixed[nh:2 * nh]
    if taper is not None:
        up_td = up_td * taper
        down_td = down_td * taper
    up = np.fft.fft(up_td, mf)
    down = np.fft.fft(down_td, mf)
    dfreq = params.sample_rate / mf
    return SpectrumSamples(up, dfreq), SpectrumSamples(down, dfreq)


# ---------------------------------------------------------------------------
# Beat-frequency algebra
# ---------------------------------------------------------------------------

def beat_frequencies(params: RadarParams, range_m: float, velocity: float,
                     subband: int = 0):
    """(f_up, f_down) of a two-way echo at range D, radial velocity v."""
    if range_m < 0:
        raise ValueError("range must be non-negative")
    fm = params.carrier(subband)
    delay_term = params.chirp_rate * 2.0 * range_m / C_LIGHT
    doppler = 2.0 * velocity / C_LIGHT * fm
    return -delay_term + doppler, delay_term + doppler


def interferer_beat_frequencies(params: RadarParams, distance: float,
                                velocity: float, subband: int = 0):
    """(f'_up, f'_down) ghost peaks of a coherent (same chirp rate),
    one-way interferer."""
    fm = params.carrier(subband)
    delay_term = params.chirp_rate * distance / C_LIGHT
    doppler = velocity / C_LIGHT * fm
    return -delay_term + doppler, delay_term + doppler


def invert_beats(params: RadarParams, f_up: float, f_down: float,
                 subband: int = 0):
    """Algebraic inverse of beat_frequencies: (range, velocity)."""
    fm = params.carrier(subband)
    range_m = (f_down - f_up) * C_LIGHT * params.chirp_interval / (4.0 * params.bandwidth)
    velocity = (f_up + f_down) * C_LIGHT / (4.0 * fm)
    return range_m, velocity


def range_resolution(params: RadarParams) -> float:
    """Range change that moves a beat peak by one FFT bin."""
    dfreq = params.sample_rate / params.fft_size
    return C_LIGHT * params.chirp_interval * dfreq / (2.0 * params.bandwidth)


def velocity_resolution(params: RadarParams, subband: int = 0) -> float:
    """Velocity change that moves a beat peak by one FFT bin."""
    dfreq = params.sample_rate / params.fft_size
    return C_LIGHT * dfreq / (2.0 * params.carrier(subband))


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------

def _find_peaks(spec: SpectrumSamples, params: RadarParams,
                neighborhood: int | None = None):
    """(frequency, power) of neighborhood-maxima above the CFAR-style threshold.

    A bin qualifies if it exceeds the threshold (cfar_factor x mean of the
    non-discarded bins) and is the maximum within +-neighborhood bins
    (circularly). The default neighborhood spans ~1.5 zero-padded mainlobe
    widths, which rejects window sidelobes of a dominant return; targets
    closer than that in beat frequency merge into one peak.
    """
    power = np.abs(spec.bins) ** 2
    mf = len(power)
    k = min(params.discard_count, mf - 1)
    floor = np.mean(np.sort(power)[: mf - k]) if k else np.mean(power)
    thresh = params.cfar_factor * floor
    if neighborhood is None:
        neighborhood = max(1, (6 * mf) // max(params.half_samples, 1))
    freqs = spec.frequencies
    out = []
    for m in np.flatnonzero(power > thresh):
        idx = (np.arange(m - neighborhood, m + neighborhood + 1)) % mf
        if power[m] >= np.max(power[idx]):
            out.append((float(freqs[m]), float(power[m])))
    return out


MAX_DETECT_SPEED = 80.0     # m/s, plausibility bound used when pairing peaks


def detect_targets(up_spec: SpectrumSamples, down_spec: SpectrumSamples,
                   params: RadarParams, subband: int = 0):
    """Pair up/down-chirp peaks and invert them to (range, velocity, power).

    A physical target satisfies f_up + f_down = 4 v f_m / c, so only pairs
    whose frequency sum maps to |v| <= MAX_DETECT_SPEED (and positive range)
    are considered. Pairs are taken greedily by descending combined power;
    each peak is used at most once; leftovers are dropped.
    """
    ups = _find_peaks(up_spec, params)
    downs = _find_peaks(down_spec, params)
    fm = params.carrier(subband)
    max_sum = 4.0 * MAX_DETECT_SPEED * fm / C_LIGHT
    candidates = []
    for i, (fu, pu) in enumerate(ups):
        for j, (fd, pd) in enumerate(downs):
            if abs(fu + fd) <= max_sum and fd > fu:
                candidates.append((pu + pd, i, j, fu, fd))
    candidates.sort(reverse=True)
    used_u, used_d = set(), set()
    out = []
    for pw, i, j, fu, fd in candidates:
        if i in used_u or j in used_d:
            continue
        used_u.add(i)
        used_d.add(j)
        d, v = invert_beats(params, fu, fd, subband)
        out.append((d, v, 0.5 * pw))
    out.sort(key=lambda t: -t[2])
    return out


# ---------------------------------------------------------------------------
# Interference power geometry
# ---------------------------------------------------------------------------

def antenna_pattern(theta: float, beamwidth: float) -> float:
    """Gaussian mainlobe normalized to 1 at boresight; 0.5 at +-beamwidth/2."""
    if beamwidth <= 0:
        raise ValueError("beamwidth must be positive")
    return math.exp(-4.0 * math.log(2.0) * (theta / beamwidth) ** 2)


def interference_power_cross_lane(params: RadarParams, d: float) -> float:
    """Received power from a facing LRR in the other lane at axial distance d.

    P_I = P_L G Ae g / (4 pi (L^2 + d^2)) * p_r(arctan(L/d))^2
    """
    if d < 0:
        raise ValueError("distance must be non-negative")
    lane = params.lane_gap
    theta = math.atan2(lane, d)
    pr = antenna_pattern(theta, params.beamwidth)
    return (params.tx_power_lrr * params.antenna_gain * params.effective_area
            * params.decay / (4.0 * math.pi * (lane * lane + d * d)) * pr * pr)


def interference_power_same_lane(params: RadarParams, d: float) -> float:
    """Received power from the rear SRR of the car d metres ahead.

    P_I = P_S G Ae g / (4 pi d^2)
    """
    if d <= 0:
        raise ValueError("distance must be positive")
    return (params.tx_power_srr * params.antenna_gain * params.effective_area
            * params.decay / (4.0 * math.pi * d * d))


# ---------------------------------------------------------------------------
# Noise-level estimation
# ---------------------------------------------------------------------------

def estimate_noise_level(spec: SpectrumSamples, discard: int) -> float:
    """Ordered-statistics spectral noise estimate N_hat_I.

    Sort bin magnitudes descending, discard the `discard` largest, and return
    (Mf / (Mf - K)) * sum |R_m|^2 * Δf over the rest.
    """
    mf = len(spec.bins)
    if not 0 <= discard < mf:
        raise ValueError("need 0 <= K < Mf")
    power = np.sort(np.abs(spec.bins) ** 2)[::-1]
    return mf / (mf - discard) * float(np.sum(power[discard:])) * spec.bin_width


def relative_noise_level(n_hat: float, n_if: float) -> float:
    """eta = N_hat_I / N_IF."""
    if n_if <= 0:
        raise ValueError("interference-free level must be positive")
    return n_hat / n_if


@functools.lru_cache(maxsize=32)
def _n_if_unit(half_samples: int, fft_size: int, discard: int,
               sample_rate: float) -> float:
    """Expected noise estimate of the pipeline for sigma^2 = 1 W.

    Seeded Monte-Carlo over noise-only windows; deterministic per
    configuration, linear in sigma^2 by construction.
    """
    rng = np.random.default_rng(0x5EED_01F)
    trials = 256
    s = math.sqrt(0.5)
    dfreq = sample_rate / fft_size
    acc = 0.0
    for _ in range(trials):
        noise = rng.normal(0.0, s, half_samples) + 1j * rng.normal(0.0, s, half_samples)
        bins = np.fft.fft(noise, fft_size)
        power = np.sort(np.abs(bins) ** 2)[::-1]
        acc += fft_size / (fft_size - discard) * float(np.sum(power[discard:])) * dfreq
    return acc / trials


def interference_free_level(params: RadarParams) -> float:
    """Calibrated N_IF for the configured pipeline and noise power."""
    return params.noise_power * _n_if_unit(
        params.half_samples, params.fft_size, params.discard_count,
        params.sample_rate)


# ---------------------------------------------------------------------------
# Piecewise-LFM interference spectrum approximation
# ---------------------------------------------------------------------------

def _tri_freq(t: float, bandwidth: float, tc: float) -> float:
    """Instantaneous frequency of the triangular chirp (0..B..0, period 2Tc)."""
    tm = t % (2.0 * tc)
    if tm < tc:
        return bandwidth / tc * tm
    return bandwidth / tc * (2.0 * tc - tm)


def _tri_rate(t: float, bandwidth: float, tc: float) -> float:
    tm = t % (2.0 * tc)
    return bandwidth / tc if tm < tc else -bandwidth / tc


def piecewise_if_segments(tc_working: float, tc_interfering: float,
                          frame: float, bandwidth: float = 200e6):
    """Split the dechirped-interference instantaneous frequency into LFM pieces.

    Returns a list of (t_start, t_end, f_start, f_end, slope): the frequency
    difference between the working radar's triangular chirp and the
    interferer's, broken at every chirp-rate breakpoint of either waveform.
    """
    if tc_working <= 0 or tc_interfering <= 0:
        raise ValueError("chirp intervals must be positive")
    if math.isclose(tc_working, tc_interfering):
        raise ValueError("equal chirp intervals are the coherent case; "
                         "use beat_frequencies instead")
    cuts = set()
    for tc in (tc_working, tc_interfering):
        k = 1
        while k * tc < frame - 1e-15:
            cuts.add(round(k * tc, 15))
            k += 1
    edges = [0.0] + sorted(cuts) + [frame]
    segs = []
    for t0, t1 in zip(edges[:-1], edges[1:]):
        if t1 - t0 <= 1e-15:
            continue
        tm = 0.5 * (t0 + t1)
        slope = (_tri_rate(tm, bandwidth, tc_interfering)
                 - _tri_rate(tm, bandwidth, tc_working))
        f0 = (_tri_freq(t0 + 1e-15, bandwidth, tc_interfering)
              - _tri_freq(t0 + 1e-15, bandwidth, tc_working))
        f1 = f0 + slope * (t1 - t0)
        segs.append((t0, t1, f0, f1, slope))
    return segs


def approx_interference_spectrum(segments, n_grid: int = 2048):
    """Piecewise-constant magnitude envelope of the dechirped interference.

    Each linear-FM piece of slope k contributes a rectangle of height
    1/sqrt(|k|) over its swept band (unit-amplitude interferer; scale by
    sqrt(P_I) for power). Zero-slope pieces are returned separately as
    flagged Dirac contributions at their constant frequency.

    Returns (freq_grid, envelope, diracs) where diracs is a list of
    (frequency, duration).
    """
    rects = []
    diracs = []
    for (t0, t1, f0, f1, slope) in segments:
        if slope == 0.0:
            diracs.append((f0, t1 - t0))
            continue
        lo, hi = (f0, f1) if f0 <= f1 else (f1, f0)
        rects.append((lo, hi, 1.0 / math.sqrt(abs(slope))))
    if not rects and not diracs:
        raise ValueError("no segments")
    los = [r[0] for r in rects] + [d[0] for d in diracs]
    his = [r[1] for r in rects] + [d[0] for d in diracs]
    fmin, fmax = min(los), max(his)
    span = max(fmax - fmin, 1.0)
    grid = np.linspace(fmin - 0.01 * span, fmax + 0.01 * span, n_grid)
    env = np.zeros(n_grid)
    for lo, hi, h in rects:
        env[(grid >= lo) & (grid <= hi)] += h
    return grid, env, diracs


def segment_envelope_power(segments) -> float:
    """Sum of per-segment rectangle powers (height^2 x width), the Parseval
    counterpart of the time-domain energy of a unit-amplitude interferer."""
    total = 0.0
    for (t0, t1, f0, f1, slope) in segments:
        if slope == 0.0:
            total += t1 - t0   # constant tone: energy = duration
        else:
            total += abs(f1 - f0) / abs(slope)
    return total


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def export_spectrum_csv(spec: SpectrumSamples, path) -> None:
    """Write (bin_index, frequency_hz, magnitude) rows."""
    freqs = spec.frequencies
    mags = np.abs(spec.bins)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_index", "frequency_hz", "magnitude"])
        for m in range(len(mags)):
            w.writerow([m, repr(float(freqs[m])), repr(float(mags[m]))])
