"""Source-signal synthesis and conditioning.

Provides the two test signals fed to the encoder (an impedance-cytometry
pulse train and a skin-conductance drift trace), a behavioral lock-in
front-end that recovers pulse envelopes from a carrier-excited sensor
signal, and linear rescaling into encoder input ranges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .errors import ConfigError


@dataclass(frozen=True)
class SourceTrace:
    """Uniformly sampled real-valued signal.

    sample_period is in seconds; samples must be finite and non-empty.
    """

    sample_period: float
    samples: np.ndarray
    unit_label: str = "V"

    def __post_init__(self):
        if not self.sample_period > 0:
            raise ConfigError(f"sample_period must be > 0, got {self.sample_period}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ConfigError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ConfigError("samples must all be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.sample_period

    @property
    def duration(self) -> float:
        return self.samples.size * self.sample_period


@dataclass(frozen=True)
class CytometrySynthSpec:
    """Synthetic bead-pulse train: Poisson arrivals of Gaussian pulses.

    pulse_width is the nominal footprint of one pulse (the Gaussian sigma is
    pulse_width / 6 so the bump decays inside the footprint).  Peak values
    are drawn from N(peak_amplitude_mean, peak_amplitude_sd) and floored at
    the baseline.
    """

    pulse_rate: float = 10.0
    pulse_width: float = 0.02
    peak_amplitude_mean: float = 1.2
    peak_amplitude_sd: float = 0.15
    # A zero baseline would park the inter-pulse encoding exactly on the
    # fold corners of the mapping, where any receiver noise flips the
    # decoded level; real front-ends always carry a small offset and enough
    # noise to dither the receiver's frequency grid.
    baseline: float = 0.1
    noise_sd: float = 0.03

    def __post_init__(self):
        if not self.pulse_width > 0:
            raise ConfigError(f"pulse_width must be > 0, got {self.pulse_width}")
        if self.pulse_rate < 0:
            raise ConfigError(f"pulse_rate must be >= 0, got {self.pulse_rate}")
        if not self.baseline >= 0:
            raise ConfigError(f"baseline must be >= 0, got {self.baseline}")
        if not self.peak_amplitude_mean > self.baseline:
            raise ConfigError("peak_amplitude_mean must exceed baseline")
        if self.pulse_rate * self.pulse_width >= 1.0:
            raise ConfigError("pulse_rate * pulse_width must be < 1 (sparse pulses)")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0")


@dataclass(frozen=True)
class GsrSynthSpec:
    """Synthetic skin-conductance trace: bounded slow drift plus events.

    The drift is low-pass-filtered white noise squashed through a logistic
    map so the trace always stays inside (0, conductance_max).  Events are
    bi-exponential transients (fast rise, slow decay) added in the squashed
    domain.  conductance_max is in inverse megaohms.
    """

    conductance_max: float = 2.6
    drift_bandwidth: float = 0.3
    event_rate: float = 0.1
    drift_scale: float = 1.0
    event_amplitude: float = 1.0
    event_rise: float = 0.5
    event_decay: float = 3.0

    def __post_init__(self):
        if not self.conductance_max > 0:
            raise ConfigError(f"conductance_max must be > 0, got {self.conductance_max}")
        if self.drift_bandwidth < 0 or self.event_rate < 0:
            raise ConfigError("drift_bandwidth and event_rate must be >= 0")
        if self.event_rise <= 0 or self.event_decay <= self.event_rise:
            raise ConfigError("need 0 < event_rise < event_decay")


@dataclass(frozen=True)
class FrontEndSpec:
    """Behavioral lock-in detector: excitation frequency, low-pass, gain."""

    excitation_frequency: float = 500e3
    lowpass_cutoff: float = 10e3
    gain: float = 1.0

    def __post_init__(self):
        if not self.excitation_frequency > 0:
            raise ConfigError("excitation_frequency must be > 0")
        if not 0 < self.lowpass_cutoff < self.excitation_frequency:
            raise ConfigError("lowpass_cutoff must be in (0, excitation_frequency)")


def cytometry_schedule(
    spec: CytometrySynthSpec, duration: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw the seeded event schedule used by gen_cytometry.

    Returns (times, peak_values).  Arrivals are Poisson with a minimum
    separation of 2 * pulse_width enforced by rejection; the count therefore
    equals the seeded Poisson draw minus rejected collisions.
    """
    rng = np.random.default_rng(seed)
    if spec.pulse_rate == 0 or duration <= 0:
        return np.empty(0), np.empty(0)
    n_raw = rng.poisson(spec.pulse_rate * duration)
    raw_times = np.sort(rng.uniform(0.0, duration, size=n_raw))
    min_sep = 2.0 * spec.pulse_width
    times = []
    for t in raw_times:
        if not times or t - times[-1] >= min_sep:
            times.append(t)
    times = np.asarray(times)
    peaks = rng.normal(spec.peak_amplitude_mean, spec.peak_amplitude_sd, size=times.size)
    peaks = np.maximum(peaks, spec.baseline)
    return times, peaks


def gen_cytometry(
    spec: CytometrySynthSpec, duration: float, sample_period: float, seed: int
) -> SourceTrace:
    """Synthesize a cytometry pulse train.

    Gaussian pulses on a constant baseline plus white noise; deterministic
    for a fixed seed.  duration must cover at least 10 pulse widths.
    """
    if sample_period <= 0:
        raise ConfigError(f"sample_period must be > 0, got {sample_period}")
    if duration < 10 * spec.pulse_width:
        raise ConfigError("duration must be >= 10 * pulse_width")
    n = int(round(duration / sample_period))
    t = np.arange(n) * sample_period
    values = np.full(n, spec.baseline)

    times, peaks = cytometry_schedule(spec, duration, seed)
    sigma = spec.pulse_width / 6.0
    for t0, pk in zip(times, peaks):
        lo = max(0, int((t0 - 5 * sigma) / sample_period))
        hi = min(n, int((t0 + 5 * sigma) / sample_period) + 1)
        if hi <= lo:
            continue
        seg = t[lo:hi]
        values[lo:hi] += (pk - spec.baseline) * np.exp(-0.5 * ((seg - t0) / sigma) ** 2)

    if spec.noise_sd > 0:
        # Noise stream drawn after the schedule so the schedule is stable
        # under noise_sd changes.
        noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        values = values + noise_rng.normal(0.0, spec.noise_sd, size=n)
    return SourceTrace(sample_period, values)


def _drift_process(n: int, sample_period: float, bandwidth: float, rng) -> np.ndarray:
    """Unit-variance low-pass noise; zeros when bandwidth is 0."""
    if bandwidth == 0 or n < 16:
        return np.zeros(n)
    nyq = 0.5 / sample_period
    if bandwidth >= 0.25 / sample_period:
        raise ConfigError("drift_bandwidth too high for the sample grid")
    white = rng.standard_normal(n + n // 2)
    sos = sp_signal.butter(4, bandwidth / nyq, btype="low", output="sos")
    filtered = sp_signal.sosfilt(sos, white)[-n:]  # leading tail discarded as warm-up
    std = filtered.std()
    if std == 0:
        return np.zeros(n)
    return (filtered - filtered.mean()) / std


def gen_gsr(
    spec: GsrSynthSpec, duration: float, sample_period: float, seed: int
) -> SourceTrace:
    """Synthesize a skin-conductance trace bounded by conductance_max.

    Deterministic for a fixed seed; with drift_bandwidth = 0 and
    event_rate = 0 the output is constant at conductance_max / 2.
    """
    if duration <= 0 or sample_period <= 0:
        raise ConfigError("duration and sample_period must be > 0")
    rng = np.random.default_rng(seed)
    n = max(1, int(round(duration / sample_period)))
    t = np.arange(n) * sample_period

    z = spec.drift_scale * _drift_process(n, sample_period, spec.drift_bandwidth, rng)

    if spec.event_rate > 0:
        n_events = rng.poisson(spec.event_rate * duration)
        event_times = np.sort(rng.uniform(0.0, duration, size=n_events))
        amps = spec.event_amplitude * rng.exponential(1.0, size=n_events)
        for t0, a in zip(event_times, amps):
            dt = t - t0
            mask = dt >= 0
            shape = np.exp(-dt[mask] / spec.event_decay) - np.exp(-dt[mask] / spec.event_rise)
            peak = shape.max() if shape.size else 0.0
            if peak > 0:
                z[mask] += a * shape / peak

    conductance = spec.conductance_max / (1.0 + np.exp(-z))
    return SourceTrace(sample_period, conductance, unit_label="1/Mohm")


def lockin_frontend(
    resistance_pulse_trace: SourceTrace,
    spec: FrontEndSpec,
    output_sample_period: float | None = None,
) -> SourceTrace:
    """Behavioral lock-in detection of a resistance-pulse envelope.

    The input envelope is placed on a cosine carrier at the excitation
    frequency, mixed with a synchronous cosine, and low-pass filtered
    (zero-phase), which recovers gain * envelope / 2.  The output may be
    decimated onto a coarser grid via output_sample_period.
    """
    fs = 1.0 / resistance_pulse_trace.sample_period
    f0 = spec.excitation_frequency
    if fs < 4 * f0:
        raise ValueError(f"trace sample rate {fs:.3g} Hz is below 4*f0 = {4 * f0:.3g} Hz")

    t = resistance_pulse_trace.times
    carrier = np.cos(2 * np.pi * f0 * t)
    mixed = resistance_pulse_trace.samples * carrier * carrier
    sos = sp_signal.butter(4, spec.lowpass_cutoff / (0.5 * fs), btype="low", output="sos")
    out = spec.gain * sp_signal.sosfiltfilt(sos, mixed)

    period = resistance_pulse_trace.sample_period
    if output_sample_period is not None:
        factor = int(round(output_sample_period / period))
        if factor < 1 or abs(factor * period - output_sample_period) > 1e-9 * output_sample_period:
            raise ConfigError("output_sample_period must be an integer multiple of the input period")
        out = out[::factor]
        period = output_sample_period
    return SourceTrace(period, out, unit_label=resistance_pulse_trace.unit_label)


def lowpass_response(spec: FrontEndSpec, sample_rate: float, freqs: np.ndarray) -> np.ndarray:
    """Magnitude response of the front-end's zero-phase low-pass at freqs."""
    sos = sp_signal.butter(4, spec.lowpass_cutoff / (0.5 * sample_rate), btype="low", output="sos")
    _, h = sp_signal.sosfreqz(sos, worN=np.asarray(freqs, dtype=float), fs=sample_rate)
    return np.abs(h) ** 2  # applied forward and backward


def rescale(
    trace: SourceTrace, in_lo: float, in_hi: float, out_lo: float, out_hi: float
) -> SourceTrace:
    """Affine map [in_lo, in_hi] -> [out_lo, out_hi] with clamping outside."""
    if not in_hi > in_lo:
        raise ConfigError(f"degenerate input range [{in_lo}, {in_hi}]")
    if not out_hi > out_lo:
        raise ConfigError(f"degenerate output range [{out_lo}, {out_hi}]")
    clamped = np.clip(trace.samples, in_lo, in_hi)
    scaled = out_lo + (clamped - in_lo) * (out_hi - out_lo) / (in_hi - in_lo)
    return SourceTrace(trace.sample_period, scaled, unit_label=trace.unit_label)


def write_trace_csv(trace: SourceTrace, path) -> None:
    """Write a trace as CSV with header t_seconds,value (LF line endings)."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t_seconds,value\n")
        for i, v in enumerate(trace.samples):
            fh.write(f"{float(i * trace.sample_period)!r},{float(v)!r}\n")


def read_trace_csv(path, unit_label: str = "V") -> SourceTrace:
    """Read a trace written by write_trace_csv; infers the sample period."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] < 2:
        raise ConfigError(f"{path}: need at least two samples to infer the period")
    t, values = data[:, 0], data[:, 1]
    periods = np.diff(t)
    period = float(periods[0])
    if not np.allclose(periods, period, rtol=1e-6, atol=1e-12):
        raise ConfigError(f"{path}: time base is not uniform")
    return SourceTrace(period, values, unit_label=unit_label)
