"""Post-decoding cleanup and evaluation statistics.

Threshold and median filters mirror the receiver-side cleanup of the
decoded traces; peak extraction, MSE, empirical CDFs, and the two-sample
Kolmogorov-Smirnov test support the evaluation methodology (distribution
comparison of pulse peaks at source and receiver).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy import signal as sp_signal

from .sources import SourceTrace


@dataclass(frozen=True)
class PulseEvent:
    time: float
    peak_value: float


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    reject_at_5pct: bool


@dataclass(frozen=True)
class MsePair:
    mse_x1: float
    mse_x2: float

    @property
    def total(self) -> float:
        return self.mse_x1 + self.mse_x2


def threshold_filter(trace: SourceTrace, threshold: float) -> SourceTrace:
    """Zero out values below the threshold; keep values at or above it."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    values = np.where(trace.samples < threshold, 0.0, trace.samples)
    return SourceTrace(trace.sample_period, values, unit_label=trace.unit_label)


def median_filter(trace: SourceTrace, order: int) -> SourceTrace:
    """Sliding median of window length order + 1, centered.

    order must be even and >= 2 so the window has a center sample; edges
    are handled by symmetric reflection.
    """
    if order < 2 or order % 2 != 0:
        raise ValueError(f"order must be an even integer >= 2, got {order}")
    if trace.samples.size <= order:
        raise ValueError(f"trace length {trace.samples.size} must exceed order {order}")
    values = ndimage.median_filter(trace.samples, size=order + 1, mode="reflect")
    return SourceTrace(trace.sample_period, values, unit_label=trace.unit_label)


def detect_peaks(
    trace: SourceTrace, min_height: float, min_separation: float
) -> list[PulseEvent]:
    """Local maxima at or above min_height, thinned to min_separation.

    Thinning is greedy by height: of any two maxima closer than
    min_separation, the smaller one is dropped.
    """
    if min_separation < trace.sample_period:
        raise ValueError("min_separation must be >= the trace sample period")
    distance = max(1, int(round(min_separation / trace.sample_period)))
    idx, props = sp_signal.find_peaks(trace.samples, height=min_height, distance=distance)
    return [
        PulseEvent(time=float(i * trace.sample_period), peak_value=float(v))
        for i, v in zip(idx, props["peak_heights"])
    ]


def mse(reference: SourceTrace, estimate: SourceTrace) -> float:
    """Mean squared difference between two aligned traces."""
    a, b = reference.samples, estimate.samples
    if a.size != b.size:
        raise ValueError(f"length mismatch: reference {a.size} vs estimate {b.size}")
    return float(np.mean((a - b) ** 2))


def empirical_cdf(values) -> np.ndarray:
    """Right-continuous ECDF as an (n_unique, 2) array of (value, prob)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empirical_cdf needs at least one value")
    uniq, counts = np.unique(values, return_counts=True)
    probs = np.cumsum(counts) / values.size
    return np.column_stack([uniq, probs])


def _ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    pooled = np.concatenate([a, b])
    pooled.sort(kind="mergesort")
    fa = np.searchsorted(np.sort(a), pooled, side="right") / a.size
    fb = np.searchsorted(np.sort(b), pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def _ks_p_value(lam: float, terms: int = 100) -> float:
    # Asymptotic Kolmogorov tail; the series degenerates for tiny lambda
    # where the p-value is 1 anyway.
    if lam < 1e-3:
        return 1.0
    i = np.arange(1, terms + 1)
    series = 2.0 * np.sum((-1.0) ** (i - 1) * np.exp(-2.0 * i**2 * lam**2))
    return float(min(1.0, max(0.0, series)))


def ks_two_sample(a, b, alpha: float = 0.05) -> KsResult:
    """Two-sample Kolmogorov-Smirnov test.

    D is the supremum ECDF gap over the pooled sample; the p-value uses the
    asymptotic Kolmogorov distribution with the small-sample correction
    lambda = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * D for effective size
    ne = |a||b| / (|a| + |b|).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 5 or b.size < 5:
        raise ValueError(f"need at least 5 samples per side, got {a.size} and {b.size}")
    d = _ks_statistic(a, b)
    ne = a.size * b.size / (a.size + b.size)
    lam = (np.sqrt(ne) + 0.12 + 0.11 / np.sqrt(ne)) * d
    p = _ks_p_value(lam)
    return KsResult(statistic=d, p_value=p, reject_at_5pct=bool(p < alpha))


def write_peaks_csv(peaks: list[PulseEvent], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("time,peak\n")
        for ev in peaks:
            fh.write(f"{ev.time!r},{ev.peak_value!r}\n")


def write_cdf_csv(values, path) -> None:
    cdf = empirical_cdf(values)
    with open(path, "w", newline="\n") as fh:
        fh.write("value,cdf\n")
        for v, p in cdf:
            fh.write(f"{float(v)!r},{float(p)!r}\n")
