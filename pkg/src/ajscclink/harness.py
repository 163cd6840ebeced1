"""Run orchestration: single link runs, level sweeps, figure reproduction.

A run executes generate -> rescale -> encode -> modulate -> channel ->
demodulate -> decode -> filter -> metrics, deterministically for a given
(config, seed).  Sweeps derive one independent seed per point from the
master seed, the level count, and the channel family.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import pathlib
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import (
    KsResult,
    MsePair,
    PulseEvent,
    detect_peaks,
    ks_two_sample,
    median_filter,
    mse,
    threshold_filter,
    write_cdf_csv,
)
from .channel import ChannelSpec, load_profile, make_channel
from .codec import AjsccParams, decode, encode, staircase
from .errors import ConfigError, StageError
from .modem import (
    ModemConfig,
    block_start_phases,
    demodulate_stream,
    fast_profile,
    modulate,
    slow_profile,
    voltage_to_frequency,
)
from .sources import (
    CytometrySynthSpec,
    GsrSynthSpec,
    SourceTrace,
    gen_cytometry,
    gen_gsr,
    read_trace_csv,
    rescale,
)

SOURCE_SAMPLE_PERIOD = 1e-3
_CHUNK_SAMPLES = 4 << 20  # ~64 MB of complex128 per modulated chunk


@dataclass(frozen=True)
class AnalysisSettings:
    """Receiver-side cleanup and peak-detection knobs.

    None values resolve at run time: peak_min_height to 0.3 * x1_max,
    peak_min_separation to 2 * pulse_width, threshold to 0.1 * x1_max.

    The pulse channel is despiked (short median, width despike_width;
    1 disables) before MSE, and additionally threshold-filtered before peak
    detection so the inter-pulse floor cannot spawn events.  The slow
    channel is smoothed by a median of the given order (0 disables) before
    MSE.  Reference and estimate go through identical pipelines so the
    metrics compare like with like.
    """

    peak_min_height: float | None = None
    peak_min_separation: float | None = None
    threshold: float | None = None
    median_order: int = 200
    despike_width: int = 3


@dataclass(frozen=True)
class RunConfig:
    levels: int = 30
    duration: float = 30.0
    seed: int = 1
    profile: str = "fast"
    channel_family: str = "awgn"
    csnr_db: float = float("inf")
    doppler_hz: float | None = None
    tap_profile_path: str | None = None
    x1_max: float = 2.25
    x2_max: float = 3.0
    level_height: float | None = None
    cytometry: CytometrySynthSpec = field(default_factory=CytometrySynthSpec)
    gsr: GsrSynthSpec = field(default_factory=GsrSynthSpec)
    cytometry_path: str | None = None
    gsr_path: str | None = None
    x1_input_range: tuple[float, float] | None = None
    x2_input_range: tuple[float, float] | None = None
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    interpolate: bool = True

    def __post_init__(self):
        if self.profile not in ("fast", "slow"):
            raise ConfigError(f"profile must be 'fast' or 'slow', got {self.profile!r}")
        if self.duration <= 0:
            raise ConfigError("duration must be > 0")

    def ajscc_params(self) -> AjsccParams:
        return AjsccParams(
            levels=self.levels,
            x1_max=self.x1_max,
            x2_max=self.x2_max,
            level_height=self.level_height,
        )

    def modem_config(self) -> ModemConfig:
        return fast_profile() if self.profile == "fast" else slow_profile()


@dataclass(frozen=True)
class RunReport:
    config: RunConfig
    mse: MsePair
    source_peaks: list[PulseEvent]
    receiver_peaks: list[PulseEvent]
    ks: KsResult | None
    n_blocks: int
    wall_time_s: float
    version: str = __version__


def derive_seed(master_seed: int, levels: int, family: str) -> int:
    """Stable per-run seed from (master seed, L, channel family)."""
    digest = hashlib.sha256(f"{master_seed}:{levels}:{family}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _load_or_generate_sources(config: RunConfig, seeds) -> tuple[SourceTrace, SourceTrace]:
    cyt_seed, gsr_seed = seeds
    try:
        if config.cytometry_path is not None:
            cyt = read_trace_csv(config.cytometry_path)
        else:
            cyt = gen_cytometry(config.cytometry, config.duration, SOURCE_SAMPLE_PERIOD, cyt_seed)
        if config.gsr_path is not None:
            gsr = read_trace_csv(config.gsr_path, unit_label="1/Mohm")
        else:
            gsr = gen_gsr(config.gsr, config.duration, SOURCE_SAMPLE_PERIOD, gsr_seed)
    except FileNotFoundError as exc:
        raise ConfigError(f"referenced trace file not found: {exc.filename}") from exc
    n = min(cyt.samples.size, gsr.samples.size)
    if cyt.samples.size != gsr.samples.size:
        cyt = SourceTrace(cyt.sample_period, cyt.samples[:n], cyt.unit_label)
        gsr = SourceTrace(gsr.sample_period, gsr.samples[:n], gsr.unit_label)
    return cyt, gsr


def _input_ranges(config: RunConfig) -> tuple[tuple[float, float], tuple[float, float]]:
    r1 = config.x1_input_range
    if r1 is None:
        spec = config.cytometry
        r1 = (0.0, spec.baseline + spec.peak_amplitude_mean + 3 * spec.peak_amplitude_sd)
    r2 = config.x2_input_range
    if r2 is None:
        r2 = (0.0, config.gsr.conductance_max)
    return tuple(r1), tuple(r2)


def _resolved_analysis(config: RunConfig) -> tuple[float, float, float, int, int]:
    a = config.analysis
    min_height = a.peak_min_height if a.peak_min_height is not None else 0.3 * config.x1_max
    min_sep = (
        a.peak_min_separation
        if a.peak_min_separation is not None
        else 2.0 * config.cytometry.pulse_width
    )
    threshold = a.threshold if a.threshold is not None else 0.1 * config.x1_max
    return min_height, min_sep, threshold, a.median_order, a.despike_width


def _despike(trace: SourceTrace, despike_width: int) -> SourceTrace:
    if despike_width > 1:
        return median_filter(trace, despike_width - 1)
    return trace


def _transmit(
    encoded: np.ndarray, full_scale: float, cfg: ModemConfig, channel, interpolate: bool
) -> np.ndarray:
    """Modulate, fade, and demodulate a whole encoded stream in chunks."""
    encoded = np.atleast_1d(encoded)
    freqs = np.atleast_1d(voltage_to_frequency(encoded, full_scale, cfg))
    phases = block_start_phases(freqs, cfg)
    chunk = max(1, _CHUNK_SAMPLES // cfg.fft_size)
    out = np.empty(freqs.size)
    for lo in range(0, freqs.size, chunk):
        hi = min(lo + chunk, freqs.size)
        blocks = modulate(encoded[lo:hi], full_scale, cfg, start_phase=phases[lo])
        blocks = channel.process(blocks, start_block=lo)
        out[lo:hi] = demodulate_stream(blocks, full_scale, cfg, interpolate=interpolate)
    return out


def run_link(config: RunConfig) -> RunReport:
    """Execute one full link simulation and collect metrics."""
    t_start = time.perf_counter()
    params = config.ajscc_params()
    cfg = config.modem_config()
    cyt_seed, gsr_seed, channel_seed = (
        int(s.generate_state(1)[0]) for s in np.random.SeedSequence(config.seed).spawn(3)
    )

    try:
        cyt, gsr = _load_or_generate_sources(config, (cyt_seed, gsr_seed))
    except ConfigError:
        raise
    except Exception as exc:
        raise StageError("generate", str(exc)) from exc

    (x1_lo, x1_hi), (x2_lo, x2_hi) = _input_ranges(config)
    try:
        x1_ref = rescale(cyt, x1_lo, x1_hi, 0.0, params.x1_max)
        x2_ref = rescale(gsr, x2_lo, x2_hi, 0.0, params.x2_max)
    except Exception as exc:
        raise StageError("rescale", str(exc)) from exc

    # One encoded sample per FFT block: sample-and-hold the sources at the
    # block rate (factor 1 for the fast profile, 10 for the slow one).
    ratio = int(round(cfg.block_period / x1_ref.sample_period))
    n_blocks = x1_ref.samples.size // ratio
    if n_blocks == 0:
        raise ConfigError("duration too short for one FFT block")
    x1_in = x1_ref.samples[: n_blocks * ratio : ratio]
    x2_in = x2_ref.samples[: n_blocks * ratio : ratio]

    try:
        encoded = np.atleast_1d(encode(x1_in, x2_in, params))
    except Exception as exc:
        raise StageError("encode", str(exc)) from exc

    try:
        spec = ChannelSpec(
            family=config.channel_family,
            csnr_db=config.csnr_db,
            doppler_hz=config.doppler_hz,
            tap_profile=None,
            seed=channel_seed,
        )
        if config.tap_profile_path is not None:
            spec = dataclasses.replace(spec, tap_profile=load_profile(config.tap_profile_path))
        channel = make_channel(spec.resolved(), cfg.sample_rate, cfg.fft_size)
    except ConfigError:
        raise
    except Exception as exc:
        raise StageError("channel-setup", str(exc)) from exc

    try:
        decoded_v = _transmit(encoded, params.full_scale, cfg, channel, config.interpolate)
    except Exception as exc:
        raise StageError("transmit", str(exc)) from exc

    try:
        x1_hat, x2_hat = decode(decoded_v, params)
    except Exception as exc:
        raise StageError("decode", str(exc)) from exc

    block_period = cfg.block_period
    x1_ref_t = SourceTrace(block_period, x1_in)
    x2_ref_t = SourceTrace(block_period, x2_in)
    x1_est_t = SourceTrace(block_period, x1_hat)
    x2_est_t = SourceTrace(block_period, x2_hat)

    min_height, min_sep, threshold, median_order, despike = _resolved_analysis(config)
    try:
        x1_ref_f = _despike(x1_ref_t, despike)
        x1_est_f = _despike(x1_est_t, despike)
        x1_ref_p = threshold_filter(x1_ref_f, threshold)
        x1_est_p = threshold_filter(x1_est_f, threshold)
        if median_order:
            x2_ref_f = median_filter(x2_ref_t, median_order)
            x2_est_f = median_filter(x2_est_t, median_order)
        else:
            x2_ref_f, x2_est_f = x2_ref_t, x2_est_t
    except Exception as exc:
        raise StageError("filter", str(exc)) from exc

    try:
        pair = MsePair(mse_x1=mse(x1_ref_f, x1_est_f), mse_x2=mse(x2_ref_f, x2_est_f))
        src_peaks = detect_peaks(x1_ref_p, min_height, min_sep)
        rx_peaks = detect_peaks(x1_est_p, min_height, min_sep)
        ks = None
        if len(src_peaks) >= 5 and len(rx_peaks) >= 5:
            ks = ks_two_sample(
                [p.peak_value for p in src_peaks], [p.peak_value for p in rx_peaks]
            )
    except Exception as exc:
        raise StageError("metrics", str(exc)) from exc

    return RunReport(
        config=config,
        mse=pair,
        source_peaks=src_peaks,
        receiver_peaks=rx_peaks,
        ks=ks,
        n_blocks=n_blocks,
        wall_time_s=time.perf_counter() - t_start,
    )


def sweep_levels(config: RunConfig, l_values) -> list[RunReport]:
    """Run one link per level count, with independent derived seeds."""
    reports = []
    for levels in l_values:
        if levels < 2:
            raise ConfigError(f"levels must be >= 2, got {levels}")
        run_seed = derive_seed(config.seed, int(levels), config.channel_family)
        cfg = dataclasses.replace(config, levels=int(levels), seed=run_seed)
        reports.append(run_link(cfg))
    return reports


# ---------------------------------------------------------------------------
# Serialization


def _float_out(x):
    if isinstance(x, float) and np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _float_in(x):
    if isinstance(x, str):
        return float(x)
    return x


def config_to_dict(config: RunConfig) -> dict:
    d = dataclasses.asdict(config)
    d["csnr_db"] = _float_out(d["csnr_db"])
    return d


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    if "csnr_db" in d:
        d["csnr_db"] = _float_in(d["csnr_db"])
    if isinstance(d.get("cytometry"), dict):
        d["cytometry"] = CytometrySynthSpec(**d["cytometry"])
    if isinstance(d.get("gsr"), dict):
        d["gsr"] = GsrSynthSpec(**d["gsr"])
    if isinstance(d.get("analysis"), dict):
        d["analysis"] = AnalysisSettings(**d["analysis"])
    for key in ("x1_input_range", "x2_input_range"):
        if isinstance(d.get(key), list):
            d[key] = tuple(d[key])
    unknown = set(d) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def report_to_dict(report: RunReport) -> dict:
    return {
        "config": config_to_dict(report.config),
        "mse_x1": report.mse.mse_x1,
        "mse_x2": report.mse.mse_x2,
        "mse_sum": report.mse.total,
        "source_peaks": [[p.time, p.peak_value] for p in report.source_peaks],
        "receiver_peaks": [[p.time, p.peak_value] for p in report.receiver_peaks],
        "ks": None
        if report.ks is None
        else {
            "statistic": report.ks.statistic,
            "p_value": report.ks.p_value,
            "reject_at_5pct": report.ks.reject_at_5pct,
        },
        "n_blocks": report.n_blocks,
        "wall_time_s": report.wall_time_s,
        "version": report.version,
        "synthetic_sources": report.config.cytometry_path is None
        and report.config.gsr_path is None,
    }


def write_report_json(report: RunReport, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_sweep_csv(reports: list[RunReport], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("levels,mse_x1,mse_x2,mse_sum\n")
        for r in reports:
            fh.write(f"{r.config.levels},{r.mse.mse_x1!r},{r.mse.mse_x2!r},{r.mse.total!r}\n")


def write_staircase_csv(curve: np.ndarray, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("x2,encoded\n")
        for x2, enc in curve:
            fh.write(f"{float(x2)!r},{float(enc)!r}\n")


# ---------------------------------------------------------------------------
# Figure / table reproduction

EXPERIMENT_IDS = ("fig4", "fig5cdf", "fig6a", "fig6b", "fig7a", "fig7b", "fig7c", "table1")

_TABLE1_CHANNELS = (
    ("awgn", 0.0, None),
    ("flat_rayleigh", 0.0, None),
    ("jtc_indoor_a", 10.0, 5.0),
    ("jtc_outdoor_low_a", 10.0, 20.0),
)


def _reproduce_config(seed: int, duration: float, **overrides) -> RunConfig:
    base = dict(seed=seed, duration=duration)
    base.update(overrides)
    return RunConfig(**base)


def reproduce(
    experiment_id: str, out_dir, seed: int = 1, duration: float = 20.0, levels=None
) -> list:
    """Regenerate a figure or table dataset as CSV files in out_dir.

    Returns the list of written file paths.  Uses synthetic sources; sweeps
    and table rows follow the reference experiment layout.  levels narrows
    the sweep grid of the MSE figures (default 5..100 step 5); peak-CDF and
    K-S experiments want durations of 20 s or more for stable peak counts.
    """
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    if experiment_id == "fig4":
        params = AjsccParams(levels=16)
        curve = staircase(params, x1_fixed=params.x1_max / 2, n_points=4096)
        path = out / "fig4_staircase.csv"
        write_staircase_csv(curve, path)
        written.append(path)

    elif experiment_id == "fig5cdf":
        first = True
        for family, csnr, doppler in _TABLE1_CHANNELS:
            cfg = _reproduce_config(
                seed, duration, levels=30, channel_family=family, csnr_db=csnr, doppler_hz=doppler
            )
            report = run_link(cfg)
            if first:
                path = out / "fig5_cdf_source.csv"
                write_cdf_csv([p.peak_value for p in report.source_peaks], path)
                written.append(path)
                first = False
            path = out / f"fig5_cdf_{family}.csv"
            write_cdf_csv([p.peak_value for p in report.receiver_peaks], path)
            written.append(path)

    elif experiment_id in ("fig6a", "fig6b", "fig7a", "fig7b", "fig7c"):
        # The trade-off curves assume the raw FFT-bin readout; sub-bin
        # interpolation would push the noise floor far below it.
        setups = {
            "fig6a": dict(profile="fast", channel_family="awgn", csnr_db=0.0),
            "fig6b": dict(profile="slow", channel_family="awgn", csnr_db=0.0),
            "fig7a": dict(profile="fast", channel_family="jtc_indoor_a", csnr_db=0.0, doppler_hz=5.0),
            "fig7b": dict(
                profile="fast", channel_family="jtc_outdoor_low_a", csnr_db=0.0, doppler_hz=20.0
            ),
            "fig7c": dict(
                profile="fast", channel_family="jtc_outdoor_low_a", csnr_db=10.0, doppler_hz=20.0
            ),
        }
        cfg = _reproduce_config(seed, duration, interpolate=False, **setups[experiment_id])
        reports = sweep_levels(cfg, levels if levels is not None else range(5, 101, 5))
        path = out / f"{experiment_id}_mse_vs_levels.csv"
        write_sweep_csv(reports, path)
        written.append(path)

    elif experiment_id == "table1":
        path = out / "table1_ks.csv"
        with open(path, "w", newline="\n") as fh:
            fh.write(
                "case,channel,levels,csnr_db,doppler_hz,n_source_peaks,"
                "n_receiver_peaks,ks_statistic,p_value,reject_at_5pct\n"
            )
            case = 1
            for family, csnr, doppler in _TABLE1_CHANNELS:
                for levels in (30, 50):
                    cfg = _reproduce_config(
                        seed,
                        duration,
                        levels=levels,
                        channel_family=family,
                        csnr_db=csnr,
                        doppler_hz=doppler,
                    )
                    report = run_link(cfg)
                    ks = report.ks
                    if ks is None:
                        raise StageError("metrics", "too few peaks for the K-S test")
                    fh.write(
                        f"{case},{family},{levels},{csnr!r},{doppler if doppler is not None else 0.0!r},"
                        f"{len(report.source_peaks)},{len(report.receiver_peaks)},"
                        f"{ks.statistic!r},{ks.p_value!r},{int(ks.reject_at_5pct)}\n"
                    )
                    case += 1
        written.append(path)

    else:
        raise ConfigError(f"unknown experiment id {experiment_id!r}; expected one of {EXPERIMENT_IDS}")

    return written
