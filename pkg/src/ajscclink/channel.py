"""Propagation impairments: AWGN, flat Rayleigh, and multipath fading.

Noise level is set by the channel signal-to-noise ratio (CSNR), the ratio
of channel-gain-weighted signal power to complex noise variance in dB.
Tap profiles normalize their mean power to one, so the noise variance is
always P_sig / 10^(csnr_db / 10); csnr_db = inf disables noise.

Fading taps evolve as Rayleigh processes with the classic isotropic-
scattering Doppler spectrum, realized by a randomized sum of sinusoids
(Zheng-Xiao parameterization).  Fading is quasi-static per FFT block: each
block is multiplied by the tap gains sampled at its start time, which is
accurate while the Doppler spread stays far below the block rate.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

FAMILIES = ("awgn", "flat_rayleigh", "jtc_indoor_a", "jtc_outdoor_low_a")
_DEFAULT_DOPPLER = {"jtc_indoor_a": 5.0, "jtc_outdoor_low_a": 20.0}
_BUILTIN_PROFILE_FILES = {
    "jtc_indoor_a": "jtc_indoor_residential_a.csv",
    "jtc_outdoor_low_a": "jtc_outdoor_residential_low_a.csv",
}


@dataclass(frozen=True)
class TapProfile:
    """Delay line taps: delays in seconds, mean powers normalized to sum 1."""

    delays: np.ndarray
    powers: np.ndarray
    name: str = ""

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=np.float64)
        powers = np.asarray(self.powers, dtype=np.float64)
        if delays.size == 0 or delays.size != powers.size:
            raise ConfigError("profile needs matching, non-empty delay and power lists")
        if delays[0] != 0.0:
            raise ConfigError("first tap delay must be 0")
        if np.any(np.diff(delays) <= 0):
            raise ConfigError("tap delays must be strictly increasing")
        total = powers.sum()
        if not (np.all(powers >= 0) and total > 0 and np.isfinite(total)):
            raise ConfigError("tap powers cannot be normalized")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "powers", powers / total)

    @classmethod
    def from_db(cls, delays, powers_db, name: str = "") -> "TapProfile":
        powers = np.power(10.0, np.asarray(powers_db, dtype=np.float64) / 10.0)
        return cls(np.asarray(delays, dtype=np.float64), powers, name)


def load_profile(path) -> TapProfile:
    """Parse a tap-profile CSV: lines of delay_seconds,power_db; # comments."""
    delays, powers_db = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'delay_seconds,power_db'")
            try:
                delays.append(float(parts[0]))
                powers_db.append(float(parts[1]))
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    if not delays:
        raise ConfigError(f"{path}: no taps found")
    return TapProfile.from_db(delays, powers_db, name=str(path))


def builtin_profile(family: str) -> TapProfile:
    """Load the packaged tap table for a multipath channel family."""
    try:
        fname = _BUILTIN_PROFILE_FILES[family]
    except KeyError:
        raise ConfigError(f"no builtin profile for family {family!r}") from None
    resource = importlib.resources.files("ajscclink.profiles").joinpath(fname)
    with importlib.resources.as_file(resource) as path:
        profile = load_profile(path)
    return TapProfile(profile.delays, profile.powers, name=family)


@dataclass(frozen=True)
class ChannelSpec:
    """Channel family, CSNR, Doppler, tap profile, and seed."""

    family: str
    csnr_db: float = float("inf")
    doppler_hz: float | None = None
    tap_profile: TapProfile | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown channel family {self.family!r}; expected one of {FAMILIES}")
        if self.doppler_hz is None:
            object.__setattr__(self, "doppler_hz", _DEFAULT_DOPPLER.get(self.family, 0.0))
        if self.doppler_hz < 0:
            raise ConfigError("doppler_hz must be >= 0")
        if self.family in ("awgn", "flat_rayleigh") and self.doppler_hz != 0:
            raise ConfigError(f"{self.family} has no Doppler; doppler_hz must be 0")

    def resolved(self) -> "ChannelSpec":
        """Fill in the packaged tap profile for multipath families."""
        if self.family in _BUILTIN_PROFILE_FILES and self.tap_profile is None:
            return ChannelSpec(
                self.family, self.csnr_db, self.doppler_hz, builtin_profile(self.family), self.seed
            )
        return self


def _csnr_noise_variance(csnr_db: float, signal_power: float) -> float:
    if np.isinf(csnr_db) and csnr_db > 0:
        return 0.0
    return signal_power / 10.0 ** (csnr_db / 10.0)


def _complex_normals(rng: np.random.Generator, n: int) -> np.ndarray:
    # Per-sample (re, im) draw order, so a stream split into chunks consumes
    # the generator exactly like a one-shot call; the view is zero-copy.
    g = rng.standard_normal((n, 2))
    return g.view(np.complex128)[:, 0]


def _add_noise(blocks: np.ndarray, variance: float, rng: np.random.Generator) -> np.ndarray:
    if variance == 0.0:
        return blocks
    scale = np.sqrt(variance / 2.0)
    noise = _complex_normals(rng, blocks.size).reshape(blocks.shape)
    return blocks + scale * noise


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def apply_awgn(blocks: np.ndarray, csnr_db: float, seed) -> np.ndarray:
    """Add circularly symmetric complex Gaussian noise at the given CSNR.

    Signal power is measured from the input; csnr_db = inf returns the
    input unchanged.  seed may be an int or a Generator.
    """
    blocks = np.asarray(blocks, dtype=np.complex128)
    if blocks.size == 0:
        raise ConfigError("blocks must be non-empty")
    p_sig = float(np.mean(np.abs(blocks) ** 2))
    variance = _csnr_noise_variance(csnr_db, p_sig)
    return _add_noise(blocks, variance, _as_rng(seed))


def apply_flat_rayleigh(blocks: np.ndarray, csnr_db: float, seed, h_override=None) -> np.ndarray:
    """Single-tap Rayleigh block fading plus AWGN.

    One coefficient h ~ CN(0, 1) is drawn independently per block (there is
    no Doppler to define coherence, so block fading is the memoryless
    choice).  Noise variance uses the ensemble gain E|h|^2 = 1, not the
    realized draws.  h_override is a test hook replacing the drawn
    coefficients.
    """
    blocks = np.asarray(blocks, dtype=np.complex128)
    if blocks.ndim != 2 or blocks.size == 0:
        raise ConfigError("blocks must be a non-empty (n_blocks, n) array")
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    fade_rng, noise_rng = (np.random.default_rng(c) for c in ss.spawn(2))
    if h_override is None:
        h = _complex_normals(fade_rng, blocks.shape[0]) / np.sqrt(2.0)
    else:
        h = np.asarray(h_override, dtype=np.complex128)
        if h.shape != (blocks.shape[0],):
            raise ConfigError("h_override must supply one coefficient per block")
    p_sig = float(np.mean(np.abs(blocks) ** 2))
    faded = h[:, None] * blocks
    return _add_noise(faded, _csnr_noise_variance(csnr_db, p_sig), noise_rng)


@dataclass(frozen=True)
class _SumOfSinusoids:
    """Frozen oscillator bank for one tap's fading process."""

    w_i: np.ndarray  # rad/s, in-phase arrival angles
    w_q: np.ndarray
    phi: np.ndarray
    psi: np.ndarray

    def gains(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=np.float64)
        m = self.w_i.size
        out = np.empty(times.shape, dtype=np.complex128)
        step = 1 << 16
        for lo in range(0, times.size, step):
            t = times[lo : lo + step, None]
            re = np.cos(t * self.w_i[None, :] + self.phi[None, :]).sum(axis=1)
            im = np.cos(t * self.w_q[None, :] + self.psi[None, :]).sum(axis=1)
            out[lo : lo + step] = (re + 1j * im) / np.sqrt(m)
        return out


def make_jakes(doppler_hz: float, rng, n_oscillators: int = 64) -> _SumOfSinusoids:
    """Draw one tap's oscillator bank (unit mean power, J0 autocorrelation)."""
    if n_oscillators < 32:
        raise ConfigError("need at least 32 oscillators per tap")
    rng = _as_rng(rng)
    m = np.arange(1, n_oscillators + 1)
    theta = rng.uniform(-np.pi, np.pi)
    alpha = (2 * np.pi * m - np.pi + theta) / (4 * n_oscillators)
    wd = 2 * np.pi * doppler_hz
    return _SumOfSinusoids(
        w_i=wd * np.cos(alpha),
        w_q=wd * np.sin(alpha),
        phi=rng.uniform(-np.pi, np.pi, n_oscillators),
        psi=rng.uniform(-np.pi, np.pi, n_oscillators),
    )


def jakes_gains(doppler_hz: float, times: np.ndarray, seed, n_oscillators: int = 64) -> np.ndarray:
    """Complex Rayleigh-fading gains at the given times for one tap."""
    return make_jakes(doppler_hz, _as_rng(seed), n_oscillators).gains(times)


class MultipathChannel:
    """Tapped-delay-line fading channel, streamable block by block.

    Tap delays are rounded to the nearest sample at the given rate; each
    tap carries an independent Doppler fading process and the line keeps a
    carry buffer so chunked processing matches one-shot processing.
    """

    def __init__(self, spec: ChannelSpec, sample_rate: float, block_size: int):
        spec = spec.resolved()
        if spec.tap_profile is None:
            raise ConfigError(f"channel family {spec.family!r} requires a tap profile")
        self.spec = spec
        self.sample_rate = sample_rate
        self.block_size = block_size
        self.block_period = block_size / sample_rate

        profile = spec.tap_profile
        max_delay = float(profile.delays.max())
        if max_delay >= self.block_period / 4:
            raise ConfigError(
                f"max tap delay {max_delay:.3g}s must stay below a quarter block "
                f"({self.block_period / 4:.3g}s)"
            )
        self.delay_samples = np.rint(profile.delays * sample_rate).astype(int)
        self.tap_scales = np.sqrt(profile.powers)

        ss = np.random.SeedSequence(spec.seed)
        fade_seed, noise_seed = ss.spawn(2)
        fade_rng = np.random.default_rng(fade_seed)
        self.taps = [
            make_jakes(spec.doppler_hz, fade_rng) for _ in range(self.delay_samples.size)
        ]
        self.noise_rng = np.random.default_rng(noise_seed)
        self._carry = np.zeros(int(self.delay_samples.max()), dtype=np.complex128)

    def tap_gain_series(self, block_indices: np.ndarray) -> np.ndarray:
        """(n_taps, n_blocks) fading gains at block-start times, unscaled."""
        times = np.asarray(block_indices, dtype=np.float64) * self.block_period
        return np.stack([tap.gains(times) for tap in self.taps])

    def process(self, blocks: np.ndarray, start_block: int = 0) -> np.ndarray:
        blocks = np.asarray(blocks, dtype=np.complex128)
        if blocks.ndim != 2 or blocks.shape[1] != self.block_size:
            raise ConfigError(f"blocks must be (n, {self.block_size}), got {blocks.shape}")
        n_blocks, n = blocks.shape
        gains = self.tap_gain_series(np.arange(start_block, start_block + n_blocks))

        flat = blocks.ravel()
        extended = np.concatenate([self._carry, flat])
        out = np.zeros((n_blocks, n), dtype=np.complex128)
        carry_len = self._carry.size
        # Taps whose delays round to the same sample add coherently, so sum
        # their gains once per block and touch the sample stream only once
        # per distinct delay.
        for d in np.unique(self.delay_samples):
            idx = np.flatnonzero(self.delay_samples == d)
            gain = (self.tap_scales[idx, None] * gains[idx]).sum(axis=0)
            delayed = extended[carry_len - d : carry_len - d + flat.size].reshape(n_blocks, n)
            out += gain[:, None] * delayed
        if carry_len:
            self._carry = flat[-carry_len:].copy()

        p_sig = float(np.mean(np.abs(blocks) ** 2))
        variance = _csnr_noise_variance(self.spec.csnr_db, p_sig)
        return _add_noise(out, variance, self.noise_rng)


def apply_multipath(blocks: np.ndarray, spec: ChannelSpec, sample_rate: float) -> np.ndarray:
    """One-shot tapped-delay-line fading of a whole block stream."""
    blocks = np.asarray(blocks, dtype=np.complex128)
    if blocks.ndim != 2 or blocks.size == 0:
        raise ConfigError("blocks must be a non-empty (n_blocks, n) array")
    return MultipathChannel(spec, sample_rate, blocks.shape[1]).process(blocks)


class AwgnChannel:
    """Streaming AWGN: chunked processing draws one continuous noise stream."""

    def __init__(self, spec: ChannelSpec, sample_rate: float, block_size: int):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)

    def process(self, blocks: np.ndarray, start_block: int = 0) -> np.ndarray:
        return apply_awgn(blocks, self.spec.csnr_db, self.rng)


class FlatRayleighChannel:
    """Streaming single-tap Rayleigh block fading.

    Fading and noise use separate generators spawned from the seed so the
    chunking pattern does not change the realization.
    """

    def __init__(self, spec: ChannelSpec, sample_rate: float, block_size: int):
        self.spec = spec
        fade_seed, noise_seed = np.random.SeedSequence(spec.seed).spawn(2)
        self.fade_rng = np.random.default_rng(fade_seed)
        self.noise_rng = np.random.default_rng(noise_seed)

    def process(self, blocks: np.ndarray, start_block: int = 0) -> np.ndarray:
        blocks = np.asarray(blocks, dtype=np.complex128)
        h = _complex_normals(self.fade_rng, blocks.shape[0]) / np.sqrt(2.0)
        p_sig = float(np.mean(np.abs(blocks) ** 2))
        faded = h[:, None] * blocks
        return _add_noise(faded, _csnr_noise_variance(self.spec.csnr_db, p_sig), self.noise_rng)


def make_channel(spec: ChannelSpec, sample_rate: float, block_size: int):
    """Instantiate the streaming channel for a spec's family."""
    if spec.family == "awgn":
        return AwgnChannel(spec, sample_rate, block_size)
    if spec.family == "flat_rayleigh":
        return FlatRayleighChannel(spec, sample_rate, block_size)
    return MultipathChannel(spec, sample_rate, block_size)
