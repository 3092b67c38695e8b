"""A 138 kV transmission line as an LTI communication channel.

The line is a lumped series R-L two-port terminated in a resistive receiver
load, so ``H(f) = Zt / (Zt + R + j*2*pi*f*L)`` with ``R`` and ``L`` the
per-metre values times the line length. Propagation filters the transmit
waveform with an FIR realisation of ``H``, optionally rescales it (AGC), then
adds the 60 Hz power waveform and noise at the receiver scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import signal as sps

from .dsp import DiscreteSignal, FirFilter, NoiseSpec, filter_samples, inband_power, add_noise

# Taps kept ahead of t = 0 in the channel FIR; the band-limited impulse
# response rings slightly before its onset.
PRECURSOR_TAPS = 32
FIR_TOLERANCE = 0.01


@dataclass(frozen=True)
class LineChannel:
    r_per_m: float = 0.2
    l_per_m: float = 5e-4
    length_m: float = 9800.0
    termination_ohm: float = 1000.0
    band_low_hz: float = 99e3
    band_high_hz: float = 400e3
    power_freq_hz: float = 60.0
    # 10x the default 1 V transmit amplitude, referred to the receiver scale
    power_amplitude: float = 10.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    agc_enabled: bool = True
    fir_taps: int = 1025

    def __post_init__(self):
        if self.r_per_m < 0 or self.l_per_m < 0:
            raise ValueError(f"r_per_m and l_per_m must be >= 0, got {self.r_per_m}, {self.l_per_m}")
        for name in ("length_m", "termination_ohm", "power_freq_hz"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 < self.band_low_hz < self.band_high_hz:
            raise ValueError(f"band must satisfy 0 < low < high, got {self.band_low_hz}..{self.band_high_hz}")
        if self.power_amplitude < 0:
            raise ValueError(f"power_amplitude must be >= 0, got {self.power_amplitude}")

    @property
    def r_total(self) -> float:
        return self.r_per_m * self.length_m

    @property
    def l_total(self) -> float:
        return self.l_per_m * self.length_m

    @classmethod
    def identity(cls, **overrides) -> LineChannel:
        """Lossless, interference-free link: the AWGN-only configuration."""
        params = dict(r_per_m=0.0, l_per_m=0.0, power_amplitude=0.0)
        params.update(overrides)
        return cls(**params)

    def quiet(self) -> LineChannel:
        """Same line with noise and 60 Hz interference switched off."""
        return replace(self, power_amplitude=0.0, noise=NoiseSpec(kind=self.noise.kind, seed=self.noise.seed))


def transfer_gain(channel: LineChannel, freq_hz):
    """Complex gain ``H(f)``; scalar in, scalar out."""
    f = np.asarray(freq_hz, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequency must be >= 0")
    zt = channel.termination_ohm
    h = zt / (zt + channel.r_total + 2j * np.pi * f * channel.l_total)
    return complex(h) if h.ndim == 0 else h


@dataclass(frozen=True)
class Propagation:
    """Receiver-side view of one transmission."""

    signal: DiscreteSignal  # what the receiver digitises
    clean: DiscreteSignal  # communication component only, after AGC
    agc_gain: float
    inband_power: float  # of ``clean``, over the allocated band


def _rolloff(f: np.ndarray, start: float, stop: float) -> np.ndarray:
    c = np.ones_like(f)
    mid = (f > start) & (f < stop)
    c[mid] = 0.5 * (1 + np.cos(np.pi * (f[mid] - start) / (stop - start)))
    c[f >= stop] = 0.0
    return c


def _fir_error(channel: LineChannel, fir: FirFilter) -> float:
    f = np.concatenate([[0.0], np.linspace(channel.band_low_hz, channel.band_high_hz, 1024)])
    target = transfer_gain(channel, f)
    return float(np.max(np.abs(fir.response(f) - target) / np.abs(target)))


def channel_fir(channel: LineChannel, sample_rate_hz: float, tap_count: int | None = None) -> FirFilter:
    """Causal FIR realisation of :func:`transfer_gain` by frequency sampling.

    ``H`` is sampled on a dense DFT grid, band-limited by a raised-cosine
    roll-off above the allocated band (the sampled RL response does not
    vanish at Nyquist), inverse transformed, truncated to ``tap_count`` taps
    with a smooth tail taper, and finally given a low-frequency correction so
    the DC gain is exact. The result must match ``H`` to 1 % (complex,
    relative) over DC and the allocated band or a ``ValueError`` reports the
    error achieved.
    """
    n_taps = channel.fir_taps if tap_count is None else tap_count
    # only the line itself matters; keep noise/interference out of the cache key
    line = replace(channel.quiet(), noise=NoiseSpec(), agc_enabled=False)
    return _design_channel_fir(line, float(sample_rate_hz), int(n_taps))


@lru_cache(maxsize=32)
def _design_channel_fir(channel: LineChannel, sample_rate_hz: float, n_taps: int) -> FirFilter:
    if n_taps % 2 == 0:
        raise ValueError(f"tap_count must be odd, got {n_taps}")
    nyq = sample_rate_hz / 2
    if channel.band_high_hz >= nyq:
        raise ValueError(f"channel band edge {channel.band_high_hz} Hz at or above Nyquist {nyq} Hz")

    h0 = transfer_gain(channel, 0.0).real
    pre = min(PRECURSOR_TAPS, n_taps // 8)
    if channel.l_total == 0:
        # frequency-flat line: a pure gain
        taps = np.zeros(n_taps)
        taps[pre] = h0
        return FirFilter(taps, "channel", sample_rate_hz, pre, meta={"max_rel_error": 0.0})

    # dense grid long enough for the RL tail to decay below double precision
    tau = channel.l_total / (channel.termination_ohm + channel.r_total) * sample_rate_hz
    m = 1 << max(16, math.ceil(math.log2(40 * tau + 4 * n_taps)))
    f = np.fft.rfftfreq(m, 1 / sample_rate_hz)
    start = channel.band_high_hz + 0.25 * (nyq - channel.band_high_hz)
    stop = channel.band_high_hz + 0.75 * (nyq - channel.band_high_hz)
    h = np.fft.irfft(transfer_gain(channel, f) * _rolloff(f, start, stop), m)
    seg = np.roll(h, pre)[:n_taps]

    n = np.arange(n_taps)
    taper = np.ones(n_taps)
    taper[:pre] = 0.5 * (1 - np.cos(np.pi * (n[:pre] + 1) / (pre + 1)))
    tail = n >= pre
    taper[tail] = 0.5 * (1 + np.cos(np.pi * (n[tail] - pre) / (n_taps - 1 - pre)))
    taps = seg * taper

    # put the lost DC area back through a narrow lowpass so the band is untouched
    bump = sps.firwin(n_taps, min(20e3, 4 * sample_rate_hz / n_taps), window=("kaiser", 12.0), fs=sample_rate_hz)
    taps = taps + (h0 - taps.sum()) * bump / bump.sum()

    fir = FirFilter(taps, "channel", sample_rate_hz, pre)
    err = _fir_error(channel, fir)
    if err > FIR_TOLERANCE:
        raise ValueError(
            f"{n_taps} taps realise the channel with {err:.2%} worst-case error over DC and "
            f"{channel.band_low_hz:g}-{channel.band_high_hz:g} Hz; need <= {FIR_TOLERANCE:.0%}"
        )
    return FirFilter(taps, "channel", sample_rate_hz, pre, meta={"max_rel_error": err})


def interference(channel: LineChannel, like: DiscreteSignal) -> np.ndarray:
    if channel.power_amplitude == 0:
        return np.zeros(len(like))
    return channel.power_amplitude * np.sin(2 * np.pi * channel.power_freq_hz * like.times)


def propagate(signal: DiscreteSignal, channel: LineChannel) -> Propagation:
    """Send ``signal`` down the line.

    The communication copy is filtered by the channel FIR and, with AGC on,
    scaled so its in-band power equals the transmitted in-band power. The
    power-frequency waveform and noise are then added at that receiver
    scale; the noise SNR is measured against the communication copy.
    """
    fir = channel_fir(channel, signal.sample_rate)
    rx = filter_samples(signal.samples, fir)
    gain = 1.0
    p_rx = inband_power(rx, signal.sample_rate, channel.band_low_hz, channel.band_high_hz)
    if channel.agc_enabled:
        p_tx = inband_power(signal.samples, signal.sample_rate, channel.band_low_hz, channel.band_high_hz)
        if p_tx > 0 and p_rx > 0:
            gain = math.sqrt(p_tx / p_rx)
            rx = rx * gain
            p_rx = p_tx
    clean = signal.replace(rx)
    noisy = add_noise(clean, channel.noise)
    out = noisy.replace(noisy.samples + interference(channel, signal))
    return Propagation(out, clean, gain, p_rx)


def frequency_response_table(channel: LineChannel, freqs_hz) -> np.ndarray:
    """Rows of (freq_hz, |H|, phase in degrees)."""
    f = np.asarray(freqs_hz, dtype=float)
    h = transfer_gain(channel, f)
    return np.column_stack([f, np.abs(h), np.degrees(np.angle(h))])
