"""Sampled-signal substrate: waveforms, FIR design/filtering, spectra, noise, delay search.

Every other module passes :class:`DiscreteSignal` objects around. Filtering is
"same"-length convolution anchored at the filter's time origin, so a
linear-phase filter introduces no net delay and a causal channel filter
delays by its true physical response only.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import fft as sp_fft
from scipy import signal as sps

DEFAULT_SAMPLE_RATE = 2.4e6

# Occupied bands used when generating the NB-PLC / BB-PLC illustrations.
BAND_PRESETS: dict[str, tuple[float, float]] = {
    "NB-PLC": (3e3, 500e3),
    "BB-PLC": (1.8e6, 250e6),
}

# Approximate main-lobe transition width of a windowed-sinc design, in units
# of sample_rate / tap_count.
TRANSITION_FACTORS = {
    "hann": 3.1,
    "hamming": 3.3,
    "blackman": 5.5,
}


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteSignal:
    """Uniformly sampled real waveform."""

    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        if samples.ndim != 1:
            raise ValueError(f"samples must be one-dimensional, got shape {samples.shape}")
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise ValueError(f"sample_rate must be positive and finite, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "start_time", float(self.start_time))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def replace(self, samples: np.ndarray) -> DiscreteSignal:
        """Same timing, new samples."""
        return DiscreteSignal(samples, self.sample_rate, self.start_time)

    def power(self) -> float:
        if self.samples.size == 0:
            return 0.0
        return float(np.mean(self.samples**2))

    def to_csv(self, path: str | Path | None = None) -> str:
        text = signals_to_csv(self.times, {"amplitude": self.samples})
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path, sample_rate: float | None = None) -> DiscreteSignal:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 2:
            raise ValueError(f"{path}: expected columns time_s,amplitude")
        t, x = data[:, 0], data[:, 1]
        if sample_rate is None:
            if t.size < 2:
                raise ValueError(f"{path}: need two rows to infer the sample rate")
            sample_rate = (t.size - 1) / (t[-1] - t[0])
            if abs(sample_rate - round(sample_rate)) < 1e-6 * sample_rate:
                sample_rate = float(round(sample_rate))
        start = float(t[0]) if t.size else 0.0
        return cls(x, sample_rate, start)


def signals_to_csv(times: np.ndarray, columns: dict[str, np.ndarray]) -> str:
    """Render ``time_s`` plus named columns with 9 significant digits."""
    header = ",".join(["time_s", *columns])
    table = np.column_stack([times, *columns.values()]) if len(times) else np.empty((0, 1 + len(columns)))
    buf = io.StringIO()
    np.savetxt(buf, table, fmt="%.9g", delimiter=",", header=header, comments="")
    return buf.getvalue()


def generate_carrier(
    freq_hz: float,
    amplitude: float,
    phase_rad: float,
    duration_s: float,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE,
) -> DiscreteSignal:
    """``amplitude * sin(2*pi*freq*n/fs + phase)`` for ``round(duration*fs)`` samples."""
    if not 0 < freq_hz < sample_rate_hz / 2:
        raise ValueError(
            f"carrier {freq_hz} Hz must lie strictly between 0 and the Nyquist "
            f"frequency {sample_rate_hz / 2} Hz (sample rate {sample_rate_hz} Hz)"
        )
    if duration_s < 0:
        raise ValueError(f"duration must be non-negative, got {duration_s}")
    n = np.arange(round(duration_s * sample_rate_hz))
    x = amplitude * np.sin(2 * np.pi * freq_hz * n / sample_rate_hz + phase_rad)
    return DiscreteSignal(x, sample_rate_hz)


def band_noise_signal(band: str, duration_s: float, sample_rate_hz: float, seed: int) -> DiscreteSignal:
    """Gaussian noise confined to one of :data:`BAND_PRESETS`, the look of a loaded PLC band."""
    low, high = BAND_PRESETS[band]
    nyq = sample_rate_hz / 2
    if high >= nyq:
        raise ValueError(f"{band} needs a sample rate above {2 * high} Hz, got {sample_rate_hz}")
    n = round(duration_s * sample_rate_hz)
    white = np.random.default_rng(seed).standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, 1 / sample_rate_hz)
    spec[(f < low) | (f > high)] = 0
    x = np.fft.irfft(spec, n)
    rms = np.sqrt(np.mean(x**2)) if n else 0.0
    return DiscreteSignal(x / rms if rms > 0 else x, sample_rate_hz)


# --------------------------------------------------------------------------
# FIR filters
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FirFilter:
    """FIR taps plus design metadata.

    ``origin`` is the tap index that lines up with the current output
    sample. Linear-phase designs use the centre tap, so filtering them is
    zero-phase; channel realisations are causal and keep a short pre-cursor.
    """

    taps: np.ndarray
    kind: Literal["lowpass", "bandpass", "channel"]
    sample_rate: float
    origin: int
    center_hz: float | None = None
    bandwidth_hz: float | None = None
    cutoff_hz: float | None = None
    window: str = "hamming"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        taps = _frozen_array(self.taps)
        if taps.size % 2 == 0:
            raise ValueError(f"tap count must be odd, got {taps.size}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("filter taps contain NaN or Inf")
        if not 0 <= self.origin < taps.size:
            raise ValueError(f"origin {self.origin} outside 0..{taps.size - 1}")
        object.__setattr__(self, "taps", taps)

    @property
    def tap_count(self) -> int:
        return self.taps.size

    @property
    def group_delay(self) -> float:
        """Group delay in samples of the raw tap sequence (linear-phase designs)."""
        return (self.taps.size - 1) / 2

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response referenced to ``origin`` (what :func:`apply_filter` realises)."""
        f = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
        k = np.arange(self.taps.size) - self.origin
        return np.exp(-2j * np.pi * np.outer(f, k) / self.sample_rate) @ self.taps


def transition_width_hz(tap_count: int, sample_rate_hz: float, window: str = "hamming") -> float:
    """Nominal transition width of a windowed-sinc design: factor * fs / taps."""
    try:
        return TRANSITION_FACTORS[window] * sample_rate_hz / tap_count
    except KeyError:
        raise ValueError(f"no transition-width rule for window {window!r}") from None


def design_fir(
    kind: Literal["lowpass", "bandpass"],
    center_or_cutoff_hz: float,
    bandwidth_hz: float | None = None,
    tap_count: int = 301,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE,
    window: str | tuple = "hamming",
) -> FirFilter:
    """Windowed-sinc linear-phase FIR.

    Bandpass filters are normalised to unit gain at the band centre, lowpass
    filters to unit DC gain. With the Hamming window the transition band is
    about ``3.3 * fs / tap_count`` wide, centred on each band edge; stopband
    attenuation beyond one transition width is better than 50 dB.
    """
    if tap_count % 2 == 0:
        raise ValueError(f"tap_count must be odd for linear phase, got {tap_count}")
    if tap_count < 31:
        raise ValueError(f"tap_count must be at least 31, got {tap_count}")
    nyq = sample_rate_hz / 2
    if kind == "lowpass":
        cutoff = center_or_cutoff_hz
        if not 0 < cutoff < nyq:
            raise ValueError(f"lowpass cutoff {cutoff} Hz outside (0, {nyq}) Hz")
        taps = sps.firwin(tap_count, cutoff, window=window, pass_zero=True, fs=sample_rate_hz)
        return FirFilter(
            taps, "lowpass", sample_rate_hz, tap_count // 2, cutoff_hz=cutoff, window=str(window)
        )
    if kind == "bandpass":
        if bandwidth_hz is None or bandwidth_hz <= 0:
            raise ValueError(f"bandpass needs a positive bandwidth, got {bandwidth_hz}")
        low = center_or_cutoff_hz - bandwidth_hz / 2
        high = center_or_cutoff_hz + bandwidth_hz / 2
        if not (0 < low and high < nyq):
            raise ValueError(f"passband {low}..{high} Hz outside (0, {nyq}) Hz")
        taps = sps.firwin(tap_count, [low, high], window=window, pass_zero=False, fs=sample_rate_hz)
        return FirFilter(
            taps,
            "bandpass",
            sample_rate_hz,
            tap_count // 2,
            center_hz=center_or_cutoff_hz,
            bandwidth_hz=bandwidth_hz,
            window=str(window),
        )
    raise ValueError(f"unknown filter kind {kind!r}")


def filter_samples(x: np.ndarray, fir: FirFilter) -> np.ndarray:
    """Array-level core of :func:`apply_filter`."""
    if x.size == 0:
        return x.copy()
    full = sps.oaconvolve(x, fir.taps) if x.size > 4 * fir.tap_count else np.convolve(x, fir.taps)
    return full[fir.origin : fir.origin + x.size]


def apply_filter(signal: DiscreteSignal, fir: FirFilter) -> DiscreteSignal:
    """Same-length convolution, edges zero-padded, aligned on ``fir.origin``."""
    if not math.isclose(signal.sample_rate, fir.sample_rate, rel_tol=1e-12):
        raise ValueError(f"signal at {signal.sample_rate} Hz, filter designed for {fir.sample_rate} Hz")
    return signal.replace(filter_samples(signal.samples, fir))


# --------------------------------------------------------------------------
# Spectra
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Single-sided DFT magnitude, scaled so a tone of amplitude A on a bin centre reads A/2."""

    bin_freqs: np.ndarray
    magnitudes: np.ndarray
    resolution: float
    n_samples: int
    window_sum: float
    window: str = "boxcar"

    def peak_frequency(self) -> float:
        return float(self.bin_freqs[np.argmax(self.magnitudes)])

    def energy(self) -> float:
        """Energy of the windowed time signal, recovered from the magnitudes (Parseval)."""
        m2 = self.magnitudes**2
        weights = np.full(m2.size, 2.0)
        weights[0] = 1.0
        if self.n_samples % 2 == 0:
            weights[-1] = 1.0
        return float(self.window_sum**2 / self.n_samples * np.sum(weights * m2))

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        np.savetxt(
            buf,
            np.column_stack([self.bin_freqs, self.magnitudes]),
            fmt="%.9g",
            delimiter=",",
            header="freq_hz,magnitude",
            comments="",
        )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def spectrum(signal: DiscreteSignal, window: str = "boxcar") -> Spectrum:
    n = len(signal)
    if n < 2:
        raise ValueError(f"spectrum needs at least 2 samples, got {n}")
    w = sps.get_window(window, n, fftbins=True)
    mags = np.abs(np.fft.rfft(signal.samples * w)) / w.sum()
    freqs = np.fft.rfftfreq(n, 1 / signal.sample_rate)
    return Spectrum(freqs, mags, signal.sample_rate / n, n, float(w.sum()), window)


def inband_power(x: np.ndarray, sample_rate: float, low_hz: float, high_hz: float) -> float:
    """Mean power of the part of ``x`` inside ``[low_hz, high_hz]``."""
    n = x.size
    if n == 0:
        return 0.0
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(n, 1 / sample_rate)
    p = np.abs(spec) ** 2
    p[1:] *= 2
    if n % 2 == 0:
        p[-1] /= 2
    return float(p[(f >= low_hz) & (f <= high_hz)].sum() / n**2)


# --------------------------------------------------------------------------
# Noise
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise request.

    Exactly one of ``snr_db`` (relative to the measured mean power of the
    signal it is added to) or ``noise_power`` (absolute variance) sets the
    level; neither means no noise. ``one_over_f`` noise is white Gaussian
    noise whose spectrum is shaped by 1/sqrt(f), i.e. a -10 dB/decade PSD,
    then rescaled so each realisation has exactly the requested variance.
    """

    kind: Literal["white", "one_over_f"] = "white"
    snr_db: float | None = None
    noise_power: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("white", "one_over_f"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.snr_db is not None and self.noise_power is not None:
            raise ValueError("give snr_db or noise_power, not both")
        if self.snr_db is not None and (math.isnan(self.snr_db) or self.snr_db == -math.inf):
            raise ValueError(f"snr_db {self.snr_db} gives non-finite noise power")
        if self.noise_power is not None and not (math.isfinite(self.noise_power) and self.noise_power >= 0):
            raise ValueError(f"noise_power must be finite and >= 0, got {self.noise_power}")

    def power_for(self, signal_power: float) -> float:
        if self.noise_power is not None:
            return self.noise_power
        if self.snr_db is None or self.snr_db == math.inf:
            return 0.0
        return signal_power / 10 ** (self.snr_db / 10)


def noise_samples(n: int, spec: NoiseSpec, power: float) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    w = rng.standard_normal(n)
    if spec.kind == "one_over_f" and n > 1:
        shaped = np.fft.rfft(w)
        k = np.arange(shaped.size, dtype=float)
        gain = np.zeros_like(k)
        gain[1:] = 1 / np.sqrt(k[1:])
        w = np.fft.irfft(shaped * gain, n)
        # a few low bins carry much of the power, so the realised variance
        # scatters widely; pin it to the request instead
        w /= math.sqrt(np.mean(w**2))
    return math.sqrt(power) * w


def add_noise(signal: DiscreteSignal, spec: NoiseSpec) -> DiscreteSignal:
    power = spec.power_for(signal.power())
    if not math.isfinite(power):
        raise ValueError(f"noise power {power} is not finite")
    if power == 0:
        return signal
    return signal.replace(signal.samples + noise_samples(len(signal), spec, power))


# --------------------------------------------------------------------------
# Delay alignment
# --------------------------------------------------------------------------


TIE_TOLERANCE = 1e-9


def lag_correlation(reference: np.ndarray, received: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalised cross-correlation of ``received[k:]`` against ``reference`` for k = 0..max_lag."""
    r = np.asarray(reference, dtype=float)
    x = np.asarray(received, dtype=float)
    if r.size == 0 or x.size == 0:
        raise ValueError("reference and received must be non-empty")
    if not 0 <= max_lag < x.size:
        raise ValueError(f"max_lag {max_lag} must be in [0, {x.size})")
    if not np.any(r):
        raise ValueError("reference is all zero; correlation is undefined")
    nfft = sp_fft.next_fast_len(r.size + x.size)
    raw = np.fft.irfft(np.fft.rfft(x, nfft) * np.conj(np.fft.rfft(r, nfft)), nfft)[: max_lag + 1]
    lags = np.arange(max_lag + 1)
    overlap = np.minimum(r.size, x.size - lags)
    cr = np.concatenate([[0.0], np.cumsum(r**2)])
    cx = np.concatenate([[0.0], np.cumsum(x**2)])
    denom = np.sqrt(cr[overlap] * (cx[lags + overlap] - cx[lags]))
    out = np.zeros(max_lag + 1)
    ok = denom > 1e-300
    out[ok] = raw[ok] / denom[ok]
    return out


def delay_search(reference, received, max_lag: int) -> tuple[int, float]:
    """Best lag and its normalised correlation; ties go to the smallest lag.

    Correlations within ``TIE_TOLERANCE`` of the maximum count as ties, so
    FFT rounding cannot pick a later lag for a periodic reference.
    """
    r = reference.samples if isinstance(reference, DiscreteSignal) else reference
    x = received.samples if isinstance(received, DiscreteSignal) else received
    c = lag_correlation(r, x, max_lag)
    k = int(np.flatnonzero(c >= c.max() - TIE_TOLERANCE)[0])
    return k, float(c[k])


def align_delay(reference, received, max_lag: int) -> int:
    """Lag (samples) by which ``received`` trails ``reference``."""
    return delay_search(reference, received, max_lag)[0]


def shift_back(x: np.ndarray, lag: int) -> np.ndarray:
    """Undo a delay of ``lag`` samples, zero-filling the tail to keep the length."""
    if lag == 0:
        return x
    out = np.zeros_like(x)
    out[: x.size - lag] = x[lag:]
    return out
