"""ASK (on-off), BFSK and BPSK modulators and their receivers.

All receivers start with the same linear-phase bandpass (250 kHz centre,
150 kHz wide by default) and make one decision per full bit period:

With ``rx_bandpass_bw_hz=None`` the front-end bandpass is skipped; the
per-bit integrate-and-dump is then the exact matched filter for these
rectangular-pulse signals (the configuration the closed-form AWGN curves
assume).

* ASK: rectify, lowpass at the bit rate, average per bit, slice midway
  between the quiet-bit floor and the 90th percentile of per-bit levels.
* BFSK: noncoherent dual-tone detector. Each tone filter is a bit-long
  integrate-and-dump of the signal mixed down by that tone (bandwidth on the
  bit-rate scale); the larger envelope energy wins.
* BPSK: coherent correlation with the carrier over each bit, sign decision.
  The carrier phase is supplied by the caller (simulation-side knowledge).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, DiscreteSignal, FirFilter, design_fir, filter_samples


class Scheme(str, Enum):
    ASK = "ASK"
    BFSK = "BFSK"
    BPSK = "BPSK"

    def __str__(self) -> str:
        return self.value


# Receiver bandpass width; synchronisation always uses at least this filter.
DEFAULT_RX_BANDWIDTH_HZ = 150e3


@dataclass(frozen=True)
class ModemConfig:
    """Modem parameters; ``carrier_hz`` doubles as the BFSK centre frequency."""

    scheme: Scheme = Scheme.BFSK
    bit_rate_hz: float = 10e3
    carrier_hz: float = 250e3
    deviation_hz: float = 50e3
    amplitude: float = 1.0
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE
    rx_bandpass_center_hz: float = 250e3
    rx_bandpass_bw_hz: float | None = DEFAULT_RX_BANDWIDTH_HZ  # None: no front-end bandpass
    rx_bandpass_taps: int = 301
    rx_lowpass_cutoff_hz: float | None = None  # None: the bit rate
    rx_lowpass_taps: int = 121

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.bit_rate_hz <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("bit rate and sample rate must be positive")
        ratio = self.sample_rate_hz / self.bit_rate_hz
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 8:
            raise ValueError(
                f"samples per bit {ratio:g} (= {self.sample_rate_hz:g} / {self.bit_rate_hz:g}) "
                "must be an integer >= 8"
            )
        nyq = self.sample_rate_hz / 2
        for f in self.tones():
            if not 0 < f < nyq:
                raise ValueError(f"tone {f:g} Hz outside (0, {nyq:g}) Hz")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")

    @property
    def samples_per_bit(self) -> int:
        return round(self.sample_rate_hz / self.bit_rate_hz)

    @property
    def f0(self) -> float:
        return self.carrier_hz - self.deviation_hz

    @property
    def f1(self) -> float:
        return self.carrier_hz + self.deviation_hz

    def tones(self) -> tuple[float, ...]:
        if self.scheme is Scheme.BFSK:
            return (self.f0, self.f1)
        return (self.carrier_hz,)

    def check_band(self, band_low_hz: float, band_high_hz: float) -> None:
        for f in self.tones():
            if not band_low_hz <= f <= band_high_hz:
                raise ValueError(f"{self.scheme} tone {f:g} Hz outside channel band {band_low_hz:g}-{band_high_hz:g} Hz")

    @property
    def rx_bandpass(self) -> FirFilter | None:
        if self.rx_bandpass_bw_hz is None:
            return None
        return _bandpass(self.rx_bandpass_center_hz, self.rx_bandpass_bw_hz, self.rx_bandpass_taps, self.sample_rate_hz)

    @property
    def rx_lowpass(self) -> FirFilter:
        cutoff = self.rx_lowpass_cutoff_hz or self.bit_rate_hz
        return _lowpass(cutoff, self.rx_lowpass_taps, self.sample_rate_hz)


@lru_cache(maxsize=16)
def _bandpass(center, bw, taps, fs) -> FirFilter:
    return design_fir("bandpass", center, bw, taps, fs)


@lru_cache(maxsize=16)
def _lowpass(cutoff, taps, fs) -> FirFilter:
    return design_fir("lowpass", cutoff, None, taps, fs)


def as_bits(bits) -> np.ndarray:
    """Validate a bit sequence and return it as a uint8 array."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValueError("bits must be one-dimensional")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("bits must be 0 or 1")
    return arr.astype(np.uint8)


def parse_bit_string(text: str) -> np.ndarray:
    cleaned = "".join(text.split())
    bad = set(cleaned) - {"0", "1"}
    if bad:
        raise ValueError(f"bit string contains characters other than 0/1: {sorted(bad)}")
    return np.frombuffer(cleaned.encode(), dtype=np.uint8) - ord("0")


def format_bit_string(bits) -> str:
    return "".join("1" if b else "0" for b in as_bits(bits))


def _require(config: ModemConfig, scheme: Scheme) -> None:
    if config.scheme is not scheme:
        raise ValueError(f"config is for {config.scheme}, not {scheme}")


def _sample_index(n_bits: int, config: ModemConfig) -> np.ndarray:
    return np.arange(n_bits * config.samples_per_bit)


# --- modulators ------------------------------------------------------------


def ask_modulate(bits, config: ModemConfig) -> DiscreteSignal:
    """On-off keying: carrier at full amplitude for 1, silence for 0."""
    _require(config, Scheme.ASK)
    b = as_bits(bits)
    n = _sample_index(b.size, config)
    gate = np.repeat(b.astype(float), config.samples_per_bit)
    x = config.amplitude * gate * np.sin(2 * np.pi * config.carrier_hz * n / config.sample_rate_hz)
    return DiscreteSignal(x, config.sample_rate_hz)


def fsk_modulate(bits, config: ModemConfig) -> DiscreteSignal:
    """Phase-continuous binary FSK at ``carrier -/+ deviation``."""
    _require(config, Scheme.BFSK)
    b = as_bits(bits)
    freq = np.where(np.repeat(b, config.samples_per_bit) == 1, config.f1, config.f0)
    # phase at sample n accumulates the frequencies of samples 0..n-1
    phase = np.zeros(freq.size)
    if freq.size:
        phase[1:] = np.cumsum(freq[:-1]) * (2 * np.pi / config.sample_rate_hz)
    return DiscreteSignal(config.amplitude * np.sin(phase), config.sample_rate_hz)


def psk_modulate(bits, config: ModemConfig) -> DiscreteSignal:
    """``A sin(2 pi fc t + b pi)``."""
    _require(config, Scheme.BPSK)
    b = as_bits(bits)
    n = _sample_index(b.size, config)
    sign = 1.0 - 2.0 * np.repeat(b.astype(float), config.samples_per_bit)
    x = config.amplitude * sign * np.sin(2 * np.pi * config.carrier_hz * n / config.sample_rate_hz)
    return DiscreteSignal(x, config.sample_rate_hz)


# --- receivers --------------------------------------------------------------


def _bit_frames(signal: DiscreteSignal, config: ModemConfig) -> tuple[np.ndarray, int]:
    if not math.isclose(signal.sample_rate, config.sample_rate_hz, rel_tol=1e-12):
        raise ValueError(f"signal at {signal.sample_rate:g} Hz, modem expects {config.sample_rate_hz:g} Hz")
    spb = config.samples_per_bit
    n_bits = len(signal) // spb
    if n_bits == 0:
        raise ValueError(f"signal of {len(signal)} samples is shorter than one bit period ({spb} samples)")
    return front_end(signal.samples, config), n_bits


def front_end(x: np.ndarray, config: ModemConfig) -> np.ndarray:
    """The receiver bandpass, or the raw samples when it is disabled."""
    bp = config.rx_bandpass
    return x if bp is None else filter_samples(x, bp)


def ask_envelope(signal: DiscreteSignal, config: ModemConfig) -> DiscreteSignal:
    """Bandpass, full-wave rectify, lowpass: the envelope the ASK slicer sees."""
    filtered, _ = _bit_frames(signal, config)
    return signal.replace(filter_samples(np.abs(filtered), config.rx_lowpass))


def bit_means(x: np.ndarray, config: ModemConfig) -> np.ndarray:
    spb = config.samples_per_bit
    n_bits = x.size // spb
    return x[: n_bits * spb].reshape(n_bits, spb).mean(axis=1)


def ask_threshold(levels: np.ndarray) -> float:
    """Slicer level between the quiet-bit floor and the 90th-percentile level.

    The floor is the 10th percentile, capped at half the 90th percentile so
    that a message of all ones still slices correctly. For a noiseless
    envelope the floor is zero and the threshold is half the 90th percentile.
    """
    high = float(np.percentile(levels, 90))
    floor = min(float(np.percentile(levels, 10)), 0.5 * high)
    return 0.5 * (floor + high)


def ask_demodulate(signal: DiscreteSignal, config: ModemConfig) -> np.ndarray:
    _require(config, Scheme.ASK)
    levels = bit_means(ask_envelope(signal, config).samples, config)
    return (levels > ask_threshold(levels)).astype(np.uint8)


def fsk_tone_energies(signal: DiscreteSignal, config: ModemConfig) -> np.ndarray:
    """Per-bit envelope energy at f0 and f1, shape (n_bits, 2)."""
    filtered, n_bits = _bit_frames(signal, config)
    spb = config.samples_per_bit
    frames = filtered[: n_bits * spb].reshape(n_bits, spb)
    k = np.arange(spb)
    # a tone's phase offset between bits only rotates the per-bit sum
    mixers = np.exp(-2j * np.pi * np.outer(k, [config.f0, config.f1]) / config.sample_rate_hz)
    return np.abs(frames @ mixers) ** 2


def fsk_demodulate(signal: DiscreteSignal, config: ModemConfig) -> np.ndarray:
    _require(config, Scheme.BFSK)
    e = fsk_tone_energies(signal, config)
    return (e[:, 1] > e[:, 0]).astype(np.uint8)


def psk_correlations(signal: DiscreteSignal, config: ModemConfig, phase_rad: float = 0.0) -> np.ndarray:
    """Per-bit sum of the band-passed signal times ``sin(2 pi fc n / fs + phase_rad)``."""
    filtered, n_bits = _bit_frames(signal, config)
    spb = config.samples_per_bit
    frames = filtered[: n_bits * spb].reshape(n_bits, spb)
    w = 2 * np.pi * config.carrier_hz / config.sample_rate_hz
    k = np.arange(spb)
    # sin(w(b*spb + k) + p) split into a per-sample template and a per-bit rotation
    sums = frames @ np.column_stack([np.sin(w * k + phase_rad), np.cos(w * k + phase_rad)])
    start = w * spb * np.arange(n_bits)
    return sums[:, 0] * np.cos(start) + sums[:, 1] * np.sin(start)


def psk_demodulate(signal: DiscreteSignal, config: ModemConfig, phase_rad: float = 0.0) -> np.ndarray:
    """Integrate-and-dump against ``sin(2 pi fc t + phase_rad)``; negative sum means bit 1."""
    _require(config, Scheme.BPSK)
    return (psk_correlations(signal, config, phase_rad) < 0).astype(np.uint8)


_MODULATORS = {Scheme.ASK: ask_modulate, Scheme.BFSK: fsk_modulate, Scheme.BPSK: psk_modulate}


def modulate(bits, config: ModemConfig) -> DiscreteSignal:
    return _MODULATORS[config.scheme](bits, config)


def demodulate(signal: DiscreteSignal, config: ModemConfig, phase_rad: float = 0.0) -> np.ndarray:
    if config.scheme is Scheme.BPSK:
        return psk_demodulate(signal, config, phase_rad)
    if config.scheme is Scheme.BFSK:
        return fsk_demodulate(signal, config)
    return ask_demodulate(signal, config)
