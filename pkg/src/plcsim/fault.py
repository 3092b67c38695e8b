"""Three-phase waveforms, fault injection and two protection relays.

The network is one Thevenin source per phase (EMF behind ``source_ohm``)
feeding a grounded-wye resistive load. A fault adds resistive branches at
the bus between source and load; since every element is resistive the
post-fault bus voltages are a fixed 3x3 mix of the source EMFs, solved once
per scenario by nodal analysis. Currents are line currents drawn from the
source, so before a fault they equal voltage / load.

Relays work on sliding windows of whole power-frequency cycles:

* carrier sense watches the power of a pilot carrier riding on the line and
  trips when a window's mean falls below ``threshold_ratio`` times the power
  of the first (pre-fault) window;
* impedance (distance) protection trips when a window's RMS(V) / RMS(I)
  falls below the reach setting.

In both cases the trip time is the end sample of the first qualifying window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from .dsp import DiscreteSignal, FirFilter, design_fir, filter_samples

PHASES = "abc"
FAULT_PHASE_COUNT = {"L-G": 1, "L-L": 2, "L-L-G": 2, "L-L-L": 3, "L-L-L-G": 3}
DEFAULT_SOURCE_OHM = 5.0
# Bolted faults use this resistance instead of an exact short.
MIN_FAULT_OHM = 1e-9
# RMS line current below which the impedance relay treats the line as dead.
CURRENT_FLOOR_A = 1e-3
# Relative margin so a measured impedance equal to the reach does not trip on rounding.
REACH_GUARD = 1e-9
# Pilot-carrier front end: Kaiser(12) keeps 60 Hz leakage near 1e-7 even at 100 kV.
CARRIER_FILTER_TAPS = 601
CARRIER_FILTER_BW_HZ = 20e3
CARRIER_FILTER_WINDOW = ("kaiser", 12.0)


@dataclass(frozen=True)
class FaultScenario:
    fault_type: Literal["L-G", "L-L", "L-L-G", "L-L-L", "L-L-L-G"]
    onset_s: float
    fault_impedance_ohm: float = 0.001
    affected_phases: str | None = None  # None: the first phases of "abc" the type needs
    source_ohm: float = DEFAULT_SOURCE_OHM

    def __post_init__(self):
        if self.fault_type not in FAULT_PHASE_COUNT:
            raise ValueError(f"fault_type must be one of {sorted(FAULT_PHASE_COUNT)}, got {self.fault_type!r}")
        need = FAULT_PHASE_COUNT[self.fault_type]
        phases = self.affected_phases if self.affected_phases is not None else PHASES[:need]
        phases = "".join(sorted(set(phases.lower())))
        if not set(phases) <= set(PHASES) or len(phases) != need:
            raise ValueError(f"{self.fault_type} needs {need} distinct phases from 'abc', got {self.affected_phases!r}")
        object.__setattr__(self, "affected_phases", phases)
        if math.isnan(self.fault_impedance_ohm) or self.fault_impedance_ohm < 0:
            raise ValueError(f"fault_impedance_ohm must be >= 0, got {self.fault_impedance_ohm}")
        if not (math.isfinite(self.source_ohm) and self.source_ohm > 0):
            raise ValueError(f"source_ohm must be positive, got {self.source_ohm}")
        if not math.isfinite(self.onset_s) or self.onset_s < 0:
            raise ValueError(f"onset_s must be finite and >= 0, got {self.onset_s}")

    @property
    def phase_indices(self) -> tuple[int, ...]:
        return tuple(PHASES.index(p) for p in self.affected_phases)


@dataclass(frozen=True)
class ThreePhaseWaveform:
    phase_a: DiscreteSignal
    phase_b: DiscreteSignal
    phase_c: DiscreteSignal
    current_a: DiscreteSignal
    current_b: DiscreteSignal
    current_c: DiscreteSignal
    nominal_voltage_kv: float  # line-to-line RMS
    frequency_hz: float
    load_ohm: float
    fault: FaultScenario | None = None

    def __post_init__(self):
        sigs = self.voltages + self.currents
        rates = {s.sample_rate for s in sigs}
        lengths = {len(s) for s in sigs}
        if len(rates) != 1 or len(lengths) != 1:
            raise ValueError("all phase signals must share sample rate and length")

    @property
    def voltages(self) -> tuple[DiscreteSignal, DiscreteSignal, DiscreteSignal]:
        return (self.phase_a, self.phase_b, self.phase_c)

    @property
    def currents(self) -> tuple[DiscreteSignal, DiscreteSignal, DiscreteSignal]:
        return (self.current_a, self.current_b, self.current_c)

    @property
    def sample_rate(self) -> float:
        return self.phase_a.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.phase_a.times

    @property
    def peak_voltage(self) -> float:
        """Nominal per-phase peak: ``kV * 1e3 * sqrt(2) / sqrt(3)``."""
        return phase_peak_voltage(self.nominal_voltage_kv)

    def voltage(self, phase: str) -> DiscreteSignal:
        return self.voltages[PHASES.index(phase)]

    def current(self, phase: str) -> DiscreteSignal:
        return self.currents[PHASES.index(phase)]

    def columns(self) -> dict[str, np.ndarray]:
        names = ("va", "vb", "vc", "ia", "ib", "ic")
        return {n: s.samples for n, s in zip(names, self.voltages + self.currents)}


def phase_peak_voltage(nominal_kv: float) -> float:
    return nominal_kv * 1e3 * math.sqrt(2) / math.sqrt(3)


def generate_three_phase(
    nominal_kv: float = 138.0,
    freq_hz: float = 60.0,
    load_ohm: float = 1000.0,
    duration_s: float = 0.2,
    sample_rate_hz: float = 2.4e6,
) -> ThreePhaseWaveform:
    """Balanced abc-sequence voltages with in-phase resistive load currents."""
    if load_ohm == 0:
        raise ValueError("load_ohm must be non-zero (a zero load is a short circuit)")
    for name, value in (
        ("nominal_kv", nominal_kv), ("freq_hz", freq_hz), ("load_ohm", load_ohm),
        ("duration_s", duration_s), ("sample_rate_hz", sample_rate_hz),
    ):
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be positive, got {value}")
    if freq_hz >= sample_rate_hz / 2:
        raise ValueError(f"power frequency {freq_hz} Hz at or above Nyquist {sample_rate_hz / 2} Hz")
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    peak = phase_peak_voltage(nominal_kv)
    shifts = (0.0, -2 * np.pi / 3, 2 * np.pi / 3)
    volts = [peak * np.sin(2 * np.pi * freq_hz * t + s) for s in shifts]
    sigs = [DiscreteSignal(v, sample_rate_hz) for v in volts]
    amps = [DiscreteSignal(v / load_ohm, sample_rate_hz) for v in volts]
    return ThreePhaseWaveform(*sigs, *amps, nominal_kv, freq_hz, load_ohm)


@lru_cache(maxsize=64)
def _bus_matrix(fault_type: str, phases: tuple[int, ...], zf: float, zs: float, load: float) -> np.ndarray:
    """Matrix ``M`` with ``v_bus = M @ e_source`` once the fault is in place."""
    y = 1.0 / max(zf, MIN_FAULT_OHM)
    floating_star = fault_type == "L-L-L"
    size = 4 if floating_star else 3
    ybus = np.zeros((size, size))
    for k in range(3):
        ybus[k, k] = 1 / zs + 1 / load
    if fault_type == "L-L":
        a, b = phases
        ybus[a, a] += y
        ybus[b, b] += y
        ybus[a, b] -= y
        ybus[b, a] -= y
    elif floating_star:
        # each phase through Zf to an ungrounded common point
        for k in range(3):
            ybus[k, k] += y
            ybus[k, 3] -= y
            ybus[3, k] -= y
        ybus[3, 3] = 3 * y
    else:
        # L-G, L-L-G, L-L-L-G: each faulted phase through Zf to ground
        for k in phases:
            ybus[k, k] += y
    inject = np.zeros((size, 3))
    inject[:3, :3] = np.eye(3) / zs
    return np.linalg.solve(ybus, inject)[:3]


def fault_sag_ratios(waveform: ThreePhaseWaveform, scenario: FaultScenario) -> np.ndarray:
    """Post-fault over pre-fault voltage amplitude for phases a, b, c."""
    if math.isinf(scenario.fault_impedance_ohm):
        return np.ones(3)
    m = _bus_matrix(
        scenario.fault_type, scenario.phase_indices, scenario.fault_impedance_ohm,
        scenario.source_ohm, waveform.load_ohm,
    )
    phasors = np.exp(1j * np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3]))
    # the EMF scale cancels in the ratio: v_pre = e * load / (load + zs)
    pre = waveform.load_ohm / (waveform.load_ohm + scenario.source_ohm)
    return np.abs(m @ phasors) / pre


def inject_fault(waveform: ThreePhaseWaveform, scenario: FaultScenario) -> ThreePhaseWaveform:
    """Apply ``scenario`` from its onset on; earlier samples are returned untouched.

    The source EMF is recovered from the pre-fault voltages, so the function
    assumes an unfaulted input waveform. Phases outside an L-G or L-L fault are
    left bit-identical; an infinite fault impedance means no fault at all.
    """
    if waveform.fault is not None:
        raise ValueError("waveform already carries a fault")
    duration = len(waveform.phase_a) / waveform.sample_rate
    if not 0 <= scenario.onset_s < duration:
        raise ValueError(f"onset {scenario.onset_s} s outside the waveform duration [0, {duration}) s")
    if math.isinf(scenario.fault_impedance_ohm):
        return waveform

    start = int(math.ceil(scenario.onset_s * waveform.sample_rate - 1e-9))
    zs, load = scenario.source_ohm, waveform.load_ohm
    v = np.stack([s.samples for s in waveform.voltages])
    i = np.stack([s.samples for s in waveform.currents])
    emf = v[:, start:] * ((load + zs) / load)
    m = _bus_matrix(scenario.fault_type, scenario.phase_indices, scenario.fault_impedance_ohm, zs, load)
    v_post = m @ emf

    touched = range(3) if scenario.fault_type.startswith("L-L-L") else scenario.phase_indices
    v_new, i_new = v.copy(), i.copy()
    for k in touched:
        v_new[k, start:] = v_post[k]
        i_new[k, start:] = (emf[k] - v_post[k]) / zs
    fs = waveform.sample_rate
    return ThreePhaseWaveform(
        *(DiscreteSignal(row, fs) for row in v_new),
        *(DiscreteSignal(row, fs) for row in i_new),
        waveform.nominal_voltage_kv, waveform.frequency_hz, load, scenario,
    )


def couple_carrier(
    waveform: ThreePhaseWaveform,
    carrier_hz: float = 250e3,
    amplitude: float = 1.0,
    phase: str = "a",
) -> DiscreteSignal:
    """Pilot carrier superposed on one phase voltage.

    After a fault onset the carrier is scaled by that phase's voltage sag: a
    bolted fault shorts the line and removes almost all of it.
    """
    k = PHASES.index(phase)
    fs = waveform.sample_rate
    if not 0 < carrier_hz < fs / 2:
        raise ValueError(f"carrier {carrier_hz} Hz outside (0, {fs / 2}) Hz")
    t = waveform.times
    gain = np.ones(t.size)
    if waveform.fault is not None:
        start = int(math.ceil(waveform.fault.onset_s * fs - 1e-9))
        gain[start:] = fault_sag_ratios(waveform, waveform.fault)[k]
    pilot = amplitude * gain * np.sin(2 * np.pi * carrier_hz * t)
    return DiscreteSignal(waveform.voltages[k].samples + pilot, fs)


# --- relays -------------------------------------------------------------------


@dataclass(frozen=True)
class RelayEvent:
    mechanism: Literal["carrier_sense", "impedance"]
    tripped: bool
    trip_time_s: float | None = None
    latency_cycles: float | None = None  # (trip_time - onset) * frequency
    status: str = "ok"

    def csv_row(self) -> str:
        t = "" if self.trip_time_s is None else f"{self.trip_time_s:.9g}"
        lat = "" if self.latency_cycles is None else f"{self.latency_cycles:.9g}"
        return f"{self.mechanism},{str(self.tripped).lower()},{t},{lat}"


RELAY_HEADER = "mechanism,tripped,trip_time_s,latency_cycles"


def relay_log_csv(events) -> str:
    return RELAY_HEADER + "\n" + "".join(e.csv_row() + "\n" for e in events)


def _window_samples(sample_rate: float, power_freq_hz: float, window_cycles: float) -> int:
    if window_cycles < 1:
        raise ValueError(f"window_cycles must be >= 1, got {window_cycles}")
    if power_freq_hz <= 0:
        raise ValueError(f"power_freq_hz must be positive, got {power_freq_hz}")
    return max(1, int(round(window_cycles * sample_rate / power_freq_hz)))


def _window_means(x: np.ndarray, w: int) -> np.ndarray:
    """Mean of ``x[k - w + 1 : k + 1]`` for every ``k >= w - 1``."""
    c = np.concatenate([[0.0], np.cumsum(x)])
    return (c[w:] - c[:-w]) / w


def _event(mechanism, end_index, sample_rate, power_freq_hz, onset_s, status="ok") -> RelayEvent:
    if end_index is None:
        return RelayEvent(mechanism, False, status=status)
    trip = end_index / sample_rate
    latency = None if onset_s is None else max(0.0, (trip - onset_s) * power_freq_hz)
    return RelayEvent(mechanism, True, trip, latency, status)


@lru_cache(maxsize=16)
def _carrier_filter(carrier_hz: float, sample_rate: float) -> FirFilter:
    return design_fir("bandpass", carrier_hz, CARRIER_FILTER_BW_HZ, CARRIER_FILTER_TAPS, sample_rate, CARRIER_FILTER_WINDOW)


def carrier_power(line_signal: DiscreteSignal, carrier_hz: float) -> np.ndarray:
    """Instantaneous power of the band-passed pilot carrier."""
    return filter_samples(line_signal.samples, _carrier_filter(float(carrier_hz), line_signal.sample_rate)) ** 2


def carrier_sense_relay(
    line_signal: DiscreteSignal,
    carrier_hz: float,
    threshold_ratio: float = 0.5,
    window_cycles: float = 1.0,
    power_freq_hz: float = 60.0,
    onset_s: float | None = None,
) -> RelayEvent:
    """Loss-of-carrier trip.

    The baseline is the mean carrier power over the first full window after
    the band-pass filter has settled; that window must end by ``onset_s``
    when an onset is given. Windows ending no later than the baseline window
    are not evaluated.
    """
    if not threshold_ratio > 0:
        raise ValueError(f"threshold_ratio must be positive, got {threshold_ratio}")
    fs = line_signal.sample_rate
    w = _window_samples(fs, power_freq_hz, window_cycles)
    settle = CARRIER_FILTER_TAPS // 2
    base_end = settle + w  # exclusive
    if base_end > len(line_signal) or (onset_s is not None and base_end > onset_s * fs + 1e-9):
        raise ValueError(
            f"no pre-fault baseline window: need {base_end / fs:.6g} s of signal before "
            f"{'the end of the record' if onset_s is None else f'onset {onset_s} s'}"
        )
    means = _window_means(carrier_power(line_signal, carrier_hz), w)
    baseline = means[settle]
    if baseline <= 0:
        raise ValueError("no carrier present in the baseline window")
    # means[j] covers samples j .. j + w - 1; its window ends at time (j + w - 1) / fs
    candidates = np.flatnonzero(means[settle + 1 :] < threshold_ratio * baseline)
    end = None if candidates.size == 0 else int(candidates[0]) + settle + 1 + w - 1
    return _event("carrier_sense", end, fs, power_freq_hz, onset_s)


def impedance_relay(
    voltage_signal: DiscreteSignal,
    current_signal: DiscreteSignal,
    reach_ohm: float,
    window_cycles: float = 1.0,
    power_freq_hz: float = 60.0,
    onset_s: float | None = None,
    current_floor_a: float = CURRENT_FLOOR_A,
) -> RelayEvent:
    """Distance relay on the apparent impedance RMS(V) / RMS(I) of each sliding window.

    Windows whose RMS current is below ``current_floor_a`` are never trips;
    if no window carries current the event status is ``"no_current"``.
    """
    if len(voltage_signal) != len(current_signal) or voltage_signal.sample_rate != current_signal.sample_rate:
        raise ValueError("voltage and current signals must be aligned and share a sample rate")
    if not reach_ohm > 0:
        raise ValueError(f"reach_ohm must be positive, got {reach_ohm}")
    fs = voltage_signal.sample_rate
    w = _window_samples(fs, power_freq_hz, window_cycles)
    if w > len(voltage_signal):
        raise ValueError(f"signal shorter than one {window_cycles}-cycle window")
    v_rms = np.sqrt(np.maximum(_window_means(voltage_signal.samples**2, w), 0.0))
    i_rms = np.sqrt(np.maximum(_window_means(current_signal.samples**2, w), 0.0))
    live = i_rms >= current_floor_a
    if not np.any(live):
        return RelayEvent("impedance", False, status="no_current")
    z = np.full(v_rms.size, np.inf)
    z[live] = v_rms[live] / i_rms[live]
    candidates = np.flatnonzero(z < reach_ohm * (1 - REACH_GUARD))
    end = None if candidates.size == 0 else int(candidates[0]) + w - 1
    return _event("impedance", end, fs, power_freq_hz, onset_s)
