"""Simulation of narrowband power-line carrier links and line protection."""

from .ber import BerReport, TrialSpec, ber_sweep, compare_schemes, matched_filter_link, run_trial, theoretical_ber
from .channel import LineChannel, channel_fir, propagate, transfer_gain
from .dsp import DiscreteSignal, FirFilter, NoiseSpec, apply_filter, design_fir, generate_carrier, spectrum
from .fault import (
    FaultScenario,
    RelayEvent,
    ThreePhaseWaveform,
    carrier_sense_relay,
    generate_three_phase,
    impedance_relay,
    inject_fault,
)
from .modem import ModemConfig, Scheme, demodulate, modulate

__all__ = [
    "BerReport", "DiscreteSignal", "FaultScenario", "FirFilter", "LineChannel", "ModemConfig",
    "NoiseSpec", "RelayEvent", "Scheme", "ThreePhaseWaveform", "TrialSpec", "apply_filter",
    "ber_sweep", "carrier_sense_relay", "channel_fir", "compare_schemes", "demodulate",
    "design_fir", "generate_carrier", "generate_three_phase", "impedance_relay", "inject_fault",
    "matched_filter_link",
    "modulate", "propagate", "run_trial", "spectrum", "theoretical_ber", "transfer_gain",
]
