"""``plcsim`` command line: one verb per pipeline, CSV files out.

Exit status: 0 success, 2 configuration or usage error, 3 alignment failure
in a BER sweep, 4 runtime error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import ber, channel, dsp, fault, modem
from .config import ConfigError, RunConfig, keys_help, parse_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALIGNMENT = 3
EXIT_RUNTIME = 4


class AlignmentFailure(RuntimeError):
    pass


def line_channel(cfg: RunConfig) -> channel.LineChannel:
    snr = cfg.channel_snr_db
    noise = dsp.NoiseSpec(kind=cfg.noise_kind, snr_db=snr, seed=cfg.base_seed)
    return channel.LineChannel(
        r_per_m=cfg.r_per_m, l_per_m=cfg.l_per_m, length_m=cfg.length_m,
        termination_ohm=cfg.termination_ohm, band_low_hz=cfg.band_low_hz,
        band_high_hz=cfg.band_high_hz, power_freq_hz=cfg.power_freq_hz,
        power_amplitude=cfg.power_amplitude, noise=noise,
        agc_enabled=cfg.agc_enabled, fir_taps=cfg.fir_taps,
    )


def modem_config(cfg: RunConfig, scheme: str | None = None) -> modem.ModemConfig:
    return modem.ModemConfig(
        scheme=scheme or cfg.scheme, bit_rate_hz=cfg.bit_rate_hz, carrier_hz=cfg.carrier_hz,
        deviation_hz=cfg.deviation_hz, amplitude=cfg.amplitude, sample_rate_hz=cfg.sample_rate_hz,
        rx_bandpass_center_hz=cfg.carrier_hz, rx_bandpass_bw_hz=cfg.rx_bandpass_bw_hz,
        rx_bandpass_taps=cfg.rx_bandpass_taps,
    )


def _bits(cfg: RunConfig) -> np.ndarray:
    if cfg.bits_file:
        return modem.parse_bit_string(Path(cfg.bits_file).read_text())
    return np.random.default_rng(cfg.base_seed).integers(0, 2, cfg.n_bits, dtype=np.uint8)


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text)
    return path


# --- verbs ------------------------------------------------------------------


def run_modulate(cfg: RunConfig, out: Path) -> str:
    mc = modem_config(cfg)
    bits = _bits(cfg)
    wave = modem.modulate(bits, mc)
    _write(out, "bits.txt", modem.format_bit_string(bits) + "\n")
    wave.to_csv(out / "modulated.csv")
    return f"modulate: {bits.size} bits {mc.scheme} -> {len(wave)} samples in {out / 'modulated.csv'}"


def run_demodulate(cfg: RunConfig, out: Path) -> str:
    mc = modem_config(cfg)
    source = Path(cfg.input_csv) if cfg.input_csv else out / "modulated.csv"
    wave = dsp.DiscreteSignal.from_csv(source, cfg.sample_rate_hz)
    bits = modem.demodulate(wave, mc, math.radians(cfg.carrier_phase_deg))
    _write(out, "demodulated.txt", modem.format_bit_string(bits) + "\n")
    return f"demodulate: {source} -> {bits.size} bits {mc.scheme} in {out / 'demodulated.txt'}"


def run_channel_response(cfg: RunConfig, out: Path) -> str:
    ch = line_channel(cfg)
    freqs = np.linspace(0.0, cfg.response_max_hz, cfg.response_points)
    table = channel.frequency_response_table(ch, freqs)
    lines = ["freq_hz,mag,phase_deg"] + [f"{f:.9g},{m:.9g},{p:.9g}" for f, m, p in table]
    _write(out, "channel_response.csv", "\n".join(lines) + "\n")
    return f"channel-response: |H(0)| = {table[0, 1]:.6f}, {len(freqs)} points in {out / 'channel_response.csv'}"


def run_ber_sweep(cfg: RunConfig, out: Path) -> str:
    ch = line_channel(cfg)
    if cfg.sweep_channel == "awgn":
        ch = channel.LineChannel.identity(band_low_hz=ch.band_low_hz, band_high_hz=ch.band_high_hz)
    reports = ber.ber_sweep(
        cfg.sweep_schemes, cfg.ebn0_db_list, cfg.sweep_bits, ch, cfg.base_seed,
        modem_config(cfg), workers=cfg.workers,
    )
    _write(out, "ber_sweep.csv", ber.sweep_csv(reports))
    failed = [r for r in reports if r.status == ber.STATUS_ALIGNMENT_FAILURE]
    errored = [r for r in reports if r.status == ber.STATUS_ERROR]
    summary = f"ber-sweep: {len(reports)} cells x {cfg.sweep_bits} bits in {out / 'ber_sweep.csv'}"
    if errored:
        raise RuntimeError(f"{summary}; {len(errored)} cells raised: {errored[0].message}")
    if failed:
        raise AlignmentFailure(f"{summary}; {len(failed)} cells failed alignment")
    if len(set(cfg.sweep_schemes)) > 1:
        summary += "; " + ber.compare_schemes(reports).verdict
    return summary


def run_fault_sim(cfg: RunConfig, out: Path) -> str:
    wave = fault.generate_three_phase(
        cfg.nominal_kv, cfg.power_freq_hz, cfg.load_ohm, cfg.duration_s, cfg.fault_sample_rate_hz
    )
    scenario = fault.FaultScenario(
        cfg.fault_type, cfg.fault_onset_s, cfg.fault_impedance_ohm,
        cfg.affected_phases or None, cfg.source_ohm,
    )
    faulted = fault.inject_fault(wave, scenario)
    line = fault.couple_carrier(faulted, cfg.carrier_hz, cfg.pilot_amplitude, "a")
    common = dict(window_cycles=cfg.relay_window_cycles, power_freq_hz=cfg.power_freq_hz, onset_s=cfg.fault_onset_s)
    events = [
        fault.carrier_sense_relay(line, cfg.carrier_hz, cfg.carrier_threshold_ratio, **common),
        fault.impedance_relay(faulted.phase_a, faulted.current_a, cfg.reach_ohm, **common),
    ]
    step = cfg.csv_decimation
    cols = {k: v[::step] for k, v in faulted.columns().items()}
    _write(out, "fault_waveform.csv", dsp.signals_to_csv(faulted.times[::step], cols))
    _write(out, "relay_events.csv", fault.relay_log_csv(events))
    trips = ", ".join(
        f"{e.mechanism} trip at {e.trip_time_s:.4f} s ({e.latency_cycles:.2f} cycles)" if e.tripped
        else f"{e.mechanism} no trip ({e.status})"
        for e in events
    )
    return f"fault-sim: {cfg.fault_type} at {cfg.fault_onset_s} s; {trips}"


def run_spectrum(cfg: RunConfig, out: Path) -> str:
    if cfg.input_csv:
        wave = dsp.DiscreteSignal.from_csv(cfg.input_csv, cfg.sample_rate_hz)
    else:
        wave = modem.modulate(_bits(cfg), modem_config(cfg))
    spec = dsp.spectrum(wave, cfg.spectrum_window)
    spec.to_csv(out / "spectrum.csv")
    return f"spectrum: {spec.bin_freqs.size} bins, peak at {spec.peak_frequency():.6g} Hz in {out / 'spectrum.csv'}"


VERBS: dict[str, Callable[[RunConfig, Path], str]] = {
    "modulate": run_modulate,
    "demodulate": run_demodulate,
    "channel-response": run_channel_response,
    "ber-sweep": run_ber_sweep,
    "fault-sim": run_fault_sim,
    "spectrum": run_spectrum,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plcsim",
        description="Power-line carrier link and fault-protection simulator.",
        epilog=keys_help() + "\n\nexit status: 0 ok, 2 config/usage error, 3 alignment failure, 4 runtime error",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        allow_abbrev=False,
    )
    parser.add_argument("verb", choices=sorted(VERBS), help="pipeline to run")
    parser.add_argument("--config", metavar="FILE", help="flat key = value configuration file")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)  # unknown verb: argparse prints usage, exits 2
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text, rest)
    except (ConfigError, OSError) as exc:
        print(f"plcsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        print(VERBS[args.verb](cfg, out))
    except AlignmentFailure as exc:
        print(f"plcsim: alignment failure: {exc}", file=sys.stderr)
        return EXIT_ALIGNMENT
    except Exception as exc:  # reported as a runtime error exit code
        print(f"plcsim: {args.verb} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
