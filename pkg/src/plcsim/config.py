"""Flat ``key = value`` run configuration with per-key provenance.

Effective values are layered defaults <- config file <- environment (output
directory only) <- command-line flags. Every key has a type, a unit and a
range check; unknown keys and bad values raise :class:`ConfigError` naming
the key.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

ENV_OUTPUT_DIR = "PLCSIM_OUTPUT_DIR"


class ConfigError(ValueError):
    """Bad configuration input; the message names the offending key."""


@dataclass(frozen=True)
class Param:
    key: str
    default: Any
    parse: Callable[[str], Any]
    unit: str
    help: str
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("NaN is not allowed")
    return value


def _int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else _float(text)


def _float_list(text: str) -> tuple[float, ...]:
    items = [s for s in text.replace(";", ",").split(",") if s.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(_float(s) for s in items)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        value = text.strip()
        for opt in options:
            if value.lower() == opt.lower():
                return opt
        raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")

    return parse


def _scheme_list(text: str) -> tuple[str, ...]:
    one = _choice("ASK", "BFSK", "BPSK")
    items = tuple(one(s) for s in text.split(",") if s.strip())
    if not items:
        raise ValueError("expected a comma-separated list of schemes")
    return items


def _text(text: str) -> str:
    return text.strip()


def _positive(v) -> bool:
    return math.isfinite(v) and v > 0


def _non_negative(v) -> bool:
    return math.isfinite(v) and v >= 0


_POS = dict(check=_positive, rule="must be > 0")
_NONNEG = dict(check=_non_negative, rule="must be >= 0")

PARAMS: tuple[Param, ...] = (
    # run plumbing
    Param("output_dir", "plcsim_out", _text, "path", "directory for output files (env PLCSIM_OUTPUT_DIR overrides the file)"),
    Param("base_seed", 0, _int, "-", "seed for every random draw", check=lambda v: 0 <= v < 2**64, rule="must be in [0, 2^64)"),
    # channel
    Param("r_per_m", 0.2, _float, "ohm/m", "series resistance per metre", **_NONNEG),
    Param("l_per_m", 5e-4, _float, "H/m", "series inductance per metre", **_NONNEG),
    Param("length_m", 9800.0, _float, "m", "line length", **_POS),
    Param("termination_ohm", 1000.0, _float, "ohm", "receiver termination resistance", **_POS),
    Param("band_low_hz", 99e3, _float, "Hz", "lower edge of the allocated band", **_POS),
    Param("band_high_hz", 400e3, _float, "Hz", "upper edge of the allocated band", **_POS),
    Param("power_freq_hz", 60.0, _float, "Hz", "power-system frequency", **_POS),
    Param("power_amplitude", 10.0, _float, "V", "60 Hz interference amplitude at the receiver", **_NONNEG),
    Param("noise_kind", "white", _choice("white", "one_over_f"), "-", "channel noise colour"),
    Param("channel_snr_db", None, _optional_float, "dB", "channel noise SNR against the received signal; none = noiseless"),
    Param("agc_enabled", True, _bool, "-", "rescale received in-band power to the transmitted in-band power"),
    Param("fir_taps", 1025, _int, "taps", "length of the channel FIR", check=lambda v: v >= 31 and v % 2 == 1, rule="must be odd and >= 31"),
    # modem
    Param("scheme", "BFSK", _choice("ASK", "BFSK", "BPSK"), "-", "modulation for modulate/demodulate/spectrum"),
    Param("bit_rate_hz", 10e3, _float, "bit/s", "bit rate", **_POS),
    Param("carrier_hz", 250e3, _float, "Hz", "carrier (BFSK centre) frequency", **_POS),
    Param("deviation_hz", 50e3, _float, "Hz", "BFSK tone offset from the centre", **_POS),
    Param("amplitude", 1.0, _float, "V", "transmit amplitude", **_POS),
    Param("sample_rate_hz", 2.4e6, _float, "Hz", "simulation sample rate", **_POS),
    Param("rx_bandpass_bw_hz", 150e3, _float, "Hz", "receiver bandpass width", **_POS),
    Param("rx_bandpass_taps", 301, _int, "taps", "receiver bandpass length", check=lambda v: v >= 31 and v % 2 == 1, rule="must be odd and >= 31"),
    Param("n_bits", 1000, _int, "bits", "random bits for modulate/spectrum when no bits file is given", check=lambda v: v >= 1, rule="must be >= 1"),
    Param("bits_file", "", _text, "path", "ASCII 0/1 file for modulate; empty = random bits from base_seed"),
    Param("input_csv", "", _text, "path", "waveform CSV for demodulate/spectrum; empty = <output_dir>/modulated.csv (spectrum: fresh modulation)"),
    Param("carrier_phase_deg", 0.0, _float, "deg", "BPSK reference phase for demodulate"),
    # BER sweep
    Param("sweep_schemes", ("ASK", "BFSK", "BPSK"), _scheme_list, "-", "schemes in the sweep, comma-separated"),
    Param("ebn0_db_list", (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0), _float_list, "dB", "Eb/N0 points, comma-separated"),
    Param("sweep_bits", 10000, _int, "bits", "bits per sweep cell", check=lambda v: v >= 1, rule="must be >= 1"),
    Param("sweep_channel", "line", _choice("line", "awgn"), "-", "line = full channel model, awgn = identity channel"),
    Param("workers", 1, _int, "threads", "parallel sweep cells", check=lambda v: v >= 1, rule="must be >= 1"),
    # fault simulation
    Param("nominal_kv", 138.0, _float, "kV", "line-to-line RMS voltage", **_POS),
    Param("load_ohm", 1000.0, _float, "ohm", "per-phase resistive load", **_POS),
    Param("source_ohm", 5.0, _float, "ohm", "per-phase Thevenin source resistance", **_POS),
    Param("duration_s", 0.2, _float, "s", "fault simulation length", **_POS),
    Param("fault_type", "L-L-L-G", _choice("L-G", "L-L", "L-L-G", "L-L-L", "L-L-L-G"), "-", "fault type"),
    Param("fault_onset_s", 0.1, _float, "s", "fault onset time", **_NONNEG),
    Param("fault_impedance_ohm", 0.001, _float, "ohm", "fault resistance; inf = no fault", check=lambda v: v >= 0, rule="must be >= 0"),
    Param("affected_phases", "", _text, "-", "faulted phases, e.g. ab; empty = first phases of abc"),
    Param("fault_sample_rate_hz", 2.4e6, _float, "Hz", "fault simulation sample rate", **_POS),
    Param("pilot_amplitude", 1.0, _float, "V", "pilot carrier amplitude on phase a", **_POS),
    Param("relay_window_cycles", 1.0, _float, "cycles", "relay measurement window", check=lambda v: v >= 1, rule="must be >= 1"),
    Param("carrier_threshold_ratio", 0.5, _float, "-", "carrier-sense trip level as a fraction of baseline power", **_POS),
    Param("reach_ohm", 400.0, _float, "ohm", "impedance relay reach", **_POS),
    Param("csv_decimation", 100, _int, "samples", "keep every n-th sample in fault_waveform.csv", check=lambda v: v >= 1, rule="must be >= 1"),
    # spectrum / channel response
    Param("spectrum_window", "boxcar", _choice("boxcar", "hann", "hamming", "blackman"), "-", "spectrum window"),
    Param("response_points", 501, _int, "points", "frequencies in channel_response.csv", check=lambda v: v >= 2, rule="must be >= 2"),
    Param("response_max_hz", 500e3, _float, "Hz", "highest frequency in channel_response.csv", **_POS),
)

PARAM_BY_KEY: dict[str, Param] = {p.key: p for p in PARAMS}


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, Any]
    provenance: Mapping[str, str]  # "default" | "file" | "env" | "flag"

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def __getattr__(self, key: str) -> Any:
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None


def _convert(key: str, text: str, source: str) -> Any:
    param = PARAM_BY_KEY.get(key)
    if param is None:
        raise ConfigError(f"unknown key {key!r} ({source})")
    try:
        value = param.parse(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: malformed value {text!r} ({source}): {exc}") from None
    if param.check is not None and value is not None and not param.check(value):
        raise ConfigError(f"{key} = {text.strip()} out of range ({source}): {param.rule}")
    return value


def parse_file_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, blank lines are ignored."""
    entries: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {number}: missing key")
        if key in entries:
            raise ConfigError(f"{key}: set twice in the config file (line {number})")
        entries[key] = value
    return entries


def parse_flags(flags: Sequence[str]) -> dict[str, str]:
    """``--key value`` or ``--key=value`` pairs."""
    entries: dict[str, str] = {}
    items = list(flags)
    k = 0
    while k < len(items):
        item = items[k]
        if not item.startswith("--") or len(item) == 2:
            raise ConfigError(f"expected --key value, got {item!r}")
        body = item[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            k += 1
        else:
            if k + 1 >= len(items):
                raise ConfigError(f"{body}: flag given without a value")
            key, value = body, items[k + 1]
            k += 2
        entries[key.replace("-", "_")] = value
    return entries


def _cross_check(values: dict[str, Any]) -> None:
    if values["band_low_hz"] >= values["band_high_hz"]:
        raise ConfigError(f"band_low_hz ({values['band_low_hz']}) must be below band_high_hz ({values['band_high_hz']})")
    for key in ("carrier_hz", "band_high_hz", "response_max_hz"):
        if values[key] >= values["sample_rate_hz"] / 2:
            raise ConfigError(f"{key} = {values[key]} must be below Nyquist ({values['sample_rate_hz'] / 2} Hz)")
    if values["fault_onset_s"] >= values["duration_s"]:
        raise ConfigError(f"fault_onset_s = {values['fault_onset_s']} must be inside duration_s = {values['duration_s']}")


def parse_config(
    file_text: str = "",
    flag_list: Sequence[str] = (),
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    env = os.environ if env is None else env
    values = {p.key: p.default for p in PARAMS}
    provenance = {p.key: "default" for p in PARAMS}
    for key, text in parse_file_text(file_text).items():
        values[key] = _convert(key, text, "config file")
        provenance[key] = "file"
    if env.get(ENV_OUTPUT_DIR):
        values["output_dir"] = _convert("output_dir", env[ENV_OUTPUT_DIR], ENV_OUTPUT_DIR)
        provenance["output_dir"] = "env"
    for key, text in parse_flags(flag_list).items():
        values[key] = _convert(key, text, "flag")
        provenance[key] = "flag"
    _cross_check(values)
    return RunConfig(values, provenance)


def _format_default(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, tuple):
        return ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value) if value != "" else '""'


def keys_help() -> str:
    width = max(len(p.key) for p in PARAMS)
    lines = ["configuration keys (key = value in --config FILE, or --key value):"]
    for p in PARAMS:
        lines.append(f"  {p.key:<{width}}  [{p.unit}] default {_format_default(p.default)}: {p.help}")
    return "\n".join(lines)
