"""Monte-Carlo link trials, Eb/N0 sweeps, closed-form references and scheme ranking."""

from __future__ import annotations

import cmath
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .channel import LineChannel, propagate, transfer_gain
from .dsp import NoiseSpec, delay_search, noise_samples, shift_back
from .modem import DEFAULT_RX_BANDWIDTH_HZ, ModemConfig, Scheme, demodulate, front_end, modulate

# Below this normalised correlation peak the receiver is declared unsynchronised.
MIN_ALIGNMENT_PEAK = 0.2
# Samples of the transmit waveform used for delay search.
ALIGN_WINDOW = 1 << 18

STATUS_OK = "ok"
STATUS_ALIGNMENT_FAILURE = "alignment_failure"
STATUS_ERROR = "error"

THEORY_FORMULAS = {
    Scheme.BPSK: "coherent BPSK: Q(sqrt(2*g))",
    Scheme.BFSK: "noncoherent orthogonal BFSK: 0.5*exp(-g/2)",
    Scheme.ASK: "noncoherent OOK: 0.5*exp(-g/4)",
}


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2))


def theoretical_ber(scheme: Scheme | str, ebn0_db: float) -> float:
    """Closed-form AWGN BER; ``g`` is Eb/N0 as a linear ratio (see ``THEORY_FORMULAS``)."""
    scheme = Scheme(scheme)
    g = 10 ** (ebn0_db / 10) if ebn0_db != -math.inf else 0.0
    if scheme is Scheme.BPSK:
        return q_function(math.sqrt(2 * g))
    if scheme is Scheme.BFSK:
        return 0.5 * math.exp(-g / 2)
    return 0.5 * math.exp(-g / 4)


@dataclass(frozen=True)
class TrialSpec:
    scheme: Scheme
    channel: LineChannel = field(default_factory=LineChannel)
    ebn0_db: float = 10.0
    n_bits: int = 1000
    base_seed: int = 0
    modem: ModemConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.n_bits < 1:
            raise ValueError(f"n_bits must be >= 1, got {self.n_bits}")
        if math.isnan(self.ebn0_db):
            raise ValueError("ebn0_db is NaN")

    def modem_config(self) -> ModemConfig:
        if self.modem is None:
            return ModemConfig(scheme=self.scheme)
        return replace(self.modem, scheme=self.scheme)


@dataclass(frozen=True)
class BerReport:
    scheme: Scheme
    ebn0_db: float
    bits_sent: int
    bit_errors: int
    ber: float
    ci_halfwidth_95: float
    aligned_lag: int
    elapsed_s: float
    status: str = STATUS_OK
    alignment_peak: float = 1.0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    @property
    def sigma(self) -> float:
        """Binomial standard error of the measured BER."""
        return math.sqrt(self.ber * (1 - self.ber) / self.bits_sent) if self.ok else math.nan

    def data_fields(self) -> tuple:
        """Everything except wall-clock time."""
        return (
            self.scheme, self.ebn0_db, self.bits_sent, self.bit_errors, self.ber,
            self.ci_halfwidth_95, self.aligned_lag, self.status, self.alignment_peak,
        )


def _seeds(base_seed: int) -> tuple[np.random.Generator, int]:
    bit_ss, noise_ss = np.random.SeedSequence(base_seed).spawn(2)
    return np.random.default_rng(bit_ss), int(noise_ss.generate_state(1, np.uint64)[0])


def noise_power_for(clean_power: float, samples_per_bit: int, ebn0_db: float) -> float:
    """Per-sample noise variance giving the requested Eb/N0 for a real passband signal.

    Eb = P * spb / fs and the two-sided PSD N0/2 sampled at fs has variance
    N0 * fs / 2, so the variance is ``P * spb / (2 * Eb/N0)``.
    """
    if ebn0_db == math.inf:
        return 0.0
    return clean_power * samples_per_bit / (2 * 10 ** (ebn0_db / 10))


def run_trial(spec: TrialSpec) -> BerReport:
    """One seeded end-to-end transmission.

    Random bits are modulated and propagated; white (or the channel's
    configured kind of) noise is added at the demodulator input with a
    variance set from the measured received bit energy. The receiver delay
    is found by correlating the transmit waveform with the band-passed
    receive waveform, then the compensated signal is demodulated.
    """
    t0 = time.perf_counter()
    cfg = spec.modem_config()
    cfg.check_band(spec.channel.band_low_hz, spec.channel.band_high_hz)
    rng, noise_seed = _seeds(spec.base_seed)
    bits = rng.integers(0, 2, spec.n_bits, dtype=np.uint8)

    tx = modulate(bits, cfg)
    # noise is set from Eb/N0 below, not from the channel's own noise spec
    prop = propagate(tx, replace(spec.channel, noise=NoiseSpec(kind=spec.channel.noise.kind)))
    # bit energy counts only what lies in the allocated band; the line's
    # large low-frequency gain lifts out-of-band leakage the receiver rejects anyway
    power = noise_power_for(prop.inband_power, cfg.samples_per_bit, spec.ebn0_db)
    rx = prop.signal.samples
    if power > 0:
        rx = rx + noise_samples(rx.size, NoiseSpec(kind=spec.channel.noise.kind, seed=noise_seed), power)

    spb = cfg.samples_per_bit
    max_lag = spb // 2
    window = min(tx.samples.size, ALIGN_WINDOW)
    # a matched-filter receiver still synchronises on the band-limited signal;
    # full-band noise would bury the correlation peak at low Eb/N0
    sync = cfg if cfg.rx_bandpass_bw_hz is not None else replace(cfg, rx_bandpass_bw_hz=DEFAULT_RX_BANDWIDTH_HZ)
    filtered = front_end(rx[: window + max_lag], sync)
    if not np.any(tx.samples[:window]):
        lag, peak = 0, 1.0  # nothing transmitted to align on (all-zero OOK)
    else:
        lag, peak = delay_search(tx.samples[:window], filtered, min(max_lag, filtered.size - 1))

    def report(errors: int, status: str, message: str = "") -> BerReport:
        if status == STATUS_OK:
            ber = errors / spec.n_bits
            ci = 1.96 * math.sqrt(ber * (1 - ber) / spec.n_bits)
        else:
            ber = ci = math.nan
        return BerReport(
            spec.scheme, spec.ebn0_db, spec.n_bits, errors, ber, ci, lag,
            time.perf_counter() - t0, status, peak, message,
        )

    if peak < MIN_ALIGNMENT_PEAK:
        return report(0, STATUS_ALIGNMENT_FAILURE, f"correlation peak {peak:.3f} < {MIN_ALIGNMENT_PEAK}")

    aligned = prop.signal.replace(shift_back(rx, lag))
    # genie carrier phase: channel phase at the carrier plus the removed lag
    phase = 0.0
    if cfg.scheme is Scheme.BPSK:
        phase = cmath.phase(transfer_gain(spec.channel, cfg.carrier_hz))
        phase += 2 * math.pi * cfg.carrier_hz * lag / cfg.sample_rate_hz
    decoded = demodulate(aligned, cfg, phase)
    errors = int(np.count_nonzero(decoded != bits[: decoded.size]))
    return report(errors, STATUS_OK)


def matched_filter_link(scheme: Scheme | str, modem: ModemConfig | None = None) -> tuple[LineChannel, ModemConfig]:
    """AWGN-only link with an ideal receiver, the setting of :func:`theoretical_ber`.

    The channel is the identity with its band opened to (1 kHz, 0.99 * Nyquist)
    so bit energy counts the whole signal, and the receiver skips its
    front-end bandpass so per-bit integration is the matched filter.
    """
    base = modem or ModemConfig()
    cfg = replace(base, scheme=Scheme(scheme), rx_bandpass_bw_hz=None)
    channel = LineChannel.identity(band_low_hz=1e3, band_high_hz=0.99 * cfg.sample_rate_hz / 2)
    return channel, cfg


def cell_seed(base_seed: int, scheme_index: int, ebn0_index: int) -> int:
    """Decorrelated 64-bit seed for one sweep cell: SeedSequence over (base, scheme, point)."""
    ss = np.random.SeedSequence([base_seed, scheme_index, ebn0_index])
    return int(ss.generate_state(1, np.uint64)[0])


def ber_sweep(
    schemes: Sequence[Scheme | str],
    ebn0_list_db: Sequence[float],
    n_bits: int,
    channel: LineChannel | None = None,
    base_seed: int = 0,
    modem: ModemConfig | None = None,
    workers: int = 1,
) -> list[BerReport]:
    """One report per (scheme, Eb/N0), ordered scheme-major regardless of completion order."""
    if not schemes or not ebn0_list_db:
        raise ValueError("schemes and ebn0_list_db must be non-empty")
    channel = channel or LineChannel()
    cells = [
        (i, j, Scheme(s), float(g))
        for i, s in enumerate(schemes)
        for j, g in enumerate(ebn0_list_db)
    ]

    def run(cell) -> BerReport:
        i, j, scheme, g = cell
        spec = TrialSpec(scheme, channel, g, n_bits, cell_seed(base_seed, i, j), modem)
        try:
            return run_trial(spec)
        except Exception as exc:  # a failed cell must not abort the sweep
            return BerReport(scheme, g, n_bits, 0, math.nan, math.nan, 0, 0.0, STATUS_ERROR, math.nan, str(exc))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


SWEEP_HEADER = "scheme,ebn0_db,bits,errors,ber,ci95,theory_ber,status"


def sweep_csv(reports: Iterable[BerReport]) -> str:
    buf = io.StringIO()
    buf.write(SWEEP_HEADER + "\n")
    for r in reports:
        buf.write(
            f"{r.scheme},{r.ebn0_db:.9g},{r.bits_sent},{r.bit_errors},{r.ber:.9g},"
            f"{r.ci_halfwidth_95:.9g},{theoretical_ber(r.scheme, r.ebn0_db):.9g},{r.status}\n"
        )
    return buf.getvalue()


# --- ranking ---------------------------------------------------------------


def significantly_different(a: BerReport, b: BerReport, n_sigma: float = 3.0) -> bool:
    """BER gap exceeds ``n_sigma`` combined binomial standard errors."""
    spread = math.hypot(a.sigma, b.sigma)
    gap = abs(a.ber - b.ber)
    if spread == 0:
        return gap > 0
    return gap > n_sigma * spread


@dataclass(frozen=True)
class RankRow:
    ebn0_db: float
    order: tuple[Scheme, ...]  # best (lowest BER) first
    bers: tuple[float, ...]
    significant: tuple[bool, ...]  # for each adjacent pair in ``order``


@dataclass(frozen=True)
class Ranking:
    rows: tuple[RankRow, ...]
    worst: Scheme
    verdict: str

    def table(self) -> str:
        lines = ["ebn0_db,ranking_best_to_worst,ber,significant"]
        for row in self.rows:
            flags = ["significant" if s else "not significant" for s in row.significant]
            lines.append(
                f"{row.ebn0_db:g},{' > '.join(map(str, row.order))},"
                f"{' '.join(f'{b:.3g}' for b in row.bers)},{' '.join(flags) or '-'}"
            )
        lines.append(self.verdict)
        return "\n".join(lines)


def compare_schemes(reports: Sequence[BerReport], n_sigma: float = 3.0) -> Ranking:
    """Rank schemes by BER at each Eb/N0 shared by every scheme."""
    measured = [r for r in reports if r.ok]
    if not measured:
        raise ValueError("no measured reports to compare")
    grids: dict[Scheme, list[float]] = {}
    for r in measured:
        grids.setdefault(r.scheme, []).append(r.ebn0_db)
    grid_sets = {s: sorted(g) for s, g in grids.items()}
    reference = next(iter(grid_sets.values()))
    for s, g in grid_sets.items():
        if g != reference:
            raise ValueError(f"Eb/N0 grid of {s} {g} differs from {reference}")

    rows = []
    worst_count: dict[Scheme, int] = {}
    for g in reference:
        at = sorted((r for r in measured if r.ebn0_db == g), key=lambda r: (r.ber, r.scheme.value))
        sig = tuple(significantly_different(a, b, n_sigma) for a, b in zip(at, at[1:]))
        rows.append(RankRow(g, tuple(r.scheme for r in at), tuple(r.ber for r in at), sig))
        worst_count[at[-1].scheme] = worst_count.get(at[-1].scheme, 0) + 1
    worst = max(worst_count, key=lambda s: (worst_count[s], s.value))
    verdict = f"worst scheme: {worst} (highest BER at {worst_count[worst]} of {len(rows)} Eb/N0 points)"
    return Ranking(tuple(rows), worst, verdict)
