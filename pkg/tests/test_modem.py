import math

import numpy as np
import pytest
from scipy.signal import hilbert

from plcsim.ber import TrialSpec, run_trial
from plcsim.channel import LineChannel, propagate
from plcsim.dsp import DiscreteSignal, NoiseSpec, delay_search, filter_samples, shift_back, spectrum
from plcsim.modem import (
    ModemConfig,
    Scheme,
    ask_demodulate,
    ask_envelope,
    ask_modulate,
    ask_threshold,
    bit_means,
    demodulate,
    format_bit_string,
    fsk_demodulate,
    fsk_modulate,
    modulate,
    parse_bit_string,
    psk_demodulate,
    psk_modulate,
)

ASK = ModemConfig(scheme=Scheme.ASK)
BFSK = ModemConfig(scheme=Scheme.BFSK)
BPSK = ModemConfig(scheme=Scheme.BPSK)
SPB = 240
CONFIGS = {"ASK": ASK, "BFSK": BFSK, "BPSK": BPSK}


def random_bits(n, seed=0):
    return np.random.default_rng(seed).integers(0, 2, n, dtype=np.uint8)


# --- configuration -------------------------------------------------------------------


def test_defaults():
    assert BFSK.samples_per_bit == SPB
    assert (BFSK.f0, BFSK.f1) == (200e3, 300e3)
    assert BFSK.rx_bandpass.center_hz == 250e3 and BFSK.rx_bandpass.bandwidth_hz == 150e3
    assert ASK.rx_lowpass.cutoff_hz == 10e3


def test_non_integer_samples_per_bit_rejected():
    with pytest.raises(ValueError, match="samples per bit"):
        ModemConfig(bit_rate_hz=7e3)


def test_too_few_samples_per_bit_rejected():
    with pytest.raises(ValueError):
        ModemConfig(bit_rate_hz=600e3)


def test_tone_beyond_nyquist_rejected():
    with pytest.raises(ValueError):
        ModemConfig(carrier_hz=1.18e6, deviation_hz=50e3)


def test_tones_must_sit_in_channel_band():
    with pytest.raises(ValueError, match="outside channel band"):
        ModemConfig(deviation_hz=200e3).check_band(99e3, 400e3)


def test_bit_string_round_trip():
    bits = random_bits(50)
    assert np.array_equal(parse_bit_string(format_bit_string(bits) + "\n"), bits)
    with pytest.raises(ValueError):
        parse_bit_string("0102")


def test_scheme_mismatch_rejected():
    with pytest.raises(ValueError):
        ask_modulate([1], BFSK)


# --- ASK ---------------------------------------------------------------------------------


def test_ask_segments_on_bit_boundaries():
    x = ask_modulate([1, 0, 1], ASK).samples
    assert x.size == 3 * SPB
    assert np.any(x[:SPB]) and not np.any(x[SPB : 2 * SPB]) and np.any(x[2 * SPB :])


def test_ask_all_zero_is_silent():
    assert not np.any(ask_modulate(np.zeros(10, dtype=int), ASK).samples)


def test_ask_bit_energy():
    x = ask_modulate([1], ASK).samples
    energy = np.sum(x**2) / ASK.sample_rate_hz
    assert energy == pytest.approx(1.0**2 * 1e-4 / 2, rel=0.01)


def test_empty_bits_give_empty_signal():
    for cfg in CONFIGS.values():
        assert len(modulate([], cfg)) == 0


def test_ask_threshold_is_half_p90_without_noise():
    levels = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0])
    assert ask_threshold(levels) == pytest.approx(0.5 * np.percentile(levels, 90))


def test_ask_all_ones_at_20db():
    bits = np.ones(300, dtype=np.uint8)
    tx = ask_modulate(bits, ASK)
    noisy = propagate(tx, LineChannel.identity(noise=NoiseSpec(snr_db=20, seed=3))).signal
    assert np.all(ask_demodulate(noisy, ASK) == 1)


def test_ask_envelope_is_bimodal():
    bits = random_bits(200, 2)
    means = bit_means(ask_envelope(ask_modulate(bits, ASK), ASK).samples, ASK)
    on, off = means[bits == 1], means[bits == 0]
    assert off.max() < 0.25 * on.min()
    assert on.mean() == pytest.approx(2 / math.pi, rel=0.05)  # mean of |sin|


# --- FSK ---------------------------------------------------------------------------------


@pytest.mark.parametrize("bit,freq", [(0, 200e3), (1, 300e3)])
def test_fsk_tone_frequency(bit, freq):
    spec = spectrum(fsk_modulate([bit], BFSK))
    assert abs(spec.peak_frequency() - freq) <= spec.resolution


def test_fsk_constant_envelope():
    x = fsk_modulate(random_bits(100, 4), BFSK).samples
    env = np.abs(hilbert(x)).reshape(100, SPB)
    # the analytic envelope rings briefly where the tone switches
    interior = env[2:-2, 24:-24]
    assert np.max(np.abs(interior - 1.0)) < 0.02


def test_fsk_phase_continuous():
    x = fsk_modulate(random_bits(100, 5), BFSK).samples
    # a jump in phase would show up as an outsized sample-to-sample step
    max_step = 2 * math.sin(math.pi * BFSK.f1 / BFSK.sample_rate_hz)
    assert np.max(np.abs(np.diff(x))) <= max_step + 1e-12


# --- PSK ---------------------------------------------------------------------------------


def test_psk_antipodal_segments():
    x = psk_modulate([0, 1], BPSK).samples
    np.testing.assert_allclose(x[SPB:], -x[:SPB], atol=1e-12)


def test_psk_constant_envelope():
    x = psk_modulate(np.zeros(100, dtype=int), BPSK).samples
    env = np.abs(hilbert(x))[2 * SPB : -2 * SPB]
    assert np.max(np.abs(env - 1.0)) < 0.02


def test_psk_bit_one_correlation():
    x = psk_modulate([1], BPSK).samples
    n = np.arange(SPB)
    ref = np.sin(2 * np.pi * BPSK.carrier_hz * n / BPSK.sample_rate_hz)
    corr = np.sum(x * ref) / BPSK.sample_rate_hz
    assert corr == pytest.approx(-1e-4 / 2, rel=0.01)


# --- receivers ---------------------------------------------------------------------------


@pytest.mark.parametrize("scheme", ["ASK", "BFSK", "BPSK"])
def test_identity_loopback(scheme):
    cfg = CONFIGS[scheme]
    bits = random_bits(1000, 6)
    assert np.array_equal(demodulate(modulate(bits, cfg), cfg), bits)


@pytest.mark.parametrize("scheme", ["ASK", "BFSK", "BPSK"])
def test_default_channel_loopback(scheme):
    report = run_trial(TrialSpec(scheme, LineChannel().quiet(), math.inf, 1000, base_seed=11))
    assert report.ok and report.bit_errors == 0


@pytest.mark.parametrize("demod", [ask_demodulate, fsk_demodulate, psk_demodulate])
def test_short_signal_rejected(demod):
    cfg = {ask_demodulate: ASK, fsk_demodulate: BFSK, psk_demodulate: BPSK}[demod]
    with pytest.raises(ValueError, match="shorter than one bit"):
        demod(DiscreteSignal(np.zeros(SPB - 1), 2.4e6), cfg)


def test_sample_rate_mismatch_rejected():
    with pytest.raises(ValueError):
        fsk_demodulate(DiscreteSignal(np.zeros(1000), 1.2e6), BFSK)


@pytest.mark.parametrize("scheme", ["ASK", "BFSK", "BPSK"])
@pytest.mark.parametrize("shift", [1, 37, 119])
def test_delay_covariance(scheme, shift):
    cfg = CONFIGS[scheme]
    bits = random_bits(300, shift)
    tx = modulate(bits, cfg)
    rx = np.concatenate([np.zeros(shift), tx.samples])[: len(tx)]
    lag, _ = delay_search(tx.samples, filter_samples(rx, cfg.rx_bandpass), SPB // 2)
    assert lag == shift
    # a pure delay has phase -w*shift at the carrier; removing the lag adds w*lag back
    phase = 2 * np.pi * cfg.carrier_hz * (lag - shift) / cfg.sample_rate_hz
    decoded = demodulate(tx.replace(shift_back(rx, lag)), cfg, phase)
    # the zero-filled tail only touches the last bit
    assert np.array_equal(decoded[:-1], bits[:-1])
