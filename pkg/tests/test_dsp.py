import math

import numpy as np
import pytest

from plcsim.channel import LineChannel, channel_fir, propagate
from plcsim.dsp import (
    DiscreteSignal,
    NoiseSpec,
    Spectrum,
    add_noise,
    align_delay,
    apply_filter,
    band_noise_signal,
    delay_search,
    design_fir,
    filter_samples,
    generate_carrier,
    noise_samples,
    shift_back,
    spectrum,
    transition_width_hz,
)
from plcsim.modem import ModemConfig, fsk_modulate

FS = 2.4e6


def tone_amplitude(x, freq, fs=FS):
    """Least-squares amplitude of a sinusoid at ``freq`` (independent of the FFT code path)."""
    n = np.arange(x.size)
    basis = np.column_stack([np.sin(2 * np.pi * freq * n / fs), np.cos(2 * np.pi * freq * n / fs)])
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return float(np.hypot(*coef))


# --- DiscreteSignal ---------------------------------------------------------


def test_signal_rejects_non_finite_and_bad_rate():
    with pytest.raises(ValueError):
        DiscreteSignal([0.0, np.nan], FS)
    with pytest.raises(ValueError):
        DiscreteSignal([0.0, np.inf], FS)
    with pytest.raises(ValueError):
        DiscreteSignal([0.0], 0.0)


def test_signal_duration_is_length_over_rate():
    sig = DiscreteSignal(np.zeros(2401), FS)
    assert sig.duration == 2401 / FS
    assert len(DiscreteSignal([], FS)) == 0


def test_signal_samples_are_read_only():
    sig = DiscreteSignal(np.ones(4), FS)
    with pytest.raises(ValueError):
        sig.samples[0] = 2.0


def test_csv_round_trip(tmp_path):
    sig = generate_carrier(250e3, 0.75, 0.3, 1e-4)
    text = sig.to_csv(tmp_path / "s.csv")
    assert text.splitlines()[0] == "time_s,amplitude"
    back = DiscreteSignal.from_csv(tmp_path / "s.csv")
    assert back.sample_rate == FS
    np.testing.assert_allclose(back.samples, sig.samples, rtol=1e-8, atol=1e-9)


# --- carrier ----------------------------------------------------------------


def test_carrier_length_and_peak():
    sig = generate_carrier(250e3, 1.0, 0.0, 1e-3, FS)
    assert len(sig) == 2400
    assert np.max(np.abs(sig.samples)) == pytest.approx(1.0, abs=1e-12)


def test_zero_amplitude_carrier_is_silent():
    assert not np.any(generate_carrier(123e3, 0.0, 0.4, 1e-3).samples)


def test_carrier_rms_over_whole_cycles():
    sig = generate_carrier(250e3, 1.0, 0.0, 1e-3)  # 250 cycles
    assert math.sqrt(sig.power()) == pytest.approx(1 / math.sqrt(2), abs=1e-6)


def test_carrier_above_nyquist_names_both_frequencies():
    with pytest.raises(ValueError, match=r"1\.3e\+06|1300000") as info:
        generate_carrier(1.3e6, 1.0, 0.0, 1e-3, FS)
    assert "1200000" in str(info.value) or "1.2e+06" in str(info.value)


def test_band_noise_presets_are_deterministic():
    a = band_noise_signal("NB-PLC", 1e-3, FS, seed=3)
    b = band_noise_signal("NB-PLC", 1e-3, FS, seed=3)
    np.testing.assert_array_equal(a.samples, b.samples)


# --- FIR design ---------------------------------------------------------------


@pytest.fixture(scope="module")
def rx_bandpass():
    return design_fir("bandpass", 250e3, 150e3, 301, FS)


def test_bandpass_keeps_in_band_tone(rx_bandpass):
    tone = generate_carrier(250e3, 1.0, 0.0, 5e-3)
    out = apply_filter(tone, rx_bandpass).samples[1000:-1000]
    gain_db = 20 * math.log10(tone_amplitude(out, 250e3))
    assert abs(gain_db) <= 1.0


def test_bandpass_rejects_60hz(rx_bandpass):
    hum = generate_carrier(60.0, 1.0, 0.0, 1 / 60 * 3)
    out = apply_filter(hum, rx_bandpass).samples[1000:-1000]
    assert np.max(np.abs(out)) <= 0.01


def test_bandpass_dc_gain_small(rx_bandpass):
    peak = np.max(np.abs(rx_bandpass.response(np.linspace(175e3, 325e3, 301))))
    assert abs(rx_bandpass.taps.sum()) <= 0.01 * peak


def test_bandpass_ripple_and_stopband(rx_bandpass):
    tw = transition_width_hz(301, FS)
    passband = np.linspace(175e3 + tw / 2, 325e3 - tw / 2, 400)
    mag_db = 20 * np.log10(np.abs(rx_bandpass.response(passband)))
    assert np.ptp(mag_db) <= 1.0 and np.max(np.abs(mag_db)) <= 1.0
    stop = np.concatenate([np.linspace(0, 175e3 - tw, 400), np.linspace(325e3 + tw, FS / 2, 2000)])
    assert np.max(20 * np.log10(np.abs(rx_bandpass.response(stop)) + 1e-300)) <= -40


def test_lowpass_near_nyquist_is_almost_identity():
    lp = design_fir("lowpass", 0.99 * FS / 2, None, 301, FS)
    x = np.random.default_rng(0).standard_normal(50_000)
    y = filter_samples(x, lp)
    ratio_db = 10 * math.log10(np.mean(y[500:-500] ** 2) / np.mean(x[500:-500] ** 2))
    assert abs(ratio_db) <= 1.0


def test_linear_phase_group_delay_from_two_tones(rx_bandpass):
    # raw tap response (no origin compensation) has phase -w (N-1)/2
    f1, f2 = 230e3, 270e3
    k = np.arange(rx_bandpass.tap_count)
    h = [np.sum(rx_bandpass.taps * np.exp(-2j * np.pi * f * k / FS)) for f in (f1, f2)]
    dphi = np.angle(h[1] / h[0])
    dw = 2 * np.pi * (f2 - f1) / FS
    measured = -dphi / dw
    # the phase wraps every 2 pi; compare modulo one wrap period
    period = 2 * np.pi / dw
    assert (measured - rx_bandpass.group_delay) % period == pytest.approx(0.0, abs=1e-6) or (
        (measured - rx_bandpass.group_delay) % period == pytest.approx(period, abs=1e-6)
    )
    assert rx_bandpass.group_delay == 150


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="bandpass", center_or_cutoff_hz=250e3, bandwidth_hz=150e3, tap_count=300),
        dict(kind="bandpass", center_or_cutoff_hz=1.15e6, bandwidth_hz=150e3, tap_count=301),
        dict(kind="lowpass", center_or_cutoff_hz=1.3e6, tap_count=301),
        dict(kind="lowpass", center_or_cutoff_hz=10e3, tap_count=29),
    ],
)
def test_design_fir_rejects_bad_requests(kwargs):
    with pytest.raises(ValueError):
        design_fir(sample_rate_hz=FS, **kwargs)


def test_transition_width_scales_with_taps():
    assert transition_width_hz(301, FS) == pytest.approx(3.3 * FS / 301)
    assert transition_width_hz(601, FS) < transition_width_hz(301, FS)


# --- convolution ---------------------------------------------------------------


def test_zero_in_zero_out(rx_bandpass):
    assert not np.any(apply_filter(DiscreteSignal(np.zeros(1000), FS), rx_bandpass).samples)


def test_impulse_returns_centred_taps(rx_bandpass):
    x = np.zeros(1001)
    x[500] = 1.0
    y = apply_filter(DiscreteSignal(x, FS), rx_bandpass).samples
    np.testing.assert_allclose(y[350:651], rx_bandpass.taps, atol=1e-15)
    assert not np.any(np.abs(y[:350]) > 1e-15) and not np.any(np.abs(y[651:]) > 1e-15)


@pytest.mark.parametrize("n", [200, 5000, 100_000])
def test_filter_matches_direct_convolution(rx_bandpass, n):
    x = np.random.default_rng(n).standard_normal(n)
    full = np.convolve(x, rx_bandpass.taps)
    np.testing.assert_allclose(filter_samples(x, rx_bandpass), full[150 : 150 + n], atol=1e-10)


def test_filter_additive(rx_bandpass):
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 4000))
    lhs = filter_samples(a + b, rx_bandpass)
    np.testing.assert_allclose(lhs, filter_samples(a, rx_bandpass) + filter_samples(b, rx_bandpass), atol=1e-9)


# --- spectrum -----------------------------------------------------------------


def test_spectrum_peak_of_300khz_tone():
    spec = spectrum(generate_carrier(300e3, 1.0, 0.0, 4096 / FS))
    assert abs(spec.peak_frequency() - 300e3) <= spec.resolution
    assert spec.bin_freqs[0] == 0 and spec.bin_freqs[-1] == pytest.approx(FS / 2)
    assert np.all(np.diff(spec.bin_freqs) > 0)


def test_spectrum_of_zero_signal():
    spec = spectrum(DiscreteSignal(np.zeros(64), FS))
    assert not np.any(spec.magnitudes)


def test_spectrum_bin_centred_tone_normalisation():
    n = 4800
    f = 100 * FS / n  # exact bin
    for window in ("boxcar", "hann"):
        spec = spectrum(generate_carrier(f, 2.0, 0.0, n / FS), window)
        assert spec.magnitudes.max() == pytest.approx(1.0, rel=1e-9)


def test_spectrum_parseval():
    x = np.random.default_rng(4).standard_normal(3000)
    spec = spectrum(DiscreteSignal(x, FS))
    assert spec.energy() == pytest.approx(np.sum(x**2), rel=1e-6)


def test_spectrum_rejects_short_signal():
    with pytest.raises(ValueError):
        spectrum(DiscreteSignal([1.0], FS))


def test_spectrum_csv_header(tmp_path):
    spec = spectrum(generate_carrier(300e3, 1.0, 0.0, 1e-4))
    assert spec.to_csv().splitlines()[0] == "freq_hz,magnitude"
    assert isinstance(spec, Spectrum)


# --- noise ----------------------------------------------------------------------


def test_infinite_snr_is_identity():
    sig = generate_carrier(250e3, 1.0, 0.0, 1e-3)
    assert add_noise(sig, NoiseSpec(snr_db=math.inf)) is sig
    assert add_noise(sig, NoiseSpec(noise_power=0.0)) is sig


def test_noise_is_seed_deterministic():
    sig = generate_carrier(250e3, 1.0, 0.0, 1e-3)
    spec = NoiseSpec(snr_db=5, seed=99)
    assert add_noise(sig, spec).samples.tobytes() == add_noise(sig, spec).samples.tobytes()
    assert not np.array_equal(add_noise(sig, spec).samples, add_noise(sig, NoiseSpec(snr_db=5, seed=100)).samples)


@pytest.mark.parametrize("kind", ["white", "one_over_f"])
def test_requested_snr_is_met(kind):
    sig = DiscreteSignal(np.sqrt(2) * np.sin(0.1 * np.arange(1_000_000)), FS)  # unit power
    noisy = add_noise(sig, NoiseSpec(kind=kind, snr_db=10.0, seed=7))
    noise = noisy.samples - sig.samples
    measured = 10 * math.log10(sig.power() / np.mean(noise**2))
    assert measured == pytest.approx(10.0, abs=0.2)


def test_one_over_f_slope_is_minus_10db_per_decade():
    x = noise_samples(1 << 20, NoiseSpec(kind="one_over_f", seed=5), 1.0)
    psd = np.abs(np.fft.rfft(x)) ** 2
    f = np.arange(psd.size)
    lo = psd[(f >= 1000) & (f < 2000)].mean()
    hi = psd[(f >= 10_000) & (f < 20_000)].mean()
    assert 10 * math.log10(lo / hi) == pytest.approx(10.0, abs=0.5)


def test_noise_spec_rejects_non_finite_power():
    with pytest.raises(ValueError):
        NoiseSpec(noise_power=math.inf)
    with pytest.raises(ValueError):
        NoiseSpec(noise_power=math.nan)


# --- delay alignment ---------------------------------------------------------------


def test_constructed_shift_is_recovered():
    ref = np.random.default_rng(2).standard_normal(5000)
    rx = np.concatenate([np.zeros(17), ref])[:5000]
    assert align_delay(ref, rx, 100) == 17
    assert align_delay(ref, ref, 100) == 0


def test_ties_go_to_smallest_lag():
    ref = np.tile([1.0, -1.0], 200)  # period 2: lags 0, 2, 4 ... tie
    assert align_delay(ref, ref, 10) == 0


def test_zero_reference_is_an_error():
    with pytest.raises(ValueError):
        align_delay(np.zeros(100), np.ones(100), 10)


def test_shift_back_zero_pads():
    np.testing.assert_array_equal(shift_back(np.arange(5.0), 2), [2.0, 3.0, 4.0, 0.0, 0.0])


def test_fsk_lag_through_channel_matches_group_delay():
    cfg = ModemConfig()
    bits = np.random.default_rng(8).integers(0, 2, 400)
    tx = fsk_modulate(bits, cfg)
    ch = LineChannel(noise=NoiseSpec(snr_db=20, seed=1))
    rx = filter_samples(propagate(tx, ch).signal.samples, cfg.rx_bandpass)
    lag, peak = delay_search(tx.samples, rx, cfg.samples_per_bit // 2)
    # oracle: residual group delay of the designed filters around the tone band.
    # The receiver bandpass is compensated (linear phase about its origin), so
    # only the channel FIR contributes, measured from its own response.
    fir = channel_fir(ch, FS)
    f = np.array([240e3, 260e3])
    phase = np.unwrap(np.angle(fir.response(f)))
    gd_channel = -(phase[1] - phase[0]) / (2 * np.pi * (f[1] - f[0]) / FS)
    gd_bandpass = 0.0
    assert abs(lag - (gd_channel + gd_bandpass)) <= 2
    assert peak > 0.5
