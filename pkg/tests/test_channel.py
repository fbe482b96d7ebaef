import numpy as np
import pytest
import scipy.signal as ss

from acmd.channel import (
    FiberParams,
    NoiseParams,
    ReceiverParams,
    add_optical_noise,
    apply_ssmf,
    beta2_from_dispersion,
    null_frequencies,
    photodetect,
    receiver_frontend,
    ssmf_transfer,
)
from acmd.signal import ParameterError, SampledSignal, SeededRng

FS = 256e9


def _field(n=8192, seed=0):
    g = np.random.default_rng(seed)
    return SampledSignal(1.0 + 0.3 * g.standard_normal(n) + 0j, FS)


class TestDispersion:
    def test_beta2_value(self):
        # direct formula with c = 2.99792458e8 m/s
        lam = 1550.116e-9
        D = 17e-6  # s/m^2
        ref = -D * lam**2 / (2 * np.pi * 2.99792458e8) * 1e27  # ps^2/km
        b2 = beta2_from_dispersion(17.0, 1550.116)
        assert b2 == pytest.approx(ref, rel=1e-12)
        assert b2 == pytest.approx(-21.7, abs=0.1)

    def test_zero_and_sign(self):
        assert beta2_from_dispersion(0.0, 1550.0) == 0.0
        for D in (-5.0, 3.0, 17.0):
            assert np.sign(beta2_from_dispersion(D, 1310.0)) == -np.sign(D)

    def test_null_positions(self):
        f = null_frequencies(FiberParams(100.0), 32e9)
        assert f.size == 14
        assert f[0] == pytest.approx(6.06e9, abs=0.01e9)
        b2 = abs(FiberParams(100.0).beta2_ps2_km) * 1e-24 * 100
        k = np.arange(14)
        np.testing.assert_allclose(f, np.sqrt((2 * k + 1) * np.pi / b2) / (2 * np.pi), rtol=1e-12)
        assert [null_frequencies(FiberParams(L), 32e9).size for L in (50, 75)] == [7, 10]

    def test_invalid_wavelength(self):
        with pytest.raises(ParameterError):
            FiberParams(10.0, wavelength_nm=900.0)
        with pytest.raises(ParameterError):
            FiberParams(-1.0)


class TestSsmf:
    def test_zero_length_identity(self):
        x = _field()
        y = apply_ssmf(x, FiberParams(0.0))
        np.testing.assert_allclose(y.samples, x.samples, atol=1e-12)

    @pytest.mark.parametrize("L", [10.0, 75.0, 100.0])
    def test_energy_times_loss(self, L):
        x = _field()
        y = apply_ssmf(x, FiberParams(L))
        loss = 10 ** (-0.2 * L / 10)
        assert np.sum(np.abs(y.samples) ** 2) == pytest.approx(loss * np.sum(np.abs(x.samples) ** 2), rel=1e-9)

    def test_all_pass_unit_modulus(self):
        H = ssmf_transfer(FiberParams(100.0))(np.linspace(-1e11, 1e11, 101))
        np.testing.assert_allclose(np.abs(H), 1.0, atol=1e-12)

    def test_power_tag(self):
        x = _field().replace(power_dbm=7.0)
        assert apply_ssmf(x, FiberParams(100.0)).meta["power_dbm"] == pytest.approx(-13.0)


class TestOpticalNoise:
    def test_none_is_identity(self):
        x = _field()
        y = add_optical_noise(x, NoiseParams(), SeededRng(1))
        np.testing.assert_array_equal(y.samples, x.samples)

    def test_osnr_zero_db_psd(self):
        n = 2**18
        x = SampledSignal(np.full(n, 0.5 + 0j), FS)
        P = 0.25
        y = add_optical_noise(x, NoiseParams(osnr_db=0.0), SeededRng(3))
        noise = y.samples - x.samples
        f, S = ss.welch(noise, fs=FS, nperseg=4096, return_onesided=False)
        band = np.abs(f) <= 6.25e9
        in_band = np.sum(S[band]) * (f[1] - f[0])
        assert 10 * np.log10(P / in_band) == pytest.approx(0.0, abs=0.2)

    def test_deterministic(self):
        x = _field()
        a = add_optical_noise(x, NoiseParams(osnr_db=20.0), SeededRng(9)).samples
        b = add_optical_noise(x, NoiseParams(osnr_db=20.0), SeededRng(9)).samples
        np.testing.assert_array_equal(a, b)

    def test_circular_gaussian(self):
        x = SampledSignal(np.ones(100000, complex), FS)
        z = add_optical_noise(x, NoiseParams(osnr_db=10.0), SeededRng(2)).samples - 1
        assert np.var(z.real) == pytest.approx(np.var(z.imag), rel=0.03)
        assert abs(np.mean(z.real * z.imag)) < 0.03 * np.var(z.real)

    def test_rop_knob(self):
        n = NoiseParams(rop_dbm=-14.0, osnr_offset_db=60.0)
        assert n.effective_osnr_db == 46.0
        with pytest.raises(ParameterError):
            NoiseParams(osnr_db=30.0, rop_dbm=-10.0)

    def test_nonphysical_osnr(self):
        with pytest.raises(ParameterError):
            add_optical_noise(_field(), NoiseParams(osnr_db=-np.inf), SeededRng(0))


class TestPhotodetect:
    def test_constant(self):
        y = photodetect(SampledSignal(np.full(8, 2.0 + 0j), FS)).samples
        np.testing.assert_allclose(y, 4.0)

    def test_square_law(self):
        x = np.random.default_rng(0).standard_normal(64) * 0.1
        y = photodetect(SampledSignal(1 + x + 0j, FS)).samples
        np.testing.assert_allclose(y, 1 + 2 * x + x**2, atol=1e-14)

    def test_two_tone_beat(self):
        n = 4096
        t = np.arange(n) / FS
        f1, f2 = 10 * FS / n * 16, 10 * FS / n * 40
        e = np.exp(2j * np.pi * f1 * t) + np.exp(2j * np.pi * f2 * t)
        y = photodetect(SampledSignal(e, FS)).samples
        spec = np.abs(np.fft.rfft(y - y.mean()))
        f = np.fft.rfftfreq(n, 1 / FS)
        assert f[np.argmax(spec)] == pytest.approx(abs(f2 - f1))

    def test_ssbi_decomposition(self):
        # |y_dc + x*h|^2 = y_dc^2 + 2 y_dc x*Re(h) + |x*h|^2 for real x
        g = np.random.default_rng(4)
        n = 4096
        x = 0.2 * g.standard_normal(n)
        fib = FiberParams(50.0, loss_db_km=0.0)
        H = ssmf_transfer(fib)(np.fft.fftfreq(n, 1 / FS))
        xd = np.fft.ifft(np.fft.fft(x) * H)
        e = apply_ssmf(SampledSignal(1.0 + x + 0j, FS), fib)
        y = photodetect(e).samples
        lin = np.fft.ifft(np.fft.fft(x) * H.real).real
        np.testing.assert_allclose(y, 1 + 2 * lin + np.abs(xd) ** 2, atol=1e-10)


class TestFrontend:
    def test_pd_3db(self):
        n = 2**14
        t = np.arange(n) / FS
        k1, k31 = round(1e9 * n / FS), round(31e9 * n / FS)
        f1, f31 = k1 * FS / n, k31 * FS / n
        rx = ReceiverParams(adc_bandwidth_hz=None, adc_rate_hz=FS, adc_bits=16)
        out = []
        for f in (f1, f31):
            y = receiver_frontend(SampledSignal(np.cos(2 * np.pi * f * t), FS), rx).samples
            out.append(np.abs(np.fft.rfft(y))[round(f * n / FS)])
        gain = 20 * np.log10(out[1] / out[0])
        assert gain == pytest.approx(-3.0, abs=0.5)

    def test_dc_removed(self):
        y = receiver_frontend(SampledSignal(np.full(4096, 3.0), FS), ReceiverParams()).samples
        np.testing.assert_allclose(y, 0.0, atol=1e-12)

    def test_quantization_16_bit(self):
        n = 8192
        t = np.arange(n) / FS
        x = np.sin(2 * np.pi * 2e9 * t) + 0.5 * np.sin(2 * np.pi * 5e9 * t)
        rx16 = ReceiverParams(adc_bits=16, adc_rate_hz=FS)
        y = receiver_frontend(SampledSignal(x, FS), rx16).samples
        ref = receiver_frontend(SampledSignal(x, FS), ReceiverParams(adc_bits=16, adc_rate_hz=FS)).samples
        fs_range = np.ptp(y)
        # compare against the unquantized chain computed with a much finer grid
        from acmd.signal import analog_lowpass, fft_apply

        u = fft_apply(fft_apply(SampledSignal(x, FS), analog_lowpass(31e9)), analog_lowpass(36e9)).samples
        u = u - u.mean()
        assert np.sqrt(np.mean((y - u) ** 2)) < 1e-4 * fs_range
        np.testing.assert_array_equal(y, ref)

    def test_rate(self):
        y = receiver_frontend(SampledSignal(np.random.default_rng(0).standard_normal(4096), FS), ReceiverParams())
        assert y.sample_rate_hz == 80e9
        assert y.samples.size == 4096 * 80 // 256

    def test_complex_rejected(self):
        with pytest.raises(ParameterError):
            receiver_frontend(_field(), ReceiverParams())
