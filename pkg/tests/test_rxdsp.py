import numpy as np
import pytest

from acmd.channel import ReceiverParams, photodetect, receiver_frontend
from acmd.rxdsp import SyncError, synchronize, to_simulation_rate, to_symbols
from acmd.signal import ParameterError, SampledSignal, SeededRng, design_rrc
from acmd.tx import MzmParams, TxConfig, generate_frame, shape_and_modulate, shape_symbols

RRC = design_rrc(0.25, 32, 4)
FS = 256e9


def _frame(n=4096, T=512, seed=1):
    return generate_frame(SeededRng(seed), n, T)


class TestSynchronize:
    @pytest.mark.parametrize("shift", [0, 1, 37, 4 * 1000 + 3])
    def test_known_circular_shift(self, shift):
        fr = _frame()
        x = np.roll(shape_symbols(fr.symbols, RRC), shift)
        s = synchronize(SampledSignal(x, FS), fr, RRC)
        assert s.offset_samples == shift
        assert s.correlation_peak > 0.99
        assert abs(s.fraction) < 0.05

    def test_pure_noise_raises(self):
        fr = _frame()
        x = np.random.default_rng(0).standard_normal(len(fr) * 4)
        with pytest.raises(SyncError):
            synchronize(SampledSignal(x, FS), fr, RRC)

    def test_monte_carlo_10db(self):
        fr = _frame()
        u = shape_symbols(fr.symbols, RRC)
        sigma = np.std(u) / np.sqrt(10.0)
        g = np.random.default_rng(11)
        for trial in range(100):
            k = int(g.integers(0, u.size))
            x = np.roll(u, k) + sigma * g.standard_normal(u.size)
            s = synchronize(SampledSignal(x, FS), fr, RRC)
            assert s.offset_samples == k, trial
            assert s.correlation_peak > 0.5

    def test_short_training_rejected(self):
        fr = _frame(T=32)
        with pytest.raises(ParameterError):
            synchronize(SampledSignal(shape_symbols(fr.symbols, RRC), FS), fr, RRC)

    def test_sub_sample_fraction(self):
        fr = _frame()
        u = shape_symbols(fr.symbols, RRC)
        f = np.fft.rfftfreq(u.size)
        # delay by 10.3 samples
        x = np.fft.irfft(np.fft.rfft(u) * np.exp(-2j * np.pi * f * 10.3), u.size)
        s = synchronize(SampledSignal(x, FS), fr, RRC)
        assert s.offset_samples + s.fraction == pytest.approx(10.3, abs=0.1)


class TestToSymbols:
    def test_constant_gives_zeros(self):
        fr = _frame()
        s = synchronize(SampledSignal(shape_symbols(fr.symbols, RRC), FS), fr, RRC)
        r = to_symbols(SampledSignal(np.full(len(fr) * 4, 2.5), FS), s, RRC, len(fr))
        np.testing.assert_allclose(r, 0.0, atol=1e-12)

    def test_normalized(self):
        fr = _frame()
        x = shape_symbols(fr.symbols, RRC) + 3.0
        s = synchronize(SampledSignal(x, FS), fr, RRC)
        r = to_symbols(SampledSignal(x, FS), s, RRC, len(fr))
        assert r.size == len(fr)
        assert abs(r.mean()) < 1e-12
        assert np.sqrt(np.mean(r**2)) == pytest.approx(1.0)
        assert np.all(np.sign(r) == fr.symbols)

    def test_ideal_loopback(self):
        # ideal devices: no DAC/driver filtering, linear modulator, wide
        # receiver; the field itself is fed to the ADC model
        fr = _frame(8192, 1024, seed=4)
        cfg = TxConfig(dc_bias=0.0, dac_bits=16, dac_bandwidth_hz=None, driver_bandwidth_hz=None,
                       mzm=MzmParams(linear=True))
        e = shape_and_modulate(fr, cfg, RRC).samples.real
        rx = ReceiverParams(pd_bandwidth_hz=200e9, adc_bandwidth_hz=None, adc_bits=16)
        y = receiver_frontend(SampledSignal(np.roll(e, 1234), FS), rx)
        x = to_simulation_rate(y, 64e9, 4)
        s = synchronize(x, fr, RRC)
        r = to_symbols(x, s, RRC, len(fr))
        assert np.corrcoef(r, fr.symbols)[0, 1] > 0.99

    def test_default_receiver_loopback(self):
        fr = _frame(8192, 1024, seed=5)
        e = shape_and_modulate(fr, TxConfig(), RRC)
        y = receiver_frontend(SampledSignal(np.roll(photodetect(e).samples, 777), FS), ReceiverParams(adc_bits=16))
        x = to_simulation_rate(y, 64e9, 4)
        s = synchronize(x, fr, RRC)
        r = to_symbols(x, s, RRC, len(fr))
        # the band-limited transmitter leaves ISI, but the frame is aligned
        c = [np.corrcoef(np.roll(r, k), fr.symbols)[0, 1] for k in range(-3, 4)]
        assert int(np.argmax(c)) == 3
        assert c[3] > 0.6
