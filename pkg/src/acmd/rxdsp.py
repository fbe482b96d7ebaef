"""Receiver-side preprocessing: rate conversion, frame synchronization,
matched filtering and symbol-rate decimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import ParameterError, RrcFilter, SampledSignal, SymbolFrame, fir_filter, resample
from .tx import shape_symbols

__all__ = ["SyncError", "FramingError", "SyncResult", "synchronize", "to_symbols", "to_simulation_rate"]


class SyncError(RuntimeError):
    """Frame synchronization could not find the training sequence."""


class FramingError(RuntimeError):
    """Symbol extraction produced a sequence of the wrong length."""


@dataclass(frozen=True)
class SyncResult:
    """Frame start: ``offset_samples + fraction`` samples into the record."""

    offset_samples: int
    correlation_peak: float
    fraction: float = 0.0


SYNC_THRESHOLD = 0.2


def to_simulation_rate(received: SampledSignal, baud_rate_hz: float, sps: int) -> SampledSignal:
    """Resample the ADC output back onto the ``sps``-per-symbol DSP grid."""
    return resample(received, baud_rate_hz * sps)


def _sliding_energy(x: np.ndarray, width: int) -> np.ndarray:
    """Circular sliding-window energy ``sum(x[k:k+width]**2)`` for every k."""
    e = np.abs(x) ** 2
    c = np.concatenate(([0.0], np.cumsum(np.concatenate((e, e[: width - 1])))))
    return c[width : width + x.size] - c[: x.size]


def synchronize(received: SampledSignal, training: SymbolFrame, rrc: RrcFilter,
                smooth_bandwidth: float = 0.1) -> SyncResult:
    """Locate the training sequence by normalized cross-correlation.

    The received frame is treated as periodic.  Both the received waveform
    and the shaped training template are first restricted to the lowest
    ``smooth_bandwidth`` fraction of the baud rate, where power fading
    leaves the signal nearly undistorted; the peak is then refined on the
    full-band correlation within one symbol of the coarse estimate.

    The peak value is normalized by the template energy and the local
    energy of the received window, so it lies in [0, 1].  It must exceed
    ``SYNC_THRESHOLD`` and five times the noise-only spread
    ``1 / sqrt(2 * smooth_bandwidth * training_len)``.
    """
    if training.training_len < 64:
        raise ParameterError("synchronization needs at least 64 training symbols")
    sps = rrc.samples_per_symbol
    x = np.asarray(received.samples, dtype=float)
    x = x - x.mean()
    n = x.size
    g_len = training.training_len * sps
    if g_len > n:
        raise ParameterError("training sequence longer than the received frame")
    g = shape_symbols(training.training, rrc)[:g_len]
    # the template is shaped as a periodic block; trim the wrap-around tail
    template = np.zeros(n)
    template[:g_len] = g

    X = np.fft.rfft(x)
    G = np.fft.rfft(template)
    f = np.fft.rfftfreq(n, d=1.0 / sps)  # in units of the baud rate
    lp = (f <= smooth_bandwidth).astype(float)

    def ncc(weight):
        xw = np.fft.irfft(X * weight, n)
        gw = np.fft.irfft(G * weight, n)[:g_len]
        num = np.fft.irfft(np.fft.rfft(xw) * np.conj(np.fft.rfft(np.pad(gw, (0, n - g_len)))), n)
        den = np.sqrt(_sliding_energy(xw, g_len) * np.sum(gw**2))
        return np.where(den > 0, num / np.maximum(den, 1e-300), 0.0)

    coarse = ncc(lp)
    k0 = int(np.argmax(coarse))
    fine = ncc(np.ones_like(f))
    win = (k0 + np.arange(-sps, sps + 1)) % n
    j = int(np.argmax(fine[win]))
    peak = float(coarse[k0])
    # noise-only correlation has spread ~1/sqrt(dof) in the smoothed band
    dof = 2 * smooth_bandwidth * training.training_len
    threshold = max(SYNC_THRESHOLD, 5.0 / np.sqrt(dof))
    if not peak >= threshold:
        raise SyncError(f"correlation peak {peak:.3f} below {threshold:.3f}")
    # strong fading bends the full-band peak off the window; keep the
    # low-pass estimate in that case
    k, corr = (int(win[j]), fine) if 0 < j < win.size - 1 else (k0, coarse)
    # parabolic interpolation of the peak for the sub-sample part
    ym, y0, yp = corr[(k - 1) % n], corr[k], corr[(k + 1) % n]
    den = ym - 2 * y0 + yp
    frac = float(np.clip(0.5 * (ym - yp) / den, -0.5, 0.5)) if den < 0 else 0.0
    return SyncResult(k, min(peak, 1.0), frac)


def to_symbols(received: SampledSignal, sync: SyncResult, rrc: RrcFilter, num_symbols: int | None = None) -> np.ndarray:
    """Matched filter, decimate at the synchronized phase, remove DC and
    normalize to unit RMS.

    The output is aligned one-to-one with the transmitted symbols.
    """
    sps = rrc.samples_per_symbol
    x = np.asarray(received.samples, dtype=float)
    if num_symbols is None:
        if x.size % sps:
            raise FramingError("received frame is not a whole number of symbols")
        num_symbols = x.size // sps
    y = fir_filter(SampledSignal(x - x.mean(), received.sample_rate_hz), rrc.taps, circular=True).samples
    if sync.fraction:
        # advance by the fractional part so decimation hits the symbol centres
        f = np.fft.rfftfreq(y.size)
        y = np.fft.irfft(np.fft.rfft(y) * np.exp(2j * np.pi * f * sync.fraction), y.size)
    idx = (sync.offset_samples + sps * np.arange(num_symbols)) % x.size
    r = y[idx]
    if r.size != num_symbols:
        raise FramingError("decimated length does not match the frame")
    r = r - r.mean()
    rms = np.sqrt(np.mean(r**2))
    if rms > 0:
        r = r / rms
    return r
