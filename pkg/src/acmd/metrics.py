"""Performance measures and plot data: BER, PSD, spectral nulls, folded-spectrum
SNR, eye diagrams and amplitude histograms."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.signal as ss
from scipy.ndimage import median_filter
from scipy.special import erfc

from .signal import ParameterError, SampledSignal, SymbolFrame

__all__ = [
    "HD_FEC_THRESHOLD",
    "SD_FEC_THRESHOLD",
    "BerReport",
    "PsdEstimate",
    "NullReport",
    "FoldedSnrInput",
    "FoldedSnrResult",
    "EyeData",
    "ber",
    "q_function",
    "welch_psd",
    "count_spectral_nulls",
    "folded_snr",
    "eye_and_pdf",
    "write_csv",
]

# Pre-FEC BER thresholds; both overridable per call.
HD_FEC_THRESHOLD = 3.8e-3  # 7 % overhead hard-decision code
SD_FEC_THRESHOLD = 2.0e-2  # 9 % overhead soft-decision code


@dataclass(frozen=True)
class BerReport:
    bit_errors: int
    bits_compared: int
    ber: float
    below_hd_fec: bool
    below_sd_fec: bool

    def as_dict(self) -> dict:
        return {
            "bit_errors": self.bit_errors,
            "bits_compared": self.bits_compared,
            "ber": self.ber,
            "below_hd_fec": self.below_hd_fec,
            "below_sd_fec": self.below_sd_fec,
        }


def _symbols_to_bits(symbols: np.ndarray, M: int) -> np.ndarray:
    if M == 2:
        return (symbols > 0).astype(np.uint8)[:, None]
    k = int(np.log2(M))
    idx = np.clip(np.rint((symbols + (M - 1)) / 2).astype(np.int64), 0, M - 1)
    gray = idx ^ (idx >> 1)
    return ((gray[:, None] >> np.arange(k - 1, -1, -1)[None, :]) & 1).astype(np.uint8)


def ber(decisions, truth, skip: int = 0, hd_threshold: float = HD_FEC_THRESHOLD,
        sd_threshold: float = SD_FEC_THRESHOLD, tail: int = 0) -> BerReport:
    """Exact bit-error count of ``decisions`` against ``truth``.

    ``skip`` leading and ``tail`` trailing symbols are excluded.
    """
    if isinstance(truth, SymbolFrame):
        M = truth.modulation_order
        t = truth.symbols
    else:
        M = 2
        t = np.asarray(truth, dtype=float)
    d = np.asarray(decisions, dtype=float)
    if d.size != t.size:
        raise ParameterError("decisions and truth must be aligned and of equal length")
    stop = t.size - int(tail)
    bd = _symbols_to_bits(d[skip:stop], M)
    bt = _symbols_to_bits(t[skip:stop], M)
    errors = int(np.count_nonzero(bd != bt))
    n = int(bt.size)
    rate = errors / n if n else 0.0
    return BerReport(errors, n, rate, rate < hd_threshold, rate < sd_threshold)


def q_function(x):
    """Gaussian tail probability ``Q(x) = P(N(0,1) > x)``."""
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


@dataclass(frozen=True)
class PsdEstimate:
    frequencies_hz: np.ndarray
    power_db: np.ndarray
    segment_len: int
    overlap: int
    window: str = "hann"

    @property
    def power_linear(self) -> np.ndarray:
        return 10 ** (self.power_db / 10)

    @property
    def bin_width_hz(self) -> float:
        return float(self.frequencies_hz[1] - self.frequencies_hz[0])


def welch_psd(signal: SampledSignal, segment: int = 4096, overlap_frac: float = 0.5,
              window: str = "hann") -> PsdEstimate:
    """Welch-averaged PSD (one-sided for real, two-sided for complex input).

    Power is in dB of signal-units^2 per Hz; integrating the linear PSD over
    frequency returns the signal variance.
    """
    x = signal.samples
    if not 0 <= overlap_frac < 1:
        raise ParameterError("overlap fraction must lie in [0, 1)")
    segment = int(segment)
    if segment > x.size:
        raise ParameterError("segment longer than the signal")
    nover = int(round(segment * overlap_frac))
    f, P = ss.welch(x, fs=signal.sample_rate_hz, window=window, nperseg=segment,
                    noverlap=nover, return_onesided=not np.iscomplexobj(x), detrend="constant")
    if np.iscomplexobj(x):
        f = np.fft.fftshift(f)
        P = np.fft.fftshift(P)
    P = np.maximum(P, np.finfo(float).tiny)
    return PsdEstimate(f, 10 * np.log10(P), segment, nover, window)


@dataclass(frozen=True)
class NullReport:
    count: int
    frequencies_hz: np.ndarray
    depths_db: np.ndarray


def count_spectral_nulls(psd: PsdEstimate, f_max_hz: float, min_depth_db: float = 10.0,
                         smooth_bins: int = 5, refine_bins: int = 3) -> NullReport:
    """Count PSD notches below ``f_max_hz``.

    After a ``smooth_bins`` moving median, a null is a local minimum whose
    topographic prominence is at least ``min_depth_db``: the PSD rises by
    that much on both sides before reaching a deeper notch.  Each null
    frequency is then refined by a least-squares parabola through the
    unsmoothed linear PSD over ``refine_bins`` bins on either side (a
    power notch is locally quadratic); ``refine_bins=0`` keeps the bin.
    """
    f = psd.frequencies_hz
    keep = (f >= 0) & (f < f_max_hz)
    if not np.any(keep):
        raise ParameterError("PSD does not cover (0, f_max)")
    p = median_filter(psd.power_db[keep], size=smooth_bins, mode="nearest")
    idx, props = ss.find_peaks(-p, prominence=min_depth_db)
    fk, lin = f[keep], psd.power_linear[keep]
    freqs = fk[idx].astype(float)
    h = int(refine_bins)
    if h > 0:
        bw = psd.bin_width_hz
        for j, i in enumerate(idx):
            if i < h or i + h >= fk.size:
                continue
            sl = slice(i - h, i + h + 1)
            c2, c1, _ = np.polyfit((fk[sl] - fk[i]) / bw, lin[sl] / lin[sl].max(), 2)
            if c2 > 0:
                freqs[j] = fk[i] + bw * float(np.clip(-c1 / (2 * c2), -h, h))
    return NullReport(int(idx.size), freqs, props["prominences"])


@dataclass(frozen=True)
class FoldedSnrInput:
    """Channel response sampled uniformly over a whole number of ``2 pi / T`` periods.

    ``omega`` must start at ``-pi/T`` (or any period boundary), contain
    ``n_periods * n_grid`` points, and ``H`` the response on those points.
    ``N0 / 2`` is the two-sided noise PSD.
    """

    omega: np.ndarray
    H: np.ndarray
    N0: float
    T: float

    def __post_init__(self):
        if not self.T > 0 or not self.N0 > 0:
            raise ParameterError("T and N0 must be positive")


@dataclass(frozen=True)
class FoldedSnrResult:
    snr: float
    diverged: bool


def folded_snr(inp: FoldedSnrInput, n_grid: int | None = None) -> FoldedSnrResult:
    """Output SNR of an infinite-length zero-forcing equalizer.

    ``SNR = [T^2 N0 / (2 pi) * int_{-pi/T}^{pi/T} dw / sum_n |H(w + 2 pi n / T)|^2]^{-1}``,
    with the integral evaluated by the rectangle rule on the grid.  A zero
    of the folded spectrum on the grid (to working precision) makes the integral diverge; the
    result is then ``snr = 0`` with ``diverged = True``.
    """
    w = np.asarray(inp.omega, dtype=float)
    H = np.asarray(inp.H)
    if w.size != H.size or w.size < 2:
        raise ParameterError("omega and H must be equally long arrays")
    dw = w[1] - w[0]
    period = 2 * np.pi / inp.T
    if n_grid is None:
        n_grid = int(round(period / dw))
    if w.size % n_grid:
        raise ParameterError("grid must cover a whole number of 2*pi/T periods")
    folded = np.sum((np.abs(H) ** 2).reshape(-1, n_grid), axis=0)
    # zero to working precision counts as a null
    if np.any(folded <= np.finfo(float).eps * folded.max()):
        return FoldedSnrResult(0.0, True)
    integral = np.sum(1.0 / folded) * dw
    return FoldedSnrResult(float(1.0 / (inp.T**2 * inp.N0 / (2 * np.pi) * integral)), False)


@dataclass(frozen=True)
class EyeData:
    time_edges: np.ndarray
    amplitude_edges: np.ndarray
    eye_counts: np.ndarray  # (time bins, amplitude bins)
    pdf: np.ndarray  # density, integrates to one over amplitude
    mass: np.ndarray  # probability per amplitude bin, sums to one

    @property
    def amplitude_centres(self) -> np.ndarray:
        e = self.amplitude_edges
        return 0.5 * (e[1:] + e[:-1])


def eye_and_pdf(x, sps: int = 1, amplitude_range=(-3.0, 3.0), amplitude_bins: int = 121,
                symbols_per_trace: int = 2) -> EyeData:
    """2-D eye histogram and amplitude histogram of a symbol-aligned waveform.

    ``x`` holds ``sps`` samples per symbol with samples ``0, sps, 2 sps, ...``
    at symbol centres.  The eye spans ``symbols_per_trace`` symbols centred
    on a symbol instant; the PDF uses the symbol-centre samples.
    """
    x = np.asarray(x, dtype=float)
    lo, hi = amplitude_range
    edges = np.linspace(lo, hi, amplitude_bins + 1)
    width = symbols_per_trace * sps
    half = width // 2
    n_tr = (x.size - width) // sps
    if n_tr < 1:
        raise ParameterError("signal too short for one eye trace")
    start = half
    phase = (np.arange(n_tr) * sps + start)[:, None] + np.arange(-half, width - half)[None, :]
    traces = x[phase]
    tt = np.broadcast_to(np.arange(-half, width - half) / sps, traces.shape)
    t_edges = (np.arange(-half, width - half + 1) - 0.5) / sps
    eye, _, _ = np.histogram2d(tt.ravel(), np.clip(traces.ravel(), lo, hi), bins=[t_edges, edges])
    centres = x[::sps]
    counts, _ = np.histogram(np.clip(centres, lo, hi), bins=edges)
    mass = counts / counts.sum()
    pdf = mass / np.diff(edges)
    return EyeData(t_edges, edges, eye, pdf, mass)


def write_csv(path, header, columns) -> Path:
    """Write equal-length columns as CSV under a one-line header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c).ravel() for c in columns]
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise ParameterError("columns must have equal length")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path
