"""Waveform containers and the basic DSP primitives shared by every stage.

All stages exchange :class:`SampledSignal` objects.  Filtering helpers keep
their output sample-aligned with the input (group delay removed), so stages
can be chained without extra bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Union

import numpy as np
import scipy.signal as ss

__all__ = [
    "ParameterError",
    "SampledSignal",
    "SymbolFrame",
    "RrcFilter",
    "SeededRng",
    "derive_seed",
    "design_rrc",
    "rrc_impulse",
    "fir_filter",
    "resample",
    "fft_apply",
    "quantize",
    "analog_lowpass",
    "pam_alphabet",
]


class ParameterError(ValueError):
    """Raised when a DSP routine receives an invalid configuration."""


@dataclass(frozen=True)
class SampledSignal:
    """Uniformly sampled real or complex waveform.

    ``meta`` carries bookkeeping that travels with the waveform (optical
    power tag, clipping flag, ...).  It never affects numerics.
    """

    samples: np.ndarray
    sample_rate_hz: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.samples)
        if x.ndim != 1 or x.size < 1:
            raise ParameterError("samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(x)):
            raise ParameterError("samples must be finite")
        if not self.sample_rate_hz > 0:
            raise ParameterError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def replace(self, samples=None, sample_rate_hz=None, **meta) -> "SampledSignal":
        """Return a copy with new samples/rate; keyword args update ``meta``."""
        new_meta = dict(self.meta)
        new_meta.update(meta)
        return SampledSignal(
            self.samples if samples is None else samples,
            self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
            new_meta,
        )


@dataclass(frozen=True)
class SymbolFrame:
    """Symbol payload with a known training prefix.

    Symbols are bipolar M-PAM levels ``{-(M-1), ..., -1, +1, ..., M-1}``;
    for M=2 this is ``{-1, +1}``.
    """

    bits: np.ndarray
    symbols: np.ndarray
    training_len: int
    payload_len: int
    modulation_order: int = 2

    def __post_init__(self):
        M = self.modulation_order
        if M < 2:
            raise ParameterError("modulation order must be >= 2")
        s = np.asarray(self.symbols, dtype=float)
        if self.training_len < 0 or self.payload_len < 0:
            raise ParameterError("negative training/payload length")
        if self.training_len + self.payload_len != s.size:
            raise ParameterError("training_len + payload_len must equal the symbol count")
        if not np.all(np.isin(s, pam_alphabet(M))):
            raise ParameterError("symbols outside the M-PAM alphabet")
        object.__setattr__(self, "symbols", s)
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=np.uint8))

    def __len__(self):
        return self.symbols.size

    @property
    def training(self) -> np.ndarray:
        return self.symbols[: self.training_len]

    @property
    def payload(self) -> np.ndarray:
        return self.symbols[self.training_len :]

    @property
    def alphabet(self) -> np.ndarray:
        return pam_alphabet(self.modulation_order)


def pam_alphabet(M: int) -> np.ndarray:
    """Bipolar M-PAM levels in ascending order."""
    return np.arange(-(M - 1), M, 2, dtype=float)


@dataclass(frozen=True)
class RrcFilter:
    rolloff: float
    span_symbols: int
    samples_per_symbol: int
    taps: np.ndarray

    @property
    def num_taps(self) -> int:
        return self.taps.size


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic 64-bit child seed from a master seed and integer keys."""
    seq = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


class SeededRng:
    """Reproducible random stream (PCG64 seeded through ``SeedSequence``)."""

    algorithm = "PCG64"

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def child(self, *keys: int) -> "SeededRng":
        return SeededRng(derive_seed(self.seed, *keys))

    def __getattr__(self, name):
        return getattr(self.generator, name)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, algorithm={self.algorithm!r})"


def rrc_impulse(t: np.ndarray, rolloff: float) -> np.ndarray:
    """Unnormalized root-raised-cosine pulse at times ``t`` in symbol periods."""
    t = np.asarray(t, dtype=float)
    b = float(rolloff)
    h = np.empty_like(t)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    if b > 0:
        at_sing = np.isclose(np.abs(t), 1.0 / (4.0 * b), atol=1e-12)
    else:
        at_sing = np.zeros_like(at_zero)
    reg = ~(at_zero | at_sing)
    tr = t[reg]
    num = np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))
    den = np.pi * tr * (1 - (4 * b * tr) ** 2)
    h[reg] = num / den
    h[at_zero] = 1.0 - b + 4.0 * b / np.pi
    if at_sing.any():
        h[at_sing] = (b / np.sqrt(2)) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
        )
    return h


def design_rrc(rolloff: float, span_symbols: int, sps: int) -> RrcFilter:
    """Design a unit-energy root-raised-cosine FIR filter.

    Parameters
    ----------
    rolloff : float
        Excess-bandwidth factor in [0, 1].
    span_symbols : int
        Filter length in symbols (even, >= 2).  The filter has
        ``span_symbols * sps + 1`` taps, centred on the middle tap.
    sps : int
        Samples per symbol.
    """
    if not 0.0 <= rolloff <= 1.0:
        raise ParameterError(f"rolloff must lie in [0, 1], got {rolloff}")
    if span_symbols < 2 or span_symbols % 2:
        raise ParameterError(f"span_symbols must be an even integer >= 2, got {span_symbols}")
    if sps < 1:
        raise ParameterError(f"sps must be >= 1, got {sps}")
    n = np.arange(span_symbols * sps + 1) - span_symbols * sps / 2
    h = rrc_impulse(n / sps, rolloff)
    h /= np.sqrt(np.sum(h**2))
    return RrcFilter(float(rolloff), int(span_symbols), int(sps), h)


def _group_delay(taps: np.ndarray) -> int:
    e = np.abs(taps) ** 2
    if not np.any(e):
        return 0
    return int(np.floor(np.sum(np.arange(taps.size) * e) / np.sum(e) + 0.5))


def fir_filter(signal: SampledSignal, taps, circular: bool = False) -> SampledSignal:
    """Convolve with ``taps`` and remove the filter's bulk delay.

    The delay is the energy centroid of the taps rounded to a whole sample,
    i.e. ``(len(taps) - 1) // 2`` for odd-length symmetric filters.  With
    ``circular=True`` the input is treated as one period of a periodic
    waveform (no edge transients).
    """
    h = np.asarray(taps)
    if h.ndim != 1 or h.size == 0:
        raise ParameterError("taps must be a non-empty 1-D sequence")
    x = signal.samples
    d = _group_delay(h)
    n = x.size
    if circular:
        nfft = n
        if h.size > n:
            k = np.arange(h.size) % n
            h = np.bincount(k, weights=h.real, minlength=n) + (
                1j * np.bincount(k, weights=h.imag, minlength=n) if np.iscomplexobj(h) else 0
            )
        y = np.fft.ifft(np.fft.fft(x, nfft) * np.fft.fft(h, nfft))
        y = np.roll(y, -d)
        if not (np.iscomplexobj(x) or np.iscomplexobj(h)):
            y = y.real
    else:
        y = ss.fftconvolve(x, h) if n * h.size > 4096 else np.convolve(x, h)
        y = y[d : d + n]
    return signal.replace(samples=y)


def _rational(ratio: float, max_denominator: int) -> Fraction:
    frac = Fraction(ratio).limit_denominator(max_denominator)
    if abs(float(frac) - ratio) > 1e-9 * ratio:
        raise ParameterError(f"rate ratio {ratio} is not rational within denominator {max_denominator}")
    return frac


def resample(signal: SampledSignal, new_rate_hz: float, max_denominator: int = 4096) -> SampledSignal:
    """Band-limited rate conversion by a rational factor.

    When the output length is a whole number of samples the conversion is
    done in the frequency domain (exact for periodic frames); otherwise a
    polyphase FIR resampler is used.
    """
    if not new_rate_hz > 0:
        raise ParameterError("new_rate_hz must be positive")
    frac = _rational(new_rate_hz / signal.sample_rate_hz, max_denominator)
    up, down = frac.numerator, frac.denominator
    if up == down:
        return signal.replace(samples=signal.samples.copy())
    x = signal.samples
    rate = signal.sample_rate_hz * up / down
    if (x.size * up) % down == 0:
        y = ss.resample(x, x.size * up // down)
    else:
        y = ss.resample_poly(x, up, down, padtype="line")
    return signal.replace(samples=y, sample_rate_hz=rate)


Transfer = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


def fft_apply(signal: SampledSignal, transfer: Transfer) -> SampledSignal:
    """Multiply the spectrum by ``transfer`` and transform back.

    ``transfer`` is either an array on ``np.fft.fftfreq`` bin order or a
    callable taking those bin frequencies (Hz).  Real inputs return the real
    part of the result, which is exact for Hermitian transfers.
    """
    x = signal.samples
    f = np.fft.fftfreq(x.size, d=1.0 / signal.sample_rate_hz)
    H = transfer(f) if callable(transfer) else np.asarray(transfer)
    if H.shape != f.shape:
        raise ParameterError("transfer must be defined on every FFT bin")
    y = np.fft.ifft(np.fft.fft(x) * H)
    if not np.iscomplexobj(x):
        y = y.real
    return signal.replace(samples=y)


def quantize(x: np.ndarray, bits: int, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Uniform mid-rise quantizer with ``2**bits`` levels spanning ``[lo, hi]``.

    The range defaults to the extremes of ``x`` (auto-ranging converter).
    Every in-range sample moves by at most half an LSB.
    """
    x = np.asarray(x, dtype=float)
    lo = float(np.min(x)) if lo is None else float(lo)
    hi = float(np.max(x)) if hi is None else float(hi)
    if hi <= lo:
        return x.copy()
    levels = 2**int(bits)
    lsb = (hi - lo) / (levels - 1)
    code = np.clip(np.rint((x - lo) / lsb), 0, levels - 1)
    return lo + code * lsb


def analog_lowpass(f3db_hz: float, order: int = 4, kind: str = "bessel") -> Callable[[np.ndarray], np.ndarray]:
    """Frequency response of an analog low-pass prototype with its 3-dB point at ``f3db_hz``."""
    if not f3db_hz > 0:
        raise ParameterError("cutoff must be positive")
    wc = 2 * np.pi * f3db_hz
    if kind == "bessel":
        b, a = ss.bessel(order, wc, analog=True, norm="mag")
    elif kind == "butter":
        b, a = ss.butter(order, wc, analog=True)
    else:
        raise ParameterError(f"unknown low-pass kind {kind!r}")

    def transfer(f):
        return ss.freqs(b, a, 2 * np.pi * np.asarray(f, dtype=float))[1]

    return transfer
