"""Transmitter: bit generation, PAM mapping, pulse shaping, DAC and MZM."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .signal import (
    ParameterError,
    RrcFilter,
    SampledSignal,
    SeededRng,
    SymbolFrame,
    analog_lowpass,
    fft_apply,
    fir_filter,
    pam_alphabet,
    quantize,
)

__all__ = [
    "MzmParams",
    "TxConfig",
    "generate_frame",
    "shape_symbols",
    "shape_and_modulate",
    "mzm_field",
    "net_rate_gbps",
]


@dataclass(frozen=True)
class MzmParams:
    """Single-drive Mach-Zehnder modulator.

    ``linear=True`` replaces the cosine transfer with an ideal field
    modulator (field equals the normalized drive), used for loopback tests.
    """

    v_pi: float = 2.5
    bias_voltage: float = 2.0
    drive_swing: float = 0.4
    linear: bool = False

    def __post_init__(self):
        if not self.v_pi > 0:
            raise ParameterError("v_pi must be positive")


@dataclass(frozen=True)
class TxConfig:
    baud_rate_hz: float = 64e9
    sps: int = 4
    dc_bias: float = 1.0
    dac_bandwidth_hz: float | None = 16e9
    dac_bits: int = 8
    driver_bandwidth_hz: float | None = 6e9
    driver_order: int = 1
    mzm: MzmParams = field(default_factory=MzmParams)
    launch_power_dbm: float = 0.0

    def __post_init__(self):
        if not self.baud_rate_hz > 0:
            raise ParameterError("baud_rate_hz must be positive")
        if not 4 <= self.dac_bits <= 16:
            raise ParameterError("dac_bits must lie in [4, 16]")
        if self.sps < 1:
            raise ParameterError("sps must be >= 1")

    @property
    def sample_rate_hz(self) -> float:
        return self.baud_rate_hz * self.sps


def _gray_levels(bits: np.ndarray, M: int) -> np.ndarray:
    k = int(np.log2(M))
    words = bits.reshape(-1, k)
    idx = np.zeros(words.shape[0], dtype=np.int64)
    for j in range(k):
        idx = (idx << 1) | words[:, j]
    # Gray -> binary index
    b = idx.copy()
    shift = idx >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return pam_alphabet(M)[b]


def generate_frame(rng: SeededRng, total_symbols: int, training_len: int, modulation_order: int = 2) -> SymbolFrame:
    """Draw an equiprobable M-PAM frame whose first ``training_len`` symbols are the training prefix."""
    if not 0 <= training_len <= total_symbols:
        raise ParameterError("training_len must lie in [0, total_symbols]")
    M = int(modulation_order)
    k = int(np.log2(M))
    if 2**k != M:
        raise ParameterError("modulation order must be a power of two")
    bits = rng.integers(0, 2, size=total_symbols * k, dtype=np.uint8)
    symbols = _gray_levels(bits.astype(np.int64), M)
    return SymbolFrame(bits, symbols, training_len, total_symbols - training_len, M)


def shape_symbols(symbols: np.ndarray, rrc: RrcFilter, dc: float = 0.0) -> np.ndarray:
    """Upsample ``symbols + dc`` and pulse-shape with the RRC (periodic frame).

    The impulse train is scaled by ``sps`` so each symbol keeps unit
    amplitude through a unit-energy filter at the sampling instants.
    """
    sps = rrc.samples_per_symbol
    up = np.zeros(symbols.size * sps)
    up[::sps] = np.asarray(symbols, dtype=float) * np.sqrt(sps)
    h = rrc.taps
    # dc passes the filter with gain sum(h) * sqrt(sps) / sps
    shaped = fir_filter(SampledSignal(up, 1.0), h, circular=True).samples
    return shaped + dc * np.sum(h) / np.sqrt(sps)


def mzm_field(drive: np.ndarray, mzm: MzmParams) -> np.ndarray:
    """Optical field for drive voltage ``drive``.

    The drive enters the modulator with inverting polarity, so the field
    ``cos(pi * (bias - v) / (2 v_pi))`` rises with the drive around the
    chosen bias.
    """
    if mzm.linear:
        return np.asarray(drive, dtype=float)
    return np.cos(np.pi * (mzm.bias_voltage - drive) / (2 * mzm.v_pi))


def shape_and_modulate(frame: SymbolFrame, cfg: TxConfig, rrc: RrcFilter) -> SampledSignal:
    """Build the transmitted complex optical field.

    Chain: add ``dc_bias`` -> RRC shaping -> DAC (quantizer + low-pass)
    -> driver/modulator electrical response -> MZM -> scale to the launch power.  The mean field
    power equals ``10**(launch_power_dbm / 10)`` (mW units) and the value is
    tagged as ``meta['power_dbm']``.
    """
    if rrc.samples_per_symbol != cfg.sps:
        raise ParameterError("RRC oversampling does not match the transmitter's")
    u = shape_symbols(frame.symbols, rrc, cfg.dc_bias)
    u = quantize(u, cfg.dac_bits)
    fs = cfg.sample_rate_hz
    if cfg.dac_bandwidth_hz:
        u = fft_apply(SampledSignal(u, fs), analog_lowpass(cfg.dac_bandwidth_hz)).samples
    if cfg.driver_bandwidth_hz:
        lp = analog_lowpass(cfg.driver_bandwidth_hz, cfg.driver_order, "butter")
        u = fft_apply(SampledSignal(u, fs), lp).samples
    clipped = cfg.mzm.drive_swing > 2 * cfg.mzm.v_pi
    if clipped:
        warnings.warn("MZM drive swing exceeds 2*v_pi; modulator is over-driven", RuntimeWarning)
    if cfg.mzm.linear:
        e = u
    else:
        e = mzm_field(0.5 * cfg.mzm.drive_swing * u, cfg.mzm)
    e = e.astype(complex)
    p_mw = 10 ** (cfg.launch_power_dbm / 10)
    pw = np.mean(np.abs(e) ** 2)
    if pw > 0:
        e *= np.sqrt(p_mw / pw)
    return SampledSignal(e, fs, {"power_dbm": cfg.launch_power_dbm, "clipped": clipped})


def net_rate_gbps(link_rate_gbps: float, payload: int, total: int, fec_overhead: float) -> float:
    """Net information rate after training overhead and FEC overhead."""
    if not 0 < payload <= total:
        raise ParameterError("need 0 < payload <= total")
    if fec_overhead < 0:
        raise ParameterError("fec_overhead must be non-negative")
    return link_rate_gbps * payload / total / (1.0 + fec_overhead)
