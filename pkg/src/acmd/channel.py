"""Optical link: fiber dispersion and loss, ASE noise, square-law detection
and the electrical receiver front end (PD, ADC)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import (
    ParameterError,
    SampledSignal,
    SeededRng,
    analog_lowpass,
    fft_apply,
    quantize,
    resample,
)

__all__ = [
    "SPEED_OF_LIGHT",
    "FiberParams",
    "NoiseParams",
    "ReceiverParams",
    "beta2_from_dispersion",
    "null_frequencies",
    "ssmf_transfer",
    "apply_ssmf",
    "add_optical_noise",
    "add_electrical_noise",
    "photodetect",
    "receiver_frontend",
]

SPEED_OF_LIGHT = 2.99792458e8  # m/s
OSNR_REF_BANDWIDTH_HZ = 12.5e9  # 0.1 nm at 1550 nm


@dataclass(frozen=True)
class FiberParams:
    length_km: float = 0.0
    dispersion_ps_nm_km: float = 17.0
    wavelength_nm: float = 1550.116
    loss_db_km: float = 0.2

    def __post_init__(self):
        if self.length_km < 0:
            raise ParameterError("fiber length must be non-negative")
        if not 1200 < self.wavelength_nm < 1700:
            raise ParameterError("wavelength must lie in (1200, 1700) nm")

    @property
    def beta2_ps2_km(self) -> float:
        return beta2_from_dispersion(self.dispersion_ps_nm_km, self.wavelength_nm)


@dataclass(frozen=True)
class NoiseParams:
    """Noise knobs of one scenario.

    Exactly one of ``osnr_db`` and ``rop_dbm`` drives the ASE level.  With
    ``rop_dbm`` the OSNR follows the linear calibration
    ``osnr_db = rop_dbm + osnr_offset_db``.  ``None`` for both disables ASE.
    """

    osnr_db: float | None = None
    rop_dbm: float | None = None
    osnr_offset_db: float = 63.0
    electrical_snr_db: float | None = None

    def __post_init__(self):
        if self.osnr_db is not None and self.rop_dbm is not None:
            raise ParameterError("set either osnr_db or rop_dbm, not both")

    @property
    def effective_osnr_db(self) -> float | None:
        if self.osnr_db is not None:
            return float(self.osnr_db)
        if self.rop_dbm is not None:
            return float(self.rop_dbm + self.osnr_offset_db)
        return None


@dataclass(frozen=True)
class ReceiverParams:
    pd_bandwidth_hz: float = 31e9
    adc_bandwidth_hz: float | None = 36e9
    adc_rate_hz: float = 80e9
    adc_bits: int = 8
    r_dc: float | None = None

    def __post_init__(self):
        if not self.pd_bandwidth_hz > 0 or not self.adc_rate_hz > 0:
            raise ParameterError("receiver bandwidths and rates must be positive")
        if self.adc_bandwidth_hz is not None and not self.adc_bandwidth_hz > 0:
            raise ParameterError("adc bandwidth must be positive")


def beta2_from_dispersion(D: float, wavelength_nm: float) -> float:
    """Group-velocity dispersion in ps^2/km from D in ps/(nm km).

    ``beta2 = -D lambda^2 / (2 pi c)``; negative for anomalous dispersion.
    """
    if not wavelength_nm > 0:
        raise ParameterError("wavelength must be positive")
    lam = wavelength_nm * 1e-9
    d_si = D * 1e-6  # ps/(nm km) -> s/m^2
    beta2_si = -d_si * lam**2 / (2 * np.pi * SPEED_OF_LIGHT)  # s^2/m
    return beta2_si * 1e27  # -> ps^2/km


def null_frequencies(fiber: FiberParams, f_max_hz: float) -> np.ndarray:
    """Power-fading null frequencies below ``f_max_hz``.

    Nulls sit where ``cos(beta2 L w^2 / 2) = 0``, i.e.
    ``f_k = sqrt((2k+1) pi / (|beta2| L)) / (2 pi)``.
    """
    bl = abs(fiber.beta2_ps2_km) * 1e-24 * fiber.length_km  # s^2
    if bl == 0:
        return np.empty(0)
    kmax = int(np.floor(((2 * np.pi * f_max_hz) ** 2 * bl / np.pi - 1) / 2))
    k = np.arange(max(kmax + 1, 0))
    f = np.sqrt((2 * k + 1) * np.pi / bl) / (2 * np.pi)
    return f[f < f_max_hz]


def ssmf_transfer(fiber: FiberParams):
    """All-pass dispersion response ``exp(j beta2 L w^2 / 2)`` as a function of f (Hz)."""
    bl = fiber.beta2_ps2_km * 1e-24 * fiber.length_km

    def transfer(f):
        w = 2 * np.pi * np.asarray(f)
        return np.exp(0.5j * bl * w**2)

    return transfer


def apply_ssmf(field: SampledSignal, fiber: FiberParams) -> SampledSignal:
    """Propagate a complex baseband field through standard single-mode fiber."""
    if fiber.length_km == 0:
        return field.replace(samples=field.samples.astype(complex))
    x = field.samples.astype(complex)
    out = fft_apply(field.replace(samples=x), ssmf_transfer(fiber))
    loss_db = fiber.loss_db_km * fiber.length_km
    y = out.samples * 10 ** (-loss_db / 20)
    meta = {}
    if "power_dbm" in field.meta:
        meta["power_dbm"] = field.meta["power_dbm"] - loss_db
    return out.replace(samples=y, **meta)


def add_optical_noise(field: SampledSignal, noise: NoiseParams, rng: SeededRng) -> SampledSignal:
    """Add circular complex Gaussian ASE at the scenario's OSNR.

    The OSNR is referenced to a 0.1-nm (12.5 GHz) bandwidth; the noise is
    white over the whole simulation band, so its total power is
    ``P_signal / OSNR * fs / 12.5 GHz``.
    """
    osnr_db = noise.effective_osnr_db
    if osnr_db is None or osnr_db == np.inf:
        return field
    if not np.isfinite(osnr_db):
        raise ParameterError(f"nonphysical OSNR {osnr_db} dB")
    osnr = 10 ** (osnr_db / 10)
    if not osnr > 0 or not np.isfinite(osnr):
        raise ParameterError("OSNR must be positive")
    ps = field.power()
    n0 = ps / osnr / OSNR_REF_BANDWIDTH_HZ  # noise PSD, W/Hz in signal units
    var = n0 * field.sample_rate_hz
    n = rng.standard_normal(len(field)) + 1j * rng.standard_normal(len(field))
    return field.replace(samples=field.samples + np.sqrt(var / 2) * n, osnr_db=osnr_db)


def add_electrical_noise(signal: SampledSignal, snr_db: float | None, rng: SeededRng) -> SampledSignal:
    """Optional post-detection AWGN at ``snr_db`` relative to the AC signal power."""
    if snr_db is None:
        return signal
    x = signal.samples
    p = np.var(x)
    sigma = np.sqrt(p / 10 ** (snr_db / 10))
    return signal.replace(samples=x + sigma * rng.standard_normal(x.size))


def photodetect(field: SampledSignal) -> SampledSignal:
    """Square-law detection: photocurrent ``|E|^2`` (unit responsivity)."""
    return field.replace(samples=np.abs(field.samples) ** 2)


def receiver_frontend(signal: SampledSignal, rx: ReceiverParams, rng: SeededRng | None = None) -> SampledSignal:
    """PIN-TIA low-pass, oscilloscope bandwidth, resampling to the ADC rate,
    quantization and DC removal.

    ``rng`` is reserved for stochastic converter impairments and is unused
    by the default model.
    """
    x = signal
    if x.is_complex:
        raise ParameterError("receiver front end expects a real photocurrent")
    x = fft_apply(x, analog_lowpass(rx.pd_bandwidth_hz))
    if rx.adc_bandwidth_hz:
        x = fft_apply(x, analog_lowpass(rx.adc_bandwidth_hz))
    x = resample(x, rx.adc_rate_hz)
    y = quantize(x.samples, rx.adc_bits)
    y = y - (np.mean(y) if rx.r_dc is None else rx.r_dc)
    return x.replace(samples=y)
