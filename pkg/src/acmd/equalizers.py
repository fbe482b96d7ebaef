"""Adaptive equalizers: FFE, memory-polynomial (PNLE) and Volterra (VNLE)
forward models, Adam training of the polynomial taps, and the AR-MA
decision-feedback equalizer trained by LMS then decision-directed LMS.

Tap alignment convention: every feedforward window is centred on the
output index, ``y_n = sum_k h_k x_{n + c - k}`` with ``c = (K - 1) // 2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numpy.lib.stride_tricks import sliding_window_view

from .signal import ParameterError, SymbolFrame, pam_alphabet

__all__ = [
    "EqualizerStateError",
    "TrainingError",
    "FfeTaps",
    "PnleTaps",
    "VnleTaps",
    "DfeTaps",
    "AdamState",
    "LmsState",
    "TrainResult",
    "DfeResult",
    "ffe_forward",
    "pnle_forward",
    "vnle_forward",
    "pnle_design_matrix",
    "train_pnle",
    "dfe_run",
    "train_dfe",
    "slicer",
    "equalizer_frequency_response",
]


class EqualizerStateError(ValueError):
    """Tap set contains non-finite coefficients."""


class TrainingError(RuntimeError):
    """Adaptive training diverged."""


def _check_finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise EqualizerStateError("taps must be finite")


@dataclass(frozen=True)
class FfeTaps:
    h: np.ndarray

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if h.size < 1:
            raise ParameterError("FFE needs at least one tap")
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class PnleTaps:
    """Third-order memory polynomial: one FIR per power of the input."""

    h1: np.ndarray
    h2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    h3: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("h1", "h2", "h3"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        K1, K2, K3 = self.sizes
        if K1 < 1 or K2 > K1 or K3 > K1:
            raise ParameterError("PNLE tap counts must satisfy K1 >= 1, K1 >= K2, K1 >= K3")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.h1.size, self.h2.size, self.h3.size

    @property
    def reference_tap(self) -> int:
        return (self.h1.size - 1) // 2

    @classmethod
    def centre_spike(cls, K1: int, K2: int = 0, K3: int = 0) -> "PnleTaps":
        h1 = np.zeros(K1)
        h1[(K1 - 1) // 2] = 1.0
        return cls(h1, np.zeros(K2), np.zeros(K3))

    def flat(self) -> np.ndarray:
        return np.concatenate((self.h1, self.h2, self.h3))

    @classmethod
    def from_flat(cls, w: np.ndarray, sizes) -> "PnleTaps":
        K1, K2, _ = sizes
        return cls(w[:K1].copy(), w[K1 : K1 + K2].copy(), w[K1 + K2 :].copy())


def _cube(a, order: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    K = int(round(a.size ** (1.0 / order)))
    if K**order != a.size:
        raise ParameterError(f"order-{order} Volterra kernel must have K**{order} entries")
    return a.reshape((K,) * order)


@dataclass(frozen=True)
class VnleTaps:
    """Third-order Volterra kernels.

    ``h2[k, l]`` is used for ``l <= k`` and ``h3[k, l, m]`` for
    ``m <= l <= k``; entries outside those index sets are ignored.
    """

    h1: np.ndarray
    h2: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    h3: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0)))

    def __post_init__(self):
        h1 = np.atleast_1d(np.asarray(self.h1, dtype=float))
        h2 = _cube(self.h2, 2)
        h3 = _cube(self.h3, 3)
        if h1.size < 1 or h2.shape[0] > h1.size or h3.shape[0] > h1.size:
            raise ParameterError("VNLE tap counts must satisfy K1 >= K2 and K1 >= K3")
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)
        object.__setattr__(self, "h3", h3)

    @classmethod
    def from_pnle(cls, taps: PnleTaps) -> "VnleTaps":
        K2, K3 = taps.h2.size, taps.h3.size
        h2 = np.zeros((K2, K2))
        h2[np.arange(K2), np.arange(K2)] = taps.h2
        h3 = np.zeros((K3, K3, K3))
        h3[np.arange(K3), np.arange(K3), np.arange(K3)] = taps.h3
        return cls(taps.h1, h2, h3)


@dataclass(frozen=True)
class DfeTaps:
    """AR-MA decision-feedback equalizer taps.

    ``f1`` filters the equalizer input (centred window, like the FFE);
    ``f2`` weights past decisions ``q_hat[n-1-l]``.
    """

    f1: np.ndarray
    f2: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        f1 = np.atleast_1d(np.asarray(self.f1, dtype=float))
        f2 = np.atleast_1d(np.asarray(self.f2, dtype=float)) if np.size(self.f2) else np.zeros(0)
        if f1.size < 1:
            raise ParameterError("DFE needs at least one feedforward tap")
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "f2", f2)

    @property
    def reference_tap(self) -> int:
        return (self.f1.size - 1) // 2

    @classmethod
    def centre_spike(cls, F1: int, F2: int = 0) -> "DfeTaps":
        f1 = np.zeros(F1)
        f1[(F1 - 1) // 2] = 1.0
        return cls(f1, np.zeros(F2))


@dataclass
class AdamState:
    """Adam hyper-parameters with one step size per polynomial order."""

    step: tuple[float, float, float] = (1e-3, 1e-4, 1e-5)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 500
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError("Adam decay rates must lie in [0, 1)")
        if not self.eps > 0:
            raise ParameterError("Adam eps must be positive")


@dataclass
class LmsState:
    step: float = 1e-3
    mode: str = "training"

    def __post_init__(self):
        if not self.step >= 0:
            raise ParameterError("LMS step must be non-negative")
        if self.mode not in ("training", "decision-directed"):
            raise ParameterError(f"unknown LMS mode {self.mode!r}")


# --------------------------------------------------------------------------
# forward models


def _windows(x: np.ndarray, K: int, circular: bool) -> np.ndarray:
    """Matrix ``W[n, k] = x[n + c - k]`` with ``c = (K - 1) // 2``."""
    c = (K - 1) // 2
    n = x.size
    if circular:
        idx = (np.arange(n)[:, None] + c - np.arange(K)[None, :]) % n
        return x[idx]
    pad = np.concatenate((np.zeros(K - 1 - c), x, np.zeros(c)))
    return sliding_window_view(pad, K)[:, ::-1]


def _centred_fir(x: np.ndarray, h: np.ndarray, circular: bool) -> np.ndarray:
    K = h.size
    if K == 0:
        return np.zeros_like(x)
    c = (K - 1) // 2
    n = x.size
    if circular:
        if K > n:
            return _windows(x, K, True) @ h
        H = np.fft.rfft(np.roll(np.pad(h, (0, n - K)), -c))
        return np.fft.irfft(np.fft.rfft(x) * H, n)
    y = np.convolve(x, h)
    return y[c : c + n]


def ffe_forward(r, taps: FfeTaps, circular: bool = False) -> np.ndarray:
    """Linear feedforward equalizer output ``sum_k h_k r[n + c - k]``."""
    _check_finite(taps.h)
    return _centred_fir(np.asarray(r, dtype=float), taps.h, circular)


def pnle_forward(r, taps: PnleTaps, circular: bool = False) -> np.ndarray:
    """Memory-polynomial output
    ``sum h1_k r[n-k] + sum h2_k r[n-k]^2 + sum h3_k r[n-k]^3`` (centred windows).
    """
    _check_finite(taps.h1, taps.h2, taps.h3)
    r = np.asarray(r, dtype=float)
    if r.size < taps.h1.size:
        raise ParameterError("input shorter than the first-order window")
    p = _centred_fir(r, taps.h1, circular)
    if taps.h2.size:
        p = p + _centred_fir(r**2, taps.h2, circular)
    if taps.h3.size:
        p = p + _centred_fir(r**3, taps.h3, circular)
    return p


def vnle_forward(r, taps: VnleTaps, circular: bool = False) -> np.ndarray:
    """Full third-order Volterra output over the triangular index sets."""
    _check_finite(taps.h1, taps.h2, taps.h3)
    r = np.asarray(r, dtype=float)
    if r.size < taps.h1.size:
        raise ParameterError("input shorter than the first-order window")
    y = _centred_fir(r, taps.h1, circular)
    K2 = taps.h2.shape[0]
    if K2:
        W = _windows(r, K2, circular)
        for k in range(K2):
            for l in range(k + 1):
                if taps.h2[k, l]:
                    y = y + taps.h2[k, l] * W[:, k] * W[:, l]
    K3 = taps.h3.shape[0]
    if K3:
        W = _windows(r, K3, circular)
        for k in range(K3):
            for l in range(k + 1):
                wkl = W[:, k] * W[:, l]
                for m in range(l + 1):
                    if taps.h3[k, l, m]:
                        y = y + taps.h3[k, l, m] * wkl * W[:, m]
    return y


# --------------------------------------------------------------------------
# Adam training of the polynomial taps


def pnle_design_matrix(r: np.ndarray, sizes, circular: bool = False) -> np.ndarray:
    """Regressor matrix whose product with ``PnleTaps.flat()`` is the PNLE output."""
    K1, K2, K3 = sizes
    cols = [_windows(r, K1, circular)]
    if K2:
        cols.append(_windows(r**2, K2, circular))
    if K3:
        cols.append(_windows(r**3, K3, circular))
    return np.hstack(cols)


@dataclass
class TrainResult:
    taps: PnleTaps
    mse_trace: np.ndarray
    adam: AdamState


def train_pnle(r, target, adam: AdamState | None = None, epochs: int = 20,
               sizes=(1, 0, 0), init: PnleTaps | None = None, circular: bool = False) -> TrainResult:
    """Fit PNLE taps to the training prefix with mini-batch Adam on the MSE.

    Parameters
    ----------
    r : array_like
        Received symbol-spaced sequence (full frame; only the training
        prefix enters the loss, but windows may reach into the payload).
    target : SymbolFrame or array_like
        Known symbols.  A frame contributes its training prefix.
    adam : AdamState
        Step sizes per polynomial order and mini-batch size.
    sizes : (K1, K2, K3)
        Tap counts, ignored when ``init`` is given.

    Returns
    -------
    TrainResult
        Final taps, per-step mini-batch MSE trace and the Adam state.
    """
    adam = AdamState() if adam is None else adam
    r = np.asarray(r, dtype=float)
    if isinstance(target, SymbolFrame):
        d = target.training
    else:
        d = np.asarray(target, dtype=float)
    T = d.size
    if T < 1000:
        raise ParameterError("PNLE training needs at least 1000 training symbols")
    if init is None:
        init = PnleTaps.centre_spike(*sizes)
    sizes = init.sizes
    X = pnle_design_matrix(r, sizes, circular)[:T]
    w = init.flat()
    _check_finite(w)
    alpha = np.concatenate([np.full(k, a) for k, a in zip(sizes, adam.step)])
    if adam.m is None or adam.m.size != w.size:
        adam.m = np.zeros_like(w)
        adam.v = np.zeros_like(w)
        adam.t = 0
    B = max(1, min(int(adam.batch_size), T))
    trace = []
    mse0 = float(np.mean((X @ w - d) ** 2))
    for _ in range(int(epochs)):
        for start in range(0, T, B):
            Xb = X[start : start + B]
            e = Xb @ w - d[start : start + B]
            trace.append(float(np.mean(e**2)))
            g = (2.0 / e.size) * (Xb.T @ e)
            adam.t += 1
            adam.m = adam.beta1 * adam.m + (1 - adam.beta1) * g
            adam.v = adam.beta2 * adam.v + (1 - adam.beta2) * g * g
            mhat = adam.m / (1 - adam.beta1**adam.t)
            vhat = adam.v / (1 - adam.beta2**adam.t)
            w = w - alpha * mhat / (np.sqrt(vhat) + adam.eps)
        mse = float(np.mean((X @ w - d) ** 2))
        if not np.isfinite(mse) or mse > 10 * max(mse0, 1e-12):
            raise TrainingError(f"PNLE training diverged (MSE {mse:.3g} vs initial {mse0:.3g})")
    return TrainResult(PnleTaps.from_flat(w, sizes), np.asarray(trace), adam)


# --------------------------------------------------------------------------
# decision-feedback equalizer


def slicer(x, M: int = 2) -> np.ndarray:
    """Nearest M-PAM level; values exactly between two levels go up."""
    x = np.asarray(x, dtype=float)
    k = np.floor((x + (M - 1)) / 2.0 + 0.5)
    return 2.0 * np.clip(k, 0, M - 1) - (M - 1)


@njit(cache=True)
def _slice1(x, M):
    k = np.floor((x + (M - 1)) / 2.0 + 0.5)
    if k < 0:
        k = 0.0
    elif k > M - 1:
        k = M - 1.0
    return 2.0 * k - (M - 1)


@njit(cache=True)
def _dfe_kernel(p, f1, f2, mu, targets, n_start, n_stop, M, circular, q, qhat, fb):
    """One sequential pass over samples ``n_start..n_stop-1``.

    ``fb`` holds the feedback history (most recent first) and is updated in
    place, as are the taps.  Indices ``n < targets.size`` use the known
    symbol for feedback and error.
    """
    N = p.size
    F1 = f1.size
    F2 = f2.size
    c = (F1 - 1) // 2
    x1 = np.empty(F1)
    for n in range(n_start, n_stop):
        for k in range(F1):
            j = n + c - k
            if circular:
                j = j % N
                x1[k] = p[j]
            elif 0 <= j < N:
                x1[k] = p[j]
            else:
                x1[k] = 0.0
        y = 0.0
        for k in range(F1):
            y += f1[k] * x1[k]
        for l in range(F2):
            y += f2[l] * fb[l]
        dec = _slice1(y, M)
        ref = targets[n] if n < targets.size else dec
        e = ref - y
        if mu != 0.0:
            for k in range(F1):
                f1[k] += mu * e * x1[k]
            for l in range(F2):
                f2[l] += mu * e * fb[l]
        for l in range(F2 - 1, 0, -1):
            fb[l] = fb[l - 1]
        if F2:
            fb[0] = ref
        q[n] = y
        qhat[n] = dec


@dataclass
class DfeResult:
    q: np.ndarray
    decisions: np.ndarray
    taps: DfeTaps


def dfe_run(p, taps: DfeTaps, lms: LmsState, target=None, M: int = 2,
            circular: bool = False, history=None) -> DfeResult:
    """Run the AR-MA DFE once over ``p``.

    ``q_n = sum_k f1_k p[n + c - k] + sum_l f2_l q_hat[n - 1 - l]``.  In
    training mode the known symbols replace decisions (feedback and error)
    over the span covered by ``target``; afterwards the taps track with
    decision-directed LMS.  ``history`` seeds the feedback register
    (most recent decision first); it defaults to zeros.
    """
    p = np.ascontiguousarray(p, dtype=float)
    f1 = taps.f1.copy()
    f2 = taps.f2.copy()
    _check_finite(f1, f2)
    if lms.mode == "training" and target is not None:
        t = target.training if isinstance(target, SymbolFrame) else np.asarray(target, dtype=float)
    else:
        t = np.zeros(0)
    t = np.ascontiguousarray(t[: p.size], dtype=float)
    q = np.zeros(p.size)
    qhat = np.zeros(p.size)
    fb = np.zeros(f2.size) if history is None else np.array(history, dtype=float)[: f2.size].copy()
    if fb.size < f2.size:
        fb = np.concatenate((fb, np.zeros(f2.size - fb.size)))
    _dfe_kernel(p, f1, f2, float(lms.step), t, 0, p.size, int(M), bool(circular), q, qhat, fb)
    return DfeResult(q, qhat, DfeTaps(f1, f2))


def train_dfe(p, taps: DfeTaps, lms: LmsState, target, epochs: int = 5, M: int = 2,
              circular: bool = False) -> DfeResult:
    """LMS passes over the training prefix, then one full-frame pass
    (training prefix with known symbols, payload decision-directed)."""
    d = target.training if isinstance(target, SymbolFrame) else np.asarray(target, dtype=float)
    p = np.asarray(p, dtype=float)
    T = d.size
    for _ in range(int(epochs)):
        res = dfe_run(p[:T], taps, LmsState(lms.step, "training"), d, M=M, circular=False)
        taps = res.taps
    return dfe_run(p, taps, LmsState(lms.step, "training"), d, M=M, circular=circular)


# --------------------------------------------------------------------------
# linearized frequency response


def _fir_response(h: np.ndarray, w: np.ndarray, centre: int) -> np.ndarray:
    k = np.arange(h.size) - centre
    return np.exp(-1j * np.outer(w, k)) @ h if h.size else np.zeros(w.size, complex)


def equalizer_frequency_response(taps: PnleTaps | None, dfe: DfeTaps | None, grid: int = 1024) -> np.ndarray:
    """Linearized joint response of PNLE (first-order taps) and DFE.

    The decision device is replaced by identity, giving
    ``H = H_h1 * H_f1 / (1 - H_f2 e^{-jw})`` on ``w_k = pi k / grid``,
    ``k = 0..grid-1``.  Windows are referenced to their centre taps.
    """
    if grid < 256:
        raise ParameterError("grid must have at least 256 points")
    w = np.pi * np.arange(grid) / grid
    H = np.ones(grid, complex)
    if taps is not None:
        H = H * _fir_response(taps.h1, w, taps.reference_tap)
    if dfe is not None:
        H = H * _fir_response(dfe.f1, w, dfe.reference_tap)
        if dfe.f2.size:
            den = 1 - _fir_response(dfe.f2, w, 0) * np.exp(-1j * w)
            if np.min(np.abs(den)) < 1e-6:
                warnings.warn("DFE feedback pole on the unit circle", RuntimeWarning)
            H = H / den
    return H
