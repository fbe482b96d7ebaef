"""Noise whitening and sequence detection.

The equalized sequence ``q`` carries colored noise.  A short FIR post
filter designed from the noise autocorrelation whitens it; the filter's own
(known) ISI is then removed by a Viterbi search over an ``M**P``-state
trellis using the post-filter taps as the channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .equalizers import slicer
from .signal import ParameterError, pam_alphabet

__all__ = [
    "ConditioningError",
    "CapacityError",
    "NoiseAutocorr",
    "PostFilterTaps",
    "MlseDetector",
    "estimate_noise",
    "autocorrelation",
    "levinson_durbin",
    "yule_walker",
    "post_filter",
    "mlse_detect",
    "acmd_detect",
    "AcmdResult",
    "DEFAULT_STATE_BUDGET",
]

DEFAULT_STATE_BUDGET = 2**16
CONDITION_LIMIT = 1e12


class ConditioningError(ValueError):
    """Autocorrelation matrix is not safely positive definite."""


class CapacityError(ValueError):
    """Trellis would exceed the configured state budget."""


@dataclass(frozen=True)
class NoiseAutocorr:
    R: np.ndarray

    @property
    def order(self) -> int:
        return self.R.size - 1

    def toeplitz(self) -> np.ndarray:
        P = self.order
        idx = np.abs(np.arange(P + 1)[:, None] - np.arange(P + 1)[None, :])
        return self.R[idx]


@dataclass(frozen=True)
class PostFilterTaps:
    w: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if w.size < 1 or not np.all(np.isfinite(w)):
            raise ParameterError("post-filter taps must be finite and non-empty")
        object.__setattr__(self, "w", w)

    @property
    def memory(self) -> int:
        return self.w.size - 1


@dataclass(frozen=True)
class MlseDetector:
    """Trellis description; build it from the post filter so both share ``w``."""

    w: np.ndarray
    M: int = 2
    traceback_depth: int | None = None
    state_budget: int = DEFAULT_STATE_BUDGET

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        object.__setattr__(self, "w", w)
        if self.num_states > self.state_budget:
            raise CapacityError(f"{self.num_states} states exceed the budget of {self.state_budget}")
        depth = 5 * self.memory if self.traceback_depth is None else int(self.traceback_depth)
        if depth < 5 * self.memory:
            raise ParameterError("traceback depth must be at least 5 * P")
        object.__setattr__(self, "traceback_depth", max(depth, 1))

    @classmethod
    def from_post_filter(cls, pf: PostFilterTaps, M: int = 2, **kw) -> "MlseDetector":
        return cls(pf.w, M, **kw)

    @property
    def memory(self) -> int:
        return self.w.size - 1

    @property
    def num_states(self) -> int:
        return self.M**self.memory


def estimate_noise(v, known=None, M: int = 2) -> np.ndarray:
    """Noise estimate ``z = v - v_hat``.

    ``v_hat`` is the nearest alphabet point, or the known symbols where
    ``known`` supplies them (a prefix of ``v``).
    """
    v = np.asarray(v, dtype=float)
    vhat = slicer(v, M)
    if known is not None:
        known = np.asarray(known, dtype=float)
        vhat[: known.size] = known
    return v - vhat


def autocorrelation(z, P: int) -> NoiseAutocorr:
    """Biased autocorrelation ``R_k = (1/N) sum_n z_n z_{n+k}``, k = 0..P.

    The estimate is rejected when its Toeplitz matrix is not positive
    definite, is ill-conditioned, or has its smallest eigenvalue within the
    estimator's own edge bias (a constant sequence, for instance).
    """
    z = np.asarray(z, dtype=float)
    N = z.size
    if N < 100 * (P + 1):
        raise ParameterError(f"need at least {100 * (P + 1)} noise samples for P={P}")
    R = np.array([np.dot(z[: N - k], z[k:]) / N for k in range(P + 1)])
    ac = NoiseAutocorr(R)
    _check_conditioning(ac)
    if P >= 1:
        # the 1/N normalization shrinks lag k by k/N; an eigenvalue inside
        # that bias (Frobenius bound) cannot be told apart from zero
        lag = np.abs(np.arange(P + 1)[:, None] - np.arange(P + 1)[None, :])
        bias = R[0] * np.sqrt(np.sum(lag.astype(float) ** 2)) / N
        if np.linalg.eigvalsh(ac.toeplitz())[0] <= bias:
            raise ConditioningError("noise autocorrelation is numerically singular (constant estimate)")
    return ac


def _check_conditioning(ac: NoiseAutocorr):
    R = ac.R
    if not R[0] > 0:
        raise ConditioningError("zero-power noise estimate")
    eig = np.linalg.eigvalsh(ac.toeplitz())
    if eig[0] <= 0 or eig[-1] / eig[0] > CONDITION_LIMIT:
        raise ConditioningError("noise autocorrelation matrix is not positive definite")


def levinson_durbin(R: np.ndarray):
    """Levinson-Durbin recursion on autocorrelation lags ``R[0..P]``.

    Returns ``(a, err, reflection)`` where ``a = [1, a_1, ..., a_P]`` is the
    prediction-error filter, ``err`` the final prediction-error power and
    ``reflection`` the reflection coefficients.  Raises
    :class:`ConditioningError` when a reflection coefficient leaves the
    open unit disc (matrix not positive definite).
    """
    R = np.asarray(R, dtype=float)
    P = R.size - 1
    a = np.zeros(P + 1)
    a[0] = 1.0
    err = R[0]
    if not err > 0:
        raise ConditioningError("R[0] must be positive")
    refl = np.zeros(P)
    for m in range(1, P + 1):
        acc = R[m] + np.dot(a[1:m], R[m - 1 : 0 : -1])
        k = -acc / err
        if not abs(k) < 1:
            raise ConditioningError("autocorrelation sequence is not positive definite")
        a[1 : m + 1] = a[1 : m + 1] + k * a[m - 1 :: -1][: m]
        err *= 1 - k * k
        refl[m - 1] = k
    return a, err, refl


def yule_walker(ac: NoiseAutocorr) -> PostFilterTaps:
    """Post-filter taps solving ``Toeplitz(R) w = [R_0, 0, ..., 0]^T``.

    The solution is the prediction-error filter scaled by ``R_0 / err``,
    obtained through the Levinson-Durbin recursion.
    """
    _check_conditioning(ac)
    a, err, _ = levinson_durbin(ac.R)
    return PostFilterTaps(a * (ac.R[0] / err))


def post_filter(q, taps: PostFilterTaps, history=None) -> np.ndarray:
    """Causal FIR ``v_n = sum_i w_i q_{n-i}`` with zero (or given) history.

    No delay compensation: the ISI the filter introduces is exactly the
    channel the sequence detector expects.
    """
    q = np.asarray(q, dtype=float)
    w = taps.w
    if history is not None and w.size > 1:
        h = np.asarray(history, dtype=float)[-(w.size - 1) :]
        h = np.concatenate((np.zeros(w.size - 1 - h.size), h))
        return np.convolve(np.concatenate((h, q)), w)[w.size - 1 : w.size - 1 + q.size]
    return np.convolve(q, w)[: q.size]


@njit(cache=True)
def _viterbi(v, w, alphabet, init_state, depth, out):
    """Add-compare-select over ``M**P`` states.

    State index encodes ``(s_{k-1}, ..., s_{k-P})`` in base M with
    ``s_{k-1}`` most significant.  ``init_state < 0`` starts from equal
    metrics.  Decisions older than ``depth`` are committed from the best
    survivor; survivors are stored in a ring buffer.
    """
    N = v.size
    M = alphabet.size
    P = w.size - 1
    S = M**P
    top = M ** (P - 1)
    metric = np.zeros(S)
    if init_state >= 0:
        metric[:] = np.inf
        metric[init_state] = 0.0
    # ISI contributed by the state's P past symbols
    isi = np.zeros(S)
    for s in range(S):
        acc = 0.0
        x = s
        for i in range(P, 0, -1):
            acc += w[i] * alphabet[x % M]
            x //= M
        isi[s] = acc
    L = depth + 1
    ring = np.zeros((L, S), dtype=np.int32)
    new = np.empty(S)
    for k in range(N):
        slot = k % L
        for ns in range(S):
            sym = ns // top
            base = (ns % top) * M
            target = v[k] - w[0] * alphabet[sym]
            best = np.inf
            arg = 0
            for d in range(M):
                ps = base + d
                r = target - isi[ps]
                m = metric[ps] + r * r
                if m < best:
                    best = m
                    arg = d
            new[ns] = best
            ring[slot, ns] = arg
        for ns in range(S):
            metric[ns] = new[ns]
        if k >= depth:
            # commit symbol k - depth from the current best survivor
            s = 0
            bm = np.inf
            for ns in range(S):
                if metric[ns] < bm:
                    bm = metric[ns]
                    s = ns
            for j in range(k, k - depth, -1):
                s = (s % top) * M + ring[j % L, s]
            out[k - depth] = alphabet[s // top]
    s = 0
    bm = np.inf
    for ns in range(S):
        if metric[ns] < bm:
            bm = metric[ns]
            s = ns
    start = max(N - depth, 0)
    for j in range(N - 1, start - 1, -1):
        out[j] = alphabet[s // top]
        s = (s % top) * M + ring[j % L, s]


def _state_index(prefix: np.ndarray, alphabet: np.ndarray, P: int) -> int:
    """Trellis state for the last P known symbols (most recent first)."""
    M = alphabet.size
    idx = 0
    for i in range(1, P + 1):
        digit = int(np.flatnonzero(alphabet == prefix[-i])[0])
        idx = idx * M + digit
    return idx


def mlse_detect(v, det: MlseDetector, known_prefix=None) -> np.ndarray:
    """Minimum-Euclidean-distance sequence ``argmin sum_k (v_k - sum_i w_i s_{k-i})^2``.

    With ``known_prefix`` (symbols preceding ``v[0]``) the trellis starts
    from that state; otherwise all states start with zero metric.
    Equal metrics resolve toward the smaller predecessor index.
    """
    v = np.ascontiguousarray(v, dtype=float)
    alphabet = pam_alphabet(det.M)
    P = det.memory
    out = np.zeros(v.size)
    if v.size == 0:
        return out
    if P == 0:
        return slicer(v / det.w[0], det.M)
    init = -1
    if known_prefix is not None and len(known_prefix) >= P:
        init = _state_index(np.asarray(known_prefix, dtype=float), alphabet, P)
    depth = min(int(det.traceback_depth), v.size)
    _viterbi(v, det.w, alphabet, init, depth, out)
    return out


@dataclass
class AcmdResult:
    decisions: np.ndarray
    post_filter: PostFilterTaps
    autocorr: NoiseAutocorr
    v: np.ndarray


def acmd_detect(q, P: int, known_prefix=None, M: int = 2, use_training: bool = False,
                traceback_depth: int | None = None, state_budget: int = DEFAULT_STATE_BUDGET) -> AcmdResult:
    """Noise estimation, Yule-Walker post filter and MLSE on the equalized sequence.

    ``known_prefix`` holds the training symbols at the start of ``q``; they
    seed the trellis, and with ``use_training`` also replace decisions in
    the noise estimate.  Output decisions cover the whole of ``q``, with
    the known prefix copied through.
    """
    q = np.asarray(q, dtype=float)
    known = None if known_prefix is None else np.asarray(known_prefix, dtype=float)
    z = estimate_noise(q, known if use_training else None, M)
    ac = autocorrelation(z, P)
    pf = yule_walker(ac)
    det = MlseDetector.from_post_filter(pf, M, traceback_depth=traceback_depth, state_budget=state_budget)
    if known is not None and known.size:
        T = known.size
        v = post_filter(q[T:], pf, history=q[:T])
        dec = np.concatenate((known, mlse_detect(v, det, known_prefix=known)))
        v = np.concatenate((post_filter(q[:T], pf), v))
    else:
        v = post_filter(q, pf)
        dec = mlse_detect(v, det)
    return AcmdResult(dec, pf, ac, v)
