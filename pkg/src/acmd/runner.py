"""Scenario presets, configuration files, end-to-end runs and sweeps.

A :class:`LinkScenario` fixes every knob of one experiment.  It round-trips
through an INI-style text file (one section per component) so that each
result record carries its own provenance.
"""

from __future__ import annotations

import ast
import configparser
import dataclasses
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import (
    FiberParams,
    NoiseParams,
    ReceiverParams,
    add_electrical_noise,
    add_optical_noise,
    apply_ssmf,
    null_frequencies,
    photodetect,
    receiver_frontend,
)
from .equalizers import AdamState, DfeTaps, LmsState, PnleTaps, pnle_forward, slicer, train_dfe, train_pnle
from .metrics import HD_FEC_THRESHOLD, SD_FEC_THRESHOLD, NullReport, PsdEstimate, ber, count_spectral_nulls, welch_psd
from .mlse import acmd_detect
from .rxdsp import synchronize, to_simulation_rate, to_symbols
from .signal import ParameterError, SampledSignal, SeededRng, SymbolFrame, derive_seed, design_rrc
from .tx import MzmParams, TxConfig, generate_frame, shape_and_modulate

__all__ = [
    "FrameSpec",
    "DspConfig",
    "LinkScenario",
    "SweepSpec",
    "PipelineError",
    "PipelineOutput",
    "PRESETS",
    "preset",
    "load_scenario",
    "dump_config",
    "scenario_from_config",
    "apply_overrides",
    "config_digest",
    "scenario_hash",
    "run_pipeline",
    "run_scenario",
    "run_sweep",
    "null_check",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FrameSpec:
    total_symbols: int = 82240
    training_len: int = 5000
    modulation_order: int = 2

    def __post_init__(self):
        if not 0 < self.training_len < self.total_symbols:
            raise ParameterError("need 0 < training_len < total_symbols")


@dataclass(frozen=True)
class DspConfig:
    """Receiver DSP settings.

    ``mlse_memory`` is the trellis memory P; the post filter then has
    ``P + 1`` taps.
    """

    rrc_rolloff: float = 0.25
    rrc_span: int = 32
    pnle_taps: tuple = (291, 81, 41)
    dfe_taps: tuple = (71, 61)
    mlse_memory: int = 10
    adam_steps: tuple = (1e-3, 1e-4, 1e-5)
    adam_batch: int = 500
    pnle_epochs: int = 500
    dfe_step: float = 2e-4
    dfe_epochs: int = 3
    noise_from_training: bool = False
    traceback_depth: int | None = None
    hd_fec_threshold: float = HD_FEC_THRESHOLD
    sd_fec_threshold: float = SD_FEC_THRESHOLD

    def __post_init__(self):
        if len(self.pnle_taps) != 3 or len(self.dfe_taps) != 2:
            raise ParameterError("pnle_taps needs (K1, K2, K3) and dfe_taps (F1, F2)")
        if self.mlse_memory < 0:
            raise ParameterError("mlse_memory must be >= 0")

    @property
    def pf_taps(self) -> int:
        return self.mlse_memory + 1


@dataclass(frozen=True)
class LinkScenario:
    name: str = "custom"
    seed: int = 1
    frame: FrameSpec = field(default_factory=FrameSpec)
    tx: TxConfig = field(default_factory=TxConfig)
    fiber: FiberParams = field(default_factory=FiberParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    rx: ReceiverParams = field(default_factory=ReceiverParams)
    dsp: DspConfig = field(default_factory=DspConfig)

    def with_seed(self, seed: int) -> "LinkScenario":
        return replace(self, seed=int(seed))


def _preset(name, length_km, launch_dbm, rop_dbm, pnle, dfe, memory):
    return LinkScenario(
        name=name,
        tx=TxConfig(launch_power_dbm=launch_dbm),
        fiber=FiberParams(length_km=length_km),
        noise=NoiseParams(rop_dbm=rop_dbm),
        dsp=DspConfig(pnle_taps=pnle, dfe_taps=dfe, mlse_memory=memory),
    )


PRESETS = {
    "obtb": _preset("obtb", 0.0, 0.0, -9.0, (111, 71, 41), (71, 31), 1),
    "50km": _preset("50km", 50.0, 7.0, -4.0, (111, 71, 41), (71, 31), 10),
    "75km": _preset("75km", 75.0, 7.0, -8.5, (261, 81, 41), (71, 41), 10),
    "100km": _preset("100km", 100.0, 7.0, -14.0, (291, 81, 41), (71, 61), 10),
}


def preset(name: str) -> LinkScenario:
    try:
        return PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# --------------------------------------------------------------------------
# configuration text

# section name -> attribute path inside LinkScenario
_SECTIONS = {
    "scenario": (),
    "frame": ("frame",),
    "tx": ("tx",),
    "mzm": ("tx", "mzm"),
    "fiber": ("fiber",),
    "noise": ("noise",),
    "rx": ("rx",),
    "dsp": ("dsp",),
}


def _get(obj, path):
    for p in path:
        obj = getattr(obj, p)
    return obj


def _scalar_fields(obj):
    return [f for f in dataclasses.fields(obj) if not dataclasses.is_dataclass(getattr(obj, f.name))]


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str, current, ftype: str = ""):
    s = text.strip()
    low = s.lower()
    if low == "none":
        return None
    if low in ("true", "false"):
        return low == "true"
    if isinstance(current, str):
        return s
    try:
        v = ast.literal_eval(s)
    except (ValueError, SyntaxError):
        return s
    if isinstance(current, tuple) and not isinstance(v, tuple):
        v = (v,)
    floaty = isinstance(current, float) or (current is None and "float" in str(ftype))
    if floaty and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if isinstance(v, list):
        v = tuple(v)
    return v


def dump_config(sc: LinkScenario) -> str:
    """Render every setting of ``sc`` as INI text (stable key order)."""
    cp = configparser.ConfigParser(interpolation=None)
    for sec, path in _SECTIONS.items():
        obj = _get(sc, path)
        cp[sec] = {f.name: _fmt(getattr(obj, f.name)) for f in _scalar_fields(obj)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _rebuild(sc: LinkScenario, values: dict) -> LinkScenario:
    """Apply ``{(section, key): raw_text}`` to ``sc``."""
    by_section: dict = {}
    for (sec, key), raw in values.items():
        if sec not in _SECTIONS:
            raise ParameterError(f"unknown config section [{sec}]")
        by_section.setdefault(sec, {})[key] = raw

    def update(obj, path):
        sec = next((s for s, p in _SECTIONS.items() if p == path), None)
        changes = {}
        for f in dataclasses.fields(obj):
            cur = getattr(obj, f.name)
            if dataclasses.is_dataclass(cur):
                changes[f.name] = update(cur, path + (f.name,))
            elif sec in by_section and f.name in by_section[sec]:
                changes[f.name] = _parse(by_section[sec].pop(f.name), cur, f.type)
        return replace(obj, **changes)

    out = update(sc, ())
    leftover = [f"{s}.{k}" for s, d in by_section.items() for k in d]
    if leftover:
        raise ParameterError(f"unknown config keys: {', '.join(sorted(leftover))}")
    return out


def scenario_from_config(text: str, base: LinkScenario | None = None) -> LinkScenario:
    """Parse INI text.  Missing keys keep the values of ``base`` (or of
    the preset named in ``[scenario] preset``, or the defaults)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(text)
    values = {(s, k): v for s in cp.sections() for k, v in cp[s].items()}
    if base is None:
        name = values.pop(("scenario", "preset"), None)
        base = preset(name.strip()) if name else LinkScenario()
    else:
        values.pop(("scenario", "preset"), None)
    values.pop(("sweep", "variable"), None)
    values.pop(("sweep", "values"), None)
    values.pop(("sweep", "trials"), None)
    return _rebuild(base, values)


def apply_overrides(sc: LinkScenario, overrides) -> LinkScenario:
    """Apply ``section.key=value`` strings."""
    values = {}
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ParameterError(f"override {item!r} is not of the form section.key=value")
        k, v = item.split("=", 1)
        sec, key = k.strip().split(".", 1)
        values[(sec, key)] = v
    return _rebuild(sc, values) if values else sc


def load_scenario(ref: str, overrides=(), seed: int | None = None) -> LinkScenario:
    """Preset name or path to a config file, then overrides and seed."""
    if ref in PRESETS:
        sc = PRESETS[ref]
    else:
        path = Path(ref)
        if not path.is_file():
            raise ParameterError(f"{ref!r} is neither a preset nor a config file")
        sc = scenario_from_config(path.read_text())
    sc = apply_overrides(sc, overrides)
    return sc if seed is None else sc.with_seed(seed)


def config_digest(sc: LinkScenario) -> str:
    """Git blob hash of the full config text (seed included)."""
    data = dump_config(sc).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def scenario_hash(sc: LinkScenario) -> str:
    """Hash of the physical scenario: the config without name and seed."""
    data = dump_config(replace(sc, name="", seed=0)).encode()
    return hashlib.sha256(data).hexdigest()[:16]


# --------------------------------------------------------------------------
# pipeline


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineOutput:
    """Everything one run produced; stages that did not run stay ``None``."""

    scenario: LinkScenario
    frame: SymbolFrame | None = None
    detected: SampledSignal | None = None  # ADC output
    symbols: np.ndarray | None = None  # synchronized, matched-filtered
    sync_peak: float | None = None
    pnle: np.ndarray | None = None
    pnle_taps: PnleTaps | None = None
    dfe: np.ndarray | None = None
    dfe_taps: DfeTaps | None = None
    dfe_decisions: np.ndarray | None = None
    acmd: object | None = None
    nulls: NullReport | None = None
    bers: dict = field(default_factory=dict)
    error: PipelineError | None = None


class _Stage:
    def __init__(self, out: PipelineOutput, name: str):
        self.out, self.name = out, name

    def __enter__(self):
        return self

    def __exit__(self, tp, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def _transmit(sc: LinkScenario, rng: SeededRng):
    fs = sc.frame
    frame = generate_frame(rng.child(0), fs.total_symbols, fs.training_len, fs.modulation_order)
    rrc = design_rrc(sc.dsp.rrc_rolloff, sc.dsp.rrc_span, sc.tx.sps)
    return frame, rrc, shape_and_modulate(frame, sc.tx, rrc)


def _detect(sc: LinkScenario, field_: SampledSignal, rng: SeededRng | None, delay: int):
    e = apply_ssmf(field_, sc.fiber)
    e = e.replace(samples=np.roll(e.samples, delay))
    if rng is not None:
        e = add_optical_noise(e, sc.noise, rng.child(1))
    i = photodetect(e)
    if rng is not None and sc.noise.electrical_snr_db is not None:
        i = add_electrical_noise(i, sc.noise.electrical_snr_db, rng.child(2))
    return receiver_frontend(i, sc.rx)


def _null_report(sc: LinkScenario, detected: SampledSignal) -> NullReport:
    psd = welch_psd(detected, segment=4096)
    return count_spectral_nulls(psd, 0.5 * sc.tx.baud_rate_hz)


def null_check(sc: LinkScenario, frames: int = 8) -> tuple[NullReport, np.ndarray]:
    """Null count of the noise-free detected spectrum and the theoretical
    null frequencies below half the baud rate.

    The Welch PSD is averaged over ``frames`` independent data frames (the
    first one from ``sc.seed``) to suppress the data-induced variance that
    otherwise moves notch minima by a bin or two.
    """
    if frames < 1:
        raise ParameterError("frames must be >= 1")
    acc, psd = 0.0, None
    for j in range(int(frames)):
        seed = sc.seed if j == 0 else derive_seed(sc.seed, j, 0)
        _, _, tx = _transmit(sc, SeededRng(seed))
        psd = welch_psd(_detect(sc, tx, None, 0), segment=4096)
        acc = acc + psd.power_linear
    avg = PsdEstimate(psd.frequencies_hz, 10 * np.log10(acc / frames), psd.segment_len, psd.overlap, psd.window)
    rep = count_spectral_nulls(avg, 0.5 * sc.tx.baud_rate_hz)
    return rep, null_frequencies(sc.fiber, 0.5 * sc.tx.baud_rate_hz)


def run_pipeline(sc: LinkScenario, nulls: bool = True) -> PipelineOutput:
    """Transmit, propagate, detect and equalize one frame.

    Stage failures are caught and stored in ``out.error`` with the stage
    label; results of earlier stages are kept.
    """
    out = PipelineOutput(sc)
    rng = SeededRng(sc.seed)
    T = sc.frame.training_len
    M = sc.frame.modulation_order
    d = sc.dsp
    try:
        with _Stage(out, "tx"):
            frame, rrc, tx = _transmit(sc, rng)
            out.frame = frame
            delay = int(rng.child(3).integers(0, tx.samples.size))
        with _Stage(out, "channel"):
            out.detected = _detect(sc, tx, rng, delay)
        if nulls:
            with _Stage(out, "nulls"):
                out.nulls = _null_report(sc, _detect(sc, tx, None, delay))
        with _Stage(out, "sync"):
            x = to_simulation_rate(out.detected, sc.tx.baud_rate_hz, sc.tx.sps)
            sync = synchronize(x, frame, rrc)
            out.sync_peak = sync.correlation_peak
            out.symbols = to_symbols(x, sync, rrc, len(frame))
        with _Stage(out, "pnle"):
            adam = AdamState(step=tuple(d.adam_steps), batch_size=d.adam_batch)
            res = train_pnle(out.symbols, frame, adam, epochs=d.pnle_epochs, sizes=tuple(d.pnle_taps), circular=True)
            out.pnle_taps = res.taps
            out.pnle = pnle_forward(out.symbols, res.taps, circular=True)
            fec = {"hd_threshold": d.hd_fec_threshold, "sd_threshold": d.sd_fec_threshold}
            out.bers["pnle"] = ber(slicer(out.pnle, M), frame, skip=T, **fec)
        with _Stage(out, "dfe"):
            dr = train_dfe(out.pnle, DfeTaps.centre_spike(*d.dfe_taps), LmsState(d.dfe_step), frame,
                           epochs=d.dfe_epochs, M=M, circular=True)
            out.dfe, out.dfe_taps, out.dfe_decisions = dr.q, dr.taps, dr.decisions
            out.bers["pnle_dfe"] = ber(dr.decisions, frame, skip=T, **fec)
        with _Stage(out, "acmd"):
            out.acmd = acmd_detect(dr.q, d.mlse_memory, known_prefix=frame.training, M=M,
                                   use_training=d.noise_from_training, traceback_depth=d.traceback_depth)
            out.bers["acmd"] = ber(out.acmd.decisions, frame, skip=T, **fec)
    except PipelineError as err:
        out.error = err
    return out


def _record(out: PipelineOutput, runtime_s: float | None = None, extra: dict | None = None) -> dict:
    sc = out.scenario
    rec = {
        "schema": SCHEMA_VERSION,
        "scenario": sc.name,
        "scenario_hash": scenario_hash(sc),
        "config_digest": config_digest(sc),
        "seed": sc.seed,
        "length_km": sc.fiber.length_km,
        "rop_dbm": sc.noise.rop_dbm,
        "osnr_db": sc.noise.effective_osnr_db,
        "mlse_memory": sc.dsp.mlse_memory,
        "pf_taps": sc.dsp.pf_taps,
        "status": "ok" if out.error is None else "error",
        "ber": {k: v.as_dict() for k, v in out.bers.items()},
        "null_count": None if out.nulls is None else out.nulls.count,
        "sync_peak": out.sync_peak,
    }
    if out.acmd is not None:
        rec["post_filter"] = [float(x) for x in out.acmd.post_filter.w]
    if out.error is not None:
        rec["error"] = {"stage": out.error.stage, "message": str(out.error)}
    if extra:
        rec.update(extra)
    rec["config"] = dump_config(sc)
    if runtime_s is not None:
        rec["runtime_s"] = round(runtime_s, 3)
    return rec


def run_scenario(sc: LinkScenario, timing: bool = False, nulls: bool = True) -> dict:
    """One end-to-end run as a JSON-ready record.

    Wall-clock runtime enters the record only with ``timing=True`` so that
    identical seeds give byte-identical records by default.
    """
    t0 = time.perf_counter()
    out = run_pipeline(sc, nulls=nulls)
    return _record(out, time.perf_counter() - t0 if timing else None)


def record_line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


# --------------------------------------------------------------------------
# sweeps

_SWEEP_VARIABLES = ("rop_dbm", "mlse_memory", "pf_taps")


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple
    trials: int = 1

    def __post_init__(self):
        if self.variable not in _SWEEP_VARIABLES:
            raise ParameterError(f"sweep variable must be one of {_SWEEP_VARIABLES}")
        if len(self.values) == 0:
            raise ParameterError("sweep needs at least one value")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        object.__setattr__(self, "values", tuple(self.values))

    @classmethod
    def from_config(cls, text: str) -> "SweepSpec":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        if "sweep" not in cp:
            raise ParameterError("config has no [sweep] section")
        s = cp["sweep"]
        vals = ast.literal_eval(s["values"])
        vals = vals if isinstance(vals, tuple) else (vals,)
        return cls(s["variable"].strip(), vals, int(s.get("trials", "1")))


def _point_scenario(base: LinkScenario, sweep: SweepSpec, point: int, trial: int) -> LinkScenario:
    v = sweep.values[point]
    if sweep.variable == "rop_dbm":
        sc = replace(base, noise=replace(base.noise, rop_dbm=float(v), osnr_db=None))
    elif sweep.variable == "mlse_memory":
        sc = replace(base, dsp=replace(base.dsp, mlse_memory=int(v)))
    else:
        if int(v) < 1:
            raise ParameterError("pf_taps must be >= 1")
        sc = replace(base, dsp=replace(base.dsp, mlse_memory=int(v) - 1))
    return sc.with_seed(derive_seed(base.seed, point, trial))


def _sweep_task(args):
    base, sweep, point, trial, timing = args
    meta = {"sweep": {"variable": sweep.variable, "value": sweep.values[point], "point": point,
                      "trial": trial, "master_seed": base.seed}}
    t0 = time.perf_counter()
    try:
        sc = _point_scenario(base, sweep, point, trial)
    except ParameterError as exc:
        return {"schema": SCHEMA_VERSION, "status": "error", **meta,
                "error": {"stage": "config", "message": str(exc)}}
    out = run_pipeline(sc, nulls=False)
    return _record(out, time.perf_counter() - t0 if timing else None, meta)


def run_sweep(base: LinkScenario, sweep: SweepSpec, parallelism: int = 1, timing: bool = False):
    """Yield one record per (value, trial) in point-major order.

    Each point's seed is derived from the master seed, the point index and
    the trial index, so records do not depend on the execution order or on
    ``parallelism``.  A failing point yields an error record; the others
    are unaffected.
    """
    tasks = [(base, sweep, p, t, timing) for p in range(len(sweep.values)) for t in range(sweep.trials)]
    if parallelism <= 1:
        for task in tasks:
            yield _sweep_task(task)
        return
    with ProcessPoolExecutor(max_workers=int(parallelism)) as pool:
        yield from pool.map(_sweep_task, tasks)
