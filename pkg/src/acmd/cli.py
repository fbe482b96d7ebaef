"""Command-line entry point: ``acmd <verb> ...``.

Verbs
-----
run <preset|config>         one frame, one JSONL record
sweep <preset|config>       ROP / memory / PF-tap sweep
dump-config [preset]        print every setting as INI text
null-check <preset>         count CD-induced nulls against theory
emit-plots <records.jsonl>  BER curves, plus PSD/eye/PDF of the first record

Exit status 0 on success, 1 when a pipeline stage fails, 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import runner
from .metrics import eye_and_pdf, welch_psd
from .mlse import estimate_noise, post_filter
from .signal import ParameterError

EXIT_OK, EXIT_STAGE, EXIT_USAGE = 0, 1, 2


def _err(msg: str):
    print(f"acmd: {msg}", file=sys.stderr)


def _write_records(records, out: Path | None, name: str):
    lines = [runner.record_line(r) for r in records]
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text("".join(line + "\n" for line in lines))
    return lines


def _summary(rec: dict) -> str:
    bers = rec.get("ber", {})
    parts = [f"{k}={bers[k]['ber']:.3e}" for k in ("pnle", "pnle_dfe", "acmd") if k in bers]
    head = rec.get("scenario", "?")
    if "sweep" in rec:
        head += f" {rec['sweep']['variable']}={rec['sweep']['value']} trial={rec['sweep']['trial']}"
    if rec.get("null_count") is not None:
        parts.append(f"nulls={rec['null_count']}")
    if rec.get("status") != "ok":
        parts.append(f"FAILED {rec['error']['message']}")
    return f"{head}: " + " ".join(parts)


def cmd_run(a) -> int:
    sc = runner.load_scenario(a.scenario, a.override, a.seed)
    t0 = time.perf_counter()
    out = runner.run_pipeline(sc)
    rec = runner._record(out, time.perf_counter() - t0 if a.timing else None)
    _write_records([rec], a.out, "records.jsonl")
    print(runner.record_line(rec) if a.json else _summary(rec))
    if a.out is not None and a.save_taps and out.acmd is not None:
        from .tapio import save_taps
        save_taps(a.out / "taps.npz", out.pnle_taps, out.dfe_taps, out.acmd.post_filter, out.acmd.autocorr)
    if a.out is not None and a.plots:
        _signal_plots(out, a.out)
    if out.error is not None:
        _err(f"stage {out.error.stage} failed: {out.error}")
        return EXIT_STAGE
    return EXIT_OK


def cmd_sweep(a) -> int:
    sc = runner.load_scenario(a.scenario, a.override, a.seed)
    if a.variable:
        values = tuple(float(v) if a.variable == "rop_dbm" else int(v) for v in a.values.split(","))
        spec = runner.SweepSpec(a.variable, values, a.trials)
    else:
        p = Path(a.scenario)
        if not p.is_file():
            raise ParameterError("give --variable/--values or a config file with a [sweep] section")
        spec = runner.SweepSpec.from_config(p.read_text())
    records = []
    for rec in runner.run_sweep(sc, spec, a.parallel, timing=a.timing):
        records.append(rec)
        print(_summary(rec), flush=True)
    _write_records(records, a.out, "sweep.jsonl")
    if a.out is not None and a.plots:
        from .plotting import plot_ber_curve
        plot_ber_curve(records, spec.variable, a.out / f"ber-curve-{spec.variable}", sc.name)
    failed = [r for r in records if r.get("status") != "ok"]
    for r in failed:
        _err(f"point {r['sweep']['point']} trial {r['sweep']['trial']}: stage {r['error']['stage']} failed")
    return EXIT_STAGE if failed else EXIT_OK


def cmd_dump_config(a) -> int:
    sc = runner.preset(a.preset) if a.preset else runner.LinkScenario()
    sc = runner.apply_overrides(sc, a.override)
    if a.seed is not None:
        sc = sc.with_seed(a.seed)
    sys.stdout.write(runner.dump_config(sc))
    return EXIT_OK


def cmd_null_check(a) -> int:
    sc = runner.load_scenario(a.scenario, a.override, a.seed)
    rep, theory = runner.null_check(sc)
    print(f"{sc.name}: {rep.count} nulls below {sc.tx.baud_rate_hz / 2e9:g} GHz (theory {theory.size})")
    for k, f in enumerate(theory):
        meas = rep.frequencies_hz[np.argmin(np.abs(rep.frequencies_hz - f))] if rep.count else np.nan
        print(f"  k={k:2d}  theory {f / 1e9:7.3f} GHz  measured {meas / 1e9:7.3f} GHz")
    if a.out is not None:
        from .plotting import plot_psd
        frame, rrc, tx = runner._transmit(sc, runner.SeededRng(sc.seed))
        det = runner._detect(sc, tx, None, 0)
        plot_psd(welch_psd(det), a.out / f"psd-{sc.name}", f"{sc.name} noise-free", theory)
    return EXIT_OK if rep.count == theory.size else EXIT_STAGE


def _signal_plots(out: runner.PipelineOutput, dest: Path):
    from .plotting import plot_eye, plot_pdf, plot_psd
    name = out.scenario.name
    if out.detected is not None:
        plot_psd(welch_psd(out.detected), dest / f"psd-{name}", f"{name} received")
    if out.detected is not None and out.symbols is not None:
        x = runner.to_simulation_rate(out.detected, out.scenario.tx.baud_rate_hz, out.scenario.tx.sps).samples
        x = (x - x.mean()) / np.std(x)
        eye = eye_and_pdf(x, sps=out.scenario.tx.sps)
        plot_eye(eye, dest / f"eye-{name}", f"{name} received")
        plot_pdf(eye_and_pdf(out.symbols), dest / f"pdf-{name}", f"{name} received")
    if out.acmd is not None and out.dfe is not None:
        fs = out.scenario.tx.baud_rate_hz
        before = runner.SampledSignal(estimate_noise(out.dfe), fs)
        after = runner.SampledSignal(out.acmd.v - _pf_reference(out), fs)
        plot_psd(welch_psd(before, segment=1024), dest / f"noise-psd-{name}", f"{name} noise before PF")
        plot_psd(welch_psd(after, segment=1024), dest / f"noise-psd-pf-{name}",
                 f"{name} noise after {out.acmd.post_filter.w.size}-tap PF")


def _pf_reference(out: runner.PipelineOutput) -> np.ndarray:
    # noiseless post-filter output for the detected sequence
    return post_filter(out.acmd.decisions, out.acmd.post_filter)


def cmd_emit_plots(a) -> int:
    from .plotting import plot_ber_curve
    path = Path(a.records)
    records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    if not records:
        raise ParameterError(f"{path} holds no records")
    dest = a.out or path.parent
    variables = sorted({r["sweep"]["variable"] for r in records if "sweep" in r})
    for v in variables:
        png, csv = plot_ber_curve(records, v, dest / f"ber-curve-{v}", records[0].get("scenario", ""))
        print(f"wrote {png} and {csv}")
    first = next((r for r in records if r.get("status") == "ok" and "config" in r), None)
    if first is not None:
        sc = runner.scenario_from_config(first["config"], base=runner.LinkScenario())
        _signal_plots(runner.run_pipeline(sc, nulls=False), dest)
        print(f"wrote PSD/eye/PDF figures for {sc.name} to {dest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="acmd", description="IM/DD OOK link simulator with the ACMD receiver")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("scenario", help=f"preset ({', '.join(runner.PRESETS)}) or config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
        p.add_argument("--out", type=Path, default=None, metavar="DIR")

    p = sub.add_parser("run", help="simulate and equalize one frame")
    common(p)
    p.add_argument("--plots", action="store_true", help="write PSD/eye/PDF figures and CSVs to --out")
    p.add_argument("--save-taps", action="store_true", help="write trained taps to --out/taps.npz")
    p.add_argument("--timing", action="store_true", help="add wall-clock runtime to the record")
    p.add_argument("--json", action="store_true", help="print the full record")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep ROP, MLSE memory or PF taps")
    common(p)
    p.add_argument("--variable", choices=["rop_dbm", "mlse_memory", "pf_taps"])
    p.add_argument("--values", default="", help="comma-separated values")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--parallel", type=int, default=1, metavar="N")
    p.add_argument("--plots", action="store_true")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-config", help="print a full configuration")
    p.add_argument("preset", nargs="?", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--override", action="append", default=[])
    p.set_defaults(func=cmd_dump_config)

    p = sub.add_parser("null-check", help="count spectral nulls of the noise-free link")
    common(p)
    p.set_defaults(func=cmd_null_check)

    p = sub.add_parser("emit-plots", help="figures and CSVs from a records file")
    p.add_argument("records", type=str)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_emit_plots)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    try:
        return a.func(a)
    except (ParameterError, ValueError, OSError) as exc:
        _err(f"error [config]: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
