import json

import pytest

from acmd import runner
from acmd.cli import EXIT_OK, EXIT_STAGE, EXIT_USAGE, main

FAST = ["--override", "frame.total_symbols=20000", "--override", "dsp.pnle_epochs=30",
        "--override", "dsp.pnle_taps=61,21,11", "--override", "dsp.dfe_taps=31,11",
        "--override", "dsp.mlse_memory=3"]


def test_dump_config_parses(capsys):
    assert main(["dump-config", "75km"]) == EXIT_OK
    text = capsys.readouterr().out
    assert runner.scenario_from_config(text) == runner.preset("75km")


def test_dump_config_override_and_seed(capsys):
    assert main(["dump-config", "obtb", "--seed", "5", "--override", "noise.rop_dbm=-3"]) == EXIT_OK
    sc = runner.scenario_from_config(capsys.readouterr().out)
    assert (sc.seed, sc.noise.rop_dbm) == (5, -3.0)


def test_run_writes_record_taps_and_plots(tmp_path, capsys):
    rc = main(["run", "50km", *FAST, "--out", str(tmp_path), "--json", "--save-taps", "--plots"])
    assert rc == EXIT_OK
    rec = json.loads(capsys.readouterr().out)
    assert rec["status"] == "ok"
    assert json.loads((tmp_path / "records.jsonl").read_text()) == rec
    assert (tmp_path / "taps.npz").is_file()
    for kind in ("psd", "eye", "pdf", "noise-psd", "noise-psd-pf"):
        assert (tmp_path / f"{kind}-50km.png").is_file(), kind
        assert (tmp_path / f"{kind}-50km.csv").is_file(), kind


def test_run_is_reproducible(tmp_path, capsys):
    main(["run", "50km", *FAST, "--json"])
    a = capsys.readouterr().out
    main(["run", "50km", *FAST, "--json"])
    assert capsys.readouterr().out == a


def test_stage_failure_exit(capsys):
    rc = main(["run", "50km", *FAST, "--override", "frame.training_len=500"])
    assert rc == EXIT_STAGE
    assert "stage pnle failed" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["run", "no-such-preset"],
    ["run", "50km", "--override", "fiber.bogus=1"],
    ["sweep", "50km"],
])
def test_config_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "error [config]" in capsys.readouterr().err


def test_sweep_config_file_and_emit_plots(tmp_path, capsys):
    cfg = tmp_path / "s.ini"
    cfg.write_text(runner.dump_config(runner.apply_overrides(runner.preset("50km"), [x for x in FAST if x != "--override"]))
                   + "\n[sweep]\nvariable = rop_dbm\nvalues = -14, -8\ntrials = 1\n")
    out = tmp_path / "o"
    assert main(["sweep", str(cfg), "--out", str(out), "--plots"]) == EXIT_OK
    lines = (out / "sweep.jsonl").read_text().splitlines()
    assert [json.loads(x)["sweep"]["value"] for x in lines] == [-14, -8]
    assert (out / "ber-curve-rop_dbm.png").is_file()
    csv = (out / "ber-curve-rop_dbm.csv").read_text().splitlines()
    assert len(csv) == 3
    capsys.readouterr()
    plots = tmp_path / "p"
    assert main(["emit-plots", str(out / "sweep.jsonl"), "--out", str(plots)]) == EXIT_OK
    assert (plots / "ber-curve-rop_dbm.csv").read_text().splitlines() == csv
    assert (plots / "eye-50km.png").is_file()


def test_sweep_flags(capsys):
    rc = main(["sweep", "50km", *FAST, "--variable", "mlse_memory", "--values", "0,2", "--parallel", "2"])
    assert rc == EXIT_OK
    assert capsys.readouterr().out.count("mlse_memory=") == 2


def test_null_check(tmp_path, capsys):
    assert main(["null-check", "100km", "--out", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "14 nulls" in text and "theory 14" in text
    assert (tmp_path / "psd-100km.csv").is_file()
