import json

import numpy as np
import pytest

from acmd import runner
from acmd.equalizers import equalizer_frequency_response
from acmd.mlse import NoiseAutocorr, PostFilterTaps
from acmd.signal import ParameterError
from acmd.tapio import load_taps, save_taps

# a short, lightly trained link that runs in well under a second
FAST = [
    "frame.total_symbols=20000",
    "dsp.pnle_epochs=30",
    "dsp.pnle_taps=61, 21, 11",
    "dsp.dfe_taps=31, 11",
    "dsp.mlse_memory=3",
]


def _fast(name="50km", extra=()):
    return runner.apply_overrides(runner.preset(name), FAST + list(extra))


@pytest.fixture(scope="module")
def out100():
    return runner.run_pipeline(runner.preset("100km"), nulls=False)


class TestConfig:
    @pytest.mark.parametrize("name", list(runner.PRESETS))
    def test_round_trip(self, name):
        sc = runner.preset(name)
        text = runner.dump_config(sc)
        back = runner.scenario_from_config(text)
        assert runner.dump_config(back) == text
        assert back == sc

    def test_defaults_round_trip(self):
        sc = runner.LinkScenario()
        assert runner.scenario_from_config(runner.dump_config(sc)) == sc

    def test_partial_config_uses_preset(self):
        sc = runner.scenario_from_config("[scenario]\npreset = 75km\n[noise]\nrop_dbm = -10\n")
        assert sc.fiber.length_km == 75.0
        assert sc.noise.rop_dbm == -10.0
        assert isinstance(sc.noise.rop_dbm, float)

    def test_overrides(self):
        sc = runner.apply_overrides(runner.preset("100km"), ["fiber.length_km=80", "dsp.pnle_taps=11,5,3",
                                                              "mzm.v_pi=3", "dsp.traceback_depth=60"])
        assert sc.fiber.length_km == 80.0
        assert sc.dsp.pnle_taps == (11, 5, 3)
        assert sc.tx.mzm.v_pi == 3.0
        assert sc.dsp.traceback_depth == 60

    @pytest.mark.parametrize("bad", ["fiber.nope=1", "bogus.x=1", "no_equals", "nodot=3"])
    def test_bad_override(self, bad):
        with pytest.raises(ParameterError):
            runner.apply_overrides(runner.preset("obtb"), [bad])

    def test_unknown_preset(self):
        with pytest.raises(ParameterError):
            runner.load_scenario("200km")

    def test_presets(self):
        p = runner.PRESETS
        assert [p[k].fiber.length_km for k in ("obtb", "50km", "75km", "100km")] == [0, 50, 75, 100]
        assert p["obtb"].tx.launch_power_dbm == 0.0
        assert all(p[k].tx.launch_power_dbm == 7.0 for k in ("50km", "75km", "100km"))
        assert p["100km"].dsp.pnle_taps == (291, 81, 41)
        assert p["100km"].dsp.dfe_taps == (71, 61)
        assert p["100km"].dsp.pf_taps == 11
        assert p["obtb"].dsp.pf_taps == 2
        assert (p["100km"].frame.total_symbols, p["100km"].frame.training_len) == (82240, 5000)

    def test_hashes(self):
        a = runner.preset("100km")
        b = a.with_seed(9)
        assert runner.scenario_hash(a) == runner.scenario_hash(b)
        assert runner.config_digest(a) != runner.config_digest(b)
        assert len(runner.config_digest(a)) == 40


class TestPipeline:
    def test_record_schema(self):
        rec = runner.run_scenario(_fast())
        for key in ("schema", "scenario_hash", "config_digest", "seed", "ber", "config", "status", "osnr_db"):
            assert key in rec
        assert set(rec["ber"]) == {"pnle", "pnle_dfe", "acmd"}
        assert rec["status"] == "ok"
        assert rec["null_count"] == 7
        assert len(rec["post_filter"]) == 4
        assert "runtime_s" not in rec
        # the stored config reproduces the run
        sc = runner.scenario_from_config(rec["config"], runner.LinkScenario())
        assert runner.config_digest(sc) == rec["config_digest"]

    def test_deterministic(self):
        a = runner.record_line(runner.run_scenario(_fast()))
        b = runner.record_line(runner.run_scenario(_fast()))
        assert a == b
        c = runner.record_line(runner.run_scenario(_fast().with_seed(2)))
        assert c != a

    def test_timing_opt_in(self):
        assert "runtime_s" in runner.run_scenario(_fast(), timing=True, nulls=False)

    def test_stage_failure_is_labelled(self):
        # training longer than PNLE can use: 500 symbols
        sc = _fast(extra=["frame.training_len=500"])
        out = runner.run_pipeline(sc, nulls=False)
        assert out.error is not None and out.error.stage == "pnle"
        rec = runner._record(out)
        assert rec["status"] == "error"
        assert rec["error"]["stage"] == "pnle"
        assert "pnle" not in rec["ber"]

    def test_sync_failure(self):
        sc = _fast(extra=["noise.rop_dbm=none", "noise.osnr_db=-25"])
        out = runner.run_pipeline(sc, nulls=False)
        assert out.error is not None and out.error.stage == "sync"

    def test_null_check(self):
        rep, theory = runner.null_check(_fast("75km"))
        assert rep.count == theory.size == 10
        np.testing.assert_allclose(rep.frequencies_hz, theory, atol=2 * (256e9 / 4096))

    def test_dfe_gain_near_first_null(self, out100):
        # trained equalizers notch the null itself and put their gain in the
        # lobes beside it; the feedback path raises that gain
        grid = 4096
        f = np.arange(grid) / grid * 32e9
        near = np.abs(f - 6.06e9) <= 0.5e9
        Hp = np.abs(equalizer_frequency_response(out100.pnle_taps, None, grid))
        Hj = np.abs(equalizer_frequency_response(out100.pnle_taps, out100.dfe_taps, grid))
        assert Hj[near].max() > Hp[near].max()


class TestSweep:
    def test_serial_matches_parallel(self):
        spec = runner.SweepSpec("rop_dbm", (-14.0, -8.0), trials=2)
        base = _fast()
        serial = [runner.record_line(r) for r in runner.run_sweep(base, spec, 1)]
        par = [runner.record_line(r) for r in runner.run_sweep(base, spec, 2)]
        assert sorted(serial) == sorted(par)
        assert len(set(json.loads(s)["seed"] for s in serial)) == 4

    def test_bad_point_isolated(self):
        spec = runner.SweepSpec("pf_taps", (0, 2))
        recs = list(runner.run_sweep(_fast(), spec))
        assert recs[0]["status"] == "error" and recs[0]["error"]["stage"] == "config"
        assert recs[1]["status"] == "ok" and recs[1]["pf_taps"] == 2

    def test_from_config(self):
        spec = runner.SweepSpec.from_config("[sweep]\nvariable = mlse_memory\nvalues = 0, 2, 4\ntrials = 3\n")
        assert spec == runner.SweepSpec("mlse_memory", (0, 2, 4), 3)
        with pytest.raises(ParameterError):
            runner.SweepSpec("length", (1,))

    @pytest.mark.slow
    def test_rop_monotone_50km(self):
        spec = runner.SweepSpec("rop_dbm", (-20.0, -17.0, -14.0, -11.0))
        recs = list(runner.run_sweep(runner.preset("50km"), spec))
        for stage in ("pnle", "pnle_dfe", "acmd"):
            e = np.array([r["ber"][stage]["bit_errors"] for r in recs], float)
            # allow two binomial standard deviations of upward noise
            assert np.all(np.diff(e) <= 2 * np.sqrt(e[:-1] + 1)), stage


class TestTapFiles:
    def test_round_trip(self, tmp_path, out100):
        pf = PostFilterTaps([1.0, -0.3, 0.1])
        ac = NoiseAutocorr(np.array([1.0, 0.2, 0.05]))
        p = save_taps(tmp_path / "t.npz", out100.pnle_taps, out100.dfe_taps, pf, ac)
        z = load_taps(p)
        np.testing.assert_array_equal(z["pnle"].h1, out100.pnle_taps.h1)
        np.testing.assert_array_equal(z["pnle"].h3, out100.pnle_taps.h3)
        np.testing.assert_array_equal(z["dfe"].f2, out100.dfe_taps.f2)
        np.testing.assert_array_equal(z["pf"].w, pf.w)
        np.testing.assert_array_equal(z["ac"].R, ac.R)

    def test_nothing_to_save(self, tmp_path):
        with pytest.raises(ParameterError):
            save_taps(tmp_path / "x.npz")
