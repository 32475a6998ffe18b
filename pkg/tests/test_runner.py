import json
from pathlib import Path

import numpy as np
import pytest

from twincal.diagnostics import credible_interval
from twincal.runner import (
    ConfigError,
    _fmt,
    _parse_extra,
    build_config,
    compare,
    display_name,
    main,
    parse_config_file,
    read_csv,
    split_name,
    write_csv,
)


class TestCsvHelpers:
    def test_float_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        values = list(rng.standard_normal(50)) + [1e-300, 1e300, 0.1, 2.0]
        path = tmp_path / "t.csv"
        write_csv(path, ["v"], [(float(v),) for v in values])
        _, rows = read_csv(path)
        back = [float(r[0]) for r in rows]
        assert back == [float(v) for v in values]

    def test_fmt_uses_shortest_repr(self):
        assert _fmt(0.1) == "0.1"
        assert _fmt(2.0) == "2.0"
        assert _fmt(3) == "3"
        assert _fmt("x") == "x"

    def test_header_preserved(self, tmp_path):
        path = tmp_path / "h.csv"
        write_csv(path, ["a", "b"], [(1, 2)])
        header, rows = read_csv(path)
        assert header == ["a", "b"] and rows == [["1", "2"]]


class TestNames:
    def test_split_name(self):
        assert split_name("R[3]") == ("R", 3)
        assert split_name("mu_R") == ("mu_R", None)
        assert split_name("alpha_d[12]") == ("alpha_d", 12)

    def test_display_name_toy(self):
        assert display_name("u[2]", "toy") == ("u", 2)
        assert display_name("sigma_u[2]", "toy") == ("sigma", 2)
        assert display_name("m_alpha_d", "toy") == ("m_alpha", None)

    def test_display_name_wk2(self):
        assert display_name("alpha_th[1]", "wk2") == ("alpha_WK2", 1)
        assert display_name("sigma_f[9]", "wk2") == ("sigma_Q", 9)
        assert display_name("mu_R", "wk2") == ("mu_R", None)


class TestConfig:
    def test_parse_config_file(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("experiment = cardio  # inline comment\n"
                     "\n# full comment\nchains=2\n")
        assert parse_config_file(p) == {"experiment": "cardio", "chains": "2"}

    def test_parse_config_rejects_bad_line(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("just a line\n")
        with pytest.raises(ConfigError):
            parse_config_file(p)

    def _args(self, **kw):
        class A:
            config = None
            experiment = None
            variants = None
            chains = None
            warmup = None
            samples = None
            seed = None
            out_dir = None
            workers = None

        a = A()
        for k, v in kw.items():
            setattr(a, k, v)
        return a

    def test_defaults_and_overrides(self):
        cfg = build_config(self._args(chains=2), {"toy_m": "3"})
        assert cfg["chains"] == 2
        assert cfg["toy_m"] == 3
        assert cfg["variants"] == ["no_delta", "indep_delta",
                                   "common_delta", "shared_delta"]

    def test_variant_list_parsing(self):
        cfg = build_config(self._args(variants="no_delta,indep_delta"), {})
        assert cfg["variants"] == ["no_delta", "indep_delta"]

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError):
            build_config(self._args(variants="bogus"), {})

    def test_unknown_experiment_rejected(self):
        with pytest.raises(ConfigError):
            build_config(self._args(experiment="weather"), {})

    def test_parse_extra(self):
        assert _parse_extra(["--toy_m", "5", "--pred_draws", "10"]) == \
            {"toy_m": "5", "pred_draws": "10"}
        with pytest.raises(ConfigError):
            _parse_extra(["loose"])
        with pytest.raises(ConfigError):
            _parse_extra(["--dangling"])


def write_summary(path, rows):
    header = ["individual", "parameter", "mean", "sd", "q2.5", "q97.5",
              "truth", "rhat", "ess", "covered"]
    write_csv(path, header, rows)


def summary_row(ind, param, lo, hi, truth):
    covered = int(lo <= truth <= hi)
    return (ind, param, (lo + hi) / 2, 1.0, lo, hi, truth, 1.0, 100.0,
            covered)


class TestCompare:
    def test_coverage_and_width_ratio(self, tmp_path):
        a = tmp_path / "summary_indep_delta.csv"
        b = tmp_path / "summary_shared_delta.csv"
        write_summary(a, [summary_row(1, "u", 0.0, 2.0, 1.0),
                          summary_row(2, "u", 0.0, 2.0, 5.0)])
        write_summary(b, [summary_row(1, "u", 0.5, 1.5, 1.0),
                          summary_row(2, "u", 4.0, 6.0, 5.0)])
        table = compare([a, b])
        by_variant = {r["variant"]: r for r in table}
        assert by_variant["indep_delta"]["coverage"] == 1
        assert by_variant["shared_delta"]["coverage"] == 2
        assert by_variant["indep_delta"]["mean_ci_width"] == 2.0
        assert by_variant["shared_delta"]["width_ratio_vs_indep_delta"] == \
            pytest.approx(0.75)

    def test_mismatched_truth_rejected(self, tmp_path):
        a = tmp_path / "summary_no_delta.csv"
        b = tmp_path / "summary_indep_delta.csv"
        write_summary(a, [summary_row(1, "u", 0.0, 2.0, 1.0)])
        write_summary(b, [summary_row(1, "u", 0.0, 2.0, 1.5)])
        with pytest.raises(ConfigError):
            compare([a, b])

    def test_needs_two_files(self, tmp_path):
        a = tmp_path / "summary_no_delta.csv"
        write_summary(a, [summary_row(1, "u", 0.0, 2.0, 1.0)])
        with pytest.raises(ConfigError):
            compare([a])

    def test_writes_output_csv(self, tmp_path):
        a = tmp_path / "summary_indep_delta.csv"
        b = tmp_path / "summary_common_delta.csv"
        write_summary(a, [summary_row(1, "u", 0.0, 2.0, 1.0)])
        write_summary(b, [summary_row(1, "u", 0.5, 1.5, 1.0)])
        out = tmp_path / "cmp.csv"
        compare([a, b], out)
        header, rows = read_csv(out)
        assert header[0] == "parameter" and len(rows) == 2


FAST_ARGS = ["--chains", "2", "--warmup", "150", "--samples", "100",
             "--seed", "3", "--toy_m", "2", "--toy_n", "8",
             "--pred_points", "6", "--pred_draws", "20"]


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["run", "--experiment", "toy",
                 "--variants", "no_delta,indep_delta",
                 "--out-dir", str(out), *FAST_ARGS])
    assert code == 0
    return out


class TestRunEndToEnd:
    def test_expected_files(self, toy_run):
        for name in ("truth.csv", "samples_no_delta.csv",
                     "summary_no_delta.csv", "predictions_no_delta.csv",
                     "diagnostics_no_delta.json", "samples_indep_delta.csv",
                     "summary_indep_delta.csv",
                     "predictions_indep_delta.csv"):
            assert (toy_run / name).exists(), name

    def test_truth_contents(self, toy_run):
        header, rows = read_csv(toy_run / "truth.csv")
        assert header == ["individual", "parameter", "value"]
        u_rows = [r for r in rows if r[1] == "u"]
        assert [float(r[2]) for r in u_rows] == [0.8, 0.9]

    def test_samples_layout(self, toy_run):
        header, rows = read_csv(toy_run / "samples_indep_delta.csv")
        assert header[:2] == ["chain", "draw"]
        # 2 individuals x 4 parameters
        assert len(header) == 2 + 8
        assert len(rows) == 2 * 100
        assert {r[0] for r in rows} == {"0", "1"}

    def test_summary_layout_and_coverage_flags(self, toy_run):
        header, rows = read_csv(toy_run / "summary_indep_delta.csv")
        assert header == ["individual", "parameter", "mean", "sd", "q2.5",
                          "q97.5", "truth", "rhat", "ess", "covered"]
        u_rows = [r for r in rows if r[1] == "u"]
        assert len(u_rows) == 2
        for r in u_rows:
            assert r[6] != "" and r[9] in ("0", "1")
            covered = float(r[4]) <= float(r[6]) <= float(r[5])
            assert int(r[9]) == int(covered)

    def test_summary_quantiles_match_samples(self, toy_run):
        s_header, s_rows = read_csv(toy_run / "samples_indep_delta.csv")
        col = s_header.index("u[1]")
        draws = np.array([float(r[col]) for r in s_rows])
        lo, hi = credible_interval(draws, 0.95)
        _, rows = read_csv(toy_run / "summary_indep_delta.csv")
        row = next(r for r in rows if r[1] == "u" and r[0] == "1")
        assert float(row[4]) == pytest.approx(lo, abs=1e-9)
        assert float(row[5]) == pytest.approx(hi, abs=1e-9)

    def test_predictions_layout(self, toy_run):
        header, rows = read_csv(toy_run / "predictions_no_delta.csv")
        assert header == ["individual", "block", "x", "mean", "q2.5",
                          "q97.5", "region"]
        assert len(rows) == 2 * 6  # individuals x grid points
        regions = {r[6] for r in rows}
        assert regions == {"interp", "extrap"}
        for r in rows:
            assert float(r[4]) <= float(r[5])

    def test_diagnostics_json(self, toy_run):
        diag = json.loads((toy_run / "diagnostics_no_delta.json").read_text())
        assert diag["variant"] == "no_delta"
        assert diag["runtime_s"] > 0
        assert len(diag["fits"]) == 2

    def test_rerun_is_byte_identical(self, toy_run, tmp_path):
        out2 = tmp_path / "rerun"
        code = main(["run", "--experiment", "toy",
                     "--variants", "no_delta,indep_delta",
                     "--out-dir", str(out2), *FAST_ARGS])
        assert code == 0
        for name in ("truth.csv", "samples_indep_delta.csv",
                     "summary_indep_delta.csv",
                     "predictions_indep_delta.csv"):
            assert (toy_run / name).read_bytes() == \
                (out2 / name).read_bytes(), name

    def test_compare_cli_on_run_outputs(self, toy_run, capsys):
        out = toy_run / "cmp.csv"
        code = main(["compare",
                     str(toy_run / "summary_no_delta.csv"),
                     str(toy_run / "summary_indep_delta.csv"),
                     "--out", str(out)])
        assert code == 0
        assert out.exists()
        printed = capsys.readouterr().out
        assert "no_delta" in printed


class TestCliErrors:
    def test_bad_variant_exits_2(self, capsys):
        assert main(["run", "--variants", "bogus"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_override_exits_2(self, capsys):
        assert main(["run", "--chains", "2", "--warmup", "50",
                     "--samples", "50", "--toy_m", "nope"]) == 2

    def test_compare_with_one_file_exits_2(self, tmp_path, capsys):
        a = tmp_path / "summary_no_delta.csv"
        write_summary(a, [summary_row(1, "u", 0.0, 2.0, 1.0)])
        assert main(["compare", str(a)]) == 2
