import csv
import json
from pathlib import Path

import numpy as np
import pytest

from nnfvi.cli import (
    EXIT_DOMAIN,
    EXIT_OK,
    EXIT_USAGE,
    main,
    make_bench_instance,
)
from nnfvi.mcip import synthetic_instance


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# config_sha256=")
    reader = csv.reader(lines[1:])
    rows = list(reader)
    return rows[0], rows[1:]


def tiny_fvi_payload(seed=3, engine="brute"):
    return {
        "seed": seed,
        "engine": engine,
        "instance": {"synthetic": {"seed": 42, "horizon": 3}},
        "fvi": {"state_samples": 30, "transition_samples": 5, "neurons": 5,
                "restarts": 1, "max_epochs": 60},
        "mcd": {"max_iterations": 40, "gap_tolerance": 0.0},
    }


class TestFviRun:
    def test_output_shape(self, tmp_path):
        cfg = write_config(tmp_path, "cfg.json", tiny_fvi_payload())
        out = tmp_path / "out"
        assert main(["fvi-run", "--config", cfg, "--out", str(out)]) == EXIT_OK
        header, rows = read_csv(out / "fvi_results.csv")
        assert header == ["record", "period", "value_currency_or_loss"]
        net_rows = [r for r in rows if r[0] == "net"]
        assert [r[1] for r in net_rows] == ["2", "3"]  # horizon 3: two nets
        assert rows[-1][0] == "value_estimate"
        assert (out / "fitted_nets.json").exists()
        assert (out / "fvi_timings.csv").exists()

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, "cfg.json", tiny_fvi_payload())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["fvi-run", "--config", cfg, "--out", str(out1)])
        main(["fvi-run", "--config", cfg, "--out", str(out2)])
        assert (out1 / "fvi_results.csv").read_bytes() == \
            (out2 / "fvi_results.csv").read_bytes()

    def test_engines_agree_on_tiny_instance(self, tmp_path):
        vals = {}
        for engine in ("brute", "mcd"):
            cfg = write_config(tmp_path, f"cfg_{engine}.json",
                               tiny_fvi_payload(engine=engine))
            out = tmp_path / engine
            assert main(["fvi-run", "--config", cfg, "--out", str(out)]) == EXIT_OK
            _, rows = read_csv(out / "fvi_results.csv")
            vals[engine] = float(rows[-1][2])
        assert vals["mcd"] == pytest.approx(vals["brute"], abs=1e-6)

    def test_seed_override_changes_hash_content(self, tmp_path):
        cfg = write_config(tmp_path, "cfg.json", tiny_fvi_payload())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["fvi-run", "--config", cfg, "--out", str(out1)])
        main(["fvi-run", "--config", cfg, "--out", str(out2), "--seed", "99"])
        head1 = (out1 / "fvi_results.csv").read_text().splitlines()[0]
        head2 = (out2 / "fvi_results.csv").read_text().splitlines()[0]
        assert head1 != head2


class TestMcdBench:
    def test_two_facility_suite_mcd_exact(self, tmp_path):
        cfg = write_config(tmp_path, "bench.json", {
            "seed": 11,
            "suite": {"instances": 3, "facilities": [2], "neurons": 5,
                      "transition_samples": 3, "capacity_levels": 3},
            "engines": ["brute", "lshaped", "mcd"],
            "mcd": {"max_iterations": 100, "gap_tolerance": 0.0},
        })
        out = tmp_path / "out"
        assert main(["mcd-bench", "--config", cfg, "--out", str(out)]) == EXIT_OK
        header, rows = read_csv(out / "mcd_bench.csv")
        assert header[0] == "instance"
        mcd_rows = [r for r in rows if r[2] == "mcd"]
        assert len(mcd_rows) == 3
        for r in mcd_rows:
            assert abs(float(r[7])) <= 1e-6  # relative gap vs brute force
        # stop criterion renders in the benchmark table style
        assert all(r[3] == "0%/100 steps" for r in mcd_rows)
        trace_header, trace_rows = read_csv(out / "mcd_bench_traces.csv")
        assert trace_header[2] == "iteration"
        assert trace_rows

    def test_stop_criterion_default_label(self, tmp_path):
        cfg = write_config(tmp_path, "bench.json", {
            "seed": 1,
            "suite": {"instances": 1, "facilities": [2], "neurons": 4,
                      "transition_samples": 2, "capacity_levels": 1},
            "engines": ["brute", "mcd"],
        })
        out = tmp_path / "out"
        main(["mcd-bench", "--config", cfg, "--out", str(out)])
        _, rows = read_csv(out / "mcd_bench.csv")
        labels = {r[3] for r in rows if r[2] == "mcd"}
        assert labels == {"0.35%/100 steps"}

    def test_empty_suite_header_only(self, tmp_path):
        cfg = write_config(tmp_path, "bench.json", {
            "seed": 1, "suite": {"instances": 0, "facilities": []},
        })
        out = tmp_path / "out"
        assert main(["mcd-bench", "--config", cfg, "--out", str(out)]) == EXIT_OK
        header, rows = read_csv(out / "mcd_bench.csv")
        assert rows == []
        assert header[0] == "instance"


class TestCaseStudy:
    def _payload(self, gammas, ratios):
        return {
            "seed": 7,
            "instance": {"synthetic": {"seed": 13, "horizon": 3}},
            "gammas": gammas,
            "ratios": ratios,
            "fvi": {"state_samples": 25, "transition_samples": 4,
                    "neurons": 4, "restarts": 1, "max_epochs": 50},
            "n_paths": 40,
            "n_scenarios": 5,
        }

    def test_single_cell_single_row(self, tmp_path):
        cfg = write_config(tmp_path, "cs.json", self._payload([0.9], [0.5]))
        out = tmp_path / "out"
        assert main(["case-study", "--config", cfg, "--out", str(out)]) == EXIT_OK
        header, rows = read_csv(out / "case_study.csv")
        assert len(rows) == 1
        assert header[0] == "gamma"
        assert header[-1] == "improvement_pct"

    def test_grid_row_count(self, tmp_path):
        cfg = write_config(tmp_path, "cs.json",
                           self._payload([0.8, 0.9], [0.0, 0.5, 0.9]))
        out = tmp_path / "out"
        main(["case-study", "--config", cfg, "--out", str(out)])
        _, rows = read_csv(out / "case_study.csv")
        assert len(rows) == 6

    def test_rerun_identical_bytes(self, tmp_path):
        cfg = write_config(tmp_path, "cs.json", self._payload([0.9], [0.25]))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["case-study", "--config", cfg, "--out", str(out1)])
        main(["case-study", "--config", cfg, "--out", str(out2)])
        assert (out1 / "case_study.csv").read_bytes() == \
            (out2 / "case_study.csv").read_bytes()

    def test_missing_grid_is_usage_error(self, tmp_path):
        payload = self._payload([], [0.5])
        cfg = write_config(tmp_path, "cs.json", payload)
        out = tmp_path / "out"
        assert main(["case-study", "--config", cfg, "--out", str(out)]) == EXIT_USAGE


class TestDpOracle:
    def test_single_period_table(self, tmp_path):
        cfg = write_config(tmp_path, "dp.json", {
            "instance": {"synthetic": {"seed": 21, "horizon": 1}},
        })
        out = tmp_path / "out"
        assert main(["dp-oracle", "--config", cfg, "--out", str(out)]) == EXIT_OK
        header, rows = read_csv(out / "dp_values.csv")
        assert header[0] == "period"
        inst = synthetic_instance(seed=21, horizon=1)
        n_states = (inst.capacity_max + 1).prod() * inst.demand.size
        assert len(rows) == n_states

    def test_gap_against_fitted_run(self, tmp_path):
        payload = tiny_fvi_payload(seed=5)
        payload["fvi"] = {"state_samples": 150, "transition_samples": 20,
                          "neurons": 16, "restarts": 3, "max_epochs": 150}
        cfg = write_config(tmp_path, "fvi.json", payload)
        out = tmp_path / "fvi"
        assert main(["fvi-run", "--config", cfg, "--out", str(out)]) == EXIT_OK
        dp_cfg = write_config(tmp_path, "dp.json", {
            "instance": {"synthetic": {"seed": 42, "horizon": 3}},
            "fitted_path": str(out / "fitted_nets.json"),
        })
        dp_out = tmp_path / "dp"
        assert main(["dp-oracle", "--config", dp_cfg, "--out", str(dp_out)]) == EXIT_OK
        _, rows = read_csv(dp_out / "dp_summary.csv")
        records = {r[0]: float(r[1]) for r in rows}
        assert records["relative_gap_pct"] <= 5.0

    def test_oversized_instance_refused_with_size(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "dp.json", {
            "instance": {"synthetic": {
                "seed": 1, "facilities": 6, "capacity_max": 9,
                "demand_points": 3,
            }},
        })
        out = tmp_path / "out"
        code = main(["dp-oracle", "--config", cfg, "--out", str(out)])
        assert code == EXIT_DOMAIN
        err = json.loads(capsys.readouterr().err)
        assert "3000000" in err["message"]
        assert "O(|states|^2" in err["message"]


class TestErrors:
    def test_missing_config_is_usage(self, tmp_path, capsys):
        code = main(["fvi-run", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path)])
        assert code == EXIT_USAGE
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "usage"

    def test_missing_seed_is_usage(self, tmp_path):
        cfg = write_config(tmp_path, "cfg.json", {
            "instance": {"synthetic": {"seed": 1}}})
        assert main(["fvi-run", "--config", cfg,
                     "--out", str(tmp_path / "o")]) == EXIT_USAGE

    def test_bad_flag_is_usage(self, tmp_path):
        assert main(["fvi-run", "--nonsense"]) == EXIT_USAGE


class TestBenchInstanceFactory:
    def test_deterministic(self):
        a_ctx, a_reward = make_bench_instance(5, 3)
        b_ctx, b_reward = make_bench_instance(5, 3)
        np.testing.assert_array_equal(a_ctx.gamma1, b_ctx.gamma1)
        assert a_reward.constant == b_reward.constant

    def test_dimensions(self):
        ctx, reward = make_bench_instance(2, 4, neurons=6,
                                          transition_samples=3,
                                          capacity_levels=2)
        assert ctx.gamma1.shape == (3, 6, 4)
        np.testing.assert_array_equal(ctx.spec.action_box.upper_bounds,
                                      [2, 2, 2, 2])
