import json

import numpy as np
import pytest

from ngp.harness import (ConfigError, ExperimentConfig, aggregate, load_results,
                         persist_results, rank_order_curves, read_summary, run_experiment,
                         run_single, summary_csv_text, sweep_cardinality, sweep_eta,
                         sweep_sample_size)

SMALL_MLP = {"hidden_units": 16, "epochs": 5}


def cfg(**kw):
    base = {"dataset": {"kind": "ohm", "samples": 120, "features": 5}, "method": "ngp",
            "ngp": {"max_features": 2, "predictor": dict(SMALL_MLP)},
            "split": {"validation_fraction": 0.25, "test_fraction": 0.25},
            "monte_carlo_runs": 2}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


class TestConfig:
    @pytest.mark.parametrize("patch,field", [
        ({"sweep": {"axis": "bogus"}}, "sweep.axis"),
        ({"method": "rf"}, "method"),
        ({"monte_carlo_runs": 0}, "monte_carlo_runs"),
        ({"dataset": {"kind": "ohm", "samples": 0, "features": 5}}, "dataset.samples"),
        ({"sweep": {"axis": "sample_size", "values": [50, 20]}}, "sweep.values"),
        ({"sweep": {"axis": "eta", "values": [0.1]}}, "sweep.max_features"),
        ({"split": {"fractions": [0.5, 0.6, 0.1]}}, "split.fractions"),
        ({"ngp": {"predictor": {"hidden_units": 0}}}, "ngp.predictor"),
        ({"colour": 1}, "colour"),
    ])
    def test_errors_name_field(self, patch, field):
        with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
            cfg(**patch)

    def test_split_fractions(self):
        assert cfg().split_fractions() == pytest.approx((0.5625, 0.1875, 0.25))
        c = cfg(split={"fractions": [0.5, 0.25, 0.25]})
        assert c.split_fractions() == (0.5, 0.25, 0.25)


class TestRuns:
    def test_single_run_aggregate_is_identity(self):
        res = run_experiment(cfg(monte_carlo_runs=1))
        (row,), (rec,) = res.rows, res.records
        for key in ("fpsr", "fnsr", "f_mse", "p_nme_db", "trainings_performed"):
            assert row[f"{key}_mean"] == rec[key] and row[f"{key}_std"] == 0.0
        assert row["runs"] == 1

    def test_record_contents(self):
        rec = run_experiment(cfg(monte_carlo_runs=1)).records[0]
        assert rec["n_selected"] == 2 and rec["trainings_performed"] == 5 + 4 + 1
        assert all(i >= 1 for i in rec["selected"])
        assert set(rec["seeds"]) == {"generate", "split", "select"}

    def test_replay_single_run(self):
        c = cfg(monte_carlo_runs=3)
        res = run_experiment(c)
        assert run_single(c, 0, 2) == [res.records[2]]

    def test_threads_identical(self, tmp_path):
        c = cfg(monte_carlo_runs=4)
        a = persist_results(run_experiment(c, threads=1), tmp_path / "a")
        b = persist_results(run_experiment(c, threads=4), tmp_path / "b")
        for name in ("summary.csv", "raw.jsonl", "config.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_round_trip(self, tmp_path):
        out = persist_results(run_experiment(cfg()), tmp_path / "r")
        echo, records, summary = load_results(out)
        assert summary_csv_text(aggregate(records, echo["axis"])) == summary
        assert echo["code_version"] and "seed_derivation" in echo

    def test_aggregation_matches_raw(self):
        res = run_experiment(cfg(monte_carlo_runs=3))
        vals = np.array([r["f_nme_db"] for r in res.records])
        assert abs(res.rows[0]["f_nme_db_mean"] - vals.mean()) <= 1e-12
        assert abs(res.rows[0]["f_nme_db_std"] - vals.std()) <= 1e-12

    def test_summary_header(self, tmp_path):
        out = persist_results(run_experiment(cfg(monte_carlo_runs=1)), tmp_path)
        header = (out / "summary.csv").read_text().splitlines()[0].split(",")
        assert header[0] == "axis" and header[-1] == "runs"
        assert header[1:5] == ["fpsr_mean", "fpsr_std", "fnsr_mean", "fnsr_std"]

    def test_failure_names_run(self, tmp_path):
        c = ExperimentConfig.from_dict({"dataset": {"kind": "csv", "path": str(tmp_path / "x")},
                                        "monte_carlo_runs": 1, "ngp": {"max_features": 1}})
        with pytest.raises(RuntimeError, match="run 0"):
            run_experiment(c)


class TestBaselines:
    @pytest.mark.parametrize("method", ["lasso", "correlation"])
    def test_baseline_records(self, method):
        res = run_experiment(cfg(method=method))
        rec = res.records[0]
        assert "fpsr" in rec and "fnsr" in rec
        assert ("f_mse" in rec) == (method == "lasso")

    def test_csv_dataset_one_based_support(self, tmp_path):
        g = np.random.default_rng(0)
        X = g.standard_normal((80, 4))
        t = 3 * X[:, 1]
        p = tmp_path / "d.csv"
        p.write_text("a,b,c,d,t\n" + "\n".join(",".join(map(str, list(x) + [y]))
                                                for x, y in zip(X, t)))
        c = cfg(method="correlation", dataset={"kind": "csv", "path": str(p), "true_support": [2]},
                monte_carlo_runs=1, threshold=0.3)
        rec = run_experiment(c).records[0]
        assert rec["selected"] == [2] and rec["fnsr"] == 0.0


class TestSweeps:
    def test_sample_size(self):
        res = sweep_sample_size(cfg(ngp={"max_features": 2, "predictor": SMALL_MLP},
                                    split={"validation_fraction": 0.2}), [40, 80])
        assert [r["axis"] for r in res.rows] == [40, 80]
        assert all(r["phase"] in (0, 1) for r in res.rows)
        assert all(r["phase"] == int(r["fnsr_mean"] <= 0.005) for r in res.rows)

    def test_single_point(self):
        res = sweep_sample_size(cfg(), [60])
        assert len(res.rows) == 1

    def test_cardinality_prefix_consistency(self):
        a = sweep_cardinality(cfg(), 3).records
        b = sweep_cardinality(cfg(), 2).records
        short = {(r["run"], r["axis"]): r for r in b}
        for r in a:
            if r["axis"] <= 2:
                other = dict(short[(r["run"], r["axis"])])
                mine = dict(r)
                mine.pop("trainings_performed")
                other.pop("trainings_performed")
                assert mine == other

    def test_cardinality_k_max_one(self):
        assert len(sweep_cardinality(cfg(), 1).rows) == 1

    def test_eta(self):
        res = sweep_eta(cfg(dataset={"kind": "correlated", "samples": 120, "features": 8,
                                     "noise_sigma": 1.0}), [0.5, 0.0], 4)
        assert [r["axis"] for r in res.rows] == [0.5, 0.0]
        n = {r["axis"]: r["n_selected_mean"] for r in res.rows}
        assert n[0.0] >= n[0.5]

    def test_rank_order_curves_meet(self):
        res = rank_order_curves(cfg(ngp={"max_features": 3, "predictor": SMALL_MLP}))
        last = [r for r in res.records if r["axis"] == 3]
        assert all(r["ngp_nme_db"] == r["reversed_nme_db"] for r in last)

    def test_group_method(self):
        c = cfg(method="ngp_group", dataset={"kind": "quadrant", "samples": 100, "features": 64},
                ngp={"max_features": 1, "predictor": {"hidden_units": 8, "epochs": 2,
                                                      "loss": "cross_entropy"}},
                group={"grid": [8, 8], "window": [4, 4], "stride": 4}, monte_carlo_runs=1)
        rec = run_experiment(c).records[0]
        assert rec["n_selected"] == 16 and "test_accuracy" in rec
        assert rec["trainings_performed"] == 5


def test_summary_blank_for_undefined():
    rows = aggregate([{"point": 0, "run": 0, "fpsr": None, "fnsr": 1.0}], None)
    assert summary_csv_text(rows).splitlines()[1] == ",,,1.0,0.0,1"
