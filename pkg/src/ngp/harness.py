"""Monte-Carlo experiment runner: sweeps, aggregation and result files.

An experiment is described by a JSON-compatible dict (see
:class:`ExperimentConfig`). Each Monte-Carlo run regenerates (or reloads)
the dataset, splits it, standardises with training statistics, runs one
selector and emits a flat record of metrics. Runs are keyed by
``(master_seed, run index, stage)``, the same at every axis point, so any
single run can be replayed on its own.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .baselines import correlation_importance, lasso_fit, select_by_importance
from .data import Dataset, DataSplit, load_csv, load_idx, restrict, split, standardize
from .metrics import accuracy, fnsr, fpsr, mse, nme_db, phase_indicator
from .predictor import CROSS_ENTROPY, PredictorSpec, fit, predict
from .pursuit import (NgpConfig, SelectionResult, ngp_group_select, ngp_select,
                      relative_improvement)
from .seeds import derive_seed
from .synthetic import GenConfig, augment_irrelevant, generate

log = logging.getLogger(__name__)

METHODS = ("ngp", "ngp_group", "correlation", "lasso")
AXES = ("sample_size", "cardinality", "eta", "rank_order")
GENERATORS = ("ohm", "planck", "gravitation", "correlated", "quadrant")

# column order of summary.csv; only metrics present in some record are written
METRIC_ORDER = (
    "fpsr", "fnsr", "f_mse", "f_nme_db", "p_mse", "p_nme_db",
    "train_accuracy", "test_accuracy", "ngp_nme_db", "reversed_nme_db",
    "random_nme_db", "n_selected", "trainings_performed",
)


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


def _require(cond, field_name, msg):
    if not cond:
        raise ConfigError(f"{field_name}: {msg}")


@dataclass
class ExperimentConfig:
    dataset: Dict[str, Any]
    method: str = "ngp"
    ngp: Dict[str, Any] = field(default_factory=dict)
    group: Dict[str, Any] = field(default_factory=dict)
    lasso_lambda: float = 0.01
    threshold: float = 0.01
    split: Dict[str, float] = field(default_factory=lambda: {"validation_fraction": 0.2,
                                                              "test_fraction": 0.0})
    standardize_targets: bool = True
    monte_carlo_runs: int = 10
    master_seed: int = 0
    sweep: Optional[Dict[str, Any]] = None
    threads: int = 1
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        _require(not unknown, sorted(unknown)[0] if unknown else "", "unknown field")
        _require("dataset" in d, "dataset", "missing")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def validate(self) -> None:
        ds = self.dataset
        _require(isinstance(ds, dict) and "kind" in ds, "dataset.kind", "missing")
        kind = ds["kind"]
        _require(kind in GENERATORS + ("csv", "idx"), "dataset.kind", f"unknown kind {kind!r}")
        if kind == "csv":
            _require("path" in ds, "dataset.path", "required for csv")
        elif kind == "idx":
            _require("images" in ds and "labels" in ds, "dataset.images",
                     "images and labels paths required for idx")
        else:
            for key in ("samples", "features"):
                _require(isinstance(ds.get(key), int) and ds[key] >= 1, f"dataset.{key}",
                         "positive integer required")
        _require(self.method in METHODS, "method", f"must be one of {METHODS}")
        _require(isinstance(self.monte_carlo_runs, int) and self.monte_carlo_runs >= 1,
                 "monte_carlo_runs", "must be >= 1")
        _require(isinstance(self.threads, int) and self.threads >= 1, "threads", "must be >= 1")
        if "fractions" in self.split:
            fr = self.split["fractions"]
            _require(isinstance(fr, list) and len(fr) == 3 and fr[0] > 0 and fr[1] > 0
                     and fr[2] >= 0 and abs(sum(fr) - 1) < 1e-9, "split.fractions",
                     "need [train>0, validation>0, test>=0] summing to 1")
            tf = fr[2]
        else:
            vf = self.split.get("validation_fraction", 0.2)
            tf = self.split.get("test_fraction", 0.0)
            _require(0 < vf < 1, "split.validation_fraction", "must lie in (0, 1)")
            _require(0 <= tf < 1, "split.test_fraction", "must lie in [0, 1)")
        if self.method in ("ngp", "ngp_group"):
            try:
                self.predictor_spec()
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"ngp.predictor: {exc}") from None
        if self.method == "ngp_group":
            for key in ("grid", "window", "stride"):
                _require(key in self.group, f"group.{key}", "required for ngp_group")
        if self.sweep is not None:
            axis = self.sweep.get("axis")
            _require(axis in AXES, "sweep.axis", f"must be one of {AXES}, got {axis!r}")
            if axis in ("sample_size", "eta"):
                vals = self.sweep.get("values")
                _require(isinstance(vals, list) and vals, "sweep.values", "non-empty list required")
            if axis == "sample_size":
                _require(kind in GENERATORS, "sweep.axis", "sample_size needs a generator dataset")
                _require(all(a < b for a, b in zip(vals, vals[1:])), "sweep.values",
                         "sample sizes must be ascending")
            if axis == "eta":
                _require(all(0 <= v < 1 for v in vals), "sweep.values", "eta values must lie in [0, 1)")
                _require(isinstance(self.sweep.get("max_features"), int), "sweep.max_features",
                         "integer cap required for eta sweeps")
            if axis == "cardinality":
                _require(isinstance(self.sweep.get("k_max"), int) and self.sweep["k_max"] >= 1,
                         "sweep.k_max", "positive integer required")
            if axis in ("cardinality", "eta", "rank_order"):
                _require(self.method == "ngp", "method", f"{axis} sweeps need method 'ngp'")
            if axis == "rank_order":
                _require(isinstance(self.ngp.get("max_features"), int), "ngp.max_features",
                         "rank_order needs a known N")
                _require(tf > 0, "split.test_fraction", "rank_order needs a test split")

    def split_fractions(self) -> tuple:
        """(train, validation, test); validation is carved from the non-test part."""
        if "fractions" in self.split:
            return tuple(float(f) for f in self.split["fractions"])
        vf = float(self.split.get("validation_fraction", 0.2))
        tf = float(self.split.get("test_fraction", 0.0))
        return ((1 - tf) * (1 - vf), (1 - tf) * vf, tf)

    def predictor_spec(self) -> PredictorSpec:
        return PredictorSpec.from_dict(dict(self.ngp.get("predictor", {})))

    def axis_points(self) -> list:
        if self.sweep is None:
            return [None]
        if self.sweep["axis"] == "sample_size":
            return list(self.sweep["values"])
        return [None]


@dataclass
class SweepResult:
    axis: Optional[str]
    rows: List[dict]
    records: List[dict]
    config: ExperimentConfig


# ---------------------------------------------------------------------------
# one run
# ---------------------------------------------------------------------------


def _make_dataset(ds: dict, seed: int, samples: Optional[int] = None) -> Dataset:
    kind = ds["kind"]
    if kind == "csv":
        data = load_csv(ds["path"], ds.get("target_columns", -1), ds.get("has_header", True))
        support = ds.get("true_support")
        if support is not None:
            data = replace(data, true_support=frozenset(int(i) - 1 for i in support))
    elif kind == "idx":
        data = load_idx(ds["images"], ds["labels"], ds.get("limit"))
    else:
        gen = GenConfig(samples=samples or ds["samples"], features=ds["features"], seed=seed,
                        noise_sigma=float(ds.get("noise_sigma", 0.0)))
        data = generate(kind, gen)
    aug = ds.get("augment")
    if aug:
        data = augment_irrelevant(data, int(aug["count"]), float(aug.get("low", -10.0)),
                                  float(aug.get("high", 10.0)),
                                  derive_seed(seed, 1))
    return data


def _prepare(cfg: ExperimentConfig, seeds: dict, samples=None) -> DataSplit:
    data = _make_dataset(cfg.dataset, seeds["generate"], samples)
    parts = split(data, cfg.split_fractions(), seeds["split"])
    classification = _is_classification(cfg)
    std_targets = cfg.standardize_targets and not classification
    if std_targets:
        train, fparams, tparams = standardize(parts.train, targets=True)
        scale = lambda d: standardize(d, (fparams, tparams), targets=True)[0]
    else:
        train, fparams = standardize(parts.train)
        scale = lambda d: standardize(d, fparams)[0]
    return DataSplit(train=train, validation=scale(parts.validation),
                     test=scale(parts.test) if parts.test is not None else None,
                     indices=parts.indices)


def _is_classification(cfg: ExperimentConfig) -> bool:
    if cfg.method in ("ngp", "ngp_group"):
        return cfg.predictor_spec().loss == CROSS_ENTROPY
    return False


def _ngp_config(cfg: ExperimentConfig, seed: int, **overrides) -> NgpConfig:
    ngp = {k: v for k, v in cfg.ngp.items() if k != "predictor"}
    ngp.update(overrides)
    return NgpConfig(predictor=cfg.predictor_spec(), master_seed=seed,
                     keep_candidate_losses=False, **ngp)


def _fit_metrics(model, prefix: str, data: Optional[Dataset]) -> dict:
    if data is None:
        return {}
    X = restrict(data, model.feature_set).features
    out = predict(model, X)
    if model.spec.loss == CROSS_ENTROPY:
        key = "train_accuracy" if prefix == "f" else "test_accuracy"
        return {key: accuracy(out, data.targets)}
    return {f"{prefix}_mse": mse(out, data.targets), f"{prefix}_nme_db": nme_db(out, data.targets)}


def _selection_metrics(selected, data: Dataset) -> dict:
    if data.true_support is None:
        return {}
    return {"fpsr": fpsr(selected, data.true_support), "fnsr": fnsr(selected, data.true_support)}


def _run_selector(cfg: ExperimentConfig, sp: DataSplit, seed: int, **overrides) -> SelectionResult:
    ncfg = _ngp_config(cfg, seed, **overrides)
    if cfg.method == "ngp_group":
        g = cfg.group
        return ngp_group_select(sp, tuple(g["grid"]), tuple(g["window"]), int(g["stride"]), ncfg)
    return ngp_select(sp, ncfg)


def _base_record(point, run, seeds, axis_value) -> dict:
    rec = {"point": point, "run": run, "seeds": dict(seeds)}
    if axis_value is not None:
        rec["axis"] = axis_value
    return rec


def run_single(cfg: ExperimentConfig, point: int, run: int) -> List[dict]:
    """Execute run ``run`` at axis point ``point``; returns its raw record(s)."""
    axis = cfg.sweep["axis"] if cfg.sweep else None
    value = cfg.axis_points()[point]
    # seeds depend on the run only: every axis point sees common random numbers
    seeds = {stage: derive_seed(cfg.master_seed, run, stage)
             for stage in ("generate", "split", "select")}
    sp = _prepare(cfg, seeds, samples=value if axis == "sample_size" else None)
    full = sp.train
    if axis == "cardinality":
        return _run_cardinality(cfg, sp, seeds, point, run)
    if axis == "eta":
        return _run_eta(cfg, sp, seeds, point, run)
    if axis == "rank_order":
        return _run_rank_order(cfg, sp, seeds, point, run)

    rec = _base_record(point, run, seeds, value)
    if cfg.method in ("ngp", "ngp_group"):
        res = _run_selector(cfg, sp, seeds["select"])
        rec.update(_selection_metrics(res.selected, full))
        rec.update(_fit_metrics(res.final_model, "f", sp.train))
        rec.update(_fit_metrics(res.final_model, "p", sp.test))
        rec.update(selected=[i + 1 for i in res.selected], stop_reason=res.stop_reason,
                   n_selected=len(res.selected), trainings_performed=res.trainings_performed)
        return [rec]

    # baselines use every non-test row
    pool = Dataset(np.vstack([sp.train.features, sp.validation.features]),
                   np.vstack([sp.train.targets, sp.validation.targets]),
                   true_support=full.true_support)
    if cfg.method == "correlation":
        imp = correlation_importance(pool)
        selected = select_by_importance(imp, cfg.threshold)
    else:
        lf = lasso_fit(pool, cfg.lasso_lambda)
        selected = select_by_importance(lf.importance, cfg.threshold)
        rec.update(f_mse=mse(lf.predict(pool.features), pool.targets),
                   f_nme_db=nme_db(lf.predict(pool.features), pool.targets))
        if sp.test is not None:
            rec.update(p_mse=mse(lf.predict(sp.test.features), sp.test.targets),
                       p_nme_db=nme_db(lf.predict(sp.test.features), sp.test.targets))
    rec.update(_selection_metrics(selected, pool))
    rec.update(selected=[i + 1 for i in selected], n_selected=len(selected))
    return [rec]


def _run_cardinality(cfg, sp, seeds, point, run) -> List[dict]:
    k_max = int(cfg.sweep["k_max"])
    res = _run_selector(cfg, sp, seeds["select"], max_features=k_max, eta=None)
    out = []
    chosen: List[int] = []
    for step in res.trace:
        chosen.extend(step.added)
        rec = _base_record(point, run, seeds, step.k)
        rec.update(_selection_metrics(chosen, sp.train))
        rec.update(_fit_metrics(step.model, "f", sp.train))
        rec.update(_fit_metrics(step.model, "p", sp.test))
        rec.update(n_selected=len(chosen), trainings_performed=res.trainings_performed)
        out.append(rec)
    return out


def eta_truncation(losses, eta: float) -> int:
    """Number of trace steps kept when the eta rule is replayed on ``losses``.

    ``losses`` runs L^{S_0}, L^{S_1}, ...; the first step whose relative
    improvement falls below ``eta`` is rolled back.
    """
    for k in range(1, len(losses)):
        if relative_improvement(losses[k - 1], losses[k]) < eta:
            return k - 1
    return len(losses) - 1


def _run_eta(cfg, sp, seeds, point, run) -> List[dict]:
    # selection under eta is a prefix of the eta-free trace, so one run serves all values
    cap = int(cfg.sweep["max_features"])
    res = _run_selector(cfg, sp, seeds["select"], max_features=cap, eta=None)
    out = []
    for eta in cfg.sweep["values"]:
        keep = eta_truncation(res.losses, eta)
        chosen = [i for s in res.trace[:keep] for i in s.added]
        rec = _base_record(point, run, seeds, eta)
        rec.update(_selection_metrics(chosen, sp.train))
        rec.update(selected=[i + 1 for i in chosen], n_selected=len(chosen))
        out.append(rec)
    return out


def _run_rank_order(cfg, sp, seeds, point, run) -> List[dict]:
    N = int(cfg.ngp["max_features"])
    res = _run_selector(cfg, sp, seeds["select"], max_features=N, eta=None)
    ngp_order = list(res.selected)
    P = sp.train.n_features
    rng = np.random.default_rng(derive_seed(cfg.master_seed, run, "random_order"))
    random_order = [int(i) for i in rng.choice(P, size=len(ngp_order), replace=False)]
    curves = {"ngp": ngp_order, "reversed": ngp_order[::-1], "random": random_order}
    spec = cfg.predictor_spec()
    out = []
    for m in range(1, len(ngp_order) + 1):
        rec = _base_record(point, run, seeds, m)
        seed = derive_seed(cfg.master_seed, run, "refit", m)
        for name, order in curves.items():
            # same seed and canonical column order: equal sets give equal models
            cols = tuple(sorted(order[:m]))
            model = fit(spec, sp.train, cols, seed)
            pred = predict(model, restrict(sp.test, cols).features)
            rec[f"{name}_nme_db"] = nme_db(pred, sp.test.targets)
        rec.update(_selection_metrics(ngp_order[:m], sp.train))
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _metric_columns(records) -> List[str]:
    present = set()
    for r in records:
        present.update(k for k in METRIC_ORDER if k in r)
    return [k for k in METRIC_ORDER if k in present]


def aggregate(records: List[dict], axis: Optional[str]) -> List[dict]:
    """Mean/std (population) per axis value over the defined values of each metric."""
    cols = _metric_columns(records)
    groups: Dict[Any, List[dict]] = {}
    for r in records:
        groups.setdefault(r.get("axis"), []).append(r)
    rows = []
    for value, recs in groups.items():
        row = {"axis": "" if value is None else value}
        for c in cols:
            vals = np.array([r[c] for r in recs if r.get(c) is not None], dtype=np.float64)
            row[f"{c}_mean"] = float(np.mean(vals)) if vals.size else None
            row[f"{c}_std"] = float(np.std(vals)) if vals.size else None
        row["runs"] = len({(r["point"], r["run"]) for r in recs})
        if axis == "sample_size" and row.get("fnsr_mean") is not None:
            row["phase"] = phase_indicator(row["fnsr_mean"])
        rows.append(row)
    return rows


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> SweepResult:
    """Run every (axis point, Monte-Carlo run) and aggregate.

    Runs execute on up to ``threads`` worker threads; records are collected
    in (point, run) order so output never depends on scheduling.
    """
    cfg.validate()
    workers = threads or cfg.threads
    jobs = [(p, r) for p in range(len(cfg.axis_points())) for r in range(cfg.monte_carlo_runs)]

    def job(pr):
        p, r = pr
        try:
            return run_single(cfg, p, r)
        except Exception as exc:
            raise RuntimeError(f"run {r} at axis point {p} failed: {exc}") from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, jobs))
    else:
        chunks = [job(j) for j in jobs]
    records = [rec for chunk in chunks for rec in chunk]
    axis = cfg.sweep["axis"] if cfg.sweep else None
    return SweepResult(axis=axis, rows=aggregate(records, axis), records=records, config=cfg)


def run_monte_carlo(cfg: ExperimentConfig, threads: Optional[int] = None) -> SweepResult:
    return run_experiment(cfg, threads)


def _with_sweep(cfg: ExperimentConfig, sweep: dict) -> ExperimentConfig:
    new = replace(cfg, sweep=sweep)
    new.validate()
    return new


def sweep_sample_size(cfg: ExperimentConfig, sizes, threads=None) -> SweepResult:
    return run_experiment(_with_sweep(cfg, {"axis": "sample_size", "values": list(sizes)}), threads)


def sweep_cardinality(cfg: ExperimentConfig, k_max: int, threads=None) -> SweepResult:
    return run_experiment(_with_sweep(cfg, {"axis": "cardinality", "k_max": int(k_max)}), threads)


def sweep_eta(cfg: ExperimentConfig, etas, max_features: int, threads=None) -> SweepResult:
    sweep = {"axis": "eta", "values": list(etas), "max_features": int(max_features)}
    return run_experiment(_with_sweep(cfg, sweep), threads)


def rank_order_curves(cfg: ExperimentConfig, threads=None) -> SweepResult:
    return run_experiment(_with_sweep(cfg, {"axis": "rank_order"}), threads)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summary_csv_text(rows: List[dict]) -> str:
    if not rows:
        return ""
    header = list(rows[0].keys())
    for r in rows[1:]:
        for k in r:
            if k not in header:
                header.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(r.get(k)) for k in header])
    return buf.getvalue()


def persist_results(result: SweepResult, path) -> Path:
    """Write ``summary.csv``, ``raw.jsonl`` and ``config.json`` under ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(summary_csv_text(result.rows))
    with (out / "raw.jsonl").open("w") as fh:
        for rec in result.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    echo = {"experiment": result.config.to_dict(), "axis": result.axis,
            "code_version": __version__,
            "seed_derivation": "SeedSequence(master_seed, spawn_key=(run, stage))"}
    (out / "config.json").write_text(json.dumps(echo, sort_keys=True, indent=2) + "\n")
    return out


def load_results(path):
    """Read back ``(config_echo, raw_records, summary_text)`` from a results directory."""
    p = Path(path)
    echo = json.loads((p / "config.json").read_text())
    with (p / "raw.jsonl").open() as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    return echo, records, (p / "summary.csv").read_text()


def read_summary(path) -> List[dict]:
    with (Path(path) / "summary.csv").open(newline="") as fh:
        return list(csv.DictReader(fh))
