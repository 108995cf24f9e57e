"""Command-line entry point: ``ngp {generate,select,sweep,report}``.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
Feature indices are printed 1-based. The log level comes from the
``NGP_LOG_LEVEL`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (correlation_importance, lasso_fit, select_by_importance,
                        write_importance_csv)
from .data import DataError, Dataset, DataSplit, load_csv, load_idx, one_hot, split, standardize
from .harness import ConfigError, ExperimentConfig, persist_results, read_summary, run_experiment
from .metrics import fnsr, fpsr
from .predictor import CROSS_ENTROPY, PredictorSpec
from .pursuit import NgpConfig, ngp_group_select, ngp_select
from .synthetic import GenConfig, augment_irrelevant, generate

log = logging.getLogger("ngp")

GENERATORS = ("ohm", "planck", "gravitation", "correlated", "quadrant")


class UsageError(Exception):
    pass


def _pair(text: str):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RxC, got {text!r}") from None


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    g.add_argument("--out", help="output path")
    g.add_argument("--config", help="JSON file of option values; explicit flags win")
    g.add_argument("--json", action="store_true", help="machine-readable output")
    g.add_argument("--dry-run", action="store_true", help="print the resolved options and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ngp", description="Greedy feature selection with retrained predictors.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset (CSV + sidecar JSON)")
    p.add_argument("--law", required=True, choices=GENERATORS,
                   help="generator: a physical law, 'correlated' or 'quadrant'")
    p.add_argument("--samples", type=int, required=True, help="number of samples J")
    p.add_argument("--features", type=int, required=True, help="number of features P")
    p.add_argument("--noise", type=float, default=None,
                   help="target noise sigma (default 1 for correlated, else 0)")
    p.add_argument("--augment", type=int, default=0,
                   help="append this many irrelevant uniform columns")
    p.add_argument("--low", type=float, default=-10.0, help="augment range low (default -10)")
    p.add_argument("--high", type=float, default=10.0, help="augment range high (default 10)")
    _common(p)

    p = sub.add_parser("select", help="select features from a dataset")
    p.add_argument("data", nargs="?", help="CSV file (sidecar JSON is read if present)")
    p.add_argument("--idx-images", help="IDX3 image file instead of CSV")
    p.add_argument("--idx-labels", help="IDX1 label file")
    p.add_argument("--limit", type=int, help="use at most this many IDX samples")
    p.add_argument("--target", default="-1",
                   help="target column name or 0-based position (default: last)")
    p.add_argument("--support", help="true support, comma-separated 1-based indices")
    p.add_argument("--method", choices=("ngp", "lasso", "correlation"), default="ngp")
    p.add_argument("--max-features", type=int, help="N: stop after this many features")
    p.add_argument("--eta", type=float, help="relative-improvement stopping threshold")
    p.add_argument("--predictor", choices=("mlp", "linear"), default="mlp")
    p.add_argument("--loss", choices=("mean_square", "cross_entropy"), default="mean_square")
    p.add_argument("--hidden", type=int, default=500, help="MLP hidden units (default 500)")
    p.add_argument("--epochs", type=int, default=10, help="MLP epochs (default 10)")
    p.add_argument("--lr", type=float, default=0.01, help="SGD learning rate (default 0.01)")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--ridge", type=float, default=0.0, help="ridge penalty (linear predictor)")
    p.add_argument("--validation-fraction", type=float, default=0.2)
    p.add_argument("--test-fraction", type=float, default=0.0)
    p.add_argument("--no-standardize-targets", action="store_true",
                   help="keep regression targets on their original scale")
    p.add_argument("--lambda", dest="lam", type=float, default=0.01,
                   help="LASSO penalty (default 0.01)")
    p.add_argument("--threshold", type=float, default=0.01,
                   help="importance cut for baselines (default 0.01)")
    p.add_argument("--grid", type=_pair, help="feature grid RxC for window selection")
    p.add_argument("--window", type=_pair, help="window HxW for window selection")
    p.add_argument("--stride", type=int, help="window stride")
    _common(p)

    p = sub.add_parser("sweep", help="run a Monte-Carlo experiment from a JSON config")
    p.add_argument("experiment", help="experiment JSON file")
    p.add_argument("--runs", type=int, help="override monte_carlo_runs")
    _common(p)

    p = sub.add_parser("report", help="tabulate persisted experiment results")
    p.add_argument("results", nargs="+", help="result directories (searched recursively)")
    _common(p)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    """Parse with ``--config`` values as defaults underneath explicit flags."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config {args.config}: {exc}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        bad = sorted(set(k.replace("-", "_") for k in values) - known)
        if bad:
            sub.error(f"unknown option(s) in --config: {', '.join(bad)}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    noise = args.noise if args.noise is not None else (1.0 if args.law == "correlated" else 0.0)
    gen = GenConfig(samples=args.samples, features=args.features, seed=args.seed,
                    noise_sigma=noise)
    out = Path(args.out or f"{args.law}_J{args.samples}_P{args.features}_s{args.seed}.csv")
    if out.suffix != ".csv":
        out = out / "dataset.csv"
    if args.dry_run:
        print(json.dumps({"law": args.law, **asdict(gen), "out": str(out)}, indent=2))
        return 0
    data = generate(args.law, gen)
    if args.augment:
        data = augment_irrelevant(data, args.augment, args.low, args.high, args.seed + 1)
    out.parent.mkdir(parents=True, exist_ok=True)
    P, Q = data.n_features, data.n_targets
    if args.law == "quadrant":
        header = [f"x{i + 1}" for i in range(P)] + ["label"]
        body = np.column_stack([data.features, data.targets.argmax(axis=1)])
    else:
        header = [f"x{i + 1}" for i in range(P)] + (["t"] if Q == 1 else [f"t{q + 1}" for q in range(Q)])
        body = np.column_stack([data.features, data.targets])
    with out.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in body:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    support = sorted(i + 1 for i in data.true_support)
    sidecar = {
        "generator": args.law, "samples": gen.samples, "features": P, "seed": gen.seed,
        "noise_sigma": gen.noise_sigma, "true_support": support,
        "target_columns": header[P:],
        "interpretations": {"or_operator": "max", "augment_distribution":
                            f"uniform({args.low}, {args.high})" if args.augment else None},
        "code_version": __version__,
    }
    if args.augment:
        sidecar["augment"] = {"count": args.augment, "low": args.low, "high": args.high}
    side = out.with_suffix(".json")
    side.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out} and {side}")
    print(f"J={data.n_samples} P={P}")
    print("support: " + ",".join(str(i) for i in support))
    return 0


# ---------------------------------------------------------------------------
# select
# ---------------------------------------------------------------------------


def _load_for_select(args) -> Dataset:
    if args.idx_images or args.idx_labels:
        if not (args.idx_images and args.idx_labels):
            raise UsageError("--idx-images and --idx-labels go together")
        return load_idx(args.idx_images, args.idx_labels, args.limit)
    if not args.data:
        raise UsageError("give a CSV file or --idx-images/--idx-labels")
    path = Path(args.data)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.is_file() else {}
    target = args.target
    if target == "-1" and meta.get("target_columns"):
        target = meta["target_columns"]
    data = load_csv(path, target)
    if args.loss == CROSS_ENTROPY:
        labels = data.targets[:, 0]
        if np.any(labels != np.round(labels)) or labels.min() < 0:
            raise DataError("cross_entropy needs non-negative integer class labels")
        data = replace(data, targets=one_hot(labels.astype(int), int(labels.max()) + 1))
    support = None
    if args.support:
        support = [int(s) for s in args.support.split(",") if s.strip()]
    elif meta.get("true_support"):
        support = meta["true_support"]
    if support is not None:
        data = replace(data, true_support=frozenset(i - 1 for i in support))
    return data


def _select_split(args, data: Dataset) -> DataSplit:
    vf, tf = args.validation_fraction, args.test_fraction
    parts = split(data, ((1 - tf) * (1 - vf), (1 - tf) * vf, tf), args.seed)
    std_t = args.loss != CROSS_ENTROPY and not args.no_standardize_targets
    if std_t:
        train, fp, tp = standardize(parts.train, targets=True)
        scale = lambda d: standardize(d, (fp, tp), targets=True)[0]
    else:
        train, fp = standardize(parts.train)
        scale = lambda d: standardize(d, fp)[0]
    return DataSplit(train, scale(parts.validation),
                     scale(parts.test) if parts.test is not None else None)


def _name(data: Dataset, i: int) -> str:
    return data.feature_names[i] if data.feature_names else f"x{i + 1}"


def cmd_select(args) -> int:
    if args.method == "ngp" and args.max_features is None and args.eta is None:
        raise UsageError("ngp needs --max-features and/or --eta")
    spec = PredictorSpec(family=args.predictor, hidden_units=args.hidden, epochs=args.epochs,
                         learning_rate=args.lr, batch_size=args.batch_size,
                         weight_decay=args.weight_decay, loss=args.loss,
                         ridge_lambda=args.ridge)
    if args.dry_run:
        print(json.dumps({k: v for k, v in vars(args).items() if k != "func"},
                         indent=2, sort_keys=True, default=str))
        return 0
    data = _load_for_select(args)
    truth = data.true_support
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    if args.method == "ngp":
        sp = _select_split(args, data)
        cfg = NgpConfig(max_features=args.max_features, eta=args.eta, predictor=spec,
                        master_seed=args.seed, parallel_candidates=args.threads)
        if args.window:
            grid = args.grid or (data.meta.get("grid") if data.meta else None)
            if grid is None:
                raise UsageError("--window needs --grid (or an IDX dataset)")
            res = ngp_group_select(sp, tuple(grid), args.window, args.stride or 1, cfg)
        else:
            res = ngp_select(sp, cfg)
        payload = res.to_dict()
        selected = list(res.selected)
        if truth is not None:
            payload["fpsr"] = fpsr(selected, truth)
            payload["fnsr"] = fnsr(selected, truth)
        if out:
            (out / "selection.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        if args.json:
            print(json.dumps(payload, sort_keys=True))
            return 0
        print(f"baseline loss (no features): {res.baseline_loss:.6g}")
        print(f"{'rank':>4}  {'feature':>8}  {'name':<12} {'validation loss':>16}")
        rank = 0
        for step in res.trace:
            for i in step.added:
                rank += 1
                mark = "  (rolled back)" if step.rolled_back else ""
                print(f"{rank:>4}  {i + 1:>8}  {_name(data, i):<12} {step.loss:>16.6g}{mark}")
        print(f"selected: {','.join(str(i + 1) for i in selected)}")
        print(f"stop: {res.stop_reason}; trainings performed: {res.trainings_performed}")
    else:
        pool = data
        if args.test_fraction > 0:
            # held-out rows are never seen by the baseline
            pool = split(data, (1 - args.test_fraction, args.test_fraction), args.seed).train
        train, _ = standardize(pool)
        if args.method == "correlation":
            imp = correlation_importance(train)
        else:
            imp = lasso_fit(train, args.lam).importance
        selected = list(select_by_importance(imp, args.threshold))
        payload = {"method": args.method, "selected": [i + 1 for i in selected],
                   "importance": [float(v) for v in imp]}
        if truth is not None:
            payload["fpsr"] = fpsr(selected, truth)
            payload["fnsr"] = fnsr(selected, truth)
        if out:
            write_importance_csv(out / "importance.csv", imp)
            (out / "selection.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        if args.json:
            print(json.dumps(payload, sort_keys=True))
            return 0
        print(f"{'rank':>4}  {'feature':>8}  {'name':<12} {'importance':>12}")
        for rank, i in enumerate(selected, 1):
            print(f"{rank:>4}  {i + 1:>8}  {_name(data, i):<12} {imp[i]:>12.4%}")
        print(f"selected (> {args.threshold:.2%}): {','.join(str(i + 1) for i in selected)}")
    if truth is not None:
        fp, fn = payload["fpsr"], payload["fnsr"]
        print(f"FPSR {'undefined' if fp is None else f'{fp:.3f}'}  FNSR {fn:.3f}")
    return 0


# ---------------------------------------------------------------------------
# sweep / report
# ---------------------------------------------------------------------------


def cmd_sweep(args) -> int:
    try:
        raw = json.loads(Path(args.experiment).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read experiment file: {exc}") from None
    if args.runs is not None:
        raw["monte_carlo_runs"] = args.runs
    if args.seed is not None:
        raw["master_seed"] = args.seed
    raw["threads"] = args.threads
    cfg = ExperimentConfig.from_dict(raw)
    if args.dry_run:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0
    if not args.out:
        raise UsageError("sweep needs --out DIR")
    result = run_experiment(cfg, threads=args.threads)
    out = persist_results(result, args.out)
    if args.json:
        print(json.dumps(result.rows, sort_keys=True))
    else:
        print(f"wrote {out / 'summary.csv'}, {out / 'raw.jsonl'}, {out / 'config.json'}")
        print((out / "summary.csv").read_text(), end="")
    return 0


REPORT_COLUMNS = (("FPSR", "fpsr"), ("FNSR", "fnsr"), ("F-MSE", "f_mse"),
                  ("F-NME", "f_nme_db"), ("P-MSE", "p_mse"), ("P-NME", "p_nme_db"))


def collect_report(paths) -> list:
    """One row per (experiment directory, summary row)."""
    dirs = []
    for p in paths:
        p = Path(p)
        if not p.is_dir():
            raise DataError(f"not a directory: {p}")
        dirs.extend(sorted(c.parent for c in p.rglob("config.json")))
    rows = []
    for d in dirs:
        echo = json.loads((d / "config.json").read_text())
        exp = echo.get("experiment", {})
        method = exp.get("method", d.name)
        if method.startswith("ngp"):
            method += " + " + exp.get("ngp", {}).get("predictor", {}).get("family", "mlp")
        label = exp.get("name") or method
        for srow in read_summary(d):
            row = {"method": label if not srow.get("axis") else f"{label} @ {srow['axis']}",
                   "dir": str(d)}
            for title, key in REPORT_COLUMNS:
                v = srow.get(f"{key}_mean", "")
                row[title] = float(v) if v not in ("", None) else None
            rows.append(row)
    if not rows:
        raise DataError(f"no results found under {', '.join(map(str, paths))}")
    return rows


def render_report(rows) -> str:
    titles = [t for t, _ in REPORT_COLUMNS]
    width = max(len("Method"), *(len(r["method"]) for r in rows))
    lines = [f"{'Method':<{width}}  " + "  ".join(f"{t:>8}" for t in titles)]
    for r in rows:
        cells = []
        for t in titles:
            v = r[t]
            if v is None:
                cells.append(f"{'N/A':>8}")
            elif t.endswith("NME"):
                cells.append(f"{v:>8.2f}")
            else:
                cells.append(f"{v:>8.3f}")
        lines.append(f"{r['method']:<{width}}  " + "  ".join(cells))
    lines.append("N/A: not applicable to the method.")
    return "\n".join(lines)


def cmd_report(args) -> int:
    rows = collect_report(args.results)
    if args.json:
        print(json.dumps(rows, sort_keys=True))
    else:
        print(render_report(rows))
    return 0


COMMANDS = {"generate": cmd_generate, "select": cmd_select, "sweep": cmd_sweep,
            "report": cmd_report}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("NGP_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = parse_args(argv)
    if args.seed is None and args.command != "sweep":
        args.seed = 0
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
