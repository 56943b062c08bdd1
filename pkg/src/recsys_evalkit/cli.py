"""Command-line driver: preprocess, stats, split, run, compare, simulate, trace.

Every subcommand takes ``--config``, ``--seed``, ``--jobs`` and ``--out``.
Outputs go to ``<out>/<dataset name>/``; the root is ``--out``, else
``$EVALKIT_OUTPUT_ROOT``, else the config's ``output.dir``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, data, evalstats, splitting
from . import rng as rngmod
from .arrays import load_arrays, save_arrays
from .config import ExperimentConfig, resolve_path
from .errors import ContractError, EvalkitError, EmptyInputError
from .hyperopt import STRATEGIES, optimize
from .metrics import MetricSpec
from .models import fit_model

_log = logging.getLogger("recsys_evalkit")

OUTPUT_ENV = "EVALKIT_OUTPUT_ROOT"
SIG_DIGITS = 6


def sig(x: float) -> float | None:
    """Round to 6 significant digits for the JSON reports."""
    x = float(x)
    if not np.isfinite(x):
        return None
    return float(f"{x:.{SIG_DIGITS}g}")


def dump_json(obj, path: Path | None = None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    return text


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Context:
    """Resolved config plus output locations for one invocation."""

    def __init__(self, args):
        self.config_path = Path(args.config) if args.config else None
        cfg = ExperimentConfig.load(self.config_path) if self.config_path else ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if getattr(args, "temporal_holdout", False):
            cfg = replace(cfg, split=replace(cfg.split, temporal=True))
        if getattr(args, "per_user_bootstrap", False):
            cfg = replace(cfg, stats=replace(cfg.stats, per_user_bootstrap=True))
        self.cfg = cfg
        self.jobs = max(1, args.jobs)
        self.base = self.config_path.parent if self.config_path else Path.cwd()
        root = args.out or os.environ.get(OUTPUT_ENV) or resolve_path(cfg.output_dir, self.base)
        self.root = Path(root)
        self.exp = self.root / cfg.dataset.name

    @property
    def raw_path(self) -> Path | None:
        return resolve_path(self.cfg.dataset.path, self.base)

    @property
    def processed_path(self) -> Path:
        p = resolve_path(self.cfg.dataset.processed, self.base)
        return p if p is not None else self.exp / "dataset.tsv"

    def read_raw(self) -> data.ParseResult:
        if self.raw_path is None:
            raise ContractError("config has no dataset.path")
        res = data.load_interactions(self.raw_path, self.cfg.dataset.parse_schema(), self.cfg.dataset.strict)
        if res.skipped:
            _log.warning("skipped %d malformed rows", len(res.skipped))
        return res

    def load_processed(self) -> data.InteractionDataset:
        if not self.processed_path.exists():
            raise ContractError(f"processed dataset {self.processed_path} not found; run `preprocess` first")
        return data.load_dataset(self.processed_path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_preprocess(ctx: Context, args) -> int:
    d = ctx.cfg.dataset
    raw = ctx.read_raw()
    full = data.InteractionDataset.from_interactions(data.binarize(raw.interactions, d.scale_levels))
    core = data.l_core(full, d.min_degree)
    if core.n_ratings == 0:
        raise EmptyInputError(f"the {d.min_degree}-core is empty; lower dataset.min_degree (L)")
    out = ctx.processed_path
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save_dataset(core, out)
    stats = {
        "dataset": d.name,
        "binarize_threshold": data.binarize_threshold(d.scale_levels),
        "min_degree": d.min_degree,
        "dataset_digest": data.dataset_digest(core),
        **{k: sig(v) if isinstance(v, float) else v for k, v in data.compute_stats(core).to_dict().items()},
    }
    dump_json(stats, ctx.exp / "stats.json")
    print(dump_json(stats), end="")
    return 0


def _temporal(interactions, variant: str) -> dict:
    rep = data.temporal_report(interactions, inclusive_span=(variant == "inclusive"))
    return {
        "span_days": rep.span_days,
        "new_users_per_day": sig(rep.new_user.per_day),
        "days_with_new_users": sig(rep.new_user.day_fraction),
        "ratings_per_day": sig(rep.new_rating.per_day),
        "days_with_ratings": sig(rep.new_rating.day_fraction),
        "new_items_per_day": sig(rep.new_item.per_day),
        "days_with_new_items": sig(rep.new_item.day_fraction),
    }


def cmd_stats(ctx: Context, args) -> int:
    ds = ctx.load_processed()
    doc = {"dataset": ctx.cfg.dataset.name, **{k: sig(v) if isinstance(v, float) else v for k, v in data.compute_stats(ds).to_dict().items()}}
    if ctx.raw_path is not None and ctx.cfg.dataset.schema.get("timestamp") is not None:
        raw = ctx.read_raw().interactions
        # raw log vs. the interactions surviving preprocessing
        users = set(ds.user_tokens)
        items = set(ds.item_tokens)
        kept = [x for x in raw if x.user_id in users and x.item_id in items and x.value >= data.binarize_threshold(ctx.cfg.dataset.scale_levels)]
        doc["temporal"] = {
            f"{src}/{variant}": _temporal(xs, variant)
            for src, xs in (("raw", raw), ("filtered", kept))
            for variant in ("inclusive", "exclusive")
        }
    dump_json(doc, ctx.exp / "dataset_report.json")
    print(dump_json(doc), end="")
    return 0


def cmd_split(ctx: Context, args) -> int:
    ds = ctx.load_processed()
    plan = ctx.cfg.split
    assignment = splitting.assign_user_folds(ds.n_users, plan.k, plan.seed)
    manifest = splitting.split_manifest(ds, assignment, plan)
    manifest["dataset_digest"] = data.dataset_digest(ds)
    path = ctx.exp / "splits.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    splitting.dump_manifest(manifest, path)
    sizes = assignment.sizes()
    print(f"wrote {path} ({ds.n_users} users, fold sizes {sizes.tolist()})")
    return 0


def _ci_dict(ci) -> dict:
    return {"level": ci.level, "lo": sig(ci.lo), "hi": sig(ci.hi), "n_resamples": ci.n_resamples, "seed": ci.seed, "method": ci.method}


def build_report(cfg: ExperimentConfig, family: str, scores: evalstats.FoldScores, ds_digest: str) -> tuple[dict, dict, dict]:
    """Report JSON, sidecar arrays and sidecar metadata for one model."""
    st = cfg.stats
    primary = str(scores.metric)
    fold_scores = scores.scores
    ci = evalstats.bootstrap_ci(fold_scores, st.ci_level, st.n_resamples, st.seed)
    report = {
        "dataset": cfg.dataset.name,
        "dataset_digest": ds_digest,
        "model": family,
        "metric": primary,
        "fold_scores": [sig(x) for x in fold_scores],
        "mean": sig(fold_scores.mean()),
        "ci": _ci_dict(ci),
        "config_digest": cfg.digest(),
        "best_params": [{k: (sig(v) if isinstance(v, float) else v) for k, v in f.best_params.items()} for f in scores.folds],
        "n_test_users": [len(f.users) for f in scores.folds],
        "metrics": {},
    }
    for name in cfg.metrics.report:
        vals = scores.per_metric(name)
        report["metrics"][name] = {"fold_scores": [sig(x) for x in vals], "mean": sig(vals.mean())}
    if st.per_user_bootstrap:
        pooled = np.concatenate([f.per_user[primary] for f in scores.folds])
        report["ci_per_user"] = _ci_dict(evalstats.bootstrap_ci(pooled, st.ci_level, st.n_resamples, st.seed))
    arrays = {}
    for f in scores.folds:
        arrays[f"users_fold{f.fold}"] = f.users
        for name, v in f.per_user.items():
            arrays[f"{name}_fold{f.fold}"] = v
    meta = {"model": family, "metric": primary, "k": len(scores.folds), "metrics": sorted(scores.folds[0].per_user)}
    return report, arrays, meta


def run_manifest(ctx: Context, ds_path: Path) -> dict:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    cfg = ctx.cfg
    return {
        "toolkit": "recsys-evalkit",
        "version": __version__,
        "config_digest": cfg.digest(),
        "config": cfg.to_dict() | {"output": None},
        "seeds": {"split": cfg.split.seed, "search": cfg.split.seed, "bootstrap": cfg.stats.seed},
        "generator": rngmod.GENERATOR,
        "numpy": np.__version__,
        "inputs": {"dataset": file_digest(ds_path)},
        "created": int(epoch) if epoch else None,
    }


def cmd_run(ctx: Context, args) -> int:
    ds = ctx.load_processed()
    cfg = ctx.cfg
    digest = data.dataset_digest(ds)
    families = [m for m in cfg.models if not args.model or m.family in args.model]
    if args.model and len(families) != len(set(args.model)):
        raise ContractError(f"--model {args.model} not all in the configured models")
    reports_dir = ctx.exp / "reports"
    failed_dir = ctx.exp / "failed"
    status = 0
    rows = []
    for mc in families:
        name = mc.family
        staging = ctx.exp / ".staging" / name
        shutil.rmtree(staging, ignore_errors=True)
        staging.mkdir(parents=True)
        _log.info("running %s", name)
        try:
            scores = evalstats.nested_cv(
                ds,
                name,
                space=mc.search_space(),
                plan=cfg.split,
                strategy=cfg.search.strategy,
                budget=cfg.search.budget,
                metric=cfg.metrics.primary_spec,
                report_metrics=cfg.metrics.report_specs,
                jobs=ctx.jobs,
                n_init=cfg.search.n_init,
            )
            report, arrays, meta = build_report(cfg, name, scores, digest)
            dump_json(report, staging / f"{name}.json")
            save_arrays(staging / f"{name}.npz", arrays, meta)
            for f in scores.folds:
                if f.trace is not None:
                    (staging / f"{name}_fold{f.fold}_trace.csv").write_text(f.trace.to_csv())
        except Exception:
            status = 1
            target = failed_dir / name
            shutil.rmtree(target, ignore_errors=True)
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.move(str(staging), str(target))
            (target / "error.txt").write_text(traceback.format_exc())
            print(f"{name}: FAILED (see {target / 'error.txt'})", file=sys.stderr)
            continue
        reports_dir.mkdir(parents=True, exist_ok=True)
        traces_dir = ctx.exp / "traces"
        for p in sorted(staging.iterdir()):
            dest = (traces_dir if p.name.endswith("_trace.csv") else reports_dir) / p.name
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.move(str(p), str(dest))
        shutil.rmtree(failed_dir / name, ignore_errors=True)
        for fold, s in enumerate(report["fold_scores"]):
            rows.append([name, report["metric"], fold, s])
        print(f"{name}: {report['metric']} mean {report['mean']} CI [{report['ci']['lo']}, {report['ci']['hi']}]")
    shutil.rmtree(ctx.exp / ".staging", ignore_errors=True)
    if rows:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "metric", "fold", "score"])
        w.writerows(rows)
        (ctx.exp / "scores.csv").write_text(buf.getvalue())
    dump_json(run_manifest(ctx, ctx.processed_path), ctx.exp / "manifest.json")
    return status


def _per_user_hits(sidecar: Path, metric: str, k: int):
    arrays, _ = load_arrays(sidecar)
    return [(arrays[f"users_fold{f}"], arrays[f"{metric}_fold{f}"]) for f in range(k)]


def compare_reports(path_a: Path, path_b: Path, alpha: float) -> dict:
    ra = json.loads(Path(path_a).read_text())
    rb = json.loads(Path(path_b).read_text())
    if ra["dataset_digest"] != rb["dataset_digest"]:
        raise ContractError("reports were produced on different datasets")
    if ra["metric"] != rb["metric"]:
        raise ContractError(f"reports use different metrics ({ra['metric']} vs {rb['metric']})")
    k = len(ra["fold_scores"])
    if len(rb["fold_scores"]) != k:
        raise ContractError("reports have different numbers of folds")
    ua = _per_user_hits(Path(path_a).with_suffix(".npz"), ra["metric"], k)
    ub = _per_user_hits(Path(path_b).with_suffix(".npz"), rb["metric"], k)
    per_fold = []
    for f in range(k):
        (users_a, va), (users_b, vb) = ua[f], ub[f]
        if not np.array_equal(users_a, users_b):
            raise ContractError(f"fold {f}: reports were evaluated on different users")
        # a user counts as a hit when at least one held-out item is in the top k
        res = evalstats.mcnemar_test((va > 0).astype(int), (vb > 0).astype(int), alpha)
        per_fold.append({"fold": f, **{k2: (sig(v) if isinstance(v, float) else v) for k2, v in res.to_dict().items()}})
    ci_a = ra["ci"]
    ci_b = rb["ci"]
    overlap = ci_a["lo"] <= ci_b["hi"] and ci_b["lo"] <= ci_a["hi"]
    return {
        "dataset": ra["dataset"],
        "metric": ra["metric"],
        "models": [ra["model"], rb["model"]],
        "means": [ra["mean"], rb["mean"]],
        "ci": [ci_a, ci_b],
        "ci_overlap": overlap,
        "verdict": "not separable" if overlap else "separable",
        "mcnemar": per_fold,
        "significant_folds": sum(1 for r in per_fold if r["significant"]),
    }


def cmd_compare(ctx: Context, args) -> int:
    doc = compare_reports(Path(args.report_a), Path(args.report_b), ctx.cfg.stats.alpha)
    if args.output:
        dump_json(doc, Path(args.output))
    print(dump_json(doc), end="")
    return 0


def cmd_simulate(ctx: Context, args) -> int:
    specs = [MetricSpec.parse(m) for m in args.metrics]
    seed = ctx.cfg.stats.seed if args.seed is None else args.seed
    rows = evalstats.simulate_split_by_ratio(args.max_test_size, args.catalog, args.users, args.decay, specs, seed)
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["test_size", "metric", "mean", "stderr"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "mean": sig(r["mean"]), "stderr": sig(r["stderr"])})
    path = Path(args.output) if args.output else ctx.root / "simulation.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    print(f"wrote {path}")
    return 0


def cmd_trace(ctx: Context, args) -> int:
    """All three search strategies on the inner split of outer fold 0."""
    ds = ctx.load_processed()
    cfg = ctx.cfg
    mc = next((m for m in cfg.models if m.family == args.model), None) if args.model else cfg.models[0]
    if mc is None:
        raise ContractError(f"model {args.model} is not configured")
    space = mc.search_space()
    if not len(space):
        raise ContractError(f"{mc.family} has no hyperparameters to search")
    budget = args.budget or cfg.search.budget
    plan = cfg.split
    assignment = splitting.assign_user_folds(ds.n_users, plan.k, plan.seed)
    train_folds, val_fold = splitting.inner_folds(plan.k, 0)
    inner = splitting.build_fold_data(ds, assignment, val_fold, plan, train_folds=train_folds)
    train = inner.train_matrix.to_csr()
    val_in = [ps.fold_in for _, ps in inner.eval_users]
    val_out = [ps.val_items for _, ps in inner.eval_users]
    metric = cfg.metrics.primary_spec
    model_seed = rngmod.derive_seed(plan.seed, "model", mc.family, 0)
    cache: dict = {}

    def objective(params):
        key = json.dumps(params, sort_keys=True)
        if key not in cache:
            model = fit_model(mc.family, train, params, model_seed)
            cache[key] = float(evalstats.evaluate_users(model, train, val_in, val_out, [metric])[metric].mean())
        return cache[key]

    traces = {s: optimize(objective, space, budget, s, rngmod.derive_seed(plan.seed, "trace", s), cfg.search.n_init) for s in STRATEGIES}
    overall = max(t.best.objective for t in traces.values())
    out_dir = ctx.exp / "traces"
    out_dir.mkdir(parents=True, exist_ok=True)
    for s, t in traces.items():
        rel = t.best_so_far / overall if overall > 0 else np.full(len(t.trials), np.nan)
        rows = list(csv.reader(io.StringIO(t.to_csv())))
        rows[0].append("relative")
        for r, v in zip(rows[1:], rel):
            r.append("" if not np.isfinite(v) else repr(float(v)))
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(rows)
        path = out_dir / f"{mc.family}_{s}.csv"
        path.write_text(buf.getvalue())
        print(f"{s}: best {t.best.objective:.6g} ({len(t.trials)} evaluations) -> {path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (all keys optional)")
    common.add_argument("--seed", type=int, help="override split, search and bootstrap seeds")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for outer folds")
    common.add_argument("--out", help=f"output root (else ${OUTPUT_ENV}, else output.dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="recsys-evalkit", description="Reproducible top-n recommender evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="binarize, L-core filter and store the dataset")
    sub.add_parser("stats", parents=[common], help="dataset statistics and temporal report")
    split = sub.add_parser("split", parents=[common], help="export the fold assignment and held-out items")
    split.add_argument("--temporal-holdout", action="store_true", help="hold out each user's latest items")

    run = sub.add_parser("run", parents=[common], help="nested CV for every configured model")
    run.add_argument("--model", action="append", help="restrict to this family (repeatable)")
    run.add_argument("--temporal-holdout", action="store_true", help="hold out each user's latest items")
    run.add_argument("--per-user-bootstrap", action="store_true", help="also bootstrap over pooled test users")

    cmp_ = sub.add_parser("compare", parents=[common], help="McNemar per fold and CI overlap of two reports")
    cmp_.add_argument("report_a")
    cmp_.add_argument("report_b")
    cmp_.add_argument("--output", help="also write the comparison JSON here")

    sim = sub.add_parser("simulate", parents=[common], help="split-by-ratio test-size simulation")
    sim.add_argument("--max-test-size", type=int, default=20)
    sim.add_argument("--catalog", type=int, default=1000)
    sim.add_argument("--users", type=int, default=10000)
    sim.add_argument("--decay", type=float, default=0.05)
    sim.add_argument("--metrics", nargs="+", default=["ndcg@10", "recall@50", "precision@10", "hitrate@50"])
    sim.add_argument("--output", help="CSV path (default <out>/simulation.csv)")

    tr = sub.add_parser("trace", parents=[common], help="best-so-far traces of grid, random and Bayesian search")
    tr.add_argument("--model", help="family to trace (default: first configured)")
    tr.add_argument("--budget", type=int, help="evaluations per strategy (default search.budget)")
    return p


COMMANDS = {
    "preprocess": cmd_preprocess,
    "stats": cmd_stats,
    "split": cmd_split,
    "run": cmd_run,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "trace": cmd_trace,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = Context(args)
        return COMMANDS[args.command](ctx, args)
    except (EvalkitError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
