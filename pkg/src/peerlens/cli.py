"""``peerlens`` command line: ingest, synth, features, cones, dataset, train, eval, predict, explain, experiment.

Every subcommand writes into ``--out`` (a directory, replaced atomically)
and leaves a ``manifest.json`` echoing the fully resolved arguments.
Failures print one JSON object on stderr and exit 1; usage errors exit 2.
Options can also come from ``--config FILE.json``: a flat object, or one
keyed by subcommand name. Command-line flags win over the file, which wins
over built-in defaults.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .cone import pair_features
from .evalx import (DEFAULT_MISSING_FRACTIONS, DEFAULT_TRAIN_FRACTIONS, SAMPLING_ARMS, ExperimentConfig,
                    _csv_text, atomic_write_text, evaluate, exp_ablation, exp_missing, exp_sampling, exp_temporal,
                    exp_train_size, exp_transfer, exp_unknown, seed_list, write_result)
from .explain import gain_importance, mdi_importance, sequential_drop, shapley_sampled
from .features import DROP_ORDER, Variant, build_feature_table, correlation_matrix, save_feature_table
from .ingest import (build_snapshot, load_snapshot, open_text, parse_as_rank, parse_as_rel, parse_peeringdb_net,
                     save_snapshot, write_raw_sources)
from .learner import Hyperparams, Mode, ModelFormatError, fit_dataset, load, save
from .pairset import dataset_from_snapshot, graph_context, load_dataset, random_holdout, save_dataset
from ._random import derive_seed
from .synth import SynthParams, synth_snapshot

log = logging.getLogger("peerlens")

EXPERIMENTS = ("ablation", "sampling", "train-size", "transfer", "temporal", "missing", "unknown", "drop")


class CliError(Exception):
    def __init__(self, kind: str, message: str, **detail):
        super().__init__(message)
        self.kind, self.detail = kind, detail


# ---------------------------------------------------------------- helpers

@contextlib.contextmanager
def atomic_dir(out: str | os.PathLike):
    """Yield a scratch directory that replaces ``out`` only if the block succeeds."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=out.parent, prefix=f".{out.name}."))
    os.chmod(tmp, 0o755)
    try:
        yield tmp
        if out.exists():
            old = Path(tempfile.mkdtemp(dir=out.parent, prefix=f".{out.name}.old."))
            os.replace(out, old / "x")
            os.replace(tmp, out)
            shutil.rmtree(old)
        else:
            os.replace(tmp, out)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)


def _resolved(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def write_manifest(directory: Path, args, **extra) -> None:
    """Merge the run record into ``manifest.json`` (creating it when absent)."""
    path = directory / "manifest.json"
    doc = json.loads(path.read_text()) if path.exists() else {}
    doc["run"] = {"command": args.command, "peerlens_version": __version__, "args": _resolved(args), **extra}
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _hyperparams(args) -> Hyperparams:
    fps = args.features_per_split
    if fps not in ("sqrt", "log2", "all"):
        fps = float(fps) if "." in fps else int(fps)
    return Hyperparams(n_trees=args.n_trees, max_depth=args.max_depth, learning_rate=args.learning_rate,
                       l2_lambda=args.l2_lambda, min_child_weight=args.min_child_weight,
                       subsample=args.subsample, colsample=args.colsample, forest_features_per_split=fps)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _model_dir(path: str) -> tuple[Path, Path]:
    """Accept a model directory or a model.json path."""
    p = Path(path)
    if p.is_dir():
        return p, p / "model.json"
    return p.parent, p


def _load_model(path: str):
    mdir, mfile = _model_dir(path)
    if not mfile.exists():
        raise CliError("missing_input", f"model file not found: {mfile}")
    return load(mfile), mdir


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(mode=args.mode, variant=args.variant, train_fraction=args.train_fraction,
                            threshold=args.threshold, hyperparams=_hyperparams(args), n_jobs=args.jobs)


def _need(path: str | None, what: str) -> Path:
    if path is None:
        raise CliError("missing_input", f"{what} is required")
    p = Path(path)
    if not p.exists():
        raise CliError("missing_input", f"{what} not found: {p}")
    return p


# -------------------------------------------------------------- commands

def cmd_ingest(args) -> None:
    files = {"as_rank": _need(args.as_rank, "--as-rank"), "peeringdb": _need(args.peeringdb, "--peeringdb"),
             "as_rel": _need(args.as_rel, "--as-rel")}
    with open_text(files["as_rank"]) as fh:
        rank = parse_as_rank(fh)
    with open_text(files["peeringdb"]) as fh:
        pdb = parse_peeringdb_net(fh)
    with open_text(files["as_rel"]) as fh:
        rel = parse_as_rel(fh)
    snap = build_snapshot(rank, pdb, rel, args.date)
    with atomic_dir(args.out) as tmp:
        save_snapshot(snap, tmp, sources={k: str(v) for k, v in files.items()})
        write_manifest(tmp, args)
    print(json.dumps(snap.counts, sort_keys=True))


def cmd_synth(args) -> None:
    snap = synth_snapshot(args.n, args.seed, SynthParams(), epoch=args.epoch)
    with atomic_dir(args.out) as tmp:
        save_snapshot(snap, tmp)
        if args.raw:
            write_raw_sources(snap, tmp / "raw")
        write_manifest(tmp, args, synth_params=SynthParams().to_dict())
    print(json.dumps(snap.counts, sort_keys=True))


def cmd_features(args) -> None:
    snap = load_snapshot(_need(args.snapshot, "--snapshot"))
    table = build_feature_table(snap, args.variant)
    with atomic_dir(args.out) as tmp:
        save_feature_table(table, tmp, snap.date.isoformat())
        if args.correlation:
            corr = correlation_matrix(table, cluster=True)
            names, mat = corr.ordered()
            rows = [[n, *row] for n, row in zip(names, mat.tolist())]
            atomic_write_text(tmp / "correlation.csv", _csv_text(["feature", *names], rows))
        write_manifest(tmp, args, n_ases=len(table.asns), width=len(table.schema.names),
                       fingerprint=table.schema.fingerprint)


def cmd_cones(args) -> None:
    snap = load_snapshot(_need(args.snapshot, "--snapshot"))
    cones, pops = graph_context(snap, include_self=not args.exclude_self, pop_mode=args.pop_mode)
    feats = pair_features(cones, pops, [r.pair for r in snap.relationships])
    with atomic_dir(args.out) as tmp:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["asn_a", "asn_b", "cone_overlap", "affinity_score"])
        for (a, b), pf in sorted(feats.items()):
            w.writerow([a, b, pf.cone_overlap, repr(pf.affinity_score)])
        atomic_write_text(tmp / "pair_features.csv", buf.getvalue())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["asn", "cone_size"])
        for a in cones.asns:
            w.writerow([a, cones.size(a)])
        atomic_write_text(tmp / "cone_sizes.csv", buf.getvalue())
        write_manifest(tmp, args, n_pairs=len(feats), removed_cycle_edges=[list(e) for e in cones.removed_edges])


def cmd_dataset(args) -> None:
    snap = load_snapshot(_need(args.snapshot, "--snapshot"))
    built = dataset_from_snapshot(snap, args.variant, augment=args.augment)
    with atomic_dir(args.out) as tmp:
        save_dataset(built.dataset, tmp)
        write_manifest(tmp, args, snapshot=str(args.snapshot))
    print(json.dumps({"rows": len(built.dataset), "width": built.dataset.width, **built.dataset.label_counts()}))


def _dataset_snapshot(data_dir: Path) -> str | None:
    doc = json.loads((data_dir / "manifest.json").read_text())
    return doc.get("run", {}).get("snapshot")


def cmd_train(args) -> None:
    data_dir = _need(args.data, "--data")
    ds = load_dataset(data_dir)
    test = None
    if args.holdout is not None:
        ds, test = random_holdout(ds, args.holdout, derive_seed(args.seed, "split"))
    model = fit_dataset(ds, args.mode, _hyperparams(args), derive_seed(args.seed, "model"), n_jobs=args.jobs)
    with atomic_dir(args.out) as tmp:
        save(model, tmp / "model.json")
        (tmp / "schema.json").write_bytes((data_dir / "schema.json").read_bytes())
        if test is not None:
            save_dataset(test, tmp / "test")
        write_manifest(tmp, args, model="model.json", dataset=str(data_dir),
                       snapshot=_dataset_snapshot(data_dir), fingerprint=model.schema_fingerprint,
                       n_train=len(ds), hyperparams=model.hyperparams.to_dict())


def cmd_eval(args) -> None:
    model, mdir = _load_model(_need(args.model, "--model"))
    data_dir = Path(args.data) if args.data else mdir / "test"
    ds = load_dataset(_need(str(data_dir), "--data"))
    rep = evaluate(model, ds, args.threshold)
    with atomic_dir(args.out) as tmp:
        atomic_write_text(tmp / "report.json", json.dumps(rep.to_dict(timing=False), indent=2, sort_keys=True) + "\n")
        atomic_write_text(tmp / "timings.json", json.dumps({"eval_seconds": rep.eval_seconds}) + "\n")
        write_manifest(tmp, args, dataset=str(data_dir), n=rep.n)
    print(json.dumps(rep.to_dict(timing=False), sort_keys=True))


def _read_pairs(path: Path) -> list[tuple[int, int]]:
    pairs = []
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.replace("|", ",").split(",")]
            try:
                a, b = int(parts[0]), int(parts[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue  # header
                raise CliError("bad_input", f"{path}:{lineno}: expected ASN_A,ASN_B", line=lineno)
            pairs.append((a, b))
    return pairs


def cmd_predict(args) -> None:
    from .features import FeatureSchema
    model, mdir = _load_model(_need(args.model, "--model"))
    pairs = _read_pairs(_need(args.pairs, "--pairs"))
    manifest = json.loads((mdir / "manifest.json").read_text()) if (mdir / "manifest.json").exists() else {}
    snap_dir = args.snapshot or manifest.get("run", {}).get("snapshot")
    snap = load_snapshot(_need(snap_dir, "--snapshot"))
    schema = FeatureSchema.from_dict(json.loads((mdir / "schema.json").read_text())["schema"])
    table = build_feature_table(snap, schema.variant, schema)
    known = [p for p in pairs if p[0] != p[1] and p[0] in table and p[1] in table]
    canon = sorted({(min(p), max(p)) for p in known})
    proba: dict[tuple[int, int], float] = {}
    if canon:
        parts = [table.rows([a for a, _ in canon]), table.rows([b for _, b in canon])]
        if schema.variant.pair_level_columns:
            cones, pops = graph_context(snap)
            feats = pair_features(cones, pops, canon)
            parts.append(np.array([[feats[p].cone_overlap, feats[p].affinity_score] for p in canon]))
        p = model.predict_proba(np.hstack(parts))
        proba = dict(zip(canon, p.tolist()))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["asn_a", "asn_b", "probability", "label"])
    skipped = 0
    for a, b in pairs:
        v = proba.get((min(a, b), max(a, b)))
        if v is None:
            skipped += 1
            w.writerow([a, b, "", ""])
        else:
            w.writerow([a, b, repr(v), int(v >= args.threshold)])
    if skipped:
        log.warning("%d pairs without features for both endpoints (or self pairs); left blank", skipped)
    if args.out is None:
        sys.stdout.write(buf.getvalue())
        return
    with atomic_dir(args.out) as tmp:
        atomic_write_text(tmp / "predictions.csv", buf.getvalue())
        write_manifest(tmp, args, snapshot=str(snap_dir), n_pairs=len(pairs), n_blank=skipped)


def cmd_explain(args) -> None:
    model, _ = _load_model(_need(args.model, "--model"))
    if args.method == "mdi":
        report = mdi_importance(model)
    elif args.method == "gain":
        report = gain_importance(model)
    else:
        ds = load_dataset(_need(args.data, "--data"))
        rows = None if args.rows == "all" else min(int(args.rows), len(ds))
        report = shapley_sampled(model, ds, rows, args.perms, args.seed,
                                 background_size=args.background or None, link=args.link, n_jobs=args.jobs)
    with atomic_dir(args.out) as tmp:
        report.write(tmp, "importance.csv")
        report.by_base_feature().write(tmp, "importance_by_feature.csv")
        meta = {k: v for k, v in report.meta.items() if k != "per_row"}
        write_manifest(tmp, args, method=report.method, meta=meta, ranking=report.ranking())


def cmd_experiment(args) -> None:
    cfg = _experiment_config(args)
    seeds = seed_list(args.seed, args.seeds)
    snap = load_snapshot(_need(args.snapshot, "--snapshot"))
    name = args.name
    if name == "ablation":
        res = exp_ablation(snap, seeds, cfg)
    elif name == "sampling":
        res = exp_sampling(snap, seeds, cfg, SAMPLING_ARMS)
    elif name == "train-size":
        res = exp_train_size(snap, args.fractions or DEFAULT_TRAIN_FRACTIONS, seeds, cfg)
    elif name == "transfer":
        res = exp_transfer(snap, seeds, cfg, internal_holdout=args.internal_holdout)
    elif name == "temporal":
        old = load_snapshot(_need(args.old_snapshot, "--old-snapshot"))
        res = exp_temporal(old, snap, seeds, cfg)
    elif name == "missing":
        res = exp_missing(snap, args.fractions or DEFAULT_MISSING_FRACTIONS, seeds, cfg)
    elif name == "drop":
        ds = dataset_from_snapshot(snap, "default" if args.variant == "optimum" else args.variant).dataset
        res = sequential_drop(ds, DROP_ORDER, cfg.mode, seeds, cfg)
    elif name == "unknown":
        built = dataset_from_snapshot(snap, cfg.variant)
        if args.model:
            model, _ = _load_model(args.model)
        else:
            model = fit_dataset(built.dataset, cfg.mode, cfg.hyperparams, derive_seed(args.seed, "model"),
                                n_jobs=args.jobs)
        summary = exp_unknown(snap, model, built.features.schema, args.anchors, args.n_anchors, args.threshold)
        with atomic_dir(args.out) as tmp:
            atomic_write_text(tmp / "unknown.json", json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
            write_manifest(tmp, args, config=cfg.to_dict())
        print(json.dumps({"rate": summary.rate, "n_pairs": summary.n_pairs}))
        return
    else:  # argparse choices prevent this
        raise CliError("usage", f"unknown experiment {name}")
    with atomic_dir(args.out) as tmp:
        write_result(res, tmp)
        write_manifest(tmp, args)
    for row in res.aggregate():
        if row["metric"] in ("overall_accuracy", "balanced_accuracy"):
            print(f"{res.name} {row['group']} {row['metric']} mean={row['mean']} std={row['std']}")


# ---------------------------------------------------------------- parser

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--mode", default="gbt", choices=[m.value for m in Mode], help="gbt = boosted trees, rf = random forest")
    g.add_argument("--n-trees", type=int, default=None, help="trees / boosting rounds (mode default 100)")
    g.add_argument("--max-depth", type=int, default=None, help="tree depth (boosted default 6, forest unlimited)")
    g.add_argument("--learning-rate", type=float, default=0.3, help="boosted only: shrinkage per round")
    g.add_argument("--l2-lambda", type=float, default=1.0, help="boosted only: L2 penalty on leaf scores")
    g.add_argument("--min-child-weight", type=float, default=1.0, help="boosted only: minimum hessian per child")
    g.add_argument("--subsample", type=float, default=1.0, help="boosted only: row fraction per round")
    g.add_argument("--colsample", type=float, default=1.0, help="boosted only: column fraction per round")
    g.add_argument("--features-per-split", default="sqrt", help="forest only: sqrt, log2, all, a count or a fraction")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON file with option defaults")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    common.add_argument("--log-level", default="warning", choices=["debug", "info", "warning", "error"],
                        help="stderr logging level")
    fmt = argparse.ArgumentDefaultsHelpFormatter

    parser = argparse.ArgumentParser(prog="peerlens", description="Predict AS peering from public AS data.",
                                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"peerlens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_, formatter_class=fmt)
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "Parse AS-Rank, PeeringDB net and as-rel dumps into a snapshot cache")
    p.add_argument("--as-rank", required=True, help="AS-Rank JSON/JSONL dump (may be .gz/.bz2)")
    p.add_argument("--peeringdb", "--pdb", required=True, help="PeeringDB dump with the net table")
    p.add_argument("--as-rel", required=True, help="CAIDA as-rel file")
    p.add_argument("--date", required=True, help="snapshot date YYYY-MM-DD")
    p.add_argument("--out", required=True, help="output directory (replaced)")

    p = add("synth", cmd_synth, "Generate a synthetic snapshot with a planted peering rule")
    p.add_argument("--n", type=int, default=500, help="number of ASes")
    p.add_argument("--seed", type=int, default=7, help="random seed")
    p.add_argument("--epoch", type=int, default=0, help="later versions of the same synthetic Internet")
    p.add_argument("--raw", action="store_true", help="also write raw source dumps under OUT/raw")
    p.add_argument("--out", required=True, help="output directory (replaced)")

    for name, func, help_ in (("features", cmd_features, "Build the per-AS feature table"),
                              ("dataset", cmd_dataset, "Assemble the labeled pair dataset")):
        p = add(name, func, help_)
        p.add_argument("--snapshot", required=True, help="snapshot directory")
        p.add_argument("--variant", default="optimum", choices=[v.value for v in Variant], help="feature set")
        p.add_argument("--out", required=True, help="output directory (replaced)")
        if name == "features":
            p.add_argument("--correlation", action="store_true", help="also write the clustered correlation matrix")
        else:
            p.add_argument("--augment", action="store_true", help="emit each pair in both orientations")

    p = add("cones", cmd_cones, "Customer cones, cone overlap and PoP affinity for every retained pair")
    p.add_argument("--snapshot", required=True, help="snapshot directory")
    p.add_argument("--pop-mode", default="both", choices=["both", "facilities", "ixps"], help="which memberships count as PoPs")
    p.add_argument("--exclude-self", action="store_true", help="leave an AS out of its own cone")
    p.add_argument("--out", required=True, help="output directory (replaced)")

    p = add("train", cmd_train, "Fit a tree ensemble on a dataset directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--seed", type=int, default=7, help="random seed")
    p.add_argument("--holdout", type=float, default=None,
                   help="train on this fraction and keep the rest under OUT/test")
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="output directory (replaced)")

    p = add("eval", cmd_eval, "Score a model on a labeled dataset")
    p.add_argument("--model", required=True, help="model directory or model.json")
    p.add_argument("--data", default=None, help="dataset directory (default: the model's held-out test set)")
    p.add_argument("--threshold", type=float, default=0.5, help="label 1 when probability >= threshold")
    p.add_argument("--out", required=True, help="output directory (replaced)")

    p = add("predict", cmd_predict, "Predict peering for listed AS pairs")
    p.add_argument("--model", required=True, help="model directory or model.json")
    p.add_argument("--pairs", required=True, help="file with ASN_A,ASN_B lines")
    p.add_argument("--snapshot", default=None, help="snapshot directory (default: the one the model was trained from)")
    p.add_argument("--threshold", type=float, default=0.5, help="label 1 when probability >= threshold")
    p.add_argument("--out", default=None, help="directory for predictions.csv (default: stdout)")

    p = add("explain", cmd_explain, "Feature importance of a trained model")
    p.add_argument("--model", required=True, help="model directory or model.json")
    p.add_argument("--data", default=None, help="dataset directory (Shapley only)")
    p.add_argument("--method", default="shapley", choices=["shapley", "mdi", "gain"], help="importance measure")
    p.add_argument("--rows", default="1000", help="rows to explain, or 'all'")
    p.add_argument("--perms", type=int, default=32, help="permutations per row")
    p.add_argument("--background", type=int, default=64, help="background rows (0 = one random row per permutation)")
    p.add_argument("--link", default="probability", choices=["probability", "margin"], help="Shapley output scale")
    p.add_argument("--seed", type=int, default=7, help="random seed")
    p.add_argument("--out", required=True, help="output directory (replaced)")

    p = add("experiment", cmd_experiment, "Run one experiment over several seeds")
    p.add_argument("name", choices=EXPERIMENTS, help="experiment to run")
    p.add_argument("--snapshot", required=True, help="snapshot directory")
    p.add_argument("--old-snapshot", default=None, help="older snapshot (temporal only)")
    p.add_argument("--seeds", type=int, default=20, help="number of seeds")
    p.add_argument("--seed", type=int, default=0, help="first seed; runs use seed, seed+1, ...")
    p.add_argument("--variant", default="optimum", choices=[v.value for v in Variant], help="feature set")
    p.add_argument("--train-fraction", type=float, default=0.5, help="holdout training share")
    p.add_argument("--threshold", type=float, default=0.5, help="label 1 when probability >= threshold")
    p.add_argument("--fractions", type=_floats, default=None,
                   help="comma-separated fractions (train-size and missing)")
    p.add_argument("--internal-holdout", action="store_true", help="transfer: also score a held-out part of A")
    p.add_argument("--model", default=None, help="unknown: use this model instead of training one")
    p.add_argument("--anchors", type=_ints, default=None, help="unknown: anchor ASNs (default: best-ranked)")
    p.add_argument("--n-anchors", type=int, default=20, help="unknown: number of best-ranked anchors")
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="output directory (replaced)")
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _subparser_names(parser: argparse.ArgumentParser) -> list[str]:
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return list(action.choices)
    return []


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("command", nargs="?")
    known, _ = pre.parse_known_args(argv)
    if not known.config or not known.command:
        return
    try:
        doc = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError("config", f"cannot read config {known.config}: {exc}") from None
    if not isinstance(doc, dict):
        raise CliError("config", "config file must hold a JSON object")
    try:
        sub = _subparser(parser, known.command)
    except KeyError:
        return  # argparse reports the bad command
    commands = set(_subparser_names(parser))
    dests = {a.dest: a for a in sub._actions}
    # flat keys apply wherever the subcommand has that option; a section must be exact
    items = [(k, v, False) for k, v in doc.items() if k not in commands]
    section = doc.get(known.command, {})
    if not isinstance(section, dict):
        raise CliError("config", f"config section {known.command!r} must be an object")
    items += [(k, v, True) for k, v in section.items()]
    values = {}
    for key, value, strict in items:
        dest = key.replace("-", "_")
        if dest not in dests or dest in ("help", "config"):
            if strict:
                raise CliError("config", f"unknown option {key!r} for {known.command}")
            continue
        action = dests[dest]
        if isinstance(value, list) and action.type in (_floats, _ints):
            value = tuple(value)
        elif isinstance(value, str) and action.type is not None and action.type is not str:
            value = action.type(value)
        values[dest] = value
        action.required = False
    sub.set_defaults(**values)


def _error(kind: str, message: str, **detail) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **detail}, sort_keys=True, default=str) + "\n")
    return 1


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except CliError as exc:
        return _error(exc.kind, str(exc), **exc.detail)
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        return _error(exc.kind, str(exc), **exc.detail)
    except ModelFormatError as exc:
        d = exc.to_dict()
        return _error(d.pop("error"), str(exc), **d)
    except FileNotFoundError as exc:
        return _error("missing_input", str(exc))
    except (ValueError, KeyError) as exc:
        return _error(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
