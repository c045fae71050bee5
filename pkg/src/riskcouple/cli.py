"""Command-line front end.

One subcommand per pipeline stage; every stage recomputes from the raw
log so commands compose without intermediate state files. ``report``
writes the delimited tables together with rendered PNG figures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .actions import (
    ActionLog,
    LogFormat,
    format_from_path,
    load_log,
    save_log,
)
from .clustering import Algorithm, Covariance, Linkage, dataset_risk
from .coupling import load_matrix, normalize, save_matrix
from .errors import RiskCoupleError
from .features import FeatureFlavor, export_features
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    default_pipeline_config,
    fit_model,
    fit_threshold,
    run_pipeline,
    train_decision_tree,
)
from .policy import export_consistency
from .simulate import ScenarioConfig, default_scenario, generate, make_pair
from .tree import cross_dataset_accuracy, predict_many

_DATA_DIR = Path(__file__).parent / "data"


def _load_pipeline_config(args) -> PipelineConfig:
    cfg = (
        PipelineConfig.load(args.config)
        if getattr(args, "config", None)
        else default_pipeline_config()
    )
    if getattr(args, "eps", None) is not None:
        cfg.clustering.eps = args.eps
    if getattr(args, "min_pts", None) is not None:
        cfg.clustering.min_pts = args.min_pts
    if getattr(args, "algorithm", None) is not None:
        cfg.clustering.algorithm = Algorithm(args.algorithm)
    if getattr(args, "k", None) is not None:
        cfg.clustering.k = args.k
    if getattr(args, "linkage", None) is not None:
        cfg.clustering.linkage = Linkage(args.linkage)
    if getattr(args, "covariance", None) is not None:
        cfg.clustering.covariance = Covariance(args.covariance)
    if getattr(args, "seed", None) is not None:
        cfg.clustering.seed = args.seed
    if getattr(args, "alpha", None) is not None:
        cfg.binning.alpha = args.alpha
    if getattr(args, "theta", None) is not None:
        cfg.weights.permit_threshold = args.theta
    if getattr(args, "flavor", None) is not None:
        cfg.flavor = FeatureFlavor(args.flavor)
    return cfg


def _load_log_arg(args) -> ActionLog:
    fmt = LogFormat(args.format) if args.format else format_from_path(args.log)
    return load_log(args.log, fmt, strict=not getattr(args, "lenient", False))


def _run(args) -> PipelineResult:
    return run_pipeline(_load_log_arg(args), _load_pipeline_config(args))


# -- subcommand implementations ----------------------------------------------


def cmd_simulate(args) -> int:
    if args.scenario:
        cfg = ScenarioConfig.load(args.scenario)
        if args.seed is not None:
            cfg.seed = args.seed
    else:
        cfg = default_scenario(seed=args.seed if args.seed is not None else 7)
    if args.pair:
        (log1, truth1), (log2, truth2) = make_pair(cfg)
        stem = Path(args.out)
        outs = [
            (stem.with_suffix(".1" + stem.suffix), log1, truth1),
            (stem.with_suffix(".2" + stem.suffix), log2, truth2),
        ]
    else:
        log, truth = generate(cfg)
        outs = [(Path(args.out), log, truth)]
    for path, log, truth in outs:
        save_log(log, path, format_from_path(path))
        truth.save(path.with_suffix(".truth.json"))
        print(f"wrote {len(log)} records to {path} "
              f"({len(truth.annotations)} anomalous)")
    if args.save_scenario:
        cfg.save(args.save_scenario)
    return 0


def cmd_ingest(args) -> int:
    log = _load_log_arg(args)
    counts = log.act_counts()
    print(f"{len(log)} records: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    if args.out:
        save_log(log, args.out, format_from_path(args.out))
        print(f"rewrote log to {args.out}")
    return 0


def cmd_events(args) -> int:
    from .events import build_event_index, export_event_trace

    cfg = _load_pipeline_config(args)
    index = build_event_index(_load_log_arg(args), cfg.dwell)
    if args.out:
        export_event_trace(index, args.out)
    print(
        f"{len(index.events)} events across {len(index.locations())} locations, "
        f"{len(index.reads)} reads"
    )
    for name, count in sorted(index.warnings.items()):
        print(f"warning {name}: {count}", file=sys.stderr)
    return 0


def cmd_couple(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.fixtures:
        src = _DATA_DIR / "appendix"
        for path in sorted(src.glob("*_raw.csv")):
            matrix = load_matrix(path)
            save_matrix(normalize(matrix), out / path.name, values="normalized")
            print(f"normalized {path.name}")
        return 0
    from .coupling import build_all_couplings
    from .events import build_event_index

    cfg = _load_pipeline_config(args)
    index = build_event_index(_load_log_arg(args), cfg.dwell)
    bundle = build_all_couplings(index, time_buckets=cfg.time_buckets)
    for matrix in bundle.matrices.values():
        save_matrix(matrix, out / f"{matrix.name}.csv", values=args.values)
        print(f"wrote {matrix.name}.csv")
    for reason in bundle.skipped:
        print(f"skipped: {reason}", file=sys.stderr)
    return 0


def cmd_bin(args) -> int:
    from .coupling import build_all_couplings
    from .events import build_event_index
    from .features import bin_bundle

    cfg = _load_pipeline_config(args)
    index = build_event_index(_load_log_arg(args), cfg.dwell)
    bundle = build_all_couplings(index, time_buckets=cfg.time_buckets)
    binnings = bin_bundle(bundle, cfg.binning)
    obj = {}
    for key, matrix in bundle.matrices.items():
        binning = binnings.get(*key)
        if binning is None:
            continue
        obj[matrix.name] = {
            "t_high": binning.t_high,
            "t_med": binning.t_med,
            "degenerate": binning.degenerate,
        }
    text = json.dumps(obj, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def cmd_featurize(args) -> int:
    result = _run(args)
    export_features(result.vectors[result.config.flavor], args.out)
    print(f"wrote {len(result.samples)} samples to {args.out}")
    return 0


def cmd_cluster(args) -> int:
    import csv

    result = _run(args)
    with open(args.out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sample_id", "cluster"])
        for vec, label in zip(result.cluster_vectors, result.assignment.labels):
            writer.writerow([vec.sample_id, int(label)])
    n = result.assignment.n_clusters
    outliers = sum(1 for l in result.assignment.labels if int(l) == -1)
    print(f"{n} clusters, {outliers} outliers over {len(result.samples)} samples")
    return 0


def cmd_label(args) -> int:
    from .report import export_cluster_table

    result = _run(args)
    crv, level = dataset_risk(result.cluster_vectors)
    export_cluster_table(result.summaries, args.out, crv, level)
    for s in result.summaries:
        name = "outliers" if s.index == -1 else f"cluster{s.index}"
        print(f"{name}: {s.sample_count} samples, risk {s.crv:.3f} ({s.level})")
    print(f"dataset: risk {crv:.3f} ({level})")
    return 0


def cmd_decide(args) -> int:
    from .report import export_read_decisions

    result = _run(args)
    export_read_decisions(result.reads, args.out)
    tally: dict[str, int] = {}
    for r in result.reads:
        tally[r.combined.value] = tally.get(r.combined.value, 0) + 1
    print(", ".join(f"{k}={v}" for k, v in sorted(tally.items())))
    return 0


def cmd_policy(args) -> int:
    import csv

    result = _run(args)
    with open(args.out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "time", "device", "document", "location",
                "r_devloc", "r_traffic", "r_coexist", "r_docloc", "r_doctime",
                "r_dev", "r_env", "r_act", "r_overall", "decision",
            ]
        )
        for r in result.reads:
            b = r.breakdown
            writer.writerow(
                [
                    r.read.time, r.read.device.token(), r.read.document.token(),
                    r.read.location.token(),
                    b.r_devloc, b.r_traffic, b.r_coexist, b.r_docloc, b.r_doctime,
                    f"{b.r_dev:.3f}", f"{b.r_env:.3f}", f"{b.r_act:.3f}",
                    f"{b.r_overall:.3f}", b.decision.value,
                ]
            )
    denied = sum(1 for r in result.reads if r.breakdown.decision.value == "deny")
    print(f"{len(result.reads)} reads scored, {denied} denied "
          f"(threshold {result.config.weights.permit_threshold})")
    return 0


def cmd_compare(args) -> int:
    result = _run(args)
    if args.tune:
        theta, score = fit_threshold(result)
        print(f"tuned permit threshold {theta} (consistency {score:.2f}%)")
    export_consistency(result.consistency, args.out)
    t = result.consistency
    print(
        f"consistency: permit {t.permit_consistency:.2f}%, "
        f"deny {t.deny_consistency:.2f}%, overall {t.overall_consistency:.2f}% "
        f"({t.escalated} escalated excluded)"
    )
    return 0


def cmd_train_tree(args) -> int:
    cfg = _load_pipeline_config(args)
    if args.max_depth is not None:
        cfg.tree.max_depth = args.max_depth if args.max_depth > 0 else None
    if args.min_leaf is not None:
        cfg.tree.min_samples_leaf = args.min_leaf
    result = run_pipeline(_load_log_arg(args), cfg)
    tree, train_acc = train_decision_tree(result, cfg.tree)
    Path(args.out).write_text(tree.to_json())
    print(f"training accuracy {100 * train_acc:.2f}% (depth {tree.depth()})")
    if args.eval_log:
        from .pipeline import decision_labels

        eval_fmt = format_from_path(args.eval_log)
        eval_result = run_pipeline(load_log(args.eval_log, eval_fmt), cfg)
        x, y, _ = decision_labels(eval_result)
        acc = cross_dataset_accuracy(tree, x, y)
        print(f"cross-dataset accuracy {100 * acc:.2f}%")
    return 0


def cmd_report(args) -> int:
    from .report import write_report

    result = _run(args)
    written = write_report(result, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_serve(args) -> int:
    from .service import DecisionService

    cfg = _load_pipeline_config(args)
    fmt = LogFormat(args.format) if args.format else format_from_path(args.train_log)
    model = fit_model(load_log(args.train_log, fmt), cfg)
    print("ready", file=sys.stderr)
    DecisionService(model).run(sys.stdin, sys.stdout)
    return 0


# -- argument wiring ----------------------------------------------------------


def _add_log_opts(p, required=True):
    p.add_argument("--log", required=required, help="action log path")
    p.add_argument("--format", choices=["jsonl", "csv"], help="log format (default: from extension)")
    p.add_argument("--lenient", action="store_true", help="skip strict field validation")
    p.add_argument("--config", help="pipeline config JSON")


def _add_tuning_opts(p):
    p.add_argument("--eps", type=float, help="density radius")
    p.add_argument("--min-pts", type=int, dest="min_pts", help="density threshold")
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm])
    p.add_argument("--k", type=int, help="cluster count for agglomerative/mixture")
    p.add_argument("--linkage", choices=[l.value for l in Linkage])
    p.add_argument("--covariance", choices=[c.value for c in Covariance])
    p.add_argument("--seed", type=int, help="clustering seed")
    p.add_argument("--alpha", type=float, help="binning threshold offset")
    p.add_argument("--theta", type=float, help="policy permit threshold")
    p.add_argument("--flavor", choices=[f.value for f in FeatureFlavor])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskcouple",
        description="Coupling-based risk scoring for co-presence logs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic log with labeled anomalies")
    p.add_argument("--scenario", help="scenario config JSON (default: built-in)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", required=True, help="output log path (.jsonl or .csv)")
    p.add_argument("--pair", action="store_true", help="emit two perturbed datasets")
    p.add_argument("--save-scenario", help="also save the effective scenario config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="validate a log and print a summary")
    _add_log_opts(p)
    p.add_argument("--out", help="rewrite the log (format from extension)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("events", help="reconstruct co-presence events")
    _add_log_opts(p)
    p.add_argument("--out", help="event trace output (JSON lines)")
    p.set_defaults(func=cmd_events)

    p = sub.add_parser("couple", help="build coupling matrices")
    _add_log_opts(p, required=False)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--values", choices=["raw", "normalized"], default="normalized")
    p.add_argument(
        "--fixtures",
        action="store_true",
        help="normalize the bundled reference matrices instead of a log",
    )
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("bin", help="compute risk-binning thresholds")
    _add_log_opts(p)
    p.add_argument("--out", help="threshold JSON output (default: stdout)")
    p.add_argument("--alpha", type=float, help="binning threshold offset")
    p.set_defaults(func=cmd_bin)

    p = sub.add_parser("featurize", help="extract per-event feature vectors")
    _add_log_opts(p)
    _add_tuning_opts(p)
    p.add_argument("--out", required=True, help="feature CSV output")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("cluster", help="cluster the feature vectors")
    _add_log_opts(p)
    _add_tuning_opts(p)
    p.add_argument("--out", required=True, help="per-sample label CSV")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("label", help="summarize per-cluster risk")
    _add_log_opts(p)
    _add_tuning_opts(p)
    p.add_argument("--out", required=True, help="cluster table CSV")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("decide", help="per-read decisions from both routes")
    _add_log_opts(p)
    _add_tuning_opts(p)
    p.add_argument("--out", required=True, help="decision CSV")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("policy", help="score reads with the rule-based policy")
    _add_log_opts(p)
    _add_tuning_opts(p)
    p.add_argument("--out", required=True, help="policy breakdown CSV")
    p.set_defaults(func=cmd_policy)

    p = sub.add_parser("compare", help="cross-check the two decision routes")
    _add_log_opts(p)
    _add_tuning_opts(p)
    p.add_argument("--out", required=True, help="consistency table CSV")
    p.add_argument("--tune", action="store_true", help="sweep the permit threshold first")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train-tree", help="distill decisions into a tree")
    _add_log_opts(p)
    _add_tuning_opts(p)
    p.add_argument("--out", required=True, help="tree JSON output")
    p.add_argument("--eval-log", dest="eval_log", help="second log for cross-dataset accuracy")
    p.add_argument("--max-depth", type=int, dest="max_depth", help="tree depth cap (0 = unlimited)")
    p.add_argument("--min-leaf", type=int, dest="min_leaf", help="minimum samples per leaf")
    p.set_defaults(func=cmd_train_tree)

    p = sub.add_parser("report", help="write tables and figures")
    _add_log_opts(p)
    _add_tuning_opts(p)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="line-delimited JSON decision service")
    p.add_argument("--train-log", dest="train_log", required=True, help="log to fit on")
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.add_argument("--config", help="pipeline config JSON")
    _add_tuning_opts(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RiskCoupleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
