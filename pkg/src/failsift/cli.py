"""failsift command line: end-to-end failure mode analysis pipelines.

Subcommands: ingest, synth, anomaly, cluster, eval, run, bench. All
randomness flows from --seed (default 0), so identical invocations on
identical data produce identical report files; only timing values vary.
A JSON config file (--config) supplies defaults that explicit flags
override.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .anomaly import (
    AnomalyThresholds,
    build_anomaly_matrix,
    fold_backbone,
    save_anomaly_model,
    train_vmm,
)
from .campaign import (
    Campaign,
    load_campaign,
    resolve_dataset_path,
    save_campaign,
    truth_labels_for,
    validate_campaign,
)
from .dec import DeepEmbeddedClustering
from .errors import FailsiftError
from .evaluate import (
    distribution_report,
    map_clusters,
    purity,
    write_distribution_csv,
    write_distribution_svg,
    write_json_report,
    write_purity_csv,
)
from .kmedoids import KMedoids
from .synth import SynthSpec, generate_campaign
from .vectorize import build_alphabet, build_feature_matrix, write_feature_csv


class StageError(FailsiftError):
    def __init__(self, stage: str, original: Exception):
        self.stage = stage
        self.original = original
        super().__init__(f"{stage}: {original}")


class _Timer:
    def __init__(self):
        self.stages: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def stage(self, name: str):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.start = time.perf_counter()
                return self

            def __exit__(self, exc_type, exc, tb):
                timer.stages[name] = timer.stages.get(name, 0.0) + (
                    time.perf_counter() - self.start
                )
                if exc is not None and not isinstance(exc, StageError):
                    raise StageError(name, exc) from exc
                return False

        return _Ctx()

    def total(self) -> float:
        return time.perf_counter() - self._t0


def _load_dataset(data: str) -> Campaign:
    path = resolve_dataset_path(data)
    fmt = "csv-matrix" if path.suffix.lower() == ".csv" else "jsonl"
    return load_campaign(path, format=fmt)


def _effective_k(args, campaign: Campaign) -> int:
    if getattr(args, "k", None):
        return args.k
    if campaign.ground_truth:
        return len(set(campaign.ground_truth.values()))
    raise FailsiftError("--k is required when the dataset has no ground-truth labels")


def _load_weights(path: str | None, column_names) -> list[float] | None:
    if path is None:
        return None
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    if isinstance(raw, list):
        return [float(v) for v in raw]
    if isinstance(raw, dict):
        return [float(raw.get(name, 1.0)) for name in column_names]
    raise FailsiftError("weights file must hold a JSON list or {column: weight} object")


def _representation(campaign: Campaign, args, timer: _Timer):
    alphabet = build_alphabet(campaign.all_traces)
    if args.rep == "seq":
        with timer.stage("vectorize"):
            return build_feature_matrix(campaign, alphabet)
    with timer.stage("anomaly"):
        thresholds = AnomalyThresholds(p_spur=args.p_spur, p_omit=args.p_omit)
        backbone = fold_backbone(campaign.fault_free, order=args.fold_order)
        model = train_vmm(campaign.fault_free, max_order=args.max_order)
        return build_anomaly_matrix(campaign, backbone, model, thresholds, alphabet)


def _cluster(matrix, k: int, args, timer: _Timer):
    """Returns (labels, extras) where extras feed the labels report."""
    if args.cluster == "kmedoids":
        weights = _load_weights(getattr(args, "weights", None), matrix.column_names)
        with timer.stage("cluster"):
            est = KMedoids(
                n_clusters=k,
                metric=args.metric,
                restarts=args.restarts,
                random_state=args.seed,
                feature_weights=weights,
            ).fit(matrix.values)
        extras = {
            "medoid_row_ids": [matrix.row_ids[i] for i in est.medoid_indices_],
            "total_cost": est.inertia_,
            "restarts_run": est.n_restarts_run_,
        }
        return est.labels_, extras, est
    if getattr(args, "weights", None):
        raise FailsiftError("--weights applies to kmedoids only; the encoder learns its own")
    with timer.stage("cluster"):
        est = DeepEmbeddedClustering(
            n_clusters=k,
            bottleneck=args.bottleneck,
            encoder_depth=args.depth,
            update_interval=args.update_interval,
            convergence_threshold=args.tol,
            reconstruction_weight=args.reconstruction_weight,
            learning_rate=args.learning_rate,
            batch_size=args.batch_size,
            pretrain_steps=args.pretrain_steps,
            finetune_steps=args.finetune_steps,
            max_steps=args.max_steps,
            random_state=args.seed,
        ).fit(matrix.values)
    extras = {
        "converged": est.converged_,
        "iteration_cap_reached": est.capped_,
        "final_label_change_fraction": est.history_[-1].label_change_fraction,
    }
    return est.labels_, extras, est


def _config_echo(args, keys) -> dict:
    return {key: getattr(args, key) for key in keys if hasattr(args, key)}


def _write_cluster_outputs(outdir: Path, matrix, labels, extras, est, args, k: int):
    payload = {
        "version": 1,
        "algorithm": args.cluster,
        "k": k,
        "config": _config_echo(
            args,
            (
                "rep",
                "cluster",
                "metric",
                "seed",
                "restarts",
                "p_spur",
                "p_omit",
                "max_order",
                "fold_order",
                "learning_rate",
                "pretrain_steps",
                "finetune_steps",
                "update_interval",
                "tol",
            ),
        ),
        "assignments": {row_id: int(c) for row_id, c in zip(matrix.row_ids, labels)},
        **extras,
    }
    write_json_report(payload, outdir / "labels.json")
    if args.cluster == "dec":
        with open(outdir / "history.csv", "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(
                ["iteration", "kl_loss", "label_change_fraction", "learning_rate"]
            )
            for row in est.history_:
                change = "" if row.label_change_fraction is None else f"{row.label_change_fraction:.6f}"
                writer.writerow([row.step, f"{row.kl_loss:.9f}", change, row.learning_rate])
        np.savetxt(outdir / "centroids.csv", est.cluster_centers_, delimiter=",")


def _write_eval_outputs(outdir: Path, campaign: Campaign, row_ids, labels, timer: _Timer):
    with timer.stage("evaluate"):
        truth = truth_labels_for(campaign, row_ids)
        mapping = map_clusters(labels, truth)
        pur = purity(labels, truth)
        dist = distribution_report(labels, truth, mapping)
    write_json_report(pur.to_dict(), outdir / "purity.json")
    write_purity_csv(pur, outdir / "purity.csv")
    write_json_report(dist.to_dict(), outdir / "distribution.json")
    write_distribution_csv(dist, outdir / "distribution.csv")
    write_distribution_svg(dist, outdir / "distribution.svg")
    return pur


def _write_timing(outdir: Path, timer: _Timer, extra: dict | None = None):
    payload = {"stages": timer.stages, "total_seconds": timer.total()}
    if extra:
        payload.update(extra)
    write_json_report(payload, outdir / "timing.json")


# ---------------------------------------------------------------- commands


def cmd_ingest(args) -> int:
    campaign = _load_dataset(args.data)
    report = validate_campaign(campaign)
    for message in report.errors:
        print(f"error: {message}")
    for message in report.warnings:
        print(f"warning: {message}")
    print(
        f"{campaign.workload_id}: {len(campaign.fault_injected)} fault-injected, "
        f"{len(campaign.fault_free)} fault-free, "
        f"{len(campaign.ground_truth)} labeled"
    )
    if args.out:
        save_campaign(campaign, args.out)
        print(f"wrote {args.out}")
    return 0 if report.ok else 1


def cmd_synth(args) -> int:
    spec = SynthSpec(
        num_modes=args.modes,
        base_trace_length=args.length,
        alphabet_size=args.alphabet,
        mode_signature_length=args.signature,
        noise_rate=args.noise,
        traces_per_mode=args.traces_per_mode,
        fault_free_count=args.fault_free,
        seed=args.seed,
    )
    campaign = generate_campaign(spec)
    save_campaign(campaign, args.out)
    print(
        f"wrote {args.out}: {len(campaign.fault_injected)} fault-injected over "
        f"{args.modes} modes, {len(campaign.fault_free)} fault-free"
    )
    return 0


def cmd_anomaly(args) -> int:
    timer = _Timer()
    with timer.stage("load"):
        campaign = _load_dataset(args.data)
    with timer.stage("anomaly"):
        thresholds = AnomalyThresholds(p_spur=args.p_spur, p_omit=args.p_omit)
        backbone = fold_backbone(campaign.fault_free, order=args.fold_order)
        model = train_vmm(campaign.fault_free, max_order=args.max_order)
        alphabet = build_alphabet(campaign.all_traces)
        matrix = build_anomaly_matrix(campaign, backbone, model, thresholds, alphabet)
    if args.out_matrix:
        write_feature_csv(matrix, args.out_matrix, labels=campaign.ground_truth)
        print(f"wrote {args.out_matrix} ({matrix.n_rows} x {matrix.n_cols})")
    if args.out_model:
        save_anomaly_model(args.out_model, backbone, model, thresholds)
        print(f"wrote {args.out_model}")
    print(f"backbone length {len(backbone)}, alphabet size {alphabet.size}")
    return 0


def _run_pipeline(args, write_reports: bool = True):
    timer = _Timer()
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    with timer.stage("load"):
        campaign = _load_dataset(args.data)
    k = _effective_k(args, campaign)
    matrix = _representation(campaign, args, timer)
    labels, extras, est = _cluster(matrix, k, args, timer)
    _write_cluster_outputs(outdir, matrix, labels, extras, est, args, k)
    pur = None
    if campaign.ground_truth and write_reports:
        pur = _write_eval_outputs(outdir, campaign, matrix.row_ids, labels, timer)
    _write_timing(outdir, timer)
    return campaign, matrix, labels, pur, timer


def cmd_cluster(args) -> int:
    _, matrix, labels, _, _ = _run_pipeline(args, write_reports=False)
    print(f"clustered {matrix.n_rows} experiments into {len(set(labels.tolist()))} clusters")
    print(f"reports in {args.out_dir}")
    return 0


def cmd_run(args) -> int:
    campaign, matrix, labels, pur, _ = _run_pipeline(args)
    if pur is not None:
        print(f"overall purity: {pur.overall:.4f}")
    else:
        print("no ground truth; skipped purity and distribution reports")
    print(f"reports in {args.out_dir}")
    return 0


def cmd_eval(args) -> int:
    timer = _Timer()
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    with timer.stage("load"):
        campaign = _load_dataset(args.data)
        with open(args.labels, encoding="utf-8") as handle:
            payload = json.load(handle)
        assignments = payload["assignments"]
    row_ids = list(assignments.keys())
    labels = [int(assignments[i]) for i in row_ids]
    pur = _write_eval_outputs(outdir, campaign, row_ids, labels, timer)
    _write_timing(outdir, timer)
    print(f"overall purity: {pur.overall:.4f}")
    print(f"reports in {args.out_dir}")
    return 0


def cmd_bench(args) -> int:
    timer = _Timer()
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    with timer.stage("load"):
        campaign = _load_dataset(args.data)
    k = _effective_k(args, campaign)
    matrix = _representation(campaign, args, timer)

    t0 = time.perf_counter()
    with timer.stage("kmedoids"):
        km = KMedoids(
            n_clusters=k, metric=args.metric, restarts=args.restarts, random_state=args.seed
        ).fit(matrix.values)
    kmedoids_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    with timer.stage("dec"):
        dec = DeepEmbeddedClustering(
            n_clusters=k,
            bottleneck=args.bottleneck,
            encoder_depth=args.depth,
            update_interval=args.update_interval,
            convergence_threshold=args.tol,
            learning_rate=args.learning_rate,
            batch_size=args.batch_size,
            pretrain_steps=args.pretrain_steps,
            finetune_steps=args.finetune_steps,
            max_steps=args.max_steps,
            random_state=args.seed,
        ).fit(matrix.values)
    dec_seconds = time.perf_counter() - t0

    extra = {
        "n": matrix.n_rows,
        "d": matrix.n_cols,
        "kmedoids_seconds": kmedoids_seconds,
        "dec_seconds": dec_seconds,
        "overhead_seconds": dec_seconds - kmedoids_seconds,
    }
    if campaign.ground_truth:
        truth = truth_labels_for(campaign, matrix.row_ids)
        extra["kmedoids_purity"] = purity(km.labels_, truth).overall
        extra["dec_purity"] = purity(dec.labels_, truth).overall
    _write_timing(outdir, timer, extra)
    print(
        f"k-medoids {kmedoids_seconds:.2f}s, dec {dec_seconds:.2f}s, "
        f"overhead {extra['overhead_seconds']:.2f}s"
    )
    print(f"timing report in {outdir / 'timing.json'}")
    return 0


# ----------------------------------------------------------------- parser


def _add_rep_options(p: argparse.ArgumentParser):
    p.add_argument("--rep", choices=("seq", "anomaly"), default="seq",
                   help="trace representation: raw counts or anomaly vectors")
    p.add_argument("--max-order", type=int, default=3, help="context model order")
    p.add_argument("--p-spur", type=float, default=0.10,
                   help="count unmatched events below this probability as spurious")
    p.add_argument("--p-omit", type=float, default=0.50,
                   help="count missing events at or above this probability as omitted")
    p.add_argument("--fold-order", choices=("dataset", "length"), default="dataset",
                   help="backbone fold order over fault-free traces")


def _add_cluster_options(p: argparse.ArgumentParser):
    p.add_argument("--cluster", choices=("kmedoids", "dec"), default="kmedoids")
    p.add_argument("--k", type=int, default=None,
                   help="cluster count (default: number of distinct ground-truth labels)")
    p.add_argument("--metric", choices=("l1", "l2"), default="l2")
    p.add_argument("--restarts", type=int, default=30)
    p.add_argument("--weights", default=None,
                   help="JSON feature weights for the k-medoids distance")
    p.add_argument("--depth", type=int, default=2, help="encoder depth (2-4)")
    p.add_argument("--bottleneck", type=int, default=None,
                   help="embedding width (default: the cluster count)")
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--pretrain-steps", type=int, default=5000)
    p.add_argument("--finetune-steps", type=int, default=5000)
    p.add_argument("--update-interval", type=int, default=150)
    p.add_argument("--tol", type=float, default=0.001,
                   help="stop when fewer than this fraction of points change cluster")
    p.add_argument("--reconstruction-weight", type=float, default=0.0)
    p.add_argument("--max-steps", type=int, default=20000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="failsift",
        description="Cluster fault-injection traces into failure modes.",
    )
    parser.add_argument("--version", action="version", version=f"failsift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a dataset, optionally convert to JSONL")
    p.add_argument("data", help="campaign file (.jsonl or .csv) or directory")
    p.add_argument("--out", default=None, help="write canonical JSONL here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic labeled campaign")
    p.add_argument("--out", required=True)
    p.add_argument("--modes", type=int, default=4)
    p.add_argument("--traces-per-mode", type=int, default=40)
    p.add_argument("--fault-free", type=int, default=20)
    p.add_argument("--length", type=int, default=60)
    p.add_argument("--alphabet", type=int, default=12)
    p.add_argument("--signature", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("anomaly", help="build anomaly vectors from fault-free behavior")
    p.add_argument("data")
    _add_rep_options(p)
    p.add_argument("--out-matrix", default=None, help="write the anomaly matrix CSV here")
    p.add_argument("--out-model", default=None, help="persist backbone + context model here")
    p.set_defaults(func=cmd_anomaly, rep="anomaly")

    for name, func, help_text in (
        ("cluster", cmd_cluster, "cluster a campaign, write labels"),
        ("run", cmd_run, "full pipeline: representation, clustering, evaluation"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("data")
        _add_rep_options(p)
        _add_cluster_options(p)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default="failsift-out")
        p.add_argument("--config", default=None, help="JSON file of option defaults")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="evaluate existing labels against ground truth")
    p.add_argument("data")
    p.add_argument("--labels", required=True, help="labels.json from cluster/run")
    p.add_argument("--out-dir", default="failsift-out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time k-medoids vs the deep pipeline on one dataset")
    p.add_argument("data")
    _add_rep_options(p)
    _add_cluster_options(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="failsift-out")
    p.add_argument("--config", default=None, help="JSON file of option defaults")
    p.set_defaults(func=cmd_bench)

    return parser


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, encoding="utf-8") as handle:
        overrides = json.load(handle)
    if not isinstance(overrides, dict):
        raise FailsiftError("config file must hold a JSON object")
    parser.set_defaults(**{str(k).replace("-", "_"): v for k, v in overrides.items()})
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        for sub in action.choices.values():
            sub.set_defaults(**{str(k).replace("-", "_"): v for k, v in overrides.items()})


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except StageError as exc:
        print(f"failsift: {exc}", file=sys.stderr)
        return 2
    except FailsiftError as exc:
        print(f"failsift: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"failsift: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
