"""Batch entry point: dataset synthesis, pipeline runs, sweeps, diagnostics.

Exit codes: 0 success, 1 usage, 2 data, 3 numerical. A command either writes
all of its outputs or none (partial files are removed on failure). All
randomness flows from --seed; repeated invocations with identical arguments
produce byte-identical files. WSFAIR_THREADS caps sweep parallelism (absent
means single-threaded); it never changes results, only wall time.
"""

from __future__ import annotations

import argparse
import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core import (DataError, GroupAssignment, LabelVector,
                   NumericalError, WeakLabelMatrix, feature_csv_text, format_real,
                   label_csv_text, load_feature_csv, load_label_csv, load_weak_csv,
                   weak_csv_text)
from . import endmodel as em
from . import labelmodel as lm
from . import metrics as mx
from . import sbm
from . import synth
from .transport import SINKHORN_MAX_POINTS

SPEC_VERSION = "1"

METHODS = ("baseline", "sbm-none", "sbm-linear", "sbm-sinkhorn")
_OT_OF_METHOD = {"baseline": "none", "sbm-none": "none",
                 "sbm-linear": "linear", "sbm-sinkhorn": "sinkhorn"}


class BadArgs(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise BadArgs(message)


def _threads() -> int:
    raw = os.environ.get("WSFAIR_THREADS")
    if raw is None:
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise BadArgs(f"WSFAIR_THREADS must be an integer, got {raw!r}")
    if val < 1:
        raise BadArgs("WSFAIR_THREADS must be >= 1")
    return val


class _Outputs:
    """Tracks written files so a failing command leaves nothing behind."""

    def __init__(self):
        self.paths = []

    def write(self, path, text: str):
        path = Path(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.paths.append(path)

    def cleanup(self):
        for p in self.paths:
            try:
                p.unlink()
            except OSError:
                pass


def _parse_seed_range(text: str):
    """`k..k+r` inclusive, e.g. `0..9`."""
    try:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise BadArgs(f"--seeds expects k..k+r, got {text!r}")
    if hi < lo:
        raise BadArgs("--seeds range is empty")
    return list(range(lo, hi + 1))


def _parse_grid(text: str):
    try:
        return [int(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise BadArgs(f"--grid expects comma-separated integers, got {text!r}")


def _sbm_config(args) -> sbm.SbmConfig:
    return sbm.SbmConfig(epsilon=args.epsilon, ot_kind=_OT_OF_METHOD[args.method],
                         eta=args.eta, knn_k=args.knn_k, seed=args.seed,
                         sinkhorn_max_points=args.sinkhorn_max_points)


def _report_dict(pred: LabelVector, truth, groups: GroupAssignment) -> dict:
    """FairnessReport JSON; metrics needing truth or two groups become null."""
    n0 = int((groups.group_of == 0).sum())
    n1 = int((groups.group_of == 1).sum())
    out = {"accuracy": None, "f1": None, "dp_gap": None, "eo_gap": None,
           "n0": n0, "n1": n1}
    if truth is not None:
        acc, f1 = mx.accuracy_f1(pred, truth)
        out["accuracy"], out["f1"] = acc, f1
    if n0 and n1:
        out["dp_gap"] = mx.dp_gap(pred, groups)
        if truth is not None:
            out["eo_gap"] = mx.eo_gap(pred, truth, groups)
    return out


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args, out: _Outputs) -> int:
    outdir = Path(args.outdir)
    if args.experiment in ("lfcount", "shift") and args.m < 3:
        raise BadArgs("--m must be at least 3 for triplet estimation")
    if args.n < 1:
        raise BadArgs("--n must be positive")
    if args.experiment == "gaussian-pair":
        feats, groups, truth, weak, meta = synth.gen_gaussian_pair_dataset(args.n, args.seed)
    elif args.experiment == "lfcount":
        feats, groups, truth, weak, meta = synth.gen_lfcount_dataset(args.n, args.m,
                                                                     args.seed)
    else:
        feats, groups, truth, weak, meta = synth.gen_shift_dataset(
            args.n, args.seed, theta=args.theta, shift=args.shift, m=args.m)
    out.write(outdir / "features.csv", feature_csv_text(feats, groups))
    out.write(outdir / "weak.csv", weak_csv_text(weak, feats.row_ids))
    out.write(outdir / "labels.csv", label_csv_text(truth, feats.row_ids))
    out.write(outdir / "specs.json", json.dumps(meta.to_json(), indent=2) + "\n")
    return 0


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _per_lf_csv(weak_pre: WeakLabelMatrix, weak_post: WeakLabelMatrix,
                truth: LabelVector, groups: GroupAssignment) -> str:
    lines = ["lf,group,acc_pre,acc_post"]
    for g in (0, 1):
        rows = groups.indices(g)
        if rows.size == 0:
            continue
        t = truth.labels[rows]
        for j, name in enumerate(weak_pre.lf_names):
            pre = float((weak_pre.votes[rows, j] == t).mean())
            post = float((weak_post.votes[rows, j] == t).mean())
            lines.append(f"{name},{g},{format_real(pre)},{format_real(post)}")
    return "\n".join(lines) + "\n"


def cmd_run(args, out: _Outputs) -> int:
    feats, groups = load_feature_csv(args.features)
    weak = load_weak_csv(args.weak, feats.row_ids)
    truth = load_label_csv(args.labels, feats.row_ids) if args.labels else None

    cfg = _sbm_config(args)
    result = sbm.run_pipeline(feats, groups, weak, cfg,
                              with_sbm=args.method != "baseline",
                              class_prior=args.class_prior)

    train_targets = result.labels if args.hard_labels else result.scores
    model = em.train_logreg(feats, train_targets,
                            em.TrainConfig(lr=args.lr, l2=args.l2,
                                           max_iters=args.max_iters, tol=args.tol,
                                           seed=args.seed))
    end_scores = em.predict_logreg(model, feats)
    end_labels = lm.predict_labels(end_scores)

    thresholds, post_report = None, None
    if args.postprocess == "dp-threshold":
        thresholds, post_pred = mx.dp_threshold(end_scores, groups, result.labels,
                                                grid=args.grid)
        post_report = _report_dict(post_pred, truth, groups)

    direct_report = None
    if args.direct_lf_eval:
        col = LabelVector(result.weak_used.votes[:, args.lf_index])
        direct_report = _report_dict(col, truth, groups)

    report = {
        "spec_version": SPEC_VERSION,
        "config": {"method": args.method, "epsilon": args.epsilon, "eta": args.eta,
                   "knn_k": args.knn_k, "seed": args.seed,
                   "sinkhorn_max_points": args.sinkhorn_max_points,
                   "postprocess": args.postprocess, "grid": args.grid,
                   "class_prior": args.class_prior,
                   "hard_labels": bool(args.hard_labels),
                   "direct_lf_eval": bool(args.direct_lf_eval),
                   "lf_index": args.lf_index,
                   "endmodel": {"lr": args.lr, "l2": args.l2,
                                "max_iters": args.max_iters, "tol": args.tol}},
        "label_model": _report_dict(result.labels, truth, groups),
        "end_model": _report_dict(end_labels, truth, groups),
        "end_model_postprocessed": post_report,
        "direct_lf": direct_report,
        "thresholds": list(thresholds) if thresholds else None,
        "sbm_audit": result.audit.to_json() if result.audit else None,
    }
    outdir = Path(args.outdir)
    out.write(outdir / "report.json", json.dumps(report, indent=2) + "\n")
    if truth is not None:
        out.write(outdir / "per_lf.csv", _per_lf_csv(weak, result.weak_used, truth, groups))
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

_SWEEP_METRICS = ("accuracy", "f1", "dp_gap", "eo_gap")


def _direct_lf_metrics(weak_used: WeakLabelMatrix, truth: LabelVector,
                       groups: GroupAssignment, lf_index) -> dict:
    """Metrics of LF columns evaluated directly; None index averages all LFs."""
    cols = range(weak_used.m) if lf_index is None else [lf_index]
    reports = [mx.fairness_report(LabelVector(weak_used.votes[:, j]), truth, groups)
               for j in cols]
    out = {}
    for key in _SWEEP_METRICS:
        vals = [getattr(r, key) for r in reports]
        vals = [v for v in vals if v is not None]
        out[key] = float(np.mean(vals)) if vals else None
    return out


def _sweep_cell(experiment: str, x: int, seed: int, method: str, args) -> dict:
    """One (grid value, seed, method) evaluation."""
    if experiment == "shift":
        (_, acc), = synth.shift_accuracy_sweep(args.theta, [x], args.n, seed)
        return {"accuracy": acc, "f1": None, "dp_gap": None, "eo_gap": None}
    if experiment == "samples":
        feats, groups, truth, weak, _ = synth.gen_gaussian_pair_dataset(x, seed)
        lf_index = 0
    else:
        feats, groups, truth, weak, _ = synth.gen_lfcount_dataset(args.n, x, seed)
        lf_index = None
    cfg = sbm.SbmConfig(epsilon=args.epsilon, ot_kind=_OT_OF_METHOD[method],
                        eta=args.eta, knn_k=args.knn_k, seed=seed,
                        sinkhorn_max_points=args.sinkhorn_max_points)
    if args.eval == "direct-lf":
        used = weak
        if method != "baseline":
            used, _ = sbm.run_sbm(feats, groups, weak, cfg)
        return _direct_lf_metrics(used, truth, groups, lf_index)
    result = sbm.run_pipeline(feats, groups, weak, cfg,
                              with_sbm=method != "baseline")
    rep = mx.fairness_report(result.labels, truth, groups)
    return {k: getattr(rep, k) for k in _SWEEP_METRICS}


def cmd_sweep(args, out: _Outputs) -> int:
    seeds = _parse_seed_range(args.seeds)
    grid = _parse_grid(args.grid)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.experiment == "shift":
        methods = ["lf"]
    for m in methods:
        if args.experiment != "shift" and m not in METHODS:
            raise BadArgs(f"unknown method {m!r}")

    tasks = [(x, seed, method) for x in grid for seed in seeds for method in methods]
    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda t: _sweep_cell(args.experiment, t[0], t[1], t[2], args), tasks))
    else:
        results = [_sweep_cell(args.experiment, x, seed, method, args)
                   for x, seed, method in tasks]
    cells = {t: r for t, r in zip(tasks, results)}

    lines = ["x,method,metric,mean,sd,lo,hi"]
    per_seed_lines = ["x,seed,method,metric,value"]
    for x in grid:
        for method in methods:
            for metric in _SWEEP_METRICS:
                vals = []
                for seed in seeds:
                    v = cells[(x, seed, method)][metric]
                    if v is None:
                        continue
                    vals.append(v)
                    per_seed_lines.append(
                        f"{x},{seed},{method},{metric},{format_real(v)}")
                if not vals:
                    continue
                mean = float(np.mean(vals))
                sd = float(np.std(vals))
                lines.append(f"{x},{method},{metric},{format_real(mean)},"
                             f"{format_real(sd)},{format_real(mean - 1.96 * sd)},"
                             f"{format_real(mean + 1.96 * sd)}")
    out.write(Path(args.out), "\n".join(lines) + "\n")
    if args.per_seed_out:
        out.write(Path(args.per_seed_out), "\n".join(per_seed_lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# center-scan / estimate
# ---------------------------------------------------------------------------

def cmd_center_scan(args, out: _Outputs) -> int:
    feats, groups = load_feature_csv(args.features)
    weak = load_weak_csv(args.weak, feats.row_ids)
    truth = load_label_csv(args.labels, feats.row_ids)
    if not 0 <= args.lf < weak.m:
        raise BadArgs(f"--lf must index one of {weak.m} LFs")
    correct = weak.votes[:, args.lf] == truth.labels
    scan = mx.center_scan(feats, correct, groups, seed=args.seed)
    out.write(Path(args.out), scan.to_csv())
    return 0


def cmd_estimate(args, out: _Outputs) -> int:
    feats, groups = load_feature_csv(args.features)
    weak = load_weak_csv(args.weak, feats.row_ids)
    ests = {"all": lm.resolve_signs(lm.triplet_estimate(weak), weak)}
    if groups.indices(0).size and groups.indices(1).size:
        from .core import split_by_group
        sp = split_by_group(feats, groups, weak)
        est0, est1 = sbm.group_accuracies(sp.w0, sp.w1)
        ests["0"], ests["1"] = est0, est1
    out.write(Path(args.out), lm.accuracies_to_csv(ests, weak.lf_names))
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_pipeline_args(p):
    p.add_argument("--method", choices=METHODS, default="baseline")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--knn-k", dest="knn_k", type=int, default=1)
    p.add_argument("--sinkhorn-max-points", dest="sinkhorn_max_points", type=int,
                   default=SINKHORN_MAX_POINTS)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="wsfair")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic datasets as CSV")
    p.add_argument("--experiment", choices=("gaussian-pair", "lfcount", "shift"),
                   required=True)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)

    p = sub.add_parser("run", help="run the pipeline on CSV inputs")
    p.add_argument("--features", required=True)
    p.add_argument("--weak", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--outdir", required=True)
    _add_pipeline_args(p)
    p.add_argument("--postprocess", choices=("none", "dp-threshold"), default="none")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--class-prior", dest="class_prior", type=float, default=0.5)
    p.add_argument("--hard-labels", dest="hard_labels", action="store_true")
    p.add_argument("--direct-lf-eval", dest="direct_lf_eval", action="store_true")
    p.add_argument("--lf-index", dest="lf_index", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=5000)
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("sweep", help="grid sweeps over seeds with CI bands")
    p.add_argument("--experiment", choices=("samples", "lfs", "shift"), required=True)
    p.add_argument("--methods", default="baseline,sbm-linear")
    p.add_argument("--grid", required=True)
    p.add_argument("--seeds", default="0..9")
    p.add_argument("--out", required=True)
    p.add_argument("--per-seed-out", dest="per_seed_out", default=None)
    p.add_argument("--eval", choices=("label-model", "direct-lf"),
                   default="label-model")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--knn-k", dest="knn_k", type=int, default=1)
    p.add_argument("--sinkhorn-max-points", dest="sinkhorn_max_points", type=int,
                   default=SINKHORN_MAX_POINTS)

    p = sub.add_parser("center-scan", help="locate an LF's high-accuracy region")
    p.add_argument("--features", required=True)
    p.add_argument("--weak", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--lf", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="export triplet accuracy estimates")
    p.add_argument("--features", required=True)
    p.add_argument("--weak", required=True)
    p.add_argument("--out", required=True)
    return parser


_COMMANDS = {"synth": cmd_synth, "run": cmd_run, "sweep": cmd_sweep,
             "center-scan": cmd_center_scan, "estimate": cmd_estimate}


def main(argv=None) -> int:
    out = _Outputs()
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args, out)
    except BadArgs as exc:
        print(f"usage error: {exc}")
        out.cleanup()
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}")
        out.cleanup()
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}")
        out.cleanup()
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
