"""Source bias mitigation: detect per-group LF accuracy gaps and rewrite votes.

For every labeling function the accuracy is estimated separately in each
group. When one group's estimate beats the other's by at least the threshold
epsilon, the disadvantaged group's feature cloud is mapped onto the favored
group's and that LF's votes are borrowed from nearest neighbors there. The
fitted map depends only on the features, so it is fitted once per direction
and shared by every LF rewritten in that direction (results are identical to
per-LF fits). A per-LF estimation or transport failure downgrades just that
LF to direction "none"; the pipeline continues.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (EmptyGroup, FeatureMatrix, GroupAssignment, LabelVector,
                   NumericalError, ScoreVector, WeakLabelMatrix, split_by_group,
                   validate_dataset)
from . import labelmodel as lm
from .transport import SINKHORN_MAX_POINTS, apply_map, fit_map, knn_borrow

DIRECTION_NONE = "none"
DIRECTION_0_TO_1 = "0->1"
DIRECTION_1_TO_0 = "1->0"

OT_KINDS = ("none", "linear", "sinkhorn")


@dataclass(frozen=True)
class SbmConfig:
    epsilon: float = 0.05
    ot_kind: str = "linear"
    eta: float = 1.0
    knn_k: int = 1
    seed: int = 0
    sinkhorn_max_points: int = SINKHORN_MAX_POINTS

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be >= 0")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        if self.ot_kind not in OT_KINDS:
            raise ValueError(f"ot_kind must be one of {OT_KINDS}")


@dataclass(frozen=True)
class SbmLfDecision:
    lf: str
    a0: float
    a1: float
    direction: str
    rows_rewritten: int
    map_id: str = None
    error: str = None


@dataclass(frozen=True)
class SbmAudit:
    """Per-LF record of every rewrite decision."""

    per_lf: tuple

    def to_json(self) -> list:
        return [{"lf": d.lf, "a0": d.a0, "a1": d.a1, "direction": d.direction,
                 "rows_rewritten": d.rows_rewritten, "map_id": d.map_id,
                 "error": d.error} for d in self.per_lf]

    def rewritten_lfs(self) -> set:
        return {d.lf for d in self.per_lf if d.direction != DIRECTION_NONE}


def group_accuracies(weak0: WeakLabelMatrix, weak1: WeakLabelMatrix, *,
                     strict: bool = True):
    """Signed triplet estimates computed independently per group."""
    if weak0.n == 0 or weak1.n == 0:
        raise EmptyGroup("both groups must be non-empty")
    est0 = lm.resolve_signs(lm.triplet_estimate(weak0, strict=strict), weak0)
    est1 = lm.resolve_signs(lm.triplet_estimate(weak1, strict=strict), weak1)
    return est0, est1


def run_sbm(features: FeatureMatrix, groups: GroupAssignment, weak: WeakLabelMatrix,
            cfg: SbmConfig):
    """Algorithmic core: per-LF gap test, directional transport, vote rewrite.

    Returns (modified weak labels, audit). Only vote entries change; features,
    groups and row order pass through untouched, and columns whose direction
    is "none" are bit-identical to the input.
    """
    validate_dataset(features, groups, weak, require_two_groups=True)
    sp = split_by_group(features, groups, weak)
    est0, est1 = group_accuracies(sp.w0, sp.w1, strict=False)
    a0, a1 = est0.per_lf, est1.per_lf
    bad = est0.degenerate_flags | est1.degenerate_flags

    directions = []
    errors = [None] * weak.m
    for j in range(weak.m):
        if bad[j]:
            directions.append(DIRECTION_NONE)
            errors[j] = "degenerate moments"
        elif a1[j] >= a0[j] + cfg.epsilon:
            directions.append(DIRECTION_0_TO_1)
        elif a0[j] >= a1[j] + cfg.epsilon:
            directions.append(DIRECTION_1_TO_0)
        else:
            directions.append(DIRECTION_NONE)

    new_votes = np.array(weak.votes, copy=True)
    map_ids = [None] * weak.m
    for direction, x_src, x_dst, w_dst, src_rows in (
            (DIRECTION_0_TO_1, sp.x0, sp.x1, sp.w1, sp.idx0),
            (DIRECTION_1_TO_0, sp.x1, sp.x0, sp.w0, sp.idx1)):
        lfs = [j for j in range(weak.m) if directions[j] == direction]
        if not lfs:
            continue
        map_id = f"map_{direction.replace('->', 'to')}_{cfg.ot_kind}"
        try:
            tmap = fit_map(x_src, x_dst, cfg.ot_kind, eta=cfg.eta, seed=cfg.seed,
                           max_points=cfg.sinkhorn_max_points)
            mapped = apply_map(tmap, x_src)
            dst_vals, dst_votes = x_dst.values, w_dst.votes
            if tmap.kind == "sinkhorn-barycentric" and tmap.dst_indices.size != x_dst.n:
                dst_vals = dst_vals[tmap.dst_indices]
                dst_votes = dst_votes[tmap.dst_indices]
            borrowed = knn_borrow(mapped, dst_vals, dst_votes[:, lfs], cfg.knn_k)
        except NumericalError as exc:
            for j in lfs:
                directions[j] = DIRECTION_NONE
                errors[j] = str(exc)
            continue
        for pos, j in enumerate(lfs):
            new_votes[src_rows, j] = borrowed[:, pos]
            map_ids[j] = map_id

    decisions = []
    for j in range(weak.m):
        changed = int((new_votes[:, j] != weak.votes[:, j]).sum())
        decisions.append(SbmLfDecision(lf=weak.lf_names[j], a0=float(a0[j]),
                                       a1=float(a1[j]), direction=directions[j],
                                       rows_rewritten=changed, map_id=map_ids[j],
                                       error=errors[j]))
    return WeakLabelMatrix(new_votes, weak.lf_names), SbmAudit(tuple(decisions))


@dataclass(frozen=True)
class PipelineResult:
    scores: ScoreVector
    labels: LabelVector
    audit: SbmAudit = None
    weak_used: WeakLabelMatrix = None


def run_pipeline(features: FeatureMatrix, groups: GroupAssignment,
                 weak: WeakLabelMatrix, cfg: SbmConfig, with_sbm: bool = True, *,
                 class_prior: float = 0.5, estimate_prior: bool = False) -> PipelineResult:
    """Optionally run SBM, then fit the label model and produce pseudolabels."""
    validate_dataset(features, groups, weak)
    audit = None
    used = weak
    if with_sbm:
        used, audit = run_sbm(features, groups, weak, cfg)
    est = lm.resolve_signs(lm.triplet_estimate(used), used)
    params = lm.fit_label_model(est, class_prior, estimate_prior=estimate_prior, weak=used)
    scores = lm.predict_proba(params, used)
    return PipelineResult(scores=scores, labels=lm.predict_labels(scores),
                          audit=audit, weak_used=used)
