"""Latent accuracy estimation from vote agreement and naive-Bayes aggregation.

Accuracies live on the correlation scale a_j = E[lambda_j * Y] in [-1, 1].
Under conditional independence of the votes given Y, pairwise second moments
factor as E[lambda_i * lambda_j] = a_i * a_j, so for any triple (i, j, k)

    |a_i| = sqrt(E[l_i l_j] * E[l_i l_k] / E[l_j l_k]).

With more than three sources each LF gets one such estimate per pair of
partners; we average over all usable triples (fixed enumeration order, so the
reduction is bit-reproducible). Signs are resolved against the majority vote.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (DegenerateMoments, ScoreVector, LabelVector, TooFewLFs,
                   WeakLabelMatrix, sigmoid)

# Clamp on the correlation scale: estimates live in [DELTA, 1 - DELTA] so the
# implied log-odds weights stay finite.
DELTA = 1e-3
# Triples whose denominator moment is below this floor are skipped.
DENOM_FLOOR = 1e-4


@dataclass(frozen=True)
class AccuracyEstimate:
    """Per-LF accuracy estimates on the correlation scale.

    clamp_flags marks estimates that hit the numerical clamp, moment_flags
    marks LFs for which some triple had a negative moment-product ratio
    (sampling noise), tie_flags marks LFs whose sign defaulted to + because
    their majority-vote correlation was exactly zero, degenerate_flags marks
    LFs with no usable triple (only produced under strict=False).
    """

    per_lf: np.ndarray
    clamp_flags: np.ndarray
    moment_flags: np.ndarray
    degenerate_flags: np.ndarray
    tie_flags: np.ndarray = None
    signed: bool = False

    @property
    def m(self) -> int:
        return self.per_lf.shape[0]


@dataclass(frozen=True)
class LabelModelParams:
    """Per-LF log-odds weights plus a class-prior logit."""

    weights: np.ndarray
    class_prior_logit: float


def pairwise_moments(weak: WeakLabelMatrix) -> np.ndarray:
    """Empirical second-moment matrix E_hat[lambda_i * lambda_j], m x m."""
    v = weak.votes.astype(np.float64)
    return (v.T @ v) / weak.n


def triplet_magnitudes_from_moments(moments: np.ndarray, *, strict: bool = True):
    """Accuracy magnitudes from a pairwise moment matrix.

    Returns (magnitudes, moment_flags, degenerate_flags). Magnitudes are the
    raw triple averages, before clamping. Negative product ratios (possible
    under sampling noise) are handled by taking absolute moments; the affected
    LF is flagged.
    """
    moments = np.asarray(moments, dtype=np.float64)
    m = moments.shape[0]
    if m < 3:
        raise TooFewLFs(f"triplet estimation needs m >= 3 labeling functions, got {m}")
    absm = np.abs(moments)
    sgn = np.sign(moments)
    mags = np.zeros(m)
    neg_flags = np.zeros(m, dtype=bool)
    degenerate = np.zeros(m, dtype=bool)
    for i in range(m):
        others = np.concatenate([np.arange(i), np.arange(i + 1, m)])
        jj, kk = np.triu_indices(others.size, k=1)
        j, k = others[jj], others[kk]
        usable = absm[j, k] >= DENOM_FLOOR
        if not usable.any():
            if strict:
                raise DegenerateMoments(
                    f"all triples for LF {i} have |E[l_j l_k]| below {DENOM_FLOOR}")
            degenerate[i] = True
            mags[i] = DELTA
            continue
        j, k = j[usable], k[usable]
        mags[i] = np.mean(np.sqrt(absm[i, j] * absm[i, k] / absm[j, k]))
        neg_flags[i] = bool((sgn[i, j] * sgn[i, k] * sgn[j, k] < 0).any())
    return mags, neg_flags, degenerate


def triplet_estimate(weak: WeakLabelMatrix, *, strict: bool = True) -> AccuracyEstimate:
    """Estimate accuracy magnitudes (signs unresolved) by the triplet method."""
    mags, neg_flags, degenerate = triplet_magnitudes_from_moments(
        pairwise_moments(weak), strict=strict)
    clamped = (mags < DELTA) | (mags > 1.0 - DELTA)
    clamped &= ~degenerate
    return AccuracyEstimate(per_lf=np.clip(mags, DELTA, 1.0 - DELTA),
                            clamp_flags=clamped,
                            moment_flags=neg_flags,
                            degenerate_flags=degenerate,
                            signed=False)


def majority_vote(weak: WeakLabelMatrix) -> LabelVector:
    """Sign of the unweighted row sum; ties go to +1."""
    s = weak.votes.astype(np.int64).sum(axis=1)
    return LabelVector(np.where(s >= 0, 1, -1))


def resolve_signs(magnitudes: AccuracyEstimate, weak: WeakLabelMatrix) -> AccuracyEstimate:
    """Attach signs to triplet magnitudes.

    Each LF gets the sign of its agreement rate with the unweighted majority
    vote (exactly zero agreement defaults to + and is flagged). If the mean
    signed accuracy comes out negative all signs are flipped: the design
    assumes a majority of LFs beat random guessing.
    """
    mv = majority_vote(weak).labels.astype(np.float64)
    agree = (weak.votes.astype(np.float64) * mv[:, None]).mean(axis=0)
    ties = agree == 0.0
    signs = np.where(agree >= 0.0, 1.0, -1.0)
    signed = signs * magnitudes.per_lf
    if signed.mean() < 0.0:
        signed = -signed
    return AccuracyEstimate(per_lf=signed,
                            clamp_flags=magnitudes.clamp_flags,
                            moment_flags=magnitudes.moment_flags,
                            degenerate_flags=magnitudes.degenerate_flags,
                            tie_flags=ties,
                            signed=True)


def fit_label_model(acc: AccuracyEstimate, class_prior: float = 0.5, *,
                    estimate_prior: bool = False,
                    weak: WeakLabelMatrix = None) -> LabelModelParams:
    """Naive-Bayes weights from signed accuracies.

    weight_j = log((1 + a_j) / (1 - a_j)), the log-odds of LF j being right.
    With `estimate_prior` the class prior is re-estimated in one refinement
    pass as the weighted-vote positive rate (requires `weak`).
    """
    a = acc.per_lf
    weights = np.log1p(a) - np.log1p(-a)
    prior = float(class_prior)
    if not 0.0 < prior < 1.0:
        raise ValueError("class prior must lie strictly inside (0, 1)")
    params = LabelModelParams(weights=weights,
                              class_prior_logit=float(np.log(prior / (1.0 - prior))))
    if estimate_prior:
        if weak is None:
            raise ValueError("estimate_prior requires the weak label matrix")
        labels = predict_labels(predict_proba(params, weak))
        rate = float(np.clip((labels.labels == 1).mean(), DELTA, 1.0 - DELTA))
        params = LabelModelParams(weights=weights,
                                  class_prior_logit=float(np.log(rate / (1.0 - rate))))
    return params


def predict_proba(params: LabelModelParams, weak: WeakLabelMatrix) -> ScoreVector:
    """P(Y = +1 | votes) under the conditionally independent vote model."""
    logits = params.class_prior_logit + weak.votes.astype(np.float64) @ params.weights
    return ScoreVector(sigmoid(logits))


def predict_labels(scores: ScoreVector) -> LabelVector:
    """Threshold at 0.5; ties go to +1."""
    return LabelVector(np.where(scores.scores >= 0.5, 1, -1))


def accuracies_to_csv(estimates: dict, lf_names: tuple) -> str:
    """CSV export `lf,group,a_hat,clamped`; group keys are "all", "0", "1"."""
    lines = ["lf,group,a_hat,clamped"]
    for group, est in estimates.items():
        for j, name in enumerate(lf_names):
            lines.append(f"{name},{group},{format(est.per_lf[j], '.17g')},"
                         f"{int(bool(est.clamp_flags[j]))}")
    return "\n".join(lines) + "\n"
