"""Logistic-regression end model trained on (possibly soft) pseudolabels.

Deterministic full-batch gradient descent on mean cross-entropy plus an L2
penalty (l2/2)*||w||^2 on the weights (not the bias). Soft targets in [0, 1]
are used directly as target probabilities, so training on {0, 1} targets
coincides exactly with hard-label training. Features are standardized
per column inside training (constant columns skipped); the standardization is
stored in the model and replayed at prediction time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (DataError, DimensionMismatch, FeatureMatrix, LabelVector,
                   NonFiniteLoss, ScoreVector, TooFewRows, sigmoid)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.5
    l2: float = 1e-4
    max_iters: int = 5000
    tol: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    standardize_mean: np.ndarray
    standardize_std: np.ndarray
    training_meta: dict

    def to_json(self) -> dict:
        return {"w": self.weights.tolist(), "b": self.bias,
                "standardize": {"mean": self.standardize_mean.tolist(),
                                "std": self.standardize_std.tolist()}}


def _as_targets(targets, n: int) -> np.ndarray:
    if isinstance(targets, ScoreVector):
        t = np.array(targets.scores)
    elif isinstance(targets, LabelVector):
        t = (targets.labels.astype(np.float64) + 1.0) / 2.0
    else:
        t = np.asarray(targets, dtype=np.float64)
        if t.min(initial=0.0) < 0.0 or t.max(initial=0.0) > 1.0:
            raise DataError("targets must lie in [0, 1]")
    if t.shape != (n,):
        raise DimensionMismatch("targets length does not match features")
    return t


def loss_and_grad(w: np.ndarray, b: float, x: np.ndarray, targets: np.ndarray,
                  l2: float):
    """Mean cross-entropy with soft targets plus (l2/2)||w||^2, and its gradient.

    Cross-entropy per row is softplus(z) - t*z with z = x.w + b, which is
    stable for large |z|.
    """
    z = x @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - targets * z) + 0.5 * l2 * (w @ w))
    resid = sigmoid(z) - targets
    grad_w = x.T @ resid / x.shape[0] + l2 * w
    grad_b = float(resid.mean())
    return loss, grad_w, grad_b


def train_logreg(x: FeatureMatrix, targets, config: TrainConfig = None) -> LogisticModel:
    """Fit by full-batch descent with halving of the step on loss increase.

    The halved step is kept for subsequent iterations, so the loss sequence is
    non-increasing. Stops when the sup norm of the gradient drops below tol or
    at max_iters.
    """
    cfg = config or TrainConfig()
    if x.n < 2:
        raise TooFewRows("training needs at least 2 rows")
    t = _as_targets(targets, x.n)

    mean = x.values.mean(axis=0)
    std = x.values.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    xs = (x.values - mean) / std

    w = np.zeros(x.d)
    b = 0.0
    lr = cfg.lr
    loss, grad_w, grad_b = loss_and_grad(w, b, xs, t, cfg.l2)
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        if not np.isfinite(loss):
            raise NonFiniteLoss("training loss diverged; lower the learning rate")
        if max(np.abs(grad_w).max(initial=0.0), abs(grad_b)) < cfg.tol:
            iters -= 1
            break
        while True:
            w_new = w - lr * grad_w
            b_new = b - lr * grad_b
            loss_new, gw_new, gb_new = loss_and_grad(w_new, b_new, xs, t, cfg.l2)
            if np.isfinite(loss_new) and loss_new <= loss:
                break
            lr /= 2.0
            if lr < 1e-12:
                raise NonFiniteLoss("step size underflowed while backtracking")
        w, b, loss, grad_w, grad_b = w_new, b_new, loss_new, gw_new, gb_new
    return LogisticModel(weights=w, bias=float(b), standardize_mean=mean,
                         standardize_std=std,
                         training_meta={"iterations": iters, "final_loss": loss,
                                        "seed": cfg.seed})


def predict_logreg(model: LogisticModel, x: FeatureMatrix) -> ScoreVector:
    """sigmoid(x.w + b) on standardized rows."""
    if x.d != model.weights.shape[0]:
        raise DimensionMismatch(f"model is {model.weights.shape[0]}-d, features are {x.d}-d")
    xs = (x.values - model.standardize_mean) / model.standardize_std
    return ScoreVector(sigmoid(xs @ model.weights + model.bias))
