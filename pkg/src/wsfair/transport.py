"""Maps that push one group's feature distribution onto the other's.

Two fitted map families plus an identity bypass:

* linear: the closed-form affine map between Gaussian moment pairs,
  A = S_s^{-1/2} (S_s^{1/2} S_t S_s^{1/2})^{1/2} S_s^{-1/2},  b = mu_t - A mu_s,
  which pushes N(mu_s, S_s) exactly onto N(mu_t, S_t).
* sinkhorn-barycentric: entropically regularized coupling between the two
  empirical clouds (uniform marginals), followed by the barycentric projection
  x_i -> sum_j pi~_ij y_j with the row-rescaled plan pi~ = n_src * pi.

After mapping, labels are borrowed from Euclidean nearest neighbors in the
destination cloud. Everything is exact brute force; that is the scalability
boundary of this module and it is fine at desk scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import (DataError, DimensionMismatch, EmptyDestination, FeatureMatrix,
                   NumericalUnderflow, SingularCovariance, TooFewRows, ZeroMatrix,
                   rng_stream)

COV_RIDGE = 1e-6
EIG_FLOOR = 1e-12
MAX_CONDITION = 1e12
SINKHORN_TOL = 1e-10          # internal; stricter than the 1e-9 contract
SINKHORN_MAX_ITERS = 10_000
SINKHORN_MAX_POINTS = 5_000   # per-side fit cap; the plan is quadratic in memory
LOG_DOMAIN_CUTOFF = 700.0     # exp underflow threshold for cost/eta

_SUBSAMPLE_STREAM = 90


# ---------------------------------------------------------------------------
# Symmetric PSD matrix roots via eigendecomposition.
# ---------------------------------------------------------------------------

def matrix_sqrt_psd(mat: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Symmetric PSD square root; eigenvalues are floored before the root."""
    w, q = np.linalg.eigh(np.asarray(mat, dtype=np.float64))
    root = q @ (np.sqrt(np.maximum(w, floor))[:, None] * q.T)
    return (root + root.T) / 2.0


def matrix_inv_sqrt_psd(mat: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    w, q = np.linalg.eigh(np.asarray(mat, dtype=np.float64))
    root = q @ ((1.0 / np.sqrt(np.maximum(w, floor)))[:, None] * q.T)
    return (root + root.T) / 2.0


# ---------------------------------------------------------------------------
# Moments and the closed-form affine map.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianMoments:
    """Mean vector and symmetric PSD covariance of one group's features."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch("covariance shape does not match the mean")
        if np.abs(cov - cov.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(cov).max(initial=0.0)):
            raise DataError("covariance must be symmetric")
        cov = (cov + cov.T) / 2.0
        if np.linalg.eigvalsh(cov).min() < -1e-9:
            raise DataError("covariance must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class TransportMap:
    """A fitted source-to-destination map.

    kind "linear" carries (A, b); kind "sinkhorn-barycentric" carries the
    row-stochastic rescaled coupling plus the destination reference points the
    columns align with (and their indices into the original destination set
    when the fit was subsampled). `converged` is False when Sinkhorn hit the
    iteration cap and returned its best iterate.
    """

    kind: str
    A: np.ndarray = None
    b: np.ndarray = None
    coupling: np.ndarray = None
    dst_reference: np.ndarray = None
    dst_indices: np.ndarray = None
    src_row_ids: tuple = None
    converged: bool = True

    def __post_init__(self):
        if self.kind not in ("identity", "linear", "sinkhorn-barycentric"):
            raise DataError(f"unknown transport map kind {self.kind!r}")
        if self.kind == "linear":
            if self.A is None or self.b is None:
                raise DataError("linear map needs A and b")
            if not (np.isfinite(self.A).all() and np.isfinite(self.b).all()):
                raise DataError("linear map coefficients must be finite")
        if self.kind == "sinkhorn-barycentric":
            if self.coupling is None or self.dst_reference is None:
                raise DataError("sinkhorn map needs a coupling and destination reference")
            rows = self.coupling.sum(axis=1)
            if np.abs(rows - 1.0).max(initial=0.0) > 1e-6:
                raise DataError("rescaled coupling rows must sum to 1 within 1e-6")

    def to_json(self) -> str:
        if self.kind != "linear":
            raise DataError("only linear maps are JSON-serializable")
        return json.dumps({"kind": "linear", "A": self.A.tolist(), "b": self.b.tolist()})


def linear_map_from_json(text: str) -> TransportMap:
    obj = json.loads(text)
    if obj.get("kind") != "linear":
        raise DataError("expected a linear transport map")
    return TransportMap(kind="linear", A=np.array(obj["A"], dtype=np.float64),
                        b=np.array(obj["b"], dtype=np.float64))


def estimate_moments(x: FeatureMatrix) -> GaussianMoments:
    """Sample mean and covariance (denominator n), ridge-stabilized."""
    if x.n < 2:
        raise TooFewRows("moment estimation needs at least 2 rows")
    mean = x.values.mean(axis=0)
    centered = x.values - mean
    cov = (centered.T @ centered) / x.n + COV_RIDGE * np.eye(x.d)
    return GaussianMoments(mean=mean, cov=(cov + cov.T) / 2.0)


def fit_linear_ot(src: GaussianMoments, dst: GaussianMoments) -> TransportMap:
    """Closed-form affine Monge map between two Gaussian moment pairs."""
    for name, mom in (("source", src), ("destination", dst)):
        w = np.linalg.eigvalsh(mom.cov)
        if w.min() <= 0.0 or w.max() / w.min() > MAX_CONDITION:
            raise SingularCovariance(f"{name} covariance condition number exceeds {MAX_CONDITION:g}")
    s_half = matrix_sqrt_psd(src.cov)
    s_inv_half = matrix_inv_sqrt_psd(src.cov)
    mid = matrix_sqrt_psd(s_half @ dst.cov @ s_half)
    a = s_inv_half @ mid @ s_inv_half
    a = (a + a.T) / 2.0
    return TransportMap(kind="linear", A=a, b=dst.mean - a @ src.mean)


def apply_linear(tmap: TransportMap, x: FeatureMatrix) -> FeatureMatrix:
    """Row-wise affine image A x + b; row ids are preserved."""
    if tmap.kind != "linear":
        raise DataError("apply_linear needs a linear map")
    if tmap.A.shape[1] != x.d:
        raise DimensionMismatch(f"map is {tmap.A.shape[1]}-d, features are {x.d}-d")
    return FeatureMatrix(x.values @ tmap.A.T + tmap.b, x.row_ids)


# ---------------------------------------------------------------------------
# Entropic OT.
# ---------------------------------------------------------------------------

def pairwise_cost(a: np.ndarray, b: np.ndarray, cost: str = "sqeuclidean") -> np.ndarray:
    """Dense cost matrix; squared Euclidean by default (Gaussian-Monge theory),
    plain Euclidean behind a flag."""
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    d2 = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    if cost == "sqeuclidean":
        return d2
    if cost == "euclidean":
        return np.sqrt(d2)
    raise DataError(f"unknown cost {cost!r}")


def _logsumexp_rows(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1)
    return zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))


def _sinkhorn_potentials(cost_over_eta: np.ndarray, tol: float, max_iters: int):
    """Return (gn, converged): gn is the destination log-potential g / eta.

    Runs the plain scaling iterations when the kernel cannot underflow and
    falls back to the log-domain recursion otherwise. The source potential is
    implied by one final row update, which makes every coupling row an exact
    softmax over gn - cost/eta.
    """
    n_src, n_dst = cost_over_eta.shape
    loga = -np.log(n_src)
    logb = -np.log(n_dst)
    use_log = cost_over_eta.max(initial=0.0) > LOG_DOMAIN_CUTOFF

    if not use_log:
        k = np.exp(-cost_over_eta)
        a = np.full(n_src, 1.0 / n_src)
        b = np.full(n_dst, 1.0 / n_dst)
        v = np.ones(n_dst)
        for _ in range(max_iters):
            kv = k @ v
            if (kv == 0.0).any():
                use_log = True
                break
            u = a / kv
            ktu = k.T @ u
            if (ktu == 0.0).any():
                use_log = True
                break
            v = b / ktu
            err = np.abs(u * (k @ v) - a).sum()
            if err < tol:
                return np.log(v), True
        if not use_log:
            return np.log(v), False

    fn = np.full(n_src, loga)
    gn = np.full(n_dst, logb)
    for _ in range(max_iters):
        fn = loga - _logsumexp_rows(gn[None, :] - cost_over_eta)
        gn = logb - _logsumexp_rows(fn[None, :] - cost_over_eta.T)
        err = np.abs(np.exp(fn + _logsumexp_rows(gn[None, :] - cost_over_eta))
                     - 1.0 / n_src).sum()
        if err < tol:
            if not np.isfinite(gn).all():
                raise NumericalUnderflow("sinkhorn potentials are not finite")
            return gn, True
    if not np.isfinite(gn).all():
        raise NumericalUnderflow("sinkhorn potentials are not finite")
    return gn, False


def fit_sinkhorn(x_src: FeatureMatrix, x_dst: FeatureMatrix, eta: float = 1.0, *,
                 cost: str = "sqeuclidean", tol: float = SINKHORN_TOL,
                 max_iters: int = SINKHORN_MAX_ITERS,
                 max_points: int = SINKHORN_MAX_POINTS, seed: int = 0) -> TransportMap:
    """Entropic coupling between the two clouds with uniform marginals.

    Sides larger than `max_points` are fit on a seeded uniform subsample; the
    returned coupling still covers every source row, extended through the
    fitted destination potential (the row of an entropic plan is a softmax in
    the potential, so the extension agrees exactly with the converged plan on
    the sampled rows). Rows are rescaled by n_src as in the barycentric
    projection convention, hence row-stochastic.
    """
    if eta <= 0.0:
        raise DataError("eta must be positive")
    if x_src.d != x_dst.d:
        raise DimensionMismatch("source and destination dimensions differ")
    src_vals = x_src.values
    dst_vals, dst_idx = x_dst.values, np.arange(x_dst.n)
    fit_src = src_vals
    if x_src.n > max_points:
        keep = np.sort(rng_stream(seed, _SUBSAMPLE_STREAM, 0).choice(
            x_src.n, size=max_points, replace=False))
        fit_src = src_vals[keep]
    if x_dst.n > max_points:
        dst_idx = np.sort(rng_stream(seed, _SUBSAMPLE_STREAM, 1).choice(
            x_dst.n, size=max_points, replace=False))
        dst_vals = dst_vals[dst_idx]

    cost_fit = pairwise_cost(fit_src, dst_vals, cost) / eta
    if not np.isfinite(cost_fit).all():
        raise DataError("cost matrix must be finite")
    gn, converged = _sinkhorn_potentials(cost_fit, tol, max_iters)

    logits = gn[None, :] - pairwise_cost(src_vals, dst_vals, cost) / eta
    zmax = logits.max(axis=1, keepdims=True)
    w = np.exp(logits - zmax)
    coupling = w / w.sum(axis=1, keepdims=True)
    return TransportMap(kind="sinkhorn-barycentric", coupling=coupling,
                        dst_reference=dst_vals, dst_indices=dst_idx,
                        src_row_ids=x_src.row_ids, converged=converged)


def barycentric_project(tmap: TransportMap, x_dst: FeatureMatrix) -> FeatureMatrix:
    """Coupling-weighted average of destination rows, one image per source row."""
    if tmap.kind != "sinkhorn-barycentric":
        raise DataError("barycentric projection needs a sinkhorn map")
    if x_dst.n != tmap.coupling.shape[1]:
        raise DimensionMismatch(
            f"coupling has {tmap.coupling.shape[1]} columns, destination has {x_dst.n} rows")
    return FeatureMatrix(tmap.coupling @ x_dst.values, tmap.src_row_ids)


# ---------------------------------------------------------------------------
# Nearest-neighbor label borrowing.
# ---------------------------------------------------------------------------

def _as_values(x) -> np.ndarray:
    return x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)


def nn_indices(x_src, x_dst, k: int = 1) -> np.ndarray:
    """(n_src, k) destination indices ordered by (distance, index).

    Exact ties are broken toward the lowest destination row index. Distances
    are computed in chunks to bound memory.
    """
    src, dst = _as_values(x_src), _as_values(x_dst)
    if dst.shape[0] == 0:
        raise EmptyDestination("destination set is empty")
    if src.shape[1] != dst.shape[1]:
        raise DimensionMismatch("source and destination dimensions differ")
    if k < 1 or k > dst.shape[0]:
        raise DataError(f"k must lie in [1, {dst.shape[0]}], got {k}")
    n_src, n_dst = src.shape[0], dst.shape[0]
    out = np.empty((n_src, k), dtype=np.int64)
    chunk = max(1, int(2 ** 24 // max(1, n_dst)))
    dd = np.einsum("ij,ij->i", dst, dst)
    for start in range(0, n_src, chunk):
        block = src[start:start + chunk]
        d2 = np.einsum("ij,ij->i", block, block)[:, None] + dd[None, :] - 2.0 * (block @ dst.T)
        if k == 1:
            out[start:start + chunk, 0] = np.argmin(d2, axis=1)
        else:
            part = np.argpartition(d2, k - 1, axis=1)[:, :k]
            pd = np.take_along_axis(d2, part, axis=1)
            order = np.lexsort((part, pd), axis=1)
            out[start:start + chunk] = np.take_along_axis(part, order, axis=1)
    return out


def knn_borrow(x_mapped_src, x_dst, labels_dst, k: int = 1) -> np.ndarray:
    """Borrow destination labels for each mapped source row.

    `labels_dst` may be a single +-1 column or a stack of columns; for k > 1
    the per-column majority decides, ties going to +1.
    """
    idx = nn_indices(x_mapped_src, x_dst, k)
    labels = np.asarray(labels_dst)
    single = labels.ndim == 1
    cols = labels[:, None] if single else labels
    gathered = cols[idx]                       # (n_src, k, c)
    summed = gathered.astype(np.int64).sum(axis=1)
    borrowed = np.where(summed >= 0, 1, -1).astype(np.int8)
    return borrowed[:, 0] if single else borrowed


def fit_map(x_src: FeatureMatrix, x_dst: FeatureMatrix, ot_kind: str, *,
            eta: float = 1.0, seed: int = 0,
            max_points: int = SINKHORN_MAX_POINTS, cost: str = "sqeuclidean") -> TransportMap:
    """Fit the configured map family, or return the identity bypass."""
    if ot_kind == "none":
        return TransportMap(kind="identity")
    if ot_kind == "linear":
        return fit_linear_ot(estimate_moments(x_src), estimate_moments(x_dst))
    if ot_kind == "sinkhorn":
        return fit_sinkhorn(x_src, x_dst, eta, cost=cost, max_points=max_points, seed=seed)
    raise DataError(f"unknown ot_kind {ot_kind!r}")


def apply_map(tmap: TransportMap, x_src: FeatureMatrix) -> FeatureMatrix:
    if tmap.kind == "identity":
        return x_src
    if tmap.kind == "linear":
        return apply_linear(tmap, x_src)
    return barycentric_project(tmap, FeatureMatrix(tmap.dst_reference))


def transport(x_src: FeatureMatrix, x_dst: FeatureMatrix, labels_dst,
              ot_kind: str = "none", *, k: int = 1, eta: float = 1.0,
              seed: int = 0, max_points: int = SINKHORN_MAX_POINTS,
              cost: str = "sqeuclidean") -> np.ndarray:
    """Map the source cloud onto the destination and borrow labels there."""
    tmap = fit_map(x_src, x_dst, ot_kind, eta=eta, seed=seed,
                   max_points=max_points, cost=cost)
    mapped = apply_map(tmap, x_src)
    dst_vals = x_dst.values
    labels = np.asarray(labels_dst)
    if tmap.kind == "sinkhorn-barycentric" and tmap.dst_indices.size != x_dst.n:
        dst_vals = x_dst.values[tmap.dst_indices]
        labels = labels[tmap.dst_indices]
    return knn_borrow(mapped, dst_vals, labels, k)


def effective_rank(cov: np.ndarray) -> float:
    """tr(S) / lambda_max(S): d for isotropic matrices, 1 for rank one."""
    cov = np.asarray(cov, dtype=np.float64)
    lam_max = float(np.linalg.eigvalsh((cov + cov.T) / 2.0).max())
    if lam_max <= 0.0:
        raise ZeroMatrix("effective rank needs a nonzero PSD matrix")
    return float(np.trace(cov)) / lam_max
