"""Expected error reduction re-ranking.

Candidates are scored by the expected entropy of the constraint-satisfaction
model after a simulated accept/reject response; response probabilities come
from per-attribute Platt-scaled distances to a proxy target.  The candidate
minimizing expected entropy wins its attribute slot.
"""

from __future__ import annotations

import json
import warnings
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset
from .embedding import EmbeddingModel
from .errors import ConfigError
from .index import SearchIndex
from .selection import ConstraintSet, constraint_score

MAX_SLOPE = 1e4


class PlattParams:
    """Per-attribute logistic calibration sigma(r=1 | d) = 1 / (1 + exp(a*d + b))."""

    def __init__(self, coefficients: Mapping[str, tuple[float, float]]):
        self.coefficients = {name: (float(a), float(b)) for name, (a, b) in coefficients.items()}

    def prob_accept(self, attribute: str, distance: float) -> float:
        """Probability that the response to a candidate at this distance is r=1."""
        a, b = self.coefficients[attribute]
        t = np.clip(a * distance + b, -700.0, 700.0)
        return float(1.0 / (1.0 + np.exp(t)))

    def to_dict(self) -> dict:
        return {name: [a, b] for name, (a, b) in self.coefficients.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "PlattParams":
        return cls({name: (float(v[0]), float(v[1])) for name, v in d.items()})


def platt_fit(distances, labels, tol: float = 1e-8, max_iter: int = 100) -> tuple[float, float]:
    """Maximum-likelihood logistic fit of binary labels on a scalar distance.

    Fits sigma(r=1|d) = 1/(1+exp(a*d+b)) by damped Newton iteration (IRLS)
    until the gradient max-norm falls under ``tol``.  Degenerate constant
    distances give a=0 with the base-rate intercept; separable data clamps
    the slope magnitude and warns.

    Returns
    -------
    (a, b) : slope and intercept.
    """
    d = np.asarray(distances, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if d.shape != y.shape or d.ndim != 1 or len(d) < 2:
        raise ConfigError("platt_fit needs matching 1-d arrays of length >= 2")
    if not ((y == 0) | (y == 1)).all():
        raise ConfigError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ConfigError("platt_fit needs both labels present")

    pbar = float(y.mean())
    base_b = float(np.log((1.0 - pbar) / pbar))
    if np.ptp(d) == 0:
        return 0.0, base_b

    def refit_intercept(a: float, b: float) -> float:
        for _ in range(50):
            t = np.clip(a * d + b, -700.0, 700.0)
            p = 1.0 / (1.0 + np.exp(t))
            g = float((y - p).sum())
            h = float((p * (1.0 - p)).sum())
            if h <= 0 or abs(g) <= tol:
                break
            b -= g / h
        return b

    d1, d0 = d[y == 1], d[y == 0]
    if d1.max() < d0.min() or d0.max() < d1.min():
        # strictly separable: no finite maximum-likelihood slope exists.
        # Clamp it and put the decision boundary midway between the classes.
        if d1.max() < d0.min():
            a, mid = MAX_SLOPE, (float(d1.max()) + float(d0.min())) / 2
        else:
            a, mid = -MAX_SLOPE, (float(d0.max()) + float(d1.min())) / 2
        b = refit_intercept(a, -a * mid)
        warnings.warn("separable calibration data: slope clamped", RuntimeWarning)
        return float(a), float(b)

    def nll(a: float, b: float) -> float:
        t = np.clip(a * d + b, -700.0, 700.0)
        # -LL = -sum (1-y) t + sum log(1+e^t)
        return float(np.logaddexp(0.0, t).sum() - ((1.0 - y) * t).sum())

    a, b = 0.0, base_b
    clamped = False
    for _ in range(max_iter):
        t = np.clip(a * d + b, -700.0, 700.0)
        p = 1.0 / (1.0 + np.exp(t))
        resid = y - p
        grad_a = float((resid * d).sum())
        grad_b = float(resid.sum())
        if max(abs(grad_a), abs(grad_b)) <= tol:
            break
        w = p * (1.0 - p)
        haa = float((w * d * d).sum())
        hab = float((w * d).sum())
        hbb = float(w.sum())
        det = haa * hbb - hab * hab
        if det <= 0 or not np.isfinite(det):
            break
        step_a = -(hbb * grad_a - hab * grad_b) / det
        step_b = -(haa * grad_b - hab * grad_a) / det
        # damped update: halve until the negative log-likelihood improves
        before = nll(a, b)
        scale = 1.0
        for _ in range(30):
            na, nb = a + scale * step_a, b + scale * step_b
            if nll(na, nb) <= before:
                break
            scale *= 0.5
        a, b = a + scale * step_a, b + scale * step_b
        if abs(a) > MAX_SLOPE:
            a = float(np.sign(a) * MAX_SLOPE)
            clamped = True
    if clamped:
        b = refit_intercept(a, b)
        warnings.warn("near-separable calibration data: slope clamped", RuntimeWarning)
    return float(a), float(b)


def fit_platt(model: EmbeddingModel, train_data: Dataset, n_pairs: int = 10000,
              seed: int = 0) -> PlattParams:
    """Fit per-attribute calibrations from random same-value/different-value pairs.

    For each attribute, pairs are drawn from items carrying that attribute;
    the label is 1 when the two items share its value, and the distance is
    measured in that attribute's embedding space.
    """
    reps = model.all_reps(train_data.feature_matrix())
    label_mat = train_data.label_matrix()
    rng = np.random.default_rng(seed)
    coeffs: dict[str, tuple[float, float]] = {}
    for a, name in enumerate(model.schema.names):
        rows = np.nonzero(label_mat[:, a] >= 0)[0]
        m = len(rows)
        if m < 2:
            raise ConfigError(f"attribute {name!r} has fewer than 2 labeled items")
        i = rng.integers(0, m, size=n_pairs)
        j = (i + 1 + rng.integers(0, m - 1, size=n_pairs)) % m
        ri, rj = rows[i], rows[j]
        d = np.linalg.norm(reps[a, ri] - reps[a, rj], axis=1)
        labels = (label_mat[ri, a] == label_mat[rj, a]).astype(np.float64)
        if labels.min() == labels.max():
            raise ConfigError(f"attribute {name!r}: sampled pairs are all one label")
        coeffs[name] = platt_fit(d, labels)
    return PlattParams(coeffs)


def save_platt(platt: PlattParams, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"format": "attrsearch-platt", "version": 1,
                   "coefficients": platt.to_dict()}, f)
        f.write("\n")


def load_platt(path: str) -> PlattParams:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != "attrsearch-platt" or doc.get("version") != 1:
        raise ConfigError(f"{path}: not a version-1 calibration file")
    return PlattParams.from_dict(doc["coefficients"])


# ---------------------------------------------------------------------------
# entropy


def model_entropy(pool: Iterable[str], constraints: ConstraintSet,
                  distance_fn: Callable[[str, str], float]) -> float:
    """Total binary entropy of constraint-satisfaction scores over a pool.

    H = -sum over items, l in {0,1} of S(o|l,F) log S(o|l,F), natural log,
    with 0 log 0 = 0.  Reference implementation; the re-ranker uses the
    count-based fast path with identical semantics.
    """
    pool = list(pool)
    if not pool:
        raise ConfigError("model_entropy needs a nonempty pool")
    h = 0.0
    for o in pool:
        s0 = constraint_score(o, 0, constraints, distance_fn)
        for s in (s0, 1.0 - s0):
            if s > 0:
                h -= s * np.log(s)
    return float(h)


def entropy_from_counts(counts: np.ndarray, n_constraints: int) -> float:
    """Entropy of a pool given per-item satisfied-constraint counts."""
    if n_constraints == 0:
        return 0.0
    s = counts / n_constraints
    h = np.zeros_like(s, dtype=np.float64)
    for frac in (s, 1.0 - s):
        nz = frac > 0
        h[nz] -= frac[nz] * np.log(frac[nz])
    return float(h.sum())


# ---------------------------------------------------------------------------
# re-ranking


def eer_rerank(candidates: Sequence[tuple[str, Sequence[str]]], index: SearchIndex,
               query: str, constraints: ConstraintSet, proxy: str, platt: PlattParams,
               counts_pooled: np.ndarray | None = None) -> list[tuple[str, str]]:
    """Pick one candidate per attribute minimizing expected post-feedback entropy.

    Parameters
    ----------
    candidates : ordered (attribute, candidate ids) pairs from the selector.
    counts_pooled : optional (N,) pooled-distance satisfied-constraint counts
        maintained by the session; computed from scratch when absent.

    The entropy pool is the union of the round's candidate lists (a short
    list by construction; entropy over the whole database would defeat the
    re-ranking cost argument).  For a candidate c presented for attribute a,
    response r=1 simulates accepting c (adds constraint (c, query)), r=0
    rejecting it (adds (query, c)).  Branch entropies measure the session's
    current model, so constraint satisfaction uses the pooled distance; only
    the response probability is attribute-specific (attribute a's Platt fit
    on the candidate-proxy distance in space a).

    Returns (attribute, winner) pairs in input attribute order; ties broken
    by candidate id.
    """
    pool = sorted({c for _, ids in candidates for c in ids})
    if not pool:
        raise ConfigError("eer_rerank needs a nonempty candidate set")
    pool_rows = np.array([index.row_of(c) for c in pool], dtype=np.int64)
    row_q = index.row_of(query)
    m = len(constraints)
    if counts_pooled is None:
        counts_pooled = np.zeros(index.n, dtype=np.int64)
        for con in constraints:
            row_c = index.row_of(con.closer)
            row_f = index.row_of(con.farther)
            counts_pooled = counts_pooled + (
                index.pooled_row(row_c) < index.pooled_row(row_f))
    base = counts_pooled[pool_rows]
    pd_q = index.pooled_row(row_q)[pool_rows]

    winners: list[tuple[str, str]] = []
    for attr_name, ids in candidates:
        if not ids:
            continue
        a = index.attr_index(attr_name)
        d_proxy_row = index.dist_row(a, index.row_of(proxy))
        best: tuple[float, str] | None = None
        for c in ids:
            pd_c = index.pooled_row(index.row_of(c))[pool_rows]
            counts_accept = base + (pd_c < pd_q)
            counts_reject = base + (pd_q < pd_c)
            h1 = entropy_from_counts(counts_accept, m + 1)
            h0 = entropy_from_counts(counts_reject, m + 1)
            p1 = platt.prob_accept(attr_name, float(d_proxy_row[index.row_of(c)]))
            score = (1.0 - p1) * h0 + p1 * h1
            if best is None or (score, c) < best:
                best = (score, c)
        winners.append((attr_name, best[1]))
    return winners
