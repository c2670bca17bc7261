"""Attribute-masked similarity embeddings.

One affine encoder maps item features to a general embedding G; a learned
per-attribute mask m_a projects G into that attribute's space.  Masks live on
the simplex (softmax of logits) and masked representations are L2-normalized,
except in the reproduced baseline variant which keeps raw relu masks and skips
normalization.  Triplet training uses an adaptive margin that grows with how
many more attribute values the positive shares with the anchor than the
negative does.

All gradients are derived by hand; there is no autograd anywhere.
Subgradients at the hinge and relu kinks are 0.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import AttributeSchema, Dataset, Triplet
from .errors import ConfigError, TrainingDivergenceError

MASK_MODES = ("simplex", "relu")


@dataclass(frozen=True)
class EmbeddingConfig:
    """Hyperparameters for one embedding variant.

    The three ablation variants differ only here: the baseline uses raw relu
    masks, no normalization and a fixed margin (``eta=0``); the constrained
    variant adds simplex masks + normalization; the full variant adds the
    adaptive margin (``eta=h``).
    """

    e_dim: int = 64
    h: float = 0.3
    eta: float = 0.3
    lambda1: float = 5e-4
    lambda2: float = 5e-6
    mask_mode: str = "simplex"
    normalize: bool = True
    epochs: int = 200
    batch_size: int = 256
    lr: float = 0.1
    momentum: float = 0.9
    lr_decay_every: int = 0
    lr_decay_factor: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.h <= 0:
            raise ConfigError("margin h must be > 0")
        if self.eta < 0 or self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("eta, lambda1, lambda2 must be >= 0")
        if self.mask_mode not in MASK_MODES:
            raise ConfigError(f"mask_mode must be one of {MASK_MODES}")
        if self.e_dim < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("e_dim >= 1, epochs >= 0, batch_size >= 1 required")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")

    @classmethod
    def baseline(cls, **overrides) -> "EmbeddingConfig":
        """Unconstrained relu masks, raw distances, fixed margin."""
        return cls(mask_mode="relu", normalize=False, eta=0.0, **overrides)

    @classmethod
    def constrained(cls, **overrides) -> "EmbeddingConfig":
        """Simplex masks + normalized representations, fixed margin."""
        return cls(eta=0.0, **overrides)

    @classmethod
    def full(cls, **overrides) -> "EmbeddingConfig":
        """Constrained variant plus the adaptive margin (eta = h)."""
        return cls(**overrides)

    @property
    def variant_name(self) -> str:
        if self.mask_mode == "relu":
            return "baseline"
        return "constrained" if self.eta == 0 else "full"


def ablation_trio(**overrides) -> list[EmbeddingConfig]:
    return [
        EmbeddingConfig.baseline(**overrides),
        EmbeddingConfig.constrained(**overrides),
        EmbeddingConfig.full(**overrides),
    ]


class EmbeddingModel:
    """Affine encoder + per-attribute mask logits under one schema."""

    def __init__(
        self,
        schema: AttributeSchema,
        dim: int,
        config: EmbeddingConfig,
        encoder_w: np.ndarray,
        encoder_b: np.ndarray,
        mask_logits: np.ndarray,
    ):
        k, e = config.e_dim, schema.n_attributes
        if encoder_w.shape != (k, dim) or encoder_b.shape != (k,) or mask_logits.shape != (e, k):
            raise ConfigError("parameter shapes do not match schema/config")
        self.schema = schema
        self.dim = dim
        self.config = config
        self.encoder_w = encoder_w
        self.encoder_b = encoder_b
        self.mask_logits = mask_logits

    @classmethod
    def init(cls, schema: AttributeSchema, dim: int, config: EmbeddingConfig,
             rng: np.random.Generator | None = None) -> "EmbeddingModel":
        if rng is None:
            rng = np.random.default_rng(config.seed)
        w = rng.standard_normal((config.e_dim, dim)) / np.sqrt(dim)
        b = np.zeros(config.e_dim)
        logits = rng.normal(0.9, 0.7, size=(schema.n_attributes, config.e_dim))
        return cls(schema, dim, config, w, b, logits)

    # parameter plumbing for the optimizer and checkpoints
    def params(self) -> dict[str, np.ndarray]:
        return {"encoder_w": self.encoder_w, "encoder_b": self.encoder_b,
                "mask_logits": self.mask_logits}

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.schema, self.dim, self.config,
                              self.encoder_w.copy(), self.encoder_b.copy(),
                              self.mask_logits.copy())

    def masks(self) -> np.ndarray:
        """(E, e_dim) nonnegative mask matrix materialized from the logits."""
        if self.config.mask_mode == "simplex":
            shifted = self.mask_logits - self.mask_logits.max(axis=1, keepdims=True)
            ex = np.exp(shifted)
            return ex / ex.sum(axis=1, keepdims=True)
        return np.maximum(self.mask_logits, 0.0)

    def general_embedding(self, features: np.ndarray) -> np.ndarray:
        """G for one feature vector or a (N, D) batch."""
        return features @ self.encoder_w.T + self.encoder_b

    def attribute_rep(self, features: np.ndarray, attribute: str | int) -> np.ndarray:
        """Masked (and, unless baseline, unit-normalized) representation."""
        a = attribute if isinstance(attribute, int) else self.schema.index(attribute)
        u = self.general_embedding(features) * self.masks()[a]
        if self.config.normalize:
            u = _normalize_rows(u)
        return u

    def all_reps(self, features: np.ndarray) -> np.ndarray:
        """(E, N, e_dim) stack of every attribute's representations."""
        g = np.atleast_2d(self.general_embedding(features))
        masks = self.masks()
        reps = g[None, :, :] * masks[:, None, :]
        if self.config.normalize:
            for a in range(reps.shape[0]):
                reps[a] = _normalize_rows(reps[a])
        return np.ascontiguousarray(reps)

    def distance(self, f_i: np.ndarray, f_j: np.ndarray, attribute: str | int) -> float:
        zi = self.attribute_rep(f_i, attribute)
        zj = self.attribute_rep(f_j, attribute)
        return float(np.linalg.norm(zi - zj))


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    """Rows (or a single vector) scaled to unit norm; zero rows stay zero."""
    if x.ndim == 1:
        n = float(np.linalg.norm(x))
        return x / n if n > 0 else x
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def embed(model: EmbeddingModel, item, attribute: str) -> np.ndarray:
    """Attribute-space representation of one item (unit norm unless degenerate)."""
    features = getattr(item, "features", item)
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (model.dim,):
        raise ConfigError(f"feature dimension {features.shape} != ({model.dim},)")
    return model.attribute_rep(features, attribute)


def masked_distance(g_i: np.ndarray, g_j: np.ndarray, m_a: np.ndarray, normalize: bool = True) -> float:
    """Distance between two general embeddings in one attribute's space.

    Parameters
    ----------
    g_i, g_j : general embedding vectors.
    m_a : nonnegative mask for the attribute.
    normalize : compare unit-normalized masked vectors (the default); the
        baseline variant passes False and compares raw masked vectors.
    """
    u = np.asarray(g_i, dtype=np.float64) * m_a
    v = np.asarray(g_j, dtype=np.float64) * m_a
    if normalize:
        u = _normalize_rows(u)
        v = _normalize_rows(v)
    return float(np.linalg.norm(u - v))


def global_weight(a_x: Mapping[str, str], a_y: Mapping[str, str], a_z: Mapping[str, str], e: int) -> float:
    """max{0, (|A_x∩A_y| − |A_x∩A_z|)/E}, counting matching (attribute, value) pairs."""
    if e < 1:
        raise ConfigError("attribute count must be >= 1")
    xy = sum(1 for a, v in a_x.items() if a_y.get(a) == v)
    xz = sum(1 for a, v in a_x.items() if a_z.get(a) == v)
    return max(0.0, (xy - xz) / e)


def adaptive_margin(a_x, a_y, a_z, config: EmbeddingConfig, n_attributes: int) -> float:
    """h' = zeta + eta * w, with zeta the base margin h."""
    return config.h + config.eta * global_weight(a_x, a_y, a_z, n_attributes)


def triplet_loss(g_x, g_y, g_z, m_a, margin: float, normalize: bool = True) -> float:
    """Hinge max{0, margin + D(x,y) − D(x,z)} in one attribute's space."""
    d_pos = masked_distance(g_x, g_y, m_a, normalize)
    d_neg = masked_distance(g_x, g_z, m_a, normalize)
    return max(0.0, margin + d_pos - d_neg)


# ---------------------------------------------------------------------------
# batched loss with hand-derived gradients


@dataclass(frozen=True)
class TripletBatch:
    """Dense arrays for a list of triplets: features, attribute rows, weights."""

    x: np.ndarray            # (B, D) anchors
    y: np.ndarray            # (B, D) positives
    z: np.ndarray            # (B, D) negatives
    attr: np.ndarray         # (B,) attribute indices
    w: np.ndarray            # (B,) global compatibility weights

    def __len__(self) -> int:
        return self.x.shape[0]

    def take(self, idx: np.ndarray) -> "TripletBatch":
        return TripletBatch(self.x[idx], self.y[idx], self.z[idx], self.attr[idx], self.w[idx])


def triplet_batch(dataset: Dataset, triplets: Sequence[Triplet]) -> TripletBatch:
    feats = dataset.feature_matrix()
    rows = {it.id: r for r, it in enumerate(dataset.items)}
    e = dataset.schema.n_attributes
    xi = np.array([rows[t.anchor] for t in triplets], dtype=np.int64)
    yi = np.array([rows[t.positive] for t in triplets], dtype=np.int64)
    zi = np.array([rows[t.negative] for t in triplets], dtype=np.int64)
    attr = np.array([dataset.schema.index(t.attribute) for t in triplets], dtype=np.int64)
    w = np.array(
        [
            global_weight(
                dataset.get(t.anchor).labels,
                dataset.get(t.positive).labels,
                dataset.get(t.negative).labels,
                e,
            )
            for t in triplets
        ],
        dtype=np.float64,
    )
    return TripletBatch(feats[xi], feats[yi], feats[zi], attr, w)


def csn_loss(batch: TripletBatch, model: EmbeddingModel, config: EmbeddingConfig | None = None):
    """Mean adaptive-margin triplet loss + embedding L2 + mask L1, with gradients.

    Returns
    -------
    loss : float
    grads : dict with keys encoder_w, encoder_b, mask_logits (same shapes as
        the parameters).  Analytic; subgradient 0 at the hinge/relu kinks.
        For simplex masks the L1 term is constant (masks sum to 1), so its
        contribution to the logit gradient is identically zero and is skipped.
    """
    cfg = config or model.config
    b = len(batch)
    if b == 0:
        raise ConfigError("empty triplet batch")
    w_enc, b_enc, theta = model.encoder_w, model.encoder_b, model.mask_logits
    masks = model.masks()
    m = masks[batch.attr]                                        # (B, K)
    margins = cfg.h + cfg.eta * batch.w

    gs = [feat @ w_enc.T + b_enc for feat in (batch.x, batch.y, batch.z)]
    us = [g * m for g in gs]
    if cfg.normalize:
        norms = [np.linalg.norm(u, axis=1, keepdims=True) for u in us]
        zs = [np.divide(u, n, out=np.zeros_like(u), where=n > 0) for u, n in zip(us, norms)]
    else:
        zs = us

    diff_pos = zs[0] - zs[1]
    diff_neg = zs[0] - zs[2]
    d_pos = np.linalg.norm(diff_pos, axis=1)
    d_neg = np.linalg.norm(diff_neg, axis=1)
    hinge_arg = margins + d_pos - d_neg
    active = hinge_arg > 0

    loss_triplet = float(np.maximum(hinge_arg, 0.0).mean())
    sq = sum(float(np.square(g).sum()) for g in gs)
    loss_embed = cfg.lambda1 * sq / (3 * b)
    loss_mask = cfg.lambda2 * float(np.abs(masks).sum())
    loss = loss_triplet + loss_embed + loss_mask

    # backward: d loss / d distance is ±1[active]/B
    coeff = active.astype(np.float64) / b
    unit_pos = np.divide(diff_pos, d_pos[:, None], out=np.zeros_like(diff_pos), where=d_pos[:, None] > 0)
    unit_neg = np.divide(diff_neg, d_neg[:, None], out=np.zeros_like(diff_neg), where=d_neg[:, None] > 0)
    g_z = [
        coeff[:, None] * (unit_pos - unit_neg),
        -coeff[:, None] * unit_pos,
        coeff[:, None] * unit_neg,
    ]

    if cfg.normalize:
        g_u = []
        for gz, z, n in zip(g_z, zs, norms):
            inner = (z * gz).sum(axis=1, keepdims=True)
            gu = np.divide(gz - z * inner, n, out=np.zeros_like(gz), where=n > 0)
            g_u.append(gu)
    else:
        g_u = g_z

    reg_g = 2.0 * cfg.lambda1 / (3 * b)
    g_gs = [gu * m + reg_g * g for gu, g in zip(g_u, gs)]

    g_masks_flat = sum(gu * g for gu, g in zip(g_u, gs))          # (B, K)
    g_masks = np.zeros_like(masks)
    np.add.at(g_masks, batch.attr, g_masks_flat)
    if cfg.mask_mode == "relu":
        g_masks = g_masks + cfg.lambda2 * np.sign(masks)
        g_theta = g_masks * (theta > 0)
    else:
        inner = (masks * g_masks).sum(axis=1, keepdims=True)
        g_theta = masks * (g_masks - inner)

    g_w = sum(gg.T @ feat for gg, feat in zip(g_gs, (batch.x, batch.y, batch.z)))
    g_b = sum(gg.sum(axis=0) for gg in g_gs)

    grads = {"encoder_w": g_w, "encoder_b": g_b, "mask_logits": g_theta}
    return loss, grads


# ---------------------------------------------------------------------------
# training


def _batch_distances(model: EmbeddingModel, batch: TripletBatch):
    """(d_pos, d_neg) arrays for every triplet in its own attribute space."""
    m = model.masks()[batch.attr]
    gs = [feat @ model.encoder_w.T + model.encoder_b for feat in (batch.x, batch.y, batch.z)]
    us = [g * m for g in gs]
    if model.config.normalize:
        us = [_normalize_rows(u) for u in us]
    d_pos = np.linalg.norm(us[0] - us[1], axis=1)
    d_neg = np.linalg.norm(us[0] - us[2], axis=1)
    return d_pos, d_neg


def satisfaction_rate(model: EmbeddingModel, dataset: Dataset, triplets: Sequence[Triplet]) -> float:
    """Fraction of triplets with the positive strictly closer than the negative.

    Ties count as unsatisfied.
    """
    if not triplets:
        raise ConfigError("satisfaction_rate needs a nonempty triplet list")
    d_pos, d_neg = _batch_distances(model, triplet_batch(dataset, triplets))
    return float(np.count_nonzero(d_pos < d_neg)) / len(triplets)


def per_attribute_satisfaction(model: EmbeddingModel, dataset: Dataset,
                               triplets: Sequence[Triplet]) -> dict[str, float]:
    by_attr: dict[str, list[Triplet]] = {}
    for t in triplets:
        by_attr.setdefault(t.attribute, []).append(t)
    return {a: satisfaction_rate(model, dataset, ts) for a, ts in sorted(by_attr.items())}


def train(dataset: Dataset, triplets: Sequence[Triplet], config: EmbeddingConfig,
          val_triplets: Sequence[Triplet] | None = None):
    """Mini-batch SGD with momentum and step lr decay; best-validation checkpoint.

    Returns (model, log).  The model carries the epoch checkpoint with the
    highest validation satisfaction rate (earliest epoch on ties; the
    initialization counts as epoch 0).  Without validation triplets the final
    epoch is returned.  Deterministic per config.seed.
    """
    if not triplets:
        raise ConfigError("train needs a nonempty triplet list")
    rng = np.random.default_rng(config.seed)
    model = EmbeddingModel.init(dataset.schema, dataset.dim, config, rng)
    batch_all = triplet_batch(dataset, triplets)
    val_batch = triplet_batch(dataset, val_triplets) if val_triplets else None

    def val_rate() -> float | None:
        if val_batch is None:
            return None
        d_pos, d_neg = _batch_distances(model, val_batch)
        return float(np.count_nonzero(d_pos < d_neg)) / len(val_batch)

    velocity = {k: np.zeros_like(v) for k, v in model.params().items()}
    best_rate = val_rate()
    best_params = {k: v.copy() for k, v in model.params().items()}
    best_epoch = 0
    epoch_log: list[dict] = []

    n = len(batch_all)
    for epoch in range(1, config.epochs + 1):
        if config.lr_decay_every > 0:
            lr = config.lr * config.lr_decay_factor ** ((epoch - 1) // config.lr_decay_every)
        else:
            lr = config.lr
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            sub = batch_all.take(order[start:start + config.batch_size])
            loss, grads = csn_loss(sub, model, config)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(f"non-finite loss at epoch {epoch}")
            losses.append(loss)
            params = model.params()
            for key in params:
                velocity[key] = config.momentum * velocity[key] - lr * grads[key]
                params[key] += velocity[key]
        rate = val_rate()
        epoch_log.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_satisfaction": rate,
            "lr": lr,
        })
        if rate is not None and (best_rate is None or rate > best_rate):
            best_rate = rate
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params().items()}

    if val_batch is not None:
        model = EmbeddingModel(dataset.schema, dataset.dim, config,
                               best_params["encoder_w"], best_params["encoder_b"],
                               best_params["mask_logits"])
    selected = best_epoch if val_batch is not None else config.epochs
    log = {
        "variant": config.variant_name,
        "selected_epoch": selected,
        "best_val_satisfaction": best_rate,
        "epochs": epoch_log,
    }
    return model, log


# ---------------------------------------------------------------------------
# checkpoint I/O (json round-trips float64 exactly via repr)

_CKPT_FORMAT = "attrsearch-embedding"


def save_model(model: EmbeddingModel, path: str, log: dict | None = None) -> None:
    doc = {
        "format": _CKPT_FORMAT,
        "version": 1,
        "schema": [[name, list(vocab)] for name, vocab in model.schema.attributes],
        "schema_digest": model.schema.digest(),
        "dim": model.dim,
        "config": asdict(model.config),
        "weights": {
            "encoder_w": model.encoder_w.tolist(),
            "encoder_b": model.encoder_b.tolist(),
            "mask_logits": model.mask_logits.tolist(),
        },
        "log": log,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")


def load_model(path: str):
    """Returns (model, log)."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != _CKPT_FORMAT or doc.get("version") != 1:
        raise ConfigError(f"{path}: not a version-1 embedding checkpoint")
    schema = AttributeSchema(tuple((name, tuple(vocab)) for name, vocab in doc["schema"]))
    if schema.digest() != doc["schema_digest"]:
        raise ConfigError(f"{path}: schema digest mismatch")
    config = EmbeddingConfig(**doc["config"])
    weights = doc["weights"]
    model = EmbeddingModel(
        schema,
        int(doc["dim"]),
        config,
        np.array(weights["encoder_w"], dtype=np.float64),
        np.array(weights["encoder_b"], dtype=np.float64),
        np.array(weights["mask_logits"], dtype=np.float64),
    )
    return model, doc.get("log")
