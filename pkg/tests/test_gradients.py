"""Finite-difference checks of every hand-derived gradient.

Central differences with step 1e-5, relative tolerance 1e-4.  Sampled
configurations are rejected while any term sits near a kink (hinge boundary,
relu boundary, zero distance, Huber clip corner, tied next-state argmax), so
the comparison happens where the loss is differentiable.
"""

import numpy as np
import pytest

from attrsearch import AttributeSchema, EmbeddingConfig, EmbeddingModel
from attrsearch.dqn import QNetwork, TransitionBatch, _forward, huber_td_loss
from attrsearch.embedding import TripletBatch, csn_loss

FD_STEP = 1e-5
REL_TOL = 1e-4
KINK_GAP = 1e-3

SCHEMA = AttributeSchema((("p", ("a", "b")), ("q", ("c", "d"))))


def _rel_err(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale < 1e-10:
        return 0.0
    return abs(analytic - numeric) / scale


def _fd_check(loss_of_params, params, grads):
    """Compare analytic grads against central differences entry by entry."""
    worst = 0.0
    for key, value in params.items():
        flat = value.ravel()
        gflat = grads[key].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + FD_STEP
            up = loss_of_params()
            flat[i] = orig - FD_STEP
            down = loss_of_params()
            flat[i] = orig
            numeric = (up - down) / (2 * FD_STEP)
            worst = max(worst, _rel_err(float(gflat[i]), numeric))
    return worst


def _away_from_kinks(model: EmbeddingModel, batch: TripletBatch, cfg: EmbeddingConfig) -> bool:
    masks = model.masks()
    m = masks[batch.attr]
    gs = [f @ model.encoder_w.T + model.encoder_b for f in (batch.x, batch.y, batch.z)]
    us = [g * m for g in gs]
    if cfg.normalize:
        norms = [np.linalg.norm(u, axis=1) for u in us]
        if min(n.min() for n in norms) < 1e-2:
            return False
        us = [u / n[:, None] for u, n in zip(us, norms)]
    d_pos = np.linalg.norm(us[0] - us[1], axis=1)
    d_neg = np.linalg.norm(us[0] - us[2], axis=1)
    if d_pos.min() < 1e-2 or d_neg.min() < 1e-2:
        return False
    hinge = cfg.h + cfg.eta * batch.w + d_pos - d_neg
    if np.abs(hinge).min() < KINK_GAP:
        return False
    if cfg.mask_mode == "relu" and np.abs(model.mask_logits).min() < KINK_GAP:
        return False
    return True


def _sample_case(seed: int):
    rng = np.random.default_rng(seed)
    mode = "simplex" if seed % 2 == 0 else "relu"
    normalize = seed % 3 != 0
    cfg = EmbeddingConfig(e_dim=4, mask_mode=mode, normalize=normalize,
                          lambda1=2e-3, lambda2=1e-3, eta=0.3)
    for _ in range(60):
        model = EmbeddingModel.init(SCHEMA, 5, cfg, rng)
        batch = TripletBatch(
            x=rng.standard_normal((3, 5)),
            y=rng.standard_normal((3, 5)),
            z=rng.standard_normal((3, 5)),
            attr=rng.integers(0, 2, size=3),
            w=rng.random(3),
        )
        if _away_from_kinks(model, batch, cfg):
            return model, batch, cfg
    raise AssertionError("could not sample a kink-free configuration")


@pytest.mark.parametrize("seed", range(24))
def test_csn_loss_gradients_match_fd(seed):
    model, batch, cfg = _sample_case(seed)
    _, grads = csn_loss(batch, model, cfg)
    worst = _fd_check(lambda: csn_loss(batch, model, cfg)[0], model.params(), grads)
    assert worst <= REL_TOL, f"seed {seed}: relative error {worst:.2e}"


def _sample_dqn_case(seed: int):
    rng = np.random.default_rng(1000 + seed)
    input_dim, k_cand = 7, 3
    net = QNetwork.init(input_dim, k_cand, (6, 5), rng)
    target = QNetwork.init(input_dim, k_cand, (6, 5), rng)
    for _ in range(80):
        b = 4
        batch = TransitionBatch(
            states=rng.standard_normal((b, input_dim)),
            actions=rng.integers(0, k_cand, size=b),
            rewards=rng.standard_normal(b) * 0.3,
            next_states=rng.standard_normal((b, input_dim)),
            next_masks=np.ones((b, k_cand), dtype=bool),
            terminal=rng.random(b) < 0.3,
        )
        q_all, h1, h2 = _forward(net, batch.states)
        qn, _, _ = _forward(target, batch.next_states)
        top2 = np.sort(qn, axis=1)[:, -2:]
        if (top2[:, 1] - top2[:, 0]).min() < KINK_GAP:
            continue
        y = batch.rewards + 0.95 * np.where(batch.terminal, 0.0, qn.max(axis=1))
        td = q_all[np.arange(b), batch.actions] - y
        if np.abs(np.abs(td) - 1.0).min() < KINK_GAP:
            continue
        pre1 = batch.states @ net.w1.T + net.b1
        pre2 = h1 @ net.w2.T + net.b2
        if min(np.abs(pre1).min(), np.abs(pre2).min()) < 1e-4:
            continue
        return net, target, batch
    raise AssertionError("could not sample a kink-free transition batch")


@pytest.mark.parametrize("seed", range(10))
def test_huber_td_gradients_match_fd(seed):
    net, target, batch = _sample_dqn_case(seed)
    _, grads = huber_td_loss(net, target, batch, gamma=0.95)
    worst = _fd_check(lambda: huber_td_loss(net, target, batch, gamma=0.95)[0],
                      net.params(), grads)
    assert worst <= REL_TOL, f"seed {seed}: relative error {worst:.2e}"


def test_simplex_l1_gradient_is_skipped_consistently():
    # the mask L1 term is constant on the simplex: perturbing any logit must
    # leave the loss's mask-L1 component unchanged, so FD already covers it;
    # here we pin the invariant the shortcut relies on.
    rng = np.random.default_rng(0)
    cfg = EmbeddingConfig(e_dim=6, mask_mode="simplex")
    model = EmbeddingModel.init(SCHEMA, 5, cfg, rng)
    l1 = np.abs(model.masks()).sum()
    model.mask_logits[0, 0] += 0.37
    assert abs(np.abs(model.masks()).sum() - l1) < 1e-12
