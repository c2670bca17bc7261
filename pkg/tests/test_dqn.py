import json

import numpy as np
import pytest

from attrsearch import (
    ConfigError,
    DqnConfig,
    QNetwork,
    ReplayBuffer,
    SearchIndex,
    compute_reward,
    generate_synthetic,
    load_qnet,
    sample_query_target_pairs,
    sample_triplets_per_attribute,
    save_qnet,
    train_dqn,
)
from attrsearch import EmbeddingConfig, train
from attrsearch.dqn import (
    TransitionBatch,
    _forward,
    huber_td_loss,
    percentile_rank,
    q_forward,
    select_action,
)

from .oracles import huber_td_ref, percentile_ref, qnet_forward_ref


def test_config_validation():
    with pytest.raises(ConfigError):
        DqnConfig(gamma=1.5)
    with pytest.raises(ConfigError):
        DqnConfig(eps_start=0.1, eps_end=0.5)
    with pytest.raises(ConfigError):
        DqnConfig(batch_size=100, replay_capacity=50)
    with pytest.raises(ConfigError):
        DqnConfig(hidden=(10,))


def test_epsilon_decay():
    cfg = DqnConfig(eps_start=0.9, eps_end=0.05, eps_tau=100.0)
    assert cfg.epsilon(0) == pytest.approx(0.9)
    assert cfg.epsilon(100) == pytest.approx(0.05 + 0.85 * np.exp(-1))
    assert cfg.epsilon(10**7) == pytest.approx(0.05)
    assert cfg.epsilon(10) > cfg.epsilon(20)


def _net(seed=0, input_dim=9, k_cand=3, hidden=(8, 6)):
    return QNetwork.init(input_dim, k_cand, hidden, np.random.default_rng(seed))


def test_forward_matches_loops():
    rng = np.random.default_rng(1)
    net = _net()
    for _ in range(100):
        x = rng.standard_normal(net.input_dim)
        got = q_forward(net, x)
        want = qnet_forward_ref({k: v.tolist() for k, v in net.params().items()},
                                x.tolist())
        np.testing.assert_allclose(got, want, atol=1e-9)


def test_forward_masks_to_neg_inf():
    net = _net()
    x = np.zeros(net.input_dim)
    q = q_forward(net, x, np.array([True, False, True]))
    assert q[1] == -np.inf and np.isfinite(q[0]) and np.isfinite(q[2])
    with pytest.raises(ConfigError):
        q_forward(net, np.zeros(net.input_dim + 1))


def test_select_action_greedy_and_explore():
    net = _net(seed=2)
    x = np.random.default_rng(3).standard_normal(net.input_dim)
    greedy = select_action(net, x, 0.0, np.random.default_rng(0))
    assert greedy == int(np.argmax(q_forward(net, x)))
    mask = np.array([False, True, False])
    assert select_action(net, x, 0.0, np.random.default_rng(0), mask) == 1
    rng = np.random.default_rng(4)
    picks = {select_action(net, x, 1.0, rng) for _ in range(60)}
    assert picks == {0, 1, 2}
    with pytest.raises(ConfigError):
        select_action(net, x, 0.5, rng, np.zeros(3, dtype=bool))


def test_select_action_epsilon_respects_mask():
    net = _net(seed=5)
    x = np.zeros(net.input_dim)
    rng = np.random.default_rng(6)
    mask = np.array([False, True, True])
    for _ in range(50):
        assert select_action(net, x, 1.0, rng, mask) in (1, 2)


def test_replay_buffer_wraps_and_samples():
    buf = ReplayBuffer(capacity=5, input_dim=2, k_cand=2)
    for i in range(7):
        buf.push(np.full(2, i), i % 2, float(i), np.full(2, -i),
                 np.array([True, False]), i % 3 == 0)
    assert len(buf) == 5
    stored = set(buf.rewards.tolist())
    assert stored == {2.0, 3.0, 4.0, 5.0, 6.0}        # 0 and 1 overwritten
    batch = buf.sample(5, np.random.default_rng(0))
    assert sorted(batch.rewards.tolist()) == [2.0, 3.0, 4.0, 5.0, 6.0]
    with pytest.raises(ConfigError):
        buf.sample(6, np.random.default_rng(0))


def test_replay_sample_without_replacement():
    buf = ReplayBuffer(capacity=50, input_dim=1, k_cand=1)
    for i in range(50):
        buf.push([float(i)], 0, float(i), [0.0], np.array([True]), False)
    batch = buf.sample(30, np.random.default_rng(1))
    assert len(set(batch.rewards.tolist())) == 30


def _batch(rng, net, b=6, all_masked_ok=False):
    return TransitionBatch(
        states=rng.standard_normal((b, net.input_dim)),
        actions=rng.integers(0, net.k_cand, size=b),
        rewards=rng.standard_normal(b),
        next_states=rng.standard_normal((b, net.input_dim)),
        next_masks=np.ones((b, net.k_cand), dtype=bool),
        terminal=rng.random(b) < 0.4,
    )


def test_huber_td_loss_value_matches_oracle():
    rng = np.random.default_rng(7)
    net, target = _net(seed=8), _net(seed=9)
    for _ in range(100):
        batch = _batch(rng, net)
        loss, _ = huber_td_loss(net, target, batch, gamma=0.9)
        q_all, _, _ = _forward(net, batch.states)
        q_sa = q_all[np.arange(len(batch)), batch.actions]
        qn, _, _ = _forward(target, batch.next_states)
        best = np.where(batch.terminal, 0.0, qn.max(axis=1))
        y = batch.rewards + 0.9 * best
        want = huber_td_ref(q_sa.tolist(), y.tolist())
        assert abs(loss - want) <= 1e-9


def test_huber_td_terminal_ignores_next_state():
    net, target = _net(seed=10), _net(seed=11)
    rng = np.random.default_rng(12)
    batch = _batch(rng, net)
    batch.terminal[:] = True
    loss1, _ = huber_td_loss(net, target, batch, gamma=0.9)
    batch.next_states[:] = 99.0
    loss2, _ = huber_td_loss(net, target, batch, gamma=0.9)
    assert loss1 == loss2


def test_huber_td_rejects_dead_end():
    net = _net(seed=13)
    rng = np.random.default_rng(14)
    batch = _batch(rng, net, b=2)
    batch.terminal[:] = False
    batch.next_masks[0, :] = False
    with pytest.raises(ConfigError):
        huber_td_loss(net, None, batch, gamma=0.9)


def test_huber_td_bootstraps_without_target():
    net = _net(seed=15)
    rng = np.random.default_rng(16)
    batch = _batch(rng, net)
    loss_self, _ = huber_td_loss(net, None, batch, gamma=0.9)
    loss_copy, _ = huber_td_loss(net, net.copy(), batch, gamma=0.9)
    assert loss_self == pytest.approx(loss_copy)


def test_percentile_and_reward():
    assert percentile_rank(1, 100) == 1.0
    assert percentile_rank(100, 100) == 0.0
    assert percentile_rank(1, 1) == 1.0
    for rank, n in [(3, 7), (5, 11), (1, 2)]:
        assert percentile_rank(rank, n) == pytest.approx(percentile_ref(rank, n))
    with pytest.raises(ConfigError):
        percentile_rank(0, 5)
    with pytest.raises(ConfigError):
        percentile_rank(6, 5)
    assert compute_reward(50, 1, 100) == pytest.approx(49 / 99)
    assert compute_reward(1, 100, 100) == pytest.approx(-1.0)
    assert compute_reward(7, 7, 50) == 0.0


@pytest.fixture(scope="module")
def small_world():
    from .conftest import TINY_SCHEMA
    ds = generate_synthetic(TINY_SCHEMA, n_items=120, dim=8, noise_sigma=0.1, seed=31)
    triplets = sample_triplets_per_attribute(ds, 200, seed=1)
    cfg = EmbeddingConfig.full(e_dim=8, epochs=6, batch_size=64, lr=0.05, seed=0)
    model, _ = train(ds, triplets, cfg)
    index = SearchIndex(model, ds)
    pairs = sample_query_target_pairs(ds, 6, seed=2)
    return index, pairs


def test_train_dqn_runs_and_counts(small_world):
    index, pairs = small_world
    cfg = DqnConfig(episodes=12, batch_size=32, replay_capacity=500, eps_tau=50.0,
                    target_sync=20, max_steps=15, seed=0)
    net, log = train_dqn(index, pairs, cfg)
    assert net.input_dim == cfg.k_cand * index.model.config.e_dim + index.n_attributes
    assert len(log["episodes"]) == 12
    assert log["env_rounds"] >= 12
    assert log["opt_steps"] >= 1
    assert all(e["status"] in ("found", "capped", "exhausted") for e in log["episodes"])
    with pytest.raises(ConfigError):
        train_dqn(index, [], cfg)


def test_train_dqn_deterministic(small_world):
    index, pairs = small_world
    cfg = DqnConfig(episodes=6, batch_size=32, replay_capacity=300, eps_tau=40.0,
                    target_sync=10, max_steps=10, seed=3)
    n1, l1 = train_dqn(index, pairs, cfg)
    n2, l2 = train_dqn(index, pairs, cfg)
    for k in n1.params():
        np.testing.assert_array_equal(n1.params()[k], n2.params()[k])
    assert l1 == l2


def test_train_dqn_no_target_sync(small_world):
    index, pairs = small_world
    cfg = DqnConfig(episodes=4, batch_size=32, replay_capacity=300, eps_tau=40.0,
                    target_sync=0, max_steps=10, seed=4)
    net, log = train_dqn(index, pairs, cfg)
    assert log["opt_steps"] >= 1


def test_qnet_roundtrip(tmp_path, small_world):
    index, pairs = small_world
    cfg = DqnConfig(episodes=3, batch_size=32, replay_capacity=300, max_steps=8, seed=5)
    net, log = train_dqn(index, pairs, cfg)
    path = tmp_path / "qnet.json"
    save_qnet(net, str(path), config=cfg, log=log, meta={"note": "test"})
    loaded, loaded_cfg, loaded_log = load_qnet(str(path))
    assert loaded.input_dim == net.input_dim and loaded.k_cand == net.k_cand
    for k in net.params():
        np.testing.assert_array_equal(loaded.params()[k], net.params()[k])
    assert loaded_cfg == cfg
    assert loaded_log == json.loads(json.dumps(log))
    doc = json.loads(path.read_text())
    doc["format"] = "other"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError):
        load_qnet(str(path))
