"""Learned candidate re-ranking with a from-scratch Q-network.

A single 3-layer MLP (ReLU after the first two layers, linear head) scores
the K candidates of one attribute; the state is the concatenation of each
candidate's embedding difference from the query in that attribute's space
plus an attribute one-hot.  Training runs simulated search sessions with
ε-greedy exploration, a uniform-replay ring buffer, Huber TD loss, and an
optional periodically-synced target network.  Gradients are hand-derived.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, TrainingDivergenceError
from .index import SearchIndex


@dataclass(frozen=True)
class DqnConfig:
    k_cand: int = 4
    hidden: tuple = (256, 128)
    gamma: float = 0.999
    batch_size: int = 2048
    replay_capacity: int = 20000
    eps_start: float = 0.9
    eps_end: float = 0.05
    eps_tau: float = 2000.0
    lr: float = 0.01
    momentum: float = 0.9
    target_sync: int = 500
    episodes: int = 500
    max_steps: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must be in [0, 1]")
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ConfigError("need 0 <= eps_end <= eps_start <= 1")
        if self.k_cand < 1 or self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ConfigError("k_cand >= 1 and replay_capacity >= batch_size >= 1 required")
        if len(self.hidden) != 2:
            raise ConfigError("exactly two hidden widths expected")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def epsilon(self, env_rounds: int) -> float:
        """Exploration rate after the given number of environment rounds."""
        return self.eps_end + (self.eps_start - self.eps_end) * float(np.exp(-env_rounds / self.eps_tau))


class QNetwork:
    """w1/w2/w3 affine layers; relu after the first two, linear Q head."""

    def __init__(self, weights: dict[str, np.ndarray], input_dim: int, k_cand: int):
        self.input_dim = input_dim
        self.k_cand = k_cand
        self.w1 = weights["w1"]
        self.b1 = weights["b1"]
        self.w2 = weights["w2"]
        self.b2 = weights["b2"]
        self.w3 = weights["w3"]
        self.b3 = weights["b3"]
        if self.w1.shape[1] != input_dim or self.w3.shape[0] != k_cand:
            raise ConfigError("layer shapes do not match input_dim/k_cand")

    @classmethod
    def init(cls, input_dim: int, k_cand: int, hidden: Sequence[int],
             rng: np.random.Generator) -> "QNetwork":
        h1, h2 = hidden
        weights = {
            "w1": rng.standard_normal((h1, input_dim)) * np.sqrt(2.0 / input_dim),
            "b1": np.zeros(h1),
            "w2": rng.standard_normal((h2, h1)) * np.sqrt(2.0 / h1),
            "b2": np.zeros(h2),
            "w3": rng.standard_normal((k_cand, h2)) * np.sqrt(2.0 / h2),
            "b3": np.zeros(k_cand),
        }
        return cls(weights, input_dim, k_cand)

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "w3": self.w3, "b3": self.b3}

    def copy(self) -> "QNetwork":
        return QNetwork({k: v.copy() for k, v in self.params().items()},
                        self.input_dim, self.k_cand)

    def load_from(self, other: "QNetwork") -> None:
        for key, value in other.params().items():
            getattr(self, key)[...] = value


def _forward(net: QNetwork, x: np.ndarray):
    """Batch forward pass; returns (q, h1, h2) with hidden activations kept for backprop."""
    h1 = np.maximum(x @ net.w1.T + net.b1, 0.0)
    h2 = np.maximum(h1 @ net.w2.T + net.b2, 0.0)
    q = h2 @ net.w3.T + net.b3
    return q, h1, h2


def q_forward(net: QNetwork, state: np.ndarray, action_mask: np.ndarray | None = None) -> np.ndarray:
    """Q-values for one state; masked actions are reported as -inf."""
    if state.shape != (net.input_dim,):
        raise ConfigError(f"state shape {state.shape} != ({net.input_dim},)")
    q, _, _ = _forward(net, state[None, :])
    q = q[0]
    if action_mask is not None:
        q = np.where(action_mask, q, -np.inf)
    return q


def select_action(net: QNetwork, state: np.ndarray, epsilon: float,
                  rng: np.random.Generator, action_mask: np.ndarray | None = None) -> int:
    """ε-greedy action: uniform over unmasked with prob ε, else greedy argmax.

    Greedy ties resolve to the lowest index.
    """
    if action_mask is None:
        action_mask = np.ones(net.k_cand, dtype=bool)
    legal = np.nonzero(action_mask)[0]
    if len(legal) == 0:
        raise ConfigError("select_action: every action is masked")
    if epsilon > 0 and rng.random() < epsilon:
        return int(legal[rng.integers(len(legal))])
    q = q_forward(net, state, action_mask)
    return int(np.argmax(q))


# ---------------------------------------------------------------------------
# replay + TD loss


@dataclass
class TransitionBatch:
    states: np.ndarray        # (B, In)
    actions: np.ndarray       # (B,)
    rewards: np.ndarray       # (B,)
    next_states: np.ndarray   # (B, In)
    next_masks: np.ndarray    # (B, A) bool
    terminal: np.ndarray      # (B,) bool

    def __len__(self) -> int:
        return len(self.actions)


class ReplayBuffer:
    """Fixed-capacity ring buffer over preallocated arrays."""

    def __init__(self, capacity: int, input_dim: int, k_cand: int):
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, input_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, input_dim))
        self.next_masks = np.zeros((capacity, k_cand), dtype=bool)
        self.terminal = np.zeros(capacity, dtype=bool)
        self._pos = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, state, action: int, reward: float, next_state, next_mask, terminal: bool) -> None:
        i = self._pos
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.next_masks[i] = next_mask
        self.terminal[i] = terminal
        self._pos = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        if batch_size > self._size:
            raise ConfigError(f"cannot sample {batch_size} from buffer of {self._size}")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return TransitionBatch(
            self.states[idx], self.actions[idx], self.rewards[idx],
            self.next_states[idx], self.next_masks[idx], self.terminal[idx],
        )


def huber_td_loss(net: QNetwork, target_net: QNetwork | None, batch: TransitionBatch,
                  gamma: float):
    """Mean Huber(δ=1) loss on the TD error, with hand-derived gradients.

    Target: r + γ·max over unmasked a' of Q_target(s', a'), or bare r for
    terminal transitions.  The target network is treated as a constant; pass
    None to bootstrap from ``net`` itself.

    Returns (loss, grads) with grads keyed like ``net.params()``.
    """
    b = len(batch)
    if b == 0:
        raise ConfigError("empty transition batch")
    q_all, h1, h2 = _forward(net, batch.states)
    rows = np.arange(b)
    q_sa = q_all[rows, batch.actions]

    tnet = net if target_net is None else target_net
    q_next, _, _ = _forward(tnet, batch.next_states)
    q_next = np.where(batch.next_masks, q_next, -np.inf)
    best_next = q_next.max(axis=1)
    best_next = np.where(batch.terminal, 0.0, best_next)
    if not np.isfinite(best_next).all():
        raise ConfigError("non-terminal transition with every next action masked")
    y = batch.rewards + gamma * best_next

    td = q_sa - y
    abs_td = np.abs(td)
    loss = float(np.where(abs_td <= 1.0, 0.5 * td * td, abs_td - 0.5).mean())

    dq = np.zeros_like(q_all)
    dq[rows, batch.actions] = np.clip(td, -1.0, 1.0) / b
    g_w3 = dq.T @ h2
    g_b3 = dq.sum(axis=0)
    dh2 = (dq @ net.w3) * (h2 > 0)
    g_w2 = dh2.T @ h1
    g_b2 = dh2.sum(axis=0)
    dh1 = (dh2 @ net.w2) * (h1 > 0)
    g_w1 = dh1.T @ batch.states
    g_b1 = dh1.sum(axis=0)
    grads = {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2, "w3": g_w3, "b3": g_b3}
    return loss, grads


# ---------------------------------------------------------------------------
# reward


def percentile_rank(rank: int, n: int) -> float:
    """1-based rank mapped to [0, 1], rank 1 -> 1.0, rank N -> 0.0."""
    if rank < 1 or rank > n:
        raise ConfigError(f"rank {rank} outside 1..{n}")
    if n <= 1:
        return 1.0
    return 1.0 - (rank - 1) / (n - 1)


def compute_reward(rank_before: int, rank_after: int, n: int) -> float:
    """Percentile-rank change of the target between consecutive session snapshots."""
    return percentile_rank(rank_after, n) - percentile_rank(rank_before, n)


# ---------------------------------------------------------------------------
# training


def train_dqn(index: SearchIndex, pairs, config: DqnConfig):
    """Train the re-ranker on simulated sessions over the given database.

    Episodes cycle through ``pairs``; every environment round contributes one
    transition per attribute (all sharing the round's reward) and triggers at
    most one optimization step once the replay buffer holds a full batch.
    Returns (net, log).  Deterministic per config.seed.
    """
    from .session import SessionRuntime

    if not pairs:
        raise ConfigError("train_dqn needs at least one query-target pair")
    e_dim = index.model.config.e_dim
    n_attrs = index.n_attributes
    input_dim = config.k_cand * e_dim + n_attrs
    rng = np.random.default_rng(config.seed)
    net = QNetwork.init(input_dim, config.k_cand, config.hidden, rng)
    target = net.copy() if config.target_sync > 0 else None
    buffer = ReplayBuffer(config.replay_capacity, input_dim, config.k_cand)
    velocity = {k: np.zeros_like(v) for k, v in net.params().items()}

    env_rounds = 0
    opt_steps = 0
    zero_state = np.zeros(input_dim)
    zero_mask = np.zeros(config.k_cand, dtype=bool)
    episode_log: list[dict] = []

    for ep in range(config.episodes):
        pair = pairs[ep % len(pairs)]
        session = SessionRuntime(index, pair.query, target=pair.target, strategy="dqn",
                                 k_cand=config.k_cand, max_steps=config.max_steps, qnet=net)
        # transitions wait here until the next round's state is known
        pending: dict[str, tuple[np.ndarray, int, float]] = {}
        losses: list[float] = []
        rewards: list[float] = []
        eps = config.epsilon(env_rounds)

        while session.status == "active":
            pools = session.candidate_pools()
            if not pools:
                break
            eps = config.epsilon(env_rounds)
            states: dict[str, tuple[np.ndarray, np.ndarray]] = {}
            presented: list[tuple[str, str]] = []
            actions: dict[str, int] = {}
            for attr_name, ids in pools:
                state, mask = session.dqn_state(attr_name, ids)
                states[attr_name] = (state, mask)
                act = select_action(net, state, eps, rng, mask)
                actions[attr_name] = act
                presented.append((attr_name, ids[act]))
            for attr_name, (state, mask) in states.items():
                prev = pending.pop(attr_name, None)
                if prev is not None:
                    buffer.push(prev[0], prev[1], prev[2], state, mask, False)
            rank_before = session.target_rank()
            session.apply_simulated(presented)
            reward = compute_reward(rank_before, session.target_rank(), index.n)
            rewards.append(reward)
            for attr_name, (state, _) in states.items():
                pending[attr_name] = (state, actions[attr_name], reward)
            env_rounds += 1

            if len(buffer) >= config.batch_size:
                batch = buffer.sample(config.batch_size, rng)
                loss, grads = huber_td_loss(net, target, batch, config.gamma)
                if not np.isfinite(loss):
                    raise TrainingDivergenceError(f"non-finite TD loss in episode {ep}")
                losses.append(loss)
                params = net.params()
                for key in params:
                    velocity[key] = config.momentum * velocity[key] - config.lr * grads[key]
                    params[key] += velocity[key]
                opt_steps += 1
                if target is not None and opt_steps % config.target_sync == 0:
                    target.load_from(net)

        # session over: everything still pending is terminal
        for attr_name, (state, action, reward) in sorted(pending.items()):
            buffer.push(state, action, reward, zero_state, zero_mask, True)

        episode_log.append({
            "episode": ep,
            "steps": session.step,
            "status": session.status,
            "epsilon": eps,
            "mean_loss": float(np.mean(losses)) if losses else None,
            "mean_reward": float(np.mean(rewards)) if rewards else 0.0,
            "buffer_size": len(buffer),
            "opt_steps": opt_steps,
        })

    log = {"episodes": episode_log, "env_rounds": env_rounds, "opt_steps": opt_steps}
    return net, log


# ---------------------------------------------------------------------------
# checkpoint I/O


_QNET_FORMAT = "attrsearch-qnet"


def save_qnet(net: QNetwork, path: str, config: DqnConfig | None = None,
              log: dict | None = None, meta: dict | None = None) -> None:
    doc = {
        "format": _QNET_FORMAT,
        "version": 1,
        "input_dim": net.input_dim,
        "k_cand": net.k_cand,
        "weights": {k: v.tolist() for k, v in net.params().items()},
        "config": asdict(config) if config is not None else None,
        "meta": meta,
        "log": log,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")


def load_qnet(path: str):
    """Returns (net, config_or_None, log)."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != _QNET_FORMAT or doc.get("version") != 1:
        raise ConfigError(f"{path}: not a version-1 q-network checkpoint")
    weights = {k: np.array(v, dtype=np.float64) for k, v in doc["weights"].items()}
    net = QNetwork(weights, int(doc["input_dim"]), int(doc["k_cand"]))
    config = DqnConfig(**doc["config"]) if doc.get("config") else None
    return net, config, doc.get("log")
