"""Search-session state machine, database ranking, simulated user, benchmark.

A session holds the query, the accumulated constraint set, and per-attribute
satisfied-constraint counts over the whole database, updated incrementally as
feedback arrives.  Each round selects K_cand candidates per attribute
(disjoint across attributes), presents one per attribute according to the
strategy, folds the accept/reject feedback into constraints, and promotes the
chosen candidate to be the next query.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .data import QueryTargetPair
from .dqn import QNetwork, q_forward
from .eer import PlattParams, eer_rerank
from .errors import ConfigError
from .index import SearchIndex
from .selection import ConstraintSet, fcs_select, nn_select, update_constraints

STRATEGIES = ("nn", "fcs", "eer", "dqn")


class SessionRuntime:
    def __init__(self, index: SearchIndex, query: str, target: str | None = None,
                 strategy: str = "fcs", k_cand: int = 4, max_steps: int = 50,
                 platt: PlattParams | None = None, qnet: QNetwork | None = None):
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r}")
        if strategy == "eer" and platt is None:
            raise ConfigError("the eer strategy needs fitted Platt parameters")
        if strategy == "dqn" and qnet is None:
            raise ConfigError("the dqn strategy needs a q-network")
        if max_steps < 1 or k_cand < 1:
            raise ConfigError("max_steps and k_cand must be >= 1")
        index.row_of(query)
        if target is not None:
            index.row_of(target)
            if target == query:
                raise ConfigError("query and target must differ")
        self.index = index
        self.strategy = strategy
        self.k_cand = k_cand
        self.max_steps = max_steps
        self.platt = platt
        self.qnet = qnet
        self.initial_query = query
        self.query = query
        self.target = target
        self.constraints = ConstraintSet()
        self.presented_order: list[str] = []
        self.seen: set[str] = {query}
        self.step = 0
        self.status = "active"
        self.rounds: list[dict] = []
        e, n = index.n_attributes, index.n
        self._counts_space = np.zeros((e, n), dtype=np.int64)
        self._counts_pooled = np.zeros(n, dtype=np.int64)
        self._pending: dict | None = None
        self.initial_rank = self.target_rank() if target is not None else None

    # ------------------------------------------------------------------
    # ranking

    def rank_rows(self) -> np.ndarray:
        """All database rows ordered by the current model.

        Descending pooled constraint score, then ascending pooled distance to
        the query, then ascending item id.
        """
        d_q = self.index.pooled_row(self.index.row_of(self.query))
        return np.lexsort((self.index.id_rank, d_q, -self._counts_pooled))

    def target_rank(self) -> int:
        if self.target is None:
            raise ConfigError("session has no target")
        row_t = self.index.row_of(self.target)
        order = self.rank_rows()
        return int(np.nonzero(order == row_t)[0][0]) + 1

    def proxy_target(self) -> str:
        """Highest-ranked item that has not been shown yet."""
        for row in self.rank_rows():
            item_id = self.index.ids[row]
            if item_id not in self.seen:
                return item_id
        raise ConfigError("every database item has been presented")

    # ------------------------------------------------------------------
    # candidate selection

    def candidate_pools(self) -> list[tuple[str, list[str]]]:
        """K_cand-candidate pool per attribute, disjoint across attributes.

        Attributes are processed in schema order; each pool excludes the
        query, everything already shown, and items pooled earlier in the same
        round.  Attributes with no eligible items are skipped; when nothing
        is eligible at all the session becomes exhausted.
        """
        pools: list[tuple[str, list[str]]] = []
        taken: set[str] = set()
        for name in self.index.schema.names:
            excluded = self.seen | taken
            if self.strategy == "nn" or len(self.constraints) == 0:
                sel = nn_select(self.index, self.query, name, self.k_cand, excluded)
            else:
                a = self.index.attr_index(name)
                sel = fcs_select(self.index, self.query, name, self.k_cand, excluded,
                                 self.constraints, counts=self._counts_space[a])
            if sel.ids:
                pools.append((name, sel.ids))
                taken.update(sel.ids)
        if not pools and self.status == "active":
            self.status = "exhausted"
        return pools

    def dqn_state(self, attribute: str, pool_ids: Sequence[str]):
        """(state, action_mask) for one attribute's candidate list."""
        a = self.index.attr_index(attribute)
        e_dim = self.index.reps.shape[2]
        row_q = self.index.row_of(self.query)
        blocks = np.zeros((self.k_cand, e_dim))
        mask = np.zeros(self.k_cand, dtype=bool)
        for i, c in enumerate(pool_ids[: self.k_cand]):
            blocks[i] = self.index.reps[a, self.index.row_of(c)] - self.index.reps[a, row_q]
            mask[i] = True
        one_hot = np.zeros(self.index.n_attributes)
        one_hot[a] = 1.0
        return np.concatenate([blocks.ravel(), one_hot]), mask

    def _present(self, pools: list[tuple[str, list[str]]]) -> list[tuple[str, str]]:
        """One (attribute, item) per pool according to the strategy."""
        if self.strategy in ("nn", "fcs"):
            return [(name, ids[0]) for name, ids in pools]
        if self.strategy == "eer":
            return eer_rerank(pools, self.index, self.query, self.constraints,
                              self.proxy_target(), self.platt,
                              counts_pooled=self._counts_pooled)
        presented = []
        for name, ids in pools:
            state, mask = self.dqn_state(name, ids)
            q = q_forward(self.qnet, state, mask)
            presented.append((name, ids[int(np.argmax(q))]))
        return presented

    def propose(self) -> dict | None:
        """The next round's candidates; stable until feedback is applied.

        Returns None when the session is not active (including the exhausted
        state discovered here).
        """
        if self.status != "active":
            return None
        if self._pending is None:
            pools = self.candidate_pools()
            if not pools:
                return None
            self._pending = {
                "step": self.step + 1,
                "pools": {name: list(ids) for name, ids in pools},
                "presented": self._present(pools),
            }
        return self._pending

    # ------------------------------------------------------------------
    # feedback

    def simulated_feedback(self, presented: Sequence[str]):
        """(accepted, chosen) under the simulated user.

        A candidate is accepted iff its pooled distance to the target is
        strictly below the query's; the chosen one minimizes that distance,
        ties by id.  Returns ([], None) when nothing improves on the query.
        """
        if self.target is None:
            raise ConfigError("simulated feedback needs a target")
        d_t = self.index.pooled_row(self.index.row_of(self.target))
        d_query = d_t[self.index.row_of(self.query)]
        accepted = [c for c in presented if d_t[self.index.row_of(c)] < d_query]
        if not accepted:
            return [], None
        chosen = min(accepted, key=lambda c: (d_t[self.index.row_of(c)], c))
        return accepted, chosen

    def apply_feedback(self, accepted: Iterable[str], chosen: str | None) -> dict:
        """Fold one round of feedback; returns the round's log record."""
        if self.status != "active":
            raise ConfigError(f"session is {self.status}")
        round_info = self.propose()
        if round_info is None:
            raise ConfigError("session exhausted before feedback")
        presented_pairs = round_info["presented"]
        presented_ids = [item for _, item in presented_pairs]
        accepted = list(accepted)
        accepted_set = set(accepted)
        if not accepted_set <= set(presented_ids):
            raise ConfigError("accepted ids must be among the presented candidates")
        if accepted_set and (chosen is None or chosen not in accepted_set):
            raise ConfigError("chosen must be one of the accepted candidates")
        if not accepted_set and chosen is not None:
            raise ConfigError("chosen given without any accepted candidate")

        step = round_info["step"]
        old_query = self.query
        extended = update_constraints(self.constraints, old_query, presented_ids,
                                      accepted_set, iteration=step)
        added = [extended[i] for i in range(len(self.constraints), len(extended))]
        self.constraints = extended
        self._absorb_constraints(added)

        self.presented_order.extend(presented_ids)
        self.seen.update(presented_ids)
        if chosen is not None:
            self.query = chosen
        self.step = step
        found = self.target is not None and self.target in presented_ids
        if found:
            self.status = "found"
        elif step >= self.max_steps:
            self.status = "capped"

        record = {
            "step": step,
            "presented": [{"attribute": a, "id": i} for a, i in presented_pairs],
            "accepted": [i for i in presented_ids if i in accepted_set],
            "chosen": chosen,
            "query_after": self.query,
            "status": self.status,
        }
        if round_info.get("pools"):
            record["pools"] = round_info["pools"]
        if self.target is not None:
            record["rank_after"] = self.target_rank()
        self.rounds.append(record)
        self._pending = None
        return record

    def _absorb_constraints(self, added) -> None:
        for c in added:
            row_c = self.index.row_of(c.closer)
            row_f = self.index.row_of(c.farther)
            for a in range(self.index.n_attributes):
                self._counts_space[a] += (
                    self.index.dist_row(a, row_c) < self.index.dist_row(a, row_f)
                )
            self._counts_pooled += self.index.pooled_row(row_c) < self.index.pooled_row(row_f)

    def apply_simulated(self, presented: list[tuple[str, str]]) -> dict:
        """Apply simulated feedback for an externally chosen presentation.

        Used by the re-ranker training loop, which picks the per-attribute
        actions itself.
        """
        if self.status != "active":
            raise ConfigError(f"session is {self.status}")
        self._pending = {"step": self.step + 1, "pools": None, "presented": presented}
        accepted, chosen = self.simulated_feedback([item for _, item in presented])
        return self.apply_feedback(accepted, chosen)

    def run(self) -> dict:
        """Drive the session with the simulated user until it terminates."""
        if self.target is None:
            raise ConfigError("run() needs a target")
        while self.status == "active":
            round_info = self.propose()
            if round_info is None:
                break
            presented_ids = [item for _, item in round_info["presented"]]
            accepted, chosen = self.simulated_feedback(presented_ids)
            self.apply_feedback(accepted, chosen)
        return self.record()

    def record(self) -> dict:
        return {
            "query": self.initial_query,
            "target": self.target,
            "strategy": self.strategy,
            "k_cand": self.k_cand,
            "max_steps": self.max_steps,
            "steps": self.step,
            "status": self.status,
            "initial_rank": self.initial_rank,
            "rounds": self.rounds,
        }


# ---------------------------------------------------------------------------
# module-level operation surface


def rank_database(session: SessionRuntime) -> list[str]:
    """Every database item id, best match first, under the session's model."""
    return [session.index.ids[r] for r in session.rank_rows()]


def run_session(index: SearchIndex, pair: QueryTargetPair, strategy: str,
                max_steps: int = 50, k_cand: int = 4,
                platt: PlattParams | None = None, qnet: QNetwork | None = None):
    """(steps, rank_curve, log) for one simulated session.

    The rank curve starts with the target's initial rank and appends its
    post-feedback rank after every round.
    """
    session = SessionRuntime(index, pair.query, target=pair.target, strategy=strategy,
                             k_cand=k_cand, max_steps=max_steps, platt=platt, qnet=qnet)
    log = session.run()
    curve = [log["initial_rank"]] + [r["rank_after"] for r in log["rounds"]]
    return log["steps"], curve, log


def rank_curve_table(logs: Sequence[dict]) -> list[dict]:
    """Per-iteration mean/std of the target rank over the sessions still running."""
    curves = [[log["initial_rank"]] + [r["rank_after"] for r in log["rounds"]] for log in logs]
    longest = max(len(c) for c in curves)
    table = []
    for i in range(longest):
        ranks = np.array([c[i] for c in curves if len(c) > i], dtype=np.float64)
        table.append({
            "iteration": i,
            "mean_rank": float(ranks.mean()),
            "std_rank": float(ranks.std()),
            "sessions": int(len(ranks)),
        })
    return table


def benchmark(index: SearchIndex, pairs: Sequence[QueryTargetPair],
              strategies: Sequence[str], max_steps: int = 50, k_cand: int = 4,
              platt: PlattParams | None = None, qnet: QNetwork | None = None,
              seed: int = 0):
    """Run every strategy over the identical pair list.

    Returns (report, logs) where logs maps strategy name to per-session
    records and the report carries mean/std steps plus the rank-curve table.
    Capped and exhausted sessions contribute their final step count.
    """
    if not pairs:
        raise ConfigError("benchmark needs at least one pair")
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise ConfigError(f"unknown strategies: {unknown}")
    logs: dict[str, list[dict]] = {}
    report: dict = {
        "n_pairs": len(pairs),
        "max_steps": max_steps,
        "k_cand": k_cand,
        "seed": seed,
        "strategies": {},
    }
    for strategy in strategies:
        session_logs = []
        for pair in pairs:
            _, _, log = run_session(index, pair, strategy, max_steps=max_steps,
                                    k_cand=k_cand, platt=platt, qnet=qnet)
            session_logs.append(log)
        logs[strategy] = session_logs
        steps = np.array([log["steps"] for log in session_logs], dtype=np.float64)
        found = sum(1 for log in session_logs if log["status"] == "found")
        report["strategies"][strategy] = {
            "mean_steps": float(steps.mean()),
            "std_steps": float(steps.std()),
            "found_rate": found / len(pairs),
            "rank_curve": rank_curve_table(session_logs),
        }
    return report, logs


def save_session_logs(logs: Sequence[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for log in logs:
            f.write(json.dumps(log) + "\n")


def load_session_logs(path: str) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def save_benchmark_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
        f.write("\n")


def load_benchmark_report(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
