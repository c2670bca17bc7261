"""HTTP service exposing the search engine to interactive clients.

Sessions live in memory and persist as append-only JSONL logs; because every
engine transition is deterministic, replaying a log after a restart rebuilds
the exact session state.  Live sessions never reference a target; sandbox
sessions carry one and expose target-derived fields for demonstration and
parity testing.
"""

from __future__ import annotations

import json
import os
import uuid
import warnings
from datetime import datetime, timezone
from typing import Any

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .data import Item
from .dqn import QNetwork
from .eer import PlattParams
from .errors import ConfigError
from .index import SearchIndex
from .session import STRATEGIES, SessionRuntime

API_PREFIX = "/api/v1"


class SessionResource:
    def __init__(self, session_id: str, runtime: SessionRuntime, mode: str, created_at: str):
        self.session_id = session_id
        self.runtime = runtime
        self.mode = mode
        self.created_at = created_at


class Engine:
    """Owns the index, calibrations, and all session resources."""

    def __init__(self, index: SearchIndex, platt: PlattParams | None = None,
                 qnet: QNetwork | None = None, state_dir: str | None = None,
                 default_strategy: str = "fcs", k_cand: int = 4, max_steps: int = 50):
        if default_strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {default_strategy!r}")
        self.index = index
        self.platt = platt
        self.qnet = qnet
        self.state_dir = state_dir
        self.default_strategy = default_strategy
        self.k_cand = k_cand
        self.max_steps = max_steps
        self.sessions: dict[str, SessionResource] = {}
        if state_dir:
            os.makedirs(state_dir, exist_ok=True)
            self._replay_all()

    def available_strategies(self) -> list[str]:
        out = ["nn", "fcs"]
        if self.platt is not None:
            out.append("eer")
        if self.qnet is not None:
            out.append("dqn")
        return out

    def _check_strategy(self, strategy: str) -> None:
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r}")
        if strategy not in self.available_strategies():
            raise ConfigError(f"strategy {strategy!r} needs artifacts the server was not given")

    def _build_runtime(self, query: str, target: str | None, strategy: str,
                       k_cand: int, max_steps: int) -> SessionRuntime:
        return SessionRuntime(self.index, query, target=target, strategy=strategy,
                              k_cand=k_cand, max_steps=max_steps,
                              platt=self.platt, qnet=self.qnet)

    def create_session(self, query: str, strategy: str | None, mode: str,
                       target: str | None = None, seed: int | None = None,
                       k_cand: int | None = None, max_steps: int | None = None) -> SessionResource:
        strategy = strategy or self.default_strategy
        self._check_strategy(strategy)
        if mode not in ("live", "sandbox"):
            raise ConfigError(f"mode must be live or sandbox, got {mode!r}")
        rng = np.random.default_rng(seed)
        if query == "random":
            query = self.index.ids[int(rng.integers(self.index.n))]
        if mode == "live":
            target = None
        else:
            if target in (None, "random"):
                target = self._random_target(query, rng)
        resource = SessionResource(
            session_id=uuid.uuid4().hex,
            runtime=self._build_runtime(
                query, target, strategy,
                self.k_cand if k_cand is None else k_cand,
                self.max_steps if max_steps is None else max_steps),
            mode=mode,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        self.sessions[resource.session_id] = resource
        self._append(resource.session_id, {
            "type": "created",
            "session_id": resource.session_id,
            "mode": mode,
            "strategy": strategy,
            "query": query,
            "target": target,
            "k_cand": resource.runtime.k_cand,
            "max_steps": resource.runtime.max_steps,
            "created_at": resource.created_at,
        })
        return resource

    def _random_target(self, query: str, rng: np.random.Generator) -> str:
        """Uniform item sharing at least one attribute value with the query."""
        q = self.index.database.get(query)
        pool = [
            it.id for it in self.index.database.items
            if it.id != query and any(it.labels.get(a) == v for a, v in q.labels.items())
        ]
        if not pool:
            raise ConfigError(f"no item shares an attribute value with {query!r}")
        return pool[int(rng.integers(len(pool)))]

    def get(self, session_id: str) -> SessionResource:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise KeyError(f"unknown session {session_id!r}") from None

    def apply_choice(self, resource: SessionResource, step: int,
                     accepted: list[str], chosen: str | None) -> dict:
        runtime = resource.runtime
        pending = runtime.propose()
        if pending is None:
            raise SessionConflict(f"session is {runtime.status}")
        if step != pending["step"]:
            raise SessionConflict(f"expected step {pending['step']}, got {step}")
        record = runtime.apply_feedback(accepted, chosen)
        self._append(resource.session_id, {
            "type": "choice",
            "step": record["step"],
            "accepted": record["accepted"],
            "chosen": record["chosen"],
        })
        return record

    # -- persistence -------------------------------------------------------

    def _log_path(self, session_id: str) -> str | None:
        if not self.state_dir:
            return None
        return os.path.join(self.state_dir, f"{session_id}.jsonl")

    def _append(self, session_id: str, record: dict) -> None:
        path = self._log_path(session_id)
        if path is None:
            return
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record) + "\n")

    def _replay_all(self) -> None:
        for name in sorted(os.listdir(self.state_dir)):
            if name.endswith(".jsonl"):
                self._replay_one(os.path.join(self.state_dir, name))

    def _replay_one(self, path: str) -> None:
        records = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError:
                    warnings.warn(f"{path}: dropping malformed trailing record")
                    break
        if not records or records[0].get("type") != "created":
            warnings.warn(f"{path}: no creation record, skipping")
            return
        head = records[0]
        runtime = self._build_runtime(head["query"], head.get("target"), head["strategy"],
                                      head.get("k_cand", self.k_cand),
                                      head.get("max_steps", self.max_steps))
        resource = SessionResource(head["session_id"], runtime,
                                   head.get("mode", "sandbox"), head.get("created_at", ""))
        for rec in records[1:]:
            if rec.get("type") != "choice":
                continue
            runtime.propose()
            runtime.apply_feedback(rec["accepted"], rec.get("chosen"))
        self.sessions[resource.session_id] = resource


class SessionConflict(Exception):
    pass


# ---------------------------------------------------------------------------
# HTTP layer


class CreateSessionBody(BaseModel):
    query: str = "random"
    strategy: str | None = None
    mode: str = "sandbox"
    target: str | None = None
    seed: int | None = None
    k_cand: int | None = None
    max_steps: int | None = None


class ChoiceBody(BaseModel):
    step: int
    accepted: list[str] = []
    chosen: str | None = None


def _item_payload(item: Item) -> dict:
    return {
        "id": item.id,
        "split": item.split,
        "labels": dict(item.labels),
        "features": [float(x) for x in item.features],
    }


def _session_payload(engine: Engine, resource: SessionResource) -> dict:
    runtime = resource.runtime
    out: dict[str, Any] = {
        "session_id": resource.session_id,
        "mode": resource.mode,
        "strategy": runtime.strategy,
        "status": runtime.status,
        "step": runtime.step,
        "max_steps": runtime.max_steps,
        "query": runtime.query,
        "query_item": _item_payload(engine.index.database.get(runtime.query)),
        "query_history": [runtime.initial_query]
        + [r["chosen"] for r in runtime.rounds if r["chosen"]],
        "created_at": resource.created_at,
    }
    if resource.mode == "sandbox" and runtime.target is not None:
        out["target"] = runtime.target
        out["target_item"] = _item_payload(engine.index.database.get(runtime.target))
        out["initial_rank"] = runtime.initial_rank
        out["target_rank"] = runtime.target_rank()
        out["rank_curve"] = [runtime.initial_rank] + [r["rank_after"] for r in runtime.rounds]
    return out


def create_app(engine: Engine, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="attrsearch", docs_url=f"{API_PREFIX}/docs",
                  openapi_url=f"{API_PREFIX}/openapi.json")

    def fail(status: int, message: str):
        raise HTTPException(status_code=status, detail=message)

    @app.get(f"{API_PREFIX}/meta")
    async def meta():
        schema = engine.index.schema
        return {
            "attributes": [{"name": n, "values": list(v)} for n, v in schema.attributes],
            "n_items": engine.index.n,
            "strategies": engine.available_strategies(),
            "default_strategy": engine.default_strategy,
            "k_cand": engine.k_cand,
            "max_steps": engine.max_steps,
        }

    @app.get(f"{API_PREFIX}/items")
    async def list_items(request: Request, limit: int = 60, offset: int = 0):
        schema = engine.index.schema
        filters = {}
        for key, value in request.query_params.items():
            if key in ("limit", "offset"):
                continue
            if key not in schema.names:
                fail(422, f"unknown attribute filter {key!r}")
            if value not in schema.vocab(key):
                fail(422, f"unknown value {value!r} for attribute {key!r}")
            filters[key] = value
        matched = [
            it for it in engine.index.database.items
            if all(it.labels.get(a) == v for a, v in filters.items())
        ]
        window = matched[offset:offset + max(0, limit)]
        return {"total": len(matched), "offset": offset,
                "items": [_item_payload(it) for it in window]}

    @app.get(f"{API_PREFIX}/items/{{item_id}}")
    async def get_item(item_id: str):
        try:
            return _item_payload(engine.index.database.get(item_id))
        except KeyError:
            fail(404, f"unknown item {item_id!r}")

    @app.post(f"{API_PREFIX}/sessions", status_code=201)
    async def create_session(body: CreateSessionBody):
        try:
            resource = engine.create_session(
                body.query, body.strategy, body.mode, target=body.target,
                seed=body.seed, k_cand=body.k_cand, max_steps=body.max_steps)
        except (ConfigError, KeyError) as e:
            fail(422, str(e))
        return _session_payload(engine, resource)

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}")
    async def get_session(session_id: str):
        try:
            resource = engine.get(session_id)
        except KeyError as e:
            fail(404, str(e))
        return _session_payload(engine, resource)

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}/candidates")
    async def get_candidates(session_id: str):
        try:
            resource = engine.get(session_id)
        except KeyError as e:
            fail(404, str(e))
        runtime = resource.runtime
        pending = runtime.propose()
        if pending is None:
            fail(409, f"session is {runtime.status}")
        cards = []
        target_row = None
        if resource.mode == "sandbox" and runtime.target is not None:
            target_row = engine.index.row_of(runtime.target)
        for attribute, item_id in pending["presented"]:
            card = {
                "attribute": attribute,
                "item": _item_payload(engine.index.database.get(item_id)),
            }
            if target_row is not None:
                d_t = engine.index.pooled_row(target_row)
                card["target_distance"] = float(d_t[engine.index.row_of(item_id)])
            cards.append(card)
        out = {
            "session_id": session_id,
            "step": pending["step"],
            "status": runtime.status,
            "query": runtime.query,
            "candidates": cards,
        }
        if target_row is not None:
            d_t = engine.index.pooled_row(target_row)
            out["query_target_distance"] = float(d_t[engine.index.row_of(runtime.query)])
        return out

    @app.post(f"{API_PREFIX}/sessions/{{session_id}}/choice")
    async def post_choice(session_id: str, body: ChoiceBody):
        try:
            resource = engine.get(session_id)
        except KeyError as e:
            fail(404, str(e))
        try:
            record = engine.apply_choice(resource, body.step, body.accepted, body.chosen)
        except SessionConflict as e:
            fail(409, str(e))
        except ConfigError as e:
            fail(422, str(e))
        return {"round": record, "session": _session_payload(engine, resource)}

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}/history")
    async def get_history(session_id: str):
        try:
            resource = engine.get(session_id)
        except KeyError as e:
            fail(404, str(e))
        record = resource.runtime.record()
        if resource.mode == "live":
            record = {k: v for k, v in record.items()
                      if k not in ("target", "initial_rank")}
            record["rounds"] = [
                {k: v for k, v in r.items() if k != "rank_after"}
                for r in record["rounds"]
            ]
        return record

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}/rank")
    async def get_rank(session_id: str):
        try:
            resource = engine.get(session_id)
        except KeyError as e:
            fail(404, str(e))
        runtime = resource.runtime
        if resource.mode != "sandbox" or runtime.target is None:
            fail(404, "rank probe exists only in sandbox mode")
        return {
            "target": runtime.target,
            "target_rank": runtime.target_rank(),
            "initial_rank": runtime.initial_rank,
            "rank_curve": [runtime.initial_rank] + [r["rank_after"] for r in runtime.rounds],
        }

    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
