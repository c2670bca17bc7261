import json

import pytest
from fastapi.testclient import TestClient

from attrsearch import fit_platt
from attrsearch.errors import ConfigError
from attrsearch.service import Engine, create_app


@pytest.fixture(scope="module")
def platt(tiny_model, tiny_dataset):
    return fit_platt(tiny_model, tiny_dataset, n_pairs=2000, seed=0)


@pytest.fixture()
def engine(tiny_index, platt):
    return Engine(tiny_index, platt=platt, max_steps=20)


@pytest.fixture()
def client(engine):
    return TestClient(create_app(engine))


def drive(client, session_id, *, accept_first=True):
    """One manual round: fetch candidates, accept the first card (or none)."""
    cand = client.get(f"/api/v1/sessions/{session_id}/candidates")
    assert cand.status_code == 200
    body = cand.json()
    ids = [c["item"]["id"] for c in body["candidates"]]
    accepted = ids[:1] if accept_first else []
    chosen = accepted[0] if accepted else None
    r = client.post(f"/api/v1/sessions/{session_id}/choice",
                    json={"step": body["step"], "accepted": accepted, "chosen": chosen})
    assert r.status_code == 200
    return body, r.json()


def test_meta(client, tiny_schema):
    r = client.get("/api/v1/meta")
    assert r.status_code == 200
    body = r.json()
    assert [a["name"] for a in body["attributes"]] == list(tiny_schema.names)
    assert body["n_items"] == 80
    assert body["strategies"] == ["nn", "fcs", "eer"]
    assert body["default_strategy"] == "fcs"


def test_strategies_follow_artifacts(tiny_index):
    assert Engine(tiny_index).available_strategies() == ["nn", "fcs"]
    with pytest.raises(ConfigError):
        Engine(tiny_index, default_strategy="bogus")


def test_items_listing_and_filters(client, tiny_dataset):
    r = client.get("/api/v1/items", params={"limit": 5})
    body = r.json()
    assert body["total"] == 80 and len(body["items"]) == 5
    assert body["items"][0]["id"] == tiny_dataset.items[0].id

    red = client.get("/api/v1/items", params={"color": "red", "limit": 1000}).json()
    want = [it.id for it in tiny_dataset.items if it.labels.get("color") == "red"]
    assert [i["id"] for i in red["items"]] == want and red["total"] == len(want)

    page = client.get("/api/v1/items", params={"limit": 3, "offset": 78}).json()
    assert len(page["items"]) == 2

    assert client.get("/api/v1/items", params={"flavor": "sweet"}).status_code == 422
    assert client.get("/api/v1/items", params={"color": "mauve"}).status_code == 422


def test_get_item(client, tiny_dataset):
    item = tiny_dataset.items[3]
    r = client.get(f"/api/v1/items/{item.id}")
    assert r.status_code == 200
    body = r.json()
    assert body["labels"] == dict(item.labels)
    assert len(body["features"]) == tiny_dataset.dim
    assert client.get("/api/v1/items/nope").status_code == 404


def test_create_sandbox_session(client, tiny_dataset):
    r = client.post("/api/v1/sessions", json={"seed": 7})
    assert r.status_code == 201
    body = r.json()
    assert body["mode"] == "sandbox" and body["strategy"] == "fcs"
    assert body["status"] == "active" and body["step"] == 0
    assert body["target"] != body["query"]
    q = tiny_dataset.get(body["query"]).labels
    t = tiny_dataset.get(body["target"]).labels
    assert any(t.get(a) == v for a, v in q.items())
    assert body["initial_rank"] >= 1
    assert body["rank_curve"] == [body["initial_rank"]]
    assert body["query_history"] == [body["query"]]


def test_create_session_is_seeded(client):
    a = client.post("/api/v1/sessions", json={"seed": 11}).json()
    b = client.post("/api/v1/sessions", json={"seed": 11}).json()
    assert (a["query"], a["target"]) == (b["query"], b["target"])
    assert a["session_id"] != b["session_id"]


def test_create_session_validation(client, tiny_dataset):
    post = lambda body: client.post("/api/v1/sessions", json=body).status_code
    ids = [it.id for it in tiny_dataset.items]
    assert post({"strategy": "bogus"}) == 422
    assert post({"strategy": "dqn"}) == 422              # artifact not loaded
    assert post({"mode": "watch"}) == 422
    assert post({"query": "missing-item"}) == 422
    assert post({"query": ids[0], "target": ids[0]}) == 422
    assert post({"max_steps": 0}) == 422


def test_live_mode_hides_target(client, tiny_dataset):
    ids = [it.id for it in tiny_dataset.items]
    r = client.post("/api/v1/sessions",
                    json={"query": ids[0], "target": ids[1], "mode": "live"})
    body = r.json()
    sid = body["session_id"]
    for key in ("target", "target_item", "initial_rank", "target_rank", "rank_curve"):
        assert key not in body
    cand = client.get(f"/api/v1/sessions/{sid}/candidates").json()
    assert "query_target_distance" not in cand
    assert all("target_distance" not in c for c in cand["candidates"])
    drive(client, sid)
    hist = client.get(f"/api/v1/sessions/{sid}/history").json()
    assert "target" not in hist and "initial_rank" not in hist
    assert all("rank_after" not in r for r in hist["rounds"])
    assert client.get(f"/api/v1/sessions/{sid}/rank").status_code == 404


def test_sandbox_exposes_rank_probe(client):
    sid = client.post("/api/v1/sessions", json={"seed": 2}).json()["session_id"]
    cand, _ = drive(client, sid)
    assert "query_target_distance" in cand
    assert all("target_distance" in c for c in cand["candidates"])
    rank = client.get(f"/api/v1/sessions/{sid}/rank").json()
    assert rank["target_rank"] >= 1
    assert len(rank["rank_curve"]) == 2
    assert rank["rank_curve"][0] == rank["initial_rank"]


def test_candidates_idempotent_until_choice(client):
    sid = client.post("/api/v1/sessions", json={"seed": 3}).json()["session_id"]
    url = f"/api/v1/sessions/{sid}/candidates"
    a = client.get(url).json()
    b = client.get(url).json()
    assert a == b
    ids = [c["item"]["id"] for c in a["candidates"]]
    client.post(f"/api/v1/sessions/{sid}/choice",
                json={"step": a["step"], "accepted": [], "chosen": None})
    c = client.get(url).json()
    assert c["step"] == a["step"] + 1
    assert [x["item"]["id"] for x in c["candidates"]] != ids


def test_choice_step_echo_conflicts(client):
    sid = client.post("/api/v1/sessions", json={"seed": 4}).json()["session_id"]
    cand = client.get(f"/api/v1/sessions/{sid}/candidates").json()
    url = f"/api/v1/sessions/{sid}/choice"
    stale = client.post(url, json={"step": cand["step"] + 1, "accepted": []})
    assert stale.status_code == 409
    ok = client.post(url, json={"step": cand["step"], "accepted": []})
    assert ok.status_code == 200
    replay = client.post(url, json={"step": cand["step"], "accepted": []})
    assert replay.status_code == 409


def test_choice_validates_membership(client):
    sid = client.post("/api/v1/sessions", json={"seed": 5}).json()["session_id"]
    cand = client.get(f"/api/v1/sessions/{sid}/candidates").json()
    ids = [c["item"]["id"] for c in cand["candidates"]]
    url = f"/api/v1/sessions/{sid}/choice"
    bad = client.post(url, json={"step": cand["step"],
                                 "accepted": ["not-shown"], "chosen": "not-shown"})
    assert bad.status_code == 422
    bad = client.post(url, json={"step": cand["step"], "accepted": ids[:1]})
    assert bad.status_code == 422                        # accepted needs a chosen


def test_session_runs_to_terminal(client):
    sid = client.post("/api/v1/sessions", json={"seed": 6, "max_steps": 3}).json()["session_id"]
    last = None
    for _ in range(3):
        state = client.get(f"/api/v1/sessions/{sid}").json()
        if state["status"] != "active":
            break
        _, last = drive(client, sid)
    state = client.get(f"/api/v1/sessions/{sid}").json()
    assert state["status"] in ("found", "capped", "exhausted")
    assert client.get(f"/api/v1/sessions/{sid}/candidates").status_code == 409
    if last is not None:
        assert last["session"]["step"] == state["step"]


def test_unknown_session_is_404(client):
    assert client.get("/api/v1/sessions/deadbeef").status_code == 404
    assert client.get("/api/v1/sessions/deadbeef/candidates").status_code == 404
    assert client.post("/api/v1/sessions/deadbeef/choice",
                       json={"step": 1, "accepted": []}).status_code == 404
    assert client.get("/api/v1/sessions/deadbeef/history").status_code == 404


def test_history_matches_runtime_record(client, tiny_dataset):
    ids = [it.id for it in tiny_dataset.items]
    sid = client.post("/api/v1/sessions",
                      json={"query": ids[0], "mode": "live"}).json()["session_id"]
    drive(client, sid)
    drive(client, sid, accept_first=False)
    hist = client.get(f"/api/v1/sessions/{sid}/history").json()
    assert len(hist["rounds"]) == 2
    assert hist["rounds"][0]["step"] == 1
    assert hist["rounds"][1]["accepted"] == []
    assert hist["status"] == client.get(f"/api/v1/sessions/{sid}").json()["status"]


def test_persistence_replays_sessions(tiny_index, platt, tmp_path):
    state = str(tmp_path / "state")
    first = Engine(tiny_index, platt=platt, state_dir=state, max_steps=20)
    client = TestClient(create_app(first))
    sid = client.post("/api/v1/sessions", json={"seed": 9}).json()["session_id"]
    drive(client, sid)
    if client.get(f"/api/v1/sessions/{sid}").json()["status"] == "active":
        drive(client, sid, accept_first=False)
    before = client.get(f"/api/v1/sessions/{sid}").json()
    hist_before = client.get(f"/api/v1/sessions/{sid}/history").json()
    cand_before = client.get(f"/api/v1/sessions/{sid}/candidates")

    second = Engine(tiny_index, platt=platt, state_dir=state, max_steps=20)
    client2 = TestClient(create_app(second))
    after = client2.get(f"/api/v1/sessions/{sid}").json()
    assert after == before
    assert client2.get(f"/api/v1/sessions/{sid}/history").json() == hist_before
    cand_after = client2.get(f"/api/v1/sessions/{sid}/candidates")
    assert cand_after.status_code == cand_before.status_code
    if cand_before.status_code == 200:
        assert cand_after.json() == cand_before.json()


def test_replay_survives_torn_write(tiny_index, platt, tmp_path):
    state = str(tmp_path / "state")
    first = Engine(tiny_index, platt=platt, state_dir=state, max_steps=20)
    client = TestClient(create_app(first))
    sid = client.post("/api/v1/sessions", json={"seed": 10}).json()["session_id"]
    drive(client, sid)
    snapshot = client.get(f"/api/v1/sessions/{sid}").json()

    path = tmp_path / "state" / f"{sid}.jsonl"
    with open(path, "a", encoding="utf-8") as f:
        f.write('{"type": "choice", "step": 2, "acc')
    (tmp_path / "state" / "junk.jsonl").write_text('{"type": "noise"}\n')

    with pytest.warns(UserWarning):
        second = Engine(tiny_index, platt=platt, state_dir=state, max_steps=20)
    client2 = TestClient(create_app(second))
    assert client2.get(f"/api/v1/sessions/{sid}").json() == snapshot


def test_choices_append_to_log(tiny_index, platt, tmp_path):
    state = str(tmp_path / "state")
    engine = Engine(tiny_index, platt=platt, state_dir=state, max_steps=20)
    client = TestClient(create_app(engine))
    sid = client.post("/api/v1/sessions", json={"seed": 12}).json()["session_id"]
    drive(client, sid)
    lines = [json.loads(l) for l in
             (tmp_path / "state" / f"{sid}.jsonl").read_text().splitlines()]
    assert [r["type"] for r in lines] == ["created", "choice"]
    assert lines[0]["session_id"] == sid
    assert lines[1]["step"] == 1
