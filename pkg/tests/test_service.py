import json

import pytest
from fastapi.testclient import TestClient

from lmelineup.service import create_app


def study_payload(study_id="web1", n_designs=2, replicates=2):
    designs = []
    for d in range(n_designs):
        reps = [{
            "lineup_id": f"k{d}-src{d}-r{r + 1}",
            "replicate_id": f"r{r + 1}",
            "m": 20,
            "seed": r,
            "svg": f"<svg>k{d}-r{r}</svg>",
            "answer_index": (d + r) % 20 + 1,
        } for r in range(replicates)]
        designs.append({"kind": f"k{d}", "source_id": f"src{d}", "replicates": reps})
    return {"study_id": study_id, "session_cap": 10, "serve_seed": 3,
            "designs": designs}


@pytest.fixture
def client(tmp_path):
    return TestClient(create_app(tmp_path))


class TestStudyLifecycle:
    def test_create_then_serve_pick_report(self, client):
        r = client.post("/studies", json=study_payload())
        assert r.status_code == 200
        assert r.json() == {"ok": True, "study_id": "web1", "lineups": 4}

        r = client.get("/studies/web1/next", params={"observer": "obs1"})
        body = r.json()
        assert set(body) == {"lineup_id", "svg"}
        assert body["svg"].startswith("<svg>")

        lid = body["lineup_id"]
        r = client.post(f"/studies/web1/lineups/{lid}/pick", json={
            "observer": "obs1", "panel": 5, "reasons": ["Spread"],
            "confidence": 4, "duration_s": 12.5})
        assert r.status_code == 200
        assert r.json()["K"] == 1

        r = client.get("/studies/web1/report",
                       params={"reps_single": 100000, "reps_combined": 100000})
        doc = r.json()
        assert doc["study_id"] == "web1"
        assert len(doc["replicates"]) == 4

    def test_duplicate_study_rejected(self, client):
        assert client.post("/studies", json=study_payload("dup")).status_code == 200
        r = client.post("/studies", json=study_payload("dup"))
        assert r.status_code == 400
        assert "already exists" in r.json()["error"]

    def test_done_signal_when_exhausted(self, client):
        client.post("/studies", json=study_payload("small", n_designs=1,
                                                   replicates=1))
        r = client.get("/studies/small/next", params={"observer": "o"})
        lid = r.json()["lineup_id"]
        client.post(f"/studies/small/lineups/{lid}/pick",
                    json={"observer": "o", "panel": 1})
        assert client.get("/studies/small/next",
                          params={"observer": "o"}).json() == {"done": True}


class TestValidation:
    def test_out_of_range_panel_400(self, client):
        client.post("/studies", json=study_payload("v1", 1, 1))
        lid = client.get("/studies/v1/next",
                         params={"observer": "o"}).json()["lineup_id"]
        r = client.post(f"/studies/v1/lineups/{lid}/pick",
                        json={"observer": "o", "panel": 21})
        assert r.status_code == 400

    def test_duplicate_pick_400(self, client):
        client.post("/studies", json=study_payload("v2", 1, 1))
        lid = client.get("/studies/v2/next",
                         params={"observer": "o"}).json()["lineup_id"]
        ok = client.post(f"/studies/v2/lineups/{lid}/pick",
                         json={"observer": "o", "panel": 2})
        assert ok.status_code == 200
        dup = client.post(f"/studies/v2/lineups/{lid}/pick",
                          json={"observer": "o", "panel": 3})
        assert dup.status_code == 400

    def test_reveal_flow(self, client):
        client.post("/studies", json=study_payload("v3", 1, 1))
        lid = client.get("/studies/v3/next",
                         params={"observer": "o"}).json()["lineup_id"]
        blocked = client.post(f"/studies/v3/lineups/{lid}/reveal",
                              json={"observer": "o", "confirm": True})
        assert blocked.status_code == 400  # no pick committed yet
        client.post(f"/studies/v3/lineups/{lid}/pick",
                    json={"observer": "o", "panel": 1})
        noconfirm = client.post(f"/studies/v3/lineups/{lid}/reveal",
                                json={"observer": "o"})
        assert noconfirm.status_code == 400
        revealed = client.post(f"/studies/v3/lineups/{lid}/reveal",
                               json={"observer": "o", "confirm": True})
        assert revealed.status_code == 200
        assert revealed.json()["answer_index"] == 1
        assert revealed.json()["correct"] is True


class TestPayloadAudit:
    def test_pre_reveal_payloads_carry_no_answer(self, client):
        client.post("/studies", json=study_payload("audit", 2, 2))
        for i in range(4):
            obs = f"auditor{i}"
            while True:
                r = client.get("/studies/audit/next", params={"observer": obs})
                body = r.json()
                if body.get("done"):
                    break
                assert set(body) == {"lineup_id", "svg"}
                assert "answer" not in json.dumps(body)
                client.post(f"/studies/audit/lineups/{body['lineup_id']}/pick",
                            json={"observer": obs, "panel": 7})
