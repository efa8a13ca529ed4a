"""HTTP session service: protocol, state machine, and engine equivalence."""
import json

import pytest
from fastapi.testclient import TestClient

from supplygame import service, telemetry
from supplygame.flowsim import ScenarioConfig, run_standalone


@pytest.fixture
def client():
    return TestClient(service.create_app(service_seed=1))


def create(client, **kwargs):
    resp = client.post("/sessions", json=kwargs)
    assert resp.status_code == 200
    return resp.json()


def play_out(client, sid, order_fn=None, allocation="Proportional"):
    """Drive a session to completion; defaults to following the suggestion."""
    view = client.get(f"/sessions/{sid}/view").json()
    while view["awaiting"] != "Done":
        if view["awaiting"] == "Allocation":
            view = client.post(
                f"/sessions/{sid}/allocation", json={"policy": allocation}
            ).json()
        else:
            qty = order_fn(view) if order_fn else view["suggestion"]
            view = client.post(f"/sessions/{sid}/order", json={"quantity": qty}).json()
    return view


class TestSessionLifecycle:
    def test_create_defaults(self, client):
        view = create(client, condition="NoInfo", seed=3)
        assert view["week"] == 21
        assert view["awaiting"] in ("Order", "Allocation")
        assert view["condition"] == "NoInfo"
        assert "session_id" in view
        assert view["ledger"]["total_profit"] == 0

    def test_health_counts_sessions(self, client):
        assert client.get("/health").json() == {"status": "ok", "sessions": 0}
        create(client, condition="Info", seed=1)
        assert client.get("/health").json()["sessions"] == 1

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/view").status_code == 404
        assert client.post("/sessions/nope/order", json={"quantity": 1}).status_code == 404

    def test_unknown_condition_422(self, client):
        assert client.post("/sessions", json={"condition": "Both"}).status_code == 422

    def test_random_condition_is_seeded(self):
        def draw():
            c = TestClient(service.create_app(service_seed=42))
            return [create(c)["condition"] for _ in range(6)]

        assert draw() == draw()

    def test_completion_summary(self, client):
        view = create(client, condition="NoInfo", seed=3)
        done = play_out(client, view["session_id"])
        assert done["awaiting"] == "Done"
        assert done["weeks_played"] == 35
        assert done["total_profit"] == (
            done["total_revenue"] - done["total_holding_cost"] - done["total_stockout_cost"]
        )

    def test_view_after_done_is_summary(self, client):
        view = create(client, condition="NoInfo", seed=3)
        play_out(client, view["session_id"])
        again = client.get(f"/sessions/{view['session_id']}/view").json()
        assert again["awaiting"] == "Done" and "weeks_played" in again


class TestStateMachine:
    def test_order_while_awaiting_allocation_409(self, client):
        # sub-suggestion orders starve inventory until an allocation is needed
        view = create(client, condition="NoInfo", seed=3)
        sid = view["session_id"]
        while view["awaiting"] == "Order":
            view = client.post(f"/sessions/{sid}/order", json={"quantity": 0}).json()
        assert view["awaiting"] == "Allocation"
        assert "suggestion" not in view  # unknown until shipping resolves
        resp = client.post(f"/sessions/{sid}/order", json={"quantity": 5})
        assert resp.status_code == 409

    def test_allocation_when_not_needed_409(self, client):
        view = create(client, condition="NoInfo", seed=3)
        assert view["awaiting"] == "Order"
        resp = client.post(
            f"/sessions/{view['session_id']}/allocation", json={"policy": "HC1First"}
        )
        assert resp.status_code == 409

    def test_unknown_policy_422(self, client):
        view = create(client, condition="NoInfo", seed=3)
        sid = view["session_id"]
        while view["awaiting"] == "Order":
            view = client.post(f"/sessions/{sid}/order", json={"quantity": 0}).json()
        resp = client.post(f"/sessions/{sid}/allocation", json={"policy": "Random"})
        assert resp.status_code == 422

    def test_negative_order_rejected(self, client):
        view = create(client, condition="NoInfo", seed=3)
        resp = client.post(
            f"/sessions/{view['session_id']}/order", json={"quantity": -1}
        )
        assert resp.status_code == 422

    def test_order_after_done_409(self, client):
        view = create(client, condition="NoInfo", seed=3)
        play_out(client, view["session_id"])
        resp = client.post(f"/sessions/{view['session_id']}/order", json={"quantity": 1})
        assert resp.status_code == 409


class TestConditionVisibility:
    def test_info_sees_manufacturer_inventory(self, client):
        view = create(client, condition="Info", seed=3)
        assert "manufacturer_inventory" in view
        assert isinstance(view["manufacturer_inventory"], int)

    def test_noinfo_payloads_never_mention_it(self, client):
        view = create(client, condition="NoInfo", seed=3)
        sid = view["session_id"]
        payloads = [json.dumps(view)]

        def order(v):
            payloads.append(json.dumps(v))
            return v["suggestion"]

        play_out(client, sid, order_fn=order)
        payloads.append(client.get(f"/sessions/{sid}/view").text)
        assert not any("manufacturer_inventory" in p for p in payloads)

    def test_news_flag_only_at_announcement(self, client):
        view = create(client, condition="NoInfo", seed=3)
        sid = view["session_id"]
        seen = {}
        while view["awaiting"] != "Done":
            if view["awaiting"] == "Order":
                seen[view["week"]] = view.get("news")
                view = client.post(
                    f"/sessions/{sid}/order", json={"quantity": view["suggestion"]}
                ).json()
            else:
                view = client.post(
                    f"/sessions/{sid}/allocation", json={"policy": "Proportional"}
                ).json()
        assert seen[28] == "capacity_disruption"
        assert all(v is None for w, v in seen.items() if w != 28)


class TestEngineEquivalence:
    def test_suggestion_play_matches_standalone(self, client):
        cfg = ScenarioConfig(condition="NoInfo", rng_seed=9)
        view = create(client, condition="NoInfo", seed=9, player_id="EQ")
        play_out(client, view["session_id"])
        served = client.get(f"/sessions/{view['session_id']}/telemetry").text
        direct = run_standalone(cfg, player_id="EQ")
        assert served == telemetry.dumps_episode(direct)

    def test_fresh_session_telemetry_empty(self, client):
        view = create(client, condition="NoInfo", seed=3)
        ep = telemetry.loads_episode(
            client.get(f"/sessions/{view['session_id']}/telemetry").text
        )
        assert ep.weeks == []

    def test_interleaved_sessions_independent(self, client):
        a = create(client, condition="NoInfo", seed=9, player_id="EQ")["session_id"]
        b = create(client, condition="Info", seed=77, player_id="X")["session_id"]
        va = client.get(f"/sessions/{a}/view").json()
        vb = client.get(f"/sessions/{b}/view").json()
        while va["awaiting"] != "Done" or vb["awaiting"] != "Done":
            for sid, v in ((a, va), (b, vb)):
                if v["awaiting"] == "Allocation":
                    client.post(f"/sessions/{sid}/allocation", json={"policy": "Proportional"})
                elif v["awaiting"] == "Order":
                    client.post(f"/sessions/{sid}/order", json={"quantity": v["suggestion"]})
            va = client.get(f"/sessions/{a}/view").json()
            vb = client.get(f"/sessions/{b}/view").json()
        served = client.get(f"/sessions/{a}/telemetry").text
        direct = run_standalone(ScenarioConfig(condition="NoInfo", rng_seed=9), player_id="EQ")
        assert served == telemetry.dumps_episode(direct)


class TestPersistenceAndExpiry:
    def test_episode_written_on_completion(self, tmp_path):
        client = TestClient(
            service.create_app(service_seed=1, telemetry_dir=tmp_path)
        )
        view = create(client, condition="NoInfo", seed=9, player_id="SAVE")
        play_out(client, view["session_id"])
        ep = telemetry.read_episode(tmp_path / "SAVE.episode")
        assert ep.player_id == "SAVE"
        assert len(ep.weeks) == 35

    def test_idle_sessions_expire(self):
        client = TestClient(service.create_app(service_seed=1, session_timeout=0.0))
        view = create(client, condition="NoInfo", seed=3)
        client.get("/health")  # purge pass
        assert client.get(f"/sessions/{view['session_id']}/view").status_code == 404
