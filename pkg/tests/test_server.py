import functools
import json
import math
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

import whatif
from whatif.server import ServerConfig, create_app

GOLDEN_DIR = Path(__file__).parent / "golden"


def _client(**overrides):
    config = ServerConfig(shapley_permutations=2, **overrides)
    app = create_app(config)
    return app, TestClient(app)


def _marketing_csv(rows=80, seed=5):
    dataset, _ = whatif.generate_synthetic("marketing_mix", rows, seed)
    return whatif.serialize_csv(dataset).encode()


def _upload(client, csv_bytes):
    response = client.post("/api/datasets", content=csv_bytes)
    assert response.status_code == 201
    return response.json()["dataset_id"]


def _session(client, dataset_id, **body):
    payload = {"dataset_id": dataset_id, **body}
    response = client.post("/api/sessions", json=payload)
    assert response.status_code == 201, response.text
    return response.json()


def _assert_finite(obj, path="$"):
    if isinstance(obj, float):
        assert math.isfinite(obj), f"non-finite at {path}"
    elif isinstance(obj, dict):
        for k, v in obj.items():
            _assert_finite(v, f"{path}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _assert_finite(v, f"{path}[{i}]")


@pytest.fixture(scope="module")
def linear_setup():
    app, client = _client()
    dataset_id = _upload(client, _marketing_csv())
    session = _session(client, dataset_id, kpi="sales", seed=1)
    return app, client, dataset_id, session


class TestDatasets:
    def test_upload_reports_schema(self):
        _, client = _client()
        response = client.post("/api/datasets", content=b"x,y\n1,2\n3,4\n")
        assert response.status_code == 201
        body = response.json()
        assert body["row_count"] == 2
        assert body["dropped_rows"] == 0
        assert [c["kind"] for c in body["columns"]] == ["numeric", "numeric"]

    def test_header_only_rejected(self):
        _, client = _client()
        response = client.post("/api/datasets", content=b"x,y\n")
        assert response.status_code == 422
        body = response.json()
        assert body["code"] == "bad_data"
        assert "no data rows" in body["message"]

    def test_empty_body_rejected(self):
        _, client = _client()
        assert client.post("/api/datasets", content=b"").status_code == 422

    def test_synthetic_marks_binary_kpi(self):
        _, client = _client()
        response = client.post(
            "/api/datasets/synthetic",
            json={"use_case": "deal_closing", "rows": 60, "seed": 1},
        )
        assert response.status_code == 201
        body = response.json()
        kinds = {c["name"]: c["kind"] for c in body["columns"]}
        assert kinds["Deal Closed?"] == "binary"
        assert body["ground_truth"]["kpi"] == "Deal Closed?"

    def test_rows_pagination(self, linear_setup):
        _, client, dataset_id, _ = linear_setup
        response = client.get(f"/api/datasets/{dataset_id}/rows?offset=10&limit=5")
        body = response.json()
        assert len(body["rows"]) == 5
        assert body["total"] == 80
        assert body["columns"][0] == "Internet"

    def test_unknown_dataset_404(self):
        _, client = _client()
        assert client.get("/api/datasets/nope").status_code == 404


class TestSessions:
    def test_create_reports_model_and_importance(self, linear_setup):
        _, _, _, session = linear_setup
        assert session["kpi_kind"] == "continuous"
        assert 0.0 < session["confidence"] <= 1.0
        entries = session["importance"]["entries"]
        values = [e["importance"] for e in entries]
        assert values == sorted(values, reverse=True)
        assert all(-1.0 <= v <= 1.0 for v in values)

    def test_same_body_is_idempotent(self, linear_setup):
        _, client, dataset_id, session = linear_setup
        repeat = client.post(
            "/api/sessions", json={"dataset_id": dataset_id, "kpi": "sales", "seed": 1}
        )
        assert repeat.status_code == 201
        assert repeat.json() == session

    def test_get_session_idempotent(self, linear_setup):
        _, client, _, session = linear_setup
        a = client.get(f"/api/sessions/{session['session_id']}")
        b = client.get(f"/api/sessions/{session['session_id']}")
        assert a.status_code == 200
        assert a.json() == b.json() == session

    def test_unknown_dataset_404(self):
        _, client = _client()
        response = client.post("/api/sessions", json={"dataset_id": "zzz", "kpi": "x"})
        assert response.status_code == 404
        assert response.json()["code"] == "unknown_dataset"

    def test_text_kpi_rejected_422(self):
        _, client = _client()
        dataset, _ = whatif.generate_synthetic("deal_closing", 60, 1)
        dataset_id = _upload(client, whatif.serialize_csv(dataset).encode())
        response = client.post(
            "/api/sessions", json={"dataset_id": dataset_id, "kpi": "Account"}
        )
        assert response.status_code == 422

    def test_single_class_kpi_409(self):
        _, client = _client()
        rows = "\n".join(f"{i},0" for i in range(1, 11))
        csv = f"x,label\n{rows}\n,1\n"  # the only 1 row is dropped
        dataset_id = _upload(client, csv.encode())
        response = client.post(
            "/api/sessions",
            json={"dataset_id": dataset_id, "kpi": "label",
                  "hyper": {"cv_folds": 2, "n_trees": 4}},
        )
        assert response.status_code == 409
        assert response.json()["code"] == "single_class_kpi"

    def test_bad_hyper_rejected(self, linear_setup):
        _, client, dataset_id, _ = linear_setup
        response = client.post(
            "/api/sessions",
            json={"dataset_id": dataset_id, "kpi": "sales", "hyper": {"bogus": 1}},
        )
        assert response.status_code == 422

    def test_unknown_session_404(self):
        _, client = _client()
        assert client.get("/api/sessions/missing").status_code == 404


class TestAnalysisEndpoints:
    def test_empty_spec_zero_uplift(self, linear_setup):
        _, client, _, session = linear_setup
        response = client.post(
            f"/api/sessions/{session['session_id']}/sensitivity", json={"items": []}
        )
        body = response.json()
        assert body["uplift"] == 0.0
        assert body["uplift_display"] == "0.00"
        assert body["baseline_kpi"] == session["baseline_kpi"]

    def test_percentage_perturbation(self, linear_setup):
        _, client, _, session = linear_setup
        response = client.post(
            f"/api/sessions/{session['session_id']}/sensitivity",
            json={"items": [{"driver": "Internet", "mode": "percentage", "amount": 40}]},
        )
        body = response.json()
        assert body["uplift"] > 0.0
        assert body["uplift_display"].startswith("+")

    def test_bad_driver_422(self, linear_setup):
        _, client, _, session = linear_setup
        response = client.post(
            f"/api/sessions/{session['session_id']}/sensitivity",
            json={"items": [{"driver": "ghost", "mode": "absolute", "amount": 1}]},
        )
        assert response.status_code == 422

    def test_comparison_grid_contract(self, linear_setup):
        _, client, _, session = linear_setup
        response = client.post(
            f"/api/sessions/{session['session_id']}/comparison",
            json={"mode": "percentage", "lo": -50, "hi": 50, "steps": 11},
        )
        body = response.json()
        assert len(body["curves"]) == len(session["drivers"])
        for curve in body["curves"]:
            assert len(curve["points"]) == 11
            at_zero = [p["kpi"] for p in curve["points"] if p["amount"] == 0.0]
            assert at_zero == [session["baseline_kpi"]]

    def test_row_sensitivity_and_404(self, linear_setup):
        _, client, _, session = linear_setup
        sid = session["session_id"]
        ok = client.post(
            f"/api/sessions/{sid}/rows/0/sensitivity",
            json={"items": [{"driver": "Internet", "mode": "absolute", "amount": 2}]},
        )
        assert ok.status_code == 200
        assert ok.json()["perturbed_prediction"] > ok.json()["baseline_prediction"]
        missing = client.post(
            f"/api/sessions/{sid}/rows/9999/sensitivity", json={"items": []}
        )
        assert missing.status_code == 404

    def test_goal_zero_box_returns_baseline(self, linear_setup):
        _, client, _, session = linear_setup
        constraints = {
            d: {"mode": "percentage", "lo": 0, "hi": 0} for d in session["drivers"]
        }
        response = client.post(
            f"/api/sessions/{session['session_id']}/goal",
            json={"objective": "maximize", "constraints": constraints,
                  "budget": 12, "n_init": 5, "seed": 0},
        )
        body = response.json()
        assert body["best_kpi"] == session["baseline_kpi"]
        assert body["uplift"] == 0.0

    def test_goal_budget_cap_enforced(self, linear_setup):
        _, client, _, session = linear_setup
        response = client.post(
            f"/api/sessions/{session['session_id']}/goal",
            json={"objective": "maximize", "budget": 10_000},
        )
        assert response.status_code == 422
        assert response.json()["code"] == "budget_too_large"

    def test_second_concurrent_goal_429(self, linear_setup):
        app, client, _, session = linear_setup
        stored = app.state.store.sessions[session["session_id"]]
        assert stored.goal_lock.acquire(blocking=False)
        try:
            response = client.post(
                f"/api/sessions/{session['session_id']}/goal",
                json={"objective": "maximize", "budget": 12, "n_init": 5},
            )
            assert response.status_code == 429
            assert response.json()["code"] == "goal_in_progress"
        finally:
            stored.goal_lock.release()

    def test_goal_timeout_408_with_partial_trace(self):
        _, client = _client(goal_timeout=0.0)
        dataset_id = _upload(client, _marketing_csv(rows=60, seed=2))
        session = _session(client, dataset_id, kpi="sales", seed=1)
        response = client.post(
            f"/api/sessions/{session['session_id']}/goal",
            json={"objective": "maximize", "budget": 12, "n_init": 5, "seed": 0},
        )
        assert response.status_code == 408
        body = response.json()
        assert body["code"] == "goal_timeout"
        assert body["details"]["partial"]["timed_out"] is True
        assert body["details"]["partial"]["trace"] == []

    def test_analysis_calls_leave_baseline_unchanged(self, linear_setup):
        _, client, _, session = linear_setup
        sid = session["session_id"]
        client.post(f"/api/sessions/{sid}/sensitivity",
                    json={"items": [{"driver": "TV", "mode": "absolute", "amount": -3}]})
        client.post(f"/api/sessions/{sid}/comparison",
                    json={"mode": "absolute", "lo": -1, "hi": 1, "steps": 3})
        client.post(f"/api/sessions/{sid}/goal",
                    json={"objective": "minimize", "budget": 8, "n_init": 4})
        after = client.get(f"/api/sessions/{sid}").json()
        assert after == session


class TestWireHygiene:
    def test_no_nan_or_infinity_anywhere(self, linear_setup):
        _, client, dataset_id, session = linear_setup
        sid = session["session_id"]
        responses = [
            client.get(f"/api/datasets/{dataset_id}"),
            client.get(f"/api/datasets/{dataset_id}/rows"),
            client.get(f"/api/sessions/{sid}"),
            client.post(f"/api/sessions/{sid}/sensitivity",
                        json={"items": [{"driver": "Radio", "mode": "percentage",
                                         "amount": 80}]}),
            client.post(f"/api/sessions/{sid}/comparison",
                        json={"mode": "percentage", "lo": -50, "hi": 50, "steps": 5}),
            client.post(f"/api/sessions/{sid}/goal",
                        json={"objective": "maximize", "budget": 10, "n_init": 4}),
        ]
        for response in responses:
            assert response.status_code == 200
            assert "NaN" not in response.text and "Infinity" not in response.text
            _assert_finite(response.json())

    def test_displays_have_two_decimals(self, linear_setup):
        _, client, _, session = linear_setup
        response = client.post(
            f"/api/sessions/{session['session_id']}/sensitivity",
            json={"items": [{"driver": "TV", "mode": "percentage", "amount": 12.3}]},
        )
        body = response.json()
        for key in ("baseline_display", "perturbed_display", "uplift_display"):
            whole, frac = body[key].lstrip("+-").split(".")
            assert len(frac) == 2


class TestForestSession:
    def test_deal_closing_session(self):
        _, client = _client()
        response = client.post(
            "/api/datasets/synthetic",
            json={"use_case": "deal_closing", "rows": 120, "seed": 1},
        )
        dataset_id = response.json()["dataset_id"]
        session = _session(
            client,
            dataset_id,
            kpi="Deal Closed?",
            seed=1,
            hyper={"n_trees": 8, "cv_folds": 3},
        )
        assert session["kpi_kind"] == "discrete"
        assert 0.0 <= session["baseline_kpi"] <= 100.0
        assert 0.0 <= session["ground_truth_kpi"] <= 100.0
        drivers = {e["driver"] for e in session["importance"]["entries"]}
        assert "Account" not in drivers


class TestSnapshots:
    def test_sessions_survive_restart(self, tmp_path):
        snapshot_dir = str(tmp_path / "snaps")
        _, client = _client(snapshot_dir=snapshot_dir)
        dataset_id = _upload(client, _marketing_csv(rows=60, seed=3))
        session = _session(client, dataset_id, kpi="sales", seed=2)
        sid = session["session_id"]
        probe = {"items": [{"driver": "TV", "mode": "absolute", "amount": 1.5}]}
        before = client.post(f"/api/sessions/{sid}/sensitivity", json=probe).json()

        _, reborn = _client(snapshot_dir=snapshot_dir)
        assert reborn.get(f"/api/sessions/{sid}").status_code == 200
        assert reborn.get(f"/api/datasets/{dataset_id}").status_code == 200
        after = reborn.post(f"/api/sessions/{sid}/sensitivity", json=probe).json()
        assert after == before


class TestGolden:
    @pytest.mark.parametrize(
        "name",
        [
            "dataset_upload",
            "dataset_synthetic",
            "session_linear",
            "session_forest",
            "sensitivity",
            "comparison",
            "row_sensitivity",
            "goal",
        ],
    )
    def test_endpoint_matches_golden(self, name):
        path = GOLDEN_DIR / f"{name}.json"
        assert path.exists(), (
            f"golden file {path} missing; run scripts/update_goldens.py"
        )
        golden = json.loads(path.read_text())
        live = golden_responses()[name]
        assert live == golden["body"], f"{name} drifted from golden"

    def test_goldens_are_finite(self):
        for path in sorted(GOLDEN_DIR.glob("*.json")):
            _assert_finite(json.loads(path.read_text()))


@functools.lru_cache(maxsize=1)
def golden_responses() -> dict[str, dict]:
    """Deterministic responses for every endpoint; also used to regenerate."""
    _, client = _client()
    out = {}

    csv_bytes = _marketing_csv(rows=60, seed=2)
    upload = client.post("/api/datasets", content=csv_bytes)
    out["dataset_upload"] = upload.json()
    dataset_id = upload.json()["dataset_id"]

    synthetic = client.post(
        "/api/datasets/synthetic",
        json={"use_case": "deal_closing", "rows": 120, "seed": 1},
    )
    out["dataset_synthetic"] = synthetic.json()
    deal_id = synthetic.json()["dataset_id"]

    linear = _session(client, dataset_id, kpi="sales", seed=1)
    linear.pop("created_at")
    out["session_linear"] = linear
    sid = linear["session_id"]

    forest = _session(
        client, deal_id, kpi="Deal Closed?", seed=1,
        hyper={"n_trees": 8, "cv_folds": 3},
    )
    forest.pop("created_at")
    out["session_forest"] = forest

    out["sensitivity"] = client.post(
        f"/api/sessions/{sid}/sensitivity",
        json={"items": [{"driver": "Internet", "mode": "percentage", "amount": 40}]},
    ).json()
    out["comparison"] = client.post(
        f"/api/sessions/{sid}/comparison",
        json={"drivers": ["Internet", "Radio"], "mode": "absolute",
              "lo": -5, "hi": 5, "steps": 5},
    ).json()
    out["row_sensitivity"] = client.post(
        f"/api/sessions/{sid}/rows/0/sensitivity",
        json={"items": [{"driver": "Internet", "mode": "absolute", "amount": 2}]},
    ).json()
    out["goal"] = client.post(
        f"/api/sessions/{sid}/goal",
        json={
            "objective": "maximize",
            "constraints": {
                "Internet": {"mode": "percentage", "lo": 0, "hi": 50},
                "Facebook": {"mode": "percentage", "lo": 0, "hi": 0},
                "YouTube": {"mode": "percentage", "lo": 0, "hi": 0},
                "TV": {"mode": "percentage", "lo": 0, "hi": 0},
                "Radio": {"mode": "percentage", "lo": 0, "hi": 0},
            },
            "budget": 12,
            "n_init": 5,
            "seed": 0,
        },
    ).json()
    return out
