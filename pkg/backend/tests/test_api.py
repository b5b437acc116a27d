import pytest
from fastapi.testclient import TestClient
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from app.db.base import Base
from app.db.session import get_db
from main import app

SMALL_TRAIN = {
    "method": "vdn",
    "epochs": 2,
    "num_users": 3,
    "num_rbs": 3,
    "agent_hidden": 4,
    "predictor_hidden": 4,
    "predictor_epochs": 1,
    "num_trajectories": 4,
    "horizon": 6,
}


@pytest.fixture
def client():
    engine = create_engine("sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool)
    Base.metadata.create_all(bind=engine)
    TestingSession = sessionmaker(autocommit=False, autoflush=False, bind=engine)

    def override_get_db():
        db = TestingSession()
        try:
            yield db
        finally:
            db.close()

    app.dependency_overrides[get_db] = override_get_db
    with TestClient(app) as test_client:
        yield test_client
    app.dependency_overrides.clear()


def test_empty_registry(client):
    response = client.get("/api/v1/runs/")
    assert response.status_code == 200
    assert response.json() == []
    assert client.get("/api/v1/runs/42").status_code == 404
    assert client.get("/api/v1/runs/42/curve").status_code == 404


def test_episode_endpoint(client):
    response = client.post("/api/v1/experiments/episode", json={"policy": "all-sync", "num_users": 4, "horizon": 5})
    assert response.status_code == 200
    body = response.json()
    assert body["policy"] == "all-sync"
    assert body["slots"] == 5


def test_episode_with_invalid_config(client):
    response = client.post("/api/v1/experiments/episode", json={"policy": "random", "num_users": 0, "horizon": 3})
    assert response.status_code == 422


def test_audit_endpoint(client):
    assert client.post("/api/v1/experiments/audit", json={"slots": 0}).status_code == 422
    response = client.post("/api/v1/experiments/audit", json={"slots": 40, "num_users": 3})
    assert response.status_code == 200
    assert response.json()["violations"] == {}
    assert response.json()["slots"] == 40


def test_train_registers_run_and_curve(client):
    response = client.post("/api/v1/experiments/train", json=SMALL_TRAIN)
    assert response.status_code == 200
    run = response.json()
    assert run["status"] == "done"
    assert run["method"] == "vdn"
    assert run["summary_json"]

    runs = client.get("/api/v1/runs/").json()
    assert [r["id"] for r in runs] == [run["id"]]
    curve = client.get(f"/api/v1/runs/{run['id']}/curve").json()
    assert [row["epoch"] for row in curve] == [0, 1]
    assert client.get(f"/api/v1/runs/{run['id']}").json()["kind"] == "train"


def test_no_cors_headers_by_default(client):
    response = client.get("/api/v1/runs/", headers={"Origin": "http://localhost:3000"})
    assert response.status_code == 200
    assert "access-control-allow-origin" not in response.headers
