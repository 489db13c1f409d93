"""Tests for the HTTP service over a finished run."""

import pytest
from fastapi.testclient import TestClient

from expertbounds.app import create_app
from expertbounds.datatypes.benchmark_types import SplitName
from expertbounds.errors import EmissionError
from expertbounds.harness.pipeline import RunArtifact, load_run


@pytest.fixture(scope="module")
def client(tiny_run_dir):
    return TestClient(create_app(load_run(tiny_run_dir)))


class TestQueryApi:
    """Test the query endpoint."""

    def test_health(self, client) -> None:
        """Test the health check."""
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json() == {"status": "healthy"}

    def test_query(self, client, tiny_run) -> None:
        """Test that a served query matches the evaluated decision."""
        test = tiny_run.benchmark.splits[SplitName.TEST]
        response = client.post("/api/v1/query", json={"features": test.features[0].tolist()})
        assert response.status_code == 200
        body = response.json()
        record = tiny_run.log.records()[0]
        assert body["prediction"] == record.prediction
        assert body["verdict"] == record.verdict.value
        assert body["selected_experts"] == record.selected
        assert body["note"]

    def test_wrong_width(self, client) -> None:
        """Test that a query of the wrong width is rejected."""
        response = client.post("/api/v1/query", json={"features": [0.1, 0.2]})
        assert response.status_code == 422
        assert response.json()["error"] == "Invalid query"

    def test_empty_query(self, client) -> None:
        """Test that an empty feature list fails request validation."""
        response = client.post("/api/v1/query", json={"features": []})
        assert response.status_code == 422
        assert response.json()["error"] == "Validation error"


class TestMonitoringApi:
    """Test the monitoring endpoints."""

    def test_global_metrics(self, client, tiny_run) -> None:
        """Test the aggregates over the whole decision log."""
        response = client.get("/api/v1/metrics/global")
        assert response.status_code == 200
        body = response.json()
        assert body["total_queries"] == len(tiny_run.log)
        assert 0.0 <= body["abstention_rate"] <= 1.0

    def test_expert_metrics(self, client) -> None:
        """Test one expert's aggregates."""
        response = client.get("/api/v1/metrics/expert/A")
        assert response.status_code == 200
        assert response.json()["domain_id"] == "A"

    def test_unknown_expert(self, client) -> None:
        """Test that an unknown expert id is not found."""
        assert client.get("/api/v1/metrics/expert/Z").status_code == 404


class TestCreateApp:
    """Test building the service."""

    def test_incomplete_run(self, tiny_run) -> None:
        """Test that an unfinished run cannot be served."""
        manifest = tiny_run.manifest.model_copy(update={"incomplete": True, "stages_completed": ["synth"]})
        with pytest.raises(EmissionError):
            create_app(RunArtifact(run_dir=tiny_run.run_dir, config=tiny_run.config, manifest=manifest))
