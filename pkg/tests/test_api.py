"""Tests for the HTTP API"""

import math

import pytest
from fastapi.testclient import TestClient

from app import __version__
from app.main import app


@pytest.fixture
def client():
    with TestClient(app) as c:
        yield c


SMALL_DICTIONARY = {"resolution": 4, "array": {"n_t": 2, "n_r": 2}}


class TestStatus:
    """Tests for GET /status"""

    def test_status(self, client):
        """Health check reports version and defaults"""
        response = client.get("/status")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "healthy"
        assert body["version"] == __version__
        assert body["default_dictionary"]["resolution"] == 64


class TestSynthesize:
    """Tests for channel synthesis endpoints"""

    def test_single_broadside_path(self, client):
        """g=1 at broadside on 2x2 arrays gives (1/2) ones"""
        response = client.post("/channels/synthesize", json={
            "array": {"n_t": 2, "n_r": 2},
            "paths": [{"gain": 1.0, "theta_a": 0.0, "theta_d": 0.0}],
        })
        assert response.status_code == 200
        body = response.json()
        assert body["real"] == pytest.approx([[0.5, 0.5], [0.5, 0.5]])
        assert body["imag"] == pytest.approx([[0.0, 0.0], [0.0, 0.0]], abs=1e-15)

    def test_empty_paths_rejected(self, client):
        """Request validation needs at least one path"""
        response = client.post("/channels/synthesize", json={"paths": []})
        assert response.status_code == 422

    def test_gain_synthesis_zero(self, client):
        """W = 0 gives the zero channel"""
        response = client.post("/gains/synthesize", json={
            "dictionary": SMALL_DICTIONARY,
            "weights": [[0.0] * 4 for _ in range(4)],
        })
        assert response.status_code == 200
        assert response.json()["real"] == [[0.0, 0.0], [0.0, 0.0]]

    def test_non_square_weights(self, client):
        """Non-square gain matrices map to 422"""
        response = client.post("/gains/synthesize", json={
            "dictionary": SMALL_DICTIONARY,
            "weights": [[0.0] * 4 for _ in range(3)],
        })
        assert response.status_code == 422


class TestExtract:
    """Tests for POST /gains/extract"""

    def test_one_hot(self, client):
        """A single entry maps to its grid angles"""
        weights = [[0.0] * 4 for _ in range(4)]
        weights[1][2] = 2.0
        response = client.post("/gains/extract", json={"dictionary": SMALL_DICTIONARY, "weights": weights})
        assert response.status_code == 200
        (path,) = response.json()["paths"]
        assert path["gain"] == 2.0
        assert path["theta_a"] == pytest.approx(-math.pi / 2 + 2 * math.pi / 4)
        assert path["theta_d"] == pytest.approx(-math.pi / 2 + 3 * math.pi / 4)

    def test_complex_weights(self, client):
        """Imaginary weights set the path phase"""
        weights = [[0.0] * 4 for _ in range(4)]
        imag = [[0.0] * 4 for _ in range(4)]
        imag[0][0] = 1.0
        response = client.post("/gains/extract", json={
            "dictionary": SMALL_DICTIONARY, "weights": weights, "imag_weights": imag,
        })
        (path,) = response.json()["paths"]
        assert path["phase"] == pytest.approx(math.pi / 2)

    def test_imag_shape_mismatch(self, client):
        """Real and imaginary planes must agree in shape"""
        response = client.post("/gains/extract", json={
            "dictionary": SMALL_DICTIONARY,
            "weights": [[0.0] * 4 for _ in range(4)],
            "imag_weights": [[0.0] * 3 for _ in range(3)],
        })
        assert response.status_code == 422

    def test_grid_beyond_pi_rejected(self, client):
        """Grid limits outside [-pi, pi] are a request error"""
        weights = [[0.0] * 4 for _ in range(4)]
        weights[3][3] = 1.0
        dictionary = {**SMALL_DICTIONARY, "theta_min": 0.0, "theta_max": 4.0}
        response = client.post("/gains/extract", json={"dictionary": dictionary, "weights": weights})
        assert response.status_code == 422
