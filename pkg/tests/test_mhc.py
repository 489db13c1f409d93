"""Tests for Sinkhorn projection and doubly stochastic stream mixing."""

import numpy as np
import pytest

from expertbounds.errors import ConvergenceError, DimensionError, NumericDomainError, PreconditionError
from expertbounds.mhc import (
    SinkhornConfig,
    conservation_drift,
    is_doubly_stochastic,
    mix_streams,
    mixed_residual_step,
    random_stream_mix,
    sinkhorn_project,
    unmix_streams_grad,
)
from expertbounds.numerics.rng import make_rng


class TestSinkhorn:
    """Test the Sinkhorn-Knopp projection."""

    def test_projection_is_doubly_stochastic(self) -> None:
        """Test row and column sums after projecting seeded positive matrices of many sizes."""
        for n in (1, 2, 5, 16):
            m = sinkhorn_project(make_rng(n, "test").uniform(0.01, 10.0, size=(n, n)))
            assert is_doubly_stochastic(m, 1e-9)

    def test_already_doubly_stochastic_is_unchanged(self) -> None:
        """Test that the uniform matrix is a fixed point."""
        uniform = np.full((4, 4), 0.25)
        np.testing.assert_array_equal(sinkhorn_project(uniform), uniform)

    def test_idempotent(self) -> None:
        """Test that projecting twice changes nothing beyond the tolerance."""
        once = sinkhorn_project(make_rng(0, "test").uniform(0.1, 5.0, size=(6, 6)))
        np.testing.assert_allclose(sinkhorn_project(once), once, atol=1e-9)

    def test_product_closure(self) -> None:
        """Test that the product of two doubly stochastic matrices stays doubly stochastic."""
        rng = make_rng(1, "test")
        a = random_stream_mix(5, rng)
        b = random_stream_mix(5, rng)
        assert is_doubly_stochastic(a @ b, 1e-8)

    def test_rejects_nonpositive_entries(self) -> None:
        """Test that a zero entry is a domain error."""
        with pytest.raises(NumericDomainError):
            sinkhorn_project(np.array([[1.0, 0.0], [1.0, 1.0]]))

    def test_rejects_non_square(self) -> None:
        """Test that a rectangular matrix is a dimension error."""
        with pytest.raises(DimensionError):
            sinkhorn_project(np.ones((2, 3)))

    def test_convergence_error_reports_deviation(self) -> None:
        """Test that an exhausted iteration budget reports the final deviation."""
        matrix = make_rng(2, "test").uniform(0.01, 10.0, size=(5, 5))
        with pytest.raises(ConvergenceError) as excinfo:
            sinkhorn_project(matrix, SinkhornConfig(max_iters=1, tolerance=1e-15))
        assert excinfo.value.deviation > 1e-15


class TestStreamMixing:
    """Test convex-combination mixing of feature streams."""

    def test_conserves_means_and_bounds_norms(self) -> None:
        """Test that mixing keeps column means and never grows a column's max-norm."""
        rng = make_rng(3, "test")
        features = rng.normal(size=(4, 7))
        mixed = mixed_residual_step(features, random_stream_mix(4, rng))
        drift, growth = conservation_drift(features, mixed)
        assert drift < 1e-9
        assert growth <= 1e-9

    def test_rejects_non_doubly_stochastic(self) -> None:
        """Test that an arbitrary matrix is refused."""
        with pytest.raises(PreconditionError):
            mixed_residual_step(np.ones((2, 3)), np.array([[0.9, 0.3], [0.1, 0.7]]))

    def test_rejects_stream_count_mismatch(self) -> None:
        """Test that a mixing matrix for another stream count is refused."""
        with pytest.raises(DimensionError):
            mixed_residual_step(np.ones((3, 2)), np.full((2, 2), 0.5))

    def test_unmix_is_the_adjoint(self) -> None:
        """Test <mix(h), g> == <h, unmix(g)> for random batches."""
        rng = make_rng(4, "test")
        matrix = random_stream_mix(3, rng)
        h = rng.normal(size=(2, 6))
        g = rng.normal(size=(2, 6))
        assert np.sum(mix_streams(h, matrix) * g) == pytest.approx(np.sum(h * unmix_streams_grad(g, matrix)))
