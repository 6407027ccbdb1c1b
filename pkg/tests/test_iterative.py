"""Unit tests for the first-order baselines."""

import numpy as np
import pytest

from fsmf_tool.generators import (
    gen_full,
    gen_hadamard,
    gen_kron1,
    gen_lu,
    gen_unattained_lu_instance,
)
from fsmf_tool.models import (
    DEFAULT_LEARNING_RATE_GRID,
    FactorPair,
    IterativeConfig,
    Method,
    ProblemInstance,
    SolveReport,
    SupportPair,
)
from fsmf_tool.objective import loss
from fsmf_tool.solvers import IterativeSolver
from fsmf_tool.solvers.iterative import (
    _rank_key,
    grid_search,
    hard_threshold,
    init_factors,
    palm_step_sizes,
    run,
)


def _rank_one_instance():
    u = np.array([1.0, 2.0, -1.0])
    v = np.array([0.5, -1.0, 2.0])
    return ProblemInstance(target=np.outer(u, v), supports=gen_full(3, 3, 1))


def _random_instance(seed, m=6, n=5, r=3):
    rng = np.random.default_rng(seed)
    return ProblemInstance(
        target=rng.standard_normal((m, n)), supports=gen_full(m, n, r)
    )


@pytest.mark.iterative
class TestInitFactors:
    """Test suite for random initialization."""

    def test_deterministic(self):
        """Test that a seed fixes the initialization."""
        supports = gen_lu(4)
        first = init_factors(supports, 3)
        second = init_factors(supports, 3)

        np.testing.assert_array_equal(first.X, second.X)
        np.testing.assert_array_equal(first.Y, second.Y)

    def test_inside_supports(self):
        """Test that initial factors respect the supports."""
        supports = gen_kron1(3)
        factors = init_factors(supports, 0)
        instance = ProblemInstance(target=np.zeros((8, 8)), supports=supports)

        assert instance.is_feasible(factors)

    def test_empty_column_stays_zero(self):
        """Test that columns with an empty support are left at zero."""
        supports = SupportPair.from_arrays([[1, 0], [1, 0]], [[1, 1], [1, 1]])
        factors = init_factors(supports, 1)

        assert not factors.X[:, 1].any()

    def test_variance_scales_with_column_count(self):
        """Test the N(0, 1/|I[:, k]|) law on a large column."""
        supports = gen_full(20_000, 1, 1)
        factors = init_factors(supports, 5)

        assert np.var(factors.X[:, 0]) == pytest.approx(1 / 20_000, rel=0.05)


@pytest.mark.iterative
class TestHelpers:
    """Test suite for thresholding and step sizes."""

    def test_hard_threshold_keeps_largest(self):
        """Test that only the k largest magnitudes survive."""
        matrix = np.array([[1.0, -5.0], [3.0, 0.5]])

        np.testing.assert_array_equal(
            hard_threshold(matrix, 2), [[0.0, -5.0], [3.0, 0.0]]
        )

    def test_hard_threshold_ties_prefer_lower_index(self):
        """Test that ties go to the lower linear index."""
        np.testing.assert_array_equal(
            hard_threshold(np.array([[2.0, 2.0, 2.0]]), 2), [[2.0, 2.0, 0.0]]
        )

    @pytest.mark.parametrize("k, expected", [(0, 0), (10, 4)])
    def test_hard_threshold_edge_sizes(self, k, expected):
        """Test k = 0 and k beyond the number of entries."""
        result = hard_threshold(np.ones((2, 2)), k)

        assert np.count_nonzero(result) == expected

    def test_palm_step_sizes(self):
        """Test the Lipschitz step sizes of both blocks."""
        factors = FactorPair(X=[[2.0]], Y=[[1.0]])
        step_x, step_y = palm_step_sizes(factors, gamma=1.0)

        assert step_x == pytest.approx(0.5)
        assert step_y == pytest.approx(1 / 8)

    def test_palm_step_sizes_zero_factor(self):
        """Test that a zero factor gives the capped step."""
        step_x, step_y = palm_step_sizes(FactorPair.zeros(2, 2, 1), max_step=7.0)

        assert step_x == step_y == 7.0


@pytest.mark.iterative
class TestRun:
    """Test suite for single runs."""

    @pytest.mark.parametrize("method", [Method.GD, Method.MOMENTUM, Method.ADAM])
    def test_loss_decreases(self, method):
        """Test that a small step lowers the loss on a rank-one target."""
        instance = _rank_one_instance()
        config = IterativeConfig(
            method=method, learning_rate=1e-3, max_iters=200, seed=1
        )
        factors, report = run(instance, config)

        assert report.final_loss < report.loss_trace[0][1]
        assert report.final_loss == pytest.approx(loss(instance, factors))
        assert report.learning_rate == 1e-3
        assert report.method_tag == method.value
        assert not report.diverged

    def test_exact_start_converges_immediately(self):
        """Test that an exact starting point stops at iteration 0."""
        instance = _rank_one_instance()
        exact = FactorPair(X=[[1.0], [2.0], [-1.0]], Y=[[0.5], [-1.0], [2.0]])
        _, report = run(instance, IterativeConfig(), initial=exact)

        assert report.converged
        assert report.iterations == 0
        assert report.loss_trace == [(0, 0.0)]

    def test_budget_exhausted(self):
        """Test that a run without convergence is reported as such."""
        _, report = run(_random_instance(0), IterativeConfig(max_iters=5))

        assert report.iterations == 5
        assert not report.converged
        assert report.loss_trace[-1][0] == 5

    def test_divergence_returns_last_finite_iterate(self):
        """Test that a huge step is flagged and leaves finite factors."""
        instance = _random_instance(1)
        factors, report = run(
            instance, IterativeConfig(learning_rate=1e3, max_iters=1000)
        )

        assert report.diverged
        assert not report.converged
        assert np.isfinite(report.final_loss)
        assert np.all(np.isfinite(factors.X))
        assert report.iterations < 1000

    def test_iterates_stay_in_supports(self):
        """Test feasibility of every iterate through the callback."""
        rng = np.random.default_rng(2)
        instance = ProblemInstance(
            target=rng.standard_normal((4, 4)), supports=gen_lu(4)
        )
        seen = []

        def callback(iteration, factors, value):
            seen.append(iteration)
            assert instance.is_feasible(factors)

        _, report = run(
            instance,
            IterativeConfig(max_iters=20, learning_rate=1e-2),
            callback=callback,
        )

        assert seen == list(range(1, report.iterations + 1))

    def test_trace_every(self):
        """Test that the trace is subsampled but keeps the last iteration."""
        _, report = run(
            _random_instance(3), IterativeConfig(max_iters=25, trace_every=10)
        )

        assert [step for step, _ in report.loss_trace] == [0, 10, 20, 25]

    def test_deterministic(self):
        """Test that runs are reproducible for a fixed seed."""
        config = IterativeConfig(method=Method.ADAM, max_iters=50, seed=4)
        _, first = run(_random_instance(4), config)
        _, second = run(_random_instance(4), config)

        assert first.final_loss == second.final_loss
        assert first.loss_trace == second.loss_trace


@pytest.mark.iterative
class TestPalm:
    """Test suite for PALM."""

    def test_report_fields(self):
        """Test that PALM ignores the step size and traces support changes."""
        config = IterativeConfig(method=Method.PALM, max_iters=30)
        _, report = run(_random_instance(5), config)

        assert report.learning_rate is None
        assert report.support_change_trace is not None
        assert len(report.support_change_trace) == report.iterations
        assert report.final_loss <= report.loss_trace[0][1]

    def test_loss_is_nonincreasing(self):
        """Test the Lipschitz steps on 50 random masked instances."""
        rng = np.random.default_rng(50)
        for seed in range(50):
            m, n, r = (int(v) for v in rng.integers(2, 6, size=3))
            instance = ProblemInstance(
                target=rng.standard_normal((m, n)),
                supports=SupportPair.from_arrays(
                    rng.random((m, r)) < 0.7, rng.random((n, r)) < 0.7
                ),
            )
            config = IterativeConfig(method=Method.PALM, max_iters=100, seed=seed)
            _, report = run(instance, config)
            values = [value for _, value in report.loss_trace]

            for before, after in zip(values, values[1:]):
                assert after <= before + 1e-12 * max(1.0, before)

    def test_sparsity_is_enforced(self):
        """Test that k-sparse mode keeps at most k entries per factor."""
        config = IterativeConfig(
            method=Method.PALM, max_iters=20, palm_sparsity=(5, 4)
        )
        counts = []

        def callback(iteration, factors, value):
            counts.append((np.count_nonzero(factors.X), np.count_nonzero(factors.Y)))

        run(_random_instance(6), config, callback=callback)

        assert counts
        assert all(nx <= 5 and ny <= 4 for nx, ny in counts)

    @pytest.mark.slow
    def test_supports_freeze(self):
        """Test that k-sparse PALM stops changing supports late in the run."""
        frozen = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            instance = ProblemInstance(
                target=rng.standard_normal((30, 30)), supports=gen_full(30, 30, 30)
            )
            config = IterativeConfig(
                method=Method.PALM,
                max_iters=2000,
                palm_sparsity=(90, 90),
                stop_log10_loss=-300,
                seed=seed,
            )
            _, report = run(instance, config)
            tail = report.support_change_trace[-200:]
            if all(dx == 0 and dy == 0 for _, dx, dy in tail):
                frozen += 1

        assert frozen >= 8


@pytest.mark.iterative
class TestUnattainedInstance:
    """Small losses on the instance without a minimizer need large entries."""

    def setup_method(self):
        """Set up test fixtures."""
        self.unattained = gen_unattained_lu_instance()
        self.instance = self.unattained.instance

    def _trajectory(self, start, learning_rate, max_iters):
        config = IterativeConfig(
            method=Method.GD, max_iters=max_iters, stop_log10_loss=-300
        )
        visited = []

        def callback(iteration, factors, value):
            visited.append((value, factors))

        _, report = run(
            self.instance,
            config,
            learning_rate=learning_rate,
            initial=start,
            callback=callback,
        )
        assert not report.diverged
        return visited

    @pytest.mark.parametrize("k", [101.0, 1e3, 1e4])
    def test_witness_sequence_blows_up(self, k):
        """Test that the witness sequence reaches loss < 1e-4 only with k >= 1e2."""
        factors = self.unattained.witness(k)
        value = loss(self.instance, factors)

        assert value < 1e-4
        assert max(np.max(np.abs(factors.X)), np.max(np.abs(factors.Y))) >= 1e2

    def test_descent_below_threshold_keeps_large_entries(self):
        """Test gradient descent warm-started at a witness with loss below 1e-4."""
        visited = self._trajectory(self.unattained.witness(200.0), 1e-6, 200)

        assert len(visited) == 200
        for value, factors in visited:
            assert value < 1e-4
            assert max(np.max(np.abs(factors.X)), np.max(np.abs(factors.Y))) >= 1e2

    def test_loss_bounds_the_coupled_entries(self):
        """Test |X[0,1] Y[0,1]| >= (1 - sqrt(L))^2 / sqrt(L) along a descent run."""
        visited = self._trajectory(self.unattained.witness(20.0), 1e-4, 3000)

        assert visited[-1][0] < visited[0][0]
        for value, factors in visited:
            root = np.sqrt(value)
            bound = (1.0 - root) ** 2 / root
            assert abs(factors.X[0, 1] * factors.Y[0, 1]) >= bound * (1 - 1e-9)


@pytest.mark.iterative
class TestGridSearch:
    """Test suite for learning-rate tuning."""

    def test_rank_key_ordering(self):
        """Test the ranking of converged, stalled and divergent runs."""
        fast = SolveReport(method_tag="gd", final_loss=0.0, iterations=10)
        slow = SolveReport(method_tag="gd", final_loss=0.0, iterations=50)
        stalled = SolveReport(method_tag="gd", final_loss=1.0, converged=False)
        exploded = SolveReport(
            method_tag="gd", final_loss=0.5, converged=False, diverged=True
        )
        keys = [_rank_key(r, i) for i, r in enumerate([slow, stalled, exploded, fast])]

        assert sorted(range(4), key=lambda i: keys[i]) == [3, 0, 1, 2]

    def test_reports_follow_grid_order(self):
        """Test that each rate gets one report in grid order."""
        config = IterativeConfig(grid=(1e-3, 1e-2, 5e-2), max_iters=20)
        result = grid_search(_random_instance(7), config, jobs=2)

        assert [r.learning_rate for r in result.reports] == [1e-3, 1e-2, 5e-2]
        assert result.best_rate in config.grid
        assert result.best_report == result.reports[config.grid.index(result.best_rate)]

    def test_prefers_lowest_loss_without_convergence(self):
        """Test the fallback ranking when no rate converges."""
        config = IterativeConfig(grid=(1e-5, 1e-2), max_iters=30)
        result = grid_search(_random_instance(8), config, jobs=1)

        assert not result.converged
        assert result.best_report.final_loss == min(
            r.final_loss for r in result.reports if not r.diverged
        )

    def test_solver_uses_grid(self):
        """Test that IterativeSolver tunes when a grid is configured."""
        config = IterativeConfig(grid=(1e-3, 1e-2), max_iters=10)
        _, report = IterativeSolver(config, jobs=1).solve(_random_instance(9))

        assert report.learning_rate in (1e-3, 1e-2)

    @pytest.mark.slow
    @pytest.mark.parametrize("level", [3, 4, 5, 6])
    @pytest.mark.parametrize("method", [Method.GD, Method.MOMENTUM, Method.ADAM])
    def test_hadamard_reaches_threshold(self, method, level):
        """Test that tuned methods factor Hadamard matrices of size 8 to 64."""
        instance = ProblemInstance(
            target=gen_hadamard(level), supports=gen_kron1(level)
        )
        config = IterativeConfig(
            method=method, grid=DEFAULT_LEARNING_RATE_GRID, max_iters=20_000
        )
        result = grid_search(instance, config)

        assert result.converged
        assert result.best_report.log10_frobenius_error <= -10
