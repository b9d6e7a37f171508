import time

import numpy as np
import pytest

from pfalloc import (
    DimensionError,
    RateMatrix,
    multi_channel_user_count,
    oracle_solve,
    pareto_dominates,
    shared_channel_count,
    single_channel_user_count,
    solve_general,
)
from pfalloc.oracle import project_columns_to_simplex
from conftest import random_column_stochastic, random_rate_matrix

B22 = RateMatrix([[1.0, 2.0], [1.0, 3.0]])
Y22 = 1.2163953243244932


class TestSimplexProjection:
    def test_projection_optimality_conditions(self, rng):
        # Euclidean projection onto the simplex: positive entries share one
        # common shift from the input, zeroed entries sit at or below it
        for _ in range(200):
            v = rng.normal(0, 2, size=(int(rng.integers(1, 12)), 1))
            x = project_columns_to_simplex(v)[:, 0]
            v = v[:, 0]
            assert x.min() >= 0
            assert x.sum() == pytest.approx(1.0, abs=1e-12)
            pos = x > 0
            shifts = v[pos] - x[pos]
            assert np.ptp(shifts) <= 1e-9
            if (~pos).any():
                assert np.all(v[~pos] <= shifts.max() + 1e-9)

    def test_feasible_input_is_fixed_point(self, rng):
        P = random_column_stochastic(rng, 5, 3)
        assert np.allclose(project_columns_to_simplex(P), P, atol=1e-12)


class TestOracleSolve:
    def test_worked_example(self):
        oracle_solve(B22)  # warm numpy dispatch before timing
        t0 = time.perf_counter()
        s = oracle_solve(B22)
        elapsed = time.perf_counter() - t0
        assert s.objective == pytest.approx(Y22, abs=1e-6)
        assert elapsed < 0.010

    def test_single_channel_closed_form(self):
        s = oracle_solve(RateMatrix([[4.0], [4.0], [2.0]]), w=[1.0, 2.0, 1.0], tol=1e-6)
        assert np.allclose(s.allocation.fractions.ravel(), [0.25, 0.5, 0.25], atol=1e-5)

    def test_agrees_with_general_solver(self, rng):
        for _ in range(10):
            B = RateMatrix(random_rate_matrix(rng, 4, 4, allow_zero=True))
            o = oracle_solve(B)
            g = solve_general(B)
            assert abs(o.objective - g.objective) <= 1e-5

    def test_iterates_never_dominate_converged_solution(self, rng):
        B = RateMatrix(random_rate_matrix(rng, 5, 4))
        s = solve_general(B)
        seen = []
        oracle_solve(B, on_iterate=seen.append)
        assert seen, "oracle should report its iterates"
        for T in seen:
            assert not pareto_dominates(T, s.throughputs)


class TestParetoDominates:
    def test_examples(self):
        assert pareto_dominates([2.0, 2.0], [1.0, 2.0])
        assert not pareto_dominates([2.0, 1.0], [1.0, 2.0])
        assert pareto_dominates([1.5, 2.25], [1.5, 2.0])

    def test_equal_vectors_do_not_dominate(self):
        assert not pareto_dominates([1.0, 2.0], [1.0, 2.0])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            pareto_dominates([1.0], [1.0, 2.0])

    def test_random_feasible_points_never_dominate_optimum(self, rng):
        B = RateMatrix(random_rate_matrix(rng, 4, 3))
        s = solve_general(B)
        for _ in range(1000):
            P = random_column_stochastic(rng, 4, 3)
            T = (P * B.rates).sum(axis=1)
            assert not pareto_dominates(T, s.throughputs)


class TestStructureCounts:
    def test_worked_example(self):
        P = [[1.0, 0.25], [0.0, 0.75]]
        assert shared_channel_count(P) == 1
        assert multi_channel_user_count(P) == 1
        assert single_channel_user_count(P) == 1

    def test_exclusive_assignment(self):
        assert shared_channel_count(np.eye(3)) == 0
        assert multi_channel_user_count(np.eye(3)) == 0
        assert single_channel_user_count(np.eye(3)) == 3

    def test_uniform_allocation(self):
        P = np.full((4, 3), 0.25)
        assert shared_channel_count(P) == 3
        assert multi_channel_user_count(P) == 4
        assert single_channel_user_count(P) == 0
