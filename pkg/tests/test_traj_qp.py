from __future__ import annotations

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from numpy.polynomial import polynomial as P

from quadplan.errors import InvalidInputError, RankDeficientError
from quadplan.planning.traj_qp import (
    BoundaryState,
    PiecewiseTrajectory,
    cost_matrix,
    endpoint_map,
    evaluate,
    optimize_spline,
    segment_times,
    solve_flat_outputs,
    spline_cost,
)
from quadplan.planning.yaw_planner import FlatPath
from quadplan.schemas import SplineConfig

SNAP_7 = SplineConfig(order=7, weights=(0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0), continuity=4)


def random_instance(rng: np.random.Generator, config: SplineConfig) -> tuple[np.ndarray, np.ndarray]:
    count = int(rng.integers(2, 11))
    values = rng.uniform(-2.0, 2.0, size=count)
    durations = rng.uniform(0.5, 2.0, size=count - 1)
    return values, durations


def solve_at_rest(values: np.ndarray, durations: np.ndarray, config: SplineConfig) -> PiecewiseTrajectory:
    order = config.boundary_order
    return optimize_spline(
        values,
        durations,
        BoundaryState.at_rest(values[0], order),
        BoundaryState.at_rest(values[-1], order),
        config,
    )


def local_constraints(
    traj: PiecewiseTrajectory, values: np.ndarray, config: SplineConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Nebenbedingungen in segmentlokaler Zeit, unabhängig vom Löser aufgebaut."""
    n, segments = traj.order, traj.segment_count
    width = segments * (n + 1)
    top = max(config.boundary_order, config.continuity)
    maps = [endpoint_map(n, float(T), top) for T in traj.segment_times]

    def row(segment: int, k: int, at_end: bool) -> np.ndarray:
        full = np.zeros(width)
        full[segment * (n + 1) : (segment + 1) * (n + 1)] = maps[segment][k + (top + 1 if at_end else 0)]
        return full

    rows, rhs = [], []
    for k in range(config.boundary_order + 1):
        rows.append(row(0, k, False))
        rhs.append(values[0] if k == 0 else 0.0)
        rows.append(row(segments - 1, k, True))
        rhs.append(values[-1] if k == 0 else 0.0)
    for j in range(1, segments):
        rows.append(row(j - 1, 0, True))
        rhs.append(values[j])
        rows.append(row(j, 0, False))
        rhs.append(values[j])
        for k in range(1, config.continuity + 1):
            rows.append(row(j - 1, k, True) - row(j, k, False))
            rhs.append(0.0)
    return np.array(rows), np.array(rhs)


def local_cost(coefficients: np.ndarray, durations: np.ndarray, config: SplineConfig) -> float:
    n = config.order
    blocks = coefficients.reshape(len(durations), n + 1)
    return float(sum(c @ cost_matrix(n, config.weights, float(T)) @ c for c, T in zip(blocks, durations)))


def test_cost_matrix_matches_quadrature() -> None:
    rng = np.random.default_rng(0)
    n, T = 6, 1.3
    weights = rng.uniform(0.0, 1.0, size=n)
    coefficients = rng.normal(size=n + 1)

    def integrand(tau: float) -> float:
        return sum(w * P.polyval(tau, P.polyder(coefficients, i)) ** 2 for i, w in enumerate(weights, start=1))

    expected, _ = scipy.integrate.quad(integrand, 0.0, T, epsabs=1e-13, epsrel=1e-13)
    assert coefficients @ cost_matrix(n, weights, T) @ coefficients == pytest.approx(expected, rel=1e-9)


def test_single_segment_matches_hermite_solve() -> None:
    config = SplineConfig(order=7, weights=(0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0), continuity=3)
    T = 1.7
    start = BoundaryState(np.array([0.2, 0.5, -0.3, 0.1]))
    end = BoundaryState(np.array([1.4, -0.2, 0.4, 0.0]))
    traj = optimize_spline([0.2, 1.4], [T], start, end, config)
    hermite = np.linalg.solve(endpoint_map(7, T, 3), np.concatenate([start.values, end.values]))
    np.testing.assert_allclose(traj.coefficients[0], hermite, rtol=1e-8, atol=1e-10)


def test_random_splines_interpolate_and_join_smoothly() -> None:
    rng = np.random.default_rng(1)
    for _ in range(50):
        values, durations = random_instance(rng, SNAP_7)
        traj = solve_at_rest(values, durations, SNAP_7)
        assert traj.kkt_residual <= 1e-8
        np.testing.assert_allclose(traj.sample(traj.knot_times), values, atol=1e-6)
        for j in range(1, traj.segment_count):
            for k in range(SNAP_7.continuity + 1):
                left = traj.evaluate_segment(j - 1, traj.segment_times[j - 1], k)
                right = traj.evaluate_segment(j, 0.0, k)
                assert left == pytest.approx(right, abs=1e-6 * max(1.0, abs(right)))
        for k in range(1, SNAP_7.boundary_order + 1):
            assert abs(evaluate(traj, traj.t_start, k)) < 1e-6
            assert abs(evaluate(traj, traj.t_end, k)) < 1e-6


@pytest.mark.slow
def test_random_splines_large_sample() -> None:
    rng = np.random.default_rng(2)
    for _ in range(200):
        values, durations = random_instance(rng, SNAP_7)
        traj = solve_at_rest(values, durations, SNAP_7)
        assert traj.kkt_residual <= 1e-8
        np.testing.assert_allclose(traj.sample(traj.knot_times), values, atol=1e-6)


def test_solution_is_optimal_in_the_feasible_set() -> None:
    rng = np.random.default_rng(3)
    for _ in range(10):
        values, durations = random_instance(rng, SNAP_7)
        traj = solve_at_rest(values, durations, SNAP_7)
        A, b = local_constraints(traj, values, SNAP_7)
        optimum = traj.coefficients.reshape(-1)
        np.testing.assert_allclose(A @ optimum, b, atol=1e-6)
        best = spline_cost(traj, SNAP_7)
        assert best == pytest.approx(local_cost(optimum, durations, SNAP_7), rel=1e-9)
        null = scipy.linalg.null_space(A)
        if null.shape[1] == 0:
            continue
        for scale in (1e-3, 1e-1, 1.0):
            for _ in range(100):
                perturbed = optimum + scale * null @ rng.normal(size=null.shape[1])
                assert local_cost(perturbed, durations, SNAP_7) >= best - 1e-8 * max(1.0, best)


def test_rank_deficient_system_names_segment() -> None:
    config = SplineConfig(order=3, weights=(0.0, 0.0, 1.0), continuity=4)
    with pytest.raises(RankDeficientError) as excinfo:
        optimize_spline(
            [0.0, 1.0, 2.0],
            [1.0, 1.0],
            BoundaryState.at_rest(0.0, config.boundary_order),
            BoundaryState.at_rest(2.0, config.boundary_order),
            config,
        )
    assert excinfo.value.segment == 1


def test_boundary_states_are_validated() -> None:
    order = SNAP_7.boundary_order
    with pytest.raises(InvalidInputError):
        optimize_spline([0.0, 1.0], [1.0], BoundaryState.at_rest(0.5, order), BoundaryState.at_rest(1.0, order), SNAP_7)
    with pytest.raises(InvalidInputError):
        optimize_spline([0.0, 1.0], [1.0], BoundaryState.at_rest(0.0, 1), BoundaryState.at_rest(1.0, order), SNAP_7)
    with pytest.raises(InvalidInputError):
        optimize_spline([0.0, 1.0], [0.0], BoundaryState.at_rest(0.0, order), BoundaryState.at_rest(1.0, order), SNAP_7)


def test_evaluate_is_right_continuous_and_bounded() -> None:
    traj = solve_at_rest(np.array([0.0, 1.0, -1.0]), np.array([1.0, 2.0]), SNAP_7)
    knot = float(traj.knot_times[1])
    assert evaluate(traj, knot, 3) == pytest.approx(float(traj.evaluate_segment(1, 0.0, 3)))
    assert evaluate(traj, traj.t_end) == pytest.approx(-1.0, abs=1e-9)
    with pytest.raises(InvalidInputError):
        evaluate(traj, traj.t_end + 1e-3)
    with pytest.raises(InvalidInputError):
        evaluate(traj, -1e-3)
    with pytest.raises(InvalidInputError):
        evaluate(traj, 0.5, -1)


def test_time_offset_shifts_knots() -> None:
    order = SNAP_7.boundary_order
    traj = optimize_spline(
        [0.0, 1.0], [2.0], BoundaryState.at_rest(0.0, order), BoundaryState.at_rest(1.0, order), SNAP_7, t0=3.0
    )
    np.testing.assert_allclose(traj.knot_times, [3.0, 5.0])
    assert evaluate(traj, 3.0) == pytest.approx(0.0, abs=1e-12)
    assert evaluate(traj, 5.0) == pytest.approx(1.0, abs=1e-9)


def test_stretching_time_stretches_the_solution() -> None:
    rng = np.random.default_rng(9)
    values = rng.uniform(-2.0, 2.0, size=4)
    durations = rng.uniform(0.5, 2.0, size=3)
    alpha = 2.5
    base = solve_at_rest(values, durations, SNAP_7)
    slow = solve_at_rest(values, alpha * durations, SNAP_7)
    np.testing.assert_allclose(slow.knot_times, alpha * base.knot_times)
    times = [a + f * (b - a) for a, b in zip(base.knot_times, base.knot_times[1:]) for f in (0.1, 0.4, 0.7, 0.9)]
    for t in times:
        for k in range(4):
            expected = evaluate(base, t, k) / alpha**k
            assert evaluate(slow, alpha * t, k) == pytest.approx(expected, rel=1e-6, abs=1e-6)
    # die Kosten skalieren mit alpha^(1 - 2 * 4) für reines Snap-Gewicht
    assert spline_cost(slow, SNAP_7) == pytest.approx(spline_cost(base, SNAP_7) * alpha**-7, rel=1e-6)


def test_segment_times_rule() -> None:
    config = SplineConfig(v_avg_mps=0.5, omega_avg_radps=1.0, t_min_s=0.1)
    times = segment_times([[0, 0, 0], [1, 0, 0], [1, 0, 0.01], [1, 0, 0.02]], [0.0, 0.0, 2.0, 2.0], config)
    np.testing.assert_allclose(times, [2.0, 2.0, 0.1])


def test_flat_outputs_share_knots_and_hit_waypoints() -> None:
    points = [[0.0, 0.0, 1.0], [1.0, 0.5, 1.2], [2.0, 0.0, 1.0]]
    path = FlatPath.build(points, 0.0, 0.0, SplineConfig.position_default())
    traj = solve_flat_outputs(path, SplineConfig.position_default(), SplineConfig.yaw_default())
    for output in traj.outputs:
        np.testing.assert_array_equal(output.knot_times, path.knot_times)
    for t, position, yaw in zip(path.knot_times, path.positions, path.yaws):
        np.testing.assert_allclose(traj.evaluate_all(float(t)), [*position, yaw], atol=1e-6)
    np.testing.assert_allclose(traj.evaluate_all(traj.t_start, 1), np.zeros(4), atol=1e-9)
    np.testing.assert_allclose(traj.evaluate_all(traj.t_end, 2), np.zeros(4), atol=1e-6)
    assert traj.kkt_residual <= 1e-8
    assert traj.derivatives(traj.t_end + 1.0).shape == (5, 4)
    states = traj.boundary_states(1.0, 4, 2)
    assert [state.order for state in states] == [4, 4, 4, 2]
