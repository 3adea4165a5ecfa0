import math

import numpy as np
import pytest
from scipy import integrate, stats

from fibercond.errors import MaxNodesExceeded, RankDeficient
from fibercond.fiber import (FiberTrace, fiber_integral, find_seed, restrict_to_set,
                             trace_fiber, write_trace_csv)
from fibercond.geometry import is_regular_point, operator_from_spec, sphere_operator

SQRT101 = math.sqrt(1.01)
# Quadrature oracle: perimeter of the ellipse with semi-axes (a sqrt(y), b sqrt(y))
# = integral of hypot(A sin t, B cos t) over [0, 2 pi], frozen below.
PERIMETER_101 = 4.868384978908708


def ellipse_perimeter(A: float, B: float) -> float:
    val, _ = integrate.quad(lambda t: math.hypot(A * math.sin(t), B * math.cos(t)),
                            0.0, 2.0 * math.pi, limit=200, epsabs=1e-13, epsrel=1e-13)
    return val


@pytest.fixture(scope="module")
def circle_trace():
    op = sphere_operator(0.0)
    seed = find_seed(op, [4.0], np.array([3.0, 1.0]))
    return op, trace_fiber(op, [4.0], seed, step=1e-3)


class TestFindSeed:
    def test_ellipse_axis_start(self, ellipse_op):
        x = find_seed(ellipse_op, [1.01], np.array([2.0, 0.0]), tol=1e-10)
        assert np.allclose(x, [SQRT101, 0.0], atol=1e-10)

    def test_projection_moves_normal_only(self):
        op = operator_from_spec("coord1")
        x = find_seed(op, [0.7], np.array([0.0, 5.0]))
        assert np.allclose(x, [0.7, 5.0], atol=1e-12)

    def test_rank_deficient_start(self, ellipse_op):
        with pytest.raises(RankDeficient):
            find_seed(ellipse_op, [1.01], np.zeros(2))


class TestTraceFiber:
    def test_ellipse_closed_perimeter(self, trace101):
        assert trace101.closed
        oracle = ellipse_perimeter(SQRT101, 0.5 * SQRT101)
        assert oracle == pytest.approx(PERIMETER_101, abs=1e-12)
        assert trace101.total_length == pytest.approx(PERIMETER_101, abs=2e-6)

    def test_circle_circumference(self, circle_trace):
        _, tr = circle_trace
        assert tr.closed
        assert tr.total_length == pytest.approx(4.0 * math.pi, abs=1e-3)

    def test_unbounded_line_exceeds_budget(self):
        op = operator_from_spec("coord1")
        with pytest.raises(MaxNodesExceeded):
            trace_fiber(op, [0.0], np.array([0.0, 0.0]), step=1e-2, max_nodes=10_000)

    def test_trace_invariants(self, ellipse_op, trace101):
        tr = trace101
        assert tr.max_residual <= tr.corrector_tol
        spacing = np.linalg.norm(np.diff(tr.nodes, axis=0), axis=1)
        assert np.all(spacing >= 0.2 * tr.step) and np.all(spacing <= 2.0 * tr.step)
        assert tr.wrap_length <= 1.5 * tr.step
        assert np.allclose(np.linalg.norm(tr.tangents, axis=1), 1.0, atol=1e-12)
        # tangents lie in ker J at each node
        J = ellipse_op.jacobian(tr.nodes)
        dots = np.einsum("mnd,md->mn", J, tr.tangents)
        assert np.max(np.abs(dots)) <= 1e-8
        for x in tr.nodes[:: max(1, tr.n_nodes // 50)]:
            assert is_regular_point(ellipse_op, x)

    def test_orientation_reversal_same_set(self, ellipse_op, trace101):
        seed = trace101.nodes[0]
        rev = trace_fiber(ellipse_op, [1.01], seed, step=1e-3, orientation=-1)
        assert rev.closed and abs(rev.n_nodes - trace101.n_nodes) <= 2
        # Hausdorff distance between node sets below one step.
        d2 = np.sum((trace101.nodes[:, None, :] - rev.nodes[None, :, :]) ** 2, axis=-1)
        h = max(np.sqrt(d2.min(axis=1)).max(), np.sqrt(d2.min(axis=0)).max())
        assert h <= trace101.step

    def test_arclength_second_order_convergence(self, ellipse_op):
        seed = find_seed(ellipse_op, [1.01], np.array([2.0, 0.0]))
        errors = []
        for step in (4e-3, 2e-3, 1e-3):
            tr = trace_fiber(ellipse_op, [1.01], seed, step=step)
            errors.append(abs(tr.total_length - PERIMETER_101))
        assert errors[0] / errors[1] == pytest.approx(4.0, abs=1.0)
        assert errors[1] / errors[2] == pytest.approx(4.0, abs=1.0)

    def test_open_trace_truncates_at_forty_nats(self, gauss2):
        op = operator_from_spec("coord1")
        tr = trace_fiber(op, [0.7], np.array([0.7, 0.0]), step=1e-3,
                         truncate_log_density=gauss2.log_density)
        assert not tr.closed
        half = math.sqrt(80.0)  # |x2| where the Gaussian drops 40 nats
        assert tr.total_length == pytest.approx(2.0 * half, abs=0.01)


class TestFiberIntegral:
    def test_unit_function_gives_length(self, circle_trace):
        _, tr = circle_trace
        val = fiber_integral(tr, lambda X: np.ones(X.shape[0]))
        assert val == pytest.approx(4.0 * math.pi, abs=1e-3)

    def test_gaussian_on_vertical_line(self, gauss2):
        op = operator_from_spec("coord1")
        tr = trace_fiber(op, [0.7], np.array([0.7, 0.0]), step=1e-3,
                         truncate_log_density=gauss2.log_density)
        val = fiber_integral(tr, lambda X: np.exp(np.asarray(gauss2.log_density(X))))
        assert val == pytest.approx(stats.norm.pdf(0.7), abs=1e-6)

    def test_halfplane_indicator(self, circle_trace):
        _, tr = circle_trace
        val = fiber_integral(tr, lambda X: (X[:, 0] > 0).astype(float))
        assert val == pytest.approx(2.0 * math.pi, abs=2.0 * tr.step)


class TestRestrictToSet:
    def test_whole_space(self, circle_trace):
        _, tr = circle_trace
        w = restrict_to_set(tr, lambda X: np.ones(X.shape[0]))
        assert float(np.sum(w)) == pytest.approx(tr.total_length, rel=1e-12)

    def test_empty_set(self, circle_trace):
        _, tr = circle_trace
        w = restrict_to_set(tr, lambda X: -np.ones(X.shape[0]))
        assert float(np.sum(w)) == 0.0

    def test_upper_halfplane_is_half(self, circle_trace):
        _, tr = circle_trace
        w = restrict_to_set(tr, lambda X: X[:, 1])
        assert float(np.sum(w)) == pytest.approx(2.0 * math.pi, abs=tr.step)

    def test_interpolated_boundary_beats_node_mask(self, circle_trace):
        # The crossing interpolation is second order; a raw node mask is first order.
        _, tr = circle_trace
        w = restrict_to_set(tr, lambda X: X[:, 1])
        err = abs(float(np.sum(w)) - 2.0 * math.pi)
        assert err <= 10.0 * tr.step ** 2


def test_trace_csv_schema(tmp_path, ellipse_op, trace101):
    path = tmp_path / "trace.csv"
    write_trace_csv(path, trace101, ellipse_op)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,x1,x2,t1,t2,residual"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (trace101.n_nodes, 6)
    assert np.max(data[:, 5]) <= trace101.corrector_tol
