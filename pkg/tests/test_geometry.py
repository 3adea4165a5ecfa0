import math

import numpy as np
import pytest

from fibercond.errors import RankDeficient
from fibercond.geometry import (ObservationOperator, corrective_factor, decompose,
                                ellipse_operator, gram_det, is_regular_point,
                                kernel_direction, linear_operator, operator_from_spec)

SQRT101 = math.sqrt(1.01)
GRAM_MAJOR = 2.0 * SQRT101            # |grad h| at (a sqrt(y), 0), a=1, b=1/2, y=1.01
GRAM_MINOR = 4.0 * SQRT101            # |grad h| at (0, b sqrt(y))
CORR_MAJOR = 0.49751859510499463      # a / (2 sqrt(y))
CORR_MINOR = 0.24875929755249732      # b / (2 sqrt(y))


def fd_ellipse():
    an = ellipse_operator(1.0, 0.5)
    return ObservationOperator(2, 1, an.eval_fn, None, name="ellipse-fd")


class TestJacobian:
    def test_coordinate_projection(self):
        op = operator_from_spec("coord1")
        assert np.allclose(op.jacobian(np.array([3.0, 7.0])), [[1.0, 0.0]])

    def test_ellipse_gradient_at_major_pole(self, ellipse_op):
        J = ellipse_op.jacobian(np.array([SQRT101, 0.0]))
        assert np.allclose(J, [[GRAM_MAJOR, 0.0]], rtol=0, atol=1e-14)

    def test_linear_map(self):
        op = linear_operator([3.0, 4.0])
        for x in ([0.0, 0.0], [1.0, -2.0], [10.0, 3.0]):
            assert np.allclose(op.jacobian(np.array(x)), [[3.0, 4.0]])

    def test_fd_matches_analytic_on_ellipse(self, ellipse_op):
        # 100 random regular points; the quadratic form makes central
        # differences essentially exact, well inside the 1e-5 contract.
        rng = np.random.default_rng(42)
        fd = fd_ellipse()
        n_checked = 0
        while n_checked < 100:
            x = rng.normal(size=2) * 1.5
            if not is_regular_point(ellipse_op, x):
                continue
            Ja = ellipse_op.jacobian(x)
            Jf = fd.jacobian(x)
            assert np.linalg.norm(Jf - Ja) <= 1e-5 * np.linalg.norm(Ja)
            n_checked += 1

    def test_batched_evaluation_shapes(self, ellipse_op):
        X = np.ones((7, 3, 2))
        assert ellipse_op(X).shape == (7, 3, 1)
        assert ellipse_op.jacobian(X).shape == (7, 3, 1, 2)


class TestDecompose:
    def test_axis_row(self):
        dec = decompose(np.array([[1.0, 0.0]]))
        assert np.allclose(dec.singular_values, [1.0])
        assert np.allclose(np.abs(dec.kernel_basis[:, 0]), [0.0, 1.0])
        assert np.allclose(np.abs(dec.normal_basis[:, 0]), [1.0, 0.0])

    def test_three_four_five(self):
        dec = decompose(np.array([[3.0, 4.0]]))
        assert np.allclose(dec.singular_values, [5.0])
        assert np.allclose(np.abs(dec.normal_basis[:, 0]), [0.6, 0.8])

    def test_zero_row_rank_deficient(self):
        with pytest.raises(RankDeficient):
            decompose(np.array([[0.0, 0.0]]))

    @pytest.mark.parametrize("n,d", [(1, 2), (1, 4), (2, 3), (3, 5)])
    def test_basis_invariants(self, n, d):
        rng = np.random.default_rng(n * 10 + d)
        for _ in range(20):
            J = rng.normal(size=(n, d))
            dec = decompose(J)
            k, nb = dec.kernel_basis, dec.normal_basis
            assert np.all(np.abs(J @ k) <= 1e-10 * np.linalg.norm(J))
            assert np.allclose(k.T @ k, np.eye(d - n), atol=1e-12)
            assert np.allclose(nb.T @ nb, np.eye(n), atol=1e-12)
            assert np.all(np.abs(k.T @ nb) <= 1e-12)
            assert np.all(np.diff(dec.singular_values) <= 0)


class TestGramDet:
    def test_ellipse_poles(self):
        assert gram_det(np.array([[GRAM_MAJOR, 0.0]])) == pytest.approx(GRAM_MAJOR, rel=1e-15)
        assert 1.0 / gram_det(np.array([[0.0, GRAM_MINOR]])) == pytest.approx(CORR_MINOR, rel=1e-12)

    def test_wide_two_row(self):
        J = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        assert gram_det(J) == pytest.approx(2.0, rel=1e-14)

    def test_two_computation_paths_agree(self):
        rng = np.random.default_rng(5)
        for n, d in [(1, 2), (2, 3), (2, 4), (3, 5)]:
            for _ in range(10):
                J = rng.normal(size=(n, d))
                dec = decompose(J)
                via_normal = abs(np.linalg.det(dec.normal_basis.T @ J.T))
                assert gram_det(J) == pytest.approx(via_normal, rel=1e-10)

    def test_orthogonal_right_invariance(self):
        rng = np.random.default_rng(6)
        for n, d in [(1, 3), (2, 4)]:
            for _ in range(10):
                J = rng.normal(size=(n, d))
                Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
                assert gram_det(J @ Q) == pytest.approx(gram_det(J), rel=1e-10)

    def test_single_row_is_euclidean_norm_exactly(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            J = rng.normal(size=(1, 4))
            assert gram_det(J) == np.linalg.norm(J[0])

    def test_batched(self, ellipse_op):
        X = np.array([[SQRT101, 0.0], [0.0, 0.5 * SQRT101]])
        g = gram_det(ellipse_op.jacobian(X))
        assert np.allclose(g, [GRAM_MAJOR, GRAM_MINOR], rtol=1e-12)


class TestCorrectiveFactor:
    def test_ellipse_major_pole(self, ellipse_op):
        assert corrective_factor(ellipse_op, np.array([SQRT101, 0.0])) == \
            pytest.approx(CORR_MAJOR, rel=1e-12)

    def test_coordinate_projection_is_unit(self):
        op = operator_from_spec("coord1")
        for x in ([0.0, 0.0], [2.0, -3.0]):
            assert corrective_factor(op, np.array(x)) == pytest.approx(1.0, rel=1e-14)

    def test_linear_three_four(self):
        op = linear_operator([3.0, 4.0])
        assert corrective_factor(op, np.array([1.0, 1.0])) == pytest.approx(0.2, rel=1e-14)


class TestRegularity:
    def test_ellipse_origin_not_regular(self, ellipse_op):
        assert not is_regular_point(ellipse_op, np.zeros(2))

    def test_ellipse_pole_regular(self, ellipse_op):
        assert is_regular_point(ellipse_op, np.array([SQRT101, 0.0]))

    def test_projection_always_regular(self):
        op = operator_from_spec("coord1")
        for x in ([0.0, 0.0], [100.0, -50.0]):
            assert is_regular_point(op, np.array(x))

    def test_nonfinite_returns_false(self, ellipse_op):
        assert not is_regular_point(ellipse_op, np.array([np.nan, 0.0]))


class TestConstructionAndCatalog:
    def test_rejects_square_and_tall(self):
        with pytest.raises(ValueError):
            ObservationOperator(2, 2, lambda x: x)
        with pytest.raises(ValueError):
            ObservationOperator(2, 3, lambda x: x)

    def test_output_has_n_components(self, ellipse_op):
        assert ellipse_op(np.array([1.0, 1.0])).shape == (1,)

    @pytest.mark.parametrize("spec,d", [
        ("coord1", 2), ("coord1:3", 3), ("linear:3,4", 2),
        ("ellipse:1,0.5", 2), ("sphere:0", 2), ("sphere:0,3", 3),
    ])
    def test_catalog_specs(self, spec, d):
        op = operator_from_spec(spec)
        assert op.dim_ambient == d and op.dim_obs == 1

    @pytest.mark.parametrize("spec", ["nope", "ellipse:1", "linear:5", "sphere:a"])
    def test_catalog_rejects(self, spec):
        with pytest.raises(ValueError):
            operator_from_spec(spec)


def test_analytic_jacobians_match_fd_spot_check():
    # Catalog invariant: every supplied analytic Jacobian agrees with central
    # finite differences to 1e-4 relative at probed points.
    from fibercond.geometry import compose_scalar, sphere_operator
    rng = np.random.default_rng(11)
    ops = [operator_from_spec("coord1"), linear_operator([3.0, 4.0]),
           ellipse_operator(1.0, 0.5), sphere_operator(1.0),
           compose_scalar(ellipse_operator(1.0, 0.5), np.exp, f_prime=np.exp)]
    for op in ops:
        fd = ObservationOperator(op.dim_ambient, op.dim_obs, op.eval_fn, None)
        for _ in range(10):
            x = rng.normal(size=op.dim_ambient) + 0.5
            Ja, Jf = op.jacobian(x), fd.jacobian(x)
            assert np.linalg.norm(Jf - Ja) <= 1e-4 * max(1.0, np.linalg.norm(Ja))


def test_kernel_direction_is_rotated_gradient(ellipse_op):
    x = np.array([0.6, 0.4])
    g = ellipse_op.jacobian(x)[0]
    t = kernel_direction(ellipse_op, x)
    expected = np.array([-g[1], g[0]]) / np.linalg.norm(g)
    assert np.allclose(t, expected, atol=1e-14)
    flipped = kernel_direction(ellipse_op, x, prev=-expected)
    assert np.allclose(flipped, -expected, atol=1e-14)
