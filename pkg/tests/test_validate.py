import json
import math

import numpy as np
import pytest

from fibercond.density import AmbientDensity, gaussian_mixture, standard_gaussian
from fibercond.errors import TooManySingularFibers, ZeroMass
from fibercond.ioutil import write_jsonl_atomic
from fibercond.validate import (bayes_suite, check_dominated,
                                check_equivalent_observations, check_product_slice,
                                check_pushforward, check_restriction,
                                check_total_probability, dominated_suite,
                                equivalent_observations_suite, product_slice_suite,
                                pushforward_suite, restriction_suite,
                                run_total_probability, standard_predicates)


class TestProductSlice:
    def test_standard_gaussian_slices(self):
        for y in (0.7, 0.0):
            rep = check_product_slice(standard_gaussian(1), y)
            assert rep.passed and rep.lhs <= 1e-4

    def test_mixture_slice(self):
        mu2 = gaussian_mixture([0.5, 0.5], [[-1.0], [1.0]], [[0.3], [0.3]])
        rep = check_product_slice(mu2, 0.7)
        assert rep.passed


class TestPushforward:
    def test_suite_passes(self, gauss2, ellipse_op):
        reports = pushforward_suite(gauss2, ellipse_op)
        assert len(reports) == 3
        assert all(r.passed for r in reports)
        assert reports[0].lhs <= 1e-12          # identity map is exact

    def test_shear_matrix(self, gauss2, ellipse_op):
        T = np.array([[1.0, 0.7], [0.0, 1.0]])
        rep = check_pushforward(T, gauss2, ellipse_op, 1.01)
        assert rep.passed


class TestEquivalentObservations:
    def test_suite_passes(self, gauss2, ellipse_op):
        reports = equivalent_observations_suite(gauss2, ellipse_op)
        assert len(reports) == 3
        assert all(r.passed for r in reports)
        assert reports[0].lhs == 0.0            # identity composition is bit-equal

    def test_finite_difference_composition(self, gauss2, ellipse_op):
        # Without f', the composed operator falls back to FD Jacobians.
        rep = check_equivalent_observations(ellipse_op, lambda t: t ** 3 + t, 1.01,
                                            gauss2, f_prime=None, f_name="fd")
        assert rep.passed


class TestDominatedAndRestriction:
    def test_dominated_suite(self, gauss2, ellipse_op):
        reports = dominated_suite(gauss2, ellipse_op)
        assert all(r.passed for r in reports)
        assert reports[0].lhs <= 1e-14          # g == 1 is exact

    def test_restriction_suite(self, gauss2, ellipse_op):
        reports = restriction_suite(gauss2, ellipse_op)
        assert all(r.passed for r in reports)

    def test_restriction_disjoint_set_zero_mass(self, gauss2, ellipse_op):
        far = lambda x: 0.5 - np.linalg.norm(np.asarray(x, float) - [10.0, 0.0], axis=-1)
        with pytest.raises(ZeroMass):
            check_restriction(far, gauss2, ellipse_op, 1.01, set_name="far_disc")


class TestBayes:
    def test_suite_passes(self):
        reports = bayes_suite()
        assert len(reports) == 3
        assert all(r.passed for r in reports)
        cm = [r.details["cond_mean"] for r in reports]
        cv = [r.details["cond_var"] for r in reports]
        assert cm == [0.0, 0.5, -0.0] and cv == [1.0, 0.75, 2.0]


class TestTotalProbability:
    def test_disintegration_small_sample(self, gauss2, ellipse_op):
        reports = run_total_probability(gauss2, ellipse_op, standard_predicates(),
                                        n_samples=150, seed=5, step=0.02)
        assert len(reports) == 10
        assert all(r.passed for r in reports)
        assert all(r.details["discarded"] == 0 for r in reports)

    def test_single_predicate_matches_bulk(self, gauss2, ellipse_op):
        pred = standard_predicates()["x1_pos"]
        single = check_total_probability(gauss2, ellipse_op, pred, 60, seed=9,
                                         step=0.02, name="x1_pos")
        bulk = run_total_probability(gauss2, ellipse_op, {"x1_pos": pred}, 60, seed=9,
                                     step=0.02)[0]
        assert single.lhs == bulk.lhs and single.rhs == bulk.rhs

    def test_bit_reproducible(self, gauss2, ellipse_op):
        preds = {"band_x1": standard_predicates()["band_x1"]}
        a = run_total_probability(gauss2, ellipse_op, preds, 80, seed=3, step=0.02)[0]
        b = run_total_probability(gauss2, ellipse_op, preds, 80, seed=3, step=0.02)[0]
        assert (a.lhs, a.rhs, a.se_diff) == (b.lhs, b.rhs, b.se_diff)
        c = run_total_probability(gauss2, ellipse_op, preds, 80, seed=4, step=0.02)[0]
        assert (a.lhs, a.rhs) != (c.lhs, c.rhs)

    def test_too_many_singular_fibers(self, ellipse_op, gauss2):
        # A sampler pinned to the origin produces only non-regular observations.
        degenerate = AmbientDensity(2, gauss2.log_density, gauss2.log_density_gradient,
                                    sampler=lambda rng, size: np.zeros((size, 2)),
                                    name="degenerate")
        with pytest.raises(TooManySingularFibers):
            run_total_probability(degenerate, ellipse_op,
                                  {"x1_pos": standard_predicates()["x1_pos"]},
                                  n_samples=20, seed=0)


def test_report_serialization_excludes_runtime(tmp_path):
    rep = bayes_suite()[0]
    assert rep.runtime_seconds > 0.0
    row = rep.to_dict()
    assert "runtime" not in json.dumps(row)
    path = tmp_path / "r.jsonl"
    write_jsonl_atomic(path, [row])
    parsed = json.loads(path.read_text().splitlines()[0])
    assert parsed["check"] == "bayes_gaussian" and parsed["verdict"] == "pass"
