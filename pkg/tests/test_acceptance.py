"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion lines.
Tolerances are pinned from the contract; runtime budgets are asserted where the
criterion states one. The Monte-Carlo law-of-total-probability criterion is the
long pole (a few minutes; budget ten).
"""

import hashlib
import math
import time
from pathlib import Path

import numpy as np
import pytest

from fibercond import cli
from fibercond.density import normalize_on_fiber, standard_gaussian
from fibercond.fiber import find_seed, trace_fiber
from fibercond.geometry import (ObservationOperator, corrective_factor,
                                ellipse_operator, linear_operator)
from fibercond.modes import ModeProblem, local_minima_of_series, scan_fiber, solve
from fibercond.om import (om_value, om_values_on_trace, richardson_extrapolate,
                          small_ball_log_ratio)
from fibercond.validate import (bayes_suite, dominated_suite,
                                equivalent_observations_suite, product_slice_suite,
                                pushforward_suite, restriction_suite,
                                run_total_probability, standard_predicates)

SQRT101 = math.sqrt(1.01)
MC_SEED = 0


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {status}: {name}" + (f" ({detail})" if detail else ""))


@pytest.fixture(scope="module")
def ellipse():
    return ellipse_operator(1.0, 0.5)


@pytest.fixture(scope="module")
def gauss():
    return standard_gaussian(2)


@pytest.fixture(scope="module")
def trace101(ellipse):
    seed = find_seed(ellipse, [1.01], np.array([2.0, 0.0]))
    return trace_fiber(ellipse, [1.01], seed, step=1e-3)


def test_corrective_factor_closed_form(ellipse):
    """Corrective factor at the poles equals a/(2 sqrt y) resp. b/(2 sqrt y)."""
    t0 = time.perf_counter()
    fd = ObservationOperator(2, 1, ellipse.eval_fn, None)
    worst_an, worst_fd = 0.0, 0.0
    for y in (0.25, 1.01, 4.0):
        ry = math.sqrt(y)
        cases = [(np.array([1.0 * ry, 0.0]), 1.0 / (2.0 * ry)),
                 (np.array([0.0, 0.5 * ry]), 0.5 / (2.0 * ry))]
        for x, expected in cases:
            worst_an = max(worst_an, abs(corrective_factor(ellipse, x) / expected - 1.0))
            worst_fd = max(worst_fd, abs(corrective_factor(fd, x) / expected - 1.0))
    elapsed = time.perf_counter() - t0
    ok = worst_an <= 1e-8 and worst_fd <= 1e-5 and elapsed < 1.0
    report("corrective factor closed form", ok,
           f"rel err analytic {worst_an:.2e}, fd {worst_fd:.2e}, {elapsed:.2f}s")
    assert worst_an <= 1e-8
    assert worst_fd <= 1e-5
    assert elapsed < 1.0


def test_mode_swap(gauss, ellipse, trace101):
    """Disintegration modes at the major poles, restricted modes at the minor poles."""
    t0 = time.perf_counter()
    expected = {
        "disintegration": np.array([[-SQRT101, 0.0], [SQRT101, 0.0]]),
        "restricted": np.array([[0.0, -0.5 * SQRT101], [0.0, 0.5 * SQRT101]]),
    }
    worst_pos, worst_res, scan_ok = 0.0, 0.0, True
    for variant, targets in expected.items():
        prob = ModeProblem(density=gauss, operator=ellipse, y=[1.01], variant=variant)
        res = solve(prob)
        assert len(res.minimizers) == 2
        pts = res.points()
        # match each expected mode to its nearest returned point (set equality)
        for target in targets:
            worst_pos = max(worst_pos,
                            float(np.min(np.max(np.abs(pts - target), axis=1))))
        worst_res = max(worst_res, max(m.residual for m in res.minimizers))
        # The exhaustive fiber scan's co-optimal minima sit at the same points.
        scan = scan_fiber(prob, trace101)
        best = min(obj for _, obj in scan)
        scan_pts = trace101.nodes[[i for i, obj in scan if obj <= best + 1e-6]]
        for target in targets:
            scan_ok &= bool(np.min(np.linalg.norm(scan_pts - target, axis=1))
                            <= 2.0 * trace101.step)
    elapsed = time.perf_counter() - t0
    ok = worst_pos <= 1e-4 and worst_res <= 1e-8 and scan_ok and elapsed < 10.0
    report("mode swap", ok,
           f"pos err {worst_pos:.2e}, residual {worst_res:.2e}, scan agrees: {scan_ok}, "
           f"{elapsed:.1f}s")
    assert worst_pos <= 1e-4 and worst_res <= 1e-8 and scan_ok
    assert elapsed < 10.0


def test_linear_collapse(gauss):
    """For h(x) = (3,4).x, restriction and disintegration coincide."""
    t0 = time.perf_counter()
    op = linear_operator([3.0, 4.0])
    tr = trace_fiber(op, [0.7], find_seed(op, [0.7], np.array([1.0, 1.0])), step=1e-3,
                     truncate_log_density=gauss.log_density)
    profs = {v: normalize_on_fiber(gauss, op, tr, v)
             for v in ("restricted", "disintegration")}
    profile_gap = float(np.max(np.abs(profs["restricted"].normalized
                                      - profs["disintegration"].normalized)))
    modes = {v: solve(ModeProblem(density=gauss, operator=op, y=[0.7], variant=v)).points()
             for v in ("restricted", "disintegration")}
    mode_gap = float(np.max(np.abs(np.sort(modes["restricted"], axis=0)
                                   - np.sort(modes["disintegration"], axis=0))))
    elapsed = time.perf_counter() - t0
    ok = profile_gap <= 1e-10 and mode_gap <= 1e-8 and elapsed < 5.0
    report("linear collapse", ok,
           f"profile gap {profile_gap:.2e}, mode gap {mode_gap:.2e}, {elapsed:.1f}s")
    assert profile_gap <= 1e-10
    assert mode_gap <= 1e-8
    assert elapsed < 5.0


def test_law_of_total_probability(gauss, ellipse):
    """Disintegration satisfies the law on 10 predicates; restriction breaks it."""
    t0 = time.perf_counter()
    preds = standard_predicates()
    disint = run_total_probability(gauss, ellipse, preds, 2000, seed=MC_SEED, step=0.01)
    n_pass = sum(r.passed for r in disint)
    restricted = run_total_probability(gauss, ellipse, preds, 5000, seed=MC_SEED,
                                       step=0.01, profile_variant="restricted")
    n_violations = sum(not r.passed for r in restricted)
    elapsed = time.perf_counter() - t0
    ok = n_pass == 10 and n_violations >= 1 and elapsed < 600.0
    worst_fail = max(abs(r.lhs - r.rhs) / r.se_diff for r in restricted if not r.passed) \
        if n_violations else 0.0
    report("law of total probability", ok,
           f"disintegration {n_pass}/10 pass at M=2000; restricted variant "
           f"{n_violations} violations at M=5000 (max z={worst_fail:.1f}), {elapsed:.0f}s")
    assert n_pass == 10
    assert n_violations >= 1
    assert elapsed < 600.0


def test_lemma_suite(gauss, ellipse):
    """Product, pushforward (3 T), equivalent obs (2 f), dominated (2 g),
    restriction (2 sets), Bayes (3 covariances) at stated tolerances."""
    t0 = time.perf_counter()
    groups = {
        "product_slice": product_slice_suite(),
        "pushforward": pushforward_suite(gauss, ellipse),
        "equivalent_observations": equivalent_observations_suite(gauss, ellipse),
        "dominated": dominated_suite(gauss, ellipse),
        "restriction": restriction_suite(gauss, ellipse),
        "bayes_gaussian": bayes_suite(),
    }
    required = {"product_slice": 1, "pushforward": 3, "equivalent_observations": 2,
                "dominated": 2, "restriction": 2, "bayes_gaussian": 3}
    failures = [r.check for reports in groups.values() for r in reports if not r.passed]
    counts_ok = all(len(groups[k]) >= n for k, n in required.items())
    elapsed = time.perf_counter() - t0
    ok = not failures and counts_ok and elapsed < 120.0
    report("lemma suite", ok,
           f"{sum(len(v) for v in groups.values())} checks, failures: {failures or 'none'}, "
           f"{elapsed:.0f}s")
    assert not failures and counts_ok
    assert elapsed < 120.0


def test_gaussian_slice_oracle(gauss):
    """Disintegration along h = x1 at y = 0.7 is N(0,1) in x2."""
    t0 = time.perf_counter()
    from fibercond.geometry import coordinate_projection
    op = coordinate_projection(2)
    tr = trace_fiber(op, [0.7], np.array([0.7, 0.0]), step=1e-3,
                     truncate_log_density=gauss.log_density)
    prof = normalize_on_fiber(gauss, op, tr, "disintegration")
    target = np.exp(-0.5 * tr.nodes[:, 1] ** 2) / math.sqrt(2.0 * math.pi)
    sup = float(np.max(np.abs(prof.normalized - target)))
    elapsed = time.perf_counter() - t0
    ok = sup <= 1e-4 and elapsed < 5.0
    report("gaussian slice oracle", ok, f"sup err {sup:.2e}, {elapsed:.1f}s")
    assert sup <= 1e-4
    assert elapsed < 5.0


def test_om_small_ball_consistency(gauss, ellipse, trace101):
    """Richardson-extrapolated log ball-mass ratios match OM differences (p=2)."""
    t0 = time.perf_counter()
    prof = normalize_on_fiber(gauss, ellipse, trace101, "disintegration")
    prob = ModeProblem(density=gauss, operator=ellipse, y=[1.01], variant="lp", p=2.0)
    x_maj, x_min = np.array([SQRT101, 0.0]), np.array([0.0, 0.5 * SQRT101])
    target = om_value(prob, x_maj) - om_value(prob, x_min)
    ratios = [small_ball_log_ratio(prof, x_maj, x_min, r, p=2.0)
              for r in (0.2, 0.1, 0.05)]
    err = abs(richardson_extrapolate(ratios) - target)
    elapsed = time.perf_counter() - t0
    ok = err <= 0.02 and elapsed < 60.0
    report("OM / small-ball consistency", ok, f"error {err:.2e} nats, {elapsed:.1f}s")
    assert err <= 0.02
    assert elapsed < 60.0


def test_fig2_structure(gauss, ellipse, trace101):
    """l_2 scan: exactly 2 strict local minima; l_inf: exactly 4, with the l_2
    minimizer positions as local maxima (within 2 trace steps).

    The l_2 count clause FAILS by exact arithmetic: for y > 1 the disintegration
    OM functional acquires a shallow local minimum at each minor pole (depth
    2.5e-5 nats at y=1.01; slope balance 0.375*(1-y)), so a faithful scan
    reports four minima. See the decisions ledger for the full analysis.
    """
    t0 = time.perf_counter()
    l2 = om_values_on_trace(gauss, ellipse, trace101, "disintegration", p=2.0)
    linf = om_values_on_trace(gauss, ellipse, trace101, "disintegration", p=math.inf)
    l2_minima = local_minima_of_series(l2, closed=True)
    linf_minima = local_minima_of_series(linf, closed=True)
    linf_maxima = local_minima_of_series(-linf, closed=True)

    l2_best = min(l2[i] for i in l2_minima)
    l2_global = [i for i in l2_minima if l2[i] <= l2_best + 1e-6]
    s, length = trace101.arclen, trace101.total_length
    argmin_on_maxima = all(
        min(min(abs(s[i] - s[j]), length - abs(s[i] - s[j])) for j in linf_maxima)
        <= 2.0 * trace101.step
        for i in l2_global)

    elapsed = time.perf_counter() - t0
    clause_l2 = len(l2_minima) == 2
    clause_linf = len(linf_minima) == 4
    ok = clause_l2 and clause_linf and argmin_on_maxima and elapsed < 60.0
    report("Fig-2 structure", ok,
           f"l2 minima {len(l2_minima)} (criterion: exactly 2), "
           f"linf minima {len(linf_minima)} (exactly 4: {clause_linf}), "
           f"l2 argmins on linf maxima: {argmin_on_maxima}, {elapsed:.1f}s")
    assert clause_linf
    assert argmin_on_maxima
    assert elapsed < 60.0
    assert clause_l2, (
        "spec/paper defect: exact arithmetic gives 4 strict l_2 local minima at "
        "y=1.01 (shallow 2.5e-5-nat minima at the minor poles for y > 1); "
        "see /root/notes/decisions.md")


def test_determinism_manifest_rerun(tmp_path):
    """A command rerun from its manifest reproduces byte-identical outputs."""
    out = tmp_path / "run"
    args = ["reproduce", "--figure", "fig2", "--step", "0.002", "--out", str(out)]
    assert cli.main(args) == 0

    def digest():
        return {str(p.relative_to(out)): hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(out.rglob("*")) if p.is_file()}

    first = digest()
    assert cli.main(["rerun", "--manifest", str(out / "manifest.json")]) == 0
    same = digest() == first
    report("determinism", same, f"{len(first)} files byte-identical: {same}")
    assert same
