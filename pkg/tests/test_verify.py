import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tameinv.graded_space import Flavor, GradedElement, NormFamily, trig_element
from tameinv.problems import random_direction
from tameinv.verify import (SUITE_CSV_HEADER, SUITES, check_directional_derivative,
                            check_lipschitz_inverse, check_local_surjection, check_subdifferential,
                            descent_direction_slope, directional_cases, random_target, run_suite,
                            subdifferential_element)

N = 128


def test_hilbert_element_example(hk):
    s = trig_element(N, sin={1: 1.0})
    e = subdifferential_element(s, 0, hk)
    assert e.kind == "density"
    assert np.allclose(e.density.samples, s.samples / math.sqrt(math.pi), atol=1e-15)
    assert e.pair(s) == pytest.approx(math.sqrt(math.pi), rel=1e-14)


def test_sup_element_tie_break(ck):
    e = subdifferential_element(GradedElement.constant(2.0), 3, ck)
    assert (e.kind, e.order, e.index) == ("point", 0, 0)
    assert e.pair(GradedElement.constant(2.0)) == 2.0
    # sin w: |sin| = 1 at t = pi/2 (index 32) and |cos| = 1 at 0 with order 1
    e = subdifferential_element(trig_element(N, sin={1: 1.0}), 2, ck)
    assert (e.order, e.index) == (0, N // 4)


def test_zero_has_no_characterized_element(hk):
    with pytest.raises(ValueError):
        subdifferential_element(GradedElement.zeros(), 0, hk)


@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 12), st.integers(0, 2 ** 32 - 1),
       st.sampled_from([Flavor.SUP_CK, Flavor.SOBOLEV_HK]))
def test_subdifferential_identities(seed, k, zseed, flavor):
    fam = NormFamily(flavor, 12)
    v = random_direction(np.random.default_rng(seed), N)
    assert all(c.passed for c in check_subdifferential(v, k, fam))
    e = subdifferential_element(v, k, fam)
    z = random_direction(np.random.default_rng(zseed), N)
    assert abs(e.pair(z)) <= fam.norm(z, k) * (1 + 1e-10)


def test_directional_zero_direction(linear, hk):
    x = trig_element(N, sin={1: 0.1})
    r = check_directional_derivative(linear, x, GradedElement.zeros(), 2, hk)
    assert r.passed and r.observed == 0.0


def test_directional_rejects_zero_value(linear, hk):
    with pytest.raises(ValueError):
        check_directional_derivative(linear, GradedElement.zeros(), trig_element(N, sin={1: 1.0}),
                                     0, hk)
    with pytest.raises(ValueError):
        check_directional_derivative(linear, trig_element(N, sin={1: 1.0}),
                                     trig_element(N, sin={1: 1.0}), 0, hk, h_list=())


@pytest.mark.parametrize("which", ["linear", "nonlinear"])
def test_directional_cases_pass(which, request, hk):
    p = request.getfixturevalue(which)
    for x, xi, k in directional_cases(p, hk, count=10, seed=1):
        r = check_directional_derivative(p, x, xi, k, hk)
        assert r.passed, r.context


@pytest.mark.parametrize("flavor", ["SobolevHk", "SupCk"])
def test_descent_direction_slope(flavor, nonlinear):
    fam = NormFamily(flavor, 12)
    rng = np.random.default_rng(4)
    for _ in range(10):
        x = random_direction(rng, N) * 0.02
        y = random_direction(rng, N) * 0.02
        k = int(rng.integers(0, 12))
        slope, bound = descent_direction_slope(nonlinear, x, y, k, fam)
        assert slope <= bound + 1e-8 * max(1.0, abs(bound))


def test_random_target_range(nonlinear, hk):
    rng = np.random.default_rng(0)
    lim = 0.5 * nonlinear.R / nonlinear.m_prime_at(1)
    for _ in range(20):
        y = random_target(rng, nonlinear, hk, N, 0.5)
        assert 0 < hk.norm(y, 2) < lim


def test_linear_surjection_all_pass(linear, hk):
    res = check_local_surjection(linear, hk, 1.01, samples=20, seed=0, workers=2)
    assert len(res) == 20 and all(r.passed for r in res)
    assert all(r.context["ratio"] <= 1.0 + 1e-12 for r in res)


def test_surjection_threads_match_serial(linear, hk):
    a = check_local_surjection(linear, hk, 1.01, samples=6, seed=3, workers=1)
    b = check_local_surjection(linear, hk, 1.01, samples=6, seed=3, workers=3)
    assert [r.observed for r in a] == [r.observed for r in b]


def test_surjection_mu_validated(nonlinear, hk):
    with pytest.raises(ValueError):
        check_local_surjection(nonlinear, hk, 1.0, samples=1)


def test_lipschitz_identical_targets(nonlinear, hk):
    y = 0.05 * trig_element(N, sin={1: 1.0})
    r = check_lipschitz_inverse(nonlinear, hk, y, y, 1.1 * nonlinear.m_prime_at(1))
    assert r.passed and r.observed == 0.0


def test_lipschitz_linear(linear, hk):
    y0 = 0.2 * trig_element(N, sin={1: 1.0})
    y1 = 0.2 * trig_element(N, cos={2: 1.0})
    r = check_lipschitz_inverse(linear, hk, y0, y1, 1.01)
    assert r.passed and r.context["ratio"] <= 1.0 + 1e-10


def test_run_suite_linear(tmp_path, linear, hk):
    res = run_suite(linear, hk, SUITES, seed=0, samples=10)
    assert res.passed(), res.pass_rates()
    res.write(tmp_path)
    with open(tmp_path / "verify.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SUITE_CSV_HEADER
    assert len(rows) == len(res.results) + 1
    summary = json.loads((tmp_path / "verify_summary.json").read_text())
    assert summary["passed"] and set(summary["checks"]) == set(res.pass_rates())


def test_run_suite_is_deterministic(linear, hk):
    a = run_suite(linear, hk, ["subdifferential", "right_inverse", "weights"], seed=7, samples=5)
    b = run_suite(linear, hk, ["subdifferential", "right_inverse", "weights"], seed=7, samples=5)
    assert a.rows() == b.rows()


def test_run_suite_rejects_unknown(linear, hk):
    with pytest.raises(ValueError):
        run_suite(linear, hk, ["astrology"])


def test_pass_rate_thresholds(linear, hk):
    res = run_suite(linear, hk, ["right_inverse"], samples=4)
    bad = res.results[0]
    res.results[0] = type(bad)(bad.name, False, bad.observed, bad.bound, bad.margin, bad.context)
    assert not res.passed()
    assert res.passed({"right_inverse": 0.75})
