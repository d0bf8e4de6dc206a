import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fixed_point_oracle, linear_oracle
from tameinv.graded_space import GradedElement, NormFamily, trig_element
from tameinv.problems import (TameProblem, implicit_linear_family, implicit_nonlinear_family,
                              problem_linear_transport, random_element)
from tameinv.solver import (SolveOptions, Status, admissible_amplitude, choose_R_prime,
                            continuation_segments, continuation_solve, finite_regularity_solve,
                            implicit_solve, newton_solve, solve)

N = 128


def band_target(seed, size, max_mode=16):
    hk = NormFamily()
    z = random_element(np.random.default_rng(seed), N, max_mode=max_mode, decay=2)
    return z * (size / hk.norm(z, 0))


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 0.9))
@settings(max_examples=15)
def test_linear_matches_dense_solve(seed, size):
    hk = NormFamily()
    p = problem_linear_transport(0.5)
    y = band_target(seed, size)
    rep = solve(p, y, family=hk)
    assert rep.solved
    ref = GradedElement(linear_oracle(0.5, y.samples[0]))
    assert hk.norm(rep.final_x - ref, 0) <= 1e-10
    nrep = newton_solve(p, y, family=hk)
    assert nrep.solved and hk.norm(nrep.final_x - ref, 0) <= 1e-10


def test_zero_target(linear, hk):
    rep = solve(linear, GradedElement.zeros(), family=hk)
    assert rep.solved and rep.iterations == 0 and rep.final_x.is_zero()
    assert all(c.passed for c in rep.bound_checks)


def test_nonlinear_against_fixed_point(nonlinear, hk):
    y = 0.05 * trig_element(N, sin={1: 1.0})
    rep = solve(nonlinear, y, family=hk)
    assert rep.solved
    assert all(c.passed for c in rep.bound_checks), rep.bound_checks
    ref = GradedElement(fixed_point_oracle(y.samples[0]))
    # the oracle truncates at mode 16 and uses unpadded products
    assert hk.norm(rep.final_x - ref, 0) <= 1e-9
    r = nonlinear.F(rep.final_x) - y
    assert hk.norm(r, nonlinear.k0 + nonlinear.d2) <= 1e-10


def test_merit_strictly_decreasing(nonlinear, hk):
    rep = solve(nonlinear, 0.08 * trig_element(N, sin={1: 1.0}, cos={2: 0.3}), family=hk)
    assert rep.solved and rep.iterations >= 2
    assert all(b < a for a, b in zip(rep.merits, rep.merits[1:]))
    assert rep.check("ekeland_ratio").passed


def test_radius_exceeded(linear, hk):
    rep = solve(linear, trig_element(N, sin={1: 1.0}), family=hk)
    assert rep.status is Status.RADIUS_EXCEEDED


def test_options_validation(linear):
    with pytest.raises(ValueError):
        SolveOptions(tol=0.0)
    with pytest.raises(ValueError):
        SolveOptions(mu_factor=1.0)
    with pytest.raises(ValueError):
        SolveOptions(mu=0.5).resolve_mu(linear)


def test_choose_R_prime(linear, hk):
    y = 0.2 * trig_element(N, sin={1: 1.0})
    yn = hk.norm(y, 0)
    Rp = choose_R_prime(linear, y, hk, 1.1, 0.95)
    assert yn < Rp < 1.1 * yn and Rp <= 0.95


def shifted_atan(c):
    """``G(x) = atan(x + c) - atan(c)``; Newton from 0 diverges for ``c > 1.3917``."""
    return TameProblem("atan", lambda x: GradedElement(np.arctan(x.samples + c) - np.arctan(c)),
                       lambda x, u: GradedElement(u.samples / (1 + (x.samples + c) ** 2)),
                       lambda x, v: GradedElement(v.samples * (1 + (x.samples + c) ** 2)),
                       0, 0, 0, np.inf, m=np.full(20, 1.0), m_prime=np.full(20, 1.0))


def test_newton_diverges_where_descent_does_not(hk):
    p = shifted_atan(2.0)
    y = GradedElement.constant(-float(np.arctan(2.0)))
    assert newton_solve(p, y, family=hk).status is Status.DIVERGED
    rep = solve(p, y, SolveOptions(max_iters=200, mu=1e3), family=hk)
    assert rep.solved
    assert hk.norm(rep.final_x + GradedElement.constant(2.0), 0) <= 1e-8
    assert all(b < a for a, b in zip(rep.merits, rep.merits[1:]))


def test_newton_max_iters(nonlinear, hk):
    y = 0.08 * trig_element(N, sin={1: 1.0})
    assert newton_solve(nonlinear, y, SolveOptions(max_iters=1), family=hk).status \
        is Status.MAX_ITERS


def test_report_exports(tmp_path, nonlinear, hk):
    rep = solve(nonlinear, 0.05 * trig_element(N, sin={1: 1.0}), family=hk)
    rep.write(tmp_path, anchor=1)
    d = json.loads((tmp_path / "solve_report.json").read_text())
    assert d["status"] == "Solved" and d["iterations"] == rep.iterations
    assert GradedElement.from_record(d["final_x"]) == rep.final_x
    lines = (tmp_path / "solve_iterates.csv").read_text().splitlines()
    assert lines[0] == "iter,merit,residual_k0d2,step,x_norm_k0"
    assert len(lines) == rep.iterations + 2


# -- continuation -----------------------------------------------------------------

def test_continuation_segment_count(nonlinear):
    assert continuation_segments(nonlinear, 0.0, 0.95) == 0
    step = 0.9 * 0.05 * nonlinear.R / nonlinear.m_prime_at(1)
    assert continuation_segments(nonlinear, 0.999 * step, 0.95) == 1
    assert continuation_segments(nonlinear, 1.001 * step, 0.95) == 2


def test_continuation_empty(nonlinear, hk):
    y = 0.05 * trig_element(N, sin={1: 1.0})
    x = solve(nonlinear, y, family=hk).final_x
    rep = continuation_solve(nonlinear, y, y, x, family=hk)
    assert rep.solved and rep.extra["segments"] == 0 and rep.final_x is x


def test_continuation_refinement_and_chain(nonlinear, hk):
    y0 = 0.05 * trig_element(N, sin={1: 1.0})
    y1 = 0.05 * trig_element(N, sin={1: 1.0}, cos={2: 0.4})
    x0 = solve(nonlinear, y0, family=hk).final_x
    a = continuation_solve(nonlinear, y0, y1, x0, family=hk)
    assert a.solved and a.check("chained_lipschitz").passed
    b = continuation_solve(nonlinear, y0, y1, x0, family=hk, segments=2 * a.extra["segments"])
    assert b.solved
    assert hk.norm(a.final_x - b.final_x, 0) <= 10 * 1e-10
    with pytest.raises(ValueError):
        continuation_solve(nonlinear, y0, y1, x0, family=hk, segments=a.extra["segments"] - 1)
    with pytest.raises(ValueError):
        continuation_solve(nonlinear, y0, y1, GradedElement.zeros(), family=hk)


def test_continuation_linear_equals_direct(linear, hk):
    y = band_target(5, 0.5)
    rep = continuation_solve(linear, GradedElement.zeros(), y, GradedElement.zeros(), family=hk)
    assert rep.extra["segments"] > 1
    assert rep.solved
    ref = GradedElement(linear_oracle(0.5, y.samples[0]))
    assert hk.norm(rep.final_x - ref, 0) <= 1e-10


# -- finite regularity ------------------------------------------------------------

def test_finite_regularity_band_limited(nonlinear, hk):
    y = 0.05 * trig_element(N, sin={1: 1.0}, cos={3: 0.2})
    rep = finite_regularity_solve(nonlinear, y, family=hk)
    assert rep.solved, rep.message
    direct = solve(nonlinear, y, family=hk).final_x
    assert hk.norm(rep.final_x - direct, 0) <= 1e-9
    # the chain stops at the first cutoff covering the band of y
    assert rep.extra["cutoffs"] == [1, 2, 4]


def test_finite_regularity_lacunary(nonlinear, hk):
    modes = {2 ** j: 0.05 * (2.0 ** j) ** -3 for j in range(6)}
    rep = finite_regularity_solve(nonlinear, trig_element(N, sin=modes), family=hk)
    assert rep.solved, rep.message
    rates = [c for c in rep.bound_checks if c.name.startswith("cauchy_rate")]
    assert rates and all(c.passed for c in rates)
    dy = rep.extra["y_distances"]
    # each dyadic block holds one mode 2^j with ||.||_2 ~ 2^-j
    assert all(0.4 < b / a < 0.6 for a, b in zip(dy, dy[1:]))


def test_finite_regularity_zero(nonlinear, hk):
    rep = finite_regularity_solve(nonlinear, GradedElement.zeros(), family=hk)
    assert rep.solved and rep.final_x.is_zero()


# -- implicit -----------------------------------------------------------------------

def test_implicit_zero_epsilon(hk):
    rep = implicit_solve(implicit_linear_family(), 0.0, family=hk)
    assert rep.solved and rep.final_x.is_zero()


def test_implicit_linear_closed_form(hk):
    fam = implicit_linear_family()
    ratios = []
    for eps in (1e-3, 1e-2, 1e-1):
        rep = implicit_solve(fam, eps, family=hk)
        assert rep.solved and rep.check("implicit_bound").passed
        ref = -eps * fam.F0.L(GradedElement.zeros(), fam.F1_at_zero())
        assert hk.norm(rep.final_x - ref, 0) <= 1e-10
        ratios.append(hk.norm(rep.final_x, 0) / eps)
    assert max(ratios) - min(ratios) <= 1e-8 * max(ratios)


def test_implicit_nonlinear(hk, nonlinear):
    fam = replace(implicit_nonlinear_family(), F0=nonlinear)
    for eps in (1e-3, 1e-2, 1e-1):
        rep = implicit_solve(fam, eps, family=hk)
        assert rep.solved and rep.check("implicit_bound").passed
        assert rep.extra["equation_residual"] <= 1e-9


def test_implicit_epsilon_too_large(hk):
    fam = implicit_linear_family()
    rep = implicit_solve(fam, 10.0, family=hk)
    assert rep.status is Status.EPSILON_TOO_LARGE
    assert rep.extra["limit"] < 10.0


# -- radius sweep -------------------------------------------------------------------

def test_amplitude_sweep(linear, hk):
    d = trig_element(N, sin={1: 1.0}) * (1 / hk.norm(trig_element(N, sin={1: 1.0}), 0))
    opts = SolveOptions()
    cd, _ = admissible_amplitude(linear, hk, opts, "descent", d, 2.0, steps=8)
    cn, _ = admissible_amplitude(linear, hk, opts, "newton", d, 2.0, steps=8)
    assert cd >= cn - 2.0 / 2 ** 8
    assert admissible_amplitude(linear, hk, opts, "descent", d, 0.0) == (0.0, [])
    with pytest.raises(ValueError):
        admissible_amplitude(linear, hk, opts, "bisection", d, 1.0)
