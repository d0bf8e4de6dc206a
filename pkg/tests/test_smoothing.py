import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tameinv.graded_space import GradedElement, NormFamily, trig_element
from tameinv.problems import random_element
from tameinv.smoothing import (SmoothingFamily, default_probes, dyadic_schedule, is_full_band,
                               smooth, standard_sequence, verify_smoothing_axioms)

N = 128


def test_smooth_examples():
    s3 = trig_element(N, sin={3: 1.0})
    assert np.allclose(smooth(s3, 5).samples, s3.samples, atol=1e-15)
    assert np.max(np.abs(smooth(s3, 2).samples)) < 1e-15
    two = trig_element(N, sin={1: 1.0, 8: 1.0})
    assert np.allclose(smooth(two, 4).samples, np.sin(2 * np.pi * np.arange(N) / N), atol=1e-15)


def test_full_band_is_identity():
    x = random_element(np.random.default_rng(0), N, max_mode=N // 2 - 1)
    assert is_full_band(x, N // 2)
    assert smooth(x, N // 2) is x
    assert smooth(x, 10 * N) is x


def test_cutoff_must_be_positive():
    with pytest.raises(ValueError):
        smooth(GradedElement.zeros(), 0)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 70))
def test_idempotent_exactly(seed, n):
    x = random_element(np.random.default_rng(seed), N, max_mode=N // 2 - 1)
    once = smooth(x, n)
    assert smooth(once, n) == once


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 64), st.integers(0, 12))
def test_projection_contracts_sobolev(seed, n, k):
    hk = NormFamily("SobolevHk", 12)
    x = random_element(np.random.default_rng(seed), N, max_mode=40, decay=1.0)
    assert hk.norm(smooth(x, n), k) <= hk.norm(x, k) * (1 + 1e-12) + 1e-12


def test_family_validation():
    assert np.max(np.abs(SmoothingFamily()(trig_element(N, sin={9: 1.0}), 4).samples)) < 1e-15
    with pytest.raises(ValueError):
        SmoothingFamily(c1_est=0.0)
    with pytest.raises(ValueError):
        SmoothingFamily(kind="Mollifier")


def test_projection_constant_is_one(hk):
    rep = verify_smoothing_axioms(hk, [trig_element(N, sin={1: 1.0})], range(0, 6), [0],
                                  [1, 2, 4])
    assert rep.c1_est == pytest.approx(1.0, abs=1e-12)


def test_remainder_ratio_single_mode(hk):
    # ||sin 8w||_0 = sqrt(pi), ||sin 8w||_1 = sqrt(65 pi): ratio 4 / sqrt(65)
    rep = verify_smoothing_axioms(hk, [trig_element(N, sin={8: 1.0})], [0], [1], [4])
    assert rep.c2_est == pytest.approx(4 / math.sqrt(65), rel=1e-12)


def test_sobolev_axioms_pass(hk):
    rep = verify_smoothing_axioms(hk, default_probes(N), range(0, 7), [1, 2], [4, 8, 16, 32])
    assert rep.passed and rep.axiom1_full_band and rep.axiom1_monotone
    assert max(rep.c2_by_n.values()) <= 2 * min(rep.c2_by_n.values())


def test_sup_axioms_reported_with_note(ck):
    rep = verify_smoothing_axioms(ck, default_probes(N), range(0, 4), [1], [4, 8, 16])
    assert rep.notes and rep.axiom1_full_band


def test_zero_probe_skipped(hk, caplog):
    rep = verify_smoothing_axioms(hk, [GradedElement.zeros(), trig_element(N, sin={2: 1.0})],
                                  [0], [0], [4])
    assert rep.skipped == 1
    with pytest.raises(ValueError):
        verify_smoothing_axioms(hk, [GradedElement.zeros()], [0], [0], [4])


def test_ranges_checked(hk):
    with pytest.raises(ValueError):
        verify_smoothing_axioms(hk, default_probes(N, 4), [12], [1], [4])


def test_axiom_csv(tmp_path, hk):
    rep = verify_smoothing_axioms(hk, default_probes(N, 4), [0], [1], [2])
    path = rep.write_csv(tmp_path / "ax.csv")
    assert path.read_text().splitlines()[0] == "axiom,k,d,n,ratio"


def test_dyadic_schedule():
    assert dyadic_schedule(128) == [1, 2, 4, 8, 16, 32, 64]


def test_standard_sequence_examples(hk):
    s = standard_sequence(trig_element(N, sin={1: 1.0}), hk)
    assert s.c3_est == pytest.approx(1.0, abs=1e-12)
    v = trig_element(N, sin={1: 0.5, 8: 0.1})
    seq = standard_sequence(v, hk)
    assert seq.c3_est <= 1 + 1e-12
    assert hk.norm(seq.elements[seq.schedule.index(4)] - trig_element(N, sin={1: 0.5}), 0) < 1e-14
    ck = NormFamily("SupCk", 12)
    assert standard_sequence(v, ck).controls[0].feasible
    assert all(c.feasible for c in standard_sequence(trig_element(N, sin={1: 0.3, 5: 0.2}),
                                                     ck).controls)
    with pytest.raises(ValueError):
        standard_sequence(GradedElement.zeros(), hk)
