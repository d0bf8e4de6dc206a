"""Weight sequences for the multi-norm merit function.

Given a target ``y`` and the tame constants of a problem, the weights are

    beta_k = 0                                         k <  k0 + d2
    beta_k = 1                                         k == k0 + d2
    beta_k = h k^{-k} / max(||y||_k, m_k m'_{k+d1})    k >  k0 + d2

with ``h`` the largest dyadic number such that
``||y||_{k0+d2} + h * sum_{k>=0} k^{-k} < R' / m'_{k0}``.  Then
``alpha_k = beta_{k+d2} / m'_k`` weights the metric on the domain and the
merit function is ``f(x) = sum_k beta_k ||F(x) - y||_k``.

Sums are truncated at ``k_max``; every certificate carries the analytic bound
``h * sum_{k > k_max} (n/k)^k`` of the discarded terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import RadiusExceeded
from .graded_space import FrechetMetric, GradedElement, NormFamily
from .problems import TameProblem
from .records import write_csv

WEIGHTS_CSV_HEADER = ("k", "beta_k", "alpha_k")


def _pow_neg(k: int) -> float:
    return 1.0 if k == 0 else float(k) ** -k


# sum_{k>=0} k^{-k} with 0^0 = 1 (= 1 + 1.29128599706266...)
SUM_K_POW_NEG_K = math.fsum(_pow_neg(k) for k in range(60))


def tail_sum(k_max: int, n: float = 1.0) -> float:
    """``sum_{k > k_max} (n/k)^k``; finite for every n, summed to double precision."""
    terms = []
    k = k_max + 1
    while True:
        t = (n / k) ** k
        terms.append(t)
        if k > 2 * n and t < 1e-30 * max(terms):
            break
        k += 1
    return math.fsum(terms)


@dataclass(frozen=True)
class WeightSequence:
    beta: np.ndarray
    alpha: np.ndarray
    h: float
    k0: int
    d1: int
    d2: int
    R_prime: float
    m_prime_k0: float
    tail_bound: float

    @property
    def k_max(self) -> int:
        return self.beta.size - 1

    @property
    def anchor(self) -> int:
        """Index ``k0 + d2`` carrying the unit weight."""
        return self.k0 + self.d2

    def tail_bound_for(self, n: float) -> float:
        """Bound on ``sum_{k > k_max} beta_k m_k m'_{k+d1} n^k`` (and on the radius sum for n=1)."""
        return self.h * tail_sum(self.k_max, n)

    def metric(self, R: float) -> FrechetMetric:
        """Domain metric ``sum_k alpha_k min{R, ||.||_k}``."""
        r = R if math.isfinite(R) else 1.0
        return FrechetMetric(tuple(self.alpha), r, r * self.tail_bound / max(self.m_prime_k0, 1e-300))

    def rows(self) -> list[tuple]:
        out = []
        for k in range(self.beta.size):
            a = float(self.alpha[k]) if k < self.alpha.size else None
            out.append((k, float(self.beta[k]), a))
        return out

    def write_csv(self, path: str | Path) -> Path:
        return write_csv(path, WEIGHTS_CSV_HEADER, self.rows())

    def certificate(self, y: GradedElement, family: NormFamily) -> str:
        rc = check_radius_condition(self, y, family)
        return "\n".join([
            f"h = {self.h!r}",
            f"R_prime = {self.R_prime!r}",
            f"anchor index k0+d2 = {self.anchor}",
            f"truncated at k_max = {self.k_max}",
            f"tail bound (n=1) = {self.tail_bound!r}",
            f"radius sum = {rc.lhs!r}",
            f"radius bound = {rc.rhs!r}",
            f"radius margin = {rc.margin!r}",
            f"radius check passed = {rc.passed}",
            "",
        ])


def build_weights(y: GradedElement, p: TameProblem, family: NormFamily,
                  R_prime: float) -> WeightSequence:
    """Weights for target ``y`` with the largest admissible dyadic ``h``.

    Raises
    ------
    RadiusExceeded
        If ``||y||_{k0+d2} >= R' / m'_{k0}``.
    """
    if not R_prime > 0:
        raise ValueError("R_prime must be positive")
    if not R_prime < p.R:
        raise ValueError("R_prime must be smaller than the ball radius R")
    k0, d1, d2 = p.k0, p.d1, p.d2
    K = family.k_max
    anchor = k0 + d2
    if anchor > K:
        raise ValueError("k_max is below k0 + d2")
    yn = family.profile(y)
    mp0 = p.m_prime_at(k0)
    room = R_prime / mp0 - yn[anchor]
    if not room > 0:
        raise RadiusExceeded(
            f"||y||_{anchor} = {yn[anchor]:.6g} is not below R'/m'_{k0} = {R_prime / mp0:.6g}")
    h = 1.0
    while not h * SUM_K_POW_NEG_K < room:
        h *= 0.5
        if h == 0.0:
            raise RadiusExceeded("no positive h satisfies the radius condition")

    beta = np.zeros(K + 1)
    beta[anchor] = 1.0
    for k in range(anchor + 1, K + 1):
        mm = p.m_at(k) * p.m_prime_at(k + d1)
        denom = max(float(yn[k]), mm)
        beta[k] = h * _pow_neg(k) / denom
    alpha = np.array([beta[k + d2] / p.m_prime_at(k) for k in range(K + 1 - d2)])
    beta.setflags(write=False)
    alpha.setflags(write=False)
    return WeightSequence(beta, alpha, h, k0, d1, d2, float(R_prime), mp0,
                          h * tail_sum(K, 1.0))


@dataclass(frozen=True)
class RadiusCheck:
    lhs: float
    rhs: float
    margin: float
    passed: bool


def check_radius_condition(w: WeightSequence, y: GradedElement, family: NormFamily) -> RadiusCheck:
    """Truncated radius condition, tail included:
    ``sum_{k<=k_max} beta_k ||y||_k + tail < beta_{k0+d2} R' / m'_{k0}``."""
    yn = family.profile(y)[: w.beta.size]
    lhs = math.fsum(w.beta * yn) + w.tail_bound
    rhs = w.beta[w.anchor] * w.R_prime / w.m_prime_k0
    rhs = float(rhs)
    return RadiusCheck(lhs, rhs, rhs - lhs, bool(lhs < rhs))


@dataclass(frozen=True)
class Summability:
    finite: bool
    partial_sums: np.ndarray
    terms: np.ndarray


def check_summability(w: WeightSequence, p: TameProblem, n: int) -> Summability:
    """Partial sums of ``sum_k beta_k m_k m'_{k+d1} n^k``.

    ``finite`` means the last four ratios of consecutive terms are all at most
    one half (terms that are already zero count as decayed).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    K = w.k_max
    terms = np.array([w.beta[k] * p.m_at(k) * p.m_prime_at(k + w.d1) * float(n) ** k
                      for k in range(K + 1)])
    partial = np.cumsum(terms)
    finite = True
    for k in range(max(1, K - 3), K + 1):
        prev, cur = terms[k - 1], terms[k]
        if cur == 0.0:
            continue
        if prev == 0.0 or cur > 0.5 * prev:
            finite = False
    if not np.all(np.isfinite(partial)):
        finite = False
    return Summability(finite, partial, terms)


def merit_of_residual(w: WeightSequence, r: GradedElement, family: NormFamily) -> float:
    """``sum_k beta_k ||r||_k`` over the computed indices."""
    prof = family.profile(r)[: w.beta.size]
    return math.fsum(w.beta * prof)


def merit(p: TameProblem, w: WeightSequence, family: NormFamily, x: GradedElement,
          y: GradedElement) -> float:
    return merit_of_residual(w, p.F(x) - y, family)


def ekeland_ratio(w: WeightSequence, f0: float, R_prime: float) -> float:
    """``A = f(0) / (R' alpha_{k0})``; built weights give ``A < 1``."""
    if not R_prime > 0:
        raise ValueError("R_prime must be positive")
    a0 = float(w.alpha[w.k0])
    if a0 == 0.0:
        raise ValueError("alpha_{k0} is zero")
    return f0 / (R_prime * a0)
