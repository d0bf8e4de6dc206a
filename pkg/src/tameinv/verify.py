"""Numerical checks of the solver, norm and weight bounds at desk scale.

Every check returns :class:`~tameinv.records.CheckResult` values and records
failures instead of raising, so suites can report pass rates.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graded_space import GradedElement, NormFamily, derivative_stack
from .problems import (TameProblem, check_generalization, random_direction, random_element,
                       right_inverse_residuals)
from .records import CheckResult, jsonable, write_csv
from .smoothing import default_probes, verify_smoothing_axioms
from .solver import SolveOptions, choose_R_prime, continuation_solve, solve
from .weights import build_weights, check_radius_condition, check_summability, ekeland_ratio

log = logging.getLogger(__name__)

SUITE_CSV_HEADER = ("check", "seed", "observed", "bound", "margin", "passed")
SUITES = ("subdifferential", "directional", "right_inverse", "surjection", "lipschitz",
          "smoothing", "weights", "gateaux")
IDENTITY_TOL = 1e-10
SUP_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SubdifferentialElement:
    """A unit dual element attaining ``<y*, v> = ||v||_k``.

    ``kind == "density"``: ``y*(z) = sum_{p<=k} int g^(p) . z^(p)`` with
    ``g = density``.  ``kind == "point"``: ``y*(z) = direction . z^(order)(t_index)``.
    """

    kind: str
    k: int
    density: GradedElement | None = None
    order: int = 0
    index: int = 0
    direction: np.ndarray | None = None

    def pair(self, z: GradedElement) -> float:
        if self.kind == "density":
            ds = derivative_stack(self.density, self.k)
            zs = derivative_stack(z, self.k)
            return float(2.0 * np.pi / z.n_grid * np.sum(ds * zs))
        zs = derivative_stack(z, self.order)[self.order]
        return float(np.dot(self.direction, zs[:, self.index]))

    def dual_norm(self, family: NormFamily) -> float:
        """Exact dual norm: ``||g||_k`` (Riesz) or ``|direction|`` (point evaluation)."""
        if self.kind == "density":
            return family.norm(self.density, self.k)
        return float(np.linalg.norm(self.direction))


def subdifferential_element(v: GradedElement, k: int, family: NormFamily) -> SubdifferentialElement:
    """Deterministic element of the subdifferential of ``||.||_k`` at ``v``.

    Sup flavor ties (within a relative ``1e-12``) go to the lowest derivative
    order, then the lowest grid index.
    """
    if v.is_zero():
        raise ValueError("the subdifferential characterization needs v != 0")
    nv = family.norm(v, k)
    if family.hilbert:
        return SubdifferentialElement("density", k, density=v / nv)
    stack = derivative_stack(v, k)
    mag = np.sqrt(np.sum(stack ** 2, axis=1))
    hits = np.argwhere(mag >= nv * (1.0 - SUP_TIE_RTOL))
    order, index = (int(a) for a in min(map(tuple, hits)))
    vec = stack[order, :, index]
    return SubdifferentialElement("point", k, order=order, index=index,
                                  direction=vec / np.linalg.norm(vec))


def check_subdifferential(v: GradedElement, k: int, family: NormFamily, seed=None) -> list[CheckResult]:
    e = subdifferential_element(v, k, family)
    nv = family.norm(v, k)
    dn = abs(e.dual_norm(family) - 1.0)
    pe = abs(e.pair(v) - nv) / max(nv, 1.0)
    return [CheckResult.upper("subdifferential_dual_norm", dn, IDENTITY_TOL, k=k, seed=seed),
            CheckResult.upper("subdifferential_pairing", pe, IDENTITY_TOL, k=k, seed=seed)]


def _observed_order(hs: Sequence[float], errs: Sequence[float]) -> float:
    orders = []
    for (h1, e1), (h2, e2) in zip(zip(hs, errs), zip(hs[1:], errs[1:])):
        orders.append(math.log(e1 / e2) / math.log(h1 / h2))
    return min(orders) if orders else math.inf


def check_directional_derivative(p: TameProblem, x: GradedElement, xi: GradedElement, k: int,
                                 family: NormFamily,
                                 h_list: Sequence[float] = (1e-2, 1e-3, 1e-4)) -> CheckResult:
    """One-sided difference of ``t -> ||F(x + t xi)||_k`` against ``<y*, DF(x) xi>``.

    Errors are relative to ``max(|prediction|, ||DF(x) xi||_k)``.  Passes when
    the error at the smallest ``h`` is at most ``5 h`` and the observed order
    between consecutive ``h`` is at least 0.9 (errors at roundoff level count
    as exact).
    """
    hs = sorted((float(h) for h in h_list), reverse=True)
    if not hs or hs[-1] <= 0:
        raise ValueError("h_list must hold positive steps")
    Fx = p.F(x)
    if Fx.is_zero():
        raise ValueError("F(x) = 0: the norm is not differentiable there")
    base = family.norm(Fx, k)
    if xi.is_zero():
        return CheckResult("directional_derivative", True, 0.0, 5 * hs[-1], 5 * hs[-1],
                           {"k": k, "prediction": 0.0, "errors": [0.0] * len(hs)})
    dfx = p.DF(x, xi)
    pred = subdifferential_element(Fx, k, family).pair(dfx)
    scale = max(abs(pred), family.norm(dfx, k)) or 1.0
    errs = [abs((family.norm(p.F(x + h * xi), k) - base) / h - pred) / scale for h in hs]
    exact = all(e <= IDENTITY_TOL for e in errs)
    order = math.inf if exact else _observed_order(hs, [max(e, 1e-300) for e in errs])
    bound = 5.0 * hs[-1]
    ok = exact or (errs[-1] <= bound and order >= 0.9)
    return CheckResult("directional_derivative", bool(ok), errs[-1], bound, bound - errs[-1],
                       {"k": k, "prediction": pred, "errors": errs, "order": order, "h": hs})


def descent_direction_slope(p: TameProblem, x: GradedElement, y: GradedElement, k: int,
                            family: NormFamily) -> tuple[float, float]:
    """``(<y*, DF(x) u>, -||F(x) - y||_k)`` for ``u = -L(x)(F(x) - y)``."""
    r = p.F(x) - y
    u = -p.L(x, r)
    e = subdifferential_element(r, k, family)
    return e.pair(p.DF(x, u)), -family.norm(r, k)


def directional_cases(p: TameProblem, family: NormFamily, count: int = 20, seed: int = 0,
                      n_grid: int = 128) -> list[tuple[GradedElement, GradedElement, int]]:
    """Seeded ``(x, xi, k)`` with ``F(x) != 0`` and ``||DF(x) xi||_k = ||F(x)||_k``."""
    rng = np.random.default_rng(seed)
    kmax = family.k_max - p.d1
    out = []
    while len(out) < count:
        x = random_direction(rng, n_grid)
        radius = p.R if math.isfinite(p.R) else 1.0
        x = x * (rng.uniform(0.0, 0.5) * radius / family.norm(x, p.k0))
        xi = random_direction(rng, n_grid)
        k = int(rng.integers(0, kmax + 1))
        Fx = p.F(x)
        if Fx.is_zero():
            continue
        xi = xi * (family.norm(Fx, k) / family.norm(p.DF(x, xi), k))
        # keep the perturbed points inside the ball
        while family.norm(x + 1e-2 * xi, p.k0) >= p.R:
            xi = 0.5 * xi
        out.append((x, xi, k))
    return out


def random_target(rng: np.random.Generator, p: TameProblem, family: NormFamily, n_grid: int,
                  radius_fraction: float) -> GradedElement:
    """Band-limited ``y`` with ``||y||_{k0+d2}`` uniform in ``(0, frac R / m'_{k0})``."""
    anchor = p.k0 + p.d2
    z = random_element(rng, n_grid, max_mode=n_grid // 4, decay=2.0)
    target = rng.uniform(0.0, radius_fraction) * p.R / p.m_prime_at(p.k0)
    return z * (target / family.norm(z, anchor))


def _surjection_sample(p, family, opts, mu, y, seed) -> CheckResult:
    anchor = p.k0 + p.d2
    yn = family.norm(y, anchor)
    rep = solve(p, y, opts, family)
    xn = family.norm(rep.final_x, p.k0)
    ratio = xn / yn if yn > 0 else 0.0
    ctx = {"seed": seed, "status": rep.status.value, "y_norm": yn, "ratio": ratio,
           "m_prime_estimate": p.m_prime_at(p.k0),
           "estimation_margin": p.m_prime_at(p.k0) - ratio}
    if not rep.solved:
        return CheckResult("surjection", False, xn, mu * yn, mu * yn - xn, ctx)
    return CheckResult.upper("surjection", xn, mu * yn, 1e-10, **ctx)


def check_local_surjection(p: TameProblem, family: NormFamily, mu: float, samples: int = 50,
                           seed: int = 0, radius_fraction: float = 0.9, n_grid: int = 128,
                           opts: SolveOptions | None = None, workers: int = 1) -> list[CheckResult]:
    """Solve for seeded targets in the admissible ball; one result per sample.

    ``context["estimation_margin"]`` is ``m'_{k0} - ||x||_{k0}/||y||_{k0+d2}``;
    a failing sample with negative margin is one where the estimated constant
    undershoots the observed solution ratio.
    """
    if not mu > p.m_prime_at(p.k0):
        raise ValueError("mu must exceed m'_{k0}")
    opts = opts or SolveOptions(mu=mu)
    if opts.mu != mu:
        opts = SolveOptions(**{**opts.__dict__, "mu": mu})
    rng = np.random.default_rng(seed)
    ys = [random_target(rng, p, family, n_grid, radius_fraction) for _ in range(samples)]
    seeds = [f"{seed}:{i}" for i in range(samples)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda a: _surjection_sample(p, family, opts, mu, *a), zip(ys, seeds)))


def check_lipschitz_inverse(p: TameProblem, family: NormFamily, y0: GradedElement,
                            y1: GradedElement, mu: float,
                            opts: SolveOptions | None = None) -> CheckResult:
    """Witness for ``inf ||x0 - x1||_{k0} <= mu ||y0 - y1||_{k0+d2}`` via continuation."""
    anchor = p.k0 + p.d2
    dy = family.norm(y0 - y1, anchor)
    opts = opts or SolveOptions(mu=mu)
    if opts.mu != mu:
        opts = SolveOptions(**{**opts.__dict__, "mu": mu})
    first = solve(p, y0, opts, family)
    if not first.solved:
        return CheckResult("lipschitz", False, math.nan, mu * dy, math.nan,
                           {"stage": "initial", "status": first.status.value})
    try:
        rep = continuation_solve(p, y0, y1, first.final_x, opts, family)
    except ValueError as exc:
        return CheckResult("lipschitz", False, math.nan, mu * dy, math.nan,
                           {"stage": "continuation", "error": str(exc)})
    if not rep.solved:
        return CheckResult("lipschitz", False, math.nan, mu * dy, math.nan,
                           {"stage": "continuation", "status": rep.status.value,
                            "message": rep.message})
    dx = family.norm(first.final_x - rep.final_x, p.k0)
    return CheckResult.upper("lipschitz", dx, mu * dy, 1e-10, y_distance=dy,
                             ratio=dx / dy if dy > 0 else 0.0, segments=rep.extra.get("segments"))


def check_weight_certificate(p: TameProblem, family: NormFamily, y: GradedElement,
                             opts: SolveOptions | None = None, seed=None) -> list[CheckResult]:
    opts = opts or SolveOptions()
    mu = opts.resolve_mu(p)
    R_prime = choose_R_prime(p, y, family, mu, opts.R_prime_factor)
    w = build_weights(y, p, family, R_prime)
    out = []
    for n in (1, 2, 3):
        s = check_summability(w, p, n)
        out.append(CheckResult(f"weights_summable[n={n}]", s.finite, float(s.partial_sums[-1]),
                               math.inf, math.inf, {"seed": seed}))
    rc = check_radius_condition(w, y, family)
    out.append(CheckResult("weights_radius", rc.passed, rc.lhs, rc.rhs, rc.margin, {"seed": seed}))
    A = ekeland_ratio(w, w.beta @ family.profile(y)[: w.beta.size], R_prime)
    out.append(CheckResult("weights_ekeland_ratio", bool(A < 1.0), A, 1.0, 1.0 - A, {"seed": seed}))
    return out


@dataclass
class SuiteResult:
    results: list[CheckResult]
    seed: int

    def by_check(self) -> dict[str, list[CheckResult]]:
        out: dict[str, list[CheckResult]] = {}
        for r in self.results:
            out.setdefault(r.name.split("[")[0], []).append(r)
        return out

    def pass_rates(self) -> dict[str, float]:
        return {k: sum(r.passed for r in v) / len(v) for k, v in sorted(self.by_check().items())}

    def passed(self, min_pass_rate: dict[str, float] | None = None) -> bool:
        req = min_pass_rate or {}
        return all(rate >= req.get(name, 1.0) for name, rate in self.pass_rates().items())

    def rows(self) -> list[tuple]:
        return [(r.name, r.context.get("seed", self.seed), r.observed, r.bound, r.margin, r.passed)
                for r in self.results]

    def summary(self, min_pass_rate: dict[str, float] | None = None) -> dict:
        groups = self.by_check()
        return {
            "seed": self.seed,
            "passed": self.passed(min_pass_rate),
            "checks": {k: {"count": len(v), "passed": sum(r.passed for r in v),
                           "pass_rate": sum(r.passed for r in v) / len(v)}
                       for k, v in sorted(groups.items())},
            "min_pass_rate": dict(sorted((min_pass_rate or {}).items())),
        }

    def write(self, out_dir: str | Path, min_pass_rate: dict[str, float] | None = None) -> None:
        out = Path(out_dir)
        write_csv(out / "verify.csv", SUITE_CSV_HEADER, self.rows())
        (out / "verify_summary.json").write_text(
            json.dumps(jsonable(self.summary(min_pass_rate)), indent=2, sort_keys=True) + "\n")


def run_suite(p: TameProblem, family: NormFamily, suites: Iterable[str], seed: int = 0,
              samples: int = 20, mu: float | None = None, n_grid: int = 128,
              opts: SolveOptions | None = None, workers: int = 1) -> SuiteResult:
    """Run the selected checks with one seed; results are ordered by suite then sample."""
    suites = list(suites)
    bad = [s for s in suites if s not in SUITES]
    if bad:
        raise ValueError(f"unknown suites {bad}; choose from {SUITES}")
    opts = opts or SolveOptions()
    mu = mu if mu is not None else opts.resolve_mu(p)
    opts = SolveOptions(**{**opts.__dict__, "mu": mu})
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    for name in suites:
        if name == "subdifferential":
            for i in range(samples):
                v = random_direction(rng, n_grid)
                k = int(rng.integers(0, family.k_max + 1))
                results += check_subdifferential(v, k, family, seed=f"{seed}:{i}")
        elif name == "directional":
            hil = NormFamily("SobolevHk", family.k_max)
            for i, (x, xi, k) in enumerate(directional_cases(p, hil, samples, seed, n_grid)):
                r = check_directional_derivative(p, x, xi, k, hil)
                results.append(CheckResult(r.name, r.passed, r.observed, r.bound, r.margin,
                                           {**r.context, "seed": f"{seed}:{i}"}))
        elif name == "right_inverse":
            res = right_inverse_residuals(p, family, count=samples, seed=seed, n_grid=n_grid)
            for i, r in enumerate(res):
                results.append(CheckResult.upper("right_inverse", r["relative_residual"], 1e-8,
                                                 seed=f"{seed}:{i}", k=r["k"]))
        elif name == "surjection":
            results += check_local_surjection(p, family, mu, samples, seed, n_grid=n_grid,
                                              opts=opts, workers=workers)
        elif name == "lipschitz":
            for i in range(max(1, samples // 5)):
                y0 = random_target(rng, p, family, n_grid, 0.4)
                y1 = random_target(rng, p, family, n_grid, 0.4)
                r = check_lipschitz_inverse(p, family, y0, y1, mu, opts)
                results.append(CheckResult(r.name, r.passed, r.observed, r.bound, r.margin,
                                           {**r.context, "seed": f"{seed}:{i}"}))
        elif name == "smoothing":
            hi = min(family.k_max - 1, 6)
            probes = default_probes(n_grid)
            proj = verify_smoothing_axioms(family, probes, range(0, hi + 1), [0], [4, 8, 16, 32])
            gain = verify_smoothing_axioms(family, probes, range(0, hi + 1), [1], [4, 8, 16, 32])
            dev = abs(proj.c1_est - 1.0)
            ok = proj.passed and gain.passed and (dev <= IDENTITY_TOL or not family.hilbert)
            results.append(CheckResult("smoothing_axioms", bool(ok), dev, IDENTITY_TOL,
                                       IDENTITY_TOL - dev,
                                       {"seed": seed, "c1_est": gain.c1_est, "c2_est": gain.c2_est}))
        elif name == "weights":
            for i in range(max(1, samples // 5)):
                y = random_target(rng, p, family, n_grid, 0.9)
                results += check_weight_certificate(p, family, y, opts, seed=f"{seed}:{i}")
        elif name == "gateaux":
            g = check_generalization(p, family, probe_count=max(2, samples // 5), seed=seed)
            results.append(CheckResult.upper("gateaux_generalization", g["worst_ratio"],
                                             g["factor"], seed=seed))
    return SuiteResult(results, seed)
