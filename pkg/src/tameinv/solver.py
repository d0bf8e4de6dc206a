"""Solvers for ``F(x) = y`` built on the right inverse ``L(x)``.

:func:`descent_solve` moves along ``u = -L(x)(F(x) - y)``, the direction for
which the one-sided derivative of the merit ``f = sum beta_k ||F - y||_k`` is
at most ``-f``, and accepts the first step ``t`` of the backtracking sequence
that yields an Armijo decrease while staying in the ball.  The other solvers
reuse it: continuation recenters the problem along a chain of right-hand
sides, the finite-regularity solver chains dyadic smoothings of a rough
target, and the implicit solver treats ``F0 + eps F1`` as a shifted inverse
problem.  :func:`newton_solve` is the uncontrolled full-step baseline.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import OutsideBall, RadiusExceeded, SingularInverse
from .graded_space import GradedElement, NormFamily
from .problems import ImplicitFamily, TameProblem
from .records import CheckResult, jsonable, write_csv
from .smoothing import dyadic_schedule, smooth
from .weights import (WeightSequence, build_weights, check_radius_condition, ekeland_ratio,
                      merit_of_residual)

log = logging.getLogger(__name__)

ITERATE_CSV_HEADER = ("iter", "merit", "residual_k0d2", "step", "x_norm_k0")
BOUND_TOL = 1e-10


class Status(str, enum.Enum):
    SOLVED = "Solved"
    OUTSIDE_BALL = "OutsideBall"
    MAX_ITERS = "MaxIters"
    SINGULAR_INVERSE = "SingularInverse"
    LINE_SEARCH_FAILED = "LineSearchFailed"
    DIVERGED = "Diverged"
    RADIUS_EXCEEDED = "RadiusExceeded"
    RATE_VIOLATION = "RateViolation"
    EPSILON_TOO_LARGE = "EpsilonTooLarge"


@dataclass(frozen=True)
class SolveOptions:
    """Solver knobs.

    ``mu`` is the constant of the solution bound ``||x||_{k0} <= mu ||y||_{k0+d2}``
    and must exceed ``m'_{k0}``; ``None`` means ``mu_factor * m'_{k0}``.
    """

    mu: float | None = None
    mu_factor: float = 1.05
    R_prime_factor: float = 0.95
    tol: float = 1e-10
    max_iters: int = 50
    step_shrink: float = 0.5
    armijo_c: float = 1e-4
    min_step: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if not 0 < self.R_prime_factor < 1:
            raise ValueError("R_prime_factor must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.mu is None and not self.mu_factor > 1:
            raise ValueError("mu_factor must exceed 1")

    def resolve_mu(self, p: TameProblem) -> float:
        mp = p.m_prime_at(p.k0)
        mu = self.mu if self.mu is not None else self.mu_factor * mp
        if not mu > mp:
            raise ValueError(f"mu = {mu} must exceed m'_{p.k0} = {mp}")
        return float(mu)


@dataclass(frozen=True)
class IterateRecord:
    iteration: int
    merit: float | None
    residual_norms: tuple
    step: float
    x_norm_k0: float
    segment: int = 0


@dataclass
class SolveReport:
    status: Status
    final_x: GradedElement
    iterates: list[IterateRecord] = field(default_factory=list)
    bound_checks: list[CheckResult] = field(default_factory=list)
    method: str = "descent"
    message: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.status is Status.SOLVED

    @property
    def iterations(self) -> int:
        return sum(1 for r in self.iterates if r.iteration > 0)

    @property
    def merits(self) -> list[float]:
        return [r.merit for r in self.iterates if r.merit is not None]

    def check(self, name: str) -> CheckResult | None:
        for c in self.bound_checks:
            if c.name == name:
                return c
        return None

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "method": self.method,
            "message": self.message,
            "iterations": self.iterations,
            "iterates": [
                {"iter": r.iteration, "segment": r.segment, "merit": r.merit,
                 "residual_norms": list(r.residual_norms), "step": r.step,
                 "x_norm_k0": r.x_norm_k0}
                for r in self.iterates
            ],
            "bound_checks": [c.to_dict() for c in self.bound_checks],
            "extra": jsonable(self.extra),
            "final_x": self.final_x.to_record(),
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def iterate_rows(self, anchor: int) -> list[tuple]:
        return [(r.iteration, r.merit, r.residual_norms[anchor], r.step, r.x_norm_k0)
                for r in self.iterates]

    def write(self, out_dir: str | Path, anchor: int, stem: str = "solve") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}_report.json").write_text(self.to_json())
        write_csv(out / f"{stem}_iterates.csv", ITERATE_CSV_HEADER, self.iterate_rows(anchor))


def _record(it, merit, res_prof, step, x, p, family, segment=0) -> IterateRecord:
    return IterateRecord(it, merit, tuple(float(v) for v in res_prof), float(step),
                         family.norm(x, p.k0), segment)


def _solution_checks(p: TameProblem, family: NormFamily, x: GradedElement, y: GradedElement,
                     mu: float) -> list[CheckResult]:
    anchor = p.k0 + p.d2
    xn = family.norm(x, p.k0)
    yn = family.norm(y, anchor)
    return [
        CheckResult.upper("solution_bound", xn, mu * yn, BOUND_TOL, mu=mu,
                          y_norm=yn, m_prime_k0=p.m_prime_at(p.k0)),
        CheckResult(name="in_ball", passed=bool(xn < p.R), observed=xn, bound=p.R,
                    margin=p.R - xn, context={}),
    ]


def descent_solve(p: TameProblem, y: GradedElement, w: WeightSequence,
                  opts: SolveOptions | None = None,
                  family: NormFamily | None = None) -> SolveReport:
    """Armijo-backtracked descent along ``-L(x)(F(x) - y)`` from ``x = 0``.

    Steps leaving ``||x||_{k0} < R`` are rejected and the step shrunk.  The
    report's merit sequence is strictly decreasing by construction.
    """
    opts = opts or SolveOptions()
    family = family or NormFamily()
    mu = opts.resolve_mu(p)
    anchor = p.k0 + p.d2
    x = GradedElement.zeros(y.n_grid, y.dim)
    rc = check_radius_condition(w, y, family)
    if not rc.passed:
        return SolveReport(Status.RADIUS_EXCEEDED, x, message="radius condition fails for weights")
    r = p.F(x) - y
    f = merit_of_residual(w, r, family)
    res = family.profile(r)
    iterates = [_record(0, f, res, 0.0, x, p, family)]
    A = ekeland_ratio(w, f, w.R_prime)
    checks = [CheckResult("ekeland_ratio", bool(A < 1.0), A, 1.0, 1.0 - A,
                          {"R_prime": w.R_prime})]
    checks.append(CheckResult("radius_condition", rc.passed, rc.lhs, rc.rhs, rc.margin, {}))

    status, message = Status.MAX_ITERS, ""
    if res[anchor] <= opts.tol:
        status = Status.SOLVED
    else:
        for it in range(1, opts.max_iters + 1):
            try:
                u = -p.L(x, r)
            except SingularInverse as exc:
                status, message = Status.SINGULAR_INVERSE, str(exc)
                break
            except OutsideBall as exc:
                status, message = Status.OUTSIDE_BALL, str(exc)
                break
            t, accepted, left_ball = 1.0, False, False
            while t >= opts.min_step:
                xt = x + t * u
                if family.norm(xt, p.k0) >= p.R:
                    left_ball = True
                    t *= opts.step_shrink
                    continue
                rt = p.F(xt) - y
                ft = merit_of_residual(w, rt, family)
                if ft < f and ft <= (1.0 - opts.armijo_c * t) * f:
                    accepted = True
                    break
                t *= opts.step_shrink
            if not accepted:
                status = Status.OUTSIDE_BALL if left_ball else Status.LINE_SEARCH_FAILED
                message = f"no acceptable step down to t = {opts.min_step:g}"
                break
            x, r, f = xt, rt, ft
            res = family.profile(r)
            iterates.append(_record(it, f, res, t, x, p, family))
            if res[anchor] <= opts.tol:
                status = Status.SOLVED
                break

    if status is Status.SOLVED:
        checks += _solution_checks(p, family, x, y, mu)
    return SolveReport(status, x, iterates, checks, "descent", message,
                       {"mu": mu, "R_prime": w.R_prime, "h": w.h})


def choose_R_prime(p: TameProblem, y: GradedElement, family: NormFamily, mu: float,
                   factor: float) -> float:
    """``R'`` with ``m'_{k0} ||y|| < R' < mu ||y||`` and ``R' <= factor R``."""
    yn = family.norm(y, p.k0 + p.d2)
    mp = p.m_prime_at(p.k0)
    if not mp * yn < p.R:
        raise RadiusExceeded(f"||y||_{p.k0 + p.d2} = {yn:.6g} is not below R/m' = {p.R / mp:.6g}")
    cap = factor * p.R if math.isfinite(p.R) else math.inf
    R_prime = min(cap, 0.5 * (mp + mu) * yn)
    if not R_prime > mp * yn:
        raise RadiusExceeded(
            f"||y||_{p.k0 + p.d2} = {yn:.6g} exceeds R'/m' with R' = {factor} R")
    return R_prime


def solve(p: TameProblem, y: GradedElement, opts: SolveOptions | None = None,
          family: NormFamily | None = None) -> SolveReport:
    """Pick ``R'`` and the weights for ``y``, then run :func:`descent_solve`."""
    opts = opts or SolveOptions()
    family = family or NormFamily()
    mu = opts.resolve_mu(p)
    if y.is_zero():
        x = GradedElement.zeros(y.n_grid, y.dim)
        r = p.F(x) - y
        rec = _record(0, 0.0, family.profile(r), 0.0, x, p, family)
        return SolveReport(Status.SOLVED, x, [rec], _solution_checks(p, family, x, y, mu),
                           "descent", "zero right-hand side", {"mu": mu})
    try:
        R_prime = choose_R_prime(p, y, family, mu, opts.R_prime_factor)
        w = build_weights(y, p, family, R_prime)
    except RadiusExceeded as exc:
        return SolveReport(Status.RADIUS_EXCEEDED, GradedElement.zeros(y.n_grid, y.dim),
                           method="descent", message=str(exc), extra={"mu": mu})
    return descent_solve(p, y, w, opts, family)


def newton_solve(p: TameProblem, y: GradedElement, opts: SolveOptions | None = None,
                 family: NormFamily | None = None) -> SolveReport:
    """Full steps ``x <- x - L(x)(F(x) - y)`` with no merit or ball control."""
    opts = opts or SolveOptions()
    family = family or NormFamily()
    mu = opts.resolve_mu(p)
    anchor = p.k0 + p.d2
    x = GradedElement.zeros(y.n_grid, y.dim)
    r = p.F(x) - y
    res = family.profile(r)
    iterates = [_record(0, None, res, 0.0, x, p, family)]
    status, message, growth = Status.MAX_ITERS, "", 0
    if res[anchor] <= opts.tol:
        status = Status.SOLVED
    else:
        for it in range(1, opts.max_iters + 1):
            try:
                x = x - p.L(x, r)
                r = p.F(x) - y
            except SingularInverse as exc:
                status, message = Status.SINGULAR_INVERSE, str(exc)
                break
            except (OutsideBall, ValueError) as exc:
                # ValueError: non-finite iterate
                status, message = Status.DIVERGED if isinstance(exc, ValueError) else \
                    Status.OUTSIDE_BALL, str(exc)
                break
            new = family.profile(r)
            growth = growth + 1 if new[anchor] > res[anchor] else 0
            res = new
            iterates.append(_record(it, None, res, 1.0, x, p, family))
            if res[anchor] <= opts.tol:
                status = Status.SOLVED
                break
            if growth >= 5:
                status, message = Status.DIVERGED, "residual grew for 5 consecutive steps"
                break
    checks = []
    if status is Status.SOLVED:
        checks = _solution_checks(p, family, x, y, mu)
        if not checks[1].passed:
            status, message = Status.OUTSIDE_BALL, "converged outside the ball"
    return SolveReport(status, x, iterates, checks, "newton", message, {"mu": mu})


def continuation_segments(p: TameProblem, distance: float, R_prime_factor: float) -> int:
    """Smallest ``N`` with ``distance / N < 0.9 rho / m'_{k0}``, ``rho = R - R'``."""
    if distance == 0:
        return 0
    rho = (1.0 - R_prime_factor) * p.R if math.isfinite(p.R) else math.inf
    step = 0.9 * rho / p.m_prime_at(p.k0)
    return int(math.floor(distance / step)) + 1


def continuation_solve(p: TameProblem, y_start: GradedElement, y_end: GradedElement,
                       x_start: GradedElement, opts: SolveOptions | None = None,
                       family: NormFamily | None = None,
                       segments: int | None = None) -> SolveReport:
    """Chain descent solves along the segment from ``y_start`` to ``y_end``.

    Each link solves ``G(z) = y_{i+1} - y_i`` for ``G(z) = F(z + x_i) - y_i``
    on the ball of radius ``rho = R - R'``; then checks the chained bound
    ``||x_start - x_end||_{k0} <= mu ||y_start - y_end||_{k0+d2}``.
    """
    opts = opts or SolveOptions()
    family = family or NormFamily()
    mu = opts.resolve_mu(p)
    anchor = p.k0 + p.d2
    start_res = family.norm(p.F(x_start) - y_start, anchor)
    if start_res > max(opts.tol, 1e-12) * 10:
        raise ValueError(f"x_start does not solve F(x) = y_start (residual {start_res:.3g})")
    dist = family.norm(y_end - y_start, anchor)
    n_min = continuation_segments(p, dist, opts.R_prime_factor)
    if segments is None:
        n_seg = n_min
    elif segments < n_min:
        raise ValueError(f"{segments} segments is fewer than the required {n_min}")
    else:
        n_seg = int(segments)
    if dist == 0 or n_seg == 0:
        return SolveReport(Status.SOLVED, x_start, [], [], "continuation", "empty segment",
                           {"segments": 0, "mu": mu})
    rho = (1.0 - opts.R_prime_factor) * p.R if math.isfinite(p.R) else math.inf
    x = x_start
    iterates: list[IterateRecord] = []
    checks: list[CheckResult] = []
    ys = [y_start + (i / n_seg) * (y_end - y_start) for i in range(n_seg + 1)]
    ys[-1] = y_end
    status, message = Status.SOLVED, ""
    for i in range(n_seg):
        g = p.recentered(x, ys[i], rho)
        rep = solve(g, ys[i + 1] - ys[i], opts, family)
        iterates += [IterateRecord(r.iteration, r.merit, r.residual_norms, r.step,
                                   r.x_norm_k0, i) for r in rep.iterates]
        for c in rep.bound_checks:
            checks.append(CheckResult(f"segment{i}:{c.name}", c.passed, c.observed, c.bound,
                                      c.margin, {**c.context, "segment": i}))
        if not rep.solved:
            status = rep.status
            message = f"segment {i}: {rep.message or rep.status.value}"
            break
        x = x + rep.final_x
    if status is Status.SOLVED:
        moved = family.norm(x - x_start, p.k0)
        checks.append(CheckResult.upper("chained_lipschitz", moved, mu * dist, BOUND_TOL,
                                        mu=mu, y_distance=dist, segments=n_seg))
        xn = family.norm(x, p.k0)
        checks.append(CheckResult("in_ball", bool(xn < p.R), xn, p.R, p.R - xn, {}))
    return SolveReport(status, x, iterates, checks, "continuation", message,
                       {"segments": n_seg, "mu": mu, "rho": rho, "y_distance": dist})


def finite_regularity_solve(p: TameProblem, y_rough: GradedElement,
                            opts: SolveOptions | None = None,
                            family: NormFamily | None = None) -> SolveReport:
    """Solve for a target of limited regularity through dyadic smoothings.

    ``y_n = S_{2^n} y_rough``; consecutive solutions are linked by
    :func:`continuation_solve` and must satisfy
    ``||x_n - x_{n+1}||_{k0} <= mu ||y_n - y_{n+1}||_{k0+d2}`` (a violation
    by more than a factor 2 stops the chain with ``RateViolation``).
    """
    opts = opts or SolveOptions()
    family = family or NormFamily()
    mu = opts.resolve_mu(p)
    anchor = p.k0 + p.d2
    yn = family.norm(y_rough, anchor)
    if not yn * p.m_prime_at(p.k0) < p.R:
        return SolveReport(Status.RADIUS_EXCEEDED, GradedElement.zeros(y_rough.n_grid, y_rough.dim),
                           method="finite_regularity", message="target outside the ball",
                           extra={"mu": mu})
    cutoffs = dyadic_schedule(y_rough.n_grid)
    targets = [smooth(y_rough, n) for n in cutoffs]
    first = solve(p, targets[0], opts, family)
    iterates = list(first.iterates)
    checks: list[CheckResult] = []
    extra = {"mu": mu, "cutoffs": [], "x_distances": [], "y_distances": []}
    if not first.solved:
        return SolveReport(first.status, first.final_x, iterates, first.bound_checks,
                           "finite_regularity", "initial solve: " + first.message, extra)
    x, y = first.final_x, targets[0]
    extra["cutoffs"].append(cutoffs[0])
    status, message = Status.SOLVED, ""
    for n, (cut, y_next) in enumerate(zip(cutoffs[1:], targets[1:])):
        rep = continuation_solve(p, y, y_next, x, opts, family)
        if not rep.solved:
            status, message = rep.status, f"link {n}: {rep.message}"
            break
        dx = family.norm(rep.final_x - x, p.k0)
        dy = family.norm(y_next - y, anchor)
        extra["cutoffs"].append(cut)
        extra["x_distances"].append(dx)
        extra["y_distances"].append(dy)
        chk = CheckResult.upper(f"cauchy_rate[{n}]", dx, mu * dy, BOUND_TOL, n=n, cutoff=cut)
        checks.append(chk)
        iterates += [IterateRecord(r.iteration, r.merit, r.residual_norms, r.step,
                                   r.x_norm_k0, n + 1) for r in rep.iterates]
        x, y = rep.final_x, y_next
        if dx > 2.0 * mu * dy + BOUND_TOL:
            status, message = Status.RATE_VIOLATION, f"link {n} violates the Cauchy rate"
            break
        if family.norm(y_rough - y, anchor) <= opts.tol:
            break
    if status is Status.SOLVED:
        checks += _solution_checks(p, family, x, y_rough, mu)
    return SolveReport(status, x, iterates, checks, "finite_regularity", message, extra)


def implicit_solve(fam: ImplicitFamily, epsilon: float, opts: SolveOptions | None = None,
                   family: NormFamily | None = None, n_grid: int = 128) -> SolveReport:
    """Solve ``F0(x) + eps F1(x) = 0`` as ``G_eps(x) = -eps F1(0)``."""
    opts = opts or SolveOptions()
    family = family or NormFamily()
    F0 = fam.F0
    mu = opts.resolve_mu(F0)
    anchor = F0.k0 + F0.d2
    f10 = fam.F1_at_zero(n_grid)
    n1 = family.norm(f10, anchor)
    limit = min(F0.R / (F0.m_prime_at(F0.k0) * n1), fam.epsilon0)
    if not abs(epsilon) < limit:
        return SolveReport(Status.EPSILON_TOO_LARGE, GradedElement.zeros(n_grid), method="implicit",
                           message=f"|eps| = {abs(epsilon):g} is not below {limit:g}",
                           extra={"epsilon": epsilon, "limit": limit, "mu": mu})
    G = fam.G(epsilon, n_grid)
    rep = solve(G, -float(epsilon) * f10, opts, family)
    rep.method = "implicit"
    rep.extra.update({"epsilon": float(epsilon), "limit": limit, "F1_0_norm": n1})
    if rep.solved:
        xn = family.norm(rep.final_x, F0.k0)
        rep.bound_checks.append(CheckResult.upper("implicit_bound", xn, mu * abs(epsilon) * n1,
                                                  0.0, epsilon=float(epsilon)))
        residual = F0.F(rep.final_x) + float(epsilon) * fam.F1(rep.final_x)
        rep.extra["equation_residual"] = family.norm(residual, anchor)
    return rep


def admissible_amplitude(p: TameProblem, family: NormFamily, opts: SolveOptions,
                         method: str, direction: GradedElement, ceiling: float,
                         steps: int = 12) -> tuple[float, list[dict]]:
    """Largest ``c`` in ``[0, ceiling]`` (by bisection) with ``c * direction`` solved.

    Returns ``(c_max, points)``, points in the order evaluated.
    """
    if method not in ("descent", "newton"):
        raise ValueError(f"unknown method {method!r}")
    points: list[dict] = []

    def ok(c: float) -> bool:
        y = c * direction
        if method == "descent":
            rep = solve(p, y, opts, family)
        else:
            try:
                choose_R_prime(p, y, family, opts.resolve_mu(p), opts.R_prime_factor)
                rep = newton_solve(p, y, opts, family)
            except RadiusExceeded as exc:
                rep = SolveReport(Status.RADIUS_EXCEEDED, y, method="newton", message=str(exc))
        res = rep.iterates[-1].residual_norms[p.k0 + p.d2] if rep.iterates else None
        points.append({"method": method, "c": c, "status": rep.status.value,
                       "iterations": rep.iterations, "residual": res})
        return rep.solved

    if ceiling <= 0:
        return 0.0, points
    if ok(ceiling):
        return ceiling, points
    lo, hi = 0.0, ceiling
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo, points
