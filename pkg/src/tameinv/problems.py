"""Tame problems ``F(x) = y`` with a right inverse of the linearization.

A :class:`TameProblem` bundles the map, its Gateaux derivative, a right
inverse ``L(x)`` of ``DF(x)`` and the integers/sequences of the tame
estimates

    ||DF(x) u||_k <= c1(u) (m_k ||u||_{k+d1} + ||F(x)||_k)
    ||L(x) v||_k  <= m'_k ||v||_{k+d2}

valid on the ball ``||x||_{k0} < R``.

Two benchmarks ship with the package: the linear transport operator
``x + a x'`` (exact Fourier multiplier inverse) and the Burgers-type map
``x + x x'``, whose right inverse is a dense collocation solve.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import ConditionViolation, OutsideBall
from .graded_space import GradedElement, NormFamily, derivative, trig_element
from .records import write_csv

Map = Callable[[GradedElement], GradedElement]
LinearAt = Callable[[GradedElement, GradedElement], GradedElement]

CONSTANTS_CSV_HEADER = ("k", "m_k", "m_prime_k")
COND_LIMIT = 1e12


@dataclass(frozen=True)
class TameProblem:
    name: str
    eval_F: Map
    apply_DF: LinearAt
    apply_L: LinearAt
    d1: int
    d2: int
    k0: int
    R: float
    m: np.ndarray | None = None
    m_prime: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.d1, self.d2, self.k0) < 0:
            raise ValueError("d1, d2 and k0 must be non-negative")
        if not self.R > 0:
            raise ValueError("ball radius R must be positive (or inf)")
        for name in ("m", "m_prime"):
            seq = getattr(self, name)
            if seq is None:
                continue
            seq = np.asarray(seq, dtype=float)
            if seq.ndim != 1 or seq.size == 0 or np.any(seq <= 0) or np.any(np.diff(seq) < 0):
                raise ValueError(f"{name} must be a positive non-decreasing sequence")
            seq.setflags(write=False)
            object.__setattr__(self, name, seq)

    # -- evaluation -----------------------------------------------------------
    def F(self, x: GradedElement) -> GradedElement:
        return self.eval_F(x)

    def DF(self, x: GradedElement, u: GradedElement) -> GradedElement:
        return self.apply_DF(x, u)

    def L(self, x: GradedElement, v: GradedElement) -> GradedElement:
        return self.apply_L(x, v)

    # -- constants --------------------------------------------------------------
    @property
    def has_constants(self) -> bool:
        return self.m is not None and self.m_prime is not None

    def _require_constants(self):
        if not self.has_constants:
            raise ValueError(f"problem {self.name!r} has no tame constants; "
                             "run estimate_tame_constants first")

    def m_at(self, k: int) -> float:
        """``m_k``; indices past the stored range repeat the last value."""
        self._require_constants()
        return float(self.m[min(k, self.m.size - 1)])

    def m_prime_at(self, k: int) -> float:
        self._require_constants()
        return float(self.m_prime[min(k, self.m_prime.size - 1)])

    def with_constants(self, m, m_prime) -> "TameProblem":
        return replace(self, m=np.asarray(m, dtype=float), m_prime=np.asarray(m_prime, dtype=float))

    def in_ball(self, x: GradedElement, family: NormFamily) -> bool:
        return family.norm(x, self.k0) < self.R

    # -- derived problems ---------------------------------------------------------
    def recentered(self, x_t: GradedElement, y_t: GradedElement, R: float) -> "TameProblem":
        """``G(z) = F(z + x_t) - y_t`` on the ball of radius ``R`` around ``x_t``."""
        F, DF, L = self.eval_F, self.apply_DF, self.apply_L
        return replace(
            self,
            name=f"{self.name}@recentered",
            eval_F=lambda z: F(z + x_t) - y_t,
            apply_DF=lambda z, u: DF(z + x_t, u),
            apply_L=lambda z, v: L(z + x_t, v),
            R=R,
        )

    def shifted(self, y: GradedElement) -> "TameProblem":
        """``x -> F(x) - y``; drops the normalization ``F(0) = 0``."""
        F = self.eval_F
        return replace(self, name=f"{self.name}-y", eval_F=lambda x: F(x) - y)


# -- spectral helpers ---------------------------------------------------------

def _padded(a: np.ndarray) -> np.ndarray:
    """Interpolate rows of ``a`` onto the 2x grid (Nyquist split evenly)."""
    n = a.shape[-1]
    c = np.fft.rfft(a, axis=-1)
    c[..., -1] *= 0.5
    big = np.zeros(a.shape[:-1] + (n + 1,), dtype=complex)
    big[..., : n // 2 + 1] = c
    return np.fft.irfft(big * 2.0, n=2 * n, axis=-1)


def dealiased_product_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise product on a 2x zero-padded grid, truncated back to ``|m| < n/2``."""
    n = a.shape[-1]
    prod = _padded(a) * _padded(b)
    c = np.fft.rfft(prod, axis=-1)[..., : n // 2 + 1] * 0.5
    c[..., -1] = 0.0
    return np.fft.irfft(c, n=n, axis=-1)


def dealiased_product(a: GradedElement, b: GradedElement) -> GradedElement:
    a._same_shape(b)
    return GradedElement(dealiased_product_array(a.samples, b.samples))


def _fourier_multiplier(v: GradedElement, symbol: Callable[[np.ndarray], np.ndarray]) -> GradedElement:
    n = v.n_grid
    m = np.arange(n // 2 + 1, dtype=float)
    mult = symbol(m)
    spec = np.fft.rfft(v.samples, axis=-1) * mult
    return GradedElement(np.fft.irfft(spec, n=n, axis=-1))


class _LUCache:
    """Small thread-safe cache of LU factorizations keyed by the base point."""

    def __init__(self, maxsize: int = 16):
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.maxsize = maxsize

    def get(self, key, build):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        value = build()
        with self._lock:
            self._data[key] = value
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return value


def assemble_operator(apply: Callable[[GradedElement], GradedElement], dim: int,
                      n_grid: int) -> np.ndarray:
    """Dense matrix of a linear map on grid samples (row-major flattening)."""
    size = dim * n_grid
    mat = np.empty((size, size))
    for j in range(size):
        e = np.zeros(size)
        e[j] = 1.0
        mat[:, j] = apply(GradedElement(e.reshape(dim, n_grid))).samples.ravel()
    return mat


def collocation_inverse(apply_DF: LinearAt, cache: _LUCache | None = None,
                        cond_limit: float = COND_LIMIT) -> LinearAt:
    """Right inverse ``L(x) v = DF(x)^{-1} v`` by dense assembly and LU solve.

    Raises :class:`OutsideBall` when the assembled operator has condition
    number above ``cond_limit``.
    """
    cache = cache if cache is not None else _LUCache()

    def factor(x: GradedElement):
        mat = assemble_operator(lambda u: apply_DF(x, u), x.dim, x.n_grid)
        cond = np.linalg.cond(mat)
        if not np.isfinite(cond) or cond > cond_limit:
            raise OutsideBall(f"linearization is singular (condition number {cond:.3g})")
        return scipy.linalg.lu_factor(mat, check_finite=False), mat

    def apply_L(x: GradedElement, v: GradedElement) -> GradedElement:
        x._same_shape(v)
        lu, mat = cache.get(x.samples.tobytes(), lambda: factor(x))
        b = v.samples.ravel()
        u = scipy.linalg.lu_solve(lu, b, check_finite=False)
        # one step of iterative refinement
        u = u + scipy.linalg.lu_solve(lu, b - mat @ u, check_finite=False)
        return GradedElement(u.reshape(v.dim, v.n_grid))

    return apply_L


# -- benchmark problems -------------------------------------------------------

def problem_linear_transport(alpha: float = 0.5, k0: int = 0, R: float = 1.0) -> TameProblem:
    """``F(x) = x + alpha x'`` with exact inverse multiplier ``1/(1 + i alpha m)``.

    ``(1 + alpha D)^{-1}`` is convolution with a positive kernel of unit mass
    and commutes with ``D``, hence ``m'_k = 1`` in both norm flavors;
    ``||u + alpha u'||_k <= (1 + |alpha|) ||u||_{k+1}`` gives ``m_k``.
    """
    alpha = float(alpha)
    if not abs(alpha) < 10:
        raise ValueError("|alpha| must be < 10")

    def F(x):
        return x + alpha * derivative(x, 1)

    def DF(x, u):
        return u + alpha * derivative(u, 1)

    def symbol(m):
        out = 1.0 / (1.0 + 1j * alpha * m)
        out[-1] = 1.0  # derivative kills the Nyquist mode, so DF is the identity there
        return out

    def L(x, v):
        return _fourier_multiplier(v, symbol)

    size = 64
    return TameProblem(
        name="linear_transport", eval_F=F, apply_DF=DF, apply_L=L,
        d1=1, d2=0, k0=k0, R=R,
        m=np.full(size, 1.0 + abs(alpha)), m_prime=np.ones(size),
        params={"alpha": alpha, "linear": True},
    )


def problem_nonlinear_transport(k0: int = 1, R: float = 0.5) -> TameProblem:
    """``F(x) = x + x x'`` (componentwise, anti-aliased products).

    ``DF(x) u = u + x' u + x u'``; ``L(x)`` solves the collocation system of
    ``DF(x)``.  Constants are left unset; estimate them for the norm family
    in use.
    """

    def F(x):
        return x + dealiased_product(x, derivative(x, 1))

    def DF(x, u):
        return u + dealiased_product(derivative(x, 1), u) + dealiased_product(x, derivative(u, 1))

    return TameProblem(
        name="nonlinear_transport", eval_F=F, apply_DF=DF,
        apply_L=collocation_inverse(DF), d1=1, d2=1, k0=k0, R=R,
        params={"linear": False},
    )


PROBLEMS = {
    "linear_transport": problem_linear_transport,
    "nonlinear_transport": problem_nonlinear_transport,
}


def make_problem(name: str, **params) -> TameProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)


# -- implicit family ----------------------------------------------------------

@dataclass(frozen=True)
class ImplicitFamily:
    """``F(eps, x) = F0(x) + eps F1(x)``; ``DF1 = None`` marks a constant ``F1``."""

    F0: TameProblem
    F1: Map
    DF1: LinearAt | None
    epsilon0: float

    def __post_init__(self):
        if not self.epsilon0 > 0:
            raise ValueError("epsilon0 must be positive")

    def F1_at_zero(self, n_grid: int = 128, dim: int = 1) -> GradedElement:
        return self.F1(GradedElement.zeros(n_grid, dim))

    def G(self, eps: float, n_grid: int = 128, dim: int = 1) -> TameProblem:
        """``G_eps(x) = F0(x) + eps (F1(x) - F1(0))``, which vanishes at 0."""
        eps = float(eps)
        F0, F1, DF1 = self.F0, self.F1, self.DF1
        f10 = self.F1_at_zero(n_grid, dim)

        def G(x):
            return F0.F(x) + eps * (F1(x) - f10)

        if DF1 is None or eps == 0.0:
            def DG(x, u):
                return F0.DF(x, u)
            LG = F0.apply_L
        else:
            def DG(x, u):
                return F0.DF(x, u) + eps * DF1(x, u)
            LG = collocation_inverse(DG)
        return replace(F0, name=f"{F0.name}+eps", eval_F=G, apply_DF=DG, apply_L=LG,
                       params={**F0.params, "epsilon": eps})


def implicit_linear_family(alpha: float = 0.5, epsilon0: float = 1.0) -> ImplicitFamily:
    """``F0 = x + alpha x'`` and the constant map ``F1 = sin(w)``."""
    F0 = problem_linear_transport(alpha)

    def F1(x):
        return trig_element(x.n_grid, sin={1: 1.0})

    return ImplicitFamily(F0, F1, None, epsilon0)


def implicit_nonlinear_family(amplitude: float = 0.1, epsilon0: float = 1.0) -> ImplicitFamily:
    """``F0 = x + x x'`` and ``F1(x) = g (1 + x)`` with ``g = amplitude cos(w)``."""
    F0 = problem_nonlinear_transport()

    def g(x):
        return trig_element(x.n_grid, cos={1: amplitude})

    def F1(x):
        gx = g(x)
        return gx + dealiased_product(gx, x)

    def DF1(x, u):
        return dealiased_product(g(x), u)

    return ImplicitFamily(F0, F1, DF1, epsilon0)


# -- random probes ------------------------------------------------------------

def random_element(rng: np.random.Generator, n_grid: int = 128, max_mode: int | None = None,
                   decay: float = 0.0, dim: int = 1, include_mean: bool = True) -> GradedElement:
    """Random real trigonometric polynomial with modes ``<= max_mode``.

    Coefficients are standard normal times ``(1 + m)^(-decay)``.
    """
    top = n_grid // 4 if max_mode is None else max_mode
    m = np.arange(top + 1)
    scale = (1.0 + m) ** (-float(decay))
    spec = np.zeros((dim, n_grid // 2 + 1), dtype=complex)
    spec[:, : top + 1] = (rng.standard_normal((dim, top + 1))
                          + 1j * rng.standard_normal((dim, top + 1))) * scale
    spec[:, 0] = spec[:, 0].real if include_mean else 0.0
    return GradedElement(np.fft.irfft(spec * n_grid / 2, n=n_grid, axis=-1))


def random_in_ball(rng: np.random.Generator, p: TameProblem, family: NormFamily,
                   n_grid: int = 128, frac: float = 0.9, max_mode: int = 8,
                   decay: float = 2.0) -> GradedElement:
    """Random smooth point with ``||x||_{k0}`` uniform in ``(0, frac R)``."""
    z = random_element(rng, n_grid, max_mode=max_mode, decay=decay)
    radius = p.R if math.isfinite(p.R) else 1.0
    target = rng.uniform(0.0, frac) * radius
    return z * (target / family.norm(z, p.k0))


def random_direction(rng: np.random.Generator, n_grid: int = 128,
                     max_mode: int | None = None) -> GradedElement:
    """Random band-limited element with a randomly chosen spectral decay.

    Decay is capped at ``(1+m)^-2`` so the top of the band stays well above
    FFT roundoff, which the ``k = k_max`` norms amplify by ``(n/2)^k_max``.
    """
    decay = float(rng.choice([0.0, 1.0, 2.0]))
    return random_element(rng, n_grid, max_mode=max_mode, decay=decay)


# -- checks and estimates -------------------------------------------------------

def gateaux_fd(p: TameProblem, x: GradedElement, u: GradedElement, h: float) -> GradedElement:
    """Central difference ``(F(x + h u) - F(x - h u)) / (2h)``."""
    if not h > 0:
        raise ValueError("h must be positive")
    if u.is_zero():
        return GradedElement.zeros(u.n_grid, u.dim)
    return (p.F(x + h * u) - p.F(x - h * u)) / (2.0 * h)


def check_condition3_equivalence(c1_prime: float, m0: float, u_norm0: float,
                                 samples: Sequence[tuple[float, float]] = ()) -> float:
    """Convert the ``+1`` form of the derivative bound into the plain form.

    Returns ``c1 = c1' (1 + 1/(m0 ||u||_0))``.  Each sample ``(a, b)`` stands
    for ``a = m_k ||u||_{k+d1}`` and ``b = ||F(x)||_k``; since ``m_k`` and the
    norms are non-decreasing, ``a >= m0 ||u||_0`` and the inequality
    ``c1 (a + b) >= c1' (a + b + 1)`` must hold.
    """
    if not u_norm0 > 0:
        raise ValueError("u must be nonzero")
    if not m0 > 0:
        raise ValueError("m0 must be positive")
    c1 = c1_prime * (1.0 + 1.0 / (m0 * u_norm0))
    for a, b in samples:
        if a < m0 * u_norm0 * (1 - 1e-12):
            raise ValueError(f"sample a={a} is below m0 ||u||_0; not a valid sample")
        lhs, rhs = c1 * (a + b), c1_prime * (a + b + 1.0)
        if lhs < rhs * (1 - 1e-12):
            raise ConditionViolation(f"c1 (a+b) = {lhs} < c1' (a+b+1) = {rhs}")
    return c1


def right_inverse_residuals(p: TameProblem, family: NormFamily, count: int = 100,
                            seed: int = 0, n_grid: int = 128) -> list[dict]:
    """Relative residuals ``||DF L v - v||_k / ||v||_{k+d2}`` on random triples."""
    rng = np.random.default_rng(seed)
    out = []
    top = family.k_max - p.d2
    for i in range(count):
        x = random_in_ball(rng, p, family, n_grid)
        v = random_direction(rng, n_grid)
        k = int(rng.integers(0, top + 1))
        r = p.DF(x, p.L(x, v)) - v
        rel = family.norm(r, k) / family.norm(v, k + p.d2)
        out.append({"index": i, "k": k, "relative_residual": rel})
    return out


@dataclass(frozen=True)
class TameConstants:
    m: np.ndarray
    m_prime: np.ndarray
    c1_table: np.ndarray        # (probes, k) maxima over x of the Condition-3 ratio
    c1: np.ndarray              # per probe u, max over (x, k)
    k_top: int                  # last index actually estimated

    def growing_k(self, factor: float = 1.5) -> list[int]:
        """Indices where the worst-case Condition-3 ratio grows by more than ``factor``."""
        worst = self.c1_table.max(axis=0)
        return [k for k in range(1, worst.size) if worst[k] > factor * worst[k - 1]]

    def write_csv(self, path: str | Path) -> Path:
        rows = [(k, float(self.m[k]), float(self.m_prime[k])) for k in range(self.k_top + 1)]
        return write_csv(path, CONSTANTS_CSV_HEADER, rows)


def estimate_tame_constants(p: TameProblem, family: NormFamily, probe_count: int = 32,
                            seed: int = 0, n_grid: int = 128) -> TameConstants:
    """Randomized lower estimates of ``m_k``, ``m'_k`` and ``c1(u)``.

    ``m_k`` comes from the ``x = 0`` slice of ``||DF(x) u||_k / ||u||_{k+d1}``;
    ``m'_k`` maximizes ``||L(x) v||_k / ||v||_{k+d2}`` over random points of
    the ball.  Both are made non-decreasing by a running maximum and padded
    with their last value up to ``k_max + d1``.
    """
    if probe_count < 16:
        raise ValueError("probe_count must be >= 16")
    if not p.R > 0:
        raise ValueError("empty ball")
    rng = np.random.default_rng(seed)
    top = family.k_max - max(p.d1, p.d2)
    if top < 0:
        raise ValueError("k_max too small for the derivative losses")
    ks = np.arange(top + 1)

    zero = GradedElement.zeros(n_grid)
    us = [random_direction(rng, n_grid) for _ in range(probe_count)]
    # the constant mode realizes the worst case at x = 0 for many operators
    us[0] = GradedElement.constant(1.0, n_grid)
    m = np.zeros(top + 1)
    for u in us:
        num = family.profile(p.DF(zero, u))[ks]
        den = family.profile(u)[ks + p.d1]
        m = np.maximum(m, num / den)

    xs = [random_in_ball(rng, p, family, n_grid) for _ in range(probe_count)]
    vs = [random_direction(rng, n_grid) for _ in range(probe_count)]
    vs[0] = GradedElement.constant(1.0, n_grid)
    mp = np.zeros(top + 1)
    for x in xs:
        for v in vs[: max(4, probe_count // 4)]:
            num = family.profile(p.L(x, v))[ks]
            den = family.profile(v)[ks + p.d2]
            mp = np.maximum(mp, num / den)
    for x, v in zip(xs, vs):
        num = family.profile(p.L(x, v))[ks]
        den = family.profile(v)[ks + p.d2]
        mp = np.maximum(mp, num / den)

    m = np.maximum.accumulate(np.maximum(m, 1e-300))
    mp = np.maximum.accumulate(np.maximum(mp, 1e-300))
    size = family.k_max + p.d1 + 1
    m_full = np.concatenate([m, np.full(size - m.size, m[-1])])
    mp_full = np.concatenate([mp, np.full(size - mp.size, mp[-1])])

    table = np.zeros((probe_count, top + 1))
    fx = [family.profile(p.F(x))[ks] for x in xs]
    for i, u in enumerate(us):
        un = family.profile(u)
        for x, f in zip(xs, fx):
            num = family.profile(p.DF(x, u))[ks]
            den = m_full[ks] * un[ks + p.d1] + f
            table[i] = np.maximum(table[i], num / den)
    return TameConstants(m_full, mp_full, table, table.max(axis=1), top)


def check_generalization(p: TameProblem, family: NormFamily, probe_count: int = 16,
                         seed: int = 1, factor: float = 1.5, n_grid: int = 128) -> dict:
    """Fresh-probe check of Condition 5 with ``factor * m'_k``.

    Returns the worst observed ratio ``||L(x) v||_k / (m'_k ||v||_{k+d2})``.
    """
    p._require_constants()
    rng = np.random.default_rng(seed)
    top = family.k_max - max(p.d1, p.d2)
    ks = np.arange(top + 1)
    mp = np.array([p.m_prime_at(k) for k in ks])
    worst = 0.0
    for _ in range(probe_count):
        x = random_in_ball(rng, p, family, n_grid)
        v = random_direction(rng, n_grid)
        ratio = family.profile(p.L(x, v))[ks] / (mp * family.profile(v)[ks + p.d2])
        worst = max(worst, float(ratio.max()))
    return {"worst_ratio": worst, "factor": factor, "passed": worst <= factor}


def check_condition1(p: TameProblem, n_grid: int = 128, tol: float = 1e-12) -> bool:
    f0 = p.F(GradedElement.zeros(n_grid))
    return float(np.max(np.abs(f0.samples))) <= tol
