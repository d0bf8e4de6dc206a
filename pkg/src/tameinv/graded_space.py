"""Discretized smooth periodic functions on the 1-torus and their graded norms.

An element of ``C^inf(T^1, R^d)`` is stored by its samples on the uniform grid
``omega_j = 2 pi j / n`` together with its discrete Fourier coefficients.
Both representations are computed once, at construction, and never mutated.

Two norm families are provided:

``SupCk``
    ``||x||_k = max_{p <= k} max_j |x^{(p)}(omega_j)|`` (grid maximum, no
    subgrid refinement; ``|.|`` is the Euclidean norm over components).
``SobolevHk``
    ``||x||_k^2 = sum_{p <= k} int_0^{2 pi} |x^{(p)}|^2 d omega``, the integral
    evaluated with the trapezoid rule, which is exact for band-limited data.

Derivatives are spectral: mode ``m`` is multiplied by ``(i m)^p``.  The
Nyquist mode ``m = n/2`` is treated as a real cosine and is killed by odd
derivatives.
"""

from __future__ import annotations

import enum
import json
import math
import struct
import threading
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "Flavor",
    "GradedElement",
    "NormFamily",
    "FrechetMetric",
    "ControlledBound",
    "grid",
    "wavenumbers",
    "trig_element",
    "derivative",
    "derivative_stack",
    "norm",
    "metric_distance",
    "controlled_constant",
]

_SYMMETRY_TOL = 1e-12
SPECTRAL_CHOP = 16 * np.finfo(float).eps


def grid(n_grid: int) -> np.ndarray:
    """Uniform grid on ``[0, 2 pi)``."""
    return 2.0 * np.pi * np.arange(n_grid) / n_grid


def wavenumbers(n_grid: int) -> np.ndarray:
    """Mode numbers in FFT order, Nyquist reported as ``+n/2``."""
    m = np.fft.fftfreq(n_grid, d=1.0 / n_grid)
    m[n_grid // 2] = n_grid // 2
    return m


class GradedElement:
    """Immutable sampled element with eagerly synchronized Fourier coefficients.

    Parameters
    ----------
    samples : array_like
        Shape ``(n_grid,)`` or ``(dim, n_grid)``; real, finite; ``n_grid`` even.
    """

    __slots__ = ("_samples", "_coeffs", "_memo", "_lock")

    def __init__(self, samples):
        a = np.array(samples, dtype=float, copy=True)
        if a.ndim == 1:
            a = a[None, :]
        if a.ndim != 2 or a.shape[0] < 1:
            raise ValueError(f"samples must have shape (dim, n_grid), got {a.shape}")
        n = a.shape[1]
        if n < 2 or n % 2:
            raise ValueError(f"n_grid must be a positive even integer, got {n}")
        if not np.all(np.isfinite(a)):
            raise ValueError("element has non-finite entries")
        a.setflags(write=False)
        c = np.fft.fft(a, axis=-1) / n
        c.setflags(write=False)
        self._samples = a
        self._coeffs = c
        self._memo: dict = {}
        self._lock = threading.Lock()

    # -- construction -----------------------------------------------------
    @classmethod
    def zeros(cls, n_grid: int = 128, dim: int = 1) -> "GradedElement":
        return cls(np.zeros((dim, n_grid)))

    @classmethod
    def constant(cls, value, n_grid: int = 128, dim: int = 1) -> "GradedElement":
        v = np.broadcast_to(np.asarray(value, dtype=float).reshape(-1, 1), (dim, n_grid))
        return cls(v)

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], n_grid: int = 128) -> "GradedElement":
        return cls(f(grid(n_grid)))

    @classmethod
    def from_coeffs(cls, coeffs) -> "GradedElement":
        """Build from FFT-ordered coefficients (``samples = n * ifft(coeffs)``)."""
        c = np.atleast_2d(np.asarray(coeffs, dtype=complex))
        n = c.shape[-1]
        vals = np.fft.ifft(c * n, axis=-1)
        scale = max(1.0, float(np.max(np.abs(vals))))
        if np.max(np.abs(vals.imag)) > _SYMMETRY_TOL * scale:
            raise ValueError("coefficients are not conjugate-symmetric")
        return cls(vals.real)

    # -- accessors ----------------------------------------------------------
    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def dim(self) -> int:
        return self._samples.shape[0]

    @property
    def n_grid(self) -> int:
        return self._samples.shape[1]

    @property
    def modes(self) -> np.ndarray:
        return wavenumbers(self.n_grid)

    def is_zero(self) -> bool:
        return not np.any(self._samples)

    def memo(self, key, compute):
        """Cache a pure function of this (immutable) element."""
        try:
            return self._memo[key]
        except KeyError:
            pass
        value = compute()
        with self._lock:
            self._memo.setdefault(key, value)
        return self._memo[key]

    def check_consistency(self) -> float:
        """Relative mismatch between samples and the inverse transform of coeffs."""
        back = np.fft.ifft(self._coeffs * self.n_grid, axis=-1)
        scale = max(1.0, float(np.max(np.abs(self._samples))))
        return float(np.max(np.abs(back - self._samples)) / scale)

    def _same_shape(self, other: "GradedElement") -> None:
        if self._samples.shape != other._samples.shape:
            raise ValueError(
                f"shape mismatch: {self._samples.shape} vs {other._samples.shape}")

    # -- vector space -------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, GradedElement):
            return NotImplemented
        self._same_shape(other)
        return GradedElement(self._samples + other._samples)

    def __sub__(self, other):
        if not isinstance(other, GradedElement):
            return NotImplemented
        self._same_shape(other)
        return GradedElement(self._samples - other._samples)

    def __mul__(self, c):
        if isinstance(c, GradedElement):
            return NotImplemented
        return GradedElement(self._samples * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return GradedElement(self._samples / float(c))

    def __neg__(self):
        return GradedElement(-self._samples)

    def __eq__(self, other):
        if not isinstance(other, GradedElement):
            return NotImplemented
        return self._samples.shape == other._samples.shape and bool(
            np.array_equal(self._samples, other._samples))

    def __hash__(self):
        return hash((self._samples.shape, self._samples.tobytes()))

    def __repr__(self):
        return f"GradedElement(dim={self.dim}, n_grid={self.n_grid})"

    # -- serialization ------------------------------------------------------
    def to_record(self) -> dict:
        return {"dim": self.dim, "n_grid": self.n_grid,
                "samples": self._samples.ravel().tolist()}

    @classmethod
    def from_record(cls, rec: Mapping) -> "GradedElement":
        dim, n = int(rec["dim"]), int(rec["n_grid"])
        data = np.asarray(rec["samples"], dtype=float)
        if data.size != dim * n:
            raise ValueError("record size does not match dim * n_grid")
        return cls(data.reshape(dim, n))

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def from_json(cls, text: str) -> "GradedElement":
        return cls.from_record(json.loads(text))

    def to_bytes(self) -> bytes:
        """Little-endian ``uint32 dim, uint32 n_grid`` then row-major float64 samples."""
        return struct.pack("<II", self.dim, self.n_grid) + self._samples.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GradedElement":
        dim, n = struct.unpack_from("<II", blob)
        data = np.frombuffer(blob, dtype="<f8", offset=8)
        if data.size != dim * n:
            raise ValueError("payload size does not match header")
        return cls(data.reshape(dim, n))


def trig_element(n_grid: int = 128, sin: Mapping[int, float] | None = None,
                 cos: Mapping[int, float] | None = None, const: float = 0.0) -> GradedElement:
    """Scalar trigonometric polynomial ``const + sum a_m sin(m w) + b_m cos(m w)``."""
    w = grid(n_grid)
    v = np.full(n_grid, float(const))
    for m, a in (sin or {}).items():
        v += a * np.sin(int(m) * w)
    for m, b in (cos or {}).items():
        v += b * np.cos(int(m) * w)
    return GradedElement(v)


# -- derivatives ------------------------------------------------------------

def _diff_multipliers(n_grid: int, orders) -> np.ndarray:
    m = np.arange(n_grid // 2 + 1, dtype=float)
    out = np.empty((len(orders), m.size), dtype=complex)
    for i, p in enumerate(orders):
        out[i] = (1j * m) ** p
        if p % 2:
            out[i, -1] = 0.0
    return out


def derivative_stack(x: GradedElement, k: int) -> np.ndarray:
    """Samples of ``x^{(p)}`` for ``p = 0..k``; shape ``(k+1, dim, n_grid)``.

    Coefficients below ``SPECTRAL_CHOP`` times the largest one are treated as
    zero: they are transform roundoff, which ``(n/2)^k`` would otherwise
    amplify into the high norms.
    """
    if k < 0:
        raise ValueError("derivative order must be non-negative")
    n = x.n_grid
    spec = np.fft.rfft(x.samples, axis=-1)
    mag = np.abs(spec)
    spec[mag < SPECTRAL_CHOP * mag.max()] = 0.0
    mult = _diff_multipliers(n, range(k + 1))
    return np.fft.irfft(mult[:, None, :] * spec[None, :, :], n=n, axis=-1)


def derivative(x: GradedElement, p: int) -> GradedElement:
    """Spectral ``p``-th derivative (exact for band-limited inputs)."""
    if p < 0:
        raise ValueError("derivative order must be non-negative")
    if p == 0:
        return x
    n = x.n_grid
    spec = np.fft.rfft(x.samples, axis=-1) * _diff_multipliers(n, [p])[0]
    return GradedElement(np.fft.irfft(spec, n=n, axis=-1))


# -- norms ------------------------------------------------------------------

class Flavor(str, enum.Enum):
    SUP_CK = "SupCk"
    SOBOLEV_HK = "SobolevHk"


@dataclass(frozen=True)
class NormFamily:
    """Graded norms ``||.||_k`` for ``k = 0..k_max`` of one flavor."""

    flavor: Flavor = Flavor.SOBOLEV_HK
    k_max: int = 12

    def __post_init__(self):
        object.__setattr__(self, "flavor", Flavor(self.flavor))
        if self.k_max < 0:
            raise ValueError("k_max must be non-negative")

    @property
    def hilbert(self) -> bool:
        return self.flavor is Flavor.SOBOLEV_HK

    def profile(self, x: GradedElement) -> np.ndarray:
        """All norms ``[||x||_0, ..., ||x||_{k_max}]`` (read-only array)."""
        return x.memo(("profile", self.flavor, self.k_max), lambda: _profile(x, self))

    def norm(self, x: GradedElement, k: int) -> float:
        if not 0 <= k <= self.k_max:
            raise ValueError(f"norm index {k} outside 0..{self.k_max}")
        return float(self.profile(x)[k])

    def supports(self, k0: int, d1: int, d2: int) -> bool:
        return self.k_max >= k0 + d2 + d1 + 2


def _profile(x: GradedElement, family: NormFamily) -> np.ndarray:
    stack = derivative_stack(x, family.k_max)
    if family.flavor is Flavor.SUP_CK:
        pointwise = np.sqrt(np.sum(stack ** 2, axis=1))
        out = np.maximum.accumulate(pointwise.max(axis=-1))
    else:
        h = 2.0 * np.pi / x.n_grid
        out = np.sqrt(np.cumsum(h * np.sum(stack ** 2, axis=(1, 2))))
    out.setflags(write=False)
    return out


def norm(x: GradedElement, k: int, family: NormFamily) -> float:
    return family.norm(x, k)


# -- Frechet metric ---------------------------------------------------------

@dataclass(frozen=True)
class FrechetMetric:
    """Truncated distance ``sum_k alpha_k min{r, ||x - y||_k}``.

    ``tail_bound`` records the analytic bound on the discarded terms
    ``sum_{k > k_max} alpha_k r`` of whatever formula generated ``alpha``.
    """

    alpha: tuple
    r: float
    tail_bound: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or a.size == 0 or np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("alpha must be a non-empty, finite, non-negative sequence")
        if np.count_nonzero(a) < 2 or a[-1] == 0:
            raise ValueError("alpha needs at least two nonzero entries including the last")
        if not self.r > 0:
            raise ValueError("clamp radius r must be positive")
        object.__setattr__(self, "alpha", tuple(float(v) for v in a))

    @classmethod
    def power_decay(cls, k_max: int, r: float = 1.0) -> "FrechetMetric":
        """``alpha_k = (k+1)^{-(k+1)}``; tail summed to double precision."""
        alpha = [(k + 1.0) ** -(k + 1.0) for k in range(k_max + 1)]
        tail = math.fsum((k + 1.0) ** -(k + 1.0) for k in range(k_max + 1, k_max + 60))
        return cls(tuple(alpha), r, tail * r)


def metric_distance(x1: GradedElement, x2: GradedElement, m: FrechetMetric,
                    family: NormFamily) -> float:
    x1._same_shape(x2)
    if len(m.alpha) > family.k_max + 1:
        raise ValueError("metric has more weights than the norm family computes")
    prof = family.profile(x1 - x2)
    a = np.asarray(m.alpha)
    return float(np.sum(a * np.minimum(m.r, prof[: a.size])))


# -- controlled points ------------------------------------------------------

@dataclass(frozen=True)
class ControlledBound:
    c0: float
    feasible: bool


def controlled_constant(x: GradedElement, family: NormFamily) -> ControlledBound:
    """Smallest ``c0`` with ``||x||_k <= c0^k`` for ``1 <= k <= k_max``.

    The ``k = 0`` case reads ``||x||_0 <= 1`` and does not involve ``c0``; it
    decides ``feasible``.
    """
    prof = family.profile(x)
    ks = np.arange(1, family.k_max + 1)
    c0 = float(np.max(prof[1:] ** (1.0 / ks))) if ks.size else 0.0
    feasible = bool(prof[0] <= 1.0 and math.isfinite(c0))
    return ControlledBound(c0, feasible)
