"""Sharp spectral cutoff smoothing and a numerical check of the smoothing axioms.

``S_n`` keeps the Fourier modes ``|m| <= n`` and zeroes the rest.  It is an
orthogonal projection in every ``H^k``, so in the Sobolev flavor

* ``||S_n x||_{k+d} <= c1 n^d ||x||_k``   (gain of derivatives)
* ``||(I - S_n) x||_k <= c2 n^{-d} ||x||_{k+d}``   (approximation)

hold with constants close to one.  In the sup flavor the cutoff suffers a
Lebesgue-constant (logarithmic) degradation; the verifier reports estimates
and never claims uniform bounds there.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graded_space import (ControlledBound, GradedElement, NormFamily, controlled_constant,
                           trig_element)
from .records import write_csv

log = logging.getLogger(__name__)

AXIOM_CSV_HEADER = ("axiom", "k", "d", "n", "ratio")
_BAND_KEY = ("band_limit",)


def is_full_band(x: GradedElement, n: int) -> bool:
    return n >= x.n_grid // 2


def smooth(x: GradedElement, n: int) -> GradedElement:
    """Sharp cutoff ``S_n``: keep modes ``|m| <= n``.

    For ``n >= n_grid/2`` every representable mode survives and ``x`` is
    returned unchanged (see :func:`is_full_band`).
    """
    if n < 1:
        raise ValueError("cutoff n must be >= 1")
    if is_full_band(x, n):
        return x
    band = x.memo(_BAND_KEY, lambda: None)
    if band is not None and band <= n:
        # output of an earlier cutoff at or below n: S_n is the identity on it
        return x
    spec = np.fft.rfft(x.samples, axis=-1)
    spec[:, n + 1:] = 0.0
    out = GradedElement(np.fft.irfft(spec, n=x.n_grid, axis=-1))
    out.memo(_BAND_KEY, lambda: n)
    return out


@dataclass(frozen=True)
class SmoothingFamily:
    kind: str = "SharpCutoff"
    c1_est: float = 1.0
    c2_est: float = 1.0
    c3_est: float = 1.0

    def __post_init__(self):
        if self.kind != "SharpCutoff":
            raise ValueError(f"unknown smoothing kind {self.kind!r}")
        for name in ("c1_est", "c2_est", "c3_est"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 1e-12):
                raise ValueError(f"{name} must be finite and >= 1e-12, got {v}")

    def __call__(self, x: GradedElement, n: int) -> GradedElement:
        return smooth(x, n)


def default_probes(n_grid: int = 128, max_mode: int | None = None) -> list[GradedElement]:
    """Single-mode probes ``sin(m w)`` for ``m = 1..max_mode``.

    Both norm families are diagonal in the Fourier basis (Sobolev exactly), so
    the worst case of the Sobolev ratios is attained on single modes.
    """
    top = n_grid // 2 - 1 if max_mode is None else max_mode
    return [trig_element(n_grid, sin={m: 1.0}) for m in range(1, top + 1)]


@dataclass
class AxiomReport:
    c1_est: float
    c2_est: float
    passed: bool
    c1_by_n: dict[int, float]
    c2_by_n: dict[int, float]
    axiom1_monotone: bool
    axiom1_full_band: bool
    rows: list[tuple] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    skipped: int = 0

    def family(self, c3_est: float = 1.0) -> SmoothingFamily:
        return SmoothingFamily("SharpCutoff", max(self.c1_est, 1e-12),
                               max(self.c2_est, 1e-12), c3_est)

    def write_csv(self, path: str | Path) -> Path:
        return write_csv(path, AXIOM_CSV_HEADER, self.rows)


def roundoff_floor(x: GradedElement, k: int) -> float:
    """Size of FFT roundoff in ``||.||_k``: ``eps sqrt(n) max|x| (n/2)^k``."""
    n = x.n_grid
    return float(np.finfo(float).eps * math.sqrt(n) * np.max(np.abs(x.samples))
                 * (n / 2) ** k)


def _stable(values: Iterable[float], factor: float = 2.0) -> bool:
    vals = [v for v in values if v > 0]
    return bool(vals) and max(vals) <= factor * min(vals)


def verify_smoothing_axioms(family: NormFamily, probes: Sequence[GradedElement],
                            k_range: Iterable[int], d_range: Iterable[int],
                            n_range: Iterable[int]) -> AxiomReport:
    """Estimate ``c1``, ``c2`` by maximizing the axiom ratios over the probes.

    ``passed`` requires both per-``n`` maxima to agree within a factor of two
    across ``n_range`` and axiom (1): ``||S_n x - x||_k`` non-increasing in
    ``n`` (to 1e-10 relative plus :func:`roundoff_floor`) and zero at full band.
    """
    k_range = sorted(set(k_range))
    d_range = sorted(set(d_range))
    n_range = sorted(set(n_range))
    if not probes:
        raise ValueError("probe set is empty")
    if not k_range or not d_range or not n_range:
        raise ValueError("k_range, d_range and n_range must be non-empty")
    if min(n_range) < 1:
        raise ValueError("cutoffs must be >= 1")
    if max(k_range) + max(d_range) > family.k_max or min(k_range) < 0 or min(d_range) < 0:
        raise ValueError("k + d exceeds the norm family's k_max")

    live = []
    skipped = 0
    for x in probes:
        if x.is_zero():
            log.warning("skipping zero probe")
            skipped += 1
        else:
            live.append(x)
    if not live:
        raise ValueError("all probes are zero")

    c1 = {n: 0.0 for n in n_range}
    c2 = {n: 0.0 for n in n_range}
    rows: list[tuple] = []
    profiles = [family.profile(x) for x in live]
    for n in n_range:
        sm = [family.profile(smooth(x, n)) for x in live]
        rem = [family.profile(x - smooth(x, n)) for x in live]
        for k in k_range:
            for d in d_range:
                r1 = max(s[k + d] / (n ** d * p[k]) for s, p in zip(sm, profiles))
                r2 = max(r[k] * n ** d / p[k + d] for r, p in zip(rem, profiles))
                rows.append(("2", k, d, n, float(r1)))
                rows.append(("3", k, d, n, float(r2)))
                c1[n] = max(c1[n], float(r1))
                c2[n] = max(c2[n], float(r2))

    full = live[0].n_grid // 2
    schedule = sorted(set(n_range) | {full})
    monotone = True
    at_full = True
    for x, p in zip(live, profiles):
        for k in k_range:
            seq = [family.profile(x - smooth(x, n))[k] for n in schedule]
            for n, v in zip(schedule, seq):
                rows.append(("1", k, 0, n, float(v / p[k])))
            slack = 1e-10 * p[k] + roundoff_floor(x, k)
            if any(b > a + slack for a, b in zip(seq, seq[1:])):
                monotone = False
            if seq[-1] > 1e-10 * p[k]:
                at_full = False

    notes = []
    if family.flavor.value == "SupCk":
        notes.append("sup-norm cutoff constants are estimates; they may grow like log n")
    if not any(v > 0 for v in c2.values()):
        notes.append("no probe has content above the cutoffs; c2 undetermined")
    ok = _stable(c1.values()) and _stable(c2.values()) and monotone and at_full
    return AxiomReport(
        c1_est=max(c1.values()), c2_est=max(c2.values()), passed=ok,
        c1_by_n=c1, c2_by_n=c2, axiom1_monotone=monotone, axiom1_full_band=at_full,
        rows=rows, notes=notes, skipped=skipped)


@dataclass
class StandardSequence:
    schedule: list[int]
    elements: list[GradedElement]
    c3_est: float
    controls: list[ControlledBound]

    @property
    def all_controlled(self) -> bool:
        return all(c.feasible for c in self.controls)


def dyadic_schedule(n_grid: int) -> list[int]:
    out, n = [], 1
    while n < n_grid // 2:
        out.append(n)
        n *= 2
    out.append(n_grid // 2)
    return out


def standard_sequence(v: GradedElement, family: NormFamily) -> StandardSequence:
    """Approximants ``v_n = S_n v`` on the dyadic schedule with their constants."""
    if v.is_zero():
        raise ValueError("standard_sequence needs a nonzero element")
    base = family.profile(v)
    schedule = dyadic_schedule(v.n_grid)
    elems = [smooth(v, n) for n in schedule]
    mask = base > 0
    c3 = max(float(np.max(family.profile(e)[mask] / base[mask])) for e in elems)
    return StandardSequence(schedule, elems, c3, [controlled_constant(e, family) for e in elems])
