"""Command-line driver: ``tameinv {solve,verify,estimate,bench} CONFIG.json``.

The config is one JSON object.  Recognized keys (all optional except
``problem``)::

    problem        {"name": "linear_transport" | "nonlinear_transport", "params": {...}}
    family         {"flavor": "SobolevHk" | "SupCk", "k_max": 12}
    n_grid         128
    k0             override of the problem's base index
    solver         SolveOptions fields (mu, mu_factor, R_prime_factor, tol, ...)
    target         {"sin": {"1": 0.3}, "cos": {}, "const": 0.0}  right-hand side y
    constants      {"probe_count": 32, "seed": 0}  estimation for problems without constants
    m_prime_scale  multiplies the m' table after estimation (fault injection)
    suites         list of verify suites, samples, min_pass_rate {check: rate}
    bench          {"direction": {...}, "ceiling": 0.1, "steps": 8, "methods": [...]}
    seed           integer
    out            output directory

Exit codes: 0 success, 1 solver or check failure, 2 configuration error.
CSV outputs:

* ``solve_iterates.csv``: iter, merit, residual_k0d2, step, x_norm_k0
* ``verify.csv``: check, seed, observed, bound, margin, passed
* ``constants.csv``: k, m_k, m_prime_k
* ``bench.csv``: method, c_max
* ``bench_points.csv``: method, c, status, iterations, residual
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError
from .graded_space import GradedElement, NormFamily, trig_element
from .problems import PROBLEMS, TameProblem, estimate_tame_constants, make_problem
from .records import write_csv
from .solver import SolveOptions, Status, admissible_amplitude, solve
from .verify import SUITE_CSV_HEADER, SUITES, run_suite

log = logging.getLogger(__name__)

CONFIG_KEYS = {"problem", "family", "n_grid", "k0", "solver", "target", "constants",
               "m_prime_scale", "suites", "samples", "min_pass_rate", "bench", "seed", "out",
               "workers", "description"}
BENCH_HEADER = ("method", "c_max")
BENCH_POINTS_HEADER = ("method", "c", "status", "iterations", "residual")
CONSTANTS_HEADER = ("k", "m_k", "m_prime_k")


@dataclass
class ExperimentConfig:
    problem: str
    problem_params: dict = field(default_factory=dict)
    flavor: str = "SobolevHk"
    k_max: int = 12
    n_grid: int = 128
    k0: int | None = None
    solver: dict = field(default_factory=dict)
    target: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    m_prime_scale: float = 1.0
    suites: list = field(default_factory=list)
    samples: int = 20
    min_pass_rate: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "out"
    workers: int = 1

    @property
    def family(self) -> NormFamily:
        return NormFamily(self.flavor, self.k_max)

    def solve_options(self) -> SolveOptions:
        names = {f.name for f in fields(SolveOptions)}
        extra = set(self.solver) - names
        if extra:
            raise ConfigError(f"unknown solver options {sorted(extra)}")
        try:
            return SolveOptions(**{**self.solver, "seed": self.seed})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver options: {exc}") from exc


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def parse_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a decoded config object."""
    _require(isinstance(raw, Mapping), "config must be a JSON object")
    unknown = set(raw) - CONFIG_KEYS
    _require(not unknown, f"unknown config keys {sorted(unknown)}")
    prob = raw.get("problem")
    if isinstance(prob, str):
        prob = {"name": prob}
    _require(isinstance(prob, Mapping) and "name" in prob, "problem.name is required")
    _require(prob["name"] in PROBLEMS, f"unknown problem {prob['name']!r}")
    params = prob.get("params", {})
    _require(isinstance(params, Mapping), "problem.params must be an object")
    fam = raw.get("family", {})
    _require(isinstance(fam, Mapping), "family must be an object")
    flavor = fam.get("flavor", "SobolevHk")
    _require(flavor in ("SobolevHk", "SupCk"), f"unknown flavor {flavor!r}")
    k_max = fam.get("k_max", 12)
    _require(isinstance(k_max, int) and 2 <= k_max <= 16, "k_max must be an integer in 2..16")
    n_grid = raw.get("n_grid", 128)
    _require(isinstance(n_grid, int) and n_grid >= 8 and n_grid % 2 == 0,
             "n_grid must be an even integer >= 8")
    k0 = raw.get("k0")
    _require(k0 is None or (isinstance(k0, int) and k0 >= 0), "k0 must be a non-negative integer")
    suites = raw.get("suites", [])
    _require(isinstance(suites, list) and all(s in SUITES for s in suites),
             f"suites must be a list drawn from {list(SUITES)}")
    seed = raw.get("seed", 0)
    _require(isinstance(seed, int), "seed must be an integer")
    scale = raw.get("m_prime_scale", 1.0)
    _require(isinstance(scale, (int, float)) and scale > 0, "m_prime_scale must be positive")
    for key in ("solver", "target", "constants", "bench", "min_pass_rate"):
        _require(isinstance(raw.get(key, {}), Mapping), f"{key} must be an object")
    samples = raw.get("samples", 20)
    _require(isinstance(samples, int) and samples >= 1, "samples must be a positive integer")
    workers = raw.get("workers", 1)
    _require(isinstance(workers, int) and workers >= 1, "workers must be a positive integer")
    return ExperimentConfig(
        problem=prob["name"], problem_params=dict(params), flavor=flavor, k_max=k_max,
        n_grid=n_grid, k0=k0, solver=dict(raw.get("solver", {})),
        target=dict(raw.get("target", {})), constants=dict(raw.get("constants", {})),
        m_prime_scale=float(scale), suites=list(suites), samples=samples,
        min_pass_rate=dict(raw.get("min_pass_rate", {})), bench=dict(raw.get("bench", {})),
        seed=seed, out=str(raw.get("out", "out")), workers=workers)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    return parse_config(raw)


def element_from_spec(spec: Mapping, n_grid: int) -> GradedElement:
    """``{"sin": {m: a}, "cos": {m: b}, "const": c}`` as a trigonometric polynomial."""
    try:
        sin = {int(m): float(a) for m, a in spec.get("sin", {}).items()}
        cos = {int(m): float(a) for m, a in spec.get("cos", {}).items()}
        const = float(spec.get("const", 0.0))
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"bad element spec: {exc}") from exc
    unknown = set(spec) - {"sin", "cos", "const"}
    _require(not unknown, f"unknown element keys {sorted(unknown)}")
    _require(all(0 < m < n_grid // 2 for m in (*sin, *cos)), "modes must lie in 1..n_grid/2-1")
    return trig_element(n_grid, sin=sin, cos=cos, const=const)


def build_problem(cfg: ExperimentConfig) -> TameProblem:
    params = dict(cfg.problem_params)
    if cfg.k0 is not None:
        params["k0"] = cfg.k0
    try:
        p = make_problem(cfg.problem, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot build problem: {exc}") from exc
    _require(cfg.family.supports(p.k0, p.d1, p.d2), "k_max is too small for k0 + d1 + d2")
    if not p.has_constants:
        est = estimate_tame_constants(p, cfg.family, seed=cfg.constants.get("seed", cfg.seed),
                                      probe_count=cfg.constants.get("probe_count", 32),
                                      n_grid=cfg.n_grid)
        p = p.with_constants(est.m, est.m_prime)
    if cfg.m_prime_scale != 1.0:
        p = p.with_constants(p.m, np.asarray(p.m_prime) * cfg.m_prime_scale)
    return p


def cmd_solve(cfg: ExperimentConfig, out: Path) -> int:
    p = build_problem(cfg)
    y = element_from_spec(cfg.target or {"sin": {"1": 0.1}}, cfg.n_grid)
    rep = solve(p, y, cfg.solve_options(), cfg.family)
    rep.write(out, p.k0 + p.d2)
    print(f"{rep.status.value}: {rep.iterations} iterations"
          + (f" ({rep.message})" if rep.message else ""))
    return 0 if rep.status is Status.SOLVED else 1


def cmd_verify(cfg: ExperimentConfig, out: Path) -> int:
    if not cfg.suites:
        write_csv(out / "verify.csv", SUITE_CSV_HEADER, [])
        (out / "verify_summary.json").write_text(json.dumps({"passed": True, "checks": {}},
                                                            indent=2) + "\n")
        print("no suites selected")
        return 0
    p = build_problem(cfg)
    opts = cfg.solve_options()
    res = run_suite(p, cfg.family, cfg.suites, seed=cfg.seed, samples=cfg.samples,
                    n_grid=cfg.n_grid, opts=opts, workers=cfg.workers)
    res.write(out, cfg.min_pass_rate)
    for name, rate in res.pass_rates().items():
        print(f"{name}: pass rate {rate:.3f}")
    return 0 if res.passed(cfg.min_pass_rate) else 1


def cmd_estimate(cfg: ExperimentConfig, out: Path) -> int:
    params = dict(cfg.problem_params)
    if cfg.k0 is not None:
        params["k0"] = cfg.k0
    try:
        p = make_problem(cfg.problem, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot build problem: {exc}") from exc
    est = estimate_tame_constants(p, cfg.family, seed=cfg.constants.get("seed", cfg.seed),
                                  probe_count=cfg.constants.get("probe_count", 32),
                                  n_grid=cfg.n_grid)
    est.write_csv(out / "constants.csv")
    print(f"growing indices: {est.growing_k()}")
    return 0


def cmd_bench(cfg: ExperimentConfig, out: Path) -> int:
    b = cfg.bench
    ceiling = float(b.get("ceiling", 0.1))
    steps = int(b.get("steps", 8))
    methods = list(b.get("methods", ["descent", "newton"]))
    _require(all(m in ("descent", "newton") for m in methods), "bench methods: descent, newton")
    _require(ceiling >= 0 and steps >= 0, "bench ceiling and steps must be non-negative")
    if ceiling == 0 or not methods:
        write_csv(out / "bench.csv", BENCH_HEADER, [])
        write_csv(out / "bench_points.csv", BENCH_POINTS_HEADER, [])
        print("empty sweep")
        return 0
    p = build_problem(cfg)
    d = element_from_spec(b.get("direction", {"sin": {"1": 1.0}}), cfg.n_grid)
    opts = cfg.solve_options()

    def run(method):
        return admissible_amplitude(p, cfg.family, opts, method, d, ceiling, steps)

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(run, methods))
    table = [(m, c) for m, (c, _) in zip(methods, results)]
    points = sorted((q["method"], q["c"], q["status"], q["iterations"], q["residual"])
                    for _, pts in results for q in pts)
    write_csv(out / "bench.csv", BENCH_HEADER, table)
    write_csv(out / "bench_points.csv", BENCH_POINTS_HEADER, points)
    for m, c in table:
        print(f"{m}: c_max = {c!r}")
    return 0


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "estimate": cmd_estimate,
            "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tameinv", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="path to a JSON experiment config")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out", help="override the output directory")
    ap.add_argument("--workers", type=int, help="concurrent sweep points")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.workers is not None:
            _require(args.workers >= 1, "--workers must be positive")
            cfg.workers = args.workers
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
