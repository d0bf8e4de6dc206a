"""Small value types and CSV helpers used by several modules."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one bound check: ``passed`` iff ``observed <= bound + tol``."""

    name: str
    passed: bool
    observed: float
    bound: float
    margin: float
    context: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def upper(cls, name: str, observed: float, bound: float, tol: float = 0.0,
              **context: Any) -> "CheckResult":
        observed = float(observed)
        bound = float(bound)
        ok = bool(math.isfinite(observed) and observed <= bound + tol)
        return cls(name, ok, observed, bound, bound - observed, dict(context))

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "observed": self.observed,
            "bound": self.bound,
            "margin": self.margin,
            "context": _jsonable(self.context),
        }


def fmt(value: Any) -> str:
    """Render a CSV cell; floats use ``repr`` so output is exact and reproducible."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):  # numpy scalar
        return fmt(value.item())
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows))
    return path


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):  # Enum
        return obj.value
    return obj


jsonable = _jsonable
