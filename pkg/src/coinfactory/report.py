"""Check results and verification reports.

Plain data carriers shared by the scheme validator and the oracle module; kept
separate so both can import them without a dependency cycle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

__all__ = ["CheckResult", "OracleReport"]


def _jsonable(value: Any) -> Any:
    if isinstance(value, Fraction):
        return {"num": value.numerator, "den": value.denominator}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one verification check.

    name          short stable identifier of the check
    passed        True when no violation was found
    checked       number of index tuples / grid points examined
    violations    number of failures among them
    worst         most extreme residual seen (sign convention per check)
    detail        free-form context: index of the worst case, grids used, ...
    """

    name: str
    passed: bool
    checked: int
    violations: int = 0
    worst: Any = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "violations": self.violations,
            "worst": _jsonable(self.worst),
            "detail": _jsonable(self.detail),
        }


@dataclass(frozen=True)
class OracleReport:
    """Bundle of check results with an overall verdict."""

    subject: str
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def summary_lines(self) -> list[str]:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            extra = f" violations={c.violations}" if c.violations else ""
            worst = "" if c.worst is None else f" worst={c.worst}"
            lines.append(f"[{status}] {c.name}: checked={c.checked}{extra}{worst}")
        return lines
