"""Check results and verification reports."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    horizon: float | None = None
    detail: str = ""
    seconds: float = 0.0

    @classmethod
    def bound(cls, name, residual, tolerance, **kw) -> "CheckResult":
        """Pass iff ``residual <= tolerance``."""
        residual = float(residual)
        return cls(name, bool(residual <= tolerance), residual, float(tolerance), **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VerificationReport:
    fixture: str
    fingerprint: str
    seeds: int
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_dict(self, timing: bool = True) -> dict:
        rows = []
        for r in self.rows:
            d = r.to_dict()
            if not timing:
                d.pop("seconds")
            rows.append(d)
        return {
            "fixture": self.fixture,
            "fingerprint": self.fingerprint,
            "seeds": self.seeds,
            "passed": self.passed,
            "checks": rows,
        }

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)

    def summary_table(self) -> str:
        head = f"{'check':<22} {'horizon':>8} {'status':>6} {'residual':>11} {'tol':>9}"
        lines = [f"fixture {self.fixture} [{self.fingerprint}]  seeds={self.seeds}", head,
                 "-" * len(head)]
        for r in self.rows:
            hz = "-" if r.horizon is None else f"{r.horizon:g}"
            status = "PASS" if r.passed else "FAIL"
            lines.append(
                f"{r.name:<22} {hz:>8} {status:>6} {r.residual:>11.3e} {r.tolerance:>9.1e}"
            )
        n_fail = sum(not r.passed for r in self.rows)
        lines.append(f"{len(self.rows) - n_fail}/{len(self.rows)} checks passed")
        return "\n".join(lines)
