"""Itemized pass/fail report."""
from dataclasses import dataclass, field


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    """Collection of named checks; passes iff every check passes."""
    subject: str
    checks: list[ValidationCheck] = field(default_factory=list)
    flags: dict[str, object] = field(default_factory=dict)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(ValidationCheck(name, bool(passed), "" if passed else detail))

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> list[ValidationCheck]:
        return [check for check in self.checks if not check.passed]

    def reasons(self) -> list[str]:
        return [f"{check.name}: {check.detail}" if check.detail else check.name for check in self.failures()]

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "flags": dict(self.flags),
        }
