"""Parameters of the three-mode triad model."""
from dataclasses import dataclass, astuple


class StructureError(ValueError):
    """Model parameters violate a structural constraint."""


@dataclass(frozen=True)
class TriadParams:
    """Damping d, dispersion L, coupling B, forcing F and noise s of the triad model."""
    d1: float
    d2: float
    d3: float
    L1: float
    L2: float
    L3: float
    B1: float
    B2: float
    B3: float
    F1: float
    F2: float
    F3: float
    s1: float
    s2: float
    s3: float

    def __post_init__(self) -> None:
        coupling = (self.B1, self.B2, self.B3)
        scale = max(1.0, *(abs(b) for b in coupling))
        if abs(sum(coupling)) > 1e-12 * scale:
            raise StructureError(
                f"Triad coupling must satisfy B1 + B2 + B3 = 0, got {coupling} (sum {sum(coupling)})"
            )
        if min(self.d1, self.d2, self.d3) <= 0:
            raise StructureError(f"Triad damping rates must be positive, got {(self.d1, self.d2, self.d3)}")

    def as_tuple(self) -> tuple[float, ...]:
        return astuple(self)

    @classmethod
    def from_vectors(cls, d, L, B, F, s) -> "TriadParams":
        """Build from five length-3 sequences (d, L, B, F, sigma)."""
        values = [float(x) for group in (d, L, B, F, s) for x in group]
        if len(values) != 15:
            raise StructureError("Triad parameters need five groups of three values")
        return cls(*values)
