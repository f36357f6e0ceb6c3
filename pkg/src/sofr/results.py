"""Common return type of every hypothesis test."""

from __future__ import annotations

from dataclasses import dataclass, field

from .exceptions import InvalidArgument

HYPOTHESES = ("H01", "H02")
HYPOTHESIS_ALIASES = {"linear": "H01", "linearity": "H01", "null": "H02", "nullity": "H02"}


def normalize_hypothesis(h: str) -> str:
    h = HYPOTHESIS_ALIASES.get(h, h)
    if h not in HYPOTHESES:
        raise InvalidArgument(f"unknown hypothesis {h!r}; use H01 (linearity) or H02 (nullity)")
    return h


@dataclass(frozen=True)
class TestResult:
    """Outcome of one test on one dataset.

    ``details`` carries method-specific diagnostics such as degrees of
    freedom, bootstrap size or fitted variance components.
    """

    __test__ = False  # keep pytest from collecting this class

    method: str
    hypothesis: str
    statistic: float
    p_value: float
    df: float | None = None
    details: dict = field(default_factory=dict)

    def rejects(self, alpha: float) -> bool:
        return self.p_value <= alpha
