"""Verifier output shared by every check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


@dataclass
class CheckReport:
    """Outcome of one verification.

    ``worst_margin`` is signed (negative means violated);
    ``verdict == "fail"`` exactly when ``worst_margin < -tolerance``.
    """

    verdict: str
    worst_margin: float | None
    tolerance: float
    samples: int
    witness: dict | None = None
    notes: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    precondition_failed: bool = False

    @classmethod
    def from_margin(cls, margin: float, tolerance: float, samples: int,
                    witness: dict | None = None, **kw) -> "CheckReport":
        margin = float(margin)
        if math.isnan(margin):
            return cls(INCONCLUSIVE, None, tolerance, samples, witness, **kw)
        verdict = FAIL if margin < -tolerance else PASS
        return cls(verdict, margin, tolerance, samples, witness, **kw)

    @classmethod
    def inconclusive(cls, tolerance: float, samples: int = 0, note: str = "", **kw) -> "CheckReport":
        notes = [note] if note else []
        return cls(INCONCLUSIVE, None, tolerance, samples, None, notes, **kw)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL

    def to_dict(self) -> dict:
        return _plain({
            "verdict": self.verdict,
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "witness": self.witness,
            "precondition_failed": self.precondition_failed,
            "notes": list(self.notes),
            "details": self.details,
        })
