"""Pieces shared by the soft- and hard-label attacks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotCorrectlyClassified
from .models import QueryOracle


@dataclass
class AttackResult:
    success: bool
    perturbation: np.ndarray | None
    queries_used: int
    iterations: int
    reason: str = ""
    trace: list = field(default_factory=list, repr=False)

    @property
    def norm(self) -> float | None:
        return None if self.perturbation is None else float(np.linalg.norm(self.perturbation))


def project_l2_ball(delta: np.ndarray, radius: float) -> np.ndarray:
    n = np.linalg.norm(delta)
    if n <= radius:
        return delta
    return delta * (radius / n)


def require_correct(oracle: QueryOracle, x, y) -> None:
    """One counted hard query confirming ``x`` is classified as ``y``."""
    label = oracle.hard(x)
    if label != y:
        raise NotCorrectlyClassified(f"instance predicted as {label}, true label {y}")
