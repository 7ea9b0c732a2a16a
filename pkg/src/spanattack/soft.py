"""Soft-label attack: zeroth-order gradient estimation plus projected normalized descent.

Both estimators average finite differences of the margin loss along random
unit directions; they differ only in the coefficient distribution (Gaussian
for RGF, Rademacher for SPSA). With a subspace configured, every direction
and hence every iterate lies in that subspace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attack import AttackResult, project_l2_ball, require_correct
from .errors import BudgetExhausted, InputError
from .models import LabeledInstance, QueryCounter, QueryOracle
from .subspace import IsometricSampler, SubspaceBasis, unit_direction_in_subspace

ESTIMATORS = {"rgf": "gaussian", "spsa": "rademacher"}


@dataclass
class AttackConfig:
    epsilon: float
    budget: int = 10_000
    estimator: str = "rgf"
    q: int = 10
    sigma: float | None = None  # default 1e-4 * sqrt(D)
    step_size: float | None = None  # default epsilon / 10
    subspace: SubspaceBasis | None = None
    seed: int = 0
    random_init: bool = False
    record_trace: bool = False

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise InputError(f"estimator must be one of {sorted(ESTIMATORS)}")
        if self.q < 1 or self.budget < 1:
            raise InputError("q and budget must be >= 1")
        if self.epsilon <= 0:
            raise InputError("epsilon must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise InputError("sigma must be positive")
        if self.step_size is not None and self.step_size <= 0:
            raise InputError("step_size must be positive")

    def resolved_sigma(self, dim: int) -> float:
        return self.sigma if self.sigma is not None else 1e-4 * np.sqrt(dim)

    def resolved_step(self) -> float:
        return self.step_size if self.step_size is not None else self.epsilon / 10


def margin_loss(scores, y: int) -> float:
    """scores[y] minus the best other score; nonpositive iff (weakly) misclassified."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] < 2:
        raise InputError("margin loss needs at least two classes")
    others = np.delete(scores, y)
    return float(scores[y] - others.max())


def _estimate(oracle: QueryOracle, x, y, config: AttackConfig, sampler: IsometricSampler) -> np.ndarray:
    q = config.q
    if oracle.remaining < q + 1:
        raise BudgetExhausted(f"estimate needs {q + 1} queries, {oracle.remaining} left")
    dim = x.shape[0]
    sigma = config.resolved_sigma(dim)
    base = margin_loss(oracle.soft(x), y)
    g = np.zeros(dim)
    for _ in range(q):
        u = unit_direction_in_subspace(config.subspace, sampler, dim)
        g += (margin_loss(oracle.soft(x + sigma * u), y) - base) / sigma * u
    return g / q


def rgf_estimate(oracle: QueryOracle, x, y, config: AttackConfig, sampler: IsometricSampler | None = None):
    """Gaussian-direction estimate; costs exactly q + 1 soft queries."""
    if sampler is None:
        sampler = IsometricSampler("gaussian", config.seed)
    if sampler.kind != "gaussian":
        raise InputError("rgf needs a gaussian sampler")
    return _estimate(oracle, np.asarray(x, dtype=np.float64), y, config, sampler)


def spsa_estimate(oracle: QueryOracle, x, y, config: AttackConfig, sampler: IsometricSampler | None = None):
    """As rgf_estimate, with Rademacher coefficients."""
    if sampler is None:
        sampler = IsometricSampler("rademacher", config.seed)
    if sampler.kind != "rademacher":
        raise InputError("spsa needs a rademacher sampler")
    return _estimate(oracle, np.asarray(x, dtype=np.float64), y, config, sampler)


def soft_label_attack(model, instance: LabeledInstance, config: AttackConfig,
                      counter: QueryCounter | None = None) -> AttackResult:
    """Untargeted l2 soft-label attack within ``config.budget`` queries.

    Each iteration spends one hard query on the success check and q + 1 soft
    queries on the gradient estimate. The initial correctness check doubles
    as the success check for the starting perturbation.
    """
    x = np.asarray(instance.x, dtype=np.float64)
    y = instance.y
    dim = x.shape[0]
    oracle = QueryOracle(model, budget=config.budget, counter=counter or QueryCounter())
    sampler = IsometricSampler(ESTIMATORS[config.estimator], config.seed)
    step = config.resolved_step()
    eps = config.epsilon

    require_correct(oracle, x, y)
    delta = np.zeros(dim)
    if config.random_init:
        delta = 0.5 * eps * unit_direction_in_subspace(config.subspace, sampler, dim)
    trace = [delta.copy()] if config.record_trace else []
    iterations = 0
    checked = not config.random_init

    def result(success, reason):
        return AttackResult(success, delta.copy() if success else None, oracle.used, iterations, reason, trace)

    try:
        while True:
            if not checked:
                if oracle.hard(x + delta) != y:
                    return result(True, "")
            checked = False
            if oracle.remaining < config.q + 1:
                break
            g = _estimate(oracle, x + delta, y, config, sampler)
            gnorm = np.linalg.norm(g)
            if gnorm == 0.0 and oracle.remaining >= config.q + 1:
                g = _estimate(oracle, x + delta, y, config, sampler)
                gnorm = np.linalg.norm(g)
            iterations += 1
            if gnorm == 0.0:
                checked = True  # delta unchanged, no need to re-check
                if oracle.remaining < config.q + 1:
                    break
                continue
            delta = project_l2_ball(delta - step * g / gnorm, eps)
            if config.record_trace:
                trace.append(delta.copy())
    except BudgetExhausted:
        pass
    return result(False, "budget-exhausted")
