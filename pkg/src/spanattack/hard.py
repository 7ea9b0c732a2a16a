"""Hard-label attacks: the boundary attack (random walk) and Sign-OPT.

All random vectors come from ``unit_direction_in_subspace``, so with a basis
configured every initialization, proposal and iterate stays in that subspace.
Setting ``early_stop=False`` keeps optimizing until the budget is spent and
reports the smallest adversarial perturbation found; success then means that
perturbation is within epsilon.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .attack import AttackResult, require_correct
from .errors import BudgetExhausted, InputError
from .models import LabeledInstance, QueryCounter, QueryOracle
from .subspace import IsometricSampler, SubspaceBasis, unit_direction_in_subspace

NO_BOUNDARY = math.inf  # g(theta) when no adversarial point exists along theta up to t_max


@dataclass
class BoundaryConfig:
    epsilon: float
    budget: int = 10_000
    seed: int = 0
    subspace: SubspaceBasis | None = None
    orth_step: float = 0.01
    toward_step: float = 0.01
    adapt_window: int = 30
    init_max_tries: int = 200
    target_rate: float = 0.25
    adapt_factor: float = 1.5
    early_stop: bool = True
    record_trace: bool = False

    def __post_init__(self):
        if not (0 < self.orth_step < 1 and 0 < self.toward_step < 1):
            raise InputError("step sizes must lie in (0, 1)")
        if min(self.adapt_window, self.init_max_tries, self.budget) < 1:
            raise InputError("counts must be >= 1")
        if self.epsilon <= 0:
            raise InputError("epsilon must be positive")


@dataclass
class SignOptConfig:
    epsilon: float
    budget: int = 10_000
    seed: int = 0
    subspace: SubspaceBasis | None = None
    q: int = 10
    search_tol: float = 1e-3
    step_size: float = 0.2
    init_directions: int = 20
    smoothing: float = 1e-2
    t_max_factor: float = 100.0
    line_search_steps: int = 5
    early_stop: bool = True
    record_trace: bool = False

    def __post_init__(self):
        if self.q < 1 or self.init_directions < 1 or self.budget < 1:
            raise InputError("q, init_directions and budget must be >= 1")
        if self.search_tol <= 0 or self.epsilon <= 0 or self.step_size <= 0:
            raise InputError("search_tol, epsilon and step_size must be positive")


def _finish(oracle, best, eps, iterations, reason, trace):
    success = best is not None and bool(np.linalg.norm(best) <= eps * (1 + 1e-12))
    return AttackResult(success, None if best is None else best.copy(), oracle.used, iterations,
                        "" if success else reason, trace)


# ---------------------------------------------------------------- boundary attack


def boundary_attack(model, instance: LabeledInstance, config: BoundaryConfig,
                    counter: QueryCounter | None = None) -> AttackResult:
    x = np.asarray(instance.x, dtype=np.float64)
    y = instance.y
    dim = x.shape[0]
    eps = config.epsilon
    oracle = QueryOracle(model, budget=config.budget, counter=counter or QueryCounter())
    sampler = IsometricSampler("gaussian", config.seed)
    basis = config.subspace
    trace = []
    best = None
    iterations = 0

    def adversarial(d):
        return oracle.hard(x + d) != y

    try:
        require_correct(oracle, x, y)

        for t in range(config.init_max_tries):
            d = eps * 1.1**t * unit_direction_in_subspace(basis, sampler, dim)
            if adversarial(d):
                best = d
                break
        else:
            return AttackResult(False, None, oracle.used, 0, "init-failed", trace)

        # pull the starting point toward x along the segment; hi stays adversarial
        lo, hi = 0.0, 1.0
        while hi - lo > 1e-3 * hi:
            mid = 0.5 * (lo + hi)
            if adversarial(mid * best):
                hi = mid
            else:
                lo = mid
        d = hi * best
        best = d
        if config.record_trace:
            trace.append(d.copy())

        orth, toward = config.orth_step, config.toward_step
        orth_hist = deque(maxlen=config.adapt_window)
        toward_hist = deque(maxlen=config.adapt_window)
        while not (config.early_stop and np.linalg.norm(d) <= eps):
            iterations += 1
            r = np.linalg.norm(d)
            eta = unit_direction_in_subspace(basis, sampler, dim)
            eta -= (eta @ d) / (r * r) * d
            en = np.linalg.norm(eta)
            if en == 0.0:
                continue
            sphere = d + (orth * r / en) * eta
            sphere *= r / np.linalg.norm(sphere)
            ok = adversarial(sphere)
            orth_hist.append(ok)
            if ok:
                cand = (1.0 - toward) * sphere
                ok = adversarial(cand)
                toward_hist.append(ok)
                if ok:
                    d = cand
                    best = d
                    if config.record_trace:
                        trace.append(d.copy())
            if len(orth_hist) == config.adapt_window:
                orth = _adapt(orth, orth_hist, config)
                orth_hist.clear()
            if len(toward_hist) == config.adapt_window:
                toward = _adapt(toward, toward_hist, config)
                toward_hist.clear()
    except BudgetExhausted:
        pass
    return _finish(oracle, best, eps, iterations, "budget-exhausted", trace)


def _adapt(step, history, config):
    rate = sum(history) / len(history)
    step = step * config.adapt_factor if rate > config.target_rate else step / config.adapt_factor
    return min(step, 0.5)


# ---------------------------------------------------------------- Sign-OPT


def signopt_g_eval(oracle: QueryOracle, instance: LabeledInstance, theta, config: SignOptConfig) -> float:
    """Distance from x to the decision boundary along ``theta``.

    Doubles from epsilon until an adversarial point is hit (up to
    ``t_max_factor * epsilon``), then bisects to relative tolerance
    ``search_tol``. The returned distance is on the adversarial side.
    Returns ``NO_BOUNDARY`` when nothing adversarial is found.
    """
    x = np.asarray(instance.x, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    n = np.linalg.norm(theta)
    if n == 0.0:
        raise InputError("theta must be nonzero")
    u = theta / n
    y = instance.y
    t_max = config.t_max_factor * config.epsilon
    t = min(config.epsilon, t_max)
    lo = 0.0
    while oracle.hard(x + t * u) == y:
        if t >= t_max:
            return NO_BOUNDARY
        lo = t
        t = min(2.0 * t, t_max)
    return _bisect(oracle, x, y, u, lo, t, config.search_tol)


def _bisect(oracle, x, y, u, lo, hi, tol):
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if oracle.hard(x + mid * u) != y:
            hi = mid
        else:
            lo = mid
    return hi


def _g_below(oracle, x, y, u, upper, tol):
    """Boundary distance along unit ``u`` if it is below ``upper``, else NO_BOUNDARY."""
    if oracle.hard(x + upper * u) == y:
        return NO_BOUNDARY
    hi, shrink = upper, 0.01
    while True:
        lo = hi * (1.0 - shrink)
        if oracle.hard(x + lo * u) == y:
            break
        hi, shrink = lo, min(2.0 * shrink, 0.5)
    return _bisect(oracle, x, y, u, lo, hi, tol)


def signopt_attack(model, instance: LabeledInstance, config: SignOptConfig,
                   counter: QueryCounter | None = None) -> AttackResult:
    x = np.asarray(instance.x, dtype=np.float64)
    y = instance.y
    dim = x.shape[0]
    eps = config.epsilon
    oracle = QueryOracle(model, budget=config.budget, counter=counter or QueryCounter())
    sampler = IsometricSampler("gaussian", config.seed)
    basis = config.subspace
    tol = config.search_tol
    trace = []
    best = None
    iterations = 0
    theta, g = None, NO_BOUNDARY

    def record():
        nonlocal best
        best = g * theta
        if config.record_trace:
            trace.append(best.copy())

    try:
        require_correct(oracle, x, y)

        for _ in range(config.init_directions):
            u = unit_direction_in_subspace(basis, sampler, dim)
            if g == NO_BOUNDARY:
                gu = signopt_g_eval(oracle, instance, u, config)
            else:
                gu = _g_below(oracle, x, y, u, g, tol)
            if gu < g:
                theta, g = u, gu
                record()
        if theta is None:
            return AttackResult(False, None, oracle.used, 0, "no-adversarial-direction", trace)

        alpha = config.step_size
        while not (config.early_stop and g <= eps):
            iterations += 1
            grad = np.zeros(dim)
            for _ in range(config.q):
                u = unit_direction_in_subspace(basis, sampler, dim)
                probe = theta + config.smoothing * u
                probe /= np.linalg.norm(probe)
                grad += u if oracle.hard(x + g * probe) == y else -u
            grad /= config.q

            improved = False
            for _ in range(config.line_search_steps):
                cand = theta - alpha * grad
                cand /= np.linalg.norm(cand)
                gc = _g_below(oracle, x, y, cand, g, tol)
                if gc < g:
                    theta, g = cand, gc
                    improved = True
                    record()
                    break
                alpha *= 0.5
            if improved:
                # keep stretching the step while it pays off
                for _ in range(config.line_search_steps):
                    cand = theta - alpha * grad
                    cand /= np.linalg.norm(cand)
                    gc = _g_below(oracle, x, y, cand, g, tol)
                    if gc >= g:
                        break
                    theta, g = cand, gc
                    record()
                    alpha *= 2.0
            else:
                alpha = max(alpha, 1e-4)
    except BudgetExhausted:
        pass
    return _finish(oracle, best, eps, iterations, "budget-exhausted", trace)
