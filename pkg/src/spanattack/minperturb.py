"""Exact minimum l2 adversarial perturbations for K-NN and linear SVM targets.

The K-NN case reduces to one convex QP per candidate neighbour set T:

    min 1/2 |delta|^2  s.t.  A delta <= b,
    rows (x_neg - x_pos) . delta <= 1/2 (|x - x_neg|^2 - |x - x_pos|^2)

for every x_pos in T and x_neg outside T. ``solve_qp`` treats it as a
least-distance program and solves that through nonnegative least squares
(Lawson & Hanson, ch. 23), which also yields the dual multipliers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import EnumerationGuardError, InputError, NoAdversaryError, NotCorrectlyClassified
from .linalg import project_onto_span
from .subspace import SubspaceBasis

ENUMERATION_GUARD = 10**6


@dataclass(frozen=True)
class QpProblem:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64, ndmin=2)
        b = np.array(self.b, dtype=np.float64, ndmin=1)
        if A.shape[0] < 1 or b.shape != (A.shape[0],):
            raise InputError(f"A has shape {A.shape} but b has shape {b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InputError("QP data must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class QpSolution:
    delta: np.ndarray | None
    lam: np.ndarray | None
    objective: float | None
    status: str  # "optimal" | "infeasible"

    def kkt_residuals(self, problem: QpProblem) -> dict:
        """Worst violation of each KKT condition (all zero at an exact optimum)."""
        A, b, d, lam = problem.A, problem.b, self.delta, self.lam
        slack = A @ d - b
        return {
            "primal": float(max(0.0, slack.max())),
            "dual": float(max(0.0, -lam.min())),
            "stationarity": float(np.linalg.norm(d + A.T @ lam) / max(1.0, np.linalg.norm(d))),
            "complementarity": float(np.max(np.abs(lam * slack))),
        }

    def certified(self, problem: QpProblem, tol=1e-8) -> bool:
        if self.status != "optimal":
            return False
        r = self.kkt_residuals(problem)
        return r["primal"] <= tol and r["dual"] <= 1e-10 and r["stationarity"] <= tol and r["complementarity"] <= tol


def nnls(E, f, max_iter=None):
    """Lawson-Hanson active-set solver for min |E u - f| subject to u >= 0."""
    E = np.asarray(E, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    m, n = E.shape
    max_iter = max_iter or 3 * n + 30
    u = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    tol = 10 * np.finfo(float).eps * np.linalg.norm(E, 1) * max(m, n)
    w = E.T @ f
    for _ in range(max_iter):
        free = ~passive
        if not free.any() or w[free].max() <= tol:
            break
        j = np.flatnonzero(free)[np.argmax(w[free])]
        passive[j] = True
        while True:
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(E[:, passive], f, rcond=None)[0]
            if np.all(z[passive] > 0):
                u = z
                break
            mask = passive & (z <= 0)
            alpha = np.min(u[mask] / (u[mask] - z[mask]))
            u = u + alpha * (z - u)
            passive &= u > tol
            u[~passive] = 0.0
            if not passive.any():
                break
        w = E.T @ (f - E @ u)
    return u


def solve_qp(problem: QpProblem) -> QpSolution:
    """Minimum-norm point of {delta : A delta <= b} with its dual multipliers."""
    A, b = problem.A, problem.b
    d = A.shape[1]
    # Least-distance form: G delta >= h with G = -A, h = -b.
    E = np.vstack([-A.T, -b[None, :]])
    f = np.zeros(d + 1)
    f[-1] = 1.0
    u = nnls(E, f)
    r = E @ u - f
    denom = -r[-1]  # = 1 + b.u
    if np.linalg.norm(r) <= 1e-10 or denom <= 1e-12:
        return QpSolution(None, None, None, "infeasible")
    lam = u / denom
    delta = -A.T @ lam
    lam, delta = _polish(A, b, lam, delta)
    if np.max(A @ delta - b) > 1e-8 * max(1.0, np.abs(b).max()):
        return QpSolution(None, None, None, "infeasible")
    return QpSolution(delta, lam, 0.5 * float(delta @ delta), "optimal")


def _polish(A, b, lam, delta):
    """Re-solve the equality system on the active set for a tighter certificate."""
    active = lam > 1e-12 * max(1.0, lam.max(initial=0.0))
    if not active.any():
        return np.zeros_like(lam), np.zeros(A.shape[1])
    Aa = A[active]
    la = np.linalg.lstsq(Aa @ Aa.T, -b[active], rcond=None)[0]
    if np.any(la < 0):
        return lam, delta
    new_lam = np.zeros_like(lam)
    new_lam[active] = la
    new_delta = -A.T @ new_lam
    old_viol = max(0.0, np.max(A @ delta - b))
    new_viol = max(0.0, np.max(A @ new_delta - b))
    if new_viol <= old_viol + 1e-15:
        return new_lam, new_delta
    return lam, delta


def knn_constraints(train_x, x, neighbor_set) -> QpProblem:
    """QP rows forcing ``neighbor_set`` to be the K nearest neighbours of x + delta.

    Zero rows (coincident training points) and duplicate rows are removed.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    inside = np.zeros(train_x.shape[0], dtype=bool)
    inside[list(neighbor_set)] = True
    pos, neg = train_x[inside], train_x[~inside]
    d2 = np.sum((train_x - x) ** 2, axis=1)
    A = (neg[None, :, :] - pos[:, None, :]).reshape(-1, train_x.shape[1])
    b = (0.5 * (d2[~inside][None, :] - d2[inside][:, None])).reshape(-1)
    A, b = _dedupe_rows(A, b)
    return QpProblem(A, b)


def strict_witness(problem: QpProblem, margin=1e-6) -> np.ndarray | None:
    """Minimum-norm point satisfying every constraint with slack ``margin * max(1, |b|_inf)``.

    The QP optimum sits on the boundary where classification ties; this
    point is strictly inside and within O(margin) of it.
    """
    tight = QpProblem(problem.A, problem.b - margin * max(1.0, float(np.abs(problem.b).max())))
    sol = solve_qp(tight)
    return sol.delta if sol.status == "optimal" else None


def _dedupe_rows(A, b):
    keep = np.any(A != 0.0, axis=1) | (b < 0)
    A, b = A[keep], b[keep]
    if A.shape[0] == 0:
        return np.zeros((1, A.shape[1])), np.zeros(1)
    _, idx = np.unique(np.column_stack([A, b]), axis=0, return_index=True)
    idx.sort()
    return A[idx], b[idx]


def _vote(labels, classes):
    return int(np.argmax(np.bincount(labels, minlength=classes)))


def knn_min_perturbation(train_x, train_y, x, y, k, guard=ENUMERATION_GUARD):
    """Exhaustive minimum perturbation of a K-NN classifier at ``(x, y)``.

    Every K-subset T whose vote differs from y is considered. A subset is
    skipped without solving its QP only when a single violated constraint
    already certifies a lower bound above the incumbent. Returns
    ``(delta_star, T)`` with T as a tuple of training indices. delta_star is
    the infimum: it lies on the decision boundary, where ties may resolve
    either way.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    x = np.asarray(x, dtype=np.float64)
    n = train_x.shape[0]
    classes = int(max(train_y.max(), y) + 1)
    if not 1 <= k <= n:
        raise InputError(f"k must lie in [1, {n}]")
    if comb(n, k) > guard:
        raise EnumerationGuardError(f"C({n}, {k}) = {comb(n, k)} exceeds guard {guard}")
    d2 = np.sum((train_x - x) ** 2, axis=1)
    if _vote(train_y[np.argsort(d2, kind="stable")[:k]], classes) != y:
        raise NotCorrectlyClassified("instance is not correctly classified by the K-NN model")
    if np.all(train_y == y):
        raise NoAdversaryError("every training label equals the true label")

    # Per-row lower bound on |delta|: distance from 0 to a violated halfspace.
    half_gap = 0.5 * (d2[None, :] - d2[:, None])  # half_gap[p, m]
    sq = np.sum(train_x**2, axis=1)
    row_norm = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * train_x @ train_x.T, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        row_bound = np.where((half_gap < 0) & (row_norm > 0), -half_gap / row_norm, 0.0)
    row_bound *= 1.0 - 1e-9  # slack for rounding in row_norm

    best_norm, best_delta, best_set = np.inf, None, None
    for subset in itertools.combinations(range(n), k):
        if _vote(train_y[list(subset)], classes) == y:
            continue
        inside = np.zeros(n, dtype=bool)
        inside[list(subset)] = True
        lower = row_bound[np.ix_(inside, ~inside)].max(initial=0.0)
        if lower >= best_norm:
            continue
        sol = solve_qp(knn_constraints(train_x, x, subset))
        if sol.status != "optimal":
            continue
        norm = float(np.linalg.norm(sol.delta))
        if norm < best_norm:
            best_norm, best_delta, best_set = norm, sol.delta, subset
    if best_delta is None:
        raise NoAdversaryError("no candidate neighbour set admits a feasible perturbation")
    return best_delta, tuple(int(i) for i in best_set)


def svm_min_perturbation(w, b, x):
    """Closed-form boundary-reaching perturbation of a binary linear SVM, along -+w."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    ww = float(w @ w)
    if ww == 0.0:
        raise InputError("w must be nonzero")
    return -((float(w @ x) + float(b)) / ww) * w


def span_membership(basis: SubspaceBasis, v, tol=1e-6):
    """``(member, residual)``: member iff residual <= tol * max(1, |v|)."""
    _, residual = project_onto_span(basis.basis, v)
    return residual <= tol * max(1.0, float(np.linalg.norm(v))), residual
