"""Dense orthonormalization, thin SVD and orthogonal projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBasisError, InputError

DEFAULT_DROP_TOL = 1e-10


def _as_finite_2d(a, name="matrix"):
    arr = np.array(a, dtype=np.float64, ndmin=2, copy=True)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError(f"{name} must be a nonempty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class OrthonormalSet:
    """M orthonormal vectors in R^D, stored as the rows of ``vectors``."""

    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vectors", _as_finite_2d(self.vectors, "vectors"))
        self.check()

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    def projector(self) -> np.ndarray:
        return self.vectors.T @ self.vectors

    def check(self, tol=1e-10):
        """Raise InputError unless the rows are orthonormal within ``tol``."""
        m, d = self.vectors.shape
        if not 1 <= m <= d:
            raise InputError(f"need 1 <= M <= D, got M={m}, D={d}")
        gram = self.vectors @ self.vectors.T
        err = np.max(np.abs(gram - np.eye(m)))
        if err > tol:
            raise InputError(f"vectors are not orthonormal (max Gram error {err:.3e})")
        return self


@dataclass(frozen=True)
class SvdResult:
    left_vectors: np.ndarray  # (rows, k), orthonormal columns
    singular_values: np.ndarray  # (k,), nonincreasing
    right_vectors: np.ndarray  # (cols, k), orthonormal columns

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def gram_schmidt_orthonormalize(vectors, drop_tol=DEFAULT_DROP_TOL) -> OrthonormalSet:
    """Orthonormalize ``vectors`` with modified Gram-Schmidt plus one re-orthogonalization pass.

    A vector is dropped when its residual after removing the current basis is
    at most ``drop_tol`` times its original norm. Zero vectors are always dropped.
    """
    if drop_tol <= 0:
        raise InputError("drop_tol must be positive")
    rows = _as_finite_2d(vectors, "vectors")
    d = rows.shape[1]
    basis = np.empty((min(rows.shape[0], d), d))
    m = 0
    for v in rows:
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            continue
        w = v.copy()
        for _ in range(2):
            for j in range(m):
                w -= (basis[j] @ w) * basis[j]
        r = np.linalg.norm(w)
        if r <= drop_tol * norm0:
            continue
        basis[m] = w / r
        m += 1
        if m == d:
            break
    if m == 0:
        raise EmptyBasisError("all input vectors are zero or linearly dependent")
    return OrthonormalSet(basis[:m].copy())


def thin_svd(matrix) -> SvdResult:
    """Thin SVD with min(rows, cols) singular triples, sorted nonincreasing."""
    a = _as_finite_2d(matrix)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return SvdResult(left_vectors=u, singular_values=s, right_vectors=vt.T)


def project_onto_span(basis: OrthonormalSet, v):
    """Return ``(projection, residual_norm)`` of ``v`` onto span(basis)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != basis.dim:
        raise InputError(f"dimension mismatch: basis dim {basis.dim}, vector shape {v.shape}")
    proj = (basis.vectors @ v) @ basis.vectors
    return proj, float(np.linalg.norm(v - proj))


def projector_distance(a: OrthonormalSet, b: OrthonormalSet) -> float:
    """Max-entry distance between the orthogonal projectors of two bases."""
    if a.dim != b.dim:
        raise InputError("bases live in different ambient dimensions")
    return float(np.max(np.abs(a.projector() - b.projector())))
