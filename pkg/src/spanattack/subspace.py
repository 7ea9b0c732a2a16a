"""Attack subspaces: construction from unlabeled data, selection, and sampling.

Random draws use numpy's Philox4x32 counter-based generator. A per-instance
seed is derived from a master seed with ``numpy.random.SeedSequence`` using
the instance index as spawn key, so streams do not depend on scheduling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyBasisError, InputError
from .linalg import OrthonormalSet, gram_schmidt_orthonormalize, thin_svd

RANK_TOL = 1e-10
PROVENANCES = ("gram-schmidt", "svd-full", "svd-top", "svd-bottom", "identity")
SAMPLER_KINDS = ("gaussian", "rademacher")


@dataclass(frozen=True)
class SubspaceBasis:
    basis: OrthonormalSet
    singular_values: np.ndarray | None = None
    provenance: str = "gram-schmidt"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise InputError(f"unknown provenance {self.provenance!r}")
        if self.singular_values is not None and len(self.singular_values) != self.size:
            raise InputError("singular_values length must equal the number of basis vectors")

    @property
    def vectors(self) -> np.ndarray:
        return self.basis.vectors

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def size(self) -> int:
        return self.basis.size

    def residual(self, v) -> float:
        v = np.asarray(v, dtype=np.float64)
        return float(np.linalg.norm(v - (self.vectors @ v) @ self.vectors))


def derive_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit seed for instance ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


class IsometricSampler:
    """I.i.d. Gaussian or Rademacher vectors from a seeded Philox stream.

    Not safe to share between threads; give each worker its own sampler.
    """

    def __init__(self, kind="gaussian", seed=0):
        if kind not in SAMPLER_KINDS:
            raise InputError(f"sampler kind must be one of {SAMPLER_KINDS}, got {kind!r}")
        self.kind = kind
        self.seed = int(seed)
        self.rng = make_rng(seed)

    def sample(self, d: int) -> np.ndarray:
        if self.kind == "gaussian":
            return self.rng.standard_normal(d)
        return self.rng.integers(0, 2, size=d).astype(np.float64) * 2.0 - 1.0


def _dataset_matrix(dataset) -> np.ndarray:
    s = np.array(dataset, dtype=np.float64, ndmin=2)
    if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
        raise InputError(f"subspace dataset must be a nonempty (M', D) array, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise InputError("subspace dataset contains non-finite values")
    return s


def build_basis(dataset, method="svd", rank_tol=RANK_TOL) -> SubspaceBasis:
    """Orthonormal basis of span(dataset); rows are raw, uncentred instances."""
    s = _dataset_matrix(dataset)
    if method == "gram-schmidt":
        return SubspaceBasis(gram_schmidt_orthonormalize(s), None, "gram-schmidt")
    if method != "svd":
        raise InputError(f"unknown basis method {method!r}")
    svd = thin_svd(s)
    sv = svd.singular_values
    if sv[0] == 0.0:
        raise EmptyBasisError("all subspace instances are zero")
    keep = sv > rank_tol * sv[0]
    vectors = np.ascontiguousarray(svd.right_vectors[:, keep].T)
    return SubspaceBasis(OrthonormalSet(vectors), sv[keep].copy(), "svd-full")


def select_singular_vectors(basis: SubspaceBasis, mode: str, k: int) -> SubspaceBasis:
    """Keep the ``k`` top (largest sigma) or bottom (smallest positive sigma) vectors."""
    if basis.singular_values is None:
        raise InputError("basis has no singular values; build it with method='svd'")
    if not 1 <= k <= basis.size:
        raise InputError(f"k must be in [1, {basis.size}], got {k}")
    if mode == "top":
        sl = slice(0, k)
    elif mode == "bottom":
        sl = slice(basis.size - k, basis.size)
    else:
        raise InputError(f"mode must be 'top' or 'bottom', got {mode!r}")
    return SubspaceBasis(
        OrthonormalSet(basis.vectors[sl].copy()),
        basis.singular_values[sl].copy(),
        f"svd-{mode}",
    )


def identity_basis(dim: int) -> SubspaceBasis:
    return SubspaceBasis(OrthonormalSet(np.eye(dim)), None, "identity")


def random_basis(dim: int, k: int, seed: int) -> SubspaceBasis:
    """``k`` random orthonormal directions: a subspace carrying no data prior."""
    if not 1 <= k <= dim:
        raise InputError(f"k must be in [1, {dim}]")
    g = make_rng(seed).standard_normal((k, dim))
    return SubspaceBasis(gram_schmidt_orthonormalize(g), None, "gram-schmidt")


def sample_in_subspace(basis: SubspaceBasis | None, sampler: IsometricSampler, dim: int) -> np.ndarray:
    """Random vector confined to span(basis) with the same expected squared norm as sample(dim).

    With ``basis=None`` this is ``sampler.sample(dim)`` itself.
    """
    if basis is None:
        return sampler.sample(dim)
    if basis.dim != dim:
        raise InputError(f"basis dimension {basis.dim} != ambient dimension {dim}")
    m = basis.size
    w = sampler.sample(m)
    return np.sqrt(dim / m) * (w @ basis.vectors)


def unit_direction_in_subspace(basis: SubspaceBasis | None, sampler: IsometricSampler, dim: int) -> np.ndarray:
    for _ in range(2):
        v = sample_in_subspace(basis, sampler, dim)
        n = np.linalg.norm(v)
        if n > 0.0:
            return v / n
    raise InputError("sampler produced a zero vector twice")


# Binary basis file, little-endian:
#   magic b"SPANBAS\0" | u32 version | u64 D | u64 M | u8 provenance | u8 has_sigma | 6 pad bytes
#   then M*D float64 (row-major, one basis vector per row), then M float64 if has_sigma.
_MAGIC = b"SPANBAS\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIQQBB6x")


def save_basis(basis: SubspaceBasis, path) -> None:
    has_sigma = basis.singular_values is not None
    header = _HEADER.pack(
        _MAGIC, _VERSION, basis.dim, basis.size, PROVENANCES.index(basis.provenance), int(has_sigma)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(basis.vectors, dtype="<f8").tobytes())
        if has_sigma:
            fh.write(np.ascontiguousarray(basis.singular_values, dtype="<f8").tobytes())


def load_basis(path) -> SubspaceBasis:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataError("file too short for header", field="header")
    magic, version, d, m, prov, has_sigma = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise DataError("bad magic bytes", field="magic")
    if version != _VERSION:
        raise DataError(f"unsupported version {version}", field="version")
    if prov >= len(PROVENANCES):
        raise DataError(f"unknown provenance code {prov}", field="provenance")
    expected = _HEADER.size + 8 * (m * d + (m if has_sigma else 0))
    if len(raw) != expected:
        raise DataError(f"expected {expected} bytes, found {len(raw)}", field="data")
    off = _HEADER.size
    vectors = np.frombuffer(raw, dtype="<f8", count=m * d, offset=off).reshape(m, d).astype(np.float64)
    sigma = None
    if has_sigma:
        sigma = np.frombuffer(raw, dtype="<f8", count=m, offset=off + 8 * m * d).astype(np.float64)
    if not (np.all(np.isfinite(vectors)) and (sigma is None or np.all(np.isfinite(sigma)))):
        raise DataError("non-finite values", field="data")
    try:
        return SubspaceBasis(OrthonormalSet(vectors), sigma, PROVENANCES[prov])
    except InputError as exc:
        raise DataError(str(exc), field="data") from None
