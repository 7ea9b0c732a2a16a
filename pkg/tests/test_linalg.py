import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spanattack.errors import EmptyBasisError, InputError
from spanattack.linalg import (OrthonormalSet, gram_schmidt_orthonormalize, project_onto_span, projector_distance,
                               thin_svd)


def test_gs_hand_example():
    out = gram_schmidt_orthonormalize([[1, 0], [1, 1]])
    np.testing.assert_allclose(out.vectors, [[1, 0], [0, 1]], atol=1e-15)


def test_gs_drops_duplicate_direction():
    out = gram_schmidt_orthonormalize([[3, 0], [6, 0]])
    assert out.size == 1
    np.testing.assert_allclose(out.vectors, [[1, 0]])


def test_gs_random_gram_is_identity(rng):
    out = gram_schmidt_orthonormalize(rng.standard_normal((5, 10)))
    assert out.size == 5
    assert np.max(np.abs(out.vectors @ out.vectors.T - np.eye(5))) < 1e-10


def test_gs_all_zero_raises():
    with pytest.raises(EmptyBasisError):
        gram_schmidt_orthonormalize(np.zeros((3, 4)))


def test_gs_rejects_nonfinite():
    with pytest.raises(InputError):
        gram_schmidt_orthonormalize([[1.0, np.nan]])


def test_gs_ill_conditioned_stays_orthonormal():
    # near-parallel columns break classical Gram-Schmidt
    eps = 1e-8
    a = np.array([[1, eps, 0, 0], [1, 0, eps, 0], [1, 0, 0, eps]], dtype=float)
    out = gram_schmidt_orthonormalize(a)
    assert out.size == 3
    assert np.max(np.abs(out.vectors @ out.vectors.T - np.eye(3))) < 1e-10


def test_orthonormal_set_rejects_non_orthonormal():
    with pytest.raises(InputError):
        OrthonormalSet(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_svd_identity():
    np.testing.assert_allclose(thin_svd(np.eye(2)).singular_values, [1, 1])


def test_svd_rank_one_diagonal():
    r = thin_svd(np.array([[3.0, 0.0], [0.0, 0.0]]))
    np.testing.assert_allclose(r.singular_values, [3, 0], atol=1e-15)
    np.testing.assert_allclose(np.abs(r.right_vectors[:, 0]), [1, 0], atol=1e-15)


def test_svd_rank_two_product(rng):
    m = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 6))
    r = thin_svd(m)
    assert r.singular_values.shape == (4,)
    assert np.all(r.singular_values[2:] < 1e-10)
    assert np.max(np.abs(r.reconstruct() - m)) < 1e-10
    for vecs in (r.left_vectors.T, r.right_vectors.T):
        assert np.max(np.abs(vecs @ vecs.T - np.eye(4))) < 1e-10


def test_svd_rejects_nonfinite():
    with pytest.raises(InputError):
        thin_svd([[np.inf, 1.0]])


def test_projection_examples():
    e = OrthonormalSet(np.array([[1.0, 0.0]]))
    p, r = project_onto_span(e, [5.0, 0.0])
    np.testing.assert_array_equal(p, [5, 0])
    assert r == 0
    p, r = project_onto_span(e, [0.0, 2.0])
    np.testing.assert_array_equal(p, [0, 0])
    assert r == 2


def test_projection_pythagoras(rng):
    for _ in range(20):
        e = gram_schmidt_orthonormalize(rng.standard_normal((3, 8)))
        v = rng.standard_normal(8)
        p, r = project_onto_span(e, v)
        assert abs(v @ v - (p @ p + r * r)) < 1e-9


# small integers make exact dependencies and duplicate rows common
entries = st.integers(-3, 3).map(float) | st.floats(-10, 10).filter(lambda v: v == 0 or abs(v) > 1e-3)
rows = st.integers(1, 6).flatmap(
    lambda m: st.integers(1, 8).flatmap(lambda d: arrays(np.float64, (m, d), elements=entries)))


@settings(max_examples=60, deadline=None)
@given(rows)
def test_gs_and_svd_projectors_agree(a):
    s = np.linalg.svd(a, compute_uv=False)
    # numerically ambiguous ranks are out of scope for a projector comparison
    if s[0] < 1e-3 or np.any((s > 1e-12 * s[0]) & (s < 1e-4 * s[0])):
        return
    gs = gram_schmidt_orthonormalize(a)
    r = thin_svd(a)
    keep = r.singular_values > 1e-10 * r.singular_values[0]
    sv = OrthonormalSet(np.ascontiguousarray(r.right_vectors[:, keep].T))
    assert gs.size == sv.size
    assert projector_distance(gs, sv) <= 1e-8
