import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qecopt import linalg
from qecopt.errors import DimensionError, NotHermitianError


def rand_c(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rand_herm(rng, n):
    a = rand_c(rng, n, n)
    return (a + a.conj().T) / 2


def test_kron_identity_and_diagonal():
    assert np.allclose(linalg.kron(np.eye(2), np.eye(2)), np.eye(4))
    assert np.allclose(linalg.kron(np.diag([1, 2]), np.diag([3, 4])), np.diag([3, 4, 6, 8]))


def test_kron_mixed_product_on_vectors():
    rng = np.random.default_rng(0)
    a, b = rand_c(rng, 2, 2), rand_c(rng, 2, 2)
    x, y = rand_c(rng, 2), rand_c(rng, 2)
    lhs = linalg.kron(a, b) @ np.kron(x, y)
    assert np.allclose(lhs, np.kron(a @ x, b @ y), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kron_associative_and_bilinear(seed):
    rng = np.random.default_rng(seed)
    a, b, c, d = (rand_c(rng, 2, 2) for _ in range(4))
    assert np.max(np.abs(linalg.kron(linalg.kron(a, b), c) - linalg.kron(a, linalg.kron(b, c)))) < 1e-12
    s = 0.3 - 1.1j
    lhs = linalg.kron(a + s * d, b)
    rhs = linalg.kron(a, b) + s * linalg.kron(d, b)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_partial_trace_product_state():
    rng = np.random.default_rng(1)
    a, b = rand_c(rng, 2, 2), rand_c(rng, 2, 2)
    m = np.kron(a, b)
    assert np.allclose(linalg.partial_trace(m, 2, 2, "last"), a * np.trace(b), atol=1e-12)
    assert np.allclose(linalg.partial_trace(m, 2, 2, "first"), b * np.trace(a), atol=1e-12)


def test_partial_trace_trivial_factor_and_bell_state():
    rng = np.random.default_rng(2)
    m = rand_c(rng, 3, 3)
    assert np.allclose(linalg.partial_trace(m, 3, 1), m)
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert np.allclose(linalg.partial_trace(np.outer(bell, bell), 2, 2), np.eye(2) / 2, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 2), (2, 4), (4, 2), (3, 1)]))
def test_partial_trace_preserves_trace(seed, dims):
    rng = np.random.default_rng(seed)
    n = dims[0] * dims[1]
    m = rand_c(rng, n, n)
    for which in ("last", "first"):
        assert abs(np.trace(linalg.partial_trace(m, *dims, traced=which)) - np.trace(m)) < 1e-12


def test_partial_trace_dimension_mismatch():
    with pytest.raises(DimensionError):
        linalg.partial_trace(np.eye(5), 2, 2)


def test_hermitian_eig_textbook_cases():
    w, v = linalg.hermitian_eig(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [3, 2, 1])
    assert np.allclose(np.abs(v), [[1, 0, 0], [0, 0, 1], [0, 1, 0]])
    w, v = linalg.hermitian_eig(np.array([[0, 1], [1, 0]]))
    assert np.allclose(w, [1, -1])
    assert np.allclose(np.abs(v), np.full((2, 2), 1 / np.sqrt(2)))


def test_hermitian_eig_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        linalg.hermitian_eig(np.array([[0, 1], [0, 0]]))


def test_hermitian_eig_is_deterministic_with_fixed_phase():
    rng = np.random.default_rng(3)
    h = rand_herm(rng, 6)
    w1, v1 = linalg.hermitian_eig(h)
    w2, v2 = linalg.hermitian_eig(h.copy())
    assert np.array_equal(w1, w2) and np.array_equal(v1, v2)
    pivots = v1[np.argmax(np.abs(v1), axis=0), np.arange(6)]
    assert np.allclose(pivots.imag, 0) and np.all(pivots.real > 0)


def test_svd_simple_cases():
    _, s, _ = linalg.svd(np.eye(4))
    assert np.allclose(s, 1)
    v = np.array([1, 1j, 0]) / np.sqrt(2)
    _, s, _ = linalg.svd(np.outer(v, v.conj()))
    assert np.allclose(s, [1, 0, 0], atol=1e-12)


def test_svd_matches_eig_on_psd_input():
    rng = np.random.default_rng(4)
    a = rand_c(rng, 8, 8)
    x = a @ a.conj().T
    w, v = linalg.hermitian_eig(x)
    u, s, vv = linalg.svd(x)
    assert np.allclose(s, w, atol=1e-10 * w[0])
    # same singular vectors up to a phase per column
    overlap = np.abs(np.einsum("ij,ij->j", v.conj(), u))
    assert np.allclose(overlap, 1, atol=1e-8)


def test_expm_hermitian_cases():
    h = np.array([[1.0, 2 - 1j], [2 + 1j, -0.5]])
    assert np.allclose(linalg.expm_hermitian(h, 0.0), np.eye(2))
    z = np.diag([1.0, -1.0])
    assert np.allclose(linalg.expm_hermitian(np.pi * z), -np.eye(2), atol=1e-12)


def test_expm_eigenphases():
    rng = np.random.default_rng(5)
    h = rand_herm(rng, 8)
    u = linalg.expm_hermitian(h)
    assert np.max(np.abs(u.conj().T @ u - np.eye(8))) < 1e-10
    lam = np.linalg.eigvalsh(h)
    phases = np.sort(np.angle(np.linalg.eigvals(u)) % (2 * np.pi))
    assert np.allclose(phases, np.sort(-lam % (2 * np.pi)), atol=1e-9)


def test_spectral_norm():
    assert linalg.spectral_norm(np.eye(5)) == pytest.approx(1.0)
    assert linalg.spectral_norm(np.diag([0.75, 0.2])) == pytest.approx(0.75)
    rng = np.random.default_rng(6)
    m = rand_c(rng, 5, 3)
    assert linalg.spectral_norm(m) == pytest.approx(np.max(np.linalg.svd(m, compute_uv=False)))


def test_reconstruction_over_100_seeds():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        h = rand_herm(rng, 8)
        w, v = linalg.hermitian_eig(h)
        norm = np.linalg.norm(h, 2)
        assert np.max(np.abs(v @ np.diag(w) @ v.conj().T - h)) <= 1e-10 * norm
        assert np.all(np.diff(w) <= 0)
        m = rand_c(rng, 8, 8)
        u, s, vv = linalg.svd(m)
        assert np.max(np.abs(u @ np.diag(s) @ vv.conj().T - m)) <= 1e-10 * np.linalg.norm(m, 2)
        ex = linalg.expm_hermitian(h)
        assert np.max(np.abs(ex.conj().T @ ex - np.eye(8))) <= 1e-10


def test_hermitian_basis_orthonormal_and_roundtrip():
    b = linalg.hermitian_basis(3)
    gram = np.real(np.einsum("aij,bji->ab", b, b))
    assert np.allclose(gram, np.eye(9))
    rng = np.random.default_rng(7)
    h = rand_herm(rng, 3)
    assert np.allclose(linalg.vec_to_herm(linalg.herm_to_vec(h), 3), h)


def test_nullspace_solve_unconstrained_returns_min_norm():
    # m = 1: the only constraint is Tr X = 1; K - W = 0 adds no rows
    a = np.eye(2).reshape(1, 4)
    x = linalg.solve_constrained_nullspace(a, np.array([1.0]), 2)
    assert np.allclose(x, np.eye(2) / 2)


def test_nullspace_solve_support_follows_slack():
    s = np.diag([0.0, 1.0])
    rows = np.kron(s, np.eye(2))  # row-major vec of S X
    a = np.vstack([rows, np.eye(2).reshape(1, 4)])
    b = np.concatenate([np.zeros(4), [1.0]])
    x = linalg.solve_constrained_nullspace(a, b, 2)
    assert np.allclose(x, np.diag([1.0, 0.0]), atol=1e-12)


def test_nullspace_solve_inconsistent_raises():
    a = np.vstack([np.eye(2).reshape(1, 4), np.eye(2).reshape(1, 4)])
    with pytest.raises(np.linalg.LinAlgError):
        linalg.solve_constrained_nullspace(a, np.array([1.0, 2.0]), 2)
