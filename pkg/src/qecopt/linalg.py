"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  The
eigen/singular-value routines wrap LAPACK and add the conventions the rest
of the package relies on: descending order, stable tie-breaking and a fixed
eigenvector phase, so that Kraus extraction is reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NotHermitianError
from .policy import DEFAULT_POLICY


def dag(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dag(m))


def is_hermitian(m: np.ndarray, tol: float = DEFAULT_POLICY.symmetry_tol) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
    return float(np.max(np.abs(m - dag(m)), initial=0.0)) <= tol * scale


def _check_hermitian(m: np.ndarray, tol: float) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if not is_hermitian(m, tol):
        err = float(np.max(np.abs(m - dag(m))))
        raise NotHermitianError(f"matrix is not Hermitian (max |M - M^H| = {err:.3e})")
    return m


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def partial_trace(m: np.ndarray, dim_keep: int, dim_trace: int, traced: str = "last") -> np.ndarray:
    """Trace out one factor of a bipartite operator.

    With ``traced="last"`` the operator is viewed as ``dim_keep`` x
    ``dim_keep`` blocks of size ``dim_trace``; entry ``(i, j)`` of the
    result is the trace of block ``[i, j]``.
    """
    m = np.asarray(m, dtype=complex)
    n = dim_keep * dim_trace
    if m.shape != (n, n):
        raise DimensionError(f"matrix of shape {m.shape} does not factor as {dim_keep} x {dim_trace}")
    if traced == "last":
        return np.einsum("ijkj->ik", m.reshape(dim_keep, dim_trace, dim_keep, dim_trace))
    if traced == "first":
        return np.einsum("jijk->ik", m.reshape(dim_trace, dim_keep, dim_trace, dim_keep))
    raise ValueError(f"traced must be 'last' or 'first', not {traced!r}")


def _fix_phases(v: np.ndarray) -> np.ndarray:
    # largest-modulus component of each column made real positive
    idx = np.argmax(np.abs(v) - 1e-12 * np.arange(v.shape[0])[:, None], axis=0)
    pivots = v[idx, np.arange(v.shape[1])]
    phases = np.where(np.abs(pivots) > 0, pivots / np.abs(pivots), 1.0)
    return v / phases


def hermitian_eig(m: np.ndarray, tol: float = DEFAULT_POLICY.symmetry_tol) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and unitary eigenvectors of a Hermitian matrix.

    Raises:
        NotHermitianError: if ``m`` departs from Hermitian by more than ``tol``
            (relative to its largest entry when that exceeds one).
    """
    m = _check_hermitian(m, tol)
    w, v = np.linalg.eigh(hermitian_part(m))
    order = np.argsort(-w, kind="stable")
    return w[order], _fix_phases(v[:, order])


def svd(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(u, s, v)`` with ``m = u @ diag(s) @ v^H`` and ``s`` descending."""
    u, s, vh = np.linalg.svd(np.asarray(m, dtype=complex), full_matrices=False)
    return u, s, dag(vh)


def spectral_norm(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=complex)
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False)[0])


def expm_hermitian(h: np.ndarray, scale: float = 1.0, tol: float = DEFAULT_POLICY.symmetry_tol) -> np.ndarray:
    """``exp(-i * scale * h)`` for Hermitian ``h``, via its eigendecomposition."""
    w, v = hermitian_eig(h, tol)
    return (v * np.exp(-1j * scale * w)) @ dag(v)


def psd_power(m: np.ndarray, power: float, floor: float = 0.0) -> np.ndarray:
    """Matrix power of a Hermitian PSD matrix; eigenvalues at or below ``floor`` raise."""
    w, v = hermitian_eig(m, tol=1e-9)
    if np.any(w <= floor):
        raise np.linalg.LinAlgError(f"matrix is not positive definite (min eigenvalue {w.min():.3e})")
    return (v * w**power) @ dag(v)


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis of the real vector space of n x n Hermitian matrices.

    Ordered as diagonal units, then for each ``a < b`` the symmetric and the
    antisymmetric-imaginary unit.  Shape ``(n*n, n, n)``; orthonormal under
    ``Re Tr(A B)``.
    """
    basis = []
    for a in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[a, a] = 1.0
        basis.append(e)
    s = 1.0 / np.sqrt(2.0)
    for a in range(n):
        for b in range(a + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[a, b] = e[b, a] = s
            basis.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[a, b] = -1j * s
            e[b, a] = 1j * s
            basis.append(e)
    return np.array(basis)


def herm_to_vec(m: np.ndarray) -> np.ndarray:
    """Real coordinates of a Hermitian matrix in :func:`hermitian_basis`."""
    basis = hermitian_basis(m.shape[0])
    return np.real(np.einsum("kij,ji->k", basis, m))


def vec_to_herm(v: np.ndarray, n: int) -> np.ndarray:
    return np.einsum("k,kij->ij", np.asarray(v, dtype=float), hermitian_basis(n))


def solve_constrained_nullspace(
    a: np.ndarray,
    b: np.ndarray,
    n: int | None = None,
    tol: float = DEFAULT_POLICY.linear_solve_tol,
) -> np.ndarray:
    """Minimal-norm least-squares solution of a stacked linear system.

    ``a`` acts on the row-major vectorisation of an ``n`` x ``n`` matrix
    ``X``.  Typical use stacks the complementary-slackness rows
    ``(S (x) I) vec(X) = 0`` on top of the equality-constraint rows.  The
    solution is reshaped and Hermitian-symmetrised.  An underdetermined
    system is not an error: the minimal-norm member of the solution set is
    returned.

    Raises:
        np.linalg.LinAlgError: if the symmetrised solution leaves a residual
            larger than ``tol`` (the system is inconsistent).
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex).ravel()
    if n is None:
        n = int(round(np.sqrt(a.shape[1])))
    if a.shape != (b.size, n * n):
        raise DimensionError(f"operator of shape {a.shape} incompatible with rhs {b.size} and n={n}")
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    x = hermitian_part(x.reshape(n, n))
    resid = float(np.max(np.abs(a @ x.ravel() - b), initial=0.0))
    if resid > tol:
        raise np.linalg.LinAlgError(f"linear system inconsistent: residual {resid:.3e} > {tol:.1e}")
    return x
