"""Channel fidelities, operator bases and the SDP data matrices.

Conventions.  A process matrix ``X`` built from Kraus coefficient vectors
``x_r`` is ``X = sum_r x_r x_r^H``.  The data matrices returned by
:func:`assemble_w_recovery` / :func:`assemble_w_encoding` are arranged so
that ``Tr(X @ W)`` is the average fidelity, i.e. ``W = sum conj(g) g^T``.
The four-index tensor from :func:`build_f_tensor` is contracted elementwise,
``sum X_R[i,j] X_C[k,l] F[i,j,k,l]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import linalg
from .channels import QuantumChannel, compose_all
from .errors import DimensionError, SolverError
from .policy import DEFAULT_POLICY, NumericPolicy

Shape = Literal["recovery", "encoding"]


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Orthonormal operator basis ``{B_i}`` of shape ``(n_S*n_C, rows, cols)``."""

    elements: np.ndarray
    kind: Shape
    ns: int
    nc: int

    def __len__(self) -> int:
        return self.elements.shape[0]

    @property
    def rows(self) -> int:
        return self.elements.shape[1]

    @property
    def cols(self) -> int:
        return self.elements.shape[2]

    def gram(self) -> np.ndarray:
        return np.einsum("iab,jab->ij", self.elements.conj(), self.elements)

    def combine(self, coeffs: np.ndarray) -> np.ndarray:
        """``sum_i coeffs[i] B_i``."""
        return np.einsum("i,iab->ab", coeffs, self.elements)

    def coefficients(self, op: np.ndarray) -> np.ndarray:
        """Expansion coefficients ``Tr(B_i^H op)`` of an operator."""
        return np.einsum("iab,ab->i", self.elements.conj(), op)


def canonical_basis(ns: int, nc: int, shape: Shape) -> BasisSet:
    """Matrix units ``e_a e_b^T`` enumerated row-major.

    Recovery elements are ``ns x nc``; encoding elements are ``nc x ns``.
    """
    if ns < 1 or nc < 1:
        raise ValueError("dimensions must be positive")
    rows, cols = (ns, nc) if shape == "recovery" else (nc, ns)
    if shape not in ("recovery", "encoding"):
        raise ValueError(f"shape must be 'recovery' or 'encoding', not {shape!r}")
    elements = np.zeros((rows * cols, rows, cols), dtype=complex)
    for a in range(rows):
        for b in range(cols):
            elements[a * cols + b, a, b] = 1.0
    elements.setflags(write=False)
    return BasisSet(elements, shape, ns, nc)


def process_matrix_of(channel: QuantumChannel, basis: BasisSet) -> np.ndarray:
    """``X = sum_k x_k x_k^H`` from the Kraus coefficients of ``channel``."""
    if (channel.dim_out, channel.dim_in) != (basis.rows, basis.cols):
        raise DimensionError("channel shape does not match basis shape")
    coeffs = np.array([basis.coefficients(k) for k in channel.kraus])
    return coeffs.T @ coeffs.conj()


def _target(target: np.ndarray | None, n: int) -> np.ndarray:
    if target is None:
        return np.eye(n, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if target.shape != (n, n):
        raise DimensionError(f"target of shape {target.shape} does not match dimension {n}")
    return target


def _kraus_vs_target(s: QuantumChannel, target: np.ndarray | None) -> np.ndarray:
    if s.dim_in != s.dim_out:
        raise DimensionError("fidelity needs a channel with equal input and output dimensions")
    l_dag = linalg.dag(_target(target, s.dim_in))
    return np.array([l_dag @ k for k in s.kraus])


# ---------------------------------------------------------------- fidelities


def f_avg(s: QuantumChannel, target: np.ndarray | None = None) -> float:
    """Average fidelity ``(1/n^2) sum_k |Tr L^H S_k|^2``."""
    ks = _kraus_vs_target(s, target)
    n = s.dim_in
    return float(np.sum(np.abs(np.einsum("kii->k", ks)) ** 2) / n**2)


def pipeline_f_avg(
    recovery: QuantumChannel,
    error: QuantumChannel,
    encoding: QuantumChannel,
    target: np.ndarray | None = None,
) -> float:
    return f_avg(compose_all([recovery, error, encoding]), target)


@dataclass(frozen=True)
class MixedFidelity:
    value: float
    rho: np.ndarray
    fw_gap: float
    iterations: int

    @property
    def eigenvalues(self) -> np.ndarray:
        return linalg.hermitian_eig(self.rho, tol=1e-9)[0]

    @property
    def rank_one_gap(self) -> float:
        """``lambda_1 - lambda_2`` of the minimiser (1.0 for a pure state)."""
        w = self.eigenvalues
        return float(w[0] - (w[1] if w.size > 1 else 0.0))


def _amap(ks: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("kij,ji->k", ks, rho)


def _grad(ks: np.ndarray, a: np.ndarray) -> np.ndarray:
    g = np.einsum("k,kij->ij", a.conj(), ks)
    return g + linalg.dag(g)


def _min_eig_projector(g: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(linalg.hermitian_part(g))
    return np.outer(v[:, 0], v[:, 0].conj())


def _fw_gap(ks: np.ndarray, rho: np.ndarray) -> float:
    g = _grad(ks, _amap(ks, rho))
    return float(np.real(np.trace(g @ (rho - _min_eig_projector(g)))))


def _project_simplex(y: np.ndarray) -> np.ndarray:
    u = np.sort(y)[::-1]
    css = np.cumsum(u)
    k = np.nonzero(u * np.arange(1, y.size + 1) > css - 1)[0][-1]
    return np.maximum(y - (css[k] - 1) / (k + 1), 0.0)


def _project_density(x: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(linalg.hermitian_part(x))
    return (v * _project_simplex(w)) @ linalg.dag(v)


def f_mixed(
    s: QuantumChannel,
    target: np.ndarray | None = None,
    policy: NumericPolicy = DEFAULT_POLICY,
    target_gap: float = 1e-12,
) -> MixedFidelity:
    """``min_rho sum_k |Tr S_k rho|^2`` over density matrices.

    Conditional gradient with exact line search; the linear subproblem is
    the projector onto a minimal eigenvector of the gradient.  When the
    Frank-Wolfe gap stalls (minimisers of intermediate rank) the iterate is
    polished by accelerated projected gradient.  The returned ``fw_gap``
    bounds ``value - f_mixed`` from above.

    Raises:
        SolverError: if the gap is still above ``policy.fw_gap_tol`` after
            ``policy.fw_max_iters`` iterations.
    """
    ks = _kraus_vs_target(s, target)
    n = s.dim_in
    rho = np.eye(n, dtype=complex) / n
    a = _amap(ks, rho)
    gap = np.inf
    fw_budget = min(1000, policy.fw_max_iters)
    it = 0
    while it < fw_budget:
        g = _grad(ks, a)
        d = _min_eig_projector(g) - rho
        gap = -float(np.real(np.trace(g @ d)))
        if gap <= target_gap:
            break
        b = _amap(ks, d)
        bb = float(np.real(np.vdot(b, b)))
        step = 1.0 if bb == 0 else min(max(-float(np.real(np.vdot(b, a))) / bb, 0.0), 1.0)
        rho = rho + step * d
        a = a + step * b
        it += 1

    if gap > target_gap:
        lip = 2.0 * float(np.sum(np.abs(ks) ** 2))
        y, t_k, f_old = rho, 1.0, np.inf
        while it < policy.fw_max_iters:
            new = _project_density(y - _grad(ks, _amap(ks, y)) / lip)
            f_new = float(np.sum(np.abs(_amap(ks, new)) ** 2))
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
            if f_new > f_old:
                y, t_k = new, 1.0
            else:
                y, t_k = new + (t_k - 1.0) / t_next * (new - rho), t_next
            rho, f_old = new, f_new
            it += 1
            if it % 20 == 0:
                gap = _fw_gap(ks, rho)
                if gap <= target_gap:
                    break
        gap = _fw_gap(ks, rho)

    rho = linalg.hermitian_part(rho)
    if gap > policy.fw_gap_tol:
        raise SolverError(f"f_mixed did not converge: Frank-Wolfe gap {gap:.3e} after {it} iterations")
    value = float(np.sum(np.abs(_amap(ks, rho)) ** 2))
    return MixedFidelity(value, rho, max(gap, 0.0), it)


def _pure_objective(ks: np.ndarray, psi: np.ndarray) -> tuple[float, np.ndarray]:
    c = np.einsum("i,kij,j->k", psi.conj(), ks, psi)
    return float(np.sum(np.abs(c) ** 2)), _grad(ks, c)


def _descend_sphere(ks: np.ndarray, psi: np.ndarray, max_iter: int = 500, tol: float = 1e-12) -> tuple[float, np.ndarray]:
    psi = psi / np.linalg.norm(psi)
    val, g = _pure_objective(ks, psi)
    step = 0.5
    for _ in range(max_iter):
        gpsi = g @ psi
        tangent = gpsi - np.vdot(psi, gpsi) * psi
        slope = float(np.real(np.vdot(tangent, tangent)))
        if slope < tol**2:
            break
        while step > 1e-14:
            trial = psi - step * tangent
            trial /= np.linalg.norm(trial)
            tval, tg = _pure_objective(ks, trial)
            if tval <= val - 1e-4 * step * slope:
                psi, val, g = trial, tval, tg
                step = min(step * 2.0, 4.0)
                break
            step *= 0.5
        else:
            break
    return val, psi


def f_pure_estimate(
    s: QuantumChannel,
    target: np.ndarray | None = None,
    restarts: int = DEFAULT_POLICY.pure_restarts,
    seed: int = 0,
) -> float:
    """Heuristic ``min_psi sum_k |<psi|S_k|psi>|^2`` over pure states.

    Best value over ``restarts`` seeded random starts, each refined by
    backtracking gradient descent on the unit sphere.  The problem is not
    convex, so the result is an upper bound on the true minimum.
    """
    ks = _kraus_vs_target(s, target)
    n = s.dim_in
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(max(restarts, 1)):
        psi0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        val, _ = _descend_sphere(ks, psi0)
        best = min(best, val)
    return float(best)


# ---------------------------------------------------------------- SDP data


@dataclass(frozen=True, eq=False)
class FidelityTensor:
    entries: np.ndarray
    ns: int
    nc: int

    def contract(self, x_r: np.ndarray, x_c: np.ndarray) -> float:
        return float(np.real(np.einsum("ij,kl,ijkl->", x_r, x_c, self.entries)))


def _check_error(error: QuantumChannel, nc: int) -> None:
    if (error.dim_in, error.dim_out) != (nc, nc):
        raise DimensionError(f"error channel must act on the {nc}-dimensional code space")


def build_f_tensor(
    error: QuantumChannel,
    target: np.ndarray | None,
    basis_r: BasisSet,
    basis_c: BasisSet,
) -> FidelityTensor:
    """``F[i,j,k,l] = sum_e T_e[i,k] conj(T_e[j,l]) / n_S^2`` with ``T_e[i,k] = Tr L^H B_Ri E_e B_Ck``."""
    ns, nc = basis_r.ns, basis_r.nc
    if basis_r.kind != "recovery" or basis_c.kind != "encoding" or (basis_c.ns, basis_c.nc) != (ns, nc):
        raise DimensionError("need a recovery basis and a matching encoding basis")
    _check_error(error, nc)
    l_dag = linalg.dag(_target(target, ns))
    e = np.array(error.kraus)
    t = np.einsum("ab,ibc,ecd,kda->eik", l_dag, basis_r.elements, e, basis_c.elements)
    return FidelityTensor(np.einsum("eik,ejl->ijkl", t, t.conj()) / ns**2, ns, nc)


def assemble_w_recovery(
    error: QuantumChannel,
    encoding: QuantumChannel,
    target: np.ndarray | None = None,
    basis_r: BasisSet | None = None,
) -> np.ndarray:
    """Recovery data matrix: ``Tr(X_R W_R)`` is ``f_avg`` of the recovery with process matrix ``X_R``."""
    ns, nc = encoding.dim_in, encoding.dim_out
    _check_error(error, nc)
    basis_r = canonical_basis(ns, nc, "recovery") if basis_r is None else basis_r
    if (basis_r.rows, basis_r.cols) != (ns, nc):
        raise DimensionError("recovery basis does not match the encoding dimensions")
    l_dag = linalg.dag(_target(target, ns))
    # g[e,c,i] = Tr(B_i E_e C_c L^H) / n_S
    m = np.array([e @ c @ l_dag for e in error.kraus for c in encoding.kraus])
    g = np.einsum("iab,kba->ki", basis_r.elements, m) / ns
    return linalg.hermitian_part(g.conj().T @ g)


def assemble_w_encoding(
    error: QuantumChannel,
    recovery: QuantumChannel,
    target: np.ndarray | None = None,
    basis_c: BasisSet | None = None,
) -> np.ndarray:
    """Encoding data matrix: ``Tr(X_C W_C)`` is ``f_avg`` of the encoding with process matrix ``X_C``."""
    ns, nc = recovery.dim_out, recovery.dim_in
    _check_error(error, nc)
    basis_c = canonical_basis(ns, nc, "encoding") if basis_c is None else basis_c
    if (basis_c.rows, basis_c.cols) != (nc, ns):
        raise DimensionError("encoding basis does not match the recovery dimensions")
    l_dag = linalg.dag(_target(target, ns))
    m = np.array([l_dag @ r @ e for e in error.kraus for r in recovery.kraus])
    h = np.einsum("kab,rba->rk", basis_c.elements, m) / ns
    return linalg.hermitian_part(h.conj().T @ h)
