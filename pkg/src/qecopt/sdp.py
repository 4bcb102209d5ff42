"""Interior-point solvers for the process-matrix SDP and its Lagrange dual.

Primal::

    maximize   Tr(X W)
    subject to X >= 0,  sum_ij X_ij B_i^H B_j = I_m

Dual::

    minimize   Tr(Y)
    subject to K(Y) - W >= 0,  K(Y)_ij = Tr(B_j^H B_i Y)

All complex Hermitian LMIs are handed to a single real-symmetric barrier
core through the embedding ``A -> [[Re A, -Im A], [Im A, Re A]]``.  The
dual and primal solvers parameterise different variables (``Y`` versus the
null space of the equality constraint) so they check each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

import numpy as np

from . import linalg
from .errors import DimensionError, SolverError
from .fidelity import BasisSet
from .policy import DEFAULT_POLICY, NumericPolicy

TraceSink = Callable[[dict], None]


# ---------------------------------------------------------------- embedding


def embed(a: np.ndarray) -> np.ndarray:
    """Real symmetric embedding of a complex Hermitian matrix."""
    re, im = np.real(a), np.imag(a)
    return np.block([[re, -im], [im, re]])


def fold(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed` (averaging the redundant blocks)."""
    n = r.shape[0] // 2
    re = 0.5 * (r[:n, :n] + r[n:, n:])
    im = 0.5 * (r[n:, :n] - r[:n, n:])
    return re + 1j * im


# ---------------------------------------------------------------- problem data


@dataclass(frozen=True, eq=False)
class SdpProblem:
    """One or more data matrices ``W`` sharing an operator basis ``{B_i}`` (``r x m`` each)."""

    w_list: tuple[np.ndarray, ...]
    basis: np.ndarray
    kind: str = "generic"

    def __post_init__(self):
        basis = self.basis.elements if isinstance(self.basis, BasisSet) else np.asarray(self.basis, dtype=complex)
        object.__setattr__(self, "basis", basis)
        ws = (self.w_list,) if isinstance(self.w_list, np.ndarray) else tuple(self.w_list)
        ws = tuple(np.asarray(w, dtype=complex) for w in ws)
        object.__setattr__(self, "w_list", ws)
        n, r, m = basis.shape
        if n != r * m:
            raise DimensionError(f"basis has {n} elements but {r}x{m} matrices need {r * m}")
        gram = np.einsum("iab,jab->ij", basis.conj(), basis)
        if np.max(np.abs(gram - np.eye(n))) > 1e-10:
            raise DimensionError("basis is not orthonormal")
        if not ws:
            raise DimensionError("need at least one data matrix")
        for w in ws:
            if w.shape != (n, n):
                raise DimensionError(f"data matrix of shape {w.shape} does not match n={n}")
            if not linalg.is_hermitian(w, 1e-10):
                raise DimensionError("data matrix is not Hermitian")

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def r(self) -> int:
        return self.basis.shape[1]

    @property
    def m(self) -> int:
        return self.basis.shape[2]

    @property
    def w(self) -> np.ndarray:
        if len(self.w_list) != 1:
            raise ValueError("problem carries several data matrices; use w_list")
        return self.w_list[0]

    def constraint(self, x: np.ndarray) -> np.ndarray:
        """``sum_ij X_ij B_i^H B_j`` (an ``m x m`` matrix)."""
        b = self.basis
        return np.einsum("ij,iab,jac->bc", x, b.conj(), b)

    def k_map(self, y: np.ndarray) -> np.ndarray:
        """``K(Y)_ij = Tr(B_j^H B_i Y)``, the adjoint of :meth:`constraint`."""
        b = self.basis
        return np.einsum("jab,iac,cb->ij", b.conj(), b, y)


def single(problem: SdpProblem, w: np.ndarray) -> SdpProblem:
    return SdpProblem((w,), problem.basis, problem.kind)


@dataclass
class SdpSolution:
    x: np.ndarray
    y: np.ndarray
    primal_value: float
    dual_value: float
    gap: float
    iterations: int
    t: float | None = None
    weights: np.ndarray | None = None
    method: str = ""
    history: list = field(default_factory=list, repr=False)


@dataclass
class CertificateReport:
    gap: float
    slackness_residual: float
    equality_residual: float
    primal_min_eig: float
    dual_slack_min_eig: float
    weight_slackness: float
    passed: bool

    def to_dict(self) -> dict:
        return {k: (bool(v) if k == "passed" else float(v)) for k, v in self.__dict__.items()}


# ---------------------------------------------------------------- barrier core


@dataclass
class _Block:
    f0: np.ndarray  # (d, d) real symmetric
    fk: np.ndarray  # (p, d, d)


@dataclass
class _BarrierResult:
    y: np.ndarray
    t: float
    iterations: int
    s_inv: list  # inverse of each block at the final iterate
    measure: float
    history: list


def _cholesky(s: np.ndarray) -> np.ndarray | None:
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        return None


def _block_value(block: _Block, y: np.ndarray) -> np.ndarray:
    return block.f0 + np.tensordot(y, block.fk, axes=1)


def _barrier_value(blocks: Sequence[_Block], y: np.ndarray) -> tuple[float, list] | None:
    """``-sum log det F_b(y)`` and the Cholesky factors, or ``None`` outside the domain."""
    total = 0.0
    factors = []
    for blk in blocks:
        chol = _cholesky(_block_value(blk, y))
        if chol is None:
            return None
        total -= 2.0 * float(np.sum(np.log(np.diag(chol))))
        factors.append(chol)
    return total, factors


def _barrier_lmi(
    c: np.ndarray,
    blocks: Sequence[_Block],
    y0: np.ndarray,
    policy: NumericPolicy,
    trace: TraceSink | None = None,
    label: str = "",
) -> _BarrierResult:
    """Minimise ``c.y`` subject to ``F_b(y) > 0`` for every block, by the barrier method."""
    theta = float(sum(b.f0.shape[0] for b in blocks))
    y = np.array(y0, dtype=float)
    start = _barrier_value(blocks, y)
    if start is None:
        raise SolverError(f"{label}: starting point is not strictly feasible")
    phi_b, factors = start
    t = 1.0
    iterations = 0
    history = []
    while True:
        # centering
        while True:
            if iterations >= policy.max_newton_iters:
                raise SolverError(
                    f"{label}: Newton iteration cap {policy.max_newton_iters} reached "
                    f"(duality measure {theta / t:.2e})"
                )
            grad = t * c
            hess = np.zeros((c.size, c.size))
            for blk, chol in zip(blocks, factors):
                linv = np.linalg.inv(chol)
                g = linv @ blk.fk @ linv.T
                grad = grad - np.einsum("kii->k", g)
                gf = g.reshape(c.size, -1)
                hess += gf @ gf.T
            try:
                dy = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                dy = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            decrement = float(-grad @ dy)
            iterations += 1
            if decrement / 2.0 <= policy.newton_decrement_tol:
                step = 0.0
                _emit(trace, history, label, iterations, float(c @ y), theta / t, step)
                break
            phi = t * float(c @ y) + phi_b
            step = 1.0
            while True:
                trial = y + step * dy
                val = _barrier_value(blocks, trial)
                if val is not None and t * float(c @ trial) + val[0] <= phi - 0.01 * step * decrement:
                    break
                step *= 0.5
                if step < 1e-14:
                    break
            if step < 1e-14:
                # no further progress is representable at this t
                _emit(trace, history, label, iterations, float(c @ y), theta / t, 0.0)
                break
            y = trial
            phi_b, factors = val
            _emit(trace, history, label, iterations, float(c @ y), theta / t, step)
            if phi - (t * float(c @ y) + phi_b) <= 64.0 * np.finfo(float).eps * max(1.0, abs(phi)):
                # decrease at roundoff level: as centred as floating point allows
                break
        if theta / t <= policy.duality_measure_tol:
            break
        t = min(t * policy.barrier_growth, theta / policy.duality_measure_tol)
    s_inv = []
    for chol in factors:
        linv = np.linalg.inv(chol)
        s_inv.append(linv.T @ linv)
    return _BarrierResult(y, t, iterations, s_inv, theta / t, history)


def _emit(trace, history, label, iteration, objective, measure, step):
    rec = {"solver": label, "iteration": iteration, "objective": objective,
           "duality_measure": measure, "step": step}
    history.append(rec)
    if trace is not None:
        trace(rec)


def json_trace_sink(stream: TextIO) -> TraceSink:
    """A trace sink writing one JSON object per Newton iteration."""

    def sink(rec: dict) -> None:
        stream.write(json.dumps(rec) + "\n")

    return sink


def text_trace_sink(stream: TextIO) -> TraceSink:
    def sink(rec: dict) -> None:
        stream.write(
            f"{rec['solver']:>8s} {rec['iteration']:4d} obj={rec['objective']: .12e} "
            f"mu={rec['duality_measure']:.2e} step={rec['step']:.3g}\n"
        )

    return sink


# ---------------------------------------------------------------- dual path


def _herm_images(fn, dim: int) -> tuple[np.ndarray, np.ndarray]:
    basis = linalg.hermitian_basis(dim)
    return basis, np.array([fn(h) for h in basis])


def solve_dual(
    p: SdpProblem,
    policy: NumericPolicy = DEFAULT_POLICY,
    trace: TraceSink | None = None,
) -> SdpSolution:
    """Solve the dual SDP by the barrier method, then recover ``X`` by complementary slackness."""
    w = p.w
    hbasis, kimg = _herm_images(p.k_map, p.m)
    c = np.real(np.einsum("kii->k", hbasis))
    block = _Block(embed(-w), np.array([embed(k) for k in kimg]))
    # K(cI) = cI for an orthonormal basis
    lam = linalg.hermitian_eig(w, 1e-10)[0][0] if np.any(w) else 0.0
    y0 = linalg.herm_to_vec((lam + 1.0) * np.eye(p.m))
    res = _barrier_lmi(c, [block], y0, policy, trace, "dual")
    y = linalg.vec_to_herm(res.y, p.m)
    x = dual_to_primal(p, y, policy)
    primal = float(np.real(np.trace(x @ w)))
    dual = float(np.real(np.trace(y)))
    return SdpSolution(x, y, primal, dual, abs(dual - primal), res.iterations, method="dual",
                       history=res.history)


def dual_to_primal(p: SdpProblem, y: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Primal optimum from a dual optimum.

    ``X = V Z V^H`` where ``V`` spans the near-null eigenspace of
    ``K(Y) - W`` (so ``(K(Y) - W) X ~ 0``) and ``Z`` is the minimal-norm
    solution of the equality constraint restricted to that subspace.

    Raises:
        SolverError: if no PSD solution exists inside the null space, even
            after widening the cutoff once.
    """
    w = p.w
    s = p.k_map(y) - w
    evals, evecs = linalg.hermitian_eig(linalg.hermitian_part(s), tol=1e-8)
    scale = max(linalg.spectral_norm(w), 1.0)
    target = np.eye(p.m).ravel()
    failure = ""
    for cutoff in (policy.nullspace_cutoff, policy.nullspace_cutoff_wide):
        v = evecs[:, evals <= cutoff * scale]
        k = v.shape[1]
        if k == 0:
            failure = "empty null space"
            continue
        cols = [p.constraint(np.outer(v[:, a], v[:, b].conj())).ravel() for a in range(k) for b in range(k)]
        try:
            z = linalg.solve_constrained_nullspace(np.array(cols).T, target, k, tol=policy.equality_tol)
        except np.linalg.LinAlgError as exc:
            failure = str(exc)
            continue
        zw, zv = linalg.hermitian_eig(z, tol=1e-8)
        if zw[-1] < -policy.equality_tol:
            failure = f"null-space solution not PSD (min eigenvalue {zw[-1]:.2e})"
            continue
        z = (zv * np.clip(zw, 0.0, None)) @ linalg.dag(zv)
        x = linalg.hermitian_part(v @ z @ linalg.dag(v))
        if np.max(np.abs(p.constraint(x) - np.eye(p.m))) <= policy.equality_tol:
            return x
        failure = "equality residual too large after PSD clipping"
    raise SolverError(f"dual-to-primal recovery failed: {failure}")


# ---------------------------------------------------------------- primal path


@dataclass
class _PrimalParam:
    x0: np.ndarray
    dirs: np.ndarray  # (q, n, n) Hermitian directions spanning the constraint null space


def _primal_parameterisation(p: SdpProblem) -> _PrimalParam:
    hbasis, aimg = _herm_images(p.constraint, p.n)
    amat = np.array([linalg.herm_to_vec(a) for a in aimg]).T  # (m^2, n^2)
    _, sv, vh = np.linalg.svd(amat)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    null = vh[rank:]  # (n^2 - rank, n^2)
    dirs = np.einsum("qk,kij->qij", null, hbasis)
    return _PrimalParam(np.eye(p.n, dtype=complex) / p.r, dirs)


def _dual_from_central(p: SdpProblem, x: np.ndarray, w_eff: np.ndarray, mu: float) -> np.ndarray:
    """Least-squares ``Y`` from the centrality condition ``(K(Y) - W) X = mu I``.

    Written in this multiplied-out form the equation never inverts the
    (nearly singular) optimal ``X``.
    """
    hbasis, kimg = _herm_images(p.k_map, p.m)
    cols = np.array([(k @ x).ravel() for k in kimg]).T
    rhs = (w_eff @ x + mu * np.eye(p.n)).ravel()
    a = np.vstack([cols.real, cols.imag])
    b = np.concatenate([rhs.real, rhs.imag])
    coords = np.linalg.lstsq(a, b, rcond=None)[0]
    y = linalg.vec_to_herm(coords, p.m)
    # K(cI) = cI, so a scalar shift restores exact dual feasibility
    deficit = -linalg.hermitian_eig(linalg.hermitian_part(p.k_map(y) - w_eff), 1e-8)[0][-1]
    if deficit > 0:
        y = y + deficit * np.eye(p.m)
    return y


def solve_primal(
    p: SdpProblem,
    policy: NumericPolicy = DEFAULT_POLICY,
    trace: TraceSink | None = None,
) -> SdpSolution:
    """Log-det barrier directly on ``X``, equality eliminated by a null-space parameterisation.

    The dual certificate is read off the final central point,
    ``K(Y) = W + X^{-1} / t``.
    """
    w = p.w
    par = _primal_parameterisation(p)
    c = -np.real(np.einsum("qij,ji->q", par.dirs, w))
    block = _Block(embed(par.x0), np.array([embed(d) for d in par.dirs]))
    res = _barrier_lmi(c, [block], np.zeros(c.size), policy, trace, "primal")
    x = linalg.hermitian_part(par.x0 + np.einsum("q,qij->ij", res.y, par.dirs))
    # the embedded barrier is -2 log det X, hence mu = 2 / t
    y = _dual_from_central(p, x, w, 2.0 / res.t)
    primal = float(np.real(np.trace(x @ w)))
    dual = float(np.real(np.trace(y)))
    return SdpSolution(x, y, primal, dual, abs(dual - primal), res.iterations, method="primal",
                       history=res.history)


def solve_robust(
    p: SdpProblem,
    policy: NumericPolicy = DEFAULT_POLICY,
    trace: TraceSink | None = None,
) -> SdpSolution:
    """Worst-case design: maximise ``t`` subject to ``Tr(X W_a) >= t`` for every ``a``.

    Returns ``t`` (the worst-case value) and the dual certificate ``(Y,
    weights)`` where ``K(Y) - sum_a weights[a] W_a >= 0`` and the weights
    lie on the simplex.
    """
    ws = p.w_list
    par = _primal_parameterisation(p)
    q = par.dirs.shape[0]
    c = np.zeros(q + 1)
    c[-1] = -1.0
    fx = np.array([embed(d) for d in par.dirs] + [np.zeros((2 * p.n, 2 * p.n))])
    blocks = [_Block(embed(par.x0), fx)]
    for w in ws:
        f0 = np.array([[float(np.real(np.trace(par.x0 @ w)))]])
        fk = np.real(np.einsum("qij,ji->q", par.dirs, w))
        blocks.append(_Block(f0, np.concatenate([fk, [-1.0]])[:, None, None]))
    start_t = min(float(np.real(np.trace(par.x0 @ w))) for w in ws) - 1.0
    y0 = np.concatenate([np.zeros(q), [start_t]])
    res = _barrier_lmi(c, blocks, y0, policy, trace, "robust")
    x = linalg.hermitian_part(par.x0 + np.einsum("q,qij->ij", res.y[:q], par.dirs))
    t_val = float(res.y[-1])
    weights = np.array([float(s[0, 0]) for s in res.s_inv[1:]])
    # stationarity in t forces sum(weights) = 1; residual centering error is removed here
    weights = weights / weights.sum()
    y = _dual_from_central(p, x, sum(a * w for a, w in zip(weights, ws)), 2.0 / res.t)
    dual = float(np.real(np.trace(y)))
    return SdpSolution(x, y, t_val, dual, abs(dual - t_val), res.iterations, t=t_val, weights=weights,
                       method="robust", history=res.history)


# ---------------------------------------------------------------- certificates


def certify(sol: SdpSolution, p: SdpProblem, policy: NumericPolicy = DEFAULT_POLICY) -> CertificateReport:
    """Check the optimality conditions ``Tr XW = Tr Y`` and ``(K(Y) - W) X = 0``.

    For robust solutions ``W`` is the weighted combination given by the dual
    weights, and each weight times its constraint slack is also reported.
    """
    x, y = sol.x, sol.y
    if sol.weights is not None:
        w_eff = sum(a * w for a, w in zip(sol.weights, p.w_list))
        slacks = [float(np.real(np.trace(x @ w))) - sol.primal_value for w in p.w_list]
        weight_slack = float(max(abs(a * s) for a, s in zip(sol.weights, slacks)))
        primal = sol.primal_value
    else:
        w_eff = p.w
        weight_slack = 0.0
        primal = float(np.real(np.trace(x @ w_eff)))
    s = linalg.hermitian_part(p.k_map(y) - w_eff)
    gap = abs(float(np.real(np.trace(y))) - primal)
    slack = float(np.linalg.norm(s @ x, 2))
    eq = float(np.max(np.abs(p.constraint(x) - np.eye(p.m))))
    xmin = float(linalg.hermitian_eig(linalg.hermitian_part(x), 1e-8)[0][-1])
    smin = float(linalg.hermitian_eig(s, 1e-8)[0][-1])
    passed = (
        gap <= policy.gap_tol
        and slack <= policy.slackness_tol
        and weight_slack <= policy.slackness_tol
        and eq <= policy.equality_tol
        and xmin >= -policy.psd_tol
        and smin >= -policy.psd_tol * max(1.0, linalg.spectral_norm(w_eff))
    )
    return CertificateReport(gap, slack, eq, xmin, smin, weight_slack, passed)


# ---------------------------------------------------------------- complexity model

FLOP_MODES = ("primal_recovery", "primal_encoding", "dual_recovery", "dual_encoding", "dual")


def _rm(qs: int, qca: int, problem: str) -> tuple[int, int]:
    ns, nca = 2**qs, 2**qca
    nc = ns * nca
    return (ns, nc) if problem == "recovery" else (nc, ns)


def flop_estimate(qubits_sys: int, qubits_anc: int, mode: str) -> int:
    """Per-iteration flop model.

    Primal: ``r^2 (r^2 - 1)^2 m^6``; dual: ``r^2 m^6``, with ``(r, m) =
    (n_S, n_C)`` for the recovery problem and ``(n_C, n_S)`` for the
    encoding problem.  ``"dual"`` is the recovery dual.
    """
    if qubits_sys < 0 or qubits_anc < 0:
        raise ValueError("qubit counts must be non-negative")
    if mode not in FLOP_MODES:
        raise ValueError(f"mode must be one of {FLOP_MODES}")
    kind, _, problem = mode.partition("_")
    r, m = _rm(qubits_sys, qubits_anc, problem or "recovery")
    if kind == "primal":
        return r**2 * (r**2 - 1) ** 2 * m**6
    return r**2 * m**6


def dual_speedup(qubits_sys: int, qubits_anc: int, problem: str = "recovery") -> int:
    """Primal/dual flop ratio ``(r^2 - 1)^2``."""
    r, _ = _rm(qubits_sys, qubits_anc, problem)
    return (r**2 - 1) ** 2


def flop_table(qubits_sys: int, qubits_anc: int) -> list[dict]:
    rows = []
    for problem in ("recovery", "encoding"):
        r, m = _rm(qubits_sys, qubits_anc, problem)
        primal = flop_estimate(qubits_sys, qubits_anc, f"primal_{problem}")
        dual = flop_estimate(qubits_sys, qubits_anc, f"dual_{problem}")
        speedup = dual_speedup(qubits_sys, qubits_anc, problem)
        rows.append({
            "problem": problem, "r": r, "m": m, "primal_flops": primal, "dual_flops": dual,
            "speedup": speedup, "conversion_flops": r**2 * m**2,
            "in_model": speedup > 0,
        })
    return rows

