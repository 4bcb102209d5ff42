"""Alternating (bi-convex) design of encodings and recoveries.

With the encoding fixed, the best recovery is a convex SDP in its process
matrix ``X_R``; with the recovery fixed, the same holds for the encoding
and ``X_C``.  :func:`biconvex_design` alternates the two half-steps and
:func:`robust_design` does the same for the worst case over several error
channels.  After every half-step the process matrix is turned back into a
Kraus set, and the fidelity is recomputed from that realisable channel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import linalg, sdp
from .channels import QuantumChannel, compose_all, project_to_tp
from .errors import ChannelError, DimensionError, NotUnitaryError, SolverError
from .fidelity import (
    BasisSet,
    assemble_w_encoding,
    assemble_w_recovery,
    canonical_basis,
    f_mixed,
    pipeline_f_avg,
)
from .policy import DEFAULT_POLICY, NumericPolicy

log = logging.getLogger(__name__)

Kind = Literal["recovery", "encoding"]


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    """Process matrix ``X`` together with the operator basis it refers to."""

    x: np.ndarray
    basis: BasisSet
    kind: Kind

    def __post_init__(self):
        n = len(self.basis)
        if self.x.shape != (n, n):
            raise DimensionError(f"process matrix of shape {self.x.shape} does not match basis size {n}")

    def eigenvalues(self) -> np.ndarray:
        return linalg.hermitian_eig(self.x, 1e-10)[0]

    def equality_residual(self) -> float:
        b = self.basis.elements
        lhs = np.einsum("ij,iab,jac->bc", self.x, b.conj(), b)
        return float(np.max(np.abs(lhs - np.eye(b.shape[2]))))

    def dominant_rank(self, ratio: float = DEFAULT_POLICY.dominance_ratio) -> int:
        return dominant_rank(self.eigenvalues(), ratio)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ns": self.basis.ns, "nc": self.basis.nc, "x": _cjson(self.x)}


def dominant_rank(values: np.ndarray, ratio: float = DEFAULT_POLICY.dominance_ratio) -> int:
    """Smallest ``k`` with ``s[k] / s[0] < ratio`` (values sorted descending)."""
    s = np.sort(np.abs(np.asarray(values, dtype=float)))[::-1]
    if s.size == 0 or s[0] == 0.0:
        return 0
    for k in range(1, s.size):
        if s[k] / s[0] < ratio:
            return k
    return int(s.size)


def _cjson(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return np.stack([m.real, m.imag], axis=-1).tolist()


def kraus_from_process(pm: ProcessMatrix, policy: NumericPolicy = DEFAULT_POLICY) -> QuantumChannel:
    """Kraus elements ``K_r = sqrt(s_r) sum_i V_ir B_i`` from ``X = V S V^H``.

    Eigenvalues at or below ``policy.kraus_cutoff * Tr X`` are dropped.

    Raises:
        ChannelError: if ``X`` has an eigenvalue below ``-policy.psd_tol``.
    """
    s, v = linalg.hermitian_eig(linalg.hermitian_part(pm.x), 1e-8)
    if s[-1] < -policy.psd_tol:
        raise ChannelError(f"process matrix is not PSD (min eigenvalue {s[-1]:.3e})")
    cutoff = policy.kraus_cutoff * float(np.sum(np.clip(s, 0.0, None)))
    keep = np.nonzero(s > cutoff)[0]
    if keep.size == 0:
        raise ChannelError("process matrix is zero")
    kraus = tuple(np.sqrt(s[r]) * pm.basis.combine(v[:, r]) for r in keep)
    return QuantumChannel(kraus, provenance={"source": f"{pm.kind} process matrix", "rank": int(keep.size)})


def partial_trace_recovery(ns: int, nca: int) -> QuantumChannel:
    """Recovery that discards the ancilla: ``(R_r)_{ij} = 1`` iff ``j = i * n_CA + r``."""
    if ns < 1 or nca < 1:
        raise ValueError("dimensions must be positive")
    kraus = []
    for r in range(nca):
        k = np.zeros((ns, ns * nca), dtype=complex)
        for i in range(ns):
            k[i, i * nca + r] = 1.0
        kraus.append(k)
    return QuantumChannel(tuple(kraus), provenance={"source": "partial-trace recovery", "ns": ns, "nca": nca})


def nearest_isometry(c: np.ndarray) -> np.ndarray:
    """Polar factor ``U V^H`` of ``c = U S V^H``: the closest matrix with orthonormal columns."""
    u, _, v = linalg.svd(c)
    return u @ linalg.dag(v)


def complete_isometry_to_unitary(c1: np.ndarray, tol: float = DEFAULT_POLICY.unitary_tol) -> np.ndarray:
    """Square unitary ``[c1 c2]`` whose leading columns are exactly ``c1``.

    The extra columns come from Gram-Schmidt (two passes) applied to the
    coordinate vectors ``e_0, e_1, ...`` in index order, skipping those that
    are numerically inside the span already built.

    Raises:
        NotUnitaryError: if ``c1^H c1`` differs from the identity by more than ``tol``.
    """
    c1 = np.asarray(c1, dtype=complex)
    n, k = c1.shape
    if k > n:
        raise DimensionError("an isometry cannot have more columns than rows")
    err = float(np.max(np.abs(linalg.dag(c1) @ c1 - np.eye(k)), initial=0.0))
    if err > tol:
        raise NotUnitaryError(f"columns are not orthonormal (max |C^H C - I| = {err:.3e})")
    cols = [c1[:, j] for j in range(k)]
    for idx in range(n):
        if len(cols) == n:
            break
        v = np.zeros(n, dtype=complex)
        v[idx] = 1.0
        for _ in range(2):
            for q in cols:
                v = v - np.vdot(q, v) * q
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            cols.append(v / norm)
    u = np.column_stack(cols)
    u[:, :k] = c1
    return u


# ---------------------------------------------------------------- half-steps


@dataclass
class HalfStep:
    channel: QuantumChannel
    process: ProcessMatrix
    solution: sdp.SdpSolution
    certificate: sdp.CertificateReport


def _realise(pm: ProcessMatrix, policy: NumericPolicy) -> QuantumChannel:
    ch = kraus_from_process(pm, policy)
    if ch.tp_residual() > policy.tp_tol:
        # dropped eigenvalues and solver round-off leave a tiny TP defect
        ch = project_to_tp(ch)
    return ch


def _solve(problem: sdp.SdpProblem, basis: BasisSet, policy: NumericPolicy, trace) -> HalfStep:
    if len(problem.w_list) > 1:
        sol = sdp.solve_robust(problem, policy, trace)
    else:
        sol = sdp.solve_dual(problem, policy, trace)
    cert = sdp.certify(sol, problem, policy)
    pm = ProcessMatrix(sol.x, basis, basis.kind)
    return HalfStep(_realise(pm, policy), pm, sol, cert)


def optimize_recovery(
    error: QuantumChannel | Sequence[QuantumChannel],
    encoding: QuantumChannel,
    target: np.ndarray | None = None,
    policy: NumericPolicy = DEFAULT_POLICY,
    trace=None,
) -> tuple[QuantumChannel, ProcessMatrix, sdp.SdpSolution]:
    """Best recovery for a fixed encoding (worst case when several errors are given)."""
    step = _recovery_step(_as_list(error), encoding, target, policy, trace)
    return step.channel, step.process, step.solution


def optimize_encoding(
    error: QuantumChannel | Sequence[QuantumChannel],
    recovery: QuantumChannel,
    target: np.ndarray | None = None,
    policy: NumericPolicy = DEFAULT_POLICY,
    trace=None,
) -> tuple[QuantumChannel, ProcessMatrix, sdp.SdpSolution]:
    """Best encoding for a fixed recovery (worst case when several errors are given)."""
    step = _encoding_step(_as_list(error), recovery, target, policy, trace)
    return step.channel, step.process, step.solution


def _as_list(error) -> list[QuantumChannel]:
    return [error] if isinstance(error, QuantumChannel) else list(error)


def _recovery_step(errors, encoding, target, policy, trace) -> HalfStep:
    basis = canonical_basis(encoding.dim_in, encoding.dim_out, "recovery")
    ws = tuple(assemble_w_recovery(e, encoding, target, basis) for e in errors)
    try:
        return _solve(sdp.SdpProblem(ws, basis, "recovery"), basis, policy, trace)
    except SolverError as exc:
        raise SolverError(f"recovery step: {exc}") from exc


def _encoding_step(errors, recovery, target, policy, trace) -> HalfStep:
    basis = canonical_basis(recovery.dim_out, recovery.dim_in, "encoding")
    ws = tuple(assemble_w_encoding(e, recovery, target, basis) for e in errors)
    try:
        return _solve(sdp.SdpProblem(ws, basis, "encoding"), basis, policy, trace)
    except SolverError as exc:
        raise SolverError(f"encoding step: {exc}") from exc


# ---------------------------------------------------------------- design loop


@dataclass
class DesignResult:
    """Outcome of an alternating design run.

    ``fidelity_trace`` holds ``(iteration, f_after_recovery_step,
    f_after_encoding_step)``; for robust runs these are worst-case values.
    ``bounds`` is ``(f_mixed, f_avg)`` of the final pipeline (worst case over
    the error channels for robust runs).
    """

    encoding: QuantumChannel
    recovery: QuantumChannel
    fidelity_trace: list = field(default_factory=list)
    final_f_avg: float = float("nan")
    bounds: tuple | None = None
    robust_worst_case: float | None = None
    per_error_f_avg: list = field(default_factory=list)
    x_recovery: ProcessMatrix | None = None
    x_encoding: ProcessMatrix | None = None
    y_recovery: np.ndarray | None = None
    y_encoding: np.ndarray | None = None
    certificates: list = field(default_factory=list)
    iterations: int = 0
    final_delta: float = float("nan")
    converged: bool = False
    error: str | None = None
    drift_events: list = field(default_factory=list)
    policy: NumericPolicy = DEFAULT_POLICY
    provenance: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        out = {
            "encoding": self.encoding.to_dict(),
            "recovery": self.recovery.to_dict(),
            "fidelity_trace": [list(row) for row in self.fidelity_trace],
            "final_f_avg": self.final_f_avg,
            "bounds": list(self.bounds) if self.bounds is not None else None,
            "robust_worst_case": self.robust_worst_case,
            "per_error_f_avg": list(self.per_error_f_avg),
            "iterations": self.iterations,
            "final_delta": self.final_delta,
            "converged": self.converged,
            "error": self.error,
            "drift_events": self.drift_events,
            "certificates": self.certificates,
            "numeric_policy": self.policy.to_dict(),
            "provenance": self.provenance,
        }
        for name in ("x_recovery", "x_encoding"):
            pm = getattr(self, name)
            out[name] = pm.to_dict() if pm is not None else None
        for name in ("y_recovery", "y_encoding"):
            y = getattr(self, name)
            out[name] = _cjson(y) if y is not None else None
        return out


def _fids(errors, recovery, encoding, target) -> list[float]:
    return [pipeline_f_avg(recovery, e, encoding, target) for e in errors]


def _record(result: DesignResult, step: HalfStep, value: float, errors, label: str, it: int, policy) -> None:
    cert = step.certificate.to_dict()
    cert.update({"iteration": it, "step": label})
    result.certificates.append(cert)
    if not step.certificate.passed:
        log.warning("%s step %d: certificate did not pass (%s)", label, it, cert)
    drift = abs(step.solution.primal_value - value)
    if drift > policy.relaxation_drift_warn:
        result.drift_events.append({"iteration": it, "step": label, "drift": drift})
        log.info("%s step %d: extracted channel differs from SDP value by %.2e", label, it, drift)


def _notify(callback, it, stage, recovery, encoding) -> None:
    if callback is not None:
        callback(it, stage, recovery, encoding)


def _alternate(
    errors: list[QuantumChannel],
    initial: QuantumChannel,
    target,
    epsilon: float,
    max_iters: int,
    order: str,
    policy: NumericPolicy,
    trace,
    with_bounds: bool,
    callback,
) -> DesignResult:
    if not errors:
        raise ValueError("need at least one error channel")
    if any((e.dim_in, e.dim_out) != (errors[0].dim_in, errors[0].dim_in) for e in errors):
        raise DimensionError("error channels must be square and share one dimension")
    if order not in ("encoding-first", "recovery-first"):
        raise ValueError("order must be 'encoding-first' or 'recovery-first'")
    initial.check_tp(max(policy.tp_tol_ingested, policy.tp_tol))
    robust = len(errors) > 1

    def worst(rec, enc):
        return min(_fids(errors, rec, enc, target))

    if order == "encoding-first":
        recovery, encoding = initial, None
    else:
        recovery, encoding = None, initial
    result = DesignResult(encoding=initial, recovery=initial, policy=policy)
    f_prev = -np.inf
    for it in range(1, max_iters + 1):
        try:
            if order == "encoding-first":
                es = _encoding_step(errors, recovery, target, policy, trace)
                encoding = es.channel
                f_enc = worst(recovery, encoding)
                _record(result, es, f_enc, errors, "encoding", it, policy)
                _notify(callback, it, "encoding", recovery, encoding)
                rs = _recovery_step(errors, encoding, target, policy, trace)
                recovery = rs.channel
                f_rec = worst(recovery, encoding)
                _record(result, rs, f_rec, errors, "recovery", it, policy)
                _notify(callback, it, "recovery", recovery, encoding)
                delta = f_rec - f_enc
                f_last = f_rec
            else:
                rs = _recovery_step(errors, encoding, target, policy, trace)
                recovery = rs.channel
                f_rec = worst(recovery, encoding)
                _record(result, rs, f_rec, errors, "recovery", it, policy)
                _notify(callback, it, "recovery", recovery, encoding)
                es = _encoding_step(errors, recovery, target, policy, trace)
                encoding = es.channel
                f_enc = worst(recovery, encoding)
                _record(result, es, f_enc, errors, "encoding", it, policy)
                _notify(callback, it, "encoding", recovery, encoding)
                delta = f_enc - f_rec
                f_last = f_enc
        except SolverError as exc:
            result.error = f"iteration {it}: {exc}"
            log.error("design stopped early: %s", result.error)
            break
        result.fidelity_trace.append((it, f_rec, f_enc))
        result.encoding, result.recovery = encoding, recovery
        result.x_recovery, result.x_encoding = rs.process, es.process
        result.y_recovery, result.y_encoding = rs.solution.y, es.solution.y
        result.iterations = it
        result.final_delta = delta
        if f_last < f_prev - policy.monotone_slack:
            log.warning("fidelity decreased at iteration %d: %.3e", it, f_last - f_prev)
        f_prev = f_last
        if delta < epsilon:
            result.converged = True
            break

    if result.iterations == 0:
        return result
    fids = _fids(errors, result.recovery, result.encoding, target)
    result.per_error_f_avg = fids
    result.final_f_avg = min(fids)
    if robust:
        result.robust_worst_case = result.final_f_avg
    if with_bounds:
        lows = [f_mixed(compose_all([result.recovery, e, result.encoding]), target, policy).value for e in errors]
        result.bounds = (min(lows), result.final_f_avg)
    return result


def biconvex_design(
    error: QuantumChannel,
    initial_recovery: QuantumChannel | None = None,
    target: np.ndarray | None = None,
    epsilon: float = 1e-6,
    max_iters: int = 100,
    order: str = "encoding-first",
    policy: NumericPolicy = DEFAULT_POLICY,
    trace=None,
    with_bounds: bool = True,
    callback=None,
) -> DesignResult:
    """Alternate encoding and recovery SDPs until the fidelity gain drops below ``epsilon``.

    ``initial_recovery`` defaults to discarding a qubit-sized ancilla
    (``n_CA = 2``) when ``order`` is ``"encoding-first"``; with
    ``"recovery-first"`` the argument is taken as the initial encoding.
    The stopping quantity is the gain of the second half-step of an
    iteration.  Solver failures end the loop and are reported in
    ``result.error`` together with the iterations completed so far.

    ``callback(iteration, stage, recovery, encoding)``, if given, is called
    after every half-step with the channels current at that point.
    """
    initial = initial_recovery
    if initial is None:
        nc = error.dim_in
        if order != "encoding-first" or nc % 2:
            raise ValueError("an explicit initial channel is required here")
        initial = partial_trace_recovery(nc // 2, 2)
    return _alternate([error], initial, target, epsilon, max_iters, order, policy, trace, with_bounds, callback)


def robust_design(
    errors: Sequence[QuantumChannel],
    initial_recovery: QuantumChannel,
    target: np.ndarray | None = None,
    epsilon: float = 1e-6,
    max_iters: int = 100,
    order: str = "encoding-first",
    policy: NumericPolicy = DEFAULT_POLICY,
    trace=None,
    with_bounds: bool = True,
    callback=None,
) -> DesignResult:
    """Worst-case design over several error channels; each half-step is an epigraph SDP."""
    errors = list(errors)
    if len(errors) < 2:
        raise ValueError("robust design needs at least two error channels")
    return _alternate(errors, initial_recovery, target, epsilon, max_iters, order, policy, trace, with_bounds, callback)

