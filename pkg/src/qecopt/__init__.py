"""Quantum error-correction design by semidefinite programming.

Encodings and recoveries are optimised in turn, each half-step being a
convex SDP over a process matrix; see :mod:`qecopt.design`.
"""

from .channels import QuantumChannel, compose, compose_all, paper_error_channel, random_error_channel
from .design import DesignResult, ProcessMatrix, biconvex_design, partial_trace_recovery, robust_design
from .fidelity import f_avg, f_mixed, f_pure_estimate
from .policy import DEFAULT_POLICY, NumericPolicy
from .sdp import SdpProblem, SdpSolution, certify, solve_dual, solve_primal, solve_robust

__version__ = "0.1.0"

__all__ = [
    "QuantumChannel", "compose", "compose_all", "paper_error_channel", "random_error_channel",
    "DesignResult", "ProcessMatrix", "biconvex_design", "partial_trace_recovery", "robust_design",
    "f_avg", "f_mixed", "f_pure_estimate", "DEFAULT_POLICY", "NumericPolicy",
    "SdpProblem", "SdpSolution", "certify", "solve_dual", "solve_primal", "solve_robust",
]
