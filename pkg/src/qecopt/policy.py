"""Shared numeric tolerances.

Every tolerance used by the solvers and by the test-suite lives in
:class:`NumericPolicy`.  A JSON file named by the ``QECOPT_NUMERIC_POLICY``
environment variable may override any subset of the fields.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

ENV_VAR = "QECOPT_NUMERIC_POLICY"


@dataclass(frozen=True)
class NumericPolicy:
    # linear algebra
    symmetry_tol: float = 1e-12
    reconstruction_tol: float = 1e-10
    linear_solve_tol: float = 1e-8
    unitary_tol: float = 1e-8
    # channels
    tp_tol: float = 1e-10
    tp_tol_ingested: float = 1e-6
    # sdp
    duality_measure_tol: float = 1e-9
    max_newton_iters: int = 200
    barrier_growth: float = 20.0
    newton_decrement_tol: float = 1e-10
    nullspace_cutoff: float = 1e-7
    nullspace_cutoff_wide: float = 1e-5
    gap_tol: float = 1e-6
    slackness_tol: float = 1e-6
    equality_tol: float = 1e-6
    psd_tol: float = 1e-9
    # design
    kraus_cutoff: float = 1e-8
    dominance_ratio: float = 1e-3
    relaxation_drift_warn: float = 1e-5
    monotone_slack: float = 1e-7
    # fidelity
    fw_gap_tol: float = 1e-6
    fw_max_iters: int = 10000
    pure_restarts: int = 64

    def replace(self, **changes) -> "NumericPolicy":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_policy(path: str | os.PathLike | None = None) -> NumericPolicy:
    """Build a policy from defaults plus optional JSON overrides.

    ``path`` wins over the environment variable.  Unknown keys raise
    ``ValueError`` so that a misspelt override never passes silently.
    """
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return NumericPolicy()
    overrides = json.loads(Path(path).read_text())
    known = {f.name for f in dataclasses.fields(NumericPolicy)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown numeric-policy keys: {sorted(unknown)}")
    return NumericPolicy(**overrides)


DEFAULT_POLICY = NumericPolicy()
