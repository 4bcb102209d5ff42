"""Command-line front end.

Subcommands::

    qecopt design --config CFG --out DIR
    qecopt robust --config CFG --out DIR
    qecopt reproduce-paper --out DIR [--dry-run] [--jobs N]
    qecopt channel-gen --seed N --delta-e D --out DIR
    qecopt fidelity --config CFG [--out DIR]
    qecopt export-magnitudes REPORT --out DIR
    qecopt flops --qs 1 --qca 1

Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 a reproduced
table cell outside its tolerance.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import channels, design, fidelity, sdp
from .channels import QuantumChannel, matrix_from_json
from .errors import ConfigError, QecoptError, SolverError
from .policy import NumericPolicy, load_policy

log = logging.getLogger("qecopt")

CONFIG_SCHEMA = "qecopt-config"
CONFIG_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_REPRODUCTION = 0, 1, 2, 3


# ---------------------------------------------------------------- configuration


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    Channel sources are dicts with exactly one of the keys ``file``,
    ``paper`` (``"E_a"``/``"E_b"``), ``random`` (``seed``, ``delta_e``,
    ``dim_sys``, ``dim_bath``), ``identity`` (dimension) or
    ``partial_trace`` (``[ns, nca]``).
    """

    mode: str
    errors: list
    initial: dict | None = None
    recovery: dict | None = None
    encoding: dict | None = None
    target: np.ndarray | None = None
    epsilon: float = 1e-6
    max_iters: int = 100
    order: str = "encoding-first"
    policy: NumericPolicy = field(default_factory=NumericPolicy)
    base_dir: Path = Path(".")
    input_hashes: dict = field(default_factory=dict)


MODES = ("design", "robust", "reproduce-paper", "channel-gen", "fidelity")


def _field_error(path: str, msg: str) -> ConfigError:
    return ConfigError(f"config field '{path}': {msg}")


def load_config(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    """Parse and validate a JSON config file.

    Raises:
        ConfigError: with the offending line (syntax errors) or field path.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    if data.get("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
        raise _field_error("schema", f"expected {CONFIG_SCHEMA!r}")
    if data.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise _field_error("version", f"unsupported version {data.get('version')!r}")
    mode = data.get("mode")
    if mode not in MODES:
        raise _field_error("mode", f"must be one of {MODES}")
    errors = data.get("errors")
    if errors is None and "error" in data:
        errors = [data["error"]]
    if not isinstance(errors, list) or not errors:
        raise _field_error("errors", "a non-empty list of channel sources is required")
    if mode == "robust" and len(errors) < 2:
        raise _field_error("errors", "robust mode needs at least two error channels")
    eps = data.get("epsilon", 1e-6)
    if not isinstance(eps, (int, float)) or eps <= 0:
        raise _field_error("epsilon", "must be a positive number")
    iters = data.get("max_iters", 100)
    if not isinstance(iters, int) or iters < 1:
        raise _field_error("max_iters", "must be a positive integer")
    order = data.get("order", "encoding-first")
    if order not in ("encoding-first", "recovery-first"):
        raise _field_error("order", "must be 'encoding-first' or 'recovery-first'")
    try:
        policy = NumericPolicy(**{**load_policy().to_dict(), **data.get("numeric_policy", {})})
    except TypeError as exc:
        raise _field_error("numeric_policy", str(exc)) from exc
    target = None
    if data.get("target") is not None:
        try:
            target = matrix_from_json(data["target"])
        except (TypeError, ValueError) as exc:
            raise _field_error("target", f"not a complex matrix: {exc}") from exc
    cfg = ExperimentConfig(
        mode=mode, errors=errors, initial=data.get("initial_recovery"), recovery=data.get("recovery"),
        encoding=data.get("encoding"), target=target, epsilon=float(eps), max_iters=iters, order=order,
        policy=policy, base_dir=path.parent,
    )
    cfg.input_hashes["config"] = _sha256(raw)
    if seed is not None:
        for src in errors:
            if isinstance(src, dict) and isinstance(src.get("random"), dict):
                src["random"].setdefault("seed", seed)
    return cfg


def resolve_channel(src, cfg: ExperimentConfig, where: str) -> QuantumChannel:
    """Build a channel from a config source dict."""
    if not isinstance(src, dict) or len(src) != 1:
        raise _field_error(where, "a channel source must be an object with exactly one key")
    (kind, arg), = src.items()
    try:
        if kind == "file":
            p = Path(arg)
            p = p if p.is_absolute() else cfg.base_dir / p
            if not p.exists():
                raise _field_error(where, f"file {p} does not exist")
            cfg.input_hashes[str(arg)] = _sha256(p.read_bytes())
            ch = channels.load_channel(p)
            if not ch.is_trace_preserving(cfg.policy.tp_tol):
                ch.check_tp(cfg.policy.tp_tol_ingested)
                ch = channels.project_to_tp(ch)
            return ch
        if kind == "paper":
            cfg.input_hashes[f"paper:{arg}"] = _sha256(_paper_file_bytes(arg))
            return channels.paper_error_channel(arg)
        if kind == "random":
            return channels.random_error_channel(
                int(arg["seed"]), float(arg.get("delta_e", 0.75)),
                int(arg.get("dim_sys", 4)), int(arg.get("dim_bath", 2)),
            )
        if kind == "identity":
            return channels.identity_channel(int(arg))
        if kind == "partial_trace":
            ns, nca = arg
            return design.partial_trace_recovery(int(ns), int(nca))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, QecoptError) as exc:
        raise _field_error(where, f"{type(exc).__name__}: {exc}") from exc
    raise _field_error(where, f"unknown channel source {kind!r}")


def _paper_file_bytes(name: str) -> bytes:
    files = {"E_a": "error_a.json", "E_b": "error_b.json"}
    if name not in files:
        raise ValueError(f"unknown shipped channel {name!r}")
    return resources.files("qecopt").joinpath("data").joinpath(files[name]).read_bytes()


def _default_initial(cfg: ExperimentConfig, errors: list[QuantumChannel]) -> QuantumChannel:
    if cfg.initial is not None:
        return resolve_channel(cfg.initial, cfg, "initial_recovery")
    nc = errors[0].dim_in
    if nc % 2:
        raise _field_error("initial_recovery", "required when the code dimension is odd")
    return design.partial_trace_recovery(nc // 2, 2)


# ---------------------------------------------------------------- output helpers


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def write_trace_csv(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "f_after_recovery", "f_after_encoding"])
        for it, fr, fe in rows:
            w.writerow([it, repr(float(fr)), repr(float(fe))])


def write_matrix_csv(path: Path, m: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(m, dtype=float), delimiter=",", fmt="%.17g")


def read_matrix_csv(path: Path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def _solver_trace(out: Path | None, enabled: bool):
    if not enabled or out is None:
        return None, None
    out.mkdir(parents=True, exist_ok=True)
    fh = (out / "solver_trace.jsonl").open("w")
    return sdp.json_trace_sink(fh), fh


# ---------------------------------------------------------------- commands


def cmd_design(args) -> int:
    cfg = load_config(args.config, args.seed)
    if cfg.mode not in ("design", "robust"):
        raise _field_error("mode", f"expected 'design' or 'robust' for this command, got {cfg.mode!r}")
    robust = args.command == "robust"
    errors = [resolve_channel(src, cfg, f"errors[{i}]") for i, src in enumerate(cfg.errors)]
    if robust and len(errors) < 2:
        raise _field_error("errors", "robust mode needs at least two error channels")
    initial = _default_initial(cfg, errors)
    out = Path(args.out)
    if args.dry_run:
        print(f"would run {'robust' if robust else 'bi-convex'} design: {len(errors)} error channel(s), "
              f"up to {cfg.max_iters} iterations, epsilon {cfg.epsilon:g}, output {out}")
        return EXIT_OK
    sink, fh = _solver_trace(out, args.trace)
    try:
        if robust:
            res = design.robust_design(errors, initial, cfg.target, cfg.epsilon, cfg.max_iters, cfg.order,
                                       cfg.policy, sink)
        else:
            res = design.biconvex_design(errors[0], initial, cfg.target, cfg.epsilon, cfg.max_iters, cfg.order,
                                         cfg.policy, sink)
    finally:
        if fh is not None:
            fh.close()
    res.provenance = {"input_hashes": dict(cfg.input_hashes), "command": args.command}
    _write_json(out / "report.json", res.to_dict())
    write_trace_csv(out / "trace.csv", res.fidelity_trace)
    print(f"final f_avg {res.final_f_avg:.6f} after {res.iterations} iterations "
          f"(converged: {res.converged}); wrote {out / 'report.json'}")
    if res.error is not None:
        print(f"solver failure: {res.error}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _load_expectations() -> dict:
    text = resources.files("qecopt").joinpath("data").joinpath("expectations.json").read_text()
    return json.loads(text)


def _run_table_design(label: str, policy: NumericPolicy, protocol: dict) -> dict:
    ea, eb = channels.paper_error_channel("E_a"), channels.paper_error_channel("E_b")
    initial = design.partial_trace_recovery(protocol["ns"], protocol["nca"])
    snaps: dict = {}

    def keep(it, stage, recovery, encoding):
        if it == 1:
            snaps[f"{stage}_1"] = (recovery, encoding)

    kwargs = dict(target=None, epsilon=protocol["epsilon"], max_iters=protocol["max_iters"],
                  order=protocol["order"], policy=policy, callback=keep)
    if label == "ab":
        res = design.robust_design([ea, eb], initial, **kwargs)
    else:
        res = design.biconvex_design(ea if label == "a" else eb, initial, **kwargs)
    snaps["final"] = (res.recovery, res.encoding)
    values = {
        stage: {"E_a": fidelity.pipeline_f_avg(r, ea, c), "E_b": fidelity.pipeline_f_avg(r, eb, c)}
        for stage, (r, c) in snaps.items()
    }
    return {"label": label, "result": res, "values": values}


def reproduce_paper(policy: NumericPolicy | None = None, jobs: int = 1) -> dict:
    """Run both fidelity tables of the worked example and compare with the printed values."""
    policy = policy or load_policy()
    exp = _load_expectations()
    labels = ("a", "b", "ab")
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        runs = dict(zip(labels, pool.map(lambda lb: _run_table_design(lb, policy, exp["protocol"]), labels)))
    cells = []
    for table in ("table1", "table2"):
        for row in exp[table]:
            got = runs[row["design"]]["values"][row["stage"]]
            for col in ("E_a", "E_b"):
                diff = got[col] - row[col]
                cells.append({
                    "table": table, "row": row["row"], "error": col, "computed": got[col],
                    "paper": row[col], "tolerance": row["tol"][col], "passed": abs(diff) <= row["tol"][col],
                })
    robust = runs["ab"]["result"]
    spread = max(robust.per_error_f_avg) - min(robust.per_error_f_avg)
    certs = [c for run in runs.values() for c in run["result"].certificates]
    return {
        "cells": cells,
        "robust_per_error": robust.per_error_f_avg,
        "robust_spread": spread,
        "robust_equal_passed": spread <= exp["robust_equal_tol"],
        "certificates_passed": all(c["passed"] for c in certs),
        "n_certificates": len(certs),
        "max_gap": max(c["gap"] for c in certs),
        "max_slackness": max(c["slackness_residual"] for c in certs),
        "solver_errors": [run["result"].error for run in runs.values() if run["result"].error],
        "runs": {k: v["result"] for k, v in runs.items()},
    }


def export_magnitudes(result: dict, out: Path) -> list[Path]:
    """Write entrywise magnitudes of the final primal/dual pairs as CSV files."""
    written = []
    for key, name in (("x_encoding", "X_C"), ("y_encoding", "Y_C"), ("x_recovery", "X_R"), ("y_recovery", "Y_R")):
        val = result.get(key)
        if val is None:
            raise ConfigError(f"result has no '{key}' entry; nothing to export")
        mat = matrix_from_json(val["x"] if isinstance(val, dict) else val)
        path = out / "magnitudes" / f"{name}.csv"
        write_matrix_csv(path, np.abs(mat))
        written.append(path)
    return written


def cmd_reproduce(args) -> int:
    out = Path(args.out)
    exp = _load_expectations()
    if args.dry_run:
        print("planned solves (no solver is run):")
        for label, what in (("a", "bi-convex design against E_a"), ("b", "bi-convex design against E_b"),
                            ("ab", "robust design against {E_a, E_b}")):
            print(f"  [{label}] {what}: {exp['protocol']['max_iters']} iterations, 2 SDPs each, "
                  f"starting from the partial-trace recovery")
        for table in ("table1", "table2"):
            for row in exp[table]:
                print(f"  {table} {row['row']}: E_a {row['E_a']} +/- {row['tol']['E_a']}, "
                      f"E_b {row['E_b']} +/- {row['tol']['E_b']}")
        return EXIT_OK
    rep = reproduce_paper(load_policy(), args.jobs)
    runs = rep.pop("runs")
    for label, res in runs.items():
        _write_json(out / f"design_{label}.json", res.to_dict())
        write_trace_csv(out / f"trace_{label}.csv", res.fidelity_trace)
        export_magnitudes(res.to_dict(), out / label)
    hashes = {f"paper:{n}": _sha256(_paper_file_bytes(n)) for n in channels.PAPER_CHANNELS}
    rep["input_hashes"] = hashes
    _write_json(out / "report.json", rep)
    for c in rep["cells"]:
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"{mark} {c['table']} {c['row']:<16s} vs {c['error']}: computed {c['computed']:.4f} "
              f"paper {c['paper']:.4f} (tol {c['tolerance']})")
    print(f"{'PASS' if rep['robust_equal_passed'] else 'FAIL'} robust per-error spread {rep['robust_spread']:.2e}")
    print(f"{'PASS' if rep['certificates_passed'] else 'FAIL'} {rep['n_certificates']} SDP certificates "
          f"(max gap {rep['max_gap']:.1e}, max slackness {rep['max_slackness']:.1e})")
    if rep["solver_errors"]:
        print("solver failures: " + "; ".join(rep["solver_errors"]), file=sys.stderr)
        return EXIT_SOLVER
    ok = all(c["passed"] for c in rep["cells"]) and rep["robust_equal_passed"]
    return EXIT_OK if ok else EXIT_REPRODUCTION


def cmd_channel_gen(args) -> int:
    if args.delta_e <= 0:
        raise ConfigError("--delta-e must be positive")
    ch = channels.random_error_channel(args.seed, args.delta_e, args.dim_sys, args.dim_bath)
    path = Path(args.out) / "channel.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    channels.save_channel(ch, path)
    print(f"wrote {path} ({len(ch)} Kraus elements, {ch.dim_out}x{ch.dim_in})")
    return EXIT_OK


def cmd_fidelity(args) -> int:
    cfg = load_config(args.config, args.seed)
    if cfg.recovery is None or cfg.encoding is None:
        raise _field_error("recovery/encoding", "fidelity mode needs both a recovery and an encoding")
    err = resolve_channel(cfg.errors[0], cfg, "errors[0]")
    rec = resolve_channel(cfg.recovery, cfg, "recovery")
    enc = resolve_channel(cfg.encoding, cfg, "encoding")
    s = channels.compose_all([rec, err, enc])
    mixed = fidelity.f_mixed(s, cfg.target, cfg.policy)
    rep = {
        "f_avg": fidelity.f_avg(s, cfg.target),
        "f_pure_estimate": fidelity.f_pure_estimate(s, cfg.target, cfg.policy.pure_restarts,
                                                    args.seed if args.seed is not None else 0),
        "f_mixed": mixed.value,
        "f_mixed_gap": mixed.fw_gap,
        "argmin_eigenvalues": np.asarray(mixed.eigenvalues).tolist(),
        "input_hashes": cfg.input_hashes,
    }
    for k in ("f_avg", "f_pure_estimate", "f_mixed"):
        print(f"{k:16s} {rep[k]:.10f}")
    if args.out:
        _write_json(Path(args.out) / "report.json", rep)
    return EXIT_OK


def cmd_export(args) -> int:
    path = Path(args.result)
    try:
        result = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read result file {path}: {exc}") from exc
    for p in export_magnitudes(result, Path(args.out)):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_flops(args) -> int:
    rows = sdp.flop_table(args.qs, args.qca)
    if args.json:
        print(json.dumps(rows, indent=1))
        return EXIT_OK
    print(f"{'problem':<10s}{'r':>5s}{'m':>5s}{'primal':>16s}{'dual':>14s}{'speed-up':>10s}")
    for row in rows:
        note = "" if row["in_model"] else "  (out of model: r = 1)"
        print(f"{row['problem']:<10s}{row['r']:>5d}{row['m']:>5d}{row['primal_flops']:>16d}"
              f"{row['dual_flops']:>14d}{row['speedup']:>10d}{note}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qecopt", description="Design QEC encodings and recoveries by SDP")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, out_required=True, trace=True):
        if config:
            sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="seed for random sources lacking one")
        if trace:
            sp.add_argument("--trace", action="store_true", help="write per-Newton-step solver trace")
        sp.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
        sp.add_argument("--jobs", type=int, default=1, help="concurrent independent runs")

    for name in ("design", "robust"):
        sp = sub.add_parser(name, help=f"{name} design from a config file")
        common(sp)
        sp.set_defaults(func=cmd_design)
    sp = sub.add_parser("reproduce-paper", help="reproduce both fidelity tables of the worked example")
    common(sp, config=False, trace=False)
    sp.set_defaults(func=cmd_reproduce)
    sp = sub.add_parser("channel-gen", help="generate a random unitary-plus-bath error channel")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--delta-e", type=float, default=0.75, help="spectral norm of the random Hamiltonian")
    sp.add_argument("--dim-sys", type=int, default=4)
    sp.add_argument("--dim-bath", type=int, default=2)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_channel_gen)
    sp = sub.add_parser("fidelity", help="f_avg, f_pure estimate and f_mixed of a pipeline")
    common(sp, out_required=False)
    sp.set_defaults(func=cmd_fidelity)
    sp = sub.add_parser("export-magnitudes", help="CSV magnitudes of process matrices and dual certificates")
    sp.add_argument("result", help="report.json written by design/robust")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export)
    sp = sub.add_parser("flops", help="per-iteration flop model of primal and dual solvers")
    sp.add_argument("--qs", type=int, default=1, help="system qubits")
    sp.add_argument("--qca", type=int, default=1, help="ancilla qubits")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_flops)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
