"""Experiment driver: solver sweeps, spectrum verdicts, cost tables, exports.

Subcommands
  solve          iteration-count sweeps over (method, M, k, layout, eps, delta,
                 seed); one CSV row per run
  spectrum       dense interval verification per instance; CSV plus a verdict
                 block; process exits 2 if any verdict fails
  cost           {A, H_A}-application totals per method as a Markdown table
  export-matrix  assembled operators in Matrix Market ASCII

Configs are flat key = value text files; list-valued keys take commas.  Every
axis combination is validated before any run starts, results are emitted in
sorted order regardless of worker scheduling, and CSV content is a pure
function of the config and the seed arguments (timestamps live only in the
run manifest).  Exit status: 0 success, 1 solver or configuration error,
2 verification failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import itertools
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .mesh import (MeshError, LayoutError, ParameterError, build_mesh,
                   place_periodic, place_random, assign_epsilon)
from .assembly import (build_problem, assemble_load, assemble_stiffness,
                       assemble_sigma_matrix, write_matrix_market)
from .precond import (OpCounter, ContractViolationError, SolverBreakdownError,
                      build_block_preconditioner)
from .solvers import (pu_solve, pl_solve, pcg_k_solve, random_guess,
                      OperatorContractError, MaxIterationsError)
from .spectral import DENSE_LIMIT, verify_intervals

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFY = 2

SOLVE_SCHEMA = "saddleprec.solve.v1"
SPECTRUM_SCHEMA = "saddleprec.spectrum.v1"
EIGS_SCHEMA = "saddleprec.spectrum-eigs.v1"

_METHODS = {"pu": pu_solve, "pl": pl_solve, "pcgk": pcg_k_solve}

# derivation offsets for per-instance sub-seeds (documented, arbitrary primes)
_LAYOUT_SEED_OFFSET = 1000003
_EPS_SEED_OFFSET = 2000003


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config file handling

def parse_config(path: str) -> dict:
    """Flat key = value file; '#' starts a comment, lists use commas."""
    raw = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                              f"got {line.strip()!r}")
        key, value = text.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in raw:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


def _as_list(value: str) -> list:
    return [tok.strip() for tok in value.split(",") if tok.strip()]


def _typed_list(raw, key, conv, default):
    if key not in raw:
        return list(default)
    try:
        return [conv(tok) for tok in _as_list(raw[key])]
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def _typed_scalar(raw, key, conv, default):
    if key not in raw:
        return default
    try:
        return conv(raw[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def _bool(tok: str) -> bool:
    low = tok.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {tok!r}")


_COMMON_KEYS = {"M", "k", "layout", "removal", "eps_mode", "eps_min",
                "eps_max", "seed"}
_HA_KEYS = {"ha", "ha_steps", "ha_base", "ha_drop_tol", "ha_fill_factor"}
_ALLOWED_KEYS = {
    "solve": _COMMON_KEYS | _HA_KEYS | {"method", "delta", "rhs", "max_iter"},
    "spectrum": _COMMON_KEYS | {"ha", "pencil", "tol", "corrupt_q"},
    "cost": _COMMON_KEYS | {"method", "delta", "max_iter"} | {
        f"{m}_{k}" for m in _METHODS for k in _HA_KEYS},
    "export-matrix": _COMMON_KEYS | {"matrix", "name"},
}


@dataclasses.dataclass
class ExperimentConfig:
    """Validated sweep axes shared by the subcommands."""

    command: str
    methods: list
    Ms: list
    ks: list
    layouts: list
    removal: int | None
    eps_modes: list
    eps_mins: list
    eps_max: float
    deltas: list
    seeds: list
    rhs: str
    max_iter: int
    ha_kind: str
    ha_opts: dict
    pencils: list
    tol: float
    corrupt_q: bool
    matrix: str
    name: str | None
    cost_ha: dict
    config_sha: str
    raw: dict


def _ha_opts_from(raw, prefix=""):
    opts = {}
    steps = _typed_scalar(raw, prefix + "ha_steps", int, None)
    base = _typed_scalar(raw, prefix + "ha_base", str, None)
    drop_tol = _typed_scalar(raw, prefix + "ha_drop_tol", float, None)
    fill = _typed_scalar(raw, prefix + "ha_fill_factor", float, None)
    if steps is not None:
        opts["steps"] = steps
    if base is not None:
        opts["base"] = base
    if drop_tol is not None:
        opts["drop_tol"] = drop_tol
    if fill is not None:
        opts["fill_factor"] = fill
    return opts


def build_config(command: str, raw: dict, path: str,
                 seed_override: int | None = None) -> ExperimentConfig:
    allowed = _ALLOWED_KEYS[command]
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown config key(s) for {command}: {', '.join(unknown)}; "
            f"allowed: {', '.join(sorted(allowed))}")

    methods = _typed_list(raw, "method", str, ["pu", "pl", "pcgk"])
    for m in methods:
        if m not in _METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from "
                              f"{', '.join(sorted(_METHODS))}")
    Ms = _typed_list(raw, "M", int, [16])
    ks = _typed_list(raw, "k", int, [2])
    layouts = _typed_list(raw, "layout", str, ["periodic"])
    for lay in layouts:
        if lay not in ("periodic", "random"):
            raise ConfigError(f"unknown layout {lay!r}; use periodic|random")
    removal = _typed_scalar(raw, "removal", int, None)
    eps_modes = _typed_list(raw, "eps_mode", str, ["uniform"])
    for em in eps_modes:
        if em not in ("uniform", "random"):
            raise ConfigError(f"unknown eps_mode {em!r}; use uniform|random")
    eps_mins = _typed_list(raw, "eps_min", float, [1e-4])
    eps_max = _typed_scalar(raw, "eps_max", float, 1e-2)
    deltas = _typed_list(raw, "delta", float, [1e-6])
    seeds = _typed_list(raw, "seed", int, [0])
    if seed_override is not None:
        seeds = [seed_override]
    rhs = _typed_scalar(raw, "rhs", str, "zero")
    if rhs not in ("zero", "one"):
        raise ConfigError(f"unknown rhs {rhs!r}; use zero|one")
    max_iter = _typed_scalar(raw, "max_iter", int, 2000)
    ha_kind = _typed_scalar(raw, "ha", str, "exact")
    pencils = _typed_list(raw, "pencil", str, ["preconditioner"])
    for p in pencils:
        if p not in ("preconditioner", "ideal"):
            raise ConfigError(f"unknown pencil {p!r}; use preconditioner|ideal")
    tol = _typed_scalar(raw, "tol", float, 1e-8)
    corrupt_q = _typed_scalar(raw, "corrupt_q", _bool, False)
    matrix = _typed_scalar(raw, "matrix", str, "saddle")
    if matrix not in ("saddle", "stiffness", "sigma"):
        raise ConfigError(f"unknown matrix {matrix!r}; use "
                          "saddle|stiffness|sigma")
    name = _typed_scalar(raw, "name", str, None)

    # per-method H_A configuration for the cost table; defaults mirror the
    # benchmark: PU runs an inner-CG H_A, the Krylov methods an exact one
    cost_ha = {
        "pu": ("cg", {"steps": 12, "base": "ilu", "drop_tol": 1e-2,
                      "fill_factor": 8.0}),
        "pl": ("exact", {}),
        "pcgk": ("exact", {}),
    }
    if command == "cost":
        for m in _METHODS:
            kind = _typed_scalar(raw, f"{m}_ha", str, None)
            opts = _ha_opts_from(raw, prefix=f"{m}_")
            if kind is not None:
                cost_ha[m] = (kind, opts)
            elif opts:
                cost_ha[m] = (cost_ha[m][0], {**cost_ha[m][1], **opts})

    with open(path, "rb") as fh:
        sha = hashlib.sha256(fh.read()).hexdigest()

    return ExperimentConfig(
        command=command, methods=methods, Ms=Ms, ks=ks, layouts=layouts,
        removal=removal, eps_modes=eps_modes, eps_mins=eps_mins,
        eps_max=eps_max, deltas=deltas, seeds=seeds, rhs=rhs,
        max_iter=max_iter, ha_kind=ha_kind,
        ha_opts=_ha_opts_from(raw), pencils=pencils, tol=tol,
        corrupt_q=corrupt_q, matrix=matrix, name=name, cost_ha=cost_ha,
        config_sha=sha, raw=raw)


# ---------------------------------------------------------------------------
# instance construction

def _build_layout(M, k, layout, removal, eps_mode, eps_min, eps_max, seed):
    mesh = build_mesh(M)
    if layout == "periodic":
        lay = place_periodic(mesh, k)
    else:
        base = place_periodic(mesh, k)
        count = removal if removal is not None else base.m // 2
        lay = place_random(mesh, k, count, seed=seed + _LAYOUT_SEED_OFFSET)
    if eps_mode == "uniform":
        lay = assign_epsilon(lay, "uniform", epsilon=eps_min)
    else:
        lay = assign_epsilon(lay, "random", eps_min=eps_min, eps_max=eps_max,
                             seed=seed + _EPS_SEED_OFFSET)
    return mesh, lay


def _solve_axes(cfg):
    return sorted(itertools.product(
        cfg.methods, cfg.Ms, cfg.ks, cfg.layouts, cfg.eps_modes,
        cfg.eps_mins, cfg.deltas, cfg.seeds))


def _spectrum_axes(cfg):
    return sorted(itertools.product(
        cfg.Ms, cfg.ks, cfg.layouts, cfg.eps_modes, cfg.eps_mins,
        cfg.pencils, cfg.seeds))


def validate_instances(cfg: ExperimentConfig) -> None:
    """Fail fast: construct every layout in the sweep before any run."""
    if cfg.command == "spectrum":
        for (M, k, layout, eps_mode, eps_min, pencil, seed) in _spectrum_axes(cfg):
            mesh, lay = _build_layout(M, k, layout, cfg.removal, eps_mode,
                                      eps_min, cfg.eps_max, seed)
            dim = mesh.n_interior + lay.n
            if dim > DENSE_LIMIT:
                raise ConfigError(
                    f"spectrum instance M={M} k={k} has dimension {dim} > "
                    f"{DENSE_LIMIT}; dense verification is desk-scale only, "
                    "use smaller M (or the lanczos_extremes API for extreme "
                    "eigenvalue estimates)")
    elif cfg.command == "solve":
        for (method, M, k, layout, eps_mode, eps_min, delta, seed) in _solve_axes(cfg):
            _build_layout(M, k, layout, cfg.removal, eps_mode, eps_min,
                          cfg.eps_max, seed)
    elif cfg.command == "cost":
        for (M, k, layout, eps_mode, eps_min, delta, seed) in sorted(
                itertools.product(cfg.Ms, cfg.ks, cfg.layouts, cfg.eps_modes,
                                  cfg.eps_mins, cfg.deltas, cfg.seeds)):
            _build_layout(M, k, layout, cfg.removal, eps_mode, eps_min,
                          cfg.eps_max, seed)
    else:
        for (M, k, layout, eps_mode, eps_min, seed) in sorted(
                itertools.product(cfg.Ms, cfg.ks, cfg.layouts, cfg.eps_modes,
                                  cfg.eps_mins, cfg.seeds)):
            _build_layout(M, k, layout, cfg.removal, eps_mode, eps_min,
                          cfg.eps_max, seed)


# ---------------------------------------------------------------------------
# workers

def _run_solve(cfg, axes):
    method, M, k, layout, eps_mode, eps_min, delta, seed = axes
    mesh, lay = _build_layout(M, k, layout, cfg.removal, eps_mode, eps_min,
                              cfg.eps_max, seed)
    ordering, A, blocks, op = build_problem(mesh, lay)
    precond = build_block_preconditioner(A, blocks, cfg.ha_kind, **cfg.ha_opts)
    counter = OpCounter()
    solver = _METHODS[method]
    try:
        if cfg.rhs == "zero":
            guess = random_guess(blocks.n if method == "pu" else op.size, seed)
            kwargs = {"p0": guess} if method == "pu" else {"z0": guess}
            report = solver(op, precond, delta=delta, max_iter=cfg.max_iter,
                            counter=counter, **kwargs)
        else:
            F = np.zeros(op.size)
            F[:op.N] = assemble_load(mesh, 1.0, ordering=ordering)
            report = solver(op, precond, F=F, delta=delta,
                            max_iter=cfg.max_iter, counter=counter)
    except (SolverBreakdownError, MaxIterationsError,
            OperatorContractError) as exc:
        raise type(exc)(
            f"{exc} [method={method} M={M} k={k} {layout} eps_min={eps_min:g} "
            f"delta={delta:g} seed={seed}]") from exc
    return {
        "method": method, "M": M, "k": k, "layout": layout,
        "removal": cfg.removal if layout == "random" else 0,
        "eps_mode": eps_mode, "eps_min": eps_min, "eps_max": cfg.eps_max,
        "delta": delta, "ha": cfg.ha_kind, "seed": seed,
        "iterations": report.iterations,
        "converged": report.converged,
        "stop_rule": report.stop_rule,
        "a_applies": report.a_applies,
        "ha_applies": report.ha_applies,
        "total_applies": report.total_applies,
        "final_ratio": f"{report.final_ratio:.6e}",
        "monotone": report.is_monotone(),
    }


def _run_spectrum(cfg, axes):
    M, k, layout, eps_mode, eps_min, pencil, seed = axes
    mesh, lay = _build_layout(M, k, layout, cfg.removal, eps_mode, eps_min,
                              cfg.eps_max, seed)
    rep = verify_intervals(lay, ha_kind=cfg.ha_kind, pencil=pencil,
                           tol=cfg.tol, corrupt_q=cfg.corrupt_q)
    row = {
        "M": M, "k": k, "layout": layout, "eps_mode": eps_mode,
        "eps_min": eps_min, "eps_max": rep.eps_max, "pencil": pencil,
        "ha": cfg.ha_kind, "seed": seed,
        "dim": mesh.n_interior + lay.n,
        "a0": f"{rep.a0:.12f}", "b0": f"{rep.b0:.12f}",
        "r_max": f"{rep.r_max:.12f}",
        "mu_check1": f"{rep.mu_check1:.12f}", "mu_hat1": f"{rep.mu_hat1:.12f}",
        "mu_check2": f"{rep.mu_check2:.12f}", "mu_hat2": f"{rep.mu_hat2:.12f}",
        "lam_min": f"{rep.lam_min:.12f}", "lam_max": f"{rep.lam_max:.12f}",
        "n_minus_one": rep.n_minus_one, "n_plus_one": rep.n_plus_one,
        "n_viol_strict": int(len(rep.violations("stated"))),
        "verdict_strict": "PASS" if rep.stated_ok else "FAIL",
        "n_viol": int(len(rep.violations("envelope"))),
        "verdict": "PASS" if rep.envelope_ok else "FAIL",
    }
    eig_rows = [{
        "M": M, "k": k, "layout": layout, "eps_mode": eps_mode,
        "eps_min": eps_min, "pencil": pencil, "seed": seed, "index": i,
        "eigenvalue": f"{val:.12e}",
        "in_stated": bool(rep.in_stated[i]),
        "in_envelope": bool(rep.in_envelope[i]),
    } for i, val in enumerate(rep.eigenvalues)]
    return row, eig_rows


def _run_cost(cfg, axes):
    M, k, layout, eps_mode, eps_min, delta, seed = axes
    mesh, lay = _build_layout(M, k, layout, cfg.removal, eps_mode, eps_min,
                              cfg.eps_max, seed)
    _, A, blocks, op = build_problem(mesh, lay)
    entry = {"M": M, "k": k, "layout": layout, "eps_mode": eps_mode,
             "eps_min": eps_min, "delta": delta, "seed": seed}
    for method in cfg.methods:
        kind, opts = cfg.cost_ha[method]
        precond = build_block_preconditioner(A, blocks, kind, **opts)
        counter = OpCounter()
        guess = random_guess(blocks.n if method == "pu" else op.size, seed)
        kwargs = {"p0": guess} if method == "pu" else {"z0": guess}
        report = _METHODS[method](op, precond, delta=delta,
                                  max_iter=cfg.max_iter, counter=counter,
                                  **kwargs)
        entry[method] = {"iters": report.iterations, "a": report.a_applies,
                         "ha": report.ha_applies,
                         "total": report.total_applies, "ha_kind": kind}
    return entry


# ---------------------------------------------------------------------------
# output

def _write_csv(path, schema, fieldnames, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        fh.write(",".join(fieldnames) + "\n")
        for row in rows:
            fh.write(",".join(str(row[f]) for f in fieldnames) + "\n")


def write_manifest(out_dir, command, cfg, args_seed, n_instances):
    manifest = {
        "schema": "saddleprec.manifest.v1",
        "command": command,
        "config_sha256": cfg.config_sha,
        "version": __version__,
        "seeds": list(cfg.seeds),
        "seed_override": args_seed,
        "instances": n_instances,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _pool_map(worker, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [worker(it) for it in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, items))


# ---------------------------------------------------------------------------
# subcommand drivers

def cmd_solve(cfg: ExperimentConfig, out_dir: str, threads: int,
              args_seed) -> int:
    axes = _solve_axes(cfg)
    rows = _pool_map(lambda ax: _run_solve(cfg, ax), axes, threads)
    fields = ["method", "M", "k", "layout", "removal", "eps_mode", "eps_min",
              "eps_max", "delta", "ha", "seed", "iterations", "converged",
              "stop_rule", "a_applies", "ha_applies", "total_applies",
              "final_ratio", "monotone"]
    path = os.path.join(out_dir, "solve.csv")
    _write_csv(path, SOLVE_SCHEMA, fields, rows)
    write_manifest(out_dir, "solve", cfg, args_seed, len(axes))
    print(f"solve: {len(rows)} runs -> {path}")
    return EXIT_OK


def cmd_spectrum(cfg: ExperimentConfig, out_dir: str, threads: int,
                 args_seed) -> int:
    axes = _spectrum_axes(cfg)
    results = _pool_map(lambda ax: _run_spectrum(cfg, ax), axes, threads)
    rows = [r for r, _ in results]
    eig_rows = [er for _, ers in results for er in ers]
    fields = ["M", "k", "layout", "eps_mode", "eps_min", "eps_max", "pencil",
              "ha", "seed", "dim", "a0", "b0", "r_max", "mu_check1",
              "mu_hat1", "mu_check2", "mu_hat2", "lam_min", "lam_max",
              "n_minus_one", "n_plus_one", "n_viol_strict", "verdict_strict",
              "n_viol", "verdict"]
    path = os.path.join(out_dir, "spectrum.csv")
    _write_csv(path, SPECTRUM_SCHEMA, fields, rows)
    eig_fields = ["M", "k", "layout", "eps_mode", "eps_min", "pencil", "seed",
                  "index", "eigenvalue", "in_stated", "in_envelope"]
    eig_path = os.path.join(out_dir, "spectrum_eigs.csv")
    _write_csv(eig_path, EIGS_SCHEMA, eig_fields, eig_rows)
    write_manifest(out_dir, "spectrum", cfg, args_seed, len(axes))

    print(f"spectrum: {len(rows)} instances -> {path}")
    failed = 0
    for row in rows:
        mark = "PASS" if row["verdict"] == "PASS" else "FAIL"
        failed += row["verdict"] != "PASS"
        print(f"  [{mark}] M={row['M']} k={row['k']} {row['layout']} "
              f"eps_min={row['eps_min']:g} {row['pencil']}: "
              f"spectrum in [{row['lam_min']}, {row['lam_max']}], "
              f"{row['n_viol']} outside the measured envelope "
              f"(strict two-interval check: {row['verdict_strict']}, "
              f"{row['n_viol_strict']} outside)")
    if failed:
        print(f"spectrum: {failed} instance(s) FAILED verification")
        return EXIT_VERIFY
    return EXIT_OK


def cmd_cost(cfg: ExperimentConfig, out_dir: str, threads: int,
             args_seed) -> int:
    axes = sorted(itertools.product(cfg.Ms, cfg.ks, cfg.layouts,
                                    cfg.eps_modes, cfg.eps_mins, cfg.deltas,
                                    cfg.seeds))
    entries = _pool_map(lambda ax: _run_cost(cfg, ax), axes, threads)

    header = ["eps_min"]
    for m in cfg.methods:
        kind = cfg.cost_ha[m][0]
        header.append(f"{m.upper()} iters (H_A={kind})")
        header.append(f"{m.upper()} A+H_A")
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(" --- " for _ in header) + "|"]
    for e in entries:
        cells = [f"{e['eps_min']:g}"]
        for m in cfg.methods:
            cells.append(str(e[m]["iters"]))
            cells.append(f"{e[m]['total']} ({e[m]['a']}+{e[m]['ha']})")
        lines.append("| " + " | ".join(cells) + " |")
    table = "\n".join(lines)

    path = os.path.join(out_dir, "cost.md")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# Application counts (M={cfg.Ms}, k={cfg.ks}, "
                 f"delta={cfg.deltas})\n\n")
        fh.write(table + "\n")
    write_manifest(out_dir, "cost", cfg, args_seed, len(axes))
    print(table)
    print(f"cost: {len(entries)} instance(s) -> {path}")
    return EXIT_OK


def cmd_export_matrix(cfg: ExperimentConfig, out_dir: str, threads: int,
                      args_seed) -> int:
    axes = sorted(itertools.product(cfg.Ms, cfg.ks, cfg.layouts,
                                    cfg.eps_modes, cfg.eps_mins, cfg.seeds))
    written = []
    for (M, k, layout, eps_mode, eps_min, seed) in axes:
        mesh, lay = _build_layout(M, k, layout, cfg.removal, eps_mode,
                                  eps_min, cfg.eps_max, seed)
        if cfg.matrix == "saddle":
            _, _, _, op = build_problem(mesh, lay)
            mat = op.to_sparse()
        elif cfg.matrix == "stiffness":
            ordering, A, _, _ = build_problem(mesh, lay)
            mat = A
        else:
            mat = assemble_sigma_matrix(mesh, lay)
        stem = cfg.name or f"{cfg.matrix}_M{M}_k{k}_{layout}_{eps_min:g}"
        path = os.path.join(out_dir, stem + ".mtx")
        write_matrix_market(path, mat,
                            comment=f"{cfg.matrix} M={M} k={k} {layout} "
                                    f"eps_min={eps_min:g} seed={seed}")
        written.append(path)
        print(f"export: {mat.shape[0]}x{mat.shape[1]}, "
              f"{mat.nnz} stored entries -> {path}")
    write_manifest(out_dir, "export-matrix", cfg, args_seed, len(axes))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="saddleprec",
                     description="saddle-point solvers for high-contrast "
                                 "diffusion: experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("solve", "iteration-count sweep, one CSV row per run"),
            ("spectrum", "dense eigenvalue interval verification"),
            ("cost", "operator application counts as a Markdown table"),
            ("export-matrix", "write assembled operators in Matrix Market")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key = value file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for sweep instances")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed axis with one seed")
    return parser


_DISPATCH = {
    "solve": cmd_solve,
    "spectrum": cmd_spectrum,
    "cost": cmd_cost,
    "export-matrix": cmd_export_matrix,
}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        raw = parse_config(args.config)
        cfg = build_config(args.command, raw, args.config,
                           seed_override=args.seed)
        validate_instances(cfg)
        os.makedirs(args.out, exist_ok=True)
        return _DISPATCH[args.command](cfg, args.out, max(1, args.threads),
                                       args.seed)
    except (ConfigError, MeshError, LayoutError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (SolverBreakdownError, MaxIterationsError, OperatorContractError,
            ContractViolationError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
