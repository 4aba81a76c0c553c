"""Command-line runner: ``ipmsaddle [--config FILE] [--key=value ...]``.

A run is described by a :class:`RunSpec`.  Values come from, in increasing
priority, the per-problem defaults, a flat ``key=value`` config file, the
``IPMSADDLE_OUT`` environment variable (output directory only) and
command-line flags.  Flags use the field names, e.g. ``--M=500`` or
``--inner_dt=0.1``; dashes and underscores are interchangeable.

Exit codes: 0 when the run converged to a certified saddle or a table mode
finished, 2 when a solve did not converge (diverged, hit ``max_outer``, eigen
failure or wrong index) or a verification failed, 1 on configuration or I/O
errors.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import re
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import experiments as ex
from .auxiliary import AuxParams, PenaltyForm
from .landscape import GinzburgLandau1D, ToyPotential2D
from .solver import (
    IpmConfig,
    InsufficientData,
    IterationTrace,
    estimate_convergence_order,
    run_ipm,
    verify_nash_residuals,
)

log = logging.getLogger(__name__)

OUT_ENV = "IPMSADDLE_OUT"
PROBLEMS = ("toy2d", "cahn-hilliard", "allen-cahn")
MODES = ("solve", "basin", "ch-table", "ac-cost", "compare-penalty", "verify")
TRACE_HEADER = ("outer", "err", "lambda1", "lambda2", "inner_steps", "elapsed_s")
BASIN_HEADER = ("ix", "iy", "x", "y", "label", "in_omega1")
SCHEMA_PATH = Path(__file__).with_name("summary.schema.json")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# run specification


@dataclass(frozen=True)
class RunSpec:
    """One CLI run.  ``None`` fields take the per-problem default.

    Solver fields mirror :class:`~ipmsaddle.solver.IpmConfig`; ``power``,
    ``penalty_kind`` and ``rho`` describe the penalty.  Model fields
    (``kappa``, ``n_grid``, ``mass``) only apply to the PDE problems, basin
    fields to ``mode=basin`` and the list fields to the table modes.
    ``timings`` writes wall-clock times into ``trace.csv``; it is off by
    default so that repeated runs produce identical files.
    """

    problem: str
    mode: str = "solve"
    initial: str | None = None
    out_dir: str = "ipm-out"
    # IpmConfig and penalty
    alpha: float | None = None
    beta: float | None = None
    k: int = 1
    rho: float | None = None
    power: int = 4
    penalty_kind: str = "separable"
    coupling: str = "consistent"
    M: int | None = None
    inner_dt: float | None = None
    tol: float | None = None
    max_outer: int | None = None
    divergence_cap: float | None = None
    eig_tol: float = 1e-8
    backtrack: bool | None = None
    semi_implicit: bool = True
    stabilizer: float | None = None
    penalty_stabilizer: bool | None = None
    rho_decay: float = 1.0
    zero_tol: float = 1e-6
    # models
    kappa: float | None = None
    n_grid: int = 100
    mass: float = 0.6
    # basin
    nx: int = 101
    ny: int = 101
    x_range: tuple[float, ...] = (-2.0, 2.0)
    y_range: tuple[float, ...] = (-1.0, 2.5)
    match_radius: float = 1e-2
    workers: int = 1
    # tables
    M_list: tuple[int, ...] | None = None
    rho_list: tuple[float, ...] | None = None
    powers: tuple[int, ...] = (3, 4)
    timings: bool = False


PROBLEM_DEFAULTS = {
    "toy2d": dict(
        alpha=1.0, beta=1.0, rho=100.0, M=100, inner_dt=1e-2, tol=1e-8, max_outer=1000,
        divergence_cap=1e6, backtrack=True, stabilizer=0.0, penalty_stabilizer=False,
        initial="0.5,0.8",
    ),
    "cahn-hilliard": dict(
        alpha=0.0, beta=2.0, rho=100.0, M=100, inner_dt=0.1, tol=1e-6, max_outer=2000,
        divergence_cap=1e6, backtrack=False, stabilizer=ex.CH_STABILIZER, penalty_stabilizer=True,
        kappa=0.04, initial="phi04", M_list=(10, 100, 200, 500), rho_list=(0.0, 100.0),
    ),
    "allen-cahn": dict(
        alpha=0.0, beta=2.0, rho=0.0, M=100, inner_dt=ex.AC_INNER_DT, tol=1e-6, max_outer=5000,
        divergence_cap=1e6, backtrack=False, stabilizer=0.0, penalty_stabilizer=False,
        kappa=0.1, initial="sin-perturbation(0.5,1,0.1)", M_list=(100, 200, 400), rho_list=(0.0, 0.3),
    ),
}
# basin runs stop hopeless starts early
BASIN_OVERRIDES = dict(max_outer=300, divergence_cap=100.0)

_FIELDS = {f.name: f for f in fields(RunSpec)}
_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _kind(name):
    ann = str(_FIELDS[name].type)
    for key in ("tuple[int", "tuple[float", "bool", "int", "float", "str"):
        if key in ann:
            return key
    return "str"


def _coerce(name: str, raw: str):
    kind = _kind(name)
    text = raw.strip()
    try:
        if kind == "bool":
            if text.lower() not in _BOOL_WORDS:
                raise ValueError(text)
            return _BOOL_WORDS[text.lower()]
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind.startswith("tuple"):
            conv = int if kind == "tuple[int" else float
            return tuple(conv(t) for t in text.strip("()[]").split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.replace('[', ' of ')}") from None
    return text


def _normalise_key(key: str) -> str:
    key = key.strip().lstrip("-")
    if key in _FIELDS:
        return key
    alt = key.replace("-", "_")
    if alt in _FIELDS:
        return alt
    raise ConfigError(f"unknown key {key!r}")


def read_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[_normalise_key(key)] = value.strip()
    return out


def _split_flags(argv) -> tuple[str | None, dict[str, str]]:
    config = None
    flags = {}
    argv = list(argv)
    i = 0
    while i < len(argv):
        arg = argv[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument {arg!r}; use --key=value")
        if "=" in arg:
            key, value = arg[2:].split("=", 1)
        else:
            if i + 1 >= len(argv):
                raise ConfigError(f"{arg} needs a value")
            key, value = arg[2:], argv[i + 1]
            i += 1
        if key == "config":
            config = value
        else:
            flags[_normalise_key(key)] = value
        i += 1
    return config, flags


def parse_config(config_file: str | os.PathLike | None = None, flags: dict | None = None, env=None) -> RunSpec:
    """Build and validate a :class:`RunSpec`.

    ``flags`` maps field names to strings (or already typed values) and
    overrides the file.  ``env`` defaults to ``os.environ``.
    """
    env = os.environ if env is None else env
    values: dict[str, object] = {}
    if config_file is not None:
        try:
            text = Path(config_file).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_file}: {exc}") from None
        values.update(read_config_text(text, str(config_file)))
    if env.get(OUT_ENV):
        values["out_dir"] = env[OUT_ENV]
    for key, value in (flags or {}).items():
        values[_normalise_key(key)] = value
    typed = {k: _coerce(k, v) if isinstance(v, str) else v for k, v in values.items()}
    if "problem" not in typed:
        raise ConfigError("missing required key 'problem'")
    spec = RunSpec(**typed)
    validate(spec)
    return resolved(spec)


def validate(spec: RunSpec) -> None:
    if spec.problem not in PROBLEMS:
        raise ConfigError(f"problem: expected one of {', '.join(PROBLEMS)}, got {spec.problem!r}")
    if spec.mode not in MODES:
        raise ConfigError(f"mode: expected one of {', '.join(MODES)}, got {spec.mode!r}")
    needs = {"basin": "toy2d", "ch-table": "cahn-hilliard", "ac-cost": "allen-cahn", "compare-penalty": "allen-cahn"}
    if spec.mode in needs and spec.problem != needs[spec.mode]:
        raise ConfigError(f"mode: {spec.mode} runs on problem={needs[spec.mode]}")
    r = resolved(spec)
    if not r.alpha + r.beta > 1.0:
        raise ConfigError("alpha+beta must exceed 1")
    if r.M < 1:
        raise ConfigError("M must be at least 1")
    for name in ("inner_dt", "tol", "eig_tol", "kappa", "match_radius", "divergence_cap"):
        value = getattr(r, name)
        if value is not None and not value > 0:
            raise ConfigError(f"{name} must be positive")
    if r.rho < 0:
        raise ConfigError("rho must be non-negative")
    if r.power not in (3, 4):
        raise ConfigError("power: penalty exponent must be 3 or 4")
    if r.penalty_kind not in ("separable", "norm"):
        raise ConfigError(f"penalty_kind: unknown penalty {r.penalty_kind!r}")
    if r.coupling not in ("consistent", "l2-coefficient"):
        raise ConfigError(f"coupling: unknown coupling {r.coupling!r}")
    if r.max_outer < 1:
        raise ConfigError("max_outer must be at least 1")
    if r.k < 1:
        raise ConfigError("k must be at least 1")
    if not 0 < r.rho_decay <= 1:
        raise ConfigError("rho_decay must lie in (0, 1]")
    if r.nx < 2 or r.ny < 2:
        raise ConfigError("nx and ny must be at least 2")
    for name in ("x_range", "y_range"):
        rng = getattr(r, name)
        if len(rng) != 2 or not rng[0] < rng[1]:
            raise ConfigError(f"{name} must be two increasing numbers")
    if r.workers < 1:
        raise ConfigError("workers must be at least 1")
    if r.M_list is not None and any(m < 1 for m in r.M_list):
        raise ConfigError("M_list entries must be at least 1")
    if r.problem != "toy2d" and r.n_grid < 4:
        raise ConfigError("n_grid must be at least 4")
    build_initial(r, build_model(r))


def resolved(spec: RunSpec) -> RunSpec:
    """Fill every ``None`` field from the problem defaults."""
    defaults = dict(PROBLEM_DEFAULTS[spec.problem])
    if spec.mode == "basin":
        defaults.update(BASIN_OVERRIDES)
    updates = {k: v for k, v in defaults.items() if getattr(spec, k) is None}
    return RunSpec(**{**asdict(spec), **updates})


def build_model(spec: RunSpec):
    if spec.problem == "toy2d":
        return ToyPotential2D()
    if spec.problem == "cahn-hilliard":
        return GinzburgLandau1D.cahn_hilliard(n_grid=spec.n_grid, kappa=spec.kappa, mass=spec.mass)
    return GinzburgLandau1D.allen_cahn(n_grid=spec.n_grid, kappa=spec.kappa)


def build_config(spec: RunSpec, **overrides) -> IpmConfig:
    spec = resolved(spec)
    aux = AuxParams(
        spec.alpha, spec.beta, PenaltyForm(spec.penalty_kind, spec.power, spec.rho), spec.k, spec.coupling
    )
    cfg = IpmConfig(
        aux=aux,
        M=spec.M,
        inner_dt=spec.inner_dt,
        tol=spec.tol,
        max_outer=spec.max_outer,
        divergence_cap=spec.divergence_cap,
        eig_tol=spec.eig_tol,
        backtrack=spec.backtrack,
        semi_implicit=spec.semi_implicit,
        stabilizer=spec.stabilizer,
        penalty_stabilizer=spec.penalty_stabilizer,
        rho_decay=spec.rho_decay,
        zero_tol=spec.zero_tol,
    )
    return cfg.with_(**overrides) if overrides else cfg


_SIN_RE = re.compile(r"^sin-perturbation\(([^,]+),([^,]+),([^,]+)\)$")


def build_initial(spec: RunSpec, model) -> np.ndarray:
    """Decode the initial-state descriptor.

    Accepted forms: comma-separated coordinates (toy), ``phi04`` and the
    stand-in names ``phi01*``..``phi03*`` (Cahn-Hilliard), and
    ``sin-perturbation(a,k,mean)`` (either PDE).
    """
    desc = (spec.initial or "").replace(" ", "")
    if spec.problem == "toy2d":
        try:
            values = [float(t) for t in desc.strip("()[]").split(",")]
        except ValueError:
            raise ConfigError(f"initial: expected coordinates like '0.5,0.8', got {spec.initial!r}") from None
        if len(values) != model.dim:
            raise ConfigError(f"initial: need {model.dim} coordinates, got {len(values)}")
        return np.array(values)
    match = _SIN_RE.match(desc)
    if match:
        try:
            a, k, mean = float(match[1]), int(match[2]), float(match[3])
        except ValueError:
            raise ConfigError(f"initial: bad sin-perturbation arguments in {spec.initial!r}") from None
        phi = ex.sin_perturbation(model, a, k, mean)
    elif spec.problem == "cahn-hilliard" and desc in ex.ch_initials(model):
        phi = ex.ch_initials(model)[desc]
    else:
        raise ConfigError(f"initial: unknown initial state {spec.initial!r}")
    if spec.problem == "cahn-hilliard":
        phi = model.project_mass(phi)
    return phi


# --------------------------------------------------------------------------
# output helpers


def fmt(value) -> str:
    """Round-trip text for a number: 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return format(float(value), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")


def trace_rows(trace: IterationTrace, timings: bool = False):
    for r in trace.records:
        lam = r.eigenvalues
        yield (
            r.outer,
            r.err,
            lam[0] if len(lam) > 0 else None,
            lam[1] if len(lam) > 1 else None,
            r.inner_steps,
            r.elapsed_s if timings else None,
        )


def _order(trace: IterationTrace):
    try:
        return estimate_convergence_order(trace)
    except InsufficientData:
        return None


def _spec_dict(spec: RunSpec) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(resolved(spec)).items()}


def _solve_payload(spec, model, cfg, trace: IterationTrace) -> tuple[dict, int]:
    ok = trace.converged and not trace.wrong_index
    x = trace.x
    finite = bool(np.all(np.isfinite(x)))
    nash = verify_nash_residuals(model, x, cfg, tol=10 * cfg.tol).as_dict() if ok else None
    payload = {
        "problem": spec.problem,
        "mode": spec.mode,
        "status": trace.status,
        "wrong_index": trace.wrong_index,
        "exit_code": 0 if ok else 2,
        "outer_iters": trace.outer_iters,
        "total_inner_steps": trace.total_inner_steps,
        "final_err": float(trace.errors[-1]),
        "saddle": x if finite else None,
        "energy": float(model.energy(x)) if finite else None,
        "eigenvalues": trace.records[-1].eigenvalues,
        "nash": nash,
        "convergence_order": _order(trace),
        "message": trace.message,
    }
    return payload, payload["exit_code"]


# --------------------------------------------------------------------------
# modes


def _run_solve(spec, out: Path) -> int:
    model = build_model(spec)
    cfg = build_config(spec)
    x0 = build_initial(spec, model)
    trace = run_ipm(model, x0, cfg)
    write_csv(out / "trace.csv", TRACE_HEADER, trace_rows(trace, spec.timings))
    payload, code = _solve_payload(spec, model, cfg, trace)
    payload["initial"] = spec.initial
    payload["config"] = _spec_dict(spec)
    write_json(out / "summary.json", payload)
    log.info("%s solve: %s after %d cycles", spec.problem, trace.status, trace.outer_iters)
    return code


def _run_verify(spec, out: Path) -> int:
    model = build_model(spec)
    cfg = build_config(spec)
    x = build_initial(spec, model)
    report = verify_nash_residuals(model, x, cfg, tol=10 * cfg.tol)
    code = 0 if report.passed else 2
    write_json(
        out / "summary.json",
        {
            "problem": spec.problem,
            "mode": spec.mode,
            "status": "Passed" if report.passed else "Failed",
            "exit_code": code,
            "saddle": x,
            "energy": float(model.energy(x)),
            "eigenvalues": report.eigenvalues,
            "nash": report.as_dict(),
            "initial": spec.initial,
            "config": _spec_dict(spec),
        },
    )
    return code


def _run_basin(spec, out: Path) -> int:
    model = build_model(spec)
    cfg = build_config(spec)
    grid = ex.basin_map(
        model, cfg, spec.x_range, spec.y_range, spec.nx, spec.ny,
        match_radius=spec.match_radius, chunks=spec.workers,
    )
    write_csv(out / "basin.csv", BASIN_HEADER, grid.rows())
    cells = int(grid.in_omega1.sum())
    missed = int((grid.in_omega1 & ~grid.classified).sum())
    write_json(
        out / "summary.json",
        {
            "problem": spec.problem,
            "mode": spec.mode,
            "status": "Complete",
            "exit_code": 0,
            "catalogue": grid.catalogue,
            "classified_cells": int(grid.classified.sum()),
            "omega1_cells": cells,
            "omega1_unclassified": missed,
            "omega1_coverage": grid.omega1_coverage(),
            "config": _spec_dict(spec),
        },
    )
    return 0


def _cells(spec):
    """``(name, cell_spec, label)`` for every run of a table mode."""
    if spec.mode == "ch-table":
        names = [spec.initial] if spec.initial not in (None, "all") else list(ex.ch_initials(build_model(spec)))
        imf, ipm = spec.rho_list if len(spec.rho_list) == 2 else (0.0, spec.rho_list[0])
        for name in names:
            for M in spec.M_list:
                for method, rho in (("IMF", imf), ("IPM", ipm)):
                    cell = RunSpec(**{**asdict(spec), "initial": name, "M": M, "rho": rho})
                    yield f"{_slug(name)}_M{M}_{method}", cell, {"initial": name, "method": method}
    elif spec.mode == "ac-cost":
        for rho in spec.rho_list:
            for M in spec.M_list:
                cell = RunSpec(**{**asdict(spec), "M": M, "rho": rho})
                yield f"rho{fmt(rho)}_M{M}", cell, {}
    else:
        for b in spec.powers:
            for rho in spec.rho_list:
                for M in spec.M_list:
                    cell = RunSpec(**{**asdict(spec), "M": M, "rho": rho, "power": b})
                    yield f"b{b}_rho{fmt(rho)}_M{M}", cell, {}


def _slug(name: str) -> str:
    return name.replace("*", "-alt")


def _run_table(spec, out: Path) -> int:
    model = build_model(spec)
    rows = []
    for name, cell, extra in _cells(spec):
        cell_dir = out / name
        cell_dir.mkdir(parents=True, exist_ok=True)
        cfg = build_config(cell)
        trace = run_ipm(model, build_initial(cell, model), cfg)
        write_csv(cell_dir / "trace.csv", TRACE_HEADER, trace_rows(trace, spec.timings))
        payload, code = _solve_payload(cell, model, cfg, trace)
        payload["initial"] = cell.initial
        payload["config"] = _spec_dict(cell)
        write_json(cell_dir / "summary.json", payload)
        ok = code == 0
        rows.append(
            {
                "cell": name,
                "initial": cell.initial,
                "stand_in_initial": bool(cell.initial and cell.initial.endswith("*")),
                "method": extra.get("method", ""),
                "b": cell.power,
                "rho": cell.rho,
                "M": cell.M,
                "status": trace.status,
                "mark": "ok" if ok else "x",
                "outer_iters": trace.outer_iters,
                "total_cost": cell.M * trace.outer_iters if ok else None,
            }
        )
        log.info("%s: %s after %d cycles", name, trace.status, trace.outer_iters)
    header = ("cell", "initial", "stand_in_initial", "method", "b", "rho", "M", "status", "mark",
              "outer_iters", "total_cost")
    write_csv(out / "table.csv", header, ([r[h] if r[h] is not None else None for h in header] for r in rows))
    write_json(
        out / "summary.json",
        {
            "problem": spec.problem,
            "mode": spec.mode,
            "status": "Complete",
            "exit_code": 0,
            "rows": rows,
            "config": _spec_dict(spec),
        },
    )
    return 0


def execute(spec: RunSpec) -> int:
    """Run ``spec`` and write its files; returns the process exit code."""
    spec = resolved(spec)
    out = Path(spec.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if spec.mode == "solve":
            return _run_solve(spec, out)
        if spec.mode == "verify":
            return _run_verify(spec, out)
        if spec.mode == "basin":
            return _run_basin(spec, out)
        return _run_table(spec, out)
    except OSError as exc:
        print(f"ipmsaddle: I/O error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if any(a in ("-h", "--help") for a in argv):
        print(__doc__.strip())
        print("\nkeys: " + ", ".join(_FIELDS))
        return 0
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        config, flags = _split_flags(argv)
        spec = parse_config(config, flags)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"ipmsaddle: config error: {exc}", file=sys.stderr)
        return 1
    return execute(spec)


if __name__ == "__main__":
    sys.exit(main())
