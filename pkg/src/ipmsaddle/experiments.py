"""Drivers for the numerical studies: basins, convergence tables, penalty comparison."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .auxiliary import AuxParams, PenaltyForm
from .landscape import GinzburgLandau1D, ToyPotential2D
from .solver import CONVERGED, DIVERGED, IpmConfig, IterationTrace, run_ipm, run_ipm_batch

log = logging.getLogger(__name__)

TOY_SADDLES = ToyPotential2D.SADDLES


# --------------------------------------------------------------------------
# default configurations


def toy_config(rho: float = 100.0, M: int = 100, power: int = 4, kind: str = "separable", **kw) -> IpmConfig:
    return IpmConfig(aux=AuxParams(1.0, 1.0, PenaltyForm(kind, power, rho)), M=M, **kw)


def ch_config(rho: float = 100.0, M: int = 100, power: int = 4, **kw) -> IpmConfig:
    """Cahn-Hilliard setup: H^-1 flow, inner step 0.1, tolerance 1e-6.

    The inner step is semi-implicit with stabilizer ``CH_STABILIZER`` plus the
    per-step penalty stabilizer; without them a step of 0.1 is unstable.
    """
    kw.setdefault("inner_dt", 0.1)
    kw.setdefault("tol", 1e-6)
    kw.setdefault("backtrack", False)
    kw.setdefault("stabilizer", CH_STABILIZER)
    kw.setdefault("max_outer", 2000)
    kw.setdefault("penalty_stabilizer", True)
    coupling = kw.pop("coupling", "consistent")
    return IpmConfig(aux=AuxParams(0.0, 2.0, PenaltyForm("separable", power, rho), coupling=coupling), M=M, **kw)


def ac_config(rho: float = 0.0, M: int = 100, power: int = 4, **kw) -> IpmConfig:
    """Allen-Cahn setup: L2 flow, inner step 0.01, tolerance 1e-6."""
    kw.setdefault("inner_dt", AC_INNER_DT)
    kw.setdefault("tol", 1e-6)
    kw.setdefault("backtrack", False)
    kw.setdefault("max_outer", 5000)
    return IpmConfig(aux=AuxParams(0.0, 2.0, PenaltyForm("separable", power, rho)), M=M, **kw)


CH_STABILIZER = 2.0
AC_INNER_DT = 0.01


# --------------------------------------------------------------------------
# initial states


def phi04(model: GinzburgLandau1D):
    """``0.5 sin(2 pi x) + 0.6``."""
    return 0.5 * np.sin(2 * np.pi * model.x) + 0.6


def sin_perturbation(model: GinzburgLandau1D, amplitude: float, wavenumber: int, mean: float):
    return amplitude * np.sin(2 * np.pi * wavenumber * model.x) + mean


def ch_initials(model: GinzburgLandau1D) -> dict[str, np.ndarray]:
    """phi04 plus three small perturbations of the uniform state.

    Names ending in ``*`` are stand-ins chosen here, not published states.
    """
    x = model.x
    return {
        "phi01*": sin_perturbation(model, 0.2, 1, 0.6),
        "phi02*": sin_perturbation(model, 0.3, 1, 0.6),
        "phi03*": 0.6 + 0.1 * np.sin(2 * np.pi * x) + 0.1 * np.cos(4 * np.pi * x),
        "phi04": phi04(model),
    }


def ac_initial(model: GinzburgLandau1D):
    """Two-interface start for the Allen-Cahn runs: ``0.5 sin(2 pi x) + 0.1``."""
    return 0.5 * np.sin(2 * np.pi * model.x) + 0.1


# --------------------------------------------------------------------------
# basins


@dataclass
class BasinGrid:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    nx: int
    ny: int
    labels: np.ndarray  # (nx, ny) int, 0 = diverged / unclassified
    in_omega1: np.ndarray  # (nx, ny) bool
    catalogue: tuple[tuple[float, float], ...]
    match_radius: float
    status: np.ndarray = field(repr=False, default=None)

    @property
    def xs(self):
        return np.linspace(*self.x_range, self.nx)

    @property
    def ys(self):
        return np.linspace(*self.y_range, self.ny)

    @property
    def classified(self) -> np.ndarray:
        return self.labels > 0

    def omega1_coverage(self) -> float:
        cells = self.in_omega1
        return float(np.mean(self.classified[cells])) if cells.any() else 1.0

    def rows(self):
        xs, ys = self.xs, self.ys
        for ix in range(self.nx):
            for iy in range(self.ny):
                yield ix, iy, xs[ix], ys[iy], int(self.labels[ix, iy]), int(self.in_omega1[ix, iy])


def classify(points, converged, catalogue, radius):
    cat = np.asarray(catalogue, dtype=float)
    pts = np.asarray(points, dtype=float)
    with np.errstate(invalid="ignore"):
        dist = np.linalg.norm(pts[:, None, :] - cat[None, :, :], axis=-1)
    dist = np.where(np.isfinite(dist), dist, np.inf)
    nearest = np.argmin(dist, axis=1)
    ok = converged & (dist[np.arange(len(pts)), nearest] <= radius)
    return np.where(ok, nearest + 1, 0)


def omega1_mask(model, points, k: int = 1):
    lam = np.linalg.eigvalsh(model.hessian(points))
    return (lam[..., k - 1] < 0) & (lam[..., k] > 0)


def basin_map(
    model: ToyPotential2D,
    cfg: IpmConfig,
    x_range=(-2.0, 2.0),
    y_range=(-1.0, 2.5),
    nx: int = 101,
    ny: int = 101,
    catalogue=TOY_SADDLES,
    match_radius: float = 1e-2,
    chunks: int = 1,
) -> BasinGrid:
    """Classify every grid start by the saddle the solver ends on.

    ``chunks > 1`` splits the grid over worker processes; the result is
    assembled by cell index and does not depend on the split.
    """
    xs = np.linspace(*x_range, nx)
    ys = np.linspace(*y_range, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    starts = np.column_stack([gx.ravel(), gy.ravel()])
    if chunks > 1:
        parts = np.array_split(starts, chunks)
        with ProcessPoolExecutor(max_workers=chunks) as pool:
            results = list(pool.map(_batch_worker, [(model, p, cfg) for p in parts]))
        x_end = np.concatenate([r.x for r in results])
        status = np.concatenate([r.status for r in results])
        wrong = np.concatenate([r.wrong_index for r in results])
    else:
        res = run_ipm_batch(model, starts, cfg)
        x_end, status, wrong = res.x, res.status, res.wrong_index
    conv = (status == CONVERGED) & ~wrong
    labels = classify(x_end, conv, catalogue, match_radius).reshape(nx, ny)
    mask = omega1_mask(model, starts, cfg.aux.k).reshape(nx, ny)
    return BasinGrid(
        tuple(x_range), tuple(y_range), nx, ny, labels, mask, tuple(map(tuple, catalogue)), match_radius,
        status.reshape(nx, ny),
    )


def _batch_worker(args):
    model, pts, cfg = args
    return run_ipm_batch(model, pts, cfg)


# --------------------------------------------------------------------------
# PDE tables


def _status_mark(trace: IterationTrace) -> str:
    return "ok" if trace.converged and not trace.wrong_index else "x"


def ch_table(
    initial: dict[str, np.ndarray] | np.ndarray | None = None,
    M_list=(10, 100, 200, 500),
    rho_imf: float = 0.0,
    rho_ipm: float = 100.0,
    model: GinzburgLandau1D | None = None,
    **cfg_kw,
) -> list[dict]:
    """Convergence (``ok``) / failure (``x``) for IMF and IPM over ``M``."""
    model = model or GinzburgLandau1D.cahn_hilliard()
    if initial is None:
        initial = {"phi04": phi04(model)}
    elif not isinstance(initial, dict):
        initial = {"custom": np.asarray(initial, dtype=float)}
    rows = []
    for name, phi0 in initial.items():
        phi0 = model.project_mass(phi0)
        for M in M_list:
            for method, rho in (("IMF", rho_imf), ("IPM", rho_ipm)):
                cfg = ch_config(rho=rho, M=M, **cfg_kw)
                tr = run_ipm(model, phi0, cfg)
                rows.append(
                    {
                        "initial": name,
                        "stand_in_initial": name.endswith("*"),
                        "M": M,
                        "method": method,
                        "rho": rho,
                        "status": tr.status,
                        "mark": _status_mark(tr),
                        "outer_iters": tr.outer_iters,
                        "final_err": float(tr.errors[-1]),
                        "mass": float(np.mean(tr.x)) if np.all(np.isfinite(tr.x)) else float("nan"),
                        "trace": tr,
                    }
                )
                log.info("CH %s %s M=%d: %s after %d cycles", name, method, M, tr.status, tr.outer_iters)
    return rows


@dataclass(frozen=True)
class CostTableRow:
    M: int
    rho: float
    outer_iters: int
    status: str

    @property
    def total_cost(self) -> int | None:
        return self.M * self.outer_iters if self.status == CONVERGED else None


def ac_cost_table(
    M_list=(100, 200, 400),
    rho_list=(0.0, 0.3),
    initial: np.ndarray | None = None,
    model: GinzburgLandau1D | None = None,
    **cfg_kw,
) -> list[CostTableRow]:
    model = model or GinzburgLandau1D.allen_cahn()
    phi0 = ac_initial(model) if initial is None else np.asarray(initial, dtype=float)
    rows = []
    for rho in rho_list:
        for M in M_list:
            tr = run_ipm(model, phi0, ac_config(rho=rho, M=M, **cfg_kw))
            rows.append(CostTableRow(M, rho, tr.outer_iters, tr.status))
            log.info("AC rho=%g M=%d: %s after %d cycles", rho, M, tr.status, tr.outer_iters)
    return rows


@dataclass
class PenaltyRun:
    power: int
    rho: float
    M: int
    status: str
    outer_iters: int
    errors: np.ndarray = field(repr=False)


def compare_penalty(
    powers=(3, 4),
    rho_list=(0.4,),
    M_list=(10_000,),
    problem: str = "allen-cahn",
    initial: np.ndarray | None = None,
    **cfg_kw,
) -> list[PenaltyRun]:
    """Run every (b, rho, M) combination on the Allen-Cahn problem."""
    if problem != "allen-cahn":
        raise ValueError("compare_penalty runs on the Allen-Cahn problem; use basin_map for the toy")
    model = GinzburgLandau1D.allen_cahn()
    phi0 = ac_initial(model) if initial is None else np.asarray(initial, dtype=float)
    runs = []
    for b in powers:
        for rho in rho_list:
            for M in M_list:
                tr = run_ipm(model, phi0, ac_config(rho=rho, M=M, power=b, **cfg_kw))
                runs.append(PenaltyRun(b, rho, M, tr.status, tr.outer_iters, tr.errors))
                log.info("AC b=%d rho=%g M=%d: %s after %d cycles", b, rho, M, tr.status, tr.outer_iters)
    return runs


def penalty_report(runs: list[PenaltyRun]) -> dict:
    """Summarise which penalty needed more cycles and which tolerated more."""
    by_key = {(r.power, r.rho, r.M): r for r in runs}
    slower_cubic = []
    only_cubic = []
    for (b, rho, M), r in by_key.items():
        if b != 3 or (4, rho, M) not in by_key:
            continue
        q = by_key[(4, rho, M)]
        if r.status == CONVERGED and q.status == CONVERGED:
            slower_cubic.append(r.outer_iters >= q.outer_iters)
        if r.status == CONVERGED and q.status != CONVERGED:
            only_cubic.append({"rho": rho, "M": M})
    return {
        "cubic_needs_more_cycles": bool(slower_cubic) and all(slower_cubic),
        "cases_only_cubic_converges": only_cubic,
        "runs": [
            {"b": r.power, "rho": r.rho, "M": r.M, "status": r.status, "outer_iters": r.outer_iters}
            for r in runs
        ],
    }


__all__ = [
    "BasinGrid",
    "CostTableRow",
    "DIVERGED",
    "PenaltyRun",
    "ac_config",
    "ac_cost_table",
    "ac_initial",
    "basin_map",
    "ch_config",
    "ch_initials",
    "ch_table",
    "classify",
    "compare_penalty",
    "penalty_report",
    "phi04",
    "toy_config",
]
