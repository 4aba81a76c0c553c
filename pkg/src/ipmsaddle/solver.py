"""Iterative proximal minimization for saddle points of given Morse index.

Each outer cycle freezes the lowest ``k`` Hessian modes at ``x^t`` and runs
``M`` descent steps on ``y -> W~_rho(y; x^t, modes)`` started from ``x^t``;
the last inner iterate becomes ``x^{t+1}``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .auxiliary import AuxGradient, AuxParams, eval_penalty, fixed_point_gradient
from .landscape import MetricKind, _resolve_metric, as_state, error_measure, hessian_vector_product
from .spectral import EigenSolverError, SpectralInfo, lowest_k_modes

log = logging.getLogger(__name__)

CONVERGED = "Converged"
DIVERGED = "Diverged"
MAX_OUTER = "MaxOuterReached"
EIG_FAILURE = "EigFailure"

MAX_HALVINGS = 20
DESCENT_SLACK = 1e-12


@dataclass(frozen=True)
class IpmConfig:
    """Solver parameters.

    ``backtrack`` halves the inner step (at most 20 times) whenever a step
    would raise W~; switch it off for plain fixed-step descent.
    ``semi_implicit`` treats the model's stiff linear part implicitly when
    the model offers one (periodic grid models); ``stabilizer`` adds the
    usual ``S * (y^{n+1} - y^n)`` term to that implicit part.  With
    ``penalty_stabilizer`` the stabilizer is raised each step by half the
    largest pointwise curvature of the penalty, ``rho b(b-1)/2 max|y-x|^(b-2)``,
    which keeps the explicit remainder stable for stiff penalties.
    """

    aux: AuxParams = field(default_factory=AuxParams)
    M: int = 100
    inner_dt: float = 1e-2
    tol: float = 1e-8
    max_outer: int = 1000
    divergence_cap: float = 1e6
    eig_tol: float = 1e-8
    backtrack: bool = True
    semi_implicit: bool = True
    stabilizer: float = 0.0
    penalty_stabilizer: bool = False
    rho_decay: float = 1.0
    zero_tol: float = 1e-6

    def __post_init__(self):
        if not self.aux.alpha + self.aux.beta > 1.0:
            raise ValueError("alpha+beta must exceed 1")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.inner_dt <= 0:
            raise ValueError("inner_dt must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if not 0 < self.rho_decay <= 1:
            raise ValueError("rho_decay must lie in (0, 1]")

    @property
    def rho(self) -> float:
        return self.aux.rho

    def with_(self, **changes) -> "IpmConfig":
        """Copy with solver fields and/or ``rho``, ``alpha``, ``beta`` replaced."""
        aux = self.aux
        if "rho" in changes:
            aux = replace(aux, penalty=aux.penalty.with_rho(changes.pop("rho")))
        if "penalty" in changes:
            aux = replace(aux, penalty=changes.pop("penalty"))
        aux_fields = {key: changes.pop(key) for key in ("alpha", "beta", "k") if key in changes}
        if aux_fields:
            aux = replace(aux, **aux_fields)
        return replace(self, aux=aux, **changes)


@dataclass
class OuterRecord:
    outer: int
    x: np.ndarray
    err: float
    eigenvalues: np.ndarray  # lowest k+1 when available
    penalty: float  # d(x^{t-1}, x^t); 0 for the initial record
    inner_steps: int
    elapsed_s: float
    degenerate: bool = False


@dataclass
class IterationTrace:
    records: list[OuterRecord] = field(default_factory=list)
    status: str = MAX_OUTER
    wrong_index: bool = False
    message: str = ""

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.err for r in self.records])

    @property
    def x(self) -> np.ndarray:
        return self.records[-1].x

    @property
    def outer_iters(self) -> int:
        return self.records[-1].outer if self.records else 0

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def total_inner_steps(self) -> int:
        return int(sum(r.inner_steps for r in self.records))


def _modes(model, x, cfg, metric, warm=None) -> SpectralInfo:
    k = cfg.aux.k
    return lowest_k_modes(model, x, k=k, metric=metric, tol=cfg.eig_tol, warm_start=warm)


def _eigs(modes: SpectralInfo) -> np.ndarray:
    lam = list(modes.eigenvalues)
    if modes.next_eigenvalue is not None:
        lam.append(modes.next_eigenvalue)
    return np.array(lam)


class InnerStepper:
    """Descent steps on W~ for one outer cycle."""

    def __init__(self, model, x, modes, cfg: IpmConfig, rho: float):
        self.grad = AuxGradient(cfg.aux, model, x, modes, rho)
        self.dt = cfg.inner_dt
        self.backtrack = cfg.backtrack
        self.model = model
        self.metric = modes.metric
        self.stabilizer = cfg.stabilizer
        self.semi_implicit = cfg.semi_implicit and hasattr(model, "stiff_symbol")
        self.adaptive = self.semi_implicit and cfg.penalty_stabilizer and rho > 0
        self.x = np.asarray(x, dtype=float)
        self.rho = rho
        self.power = cfg.aux.penalty.power
        self.symbol = model.stiff_symbol(self.metric, self.stabilizer) if self.semi_implicit else None

    def _symbol(self, y):
        if not self.adaptive:
            return self.symbol
        p = self.power
        extra = 0.5 * self.rho * p * (p - 1) * float(np.max(np.abs(y - self.x))) ** (p - 2)
        return self.model.stiff_symbol(self.metric, self.stabilizer + extra)

    def _trial(self, y, g, dt, sym=None):
        if sym is None:
            return y - dt * g
        n = y.shape[-1]
        y_hat = np.fft.rfft(y)
        rhs = y_hat - dt * (np.fft.rfft(g) - sym * y_hat)
        return np.fft.irfft(rhs / (1.0 + dt * sym), n=n)

    def step(self, y):
        """One step; returns ``(y_new, evaluations)``."""
        g = self.grad(y)
        if self.metric.is_hminus1:
            # exact mass conservation: the H^-1 gradient has no mean component
            g = g - g.mean()
        sym = self._symbol(y) if self.semi_implicit else None
        y_new = self._trial(y, g, self.dt, sym)
        if not self.backtrack:
            return y_new, 1
        w_old = self.grad.value(y)
        dt = self.dt
        for n_half in range(MAX_HALVINGS):
            w_new = self.grad.value(y_new)
            if np.isfinite(w_new) and w_new <= w_old + DESCENT_SLACK * max(1.0, abs(w_old)):
                return y_new, n_half + 1
            dt *= 0.5
            y_new = self._trial(y, g, dt, sym)
        return y_new, MAX_HALVINGS + 1


def run_ipm(model, x0, cfg: IpmConfig, metric: MetricKind | None = None, progress=None) -> IterationTrace:
    """Run the outer/inner proximal iteration from ``x0``.

    ``progress`` is an optional callable receiving each :class:`OuterRecord`.
    """
    metric = _resolve_metric(model, metric)
    x = as_state(x0, model.dim)
    k = cfg.aux.k
    if not k < model.dim:
        raise ValueError("Morse index target must be below the dimension")
    trace = IterationTrace()
    t0 = time.perf_counter()
    try:
        modes = _modes(model, x, cfg, metric)
    except EigenSolverError as exc:
        trace.status, trace.message = EIG_FAILURE, str(exc)
        return trace
    err = error_measure(model, x, metric)
    rec = OuterRecord(0, x.copy(), err, _eigs(modes), 0.0, 0, 0.0, modes.degenerate)
    trace.records.append(rec)
    if progress:
        progress(rec)
    t = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            if not np.isfinite(err) or err > cfg.divergence_cap:
                trace.status = DIVERGED
                break
            if err <= cfg.tol:
                trace.status = CONVERGED
                break
            if t >= cfg.max_outer:
                trace.status = MAX_OUTER
                break
            rho = cfg.rho * cfg.rho_decay**t
            stepper = InnerStepper(model, x, modes, cfg, rho)
            y = x
            evals = 0
            for _ in range(cfg.M):
                y, n = stepper.step(y)
                evals += n
                if not np.all(np.isfinite(y)):
                    break
            t += 1
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > cfg.divergence_cap:
                trace.records.append(
                    OuterRecord(t, y, np.inf, np.full(k + 1, np.nan), np.inf, evals, time.perf_counter() - t0)
                )
                trace.status = DIVERGED
                break
            pen = eval_penalty(cfg.aux.penalty, x, y, metric)
            x = y
            try:
                modes = _modes(model, x, cfg, metric, warm=modes)
            except EigenSolverError as exc:
                trace.status, trace.message = EIG_FAILURE, str(exc)
                break
            err = error_measure(model, x, metric)
            if modes.degenerate:
                log.debug("outer %d: near-degenerate lowest eigenvalues %s", t, _eigs(modes))
            rec = OuterRecord(t, x.copy(), err, _eigs(modes), pen, evals, time.perf_counter() - t0, modes.degenerate)
            trace.records.append(rec)
            if progress:
                progress(rec)
    if trace.status == CONVERGED:
        trace.wrong_index = not index_matches(modes, k, cfg.zero_tol)
        if trace.wrong_index:
            trace.message = f"terminal point does not have exactly {k} negative eigenvalues"
            log.warning(trace.message)
    return trace


def index_matches(modes: SpectralInfo, k: int, zero_tol: float) -> bool:
    """Exactly ``k`` eigenvalues below ``-zero_tol * max(1, |lambda_1|)``.

    Eigenvalues inside the band are treated as zero (symmetry modes such as
    translations on a periodic grid).
    """
    lam = _eigs(modes)
    cut = -zero_tol * max(1.0, abs(float(lam[0])))
    if modes.spectrum is not None:
        return int(np.sum(modes.spectrum < cut)) == k
    return bool(lam[k - 1] < cut and (len(lam) <= k or lam[k] >= cut))


@dataclass(frozen=True)
class NashReport:
    """First-order residuals of the three agents at ``(y, x, u) = (x, x, v(x))``."""

    r_y: float  # agent -1: stationarity of W~ at y = x
    r_x: float  # agent 0: |x - y|, zero by construction
    r_u: float  # agent 1: eigen-residual of the frozen modes
    eigenvalues: np.ndarray
    is_index_k: bool
    tol: float

    @property
    def passed(self) -> bool:
        return self.is_index_k and max(self.r_y, self.r_x, self.r_u) <= self.tol

    def as_dict(self) -> dict:
        return {
            "r_minus1": self.r_y,
            "r_0": self.r_x,
            "r_1": self.r_u,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "is_index_k": self.is_index_k,
            "tol": self.tol,
            "passed": self.passed,
        }


def verify_nash_residuals(model, x, cfg: IpmConfig, metric: MetricKind | None = None, tol: float = 1e-6) -> NashReport:
    metric = _resolve_metric(model, metric)
    x = as_state(x, model.dim)
    modes = _modes(model, x, cfg, metric)
    g = AuxGradient(cfg.aux, model, x, modes, cfg.rho)(x)
    r_y = model.error_norm(g)
    r_u = 0.0
    for lam, v in zip(modes.eigenvalues, modes.eigenvectors):
        r = hessian_vector_product(model, x, v, metric) - lam * v
        r_u = max(r_u, model.error_norm(r))
    return NashReport(
        r_y=float(r_y),
        r_x=0.0,
        r_u=float(r_u),
        eigenvalues=_eigs(modes),
        is_index_k=index_matches(modes, cfg.aux.k, cfg.zero_tol),
        tol=tol,
    )


def nash_residual_closed_form(model, x, cfg: IpmConfig, metric: MetricKind | None = None) -> float:
    """``|[I - (a+b) P] grad V(x)|`` evaluated directly."""
    metric = _resolve_metric(model, metric)
    modes = _modes(model, as_state(x, model.dim), cfg, metric)
    return model.error_norm(fixed_point_gradient(cfg.aux, model, x, modes))


class InsufficientData(ValueError):
    pass


def estimate_convergence_order(trace_or_errors, threshold: float = 1e-1, min_points: int = 4) -> float:
    """Least-squares slope of ``log e_{t+1}`` against ``log e_t`` on the tail.

    Only errors below ``threshold`` and strictly decreasing pairs are used.
    """
    if isinstance(trace_or_errors, IterationTrace):
        errors = trace_or_errors.errors
    else:
        errors = np.asarray(trace_or_errors, dtype=float)
    errors = errors[np.isfinite(errors) & (errors > 0)]
    tail = errors[np.argmax(errors < threshold):] if np.any(errors < threshold) else errors[:0]
    if tail.size < min_points:
        raise InsufficientData(f"need {min_points} errors below {threshold}, have {tail.size}")
    a, b = tail[:-1], tail[1:]
    keep = b < a
    a, b = np.log(a[keep]), np.log(b[keep])
    if a.size < min_points - 1:
        raise InsufficientData("too few decreasing error pairs")
    slope, _ = np.polyfit(a, b, 1)
    return float(slope)


# --------------------------------------------------------------------------
# lock-step batch version for small models with vectorised callbacks


def _batch_modes(model, X, k):
    lam, vec = np.linalg.eigh(model.hessian(X))
    V = vec[..., :k]  # (n, d, k)
    # deterministic sign: first non-negligible component positive
    scale = np.max(np.abs(V), axis=1, keepdims=True)
    first = np.argmax(np.abs(V) > 1e-8 * scale, axis=1)
    lead = np.take_along_axis(V, first[:, None, :], axis=1)
    V = np.where(lead < 0, -V, V)
    return lam, V


def _batch_project(V, r):
    return np.einsum("nik,nk->ni", V, np.einsum("nik,ni->nk", V, r))


class _BatchAux:
    def __init__(self, model, cfg: IpmConfig, x, V, rho):
        self.model, self.x, self.V, self.rho = model, x, V, rho
        self.a, self.b = cfg.aux.alpha, cfg.aux.beta
        self.pen = cfg.aux.penalty
        self.h = model.h

    def subset(self, mask):
        out = object.__new__(_BatchAux)
        out.__dict__.update(self.__dict__)
        out.x, out.V = self.x[mask], self.V[mask]
        return out

    def _penalty(self, r):
        b = self.pen.power
        if self.pen.kind == "separable":
            return self.h * np.sum(np.abs(r) ** b, axis=-1)
        return (self.h * np.sum(r * r, axis=-1)) ** (b / 2)

    def _penalty_grad(self, r):
        b = self.pen.power
        if self.pen.kind == "separable":
            return b * np.abs(r) ** (b - 2) * r
        nrm = np.sqrt(self.h * np.sum(r * r, axis=-1, keepdims=True))
        return b * nrm ** (b - 2) * r

    def value(self, y):
        m, x = self.model, self.x
        pr = _batch_project(self.V, y - x)
        val = (1 - self.a) * m.energy(y) + self.a * m.energy(y - pr) - self.b * m.energy(x + pr)
        if self.rho != 0:
            val = val + self.rho * self._penalty(y - x)
        return val

    def grad(self, y):
        m, x, V = self.model, self.x, self.V
        pr = _batch_project(V, y - x)
        g = -self.b * _batch_project(V, m.gradient(x + pr))
        if self.a != 1.0:
            g = g + (1 - self.a) * m.gradient(y)
        if self.a != 0.0:
            gi = m.gradient(y - pr)
            g = g + self.a * (gi - _batch_project(V, gi))
        if self.rho != 0:
            g = g + self.rho * self._penalty_grad(y - x)
        return g


def _batch_step(aux: _BatchAux, y, dt0, backtrack):
    g = aux.grad(y)
    trial = y - dt0 * g
    if not backtrack:
        return trial
    w_old = aux.value(y)
    slack = DESCENT_SLACK * np.maximum(1.0, np.abs(w_old))
    dt = np.full(len(y), dt0)
    todo = np.arange(len(y))
    for _ in range(MAX_HALVINGS):
        sub = aux.subset(todo)
        w_new = sub.value(trial[todo])
        bad = ~(np.isfinite(w_new) & (w_new <= w_old[todo] + slack[todo]))
        todo = todo[bad]
        if todo.size == 0:
            break
        dt[todo] *= 0.5
        trial[todo] = y[todo] - dt[todo, None] * g[todo]
    return trial


@dataclass
class BatchResult:
    x: np.ndarray  # terminal points, (n, d)
    status: np.ndarray  # object array of status strings
    outer_iters: np.ndarray
    errors: np.ndarray
    wrong_index: np.ndarray

    @property
    def converged(self) -> np.ndarray:
        return self.status == CONVERGED


def run_ipm_batch(model, X0, cfg: IpmConfig) -> BatchResult:
    """:func:`run_ipm` applied to many starting points in lock step.

    Needs a model whose ``energy``/``gradient``/``hessian`` broadcast over a
    leading axis and an L2 metric (the toy potential).
    """
    k = cfg.aux.k
    X = np.array(X0, dtype=float).reshape(-1, model.dim)
    n = len(X)
    status = np.full(n, MAX_OUTER, dtype=object)
    outer = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    lam, V = _batch_modes(model, X, k)
    err = np.linalg.norm(model.gradient(X), axis=-1)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(cfg.max_outer + 1):
            div = active & (~np.isfinite(err) | (err > cfg.divergence_cap))
            conv = active & ~div & (err <= cfg.tol)
            status[div] = DIVERGED
            status[conv] = CONVERGED
            active &= ~(div | conv)
            if t == cfg.max_outer or not active.any():
                break
            idx = np.flatnonzero(active)
            aux = _BatchAux(model, cfg, X[idx], V[idx], cfg.rho * cfg.rho_decay**t)
            y = X[idx].copy()
            for _ in range(cfg.M):
                y = _batch_step(aux, y, cfg.inner_dt, cfg.backtrack)
            finite = np.all(np.isfinite(y), axis=-1) & (np.max(np.abs(y), axis=-1) <= cfg.divergence_cap)
            outer[idx] = t + 1
            bad = idx[~finite]
            status[bad] = DIVERGED
            active[bad] = False
            X[bad] = np.nan
            err[bad] = np.inf
            good = idx[finite]
            X[good] = y[finite]
            lam_g, V_g = _batch_modes(model, X[good], k)
            lam[good], V[good] = lam_g, V_g
            err[good] = np.linalg.norm(model.gradient(X[good]), axis=-1)
    scale = np.maximum(1.0, np.abs(lam[:, 0]))
    nneg = np.sum(lam < -cfg.zero_tol * scale[:, None], axis=-1)
    wrong = (status == CONVERGED) & (nneg != k)
    return BatchResult(X, status, outer, err, wrong)
