"""Lowest eigenpairs of the Hessian in a given metric (the min-mode).

For the metric inner product ``<u, v>_m = u^T G v`` the eigenproblem is the
generalized one ``B v = lam G v`` where ``B`` is the bilinear Hessian form
``<u, H_L2 v>_L2``.  Eigenvectors are normalised to unit metric norm and
carry a deterministic sign.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .landscape import MetricKind, _resolve_metric, hessian_vector_product, metric_norm, riesz

DENSE_MAX_DIM = 200
DEGENERACY_GAP = 1e-8


class EigenSolverError(RuntimeError):
    """Iterative eigensolver did not reach the requested residual."""

    def __init__(self, message, best_residual):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass(frozen=True)
class SpectralInfo:
    eigenvalues: np.ndarray  # ascending, shape (k,)
    eigenvectors: np.ndarray  # shape (k, dim), unit metric norm
    metric: MetricKind
    residuals: np.ndarray
    degenerate: bool = False
    next_eigenvalue: float | None = None  # lambda_{k+1}, when known
    spectrum: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def projector(self) -> "Projector":
        return Projector(self)


def _fix_sign(v):
    scale = np.max(np.abs(v))
    idx = np.flatnonzero(np.abs(v) > 1e-8 * scale)[0]
    return -v if v[idx] < 0 else v


def _dense_l2_hessian(model, x):
    if hasattr(model, "hessian_l2"):
        mat = model.hessian_l2(x)
    elif hasattr(model, "hessian"):
        mat = model.hessian(x)
    else:
        eye = np.eye(model.dim)
        mat = np.column_stack([model.hvp(x, e) for e in eye])
    return 0.5 * (mat + mat.T)


def dense_metric_spectrum(model, x, metric: MetricKind | None = None):
    """All eigenpairs of the Hessian in ``metric`` by dense factorisation.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as rows,
    normalised in the metric but without sign fixing.
    """
    metric = _resolve_metric(model, metric)
    x = np.asarray(x, dtype=float)
    hess = _dense_l2_hessian(model, x)
    h = metric.h
    if not metric.is_hminus1:
        lam, vec = scipy.linalg.eigh(hess)
        return lam, vec.T / np.sqrt(h)
    grid = metric.grid(model.dim)
    # S = (-Δ)^{1/2} on mean-zero functions; S H S w = lam w, v = S w
    sqrt_sym = np.sqrt(grid.xi2)
    eye = np.eye(model.dim)
    s_mat = grid.apply_symbol(eye, sqrt_sym)
    s_mat = 0.5 * (s_mat + s_mat.T)
    a_mat = s_mat @ hess @ s_mat
    q = scipy.linalg.null_space(np.ones((1, model.dim)))
    a_sub = q.T @ a_mat @ q
    lam, c = scipy.linalg.eigh(0.5 * (a_sub + a_sub.T))
    w = q @ c
    v = s_mat @ w
    v -= v.mean(axis=0)
    return lam, v.T / np.sqrt(h)


def _residual(model, x, metric, lam, v):
    r = hessian_vector_product(model, x, v, metric) - lam * v
    return metric_norm(metric, r - r.mean() if metric.is_hminus1 else r)


def lowest_k_modes(
    model,
    x,
    k: int = 1,
    metric: MetricKind | None = None,
    tol: float = 1e-8,
    warm_start: SpectralInfo | None = None,
    max_iter: int = 500,
) -> SpectralInfo:
    """The ``k`` smallest eigenpairs of the Hessian at ``x``."""
    metric = _resolve_metric(model, metric)
    x = np.asarray(x, dtype=float)
    dim = model.dim
    if not 1 <= k < dim:
        raise ValueError(f"need 1 <= k < dim, got k={k}, dim={dim}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if dim <= DENSE_MAX_DIM:
        lam_all, vec_all = dense_metric_spectrum(model, x, metric)
        lam = lam_all[: k + 1]
        vecs = vec_all[: k + 1]
        spectrum = lam_all
    else:
        lam, vecs = _lobpcg(model, x, k + 1, metric, tol, warm_start, max_iter)
        spectrum = None
    vecs = np.array([_fix_sign(v) for v in vecs])
    residuals = np.array([_residual(model, x, metric, l, v) for l, v in zip(lam[:k], vecs[:k])])
    scale = max(1.0, float(np.max(np.abs(lam))))
    if spectrum is None and np.any(residuals > tol * scale):
        raise EigenSolverError("lowest_k_modes did not converge", float(residuals.max()))
    gaps = np.diff(lam)
    return SpectralInfo(
        eigenvalues=lam[:k].copy(),
        eigenvectors=vecs[:k].copy(),
        metric=metric,
        residuals=residuals,
        degenerate=bool(np.any(gaps < DEGENERACY_GAP)),
        next_eigenvalue=float(lam[k]) if len(lam) > k else None,
        spectrum=spectrum,
    )


def _lobpcg(model, x, m, metric, tol, warm_start, max_iter):
    dim = model.dim
    if metric.is_hminus1:
        grid = metric.grid(dim)
        sqrt_sym = np.sqrt(grid.xi2)
        inv_sqrt = np.zeros_like(sqrt_sym)
        inv_sqrt[1:] = 1.0 / sqrt_sym[1:]

        def lift(block):
            return grid.apply_symbol(block, sqrt_sym)

        def lower(block):
            return grid.apply_symbol(block, inv_sqrt)

        constraints = np.ones((dim, 1))
    else:
        lift = lower = lambda block: block  # noqa: E731
        constraints = None

    def a_op(block):
        block = lift(block.reshape(dim, -1))
        out = np.column_stack([model.hvp(x, c) for c in block.T])
        return lift(out)

    a_lin = scipy.sparse.linalg.LinearOperator((dim, dim), matvec=a_op, matmat=a_op, dtype=float)
    precond = _preconditioner(model, metric)
    rng = np.random.default_rng(0)
    start = rng.standard_normal((dim, m))
    if warm_start is not None:
        nwarm = min(m, warm_start.k)
        start[:, :nwarm] = lower(warm_start.eigenvectors[:nwarm].T)
    with warnings.catch_warnings():
        # convergence is judged from the residuals computed afterwards
        warnings.simplefilter("ignore", UserWarning)
        lam, vec = scipy.sparse.linalg.lobpcg(
            a_lin, start, M=precond, Y=constraints, tol=tol, maxiter=max_iter, largest=False
        )
    order = np.argsort(lam)
    lam, vec = lam[order], lift(vec[:, order])
    vecs = []
    for v in vec.T:
        if metric.is_hminus1:
            v = v - v.mean()
        vecs.append(v / metric_norm(metric, v))
    return lam, np.array(vecs)


def _preconditioner(model, metric):
    """Inverse of the shifted stiff linear part, when the model has one."""
    if not hasattr(model, "stiff_symbol"):
        return None
    dim = model.dim
    grid = metric.grid(dim)
    # shift 2 keeps kappa^2 xi^2 + 3 phi^2 - 1 + 2 > 0 spectrally comparable
    sym = model.stiff_symbol(metric, 2.0)
    inv = np.zeros_like(sym)
    nz = sym > 0
    inv[nz] = 1.0 / sym[nz]

    def apply(block):
        return grid.apply_symbol(block.reshape(dim, -1), inv)

    return scipy.sparse.linalg.LinearOperator((dim, dim), matvec=apply, matmat=apply, dtype=float)


class Projector:
    """Metric-orthogonal projector onto the span of the lowest modes."""

    def __init__(self, modes: SpectralInfo):
        self.vectors = modes.eigenvectors
        metric = modes.metric
        if metric.is_hminus1:
            grid = metric.grid(self.vectors.shape[1])
            # <v_i, w>_{H^-1} = h * ((-Δ)^{-1} v_i) . w
            self.duals = metric.h * grid.inv_neg_laplacian(self.vectors.T).T
        else:
            self.duals = metric.h * self.vectors

    def coefficients(self, w):
        return self.duals @ w

    def __call__(self, w):
        return self.coefficients(w) @ self.vectors


def projector(modes: SpectralInfo) -> Projector:
    return Projector(modes)


def rayleigh_quotient(model, x, v, metric: MetricKind | None = None) -> float:
    from .landscape import metric_inner

    metric = _resolve_metric(model, metric)
    hv = hessian_vector_product(model, x, v, metric)
    return metric_inner(metric, v, hv) / metric_inner(metric, v, v)


def count_negative(eigenvalues, zero_tol: float) -> int:
    return int(np.sum(np.asarray(eigenvalues) < -zero_tol))


__all__ = [
    "EigenSolverError",
    "Projector",
    "SpectralInfo",
    "count_negative",
    "dense_metric_spectrum",
    "lowest_k_modes",
    "projector",
    "rayleigh_quotient",
    "riesz",
]
