"""Potential landscapes, state vectors and metrics.

States are plain 1-D float64 numpy arrays.  Every model exposes its energy,
its gradient in the L2 (quadrature-weighted) representation and the
matching Hessian-vector product; a :class:`MetricKind` then maps those into
the representation of the chosen Riemannian metric.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


def as_state(values, dim: int | None = None) -> np.ndarray:
    """Validate and copy ``values`` into a finite 1-D float64 array."""
    x = np.array(values, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"state must be a non-empty 1-D vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state contains non-finite entries")
    if dim is not None and x.size != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {x.size}")
    return x


def _check_dim(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dim:
        raise ValueError(f"dimension mismatch: model has dim {model.dim}, got {x.shape[-1]}")
    return x


# --------------------------------------------------------------------------
# periodic spectral calculus


class PeriodicGrid:
    """Uniform periodic grid on [0, length) with spectral Laplacian."""

    def __init__(self, n: int, length: float = 1.0):
        if n < 2:
            raise ValueError("periodic grid needs at least 2 points")
        self.n = int(n)
        self.length = float(length)
        self.h = self.length / self.n
        xi = 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.h)
        self.xi2 = xi**2
        inv = np.zeros_like(self.xi2)
        inv[1:] = 1.0 / self.xi2[1:]
        self.inv_xi2 = inv

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def apply_symbol(self, u, symbol):
        u_hat = np.fft.rfft(u, axis=0)
        symbol = symbol.reshape(symbol.shape + (1,) * (u_hat.ndim - 1))
        return np.fft.irfft(symbol * u_hat, n=self.n, axis=0)

    def neg_laplacian(self, u):
        return self.apply_symbol(u, self.xi2)

    def inv_neg_laplacian(self, u):
        """(-Δ)^{-1} on the non-constant Fourier modes; the mean is dropped."""
        return self.apply_symbol(u, self.inv_xi2)

    def mean(self, u):
        return np.mean(u, axis=0)


@dataclass(frozen=True)
class MetricKind:
    """Inner product on configuration space.

    ``L2`` is ``h * sum(u * v)`` (``h = 1`` gives the Euclidean product used
    for finite-dimensional potentials).  ``Hminus1`` is
    ``h * sum(((-Δ)^{-1} u) * v)`` on mean-zero periodic grid functions.
    """

    variant: str = "L2"
    h: float = 1.0
    length: float = 1.0

    def __post_init__(self):
        if self.variant not in ("L2", "Hminus1"):
            raise ValueError(f"unknown metric variant {self.variant!r}")
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")

    @classmethod
    def l2(cls, h: float = 1.0) -> "MetricKind":
        return cls("L2", h)

    @classmethod
    def hminus1(cls, h: float, length: float = 1.0) -> "MetricKind":
        return cls("Hminus1", h, length)

    @property
    def is_hminus1(self) -> bool:
        return self.variant == "Hminus1"

    def grid(self, n: int) -> PeriodicGrid:
        return _grid(n, self.length)


_GRIDS: dict[tuple[int, float], PeriodicGrid] = {}


def _grid(n: int, length: float) -> PeriodicGrid:
    key = (n, length)
    if key not in _GRIDS:
        _GRIDS[key] = PeriodicGrid(n, length)
    return _GRIDS[key]


# absolute mean above which an H^-1 argument is rejected
HMINUS1_MEAN_ERROR = 1e-12


def _mean_zero(u, where):
    mean = float(np.mean(u))
    scale = max(1.0, float(np.max(np.abs(u))))
    if abs(mean) > HMINUS1_MEAN_ERROR:
        raise ValueError(f"H^-1 {where} has non-negligible mean {mean:.3e}")
    if abs(mean) > 256 * np.finfo(float).eps * scale:
        warnings.warn(f"removing mean {mean:.3e} from H^-1 {where}", RuntimeWarning, stacklevel=3)
    return u - mean


def metric_inner(metric: MetricKind, u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if metric.variant == "L2":
        return float(metric.h * np.dot(u, v))
    u = _mean_zero(u, "argument")
    v = _mean_zero(v, "argument")
    grid = metric.grid(u.size)
    gu = grid.inv_neg_laplacian(u)
    gv = grid.inv_neg_laplacian(v)
    # symmetrised so that <u, v> == <v, u> bit for bit
    return float(0.5 * metric.h * (np.dot(gu, v) + np.dot(gv, u)))


def metric_norm(metric: MetricKind, u) -> float:
    return float(np.sqrt(max(metric_inner(metric, u, u), 0.0)))


def riesz(metric: MetricKind, g_l2):
    """Map an L2-representation gradient to its representation in ``metric``."""
    if metric.variant == "L2":
        return g_l2
    g_l2 = np.asarray(g_l2, dtype=float)
    return metric.grid(g_l2.shape[0]).neg_laplacian(g_l2)


def l2_norm(h: float, u) -> float:
    return float(np.sqrt(h * np.dot(u, u)))


# --------------------------------------------------------------------------
# models


class ToyPotential2D:
    """The three-well, three-saddle potential in the plane.

    All methods accept arrays with trailing dimension 2 and broadcast over
    leading axes, which the basin driver relies on.
    """

    dim = 2
    h = 1.0
    periodic = False

    SADDLES = ((0.61727, 1.10273), (-0.61727, 1.10273), (0.0, -0.31582))
    MINIMA = ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.5))

    def default_metric(self) -> MetricKind:
        return MetricKind.l2(1.0)

    def energy(self, p):
        p = _check_dim(self, p)
        x, y = p[..., 0], p[..., 1]
        ex = np.exp(-(x**2))
        return (
            3.0 * ex * (np.exp(-((y - 1 / 3) ** 2)) - np.exp(-((y - 5 / 3) ** 2)))
            - 5.0 * np.exp(-(y**2)) * (np.exp(-((x - 1) ** 2)) + np.exp(-((x + 1) ** 2)))
            + 0.2 * x**4
            + 0.2 * (y - 1 / 3) ** 4
        )

    def gradient(self, p):
        p = _check_dim(self, p)
        x, y = p[..., 0], p[..., 1]
        ex = np.exp(-(x**2))
        a = np.exp(-((y - 1 / 3) ** 2))
        b = np.exp(-((y - 5 / 3) ** 2))
        ey = np.exp(-(y**2))
        c = np.exp(-((x - 1) ** 2))
        d = np.exp(-((x + 1) ** 2))
        gx = (
            -6.0 * x * ex * (a - b)
            + 10.0 * ey * ((x - 1) * c + (x + 1) * d)
            + 0.8 * x**3
        )
        gy = (
            3.0 * ex * (-2.0 * (y - 1 / 3) * a + 2.0 * (y - 5 / 3) * b)
            + 10.0 * y * ey * (c + d)
            + 0.8 * (y - 1 / 3) ** 3
        )
        return np.stack([gx, gy], axis=-1)

    def hessian(self, p):
        """Analytic 2x2 Hessian, shape ``p.shape + (2,)``."""
        p = _check_dim(self, p)
        x, y = p[..., 0], p[..., 1]
        ex = np.exp(-(x**2))
        ya, yb = y - 1 / 3, y - 5 / 3
        a = np.exp(-(ya**2))
        b = np.exp(-(yb**2))
        ey = np.exp(-(y**2))
        xm, xp = x - 1, x + 1
        c = np.exp(-(xm**2))
        d = np.exp(-(xp**2))
        hxx = (
            3.0 * (4 * x**2 - 2) * ex * (a - b)
            + 10.0 * ey * ((1 - 2 * xm**2) * c + (1 - 2 * xp**2) * d)
            + 2.4 * x**2
        )
        hxy = (
            -6.0 * x * ex * (-2 * ya * a + 2 * yb * b)
            - 20.0 * y * ey * (xm * c + xp * d)
        )
        hyy = (
            3.0 * ex * ((4 * ya**2 - 2) * a - (4 * yb**2 - 2) * b)
            + 10.0 * (1 - 2 * y**2) * ey * (c + d)
            + 2.4 * ya**2
        )
        row0 = np.stack([hxx, hxy], axis=-1)
        row1 = np.stack([hxy, hyy], axis=-1)
        return np.stack([row0, row1], axis=-2)

    def hvp(self, p, v):
        v = _check_dim(self, v)
        return np.einsum("...ij,...j->...i", self.hessian(p), v)

    def error_norm(self, g_metric) -> float:
        return float(np.linalg.norm(g_metric))


@dataclass(frozen=True)
class GinzburgLandau1D:
    """Ginzburg-Landau energy on a periodic uniform grid of [0, 1).

    ``F = h * sum(kappa^2/2 * phi (-Δ phi) + (phi^2 - 1)^2 / 4)`` with a
    spectral Laplacian, so the L2 gradient is ``-kappa^2 Δphi + phi^3 - phi``.
    """

    kappa: float
    n_grid: int = 100
    mass: float | None = None
    metric: MetricKind = field(default=None)  # type: ignore[assignment]
    length: float = 1.0
    periodic = True

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.n_grid < 2:
            raise ValueError("n_grid must be at least 2")
        if self.metric is None:
            object.__setattr__(self, "metric", MetricKind.l2(self.h))
        if abs(self.metric.h - self.h) > 1e-15:
            raise ValueError("metric grid spacing does not match the model grid")

    @classmethod
    def cahn_hilliard(cls, n_grid: int = 100, kappa: float = 0.04, mass: float = 0.6):
        return cls(kappa, n_grid, mass, MetricKind.hminus1(1.0 / n_grid))

    @classmethod
    def allen_cahn(cls, n_grid: int = 100, kappa: float = 0.1):
        return cls(kappa, n_grid, None, MetricKind.l2(1.0 / n_grid))

    @property
    def dim(self) -> int:
        return self.n_grid

    @property
    def h(self) -> float:
        return self.length / self.n_grid

    @property
    def grid(self) -> PeriodicGrid:
        return _grid(self.n_grid, self.length)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def default_metric(self) -> MetricKind:
        return self.metric

    def discrete_mass(self, phi) -> float:
        return float(np.mean(phi))

    def project_mass(self, phi):
        phi = as_state(phi, self.dim)
        if self.mass is None:
            return phi
        return phi - np.mean(phi) + self.mass

    def energy(self, phi):
        phi = _check_dim(self, phi)
        lap = self.grid.neg_laplacian(phi)
        dens = 0.5 * self.kappa**2 * phi * lap + 0.25 * (phi**2 - 1.0) ** 2
        return float(self.h * np.sum(dens))

    def gradient(self, phi):
        phi = _check_dim(self, phi)
        return self.kappa**2 * self.grid.neg_laplacian(phi) + phi**3 - phi

    def hvp(self, phi, v):
        phi = _check_dim(self, phi)
        v = _check_dim(self, v)
        return self.kappa**2 * self.grid.neg_laplacian(v) + (3.0 * phi**2 - 1.0) * v

    def hessian_l2(self, phi):
        """Dense matrix of the L2-representation Hessian."""
        phi = _check_dim(self, phi)
        eye = np.eye(self.dim)
        return self.kappa**2 * self.grid.neg_laplacian(eye) + np.diag(3.0 * phi**2 - 1.0)

    def stiff_symbol(self, metric: MetricKind, stabilizer: float = 0.0):
        """rfft multiplier of the linear part ``kappa^2 (-Δ) + S`` in ``metric``."""
        sym = self.kappa**2 * self.grid.xi2 + stabilizer
        if metric.is_hminus1:
            sym = self.grid.xi2 * sym
        return sym

    def error_norm(self, g_metric) -> float:
        return l2_norm(self.h, g_metric)


# --------------------------------------------------------------------------
# module-level operations


def _resolve_metric(model, metric):
    metric = model.default_metric() if metric is None else metric
    if metric.is_hminus1 and not getattr(model, "periodic", False):
        raise ValueError("H^-1 metric requires a periodic grid model")
    return metric


def eval_potential(model, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("eval_potential expects a single state")
    return float(model.energy(x))


def eval_gradient(model, x, metric: MetricKind | None = None):
    """Gradient of the energy represented in ``metric``.

    Under ``Hminus1`` this is ``-Δ (δF/δφ)``, so that ``φ' = -grad`` is the
    Cahn-Hilliard flow ``φ' = Δ δF/δφ``.
    """
    metric = _resolve_metric(model, metric)
    return riesz(metric, model.gradient(x))


def hessian_vector_product(model, x, v, metric: MetricKind | None = None):
    metric = _resolve_metric(model, metric)
    return riesz(metric, model.hvp(x, v))


def error_measure(model, x, metric: MetricKind | None = None) -> float:
    """Convergence error: quadrature L2 norm of the metric gradient."""
    return model.error_norm(eval_gradient(model, x, metric))
