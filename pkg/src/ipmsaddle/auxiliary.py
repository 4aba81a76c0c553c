"""Proximal penalties and the auxiliary functions W and W~_rho.

With ``P`` the metric-orthogonal projector onto the lowest ``k`` modes at
``x``::

    W(y)      = (1-a) V(y) + a V(y - P(y-x)) - b V(x + P(y-x))
    W~_rho(y) = W(y) + rho * d(x, y)

Gradients are returned in the representation of the metric carried by the
modes, so ``y - dt * grad`` is a step of the metric gradient flow.  Because
``P`` is self-adjoint in that metric the formula has the same shape for the
Euclidean, L2 and H^-1 cases.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .landscape import MetricKind, eval_gradient, metric_norm, riesz
from .spectral import Projector, SpectralInfo


@dataclass(frozen=True)
class PenaltyForm:
    """``separable``: ``h * sum |x_i - y_i|^b``; ``norm``: ``||x - y||_m^b``."""

    kind: str = "separable"
    power: int = 4
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in ("separable", "norm"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.power not in (3, 4):
            raise ValueError("penalty exponent must be 3 or 4")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")

    def with_rho(self, rho: float) -> "PenaltyForm":
        return PenaltyForm(self.kind, self.power, rho)


@dataclass(frozen=True)
class AuxParams:
    """Weights of W and the penalty.

    ``coupling`` only matters for the H^-1 metric.  ``"consistent"`` uses
    the exact metric gradient of W~.  ``"l2-coefficient"`` forms the
    projected terms as ``<v, dV>_{L2} v`` in the L2 representation before
    mapping to the metric; this is the Cahn-Hilliard update as usually
    written, and is not the exact gradient of W~.
    """

    alpha: float = 1.0
    beta: float = 1.0
    penalty: PenaltyForm = field(default_factory=PenaltyForm)
    k: int = 1
    coupling: str = "consistent"

    def __post_init__(self):
        if not self.alpha + self.beta > 1.0:
            raise ValueError("alpha+beta must exceed 1")
        if self.coupling not in ("consistent", "l2-coefficient"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.k < 1:
            raise ValueError("Morse index target k must be positive")

    @property
    def rho(self) -> float:
        return self.penalty.rho


def _metric_of(metric, modes=None):
    if metric is not None:
        return metric
    if modes is not None:
        return modes.metric
    return MetricKind.l2(1.0)


def eval_penalty(p: PenaltyForm, x, y, metric: MetricKind | None = None) -> float:
    """Unweighted penalty ``d(x, y)`` (``rho`` is applied by the caller)."""
    metric = _metric_of(metric)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    r = y - x
    if p.kind == "separable":
        return float(metric.h * np.sum(np.abs(r) ** p.power))
    return metric_norm(metric, r) ** p.power


def grad_penalty(p: PenaltyForm, x, y, metric: MetricKind | None = None):
    """Gradient of ``d(x, .)`` at ``y`` in the metric representation."""
    metric = _metric_of(metric)
    r = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    if p.kind == "separable":
        g = p.power * np.abs(r) ** (p.power - 2) * r
        return riesz(metric, g)
    nrm = metric_norm(metric, r)
    return p.power * nrm ** (p.power - 2) * r


def _projected_points(proj: Projector, y, x):
    pr = proj(y - x)
    return y - pr, x + pr


def eval_w(params: AuxParams, model, y, x, modes: SpectralInfo) -> float:
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape or y.shape[-1] != model.dim:
        raise ValueError("dimension mismatch between y, x and model")
    if modes.k != params.k:
        raise ValueError(f"modes carry {modes.k} vectors, params ask for k={params.k}")
    proj = Projector(modes)
    inner, outer = _projected_points(proj, y, x)
    a, b = params.alpha, params.beta
    return float((1 - a) * model.energy(y) + a * model.energy(inner) - b * model.energy(outer))


def eval_w_tilde(params: AuxParams, model, y, x, modes: SpectralInfo, rho: float | None = None) -> float:
    rho = params.rho if rho is None else rho
    w = eval_w(params, model, y, x, modes)
    if rho == 0:
        return w
    return w + rho * eval_penalty(params.penalty, x, y, modes.metric)


def grad_w_tilde(params: AuxParams, model, y, x, modes: SpectralInfo, rho: float | None = None):
    rho = params.rho if rho is None else rho
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if modes.k != params.k:
        raise ValueError(f"modes carry {modes.k} vectors, params ask for k={params.k}")
    return AuxGradient(params, model, x, modes, rho)(y)


class AuxGradient:
    """``y -> grad W~_rho(y; x, modes)`` with the per-cycle setup cached."""

    def __init__(self, params: AuxParams, model, x, modes: SpectralInfo, rho: float):
        self.params = params
        self.model = model
        self.x = np.asarray(x, dtype=float)
        self.metric = modes.metric
        self.proj = Projector(modes)
        self.rho = rho

    def __call__(self, y):
        if self.params.coupling == "l2-coefficient" and self.metric.is_hminus1:
            return self._l2_coefficient(y)
        a, b = self.params.alpha, self.params.beta
        model, metric, proj = self.model, self.metric, self.proj
        inner, outer = _projected_points(proj, y, self.x)
        g = -b * proj(eval_gradient(model, outer, metric))
        if a != 1.0:
            g = g + (1 - a) * eval_gradient(model, y, metric)
        if a != 0.0:
            gi = eval_gradient(model, inner, metric)
            g = g + a * (gi - proj(gi))
        if self.rho != 0:
            g = g + self.rho * grad_penalty(self.params.penalty, self.x, y, metric)
        return g

    def _l2_coefficient(self, y):
        a, b = self.params.alpha, self.params.beta
        model, vecs, h = self.model, self.proj.vectors, self.metric.h
        inner, outer = _projected_points(self.proj, y, self.x)
        go = model.gradient(outer)
        g = -b * (h * (vecs @ go)) @ vecs
        if a != 1.0:
            g = g + (1 - a) * model.gradient(y)
        if a != 0.0:
            gi = model.gradient(inner)
            g = g + a * (gi - (h * (vecs @ gi)) @ vecs)
        g = riesz(self.metric, g)
        if self.rho != 0:
            g = g + self.rho * grad_penalty(self.params.penalty, self.x, y, self.metric)
        return g

    def value(self, y) -> float:
        a, b = self.params.alpha, self.params.beta
        inner, outer = _projected_points(self.proj, y, self.x)
        val = (1 - a) * self.model.energy(y) + a * self.model.energy(inner) - b * self.model.energy(outer)
        if self.rho != 0:
            val += self.rho * eval_penalty(self.params.penalty, self.x, y, self.metric)
        return float(val)


def fixed_point_gradient(params: AuxParams, model, x, modes: SpectralInfo):
    """Closed form of ``grad W~`` at ``y = x``: ``[I - (a+b) P] grad V(x)``."""
    g = eval_gradient(model, x, modes.metric)
    return g - (params.alpha + params.beta) * Projector(modes)(g)
