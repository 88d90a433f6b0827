"""Chart-based Riemannian targets.

All built-in charts are conformally flat, ``g_ij(y) = exp(2 u(y)) delta_ij``,
which gives closed forms for everything the flow needs:

    d_k g_ij    = 2 exp(2u) sigma_k delta_ij
    Gamma^k_ij  = sigma_i delta_jk + sigma_j delta_ik - sigma_k delta_ij

with ``sigma = grad u``.  Points are passed with the coordinate index first,
``y.shape == (m, ...)``, so whole map states evaluate in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ChartGuardError(ValueError):
    """A map left the region where its chart is trusted."""


@dataclass(frozen=True)
class TargetChart:
    name: str
    m: int
    curvature_sign: str  # "flat" | "positive" | "nonpositive"
    guard_radius: float
    # exp(2u) and grad u as functions of |y|^2, vectorized over trailing axes
    _factor: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _sigma_scale: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    params: tuple = ()

    @property
    def is_flat(self) -> bool:
        return self.curvature_sign == "flat"

    def _y(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.m:
            raise ValueError(f"expected {self.m} coordinates, got shape {y.shape}")
        return y

    def conformal_factor(self, y) -> np.ndarray:
        """``exp(2u(y))``, so that ``g = conformal_factor * identity``."""
        y = self._y(y)
        return self._factor(np.sum(y * y, axis=0))

    def sigma(self, y) -> np.ndarray:
        """Gradient of the log conformal scale ``u``; shape ``(m, ...)``."""
        y = self._y(y)
        return self._sigma_scale(np.sum(y * y, axis=0)) * y

    def metric(self, y) -> np.ndarray:
        y = self._y(y)
        lam = self.conformal_factor(y)
        eye = np.eye(self.m).reshape((self.m, self.m) + (1,) * (y.ndim - 1))
        return eye * lam

    def metric_inverse(self, y) -> np.ndarray:
        y = self._y(y)
        lam = self.conformal_factor(y)
        eye = np.eye(self.m).reshape((self.m, self.m) + (1,) * (y.ndim - 1))
        return eye / lam

    def metric_derivative(self, y) -> np.ndarray:
        """``dg[k, i, j] = d g_ij / d y_k``."""
        y = self._y(y)
        lam = self.conformal_factor(y)
        s = self.sigma(y)
        eye = np.eye(self.m).reshape((1, self.m, self.m) + (1,) * (y.ndim - 1))
        return 2.0 * lam * s[:, None, None] * eye

    def christoffel(self, y) -> np.ndarray:
        """``gamma[k, i, j] = Gamma^k_ij``, symmetric in ``(i, j)``."""
        y = self._y(y)
        s = self.sigma(y)
        eye = np.eye(self.m)
        return (
            np.einsum("i...,jk->kij...", s, eye)
            + np.einsum("j...,ik->kij...", s, eye)
            - np.einsum("k...,ij->kij...", s, eye)
        )

    def radius(self, y) -> np.ndarray:
        y = self._y(y)
        return np.sqrt(np.sum(y * y, axis=0))

    def guard(self, y) -> bool:
        """True when every point lies inside the trusted chart region."""
        if np.isinf(self.guard_radius):
            return bool(np.all(np.isfinite(y)))
        r = self.radius(y)
        return bool(np.all(np.isfinite(r)) and np.all(r <= self.guard_radius))

    def check(self, y) -> None:
        if not self.guard(y):
            raise ChartGuardError(f"map left the {self.name} chart (guard radius {self.guard_radius})")


def flat_torus(m: int) -> TargetChart:
    if m < 1:
        raise ValueError("m must be >= 1")
    return TargetChart(
        "flat", m, "flat", np.inf,
        lambda r2: np.ones_like(r2),
        lambda r2: np.zeros_like(r2),
    )


def sphere_stereographic(m: int, guard_radius: float = 4.0) -> TargetChart:
    """Round unit sphere in stereographic coordinates, ``g = 4/(1+|y|^2)^2``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return TargetChart(
        "sphere", m, "positive", float(guard_radius),
        lambda r2: 4.0 / (1.0 + r2) ** 2,
        lambda r2: -2.0 / (1.0 + r2),
        params=(("guard_radius", float(guard_radius)),),
    )


def hyperbolic_ball(m: int, margin: float = 0.05) -> TargetChart:
    """Poincare ball, ``g = 4/(1-|y|^2)^2``, trusted for ``|y| <= 1 - margin``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0 < margin < 1:
        raise ValueError("margin must lie in (0, 1)")
    return TargetChart(
        "hyperbolic", m, "nonpositive", 1.0 - margin,
        lambda r2: 4.0 / (1.0 - r2) ** 2,
        lambda r2: 2.0 / (1.0 - r2),
        params=(("margin", float(margin)),),
    )


def make_chart(name: str, m: int, guard_radius: float = 4.0, margin: float = 0.05) -> TargetChart:
    if name == "flat":
        return flat_torus(m)
    if name == "sphere":
        return sphere_stereographic(m, guard_radius)
    if name == "hyperbolic":
        return hyperbolic_ball(m, margin)
    raise ValueError(f"unknown target {name!r}")


# -- consistency checks -------------------------------------------------------


def levi_civita_fd(chart: TargetChart, y, step: float = 1e-5) -> np.ndarray:
    """Christoffel symbols from central differences of ``chart.metric`` at one point."""
    y = np.asarray(y, dtype=float)
    m = chart.m
    dg = np.empty((m, m, m))
    for k in range(m):
        e = np.zeros(m)
        e[k] = step
        dg[k] = (chart.metric(y + e) - chart.metric(y - e)) / (2.0 * step)
    ginv = np.linalg.inv(chart.metric(y))
    # Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)
    lower = np.empty((m, m, m))  # [l, i, j]
    for l in range(m):
        for i in range(m):
            for j in range(m):
                lower[l, i, j] = dg[i, j, l] + dg[j, i, l] - dg[l, i, j]
    return 0.5 * np.einsum("kl,lij->kij", ginv, lower)


def sample_in_guard(chart: TargetChart, count: int, rng: np.random.Generator,
                    max_radius: float | None = None) -> np.ndarray:
    """Points uniform in the ball of radius ``min(guard, max_radius)``; shape ``(count, m)``."""
    r_max = chart.guard_radius if np.isfinite(chart.guard_radius) else 2.0
    if max_radius is not None:
        r_max = min(r_max, max_radius)
    d = rng.standard_normal((count, chart.m))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = r_max * rng.uniform(0.0, 1.0, count) ** (1.0 / chart.m)
    return d * r[:, None]


def christoffel_fd_check(chart: TargetChart, sample_count: int = 100, seed: int = 0,
                         step: float = 1e-5) -> float:
    """Max relative error of ``chart.christoffel`` against finite-differenced metric.

    Relative to the largest symbol at each point, with an absolute floor for
    points where all symbols vanish.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for y in sample_in_guard(chart, sample_count, rng):
        exact = chart.christoffel(y)
        approx = levi_civita_fd(chart, y, step)
        scale = max(float(np.max(np.abs(exact))), 1.0)
        worst = max(worst, float(np.max(np.abs(exact - approx))) / scale)
    return worst


def gaussian_curvature_fd(chart: TargetChart, y, step: float = 1e-4) -> float:
    """Curvature ``-exp(-2u) Lap u`` of a two-dimensional conformal chart, by differences."""
    if chart.m != 2:
        raise ValueError("gaussian curvature needs m == 2")
    y = np.asarray(y, dtype=float)

    def u(p):
        return 0.5 * np.log(chart.conformal_factor(p))

    lap = 0.0
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        lap += (u(y + e) - 2 * u(y) + u(y - e)) / step**2
    return float(-lap / chart.conformal_factor(y))
