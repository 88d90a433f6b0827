"""p-energy, its regularization, density diagnostics and the p-tension field.

The discrete energy is node quadrature of the forward-difference density,

    E_{p,delta}(phi) = (1/p) sum_n (|grad_b phi|_g^2(n) + delta)^(p/2) * cell_volume,

and :func:`tension_p` is its exact negative gradient raised by the target
metric:  ``tau^l(n) = -g^{lk}(phi(n)) dE/dphi^k(n) / cell_volume``.  Written out,

    tau^l = g^{lk} div_b(w g_kj grad_b phi^j) - 1/2 w g^{lk} d_k g_ij <grad_b phi^i, grad_b phi^j>

with ``w = (|grad_b phi|_g^2 + delta)^((p-2)/2)``.  In the continuum limit this is
``div_b(w grad_b phi^l) + w Gamma^l_ij <grad_b phi^i, grad_b phi^j>``, the
real-frame form of the regularized flow's right-hand side;
:func:`christoffel_reaction` evaluates that literal form for comparison.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .calculus import (
    HorizontalVector,
    T_op,
    check_p_delta,
    div_b,
    grad_b,
    gradient_norm2,
    map_gradient_norm2,
    p_sublaplacian,
    p_weight,
)
from .grid import MapState, integrate


@dataclass
class DensityBundle:
    e: np.ndarray  # 1/2 |grad_b phi|_g^2
    f_delta: np.ndarray  # |grad_b phi|_g^2 + delta
    e0: np.ndarray  # g_ij T phi^i T phi^j
    g_total: np.ndarray  # f_delta + epsilon * e0
    epsilon: float


@dataclass
class EnergyReport:
    Ep: float
    Ep_delta: float
    sup_grad: float
    sup_T: float
    Ln1_g: float

    def as_dict(self) -> dict:
        return asdict(self)


def vertical_norm2(state: MapState) -> np.ndarray:
    """``g_ij(phi) T phi^i T phi^j`` with the centered ``T``."""
    spec, phi = state.spec, state.values
    tphi = [T_op(spec, phi[a]) for a in range(state.m)]
    if state.chart.is_flat:
        return sum(t * t for t in tphi)
    lam = state.chart.conformal_factor(phi)
    return lam * sum(t * t for t in tphi)


def densities(state: MapState, delta: float, epsilon: float = 1.0) -> DensityBundle:
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    state.check_guard()
    n2 = map_gradient_norm2(state)
    e0 = vertical_norm2(state)
    f_delta = n2 + delta
    return DensityBundle(0.5 * n2, f_delta, e0, f_delta + epsilon * e0, epsilon)


def energy_density(norm2: np.ndarray, p: float, delta: float) -> np.ndarray:
    """Integrand ``(1/p) (norm2 + delta)^(p/2)`` of the regularized p-energy."""
    base = norm2 + delta
    if p == 2:
        return 0.5 * base
    return base ** (0.5 * p) / p


def Ep(state: MapState, p: float) -> float:
    check_p_delta(p, 0.0)
    state.check_guard()
    return integrate(state.spec, energy_density(map_gradient_norm2(state), p, 0.0))


def Ep_delta(state: MapState, p: float, delta: float) -> float:
    check_p_delta(p, delta)
    state.check_guard()
    return integrate(state.spec, energy_density(map_gradient_norm2(state), p, delta))


def energy_report(state: MapState, p: float, delta: float, epsilon: float = 1.0) -> EnergyReport:
    spec = state.spec
    d = densities(state, delta, epsilon)
    n2 = 2.0 * d.e
    return EnergyReport(
        Ep=integrate(spec, energy_density(n2, p, 0.0)),
        Ep_delta=integrate(spec, energy_density(n2, p, delta)),
        sup_grad=float(np.sqrt(np.max(n2))),
        sup_T=float(np.sqrt(np.max(d.e0))),
        Ln1_g=float(np.sqrt(integrate(spec, d.g_total**2))),
    )


def tension_p(state: MapState, p: float, delta: float) -> np.ndarray:
    """p-tension field, shape ``(m, *grid.shape)``; the flow velocity."""
    spec, phi, chart = state.spec, state.values, state.chart
    check_p_delta(p, delta)
    if chart.is_flat:
        return np.stack([p_sublaplacian(state, k, p, delta) for k in range(state.m)])

    m = state.m
    grads = [grad_b(spec, phi[a]) for a in range(m)]
    g = chart.metric(phi)
    ginv = chart.metric_inverse(phi)
    dg = chart.metric_derivative(phi)
    pair = [[grads[i].dot(grads[j]) for j in range(m)] for i in range(m)]
    norm2 = sum(g[i, j] * pair[i][j] for i in range(m) for j in range(m))
    w = p_weight(state, p, delta, norm2)

    covector = []
    for k in range(m):
        vx = sum(g[k, j] * grads[j].wx for j in range(m))
        vy = sum(g[k, j] * grads[j].wy for j in range(m))
        flux = div_b(spec, HorizontalVector(w * vx, w * vy))
        source = sum(dg[k, i, j] * pair[i][j] for i in range(m) for j in range(m))
        covector.append(flux - 0.5 * w * source)
    return np.stack([sum(ginv[l, k] * covector[k] for k in range(m)) for l in range(m)])


def reaction_term(state: MapState, p: float, delta: float) -> np.ndarray:
    """``tension_p - p_sublaplacian``: the discrete Christoffel (target-curvature) term."""
    tau = tension_p(state, p, delta)
    return tau - np.stack([p_sublaplacian(state, k, p, delta) for k in range(state.m)])


def christoffel_reaction(state: MapState, p: float, delta: float) -> np.ndarray:
    """Nodal ``w Gamma^k_ij (X phi^i X phi^j + Y phi^i Y phi^j)``.

    Agrees with :func:`reaction_term` to first order in the grid spacing.
    """
    spec, phi, m = state.spec, state.values, state.m
    grads = [grad_b(spec, phi[a]) for a in range(m)]
    gamma = state.chart.christoffel(phi)
    w = p_weight(state, p, delta)
    out = np.zeros((m, *spec.shape))
    for k in range(m):
        for i in range(m):
            for j in range(m):
                out[k] += gamma[k, i, j] * grads[i].dot(grads[j])
    return w * out


_FD_STENCILS = {
    # offsets (in units of step) and weights of first-derivative central differences
    2: ((1, -1), (0.5, -0.5)),
    4: ((2, 1, -1, -2), (-1 / 12, 8 / 12, -8 / 12, 1 / 12)),
}


def energy_gradient_fd(state: MapState, p: float, delta: float, sample, step: float = 1e-6,
                       order: int = 4) -> np.ndarray:
    """Flow velocity from central differences of ``Ep_delta``.

    For each ``(node, component)`` in ``sample`` the energy is perturbed by
    multiples of ``step`` in every component at that node; the resulting
    covector is raised with ``-g^{kl}(phi(node)) / cell_volume``.  ``order=2`` is
    the plain ``+-step`` difference; the default ``order=4`` adds ``+-2 step`` so
    that truncation (which grows like ``step^2 / h^3``) stays far below the
    comparison tolerance.  Energy differences are sums of density differences
    (unperturbed nodes cancel exactly) in long double.
    """
    spec, chart = state.spec, state.chart
    check_p_delta(p, delta)
    sample = list(sample)
    if not sample:
        raise ValueError("sample must be nonempty")
    offsets, weights = _FD_STENCILS[order]
    base = state.values.astype(np.longdouble)
    ld_step = np.longdouble(step)
    reference = energy_density(gradient_norm2(spec, base, chart), p, delta)
    cache: dict[tuple, np.ndarray] = {}
    out = np.empty(len(sample))
    for s, (node, comp) in enumerate(sample):
        node = tuple(int(v) for v in node)
        if node not in cache:
            dE = np.empty(state.m)
            for k in range(state.m):
                acc = np.longdouble(0)
                for off, wgt in zip(offsets, weights):
                    moved = base.copy()
                    moved[(k, *node)] += off * ld_step
                    dens = energy_density(gradient_norm2(spec, moved, chart), p, delta)
                    acc += np.longdouble(wgt) * np.sum(dens - reference)
                # plain sum: dE/dphi divided by cell_volume
                dE[k] = float(acc / ld_step)
            y = state.values[(slice(None), *node)]
            cache[node] = -np.linalg.inv(chart.metric(y)) @ dE
        out[s] = cache[node][comp]
    return out
