"""Discrete sub-Riemannian calculus on the Heisenberg nilmanifold lattice.

Two families of operators live here:

* the flow operators ``X_op``, ``Y_op``, ``grad_b`` (forward differences) and
  ``div_b`` (their exact negative adjoint), so that ``sublaplacian`` is
  symmetric and summation by parts holds to rounding error;
* centered operators (``Xc``, ``Yc``, ``Tc``) used by the identity diagnostics
  (``bochner_residual``, ``commutator_XY``), which need second-order accuracy
  rather than adjointness.

The horizontal norm is ``|grad_b f|^2 = (Xf)^2 + (Yf)^2``, which corresponds to
the unitary complex frame ``Z = (X -/+ iY)/sqrt(2)``.  The sign in ``JX = +-Y`` is
fixed by :func:`calibrate_j_sign` and stored in :data:`J_SIGN`.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .grid import AXES, GridSpec, shift

# Calibrated by ``calibrate_j_sign`` (the Bochner residual only decays for -1);
# tests re-run the calibration and assert this value.
J_SIGN = -1


class HorizontalVector(NamedTuple):
    """Section of the contact plane in the real frame ``wx X + wy Y``."""

    wx: np.ndarray
    wy: np.ndarray

    def dot(self, other: "HorizontalVector") -> np.ndarray:
        return self.wx * other.wx + self.wy * other.wy

    def norm2(self) -> np.ndarray:
        return self.wx * self.wx + self.wy * self.wy

    def scale(self, a) -> "HorizontalVector":
        return HorizontalVector(a * self.wx, a * self.wy)


class DomainError(ValueError):
    """Raised for parameter choices where an operator is undefined."""


def _h(spec: GridSpec, axis: str) -> float:
    return spec.spacing[AXES[axis]]


def d_plus(spec: GridSpec, f: np.ndarray, axis: str) -> np.ndarray:
    return (shift(spec, f, axis, +1) - f) / _h(spec, axis)


def d_minus(spec: GridSpec, f: np.ndarray, axis: str) -> np.ndarray:
    return (f - shift(spec, f, axis, -1)) / _h(spec, axis)


def d_center(spec: GridSpec, f: np.ndarray, axis: str) -> np.ndarray:
    return (shift(spec, f, axis, +1) - shift(spec, f, axis, -1)) / (2.0 * _h(spec, axis))


# -- frame derivatives --------------------------------------------------------


def X_op(spec: GridSpec, f: np.ndarray) -> np.ndarray:
    return d_plus(spec, f, "x")


def Y_op(spec: GridSpec, f: np.ndarray) -> np.ndarray:
    return d_plus(spec, f, "y") + spec.x * d_plus(spec, f, "t")


def T_op(spec: GridSpec, f: np.ndarray, scheme: str = "centered") -> np.ndarray:
    """Derivative along the Reeb field; ``scheme`` is ``"centered"`` or ``"forward"``."""
    if scheme == "centered":
        return d_center(spec, f, "t")
    if scheme == "forward":
        return d_plus(spec, f, "t")
    raise ValueError(f"unknown scheme {scheme!r}")


def Xc(spec: GridSpec, f: np.ndarray) -> np.ndarray:
    return d_center(spec, f, "x")


def Yc(spec: GridSpec, f: np.ndarray) -> np.ndarray:
    return d_center(spec, f, "y") + spec.x * d_center(spec, f, "t")


def Tc(spec: GridSpec, f: np.ndarray) -> np.ndarray:
    return d_center(spec, f, "t")


# -- gradient / divergence ----------------------------------------------------


def grad_b(spec: GridSpec, f: np.ndarray) -> HorizontalVector:
    return HorizontalVector(X_op(spec, f), Y_op(spec, f))


def div_b(spec: GridSpec, W: HorizontalVector) -> np.ndarray:
    """Negative adjoint of :func:`grad_b` under :func:`~subflow.grid.integrate`."""
    wx, wy = W
    return d_minus(spec, wx, "x") + d_minus(spec, wy, "y") + spec.x * d_minus(spec, wy, "t")


def sublaplacian(spec: GridSpec, f: np.ndarray) -> np.ndarray:
    return div_b(spec, grad_b(spec, f))


def grad_b_centered(spec: GridSpec, f: np.ndarray) -> HorizontalVector:
    return HorizontalVector(Xc(spec, f), Yc(spec, f))


def sublaplacian_centered(spec: GridSpec, f: np.ndarray) -> np.ndarray:
    return Xc(spec, Xc(spec, f)) + Yc(spec, Yc(spec, f))


def j_rotate(W: HorizontalVector, j_sign: int = J_SIGN) -> HorizontalVector:
    """Complex structure on the contact plane: ``(wx, wy) -> j_sign * (-wy, wx)``."""
    return HorizontalVector(-j_sign * W.wy, j_sign * W.wx)


# -- p-sublaplacian -----------------------------------------------------------


def gradient_norm2(spec: GridSpec, values: np.ndarray, chart) -> np.ndarray:
    """``g_ij(phi) (X phi^i X phi^j + Y phi^i Y phi^j)`` for raw component arrays.

    Preserves the dtype of ``values`` (the gradient oracle runs in long double).
    """
    m = values.shape[0]
    grads = [grad_b(spec, values[a]) for a in range(m)]
    if chart.is_flat:
        return sum(G.norm2() for G in grads)
    # conformal charts: g_ij = lam delta_ij
    lam = chart.conformal_factor(values)
    return lam * sum(G.norm2() for G in grads)


def map_gradient_norm2(state) -> np.ndarray:
    """``|grad_b phi|_g^2`` at every node."""
    return gradient_norm2(state.spec, state.values, state.chart)


def check_p_delta(p: float, delta: float) -> None:
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p}")
    if delta < 0:
        raise DomainError(f"delta must be nonnegative, got {delta}")


def p_weight(state, p: float, delta: float, norm2: np.ndarray | None = None):
    """Nodal weight ``(|grad_b phi|_g^2 + delta)^((p-2)/2)``; exactly 1.0 when p == 2."""
    check_p_delta(p, delta)
    if p == 2:
        return 1.0
    if norm2 is None:
        norm2 = map_gradient_norm2(state)
    f_delta = norm2 + delta
    if p < 2 and np.any(f_delta <= 0.0):
        raise DomainError("degenerate weight: delta=0 with p<2 and vanishing gradient")
    return f_delta ** ((p - 2.0) / 2.0)


def p_sublaplacian(state, k: int, p: float, delta: float) -> np.ndarray:
    """``div_b(w grad_b phi^k)`` with the nodal weight ``w`` of :func:`p_weight`.

    Each forward-difference arm starts at its node, so the nodal weight is the
    one that pairs with the node-quadrature energy; this makes the operator the
    exact gradient of that energy on flat targets.
    """
    spec = state.spec
    w = p_weight(state, p, delta)
    G = grad_b(spec, state.values[k])
    if p == 2:
        return div_b(spec, G)
    return div_b(spec, G.scale(w))


# -- identity diagnostics -----------------------------------------------------


def commutator_deltab_T(spec: GridSpec, f: np.ndarray, scheme: str = "centered") -> np.ndarray:
    return sublaplacian(spec, T_op(spec, f, scheme)) - T_op(spec, sublaplacian(spec, f), scheme)


def commutator_XY(spec: GridSpec, f: np.ndarray) -> np.ndarray:
    """``X(Yf) - Y(Xf)`` with centered operators.

    The forward ``Y_op`` has an O(h) truncation term that jumps across the x
    seam, so nesting forward ``X`` over it leaves an O(1) error on the seam row.
    Centered differences reduce that jump to O(h^2) and the seam error to O(h).
    """
    return Xc(spec, Yc(spec, f)) - Yc(spec, Xc(spec, f))


def horizontal_hessian(spec: GridSpec, f: np.ndarray) -> tuple[np.ndarray, ...]:
    """Centered iterated frame derivatives ``(XXf, XYf, YXf, YYf)``."""
    xf, yf = Xc(spec, f), Yc(spec, f)
    return Xc(spec, xf), Xc(spec, yf), Yc(spec, xf), Yc(spec, yf)


def hessian_norm2(spec: GridSpec, f: np.ndarray) -> np.ndarray:
    """``|(grad^H)^2 f|^2 = 2(f_11 f_1'1' + f_11' f_1'1)``.

    Through ``Z = (X - iY)/sqrt(2)`` on the flat Tanaka-Webster frame this is
    ``((XX-YY)^2 + (XY+YX)^2 + (XX+YY)^2 + ((XY-YX))^2) / 2``, i.e. the sum of
    squares of the four iterated derivatives.
    """
    xx, xy, yx, yy = horizontal_hessian(spec, f)
    z11 = 0.25 * ((xx - yy) ** 2 + (xy + yx) ** 2)
    z1b1 = 0.25 * ((xx + yy) ** 2 + (xy - yx) ** 2)
    return 2.0 * (z11 + z1b1)


def bochner_terms(spec: GridSpec, f: np.ndarray, j_sign: int = J_SIGN) -> dict[str, np.ndarray]:
    G = grad_b_centered(spec, f)
    lap = sublaplacian_centered(spec, f)
    return {
        "half_lap_grad2": 0.5 * sublaplacian_centered(spec, G.norm2()),
        "hessian2": hessian_norm2(spec, f),
        "grad_dot_grad_lap": G.dot(grad_b_centered(spec, lap)),
        "j_term": 2.0 * j_rotate(G, j_sign).dot(grad_b_centered(spec, Tc(spec, f))),
    }


def bochner_residual(spec: GridSpec, f: np.ndarray, j_sign: int = J_SIGN) -> np.ndarray:
    """Residual of the CR Bochner identity on the torsion-free, Webster-flat model.

    ``1/2 Lap|grad f|^2 - |Hess f|^2 - <grad f, grad Lap f> - 2<J grad f, grad Tf>``
    """
    t = bochner_terms(spec, f, j_sign)
    return t["half_lap_grad2"] - t["hessian2"] - t["grad_dot_grad_lap"] - t["j_term"]


def observed_orders(errors, ratio: float = 2.0) -> np.ndarray:
    """Convergence orders between successive refinements of factor ``ratio``."""
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(ratio)


def bochner_ladder(sizes=(8, 16, 32), j_sign: int = J_SIGN, field=None) -> list[float]:
    """Sup-norm Bochner residuals of fixed smooth data on a refinement ladder."""
    from .fields import heisenberg_test_field

    field = field or heisenberg_test_field
    errs = []
    for n in sizes:
        spec = GridSpec.cube(n)
        errs.append(float(np.max(np.abs(bochner_residual(spec, field(spec), j_sign)))))
    return errs


def commutator_ladder(sizes=(8, 16, 32), field=None) -> list[float]:
    from .fields import heisenberg_test_field

    field = field or heisenberg_test_field
    errs = []
    for n in sizes:
        spec = GridSpec.cube(n)
        f = field(spec)
        errs.append(float(np.max(np.abs(commutator_XY(spec, f) - Tc(spec, f)))))
    return errs


def calibrate_j_sign(sizes=(8, 16, 32), min_order: float = 0.8) -> int:
    """Pick the sign of ``J`` whose Bochner residual decays under refinement."""
    passing = []
    for sign in (+1, -1):
        orders = observed_orders(bochner_ladder(sizes, sign))
        if np.all(orders >= min_order):
            passing.append(sign)
    if len(passing) != 1:
        raise RuntimeError(f"j_sign calibration is ambiguous: passing signs {passing}")
    return passing[0]
