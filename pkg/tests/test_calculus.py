import numpy as np
import pytest
from hypothesis import given, strategies as st

from subflow import calculus as C
from subflow.fields import heisenberg_test_field, theta_mode
from subflow.grid import GridSpec, MapState, integrate
from subflow.target import flat_torus

grids = st.builds(
    lambda nx, ny, mult: GridSpec(nx, ny, ny * mult),
    st.integers(4, 8), st.integers(4, 6), st.integers(1, 2),
)
seeds = st.integers(0, 2**32 - 1)


def test_constants_annihilated():
    s = GridSpec(4, 4, 8)
    c = np.full(s.shape, 3.7)
    for op in (C.X_op, C.Y_op, C.T_op, C.Xc, C.Yc, C.Tc, C.sublaplacian, C.commutator_XY):
        assert np.all(op(s, c) == 0)
    for axis in "xyt":
        assert np.all(C.d_plus(s, c, axis) == 0)
        assert np.all(C.d_minus(s, c, axis) == 0)


def test_sawtooth_in_x():
    s = GridSpec.cube(8)
    x, _, _ = s.coordinates()
    d = C.d_plus(s, x, "x")
    np.testing.assert_allclose(d[:-1], 1.0, rtol=1e-12)
    # the seam row jumps from 1 - hx back to 0
    np.testing.assert_allclose(d[-1], -(s.nx - 1), rtol=1e-12)


def test_t_second_difference(rng):
    s = GridSpec(4, 4, 8)
    f = rng.standard_normal(s.shape)
    three_point = (np.roll(f, -1, 2) - 2 * f + np.roll(f, 1, 2)) / s.ht**2
    np.testing.assert_allclose(C.d_minus(s, C.d_plus(s, f, "t"), "t"), three_point, atol=1e-10)


def test_Y_on_x_only_and_on_y():
    s = GridSpec(8, 4, 8)
    x, y, _ = s.coordinates()
    assert np.all(C.Y_op(s, np.sin(2 * np.pi * x)) == 0)
    np.testing.assert_allclose(C.Y_op(s, y)[:, :-1, :], 1.0, rtol=1e-12)


def test_grad_of_sine():
    errs = []
    for n in (16, 32):
        s = GridSpec.cube(n)
        x, _, _ = s.coordinates()
        G = C.grad_b(s, np.sin(2 * np.pi * x))
        assert np.all(G.wy == 0)
        errs.append(np.max(np.abs(G.wx - 2 * np.pi * np.cos(2 * np.pi * x))))
    assert 1.8 < errs[0] / errs[1] < 2.2  # first order


def test_sublaplacian_of_sine_second_order():
    errs = []
    for n in (16, 32):
        s = GridSpec.cube(n)
        x, _, _ = s.coordinates()
        f = np.sin(2 * np.pi * x)
        errs.append(np.max(np.abs(C.sublaplacian(s, f) + 4 * np.pi**2 * f)))
    assert 3.6 < errs[0] / errs[1] < 4.4


def test_constant_vector_divergence_free():
    s = GridSpec(4, 4, 8)
    assert np.all(C.div_b(s, C.HorizontalVector(s.ones(), s.zeros())) == 0)


@given(grids, seeds)
def test_summation_by_parts(spec, seed):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(spec.shape)
    W = C.HorizontalVector(*rng.standard_normal((2, *spec.shape)))
    lhs = integrate(spec, f * C.div_b(spec, W))
    rhs = integrate(spec, C.grad_b(spec, f).dot(W))
    scale = np.max(np.abs(f)) * max(np.max(np.abs(W.wx)), np.max(np.abs(W.wy)))
    assert abs(lhs + rhs) <= 1e-12 * scale


@given(grids, seeds)
def test_sublaplacian_symmetric_and_nonpositive(spec, seed):
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, *spec.shape))
    a = integrate(spec, f * C.sublaplacian(spec, g))
    b = integrate(spec, g * C.sublaplacian(spec, f))
    scale = np.max(np.abs(f)) * np.max(np.abs(g)) * 4 / spec.hx**2
    assert abs(a - b) <= 1e-12 * scale
    assert integrate(spec, f * C.sublaplacian(spec, f)) < 0


def test_dirichlet_form_vanishes_only_on_constants():
    s = GridSpec(4, 4, 8)
    c = np.full(s.shape, 2.0)
    assert integrate(s, c * C.sublaplacian(s, c)) == 0
    f = c.copy()
    f[1, 1, 1] += 1e-3
    assert integrate(s, f * C.sublaplacian(s, f)) < 0


def test_linearity(rng):
    s = GridSpec(4, 4, 8)
    f, g = rng.standard_normal((2, *s.shape))
    lhs = C.grad_b(s, 2 * f - 0.5 * g)
    Gf, Gg = C.grad_b(s, f), C.grad_b(s, g)
    np.testing.assert_allclose(lhs.wx, 2 * Gf.wx - 0.5 * Gg.wx, atol=1e-11)
    np.testing.assert_allclose(lhs.wy, 2 * Gf.wy - 0.5 * Gg.wy, atol=1e-11)


def test_p2_short_circuit_is_bitwise(rng):
    s = GridSpec(4, 4, 8)
    state = MapState(s, rng.standard_normal((2, *s.shape)), flat_torus(2))
    plain = C.sublaplacian(s, state.values[1])
    for delta in (0.0, 0.3):
        assert np.array_equal(C.p_sublaplacian(state, 1, 2.0, delta), plain)


def test_p_sublaplacian_domain():
    s = GridSpec(4, 4, 8)
    const = MapState(s, np.ones((1, *s.shape)), flat_torus(1))
    assert np.all(C.p_sublaplacian(const, 0, 3.0, 0.0) == 0)
    assert np.all(C.p_sublaplacian(const, 0, 1.5, 0.1) == 0)
    with pytest.raises(C.DomainError):
        C.p_sublaplacian(const, 0, 1.5, 0.0)
    with pytest.raises(C.DomainError):
        C.p_sublaplacian(const, 0, 1.0, 0.1)
    with pytest.raises(C.DomainError):
        C.p_sublaplacian(const, 0, 3.0, -1.0)


def test_j_rotation(rng):
    s = GridSpec(4, 4, 8)
    W = C.HorizontalVector(*rng.standard_normal((2, *s.shape)))
    JJ = C.j_rotate(C.j_rotate(W))
    assert np.array_equal(JJ.wx, -W.wx) and np.array_equal(JJ.wy, -W.wy)
    assert np.all(C.j_rotate(W).dot(W) == 0)
    Z = C.j_rotate(C.HorizontalVector(s.zeros(), s.zeros()))
    assert not np.any(Z.wx) and not np.any(Z.wy)


@pytest.mark.parametrize("scheme", ["centered", "forward"])
def test_deltab_commutes_with_T(rng, scheme):
    s = GridSpec(8, 4, 16)
    for _ in range(10):
        f = rng.standard_normal(s.shape)
        a = C.sublaplacian(s, C.T_op(s, f, scheme))
        b = C.T_op(s, C.sublaplacian(s, f), scheme)
        scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
        assert np.max(np.abs(C.commutator_deltab_T(s, f, scheme))) <= 1e-12 * scale


def test_T_op_rejects_unknown_scheme():
    with pytest.raises(ValueError):
        C.T_op(GridSpec.cube(4), np.zeros((4, 4, 4)), "backward")


def test_test_field_is_lattice_invariant():
    # evaluating the lattice sum at (x+1, y, t+y) must reproduce the value at (x, y, t)
    s = GridSpec.cube(8)
    f = theta_mode(s, n=2, terms=8)
    x, y, t = 0.3, 0.6, 0.2
    def val(x, y, t):
        acc = sum(np.exp(-0.5 * ((x + a - 0.5) / 0.3) ** 2) * np.exp(4j * np.pi * (t + a * y)) for a in range(-12, 13))
        return acc.real
    assert val(x + 1, y, t + y) == pytest.approx(val(x, y, t), abs=1e-12)
    assert f.shape == s.shape


def test_xy_commutator_ladder():
    orders = C.observed_orders(C.commutator_ladder((8, 16, 32)))
    assert np.all(orders >= 0.8)


def test_xy_commutator_t_independent():
    def field(spec):
        x, y, _ = spec.coordinates()
        return np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    # Xc and Yc commute exactly when T f = 0: x-shifts never reach the t-twist
    errs = C.commutator_ladder((8, 16, 32), field=field)
    assert max(errs) <= 1e-12 * 32**2


def test_bochner_constant_and_ladder():
    s = GridSpec.cube(8)
    assert np.all(C.bochner_residual(s, np.full(s.shape, 1.5)) == 0)
    orders = C.observed_orders(C.bochner_ladder((8, 16, 32)))
    assert np.all(orders >= 0.8)


def test_bochner_t_independent_has_no_j_term():
    s = GridSpec.cube(16)
    x, y, _ = s.coordinates()
    f = np.sin(2 * np.pi * x) + 0.3 * np.cos(2 * np.pi * (x + 2 * y))
    assert np.all(C.bochner_terms(s, f)["j_term"] == 0)


def test_hessian_norm_is_sum_of_squares():
    s = GridSpec.cube(8)
    f = heisenberg_test_field(s)
    xx, xy, yx, yy = C.horizontal_hessian(s, f)
    np.testing.assert_allclose(C.hessian_norm2(s, f), xx**2 + xy**2 + yx**2 + yy**2, rtol=1e-12)


def test_j_sign_calibration():
    assert C.calibrate_j_sign() == C.J_SIGN
    wrong = C.observed_orders(C.bochner_ladder((8, 16, 32), j_sign=-C.J_SIGN))
    assert np.any(wrong < 0.8)
