import numpy as np
import pytest

from subflow.calculus import DomainError, p_sublaplacian, sublaplacian
from subflow.energy import (
    Ep,
    Ep_delta,
    christoffel_reaction,
    densities,
    energy_gradient_fd,
    energy_report,
    reaction_term,
    tension_p,
)
from subflow.grid import GridSpec, MapState
from subflow.initial import constant_map, random_map
from subflow.target import ChartGuardError, flat_torus, hyperbolic_ball, make_chart, sphere_stereographic

SPEC8 = GridSpec.cube(8)


def sine_state(n, amplitude=1.0):
    s = GridSpec.cube(n)
    x, _, _ = s.coordinates()
    return MapState(s, amplitude * np.sin(2 * np.pi * x)[None], flat_torus(1))


def test_constant_map_densities():
    st = constant_map(SPEC8, sphere_stereographic(2), [0.2, -0.1])
    d = densities(st, 0.1, 1.0)
    assert np.all(d.e == 0) and np.all(d.e0 == 0)
    assert np.all(d.f_delta == 0.1) and np.all(d.g_total == 0.1)
    assert Ep(st, 3.0) == 0
    assert Ep_delta(st, 3.0, 0.1) == pytest.approx(0.1**1.5 / 3)
    assert not np.any(tension_p(st, 3.0, 0.1))


def test_density_invariants(rng):
    st = random_map(SPEC8, hyperbolic_ball(2), 2.0, 0.05, seed=1, mollify_steps=50)
    d = densities(st, 0.01, 0.5)
    assert np.all(d.f_delta >= 0.01) and np.all(d.e0 >= 0) and np.all(d.g_total >= d.f_delta)
    rep = energy_report(st, 3.0, 0.01, 0.5)
    assert rep.Ep <= rep.Ep_delta
    assert all(np.isfinite(v) for v in rep.as_dict().values())


def test_energy_density_of_sine():
    errs = []
    for n in (16, 32):
        st = sine_state(n)
        x, _, _ = st.spec.coordinates()
        e = densities(st, 0.0).e
        errs.append(np.max(np.abs(e - 0.5 * (2 * np.pi * np.cos(2 * np.pi * x)) ** 2)))
    assert errs[1] < 0.6 * errs[0]  # first order


def test_p2_energy_of_eigenmode():
    st = sine_state(32, 0.1)
    assert Ep(st, 2.0) == pytest.approx(np.pi**2 * 0.01, rel=5e-3)


def test_shift_invariance_on_flat(rng):
    # dyadic data and shifts keep every sum and difference exact in floating point
    vals = np.round(rng.uniform(-1, 1, (2, *SPEC8.shape)) * 2**20) / 2**20
    st = MapState(SPEC8, vals, flat_torus(2))
    moved = st.with_values(st.values + np.array([3.0, -1.25])[:, None, None, None])
    a, b = densities(st, 0.01), densities(moved, 0.01)
    for name in ("e", "f_delta", "e0", "g_total"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert Ep(st, 3.0) == Ep(moved, 3.0)


def test_delta_monotone():
    st = sine_state(8, 0.3)
    assert Ep_delta(st, 3.0, 0.01) < Ep_delta(st, 3.0, 0.1)
    assert Ep_delta(st, 1.5, 0.01) < Ep_delta(st, 1.5, 0.1)


def test_Ep_zero_iff_horizontally_constant(rng):
    s = SPEC8
    st = constant_map(s, flat_torus(1))
    assert Ep(st, 2.0) == 0 and energy_report(st, 2.0, 0.0).sup_grad == 0
    st2 = st.with_values(rng.standard_normal((1, *s.shape)))
    assert Ep(st2, 2.0) > 0 and energy_report(st2, 2.0, 0.0).sup_grad > 0


def test_guard_is_enforced():
    st = MapState(SPEC8, np.full((2, *SPEC8.shape), 0.8), hyperbolic_ball(2))
    assert not st.in_chart()
    with pytest.raises(ChartGuardError):
        Ep(st, 2.0)
    with pytest.raises(ChartGuardError):
        densities(st, 0.1)


def test_flat_p2_tension_is_sublaplacian(rng):
    st = MapState(SPEC8, rng.standard_normal((2, *SPEC8.shape)), flat_torus(2))
    tau = tension_p(st, 2.0, 0.3)
    for k in range(2):
        assert np.array_equal(tau[k], sublaplacian(SPEC8, st.values[k]))
    assert np.array_equal(tau, tension_p(st, 2.0, 0.01))


def test_flat_reaction_vanishes(rng):
    st = MapState(SPEC8, rng.standard_normal((2, *SPEC8.shape)), flat_torus(2))
    assert not np.any(reaction_term(st, 3.0, 0.1))
    assert not np.any(christoffel_reaction(st, 3.0, 0.1))


def test_reaction_term_first_order_consistent():
    # discrete reaction term approaches the literal Christoffel form as h -> 0
    errs = []
    for n in (8, 16, 32):
        s = GridSpec.cube(n)
        x, y, _ = s.coordinates()
        vals = np.stack([0.2 * np.sin(2 * np.pi * x), 0.2 * np.cos(2 * np.pi * (x + y))])
        st = MapState(s, vals, sphere_stereographic(2))
        errs.append(np.max(np.abs(reaction_term(st, 2.0, 0.0) - christoffel_reaction(st, 2.0, 0.0))))
    assert errs[2] < errs[1] < errs[0]


def test_tension_domain():
    st = constant_map(SPEC8, flat_torus(1))
    with pytest.raises(DomainError):
        tension_p(st, 1.5, 0.0)
    with pytest.raises(DomainError):
        tension_p(st, 0.9, 0.1)
    assert not np.any(tension_p(st, 4.0, 0.0))


def test_fd_oracle_constant_map():
    st = constant_map(SPEC8, sphere_stereographic(2), [0.1, 0.2])
    # zero up to rounding in the perturbed density sums
    assert np.max(np.abs(energy_gradient_fd(st, 3.0, 0.1, [((1, 2, 3), 0), ((0, 0, 0), 1)]))) <= 1e-12
    with pytest.raises(ValueError):
        energy_gradient_fd(st, 3.0, 0.1, [])


def _oracle_error(chart_name, p, delta, n=8, samples=50, seed=4):
    spec = GridSpec.cube(n)
    state = random_map(spec, make_chart(chart_name, 2), p, 1e-2, seed=seed)
    rng = np.random.default_rng(seed)
    idx = [(tuple(rng.integers(0, spec.shape)), int(rng.integers(0, 2))) for _ in range(samples)]
    tau = tension_p(state, p, delta)
    exact = np.array([tau[(c, *node)] for node, c in idx])
    approx = energy_gradient_fd(state, p, delta, idx)
    return np.max(np.abs(exact - approx) / np.maximum(np.abs(approx), 1e-10))


@pytest.mark.parametrize("delta", [1e-2, 1e-1])
@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
@pytest.mark.parametrize("chart_name", ["flat", "sphere", "hyperbolic"])
def test_gradient_oracle(chart_name, p, delta):
    assert _oracle_error(chart_name, p, delta) <= 1e-5


def test_gradient_oracle_p4_delta0():
    spec = GridSpec.cube(8)
    x, y, t = spec.coordinates()
    from subflow.fields import theta_mode
    st = MapState(spec, 0.1 * theta_mode(spec, n=1)[None], flat_torus(1))
    idx = [((i, j, k), 0) for i, j, k in [(1, 2, 3), (7, 0, 5), (4, 4, 4)]]
    exact = p_sublaplacian(st, 0, 4.0, 0.0)
    approx = energy_gradient_fd(st, 4.0, 0.0, idx)
    for (node, _), a in zip(idx, approx):
        assert exact[node] == pytest.approx(a, rel=1e-5)


def test_two_point_stencil_agrees_roughly():
    spec = GridSpec.cube(8)
    st = random_map(spec, sphere_stereographic(2), 3.0, 1e-2, seed=5)
    idx = [((1, 2, 3), 0), ((5, 6, 7), 1)]
    a = energy_gradient_fd(st, 3.0, 0.01, idx, order=2)
    b = energy_gradient_fd(st, 3.0, 0.01, idx, order=4)
    np.testing.assert_allclose(a, b, rtol=1e-4)
