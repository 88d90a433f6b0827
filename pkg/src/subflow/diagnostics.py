"""Norms, residuals and the canned experiment suite.

Each experiment returns a :class:`Verdict`; :func:`theorem_experiments` runs the
acceptance set in order.  The experiments are deliberately small (16^3, one
32^3 run) so the whole suite finishes in a few minutes on one core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial._qhull import QhullError

from . import calculus as C
from .energy import energy_gradient_fd, tension_p
from .flow import FlowParams, delta_continuation, g_norm2, run, suggest_dt
from .grid import GridSpec, MapState, integrate
from .initial import eigenmode_map, random_map
from .target import christoffel_fd_check, flat_torus, hyperbolic_ball, make_chart, sphere_stereographic


def lq_norm(spec: GridSpec, f: np.ndarray, q: float = 2.0) -> float:
    if not q >= 1:
        raise ValueError("q must be >= 1")
    return integrate(spec, np.abs(f) ** q) ** (1.0 / q)


def linf_norm(f: np.ndarray) -> float:
    return float(np.max(np.abs(f)))


def harmonic_residual(state: MapState, p: float, delta: float) -> float:
    """g-weighted L2 norm of the p-tension; zero exactly at fixed points of the flow."""
    state.check_guard()
    return math.sqrt(g_norm2(state, tension_p(state, p, delta)))


def image_diameter(state_or_values) -> float:
    """Largest Euclidean chart distance between any two node values."""
    values = state_or_values.values if isinstance(state_or_values, MapState) else np.asarray(state_or_values)
    pts = values.reshape(values.shape[0], -1).T
    if pts.shape[1] == 1:
        return float(np.ptp(pts))
    if np.all(pts == pts[0]):
        return 0.0
    # the diameter is attained at hull vertices; joggling handles flat point sets
    if pts.shape[1] <= 3 and len(pts) > pts.shape[1] + 1:
        try:
            pts = pts[ConvexHull(pts, qhull_options="QJ").vertices]
        except QhullError:
            pass
    best = 0.0
    for start in range(0, len(pts), 2048):
        block = pts[start:start + 2048]
        d = np.sqrt(np.max(np.sum((block[:, None, :] - pts[None, :, :]) ** 2, axis=-1)))
        best = max(best, float(d))
    return best if len(pts) > 1 else 0.0


@dataclass
class Verdict:
    name: str
    passed: bool
    measured: list[tuple[str, float]] = field(default_factory=list)
    thresholds: list[tuple[str, float]] = field(default_factory=list)
    reason: str = ""

    def __post_init__(self):
        for label, v in self.measured:
            if not np.isfinite(v):
                raise ValueError(f"measured value {label!r} is not finite")

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        meas = ", ".join(f"{k}={v:.4g}" for k, v in self.measured)
        text = f"[{status}] {self.name}: {meas}"
        return f"{text} ({self.reason})" if self.reason else text

    def rows(self) -> list[dict]:
        def row(kind, label, value):
            return {"experiment": self.name, "passed": int(self.passed), "kind": kind, "label": label,
                    "value": repr(float(value)), "reason": self.reason}

        return [row("measured", k, v) for k, v in self.measured] + [row("threshold", k, v) for k, v in self.thresholds]


def _finite(x: float, fallback: float = -1.0) -> float:
    return float(x) if np.isfinite(x) else fallback


# -- individual experiments ---------------------------------------------------


@dataclass
class ExperimentSettings:
    seed: int = 7
    size: int = 16
    decay_size: int = 32
    ladder: tuple[int, ...] = (8, 16, 32)
    j_sign: int = C.J_SIGN


def exp_summation_by_parts(settings: ExperimentSettings, sizes=(8, 16), pairs: int = 20) -> Verdict:
    rng = np.random.Generator(np.random.PCG64(settings.seed))
    worst = 0.0
    for n in sizes:
        spec = GridSpec.cube(n)
        for _ in range(pairs):
            f = rng.standard_normal(spec.shape)
            W = C.HorizontalVector(rng.standard_normal(spec.shape), rng.standard_normal(spec.shape))
            lhs = integrate(spec, f * C.div_b(spec, W))
            rhs = integrate(spec, C.grad_b(spec, f).dot(W))
            scale = linf_norm(f) * max(linf_norm(W.wx), linf_norm(W.wy))
            worst = max(worst, abs(lhs + rhs) / scale)
    return Verdict("summation_by_parts", worst <= 1e-12, [("max_rel_defect", worst)], [("tol", 1e-12)])


def exp_gradient_oracle(settings: ExperimentSettings, samples: int = 50, delta: float = 1e-2,
                        ps=(1.5, 2.0, 3.0, 4.0)) -> Verdict:
    spec = GridSpec.cube(settings.size)
    rng = np.random.Generator(np.random.PCG64(settings.seed + 1))
    measured = []
    for name in ("flat", "sphere", "hyperbolic"):
        chart = make_chart(name, 2)
        for p in ps:
            state = random_map(spec, chart, p, 1e-2, seed=settings.seed)
            idx = [(tuple(rng.integers(0, spec.shape)), int(rng.integers(0, 2))) for _ in range(samples)]
            tau = tension_p(state, p, delta)
            exact = np.array([tau[(c, *n)] for n, c in idx])
            approx = energy_gradient_fd(state, p, delta, idx)
            err = np.abs(exact - approx)
            rel = err / np.maximum(np.abs(approx), 1e-10)
            measured.append((f"{name}_p{p:g}", float(np.max(rel))))
    worst = max(v for _, v in measured)
    return Verdict("gradient_oracle", worst <= 1e-5, measured, [("tol", 1e-5), ("abs_floor", 1e-10)])


def exp_sasakian_commutator(settings: ExperimentSettings, trials: int = 10) -> Verdict:
    spec = GridSpec.cube(settings.size)
    rng = np.random.Generator(np.random.PCG64(settings.seed + 2))
    worst = 0.0
    for _ in range(trials):
        f = rng.standard_normal(spec.shape)
        a = C.sublaplacian(spec, C.T_op(spec, f))
        b = C.T_op(spec, C.sublaplacian(spec, f))
        scale = max(linf_norm(a), linf_norm(b))
        worst = max(worst, linf_norm(C.commutator_deltab_T(spec, f)) / scale)
    return Verdict("sasakian_commutator", worst <= 1e-12, [("max_rel", worst)], [("tol", 1e-12)])


def exp_bochner_ladder(settings: ExperimentSettings) -> Verdict:
    b = C.observed_orders(C.bochner_ladder(settings.ladder, j_sign=settings.j_sign))
    c = C.observed_orders(C.commutator_ladder(settings.ladder))
    measured = [(f"bochner_order_{i}", _finite(v)) for i, v in enumerate(b)]
    measured += [(f"xy_order_{i}", _finite(v)) for i, v in enumerate(c)]
    ok = min(b) >= 0.8 and min(c) >= 0.8
    return Verdict("bochner_and_xy_ladders", bool(ok), measured, [("min_order", 0.8)])


def energy_identity_defects(settings: ExperimentSettings, halvings: int = 2, steps: int = 200):
    """Defects ``E(0) - E(T) - dissipation`` for ``dt, dt/2, ...`` at fixed ``T``."""
    spec = GridSpec.cube(settings.size)
    state = random_map(spec, flat_torus(2), 3.0, 1e-2, seed=settings.seed)
    dt = suggest_dt(state, 3.0, 1e-2)
    out = []
    for k in range(halvings + 1):
        h = dt / 2**k
        prm = FlowParams(p=3.0, delta=1e-2, dt0=h, t_max=dt * steps, adaptive=False,
                         stop_tol=1e-14, record_every=10**9)
        _, trace = run(state, prm)
        out.append((h, trace))
    return out


def energies_monotone(energies) -> bool:
    e = np.asarray(energies)
    return bool(np.all(e[1:] <= e[:-1] + 1e-12 * np.abs(e[:-1])))


def exp_energy_identity(settings: ExperimentSettings) -> Verdict:
    runs = energy_identity_defects(settings, halvings=1)
    defects = [tr.energies[0] - tr.energies[-1] - tr.dissipation_integral for _, tr in runs]
    ratio = abs(defects[1]) / abs(defects[0]) if defects[0] else np.inf
    monotone = all(energies_monotone(tr.energies) for _, tr in runs)
    complete = all(tr.termination == "horizon" for _, tr in runs)
    ok = 0.4 <= ratio <= 0.6 and monotone and complete
    reason = "" if complete else "fixed-step run rejected a step"
    return Verdict(
        "energy_identity", bool(ok),
        [("defect_dt", defects[0]), ("defect_dt_half", defects[1]), ("ratio", _finite(ratio)),
         ("monotone", float(monotone))],
        [("ratio_lo", 0.4), ("ratio_hi", 0.6)], reason,
    )


def decay_oracle_trace(settings: ExperimentSettings, amplitude: float = 0.1, t_end: float = 0.05):
    spec = GridSpec.cube(settings.decay_size)
    state = eigenmode_map(spec, flat_torus(1), amplitude)
    # h^2/8: well inside the stability bound for x-only modes; see the notes on the error budget
    prm = FlowParams(p=2.0, delta=1e-2, dt0=spec.hx**2 / 8, t_max=t_end, adaptive=False,
                     stop_tol=1e-14, record_every=10)
    return run(state, prm)


def exp_decay_oracle(settings: ExperimentSettings) -> Verdict:
    _, trace = decay_oracle_trace(settings)
    e0 = trace.rows[0].report.Ep
    errs = [abs(r.report.Ep / e0 / math.exp(-8 * math.pi**2 * r.time) - 1.0) for r in trace.rows]
    ok = trace.termination == "horizon" and max(errs) <= 0.01 and len(trace.rows) >= 10
    return Verdict("linear_decay_oracle", bool(ok),
                   [("max_rel_error", max(errs)), ("records", float(len(trace.rows))),
                    ("t_end", trace.rows[-1].time)],
                   [("tol", 0.01)], "" if trace.termination == "horizon" else trace.termination)


def exp_hyperbolic_convergence(settings: ExperimentSettings, stop_tol: float = 1e-6) -> Verdict:
    spec = GridSpec.cube(settings.size)
    p = 3.0
    state = random_map(spec, hyperbolic_ball(2), p, 1e-2, seed=settings.seed)
    radius = float(np.max(state.chart.radius(state.values)))
    dt0 = suggest_dt(state, p, 1e-1)
    prm = FlowParams(p=p, delta=1e-1, dt0=dt0, t_max=1e3, stop_tol=stop_tol, record_every=10**9)
    cont = delta_continuation(state, prm, (1e-1, 1e-2))
    measured = [("initial_radius", radius)]
    ok = radius <= 0.3
    reasons = []
    for d, (final, trace) in zip(cont.deltas, cont.runs):
        res = harmonic_residual(final, p, d)
        growth = trace.max_sup_grad / trace.rows[0].report.sup_grad
        measured += [(f"residual_delta{d:g}", res), (f"sup_grad_growth_delta{d:g}", growth),
                     (f"time_delta{d:g}", trace.time)]
        ok = ok and trace.termination == "converged" and res <= 10 * stop_tol and growth <= 10
        if trace.termination != "converged":
            reasons.append(f"delta={d:g}: {trace.termination}")
    measured.append(("final_state_distance", float(cont.distances[0, 1])))
    return Verdict("nonpositive_target_convergence", bool(ok), measured,
                   [("radius_max", 0.3), ("residual_max", 10 * stop_tol), ("growth_max", 10.0)],
                   "; ".join(reasons))


def exp_sphere_constant(settings: ExperimentSettings, stop_tol: float = 1e-6) -> Verdict:
    spec = GridSpec.cube(settings.size)
    p, delta = 3.0, 1e-2
    state = random_map(spec, sphere_stereographic(2), p, 1e-3, seed=settings.seed)
    dt0 = suggest_dt(state, p, delta)
    diam, reasons, converged = [], [], True
    for tol in (stop_tol, stop_tol / 10):
        prm = FlowParams(p=p, delta=delta, dt0=dt0, t_max=1e3, stop_tol=tol, record_every=10**9)
        final, trace = run(state, prm)
        diam.append(image_diameter(final))
        if trace.termination != "converged":
            converged = False
            reasons.append(f"stop_tol={tol:g}: {trace.termination}")
    ok = converged and diam[0] <= 1e-3 and diam[1] < diam[0]
    return Verdict("small_energy_constant_map", bool(ok),
                   [("diameter", diam[0]), ("diameter_tight", diam[1]),
                    ("initial_diameter", image_diameter(state))],
                   [("diameter_max", 1e-3)], "; ".join(reasons))


def exp_christoffel(settings: ExperimentSettings) -> Verdict:
    sphere = christoffel_fd_check(sphere_stereographic(2), 100, seed=settings.seed)
    hyper = christoffel_fd_check(hyperbolic_ball(2), 100, seed=settings.seed)
    flat = flat_torus(2)
    rng = np.random.Generator(np.random.PCG64(settings.seed))
    y = rng.standard_normal((2, 100))
    flat_max = float(np.max(np.abs(flat.christoffel(y))))
    ok = sphere <= 1e-5 and hyper <= 1e-5 and flat_max == 0.0
    return Verdict("christoffel_consistency", bool(ok),
                   [("sphere", sphere), ("hyperbolic", hyper), ("flat", flat_max)], [("tol", 1e-5)])


def exp_sphere_large_energy(settings: ExperimentSettings, target_energy: float = 2.0,
                            t_max: float = 0.2) -> Verdict:
    """Exploratory: large initial energy into the sphere.  Either outcome is allowed."""
    spec = GridSpec.cube(settings.size)
    p, delta = 3.0, 1e-2
    state = random_map(spec, sphere_stereographic(2), p, target_energy, seed=settings.seed)
    prm = FlowParams(p=p, delta=delta, dt0=suggest_dt(state, p, delta), t_max=t_max,
                     stop_tol=1e-6, record_every=10**9)
    _, trace = run(state, prm)
    ok = energies_monotone(trace.energies) and trace.termination in ("converged", "horizon", "guard_abort")
    return Verdict("sphere_large_energy", bool(ok),
                   [("initial_energy", trace.energies[0]), ("final_energy", trace.energies[-1]),
                    ("time", trace.time)],
                   [], f"termination={trace.termination}")


ACCEPTANCE = (
    ("1", exp_summation_by_parts),
    ("2", exp_gradient_oracle),
    ("3", exp_sasakian_commutator),
    ("4", exp_bochner_ladder),
    ("5", exp_energy_identity),
    ("6", exp_decay_oracle),
    ("7", exp_hyperbolic_convergence),
    ("8", exp_sphere_constant),
    ("9", exp_christoffel),
)


def theorem_experiments(settings: ExperimentSettings | None = None, only=None, exploratory: bool = False,
                        progress: Callable[[Verdict], None] | None = None) -> list[Verdict]:
    """Run the acceptance experiments (optionally a subset by label) in order."""
    settings = settings or ExperimentSettings()
    todo = [(k, f) for k, f in ACCEPTANCE if only is None or k in only]
    if exploratory:
        todo.append(("x", exp_sphere_large_energy))
    out = []
    for label, fn in todo:
        try:
            v = fn(settings)
        except Exception as exc:  # a crashed experiment is a failed verdict, not a crashed suite
            v = Verdict(fn.__name__.removeprefix("exp_"), False, [], [], f"{type(exc).__name__}: {exc}")
        out.append(v)
        if progress is not None:
            progress(v)
    return out
