"""Explicit time stepping of the regularized p-flow with enforced dissipation.

Each step is forward Euler along the p-tension field.  A step is accepted only
if the candidate stays in the chart and does not raise the regularized energy,
so the recorded energies are non-increasing by construction and the discrete
energy identity

    E(0) - E(T) = sum ||d_t phi||^2 dt + O(sum dt^2)

can be checked directly against the accumulated dissipation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .calculus import DomainError, map_gradient_norm2
from .energy import EnergyReport, energy_density, energy_report, tension_p
from .grid import MapState, integrate
from .initial import sublaplacian_spectral_bound

TRACE_COLUMNS = ("step", "time", "Ep", "Ep_delta", "sup_grad", "sup_T", "Ln1_g", "dissipation")

TERMINATIONS = ("converged", "horizon", "guard_abort", "dt_underflow")


@dataclass
class FlowParams:
    p: float
    delta: float
    dt0: float
    t_max: float
    dt_min: float = 1e-12
    stop_tol: float = 1e-6
    max_rejects: int = 60
    epsilon: float = 1.0
    record_every: int = 1
    adaptive: bool = True

    def __post_init__(self):
        if not self.p > 1:
            raise DomainError(f"p must exceed 1, got {self.p}")
        if not 0 <= self.delta <= 1:
            raise DomainError(f"delta must lie in (0, 1], got {self.delta}")
        if self.delta == 0 and self.p < 2:
            raise DomainError("delta = 0 is only allowed for p >= 2")
        if not 0 < self.dt_min <= self.dt0:
            raise ValueError("need 0 < dt_min <= dt0")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class TraceRow:
    step: int
    time: float
    report: EnergyReport
    dissipation: float

    def as_row(self) -> dict:
        return {"step": self.step, "time": self.time, **self.report.as_dict(), "dissipation": self.dissipation}


@dataclass
class FlowTrace:
    rows: list[TraceRow] = field(default_factory=list)
    dissipation_integral: float = 0.0
    step_log: list[tuple[bool, float]] = field(default_factory=list)  # (accepted, dt)
    energies: list[float] = field(default_factory=list)  # Ep_delta after every accepted step
    max_sup_grad: float = 0.0
    final_speed: float = np.nan
    termination: str = ""

    @property
    def accepted_steps(self) -> int:
        return sum(1 for ok, _ in self.step_log if ok)

    @property
    def rejected_steps(self) -> int:
        return sum(1 for ok, _ in self.step_log if not ok)

    @property
    def time(self) -> float:
        return float(sum(dt for ok, dt in self.step_log if ok))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.as_row().items()})
        return buf.getvalue()


@dataclass
class StepResult:
    accepted: bool
    state: MapState
    energy: float
    reason: str = ""  # "guard" or "energy" on rejection
    norm2: np.ndarray | None = None


def g_norm2(state: MapState, v: np.ndarray) -> float:
    """Squared L2 norm of a tangent field ``v`` along ``state``, measured with the target metric."""
    sq = np.sum(v * v, axis=0)
    if not state.chart.is_flat:
        sq = state.chart.conformal_factor(state.values) * sq
    return integrate(state.spec, sq)


def suggest_dt(state: MapState, p: float, delta: float, safety: float = 0.5) -> float:
    """Conservative explicit step from the sublaplacian bound and the current weight.

    For ``p < 2`` the weight is bounded by ``delta^((p-2)/2)``; the linearized
    operator has coefficients up to ``max(1, p - 1)`` times the weight, and the
    conformal factor can vary by ``max/min`` across the image.
    """
    rho = sublaplacian_spectral_bound(state.spec)
    if p == 2:
        w_max = 1.0
    elif p < 2:
        w_max = delta ** ((p - 2.0) / 2.0)
    else:
        n2 = map_gradient_norm2(state)
        w_max = float(np.max(n2 + delta)) ** ((p - 2.0) / 2.0)
    ratio = 1.0
    if not state.chart.is_flat:
        lam = state.chart.conformal_factor(state.values)
        ratio = float(np.max(lam) / np.min(lam))
    return safety * 2.0 / (rho * w_max * max(1.0, p - 1.0) * ratio)


def step(state: MapState, params: FlowParams, dt: float, tau: np.ndarray | None = None,
         energy: float | None = None) -> StepResult:
    """One forward-Euler step; rejected if the chart guard trips or the energy rises."""
    p, delta = params.p, params.delta
    if tau is None:
        tau = tension_p(state, p, delta)
    if energy is None:
        energy = integrate(state.spec, energy_density(map_gradient_norm2(state), p, delta))
    candidate = state.with_values(state.values + dt * tau)
    if not candidate.in_chart():
        return StepResult(False, state, energy, "guard")
    n2 = map_gradient_norm2(candidate)
    e_new = integrate(state.spec, energy_density(n2, p, delta))
    if not np.isfinite(e_new) or e_new > energy + 1e-12 * abs(energy):
        return StepResult(False, state, energy, "energy")
    return StepResult(True, candidate, e_new, norm2=n2)


def run(phi0: MapState, params: FlowParams,
        on_record: Callable[[int, float, MapState], None] | None = None) -> tuple[MapState, FlowTrace]:
    """Integrate until convergence, the time horizon, or step-size underflow.

    On rejection ``dt`` halves; after 10 consecutive acceptances it doubles
    again, never above ``dt0``.  ``on_record`` is called with
    ``(step, time, state)`` at every recorded step (used for snapshots).
    """
    p, delta = params.p, params.delta
    phi0.check_guard()
    state = phi0
    trace = FlowTrace()
    spec = state.spec

    def record(n, t):
        rep = energy_report(state, p, delta, params.epsilon)
        trace.rows.append(TraceRow(n, t, rep, trace.dissipation_integral))
        if on_record is not None:
            on_record(n, t, state)

    n2 = map_gradient_norm2(state)
    energy = integrate(spec, energy_density(n2, p, delta))
    trace.energies.append(energy)
    trace.max_sup_grad = float(np.sqrt(np.max(n2)))
    t, dt, n_acc = 0.0, params.dt0, 0
    streak = rejects = 0
    record(0, 0.0)
    last_recorded = 0

    while True:
        tau = tension_p(state, p, delta)
        speed = np.sqrt(g_norm2(state, tau))
        trace.final_speed = float(speed)
        if speed < params.stop_tol:
            trace.termination = "converged"
            break
        remaining = params.t_max - t
        if remaining <= 1e-9 * dt:
            trace.termination = "horizon"
            break
        h = min(dt, remaining)
        res = step(state, params, h, tau, energy)
        trace.step_log.append((res.accepted, h))
        if res.accepted:
            velocity = (res.state.values - state.values) / h
            trace.dissipation_integral += g_norm2(state, velocity) * h
            state, energy = res.state, res.energy
            trace.energies.append(energy)
            trace.max_sup_grad = max(trace.max_sup_grad, float(np.sqrt(np.max(res.norm2))))
            t += h
            n_acc += 1
            rejects = 0
            streak += 1
            if params.adaptive and streak >= 10 and dt < params.dt0:
                dt = min(2.0 * dt, params.dt0)
                streak = 0
            if n_acc % params.record_every == 0:
                record(n_acc, t)
                last_recorded = n_acc
        else:
            rejects += 1
            streak = 0
            if not params.adaptive:
                trace.termination = "guard_abort" if res.reason == "guard" else "dt_underflow"
                break
            dt *= 0.5
            if dt < params.dt_min or rejects > params.max_rejects:
                trace.termination = "guard_abort" if res.reason == "guard" else "dt_underflow"
                break

    if last_recorded != n_acc:
        record(n_acc, t)
    return state, trace


@dataclass
class ContinuationResult:
    deltas: list[float]
    runs: list[tuple[MapState, FlowTrace]]
    distances: np.ndarray  # pairwise L2 distances between final states

    def consecutive_distances(self) -> list[float]:
        return [float(self.distances[i, i + 1]) for i in range(len(self.deltas) - 1)]


def l2_distance(a: MapState, b: MapState) -> float:
    return float(np.sqrt(integrate(a.spec, np.sum((a.values - b.values) ** 2, axis=0))))


def delta_continuation(phi0: MapState, params: FlowParams, deltas) -> ContinuationResult:
    """Run the flow from the same data for each regularization in ``deltas``."""
    deltas = [float(d) for d in deltas]
    if any(d <= 0 for d in deltas) or any(a <= b for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be positive and strictly decreasing")
    runs = []
    for d in deltas:
        kw = asdict(params)
        kw["delta"] = d
        runs.append(run(phi0, FlowParams(**kw)))
    k = len(runs)
    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            dist[i, j] = dist[j, i] = l2_distance(runs[i][0], runs[j][0])
    return ContinuationResult(deltas, runs, dist)
