"""Initial maps: constants, the x-eigenmode, and mollified random data.

Random data is node noise smoothed by explicit sub-heat steps.  The operators
respect the lattice identifications, so the result is a well-defined function
on the nilmanifold; closed-form t-dependent formulas generally are not.
"""

from __future__ import annotations

import numpy as np

from .calculus import sublaplacian
from .energy import Ep
from .fields import eigenmode
from .grid import GridSpec, MapState
from .target import TargetChart

RNG_FAMILY = "numpy.random.PCG64"


class InitialDataError(ValueError):
    pass


def sublaplacian_spectral_bound(spec: GridSpec) -> float:
    """Upper bound on the spectral radius of ``-sublaplacian``.

    ``|X| <= 2/hx`` and ``|Y| <= 2/hy + 2 max(x)/ht`` as difference operators.
    """
    x_max = 1.0 - spec.hx
    return 4.0 / spec.hx**2 + (2.0 / spec.hy + 2.0 * x_max / spec.ht) ** 2


def mollify(spec: GridSpec, f: np.ndarray, steps: int) -> np.ndarray:
    dt = 1.0 / sublaplacian_spectral_bound(spec)
    for _ in range(steps):
        f = f + dt * sublaplacian(spec, f)
    return f


def constant_map(spec: GridSpec, chart: TargetChart, center=None) -> MapState:
    center = np.zeros(chart.m) if center is None else np.asarray(center, dtype=float)
    values = np.broadcast_to(center[:, None, None, None], (chart.m, *spec.shape)).copy()
    return MapState(spec, values, chart)


def eigenmode_map(spec: GridSpec, chart: TargetChart, amplitude: float, center=None) -> MapState:
    state = constant_map(spec, chart, center)
    values = state.values.copy()
    values[0] += eigenmode(spec, amplitude)
    return MapState(spec, values, chart)


def random_shape(spec: GridSpec, m: int, seed: int, mollify_steps: int) -> np.ndarray:
    """Mollified zero-mean noise, normalized to unit sup norm; shape ``(m, *grid)``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.uniform(-1.0, 1.0, size=(m, *spec.shape))
    out = np.stack([mollify(spec, noise[a], mollify_steps) for a in range(m)])
    out -= out.mean(axis=(1, 2, 3), keepdims=True)
    peak = np.max(np.abs(out))
    if peak == 0:
        raise InitialDataError("mollified noise vanished")
    return out / peak


def scale_to_energy(spec: GridSpec, chart: TargetChart, shape: np.ndarray, p: float,
                    target_energy: float, center=None, rtol: float = 1e-3) -> MapState:
    """Find ``a`` with ``Ep(center + a * shape) = target_energy`` by bisection."""
    center = np.zeros(chart.m) if center is None else np.asarray(center, dtype=float)
    base = center[:, None, None, None]

    def state_at(a):
        return MapState(spec, base + a * shape, chart)

    def energy_at(a):
        st = state_at(a)
        if not st.in_chart():
            return np.inf
        return Ep(st, p)

    lo, hi = 0.0, 1e-3
    while energy_at(hi) < target_energy:
        lo, hi = hi, 2.0 * hi
        if not state_at(hi).in_chart() and energy_at(lo) < target_energy:
            # the energy is monotone in a on the segment; shrink toward the guard
            break
        if hi > 1e6:
            raise InitialDataError("target energy unreachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        e = energy_at(mid)
        if np.isfinite(e) and abs(e - target_energy) <= rtol * target_energy:
            return state_at(mid)
        if e < target_energy:
            lo = mid
        else:
            hi = mid
    raise InitialDataError(
        f"could not reach Ep={target_energy} inside the {chart.name} chart guard"
    )


def random_map(spec: GridSpec, chart: TargetChart, p: float, target_energy: float, seed: int,
               mollify_steps: int = 200, center=None) -> MapState:
    shape = random_shape(spec, chart.m, seed, mollify_steps)
    return scale_to_energy(spec, chart, shape, p, target_energy, center)
