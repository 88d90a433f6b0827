"""Smooth closed-form functions on the nilmanifold.

A generic ``t``-dependent formula is not invariant under
``(x, y, t) ~ (x + 1, y, t + y)``.  Lattice sums of the form

    sum_a G(x + a) exp(2 pi i n (t + a y))

are, and with a Gaussian profile ``G`` they are smooth and band-limited in
practice; these are used as fixed data for refinement ladders.
"""

from __future__ import annotations

import numpy as np

from .grid import GridSpec


def theta_mode(spec: GridSpec, n: int = 1, width: float = 0.3, phase: float = 0.0,
               terms: int = 6) -> np.ndarray:
    """Real part of ``exp(i phase) sum_a G(x+a) exp(2 pi i n (t + a y))`` with Gaussian ``G``.

    Invariant under the lattice for every integer ``n``.
    """
    x, y, t = spec.coordinates()
    acc = np.zeros(spec.shape, dtype=complex)
    for a in range(-terms, terms + 1):
        acc += np.exp(-0.5 * ((x + a - 0.5) / width) ** 2) * np.exp(2j * np.pi * n * (t + a * y))
    return np.real(np.exp(1j * phase) * acc)


def heisenberg_test_field(spec: GridSpec) -> np.ndarray:
    """Fixed smooth field with both vertical (t-dependent) and horizontal content."""
    x, y, _ = spec.coordinates()
    return (
        theta_mode(spec, n=1, width=0.3, phase=0.4)
        + 0.5 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
        + 0.25 * np.cos(2 * np.pi * (x + y))
    )


def eigenmode(spec: GridSpec, amplitude: float = 1.0) -> np.ndarray:
    x, _, _ = spec.coordinates()
    return amplitude * np.sin(2 * np.pi * x)
