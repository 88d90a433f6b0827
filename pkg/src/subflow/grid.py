"""Lattice model of the polarized Heisenberg nilmanifold.

The source manifold is the quotient of the Heisenberg group (coordinates
``(x, y, t)``, frame ``X = d/dx``, ``Y = d/dy + x d/dt``, ``T = d/dt``) by the
integer lattice acting as

    (a, b, c) . (x, y, t) = (x + a, y + b, t + c + a*y).

Nodes sit at ``(i*hx, j*hy, k*ht)`` on the unit cube.  The ``y`` and ``t``
directions wrap plainly; crossing the ``x`` seam shifts the ``t`` index by
``j * (nt // ny)`` cells, which is why ``ny`` must divide ``nt``.

Fields are plain ``float64`` arrays of shape ``grid.shape`` indexed ``[i, j, k]``.
"""

from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

AXES = {"x": 0, "y": 1, "t": 2}

SNAPSHOT_MAGIC = "SUBFLOW-SNAPSHOT v1"


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    nt: int

    def __post_init__(self):
        for name in ("nx", "ny", "nt"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 4:
                raise ValueError(f"{name} must be an integer >= 4, got {n!r}")
        if self.nt % self.ny:
            raise ValueError(f"ny={self.ny} must divide nt={self.nt}")

    @classmethod
    def cube(cls, n: int) -> "GridSpec":
        return cls(n, n, n)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nt)

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nt

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def ht(self) -> float:
        return 1.0 / self.nt

    @property
    def spacing(self) -> tuple[float, float, float]:
        return (self.hx, self.hy, self.ht)

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy * self.ht

    @property
    def twist(self) -> int:
        """Number of t-cells per y-cell; the seam shift is ``j * twist``."""
        return self.nt // self.ny

    @cached_property
    def x(self) -> np.ndarray:
        """Node x-coordinate broadcast to the full grid shape."""
        xs = np.arange(self.nx) * self.hx
        return np.broadcast_to(xs[:, None, None], self.shape)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(
            np.arange(self.nx) * self.hx,
            np.arange(self.ny) * self.hy,
            np.arange(self.nt) * self.ht,
            indexing="ij",
        )

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def ones(self) -> np.ndarray:
        return np.ones(self.shape)


@dataclass(frozen=True)
class MapState:
    """An ``m``-component map from the lattice into a target chart.

    ``values[a]`` is the field of chart coordinate ``a``.  Construction does not
    enforce the chart guard, since the flow must be able to hold and test
    candidate states; call :meth:`check_guard` where the invariant is required.
    """

    spec: GridSpec
    values: np.ndarray
    chart: object  # subflow.target.TargetChart

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 3:
            values = values[None]
        if values.shape != (self.chart.m, *self.spec.shape):
            raise ValueError(
                f"values shape {values.shape} does not match m={self.chart.m} on grid {self.spec.shape}"
            )
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def in_chart(self) -> bool:
        return self.chart.guard(self.values)

    def check_guard(self) -> None:
        self.chart.check(self.values)

    def with_values(self, values: np.ndarray) -> "MapState":
        return MapState(self.spec, values, self.chart)


def neighbor(spec: GridSpec, index, axis: str, direction: int) -> tuple[int, int, int]:
    """Lattice neighbor of ``index`` one step along ``axis``.

    ``direction`` is ``+1`` or ``-1``.  Leaving the fundamental domain through
    ``x = 1`` lands on ``(0, y, t - y)``; leaving through ``x = 0`` lands on
    ``(1 - hx, y, t + y)``.
    """
    i, j, k = (int(v) for v in index)
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if axis == "x":
        i2 = i + direction
        if i2 == spec.nx:
            return (0, j, (k - j * spec.twist) % spec.nt)
        if i2 == -1:
            return (spec.nx - 1, j, (k + j * spec.twist) % spec.nt)
        return (i2, j, k)
    if axis == "y":
        return (i, (j + direction) % spec.ny, k)
    if axis == "t":
        return (i, j, (k + direction) % spec.nt)
    raise ValueError(f"unknown axis {axis!r}")


@lru_cache(maxsize=64)
def shift_index(spec: GridSpec, axis: str, direction: int) -> np.ndarray:
    """Flat gather index: ``f.ravel()[idx]`` is ``f`` evaluated at each node's neighbor.

    Vectorized form of :func:`neighbor`, cached per grid.
    """
    i, j, k = np.indices(spec.shape)
    if axis == "x":
        i2 = i + direction
        k2 = k.copy()
        over = i2 == spec.nx
        under = i2 == -1
        k2[over] = (k[over] - j[over] * spec.twist) % spec.nt
        k2[under] = (k[under] + j[under] * spec.twist) % spec.nt
        i2 = i2 % spec.nx
        j2 = j
    elif axis == "y":
        i2, j2, k2 = i, (j + direction) % spec.ny, k
    elif axis == "t":
        i2, j2, k2 = i, j, (k + direction) % spec.nt
    else:
        raise ValueError(f"unknown axis {axis!r}")
    idx = np.ravel_multi_index((i2, j2, k2), spec.shape).ravel()
    idx.setflags(write=False)
    return idx


def shift(spec: GridSpec, f: np.ndarray, axis: str, direction: int) -> np.ndarray:
    return f.reshape(-1)[shift_index(spec, axis, direction)].reshape(spec.shape)


def coordinate(spec: GridSpec, index) -> tuple[float, float, float]:
    i, j, k = index
    return (i * spec.hx, j * spec.hy, k * spec.ht)


def integrate(spec: GridSpec, f: np.ndarray) -> float:
    """Discrete integral with respect to the normalized volume (unit total mass).

    Reduction is numpy's pairwise summation over the C-ordered array, which is
    deterministic for a fixed shape.
    """
    f = np.ascontiguousarray(f, dtype=np.float64)
    if f.shape != spec.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {spec.shape}")
    return float(np.sum(f)) * spec.cell_volume


def inner(spec: GridSpec, f: np.ndarray, g: np.ndarray) -> float:
    return integrate(spec, f * g)


# -- snapshot files -----------------------------------------------------------


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def encode_snapshot(spec: GridSpec, components: np.ndarray) -> bytes:
    components = np.asarray(components, dtype=np.float64)
    if components.ndim == 3:
        components = components[None]
    if components.shape[1:] != spec.shape:
        raise ValueError("component shape does not match grid")
    header = (
        f"{SNAPSHOT_MAGIC}\n"
        f"grid {spec.nx} {spec.ny} {spec.nt}\n"
        f"components {components.shape[0]}\n"
        "dtype f64le\n"
        "\n"
    )
    buf = io.BytesIO()
    buf.write(header.encode("ascii"))
    buf.write(np.ascontiguousarray(components, dtype="<f8").tobytes())
    return buf.getvalue()


def decode_snapshot(data: bytes) -> tuple[GridSpec, np.ndarray]:
    lines = []
    pos = 0
    while True:
        end = data.index(b"\n", pos)
        line = data[pos:end].decode("ascii")
        pos = end + 1
        if line == "":
            break
        lines.append(line)
    if not lines or lines[0] != SNAPSHOT_MAGIC:
        raise ValueError("not a subflow snapshot")
    fields = dict(line.split(" ", 1) for line in lines[1:])
    nx, ny, nt = (int(v) for v in fields["grid"].split())
    m = int(fields["components"])
    if fields.get("dtype") != "f64le":
        raise ValueError(f"unsupported dtype {fields.get('dtype')!r}")
    spec = GridSpec(nx, ny, nt)
    expected = m * spec.size * 8
    payload = data[pos:]
    if len(payload) != expected:
        raise ValueError(f"payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape((m, *spec.shape))
    return spec, values


def write_snapshot(path, spec: GridSpec, components: np.ndarray) -> None:
    atomic_write_bytes(path, encode_snapshot(spec, components))


def read_snapshot(path) -> tuple[GridSpec, np.ndarray]:
    return decode_snapshot(Path(path).read_bytes())
