"""Uniform cell-centered grids on rectangles, fields, integrals and boundary layers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class RectDomain:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or len(lo) not in (1, 2):
            raise GridError("domain must be 1-D or 2-D with matching corners")
        if any(not (b > a) for a, b in zip(lo, hi)):
            raise GridError(f"degenerate domain: lo={lo}, hi={hi}")

    @property
    def ndim(self) -> int:
        return len(self.lo)

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def volume(self) -> float:
        return math.prod(self.lengths)


@dataclass(frozen=True)
class UniformGrid:
    domain: RectDomain
    n: tuple[int, ...]

    @property
    def ndim(self) -> int:
        return self.domain.ndim

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / k for a, b, k in zip(self.domain.lo, self.domain.hi, self.n))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return math.prod(self.n)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    def centers(self, axis: int) -> np.ndarray:
        lo, h = self.domain.lo[axis], self.h[axis]
        return lo + (np.arange(self.n[axis]) + 0.5) * h

    def mesh(self) -> list[np.ndarray]:
        """Cell-center coordinate arrays, each of grid shape."""
        return np.meshgrid(*(self.centers(a) for a in range(self.ndim)), indexing="ij")

    def refine(self, factor: int = 2) -> "UniformGrid":
        return UniformGrid(self.domain, tuple(k * factor for k in self.n))


def build_grid(domain: RectDomain, n) -> UniformGrid:
    n = tuple(int(k) for k in np.atleast_1d(n))
    if len(n) == 1 and domain.ndim == 2:
        n = n * 2
    if len(n) != domain.ndim:
        raise GridError(f"need {domain.ndim} cell counts, got {len(n)}")
    if any(k < 3 for k in n):
        raise GridError(f"need at least 3 cells per axis, got {n}")
    return UniformGrid(domain, n)


@dataclass(frozen=True, eq=False)
class Field:
    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise GridError(
                    f"{values.size} values for a grid with {self.grid.size} cells")
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise GridError("field values must be finite")
        object.__setattr__(self, "values", values)


def integrate(field: Field) -> float:
    """Midpoint-rule integral with compensated summation."""
    return math.fsum(field.values.ravel()) * field.grid.cell_volume


def l1_distance(a: Field, b: Field) -> float:
    if a.grid != b.grid:
        raise GridError("fields live on different grids")
    return math.fsum(np.abs(a.values - b.values).ravel()) * a.grid.cell_volume


def restrict(values: np.ndarray, factor: int) -> np.ndarray:
    """Average fine-grid cell values onto the grid coarser by ``factor`` per axis."""
    out = np.asarray(values, dtype=float)
    for axis in range(out.ndim):
        n = out.shape[axis] // factor
        shape = out.shape[:axis] + (n, factor) + out.shape[axis + 1:]
        out = out.reshape(shape).mean(axis=axis + 1)
    return out


def boundary_distance(grid: UniformGrid) -> np.ndarray:
    """Distance from each cell center to the rectangle boundary."""
    mesh = grid.mesh()
    dist = np.full(grid.shape, np.inf)
    for axis, x in enumerate(mesh):
        dist = np.minimum(dist, np.minimum(x - grid.domain.lo[axis], grid.domain.hi[axis] - x))
    return dist


@dataclass(frozen=True, eq=False)
class BoundaryLayer:
    delta: float
    weights: Field
    gradient: np.ndarray  # shape (ndim,) + grid shape


def boundary_layer(grid: UniformGrid, delta: float) -> BoundaryLayer:
    """Distance ramp clamp(dist/delta, 0, 1) at cell centers and its discrete gradient.

    The gradient uses centered differences inside and one-sided differences
    in the first and last cell of each axis, so near the boundary it points
    inward with magnitude close to 1/delta.
    """
    if not delta >= 2 * max(grid.h) * (1 - 1e-12):
        raise GridError(f"delta={delta} not resolvable with h={grid.h}; need delta >= 2h")
    zeta = np.clip(boundary_distance(grid) / delta, 0.0, 1.0)
    grads = np.gradient(zeta, *grid.h, edge_order=1)
    if grid.ndim == 1:
        grads = [grads]
    return BoundaryLayer(float(delta), Field(grid, zeta), np.stack(grads))
