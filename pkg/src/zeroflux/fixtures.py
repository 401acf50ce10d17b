"""Reference trajectories produced outside the zero-flux solver."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .grid import Field, build_grid
from .model import make_builtin
from .solver import SolverConfig, Trajectory


def dirichlet_heat_fixture(d: float = 1.0, M: float = 1.0, n: int = 400, T: float = 20.0,
                           steps: int = 400, left: float | None = None,
                           right: float = 0.0, initial: float | None = None) -> Trajectory:
    """Backward-Euler heat trajectory on [0, 1] with Dirichlet walls.

    The left wall is held at ``left`` (default M) and the right at ``right``,
    so mass keeps entering through x = 0: the total boundary flux is not zero.
    The trajectory carries the heat built-in as its problem so the zero-flux
    functionals can be evaluated on it directly.
    """
    left = M if left is None else left
    initial = 0.5 * M if initial is None else initial
    problem = make_builtin("heat", {"d": d, "M": M, "T": T})
    grid = build_grid(problem.domain, n)
    h = grid.h[0]
    dt = T / steps
    r = d * dt / h ** 2
    # wall faces sit h/2 from the first and last centers
    diag = np.full(n, 1 + 2 * r)
    diag[0] = diag[-1] = 1 + 3 * r
    ab = np.zeros((3, n))
    ab[0, 1:] = -r
    ab[1] = diag
    ab[2, :-1] = -r
    rhs_bc = np.zeros(n)
    rhs_bc[0] = 2 * r * left
    rhs_bc[-1] = 2 * r * right

    u = np.full(n, float(initial))
    times, fields = [0.0], [Field(grid, u)]
    for j in range(1, steps + 1):
        u = solve_banded((1, 1), ab, u + rhs_bc)
        times.append(j * dt)
        fields.append(Field(grid, u))
    config = SolverConfig(t_end=T, snapshot_times=tuple(times))
    return Trajectory(problem, config, grid, times, fields)
