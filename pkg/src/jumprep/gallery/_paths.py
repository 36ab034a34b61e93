"""Vectorised path bookkeeping shared by the grid-based gallery cases.

Conventions: ``x`` is a step path on the uniform grid, an atom at ``s`` lies in
cell ``k = floor(s / dt)`` and is first visible at node ``k + 1``.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridView:
    dt: float
    X: np.ndarray  # X at grid nodes, (n, N+1)
    path: np.ndarray  # per atom
    cell: np.ndarray  # per atom
    s: np.ndarray  # atom times
    z: np.ndarray  # first mark coordinate
    X_left: np.ndarray  # X(s-) per atom
    J: np.ndarray  # cumulative jumps at grid nodes


def grid_view(batch) -> GridView:
    x, grid, jb = batch.x, batch.grid, batch.jumps
    n, N1 = x.shape
    dt = grid[1] - grid[0]
    path = jb.path_index
    s = jb.times
    z = jb.marks[:, 0] if len(s) else np.empty(0)
    cell = np.minimum((s / dt).astype(int), N1 - 2)
    incr = np.zeros((n, N1))
    np.add.at(incr, (path, cell + 1), z)
    J = np.cumsum(incr, axis=1)
    c = batch.params.compensator_drift
    X = x + J - c * grid
    # jumps strictly before each atom on its own path
    csum = np.cumsum(z)
    start = np.repeat(np.concatenate([[0.0], csum])[jb.offsets[:-1]], jb.counts)
    before = csum - z - start
    X_left = x[path, cell] + before - c * s
    return GridView(dt, X, path, cell, s, z, X_left, J)
