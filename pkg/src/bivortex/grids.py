"""Uniform finite-difference grids and nodal scalar fields.

Two grid kinds are supported:

* periodic rectangles (tori), nodes x_i = i*h with i = 0..n-1 and n*h equal
  to the period exactly in each direction;
* Dirichlet rectangles, nodes spanning the closed rectangle including the
  boundary; a boolean mask marks the unknown (interior) nodes and every node
  outside the mask carries pinned values.

Disks are realized as masked rectangles: the bounding square [-R, R]^2 is
gridded and nodes with |x| >= R are pinned.  Arrays are indexed values[i, j]
with i along x1 and j along x2 ("ij" convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Grid:
    kind: str  # "periodic" or "dirichlet"
    n1: int
    n2: int
    h1: float
    h2: float
    x0: float = 0.0
    y0: float = 0.0
    mask: np.ndarray | None = None  # dirichlet only: True at unknown nodes
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def torus(tau1: float, tau2: float, n1: int, n2: int) -> "Grid":
        """Periodic grid on [0,tau1) x [0,tau2)."""
        return Grid("periodic", n1, n2, tau1 / n1, tau2 / n2)

    @staticmethod
    def rectangle(x0: float, x1: float, y0: float, y1: float,
                  n1: int, n2: int) -> "Grid":
        """Dirichlet grid on the closed rectangle, boundary ring pinned."""
        h1 = (x1 - x0) / (n1 - 1)
        h2 = (y1 - y0) / (n2 - 1)
        mask = np.zeros((n1, n2), dtype=bool)
        mask[1:-1, 1:-1] = True
        return Grid("dirichlet", n1, n2, h1, h2, x0, y0, mask)

    @staticmethod
    def disk(R: float, n: int) -> "Grid":
        """Masked-square realization of the disk B_R; nodes with |x| >= R pinned."""
        g = Grid.rectangle(-R, R, -R, R, n, n)
        xx, yy = g.meshgrid()
        g.mask &= (xx * xx + yy * yy) < R * R
        return g

    # -- geometry ----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def cell_area(self) -> float:
        return self.h1 * self.h2

    @property
    def periods(self) -> tuple[float, float]:
        assert self.kind == "periodic"
        return (self.n1 * self.h1, self.n2 * self.h2)

    @property
    def area(self) -> float:
        """Measure of the computational cell (torus) or of the mask (Dirichlet)."""
        if self.kind == "periodic":
            t1, t2 = self.periods
            return t1 * t2
        return float(self.mask.sum()) * self.cell_area

    def xs(self) -> np.ndarray:
        return self.x0 + self.h1 * np.arange(self.n1)

    def ys(self) -> np.ndarray:
        return self.y0 + self.h2 * np.arange(self.n2)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xs(), self.ys(), indexing="ij")

    def radii(self) -> np.ndarray:
        """Distance of every node from the origin."""
        xx, yy = self.meshgrid()
        return np.hypot(xx, yy)

    def contains(self, pt) -> bool:
        """Strict interior test for a vortex location."""
        x, y = pt
        if self.kind == "periodic":
            t1, t2 = self.periods
            return 0.0 <= x < t1 and 0.0 <= y < t2
        xs, ys = self.xs(), self.ys()
        return xs[0] < x < xs[-1] and ys[0] < y < ys[-1]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass
class ScalarField:
    """Nodal data bound to a grid; thin wrapper used at module boundaries."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        assert self.values.shape == self.grid.shape
