"""Rectangular space-time lattices and the fields/measures living on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform ``(x, t)`` lattice on ``[x_min, x_max] x [t_min, t_max]``."""

    x_min: float
    x_max: float
    nx: int
    t_min: float
    t_max: float
    nt: int

    def __post_init__(self):
        if self.nx < 3 or self.nt < 2:
            raise ConfigurationError("grid needs nx >= 3 and nt >= 2")
        if not (self.x_max > self.x_min and self.t_max > self.t_min):
            raise ConfigurationError("grid extents must be increasing")

    @classmethod
    def from_steps(cls, x_min, x_max, dx, t_min, t_max, dt) -> "SpaceTimeGrid":
        nx = int(round((x_max - x_min) / dx)) + 1
        nt = int(round((t_max - t_min) / dt)) + 1
        return cls(x_min, x_min + (nx - 1) * dx, nx, t_min, t_min + (nt - 1) * dt, nt)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.nt)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.nt - 1)

    def t_index(self, t: float, tol: float = 1e-9) -> int:
        j = int(round((t - self.t_min) / self.dt))
        if not 0 <= j < self.nt or abs(self.t_min + j * self.dt - t) > tol * max(1.0, abs(t)):
            raise ConfigurationError(f"time {t} is not a node of the grid")
        return j

    def x_index(self, x: float, tol: float = 1e-9) -> int:
        i = int(round((x - self.x_min) / self.dx))
        if not 0 <= i < self.nx or abs(self.x_min + i * self.dx - x) > tol * max(1.0, abs(x)):
            raise ConfigurationError(f"position {x} is not a node of the grid")
        return i


@dataclass
class GridField:
    """Scalar field ``values[i, j]`` at ``(x[i], t[j])``."""

    x: np.ndarray
    t: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.x), len(self.t)):
            raise ConfigurationError(
                f"field shape {self.values.shape} does not match grid ({len(self.x)}, {len(self.t)})"
            )

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def with_values(self, values) -> "GridField":
        return GridField(self.x, self.t, values, dict(self.meta))

    def at(self, x: float, t: float) -> float:
        """Bilinear interpolation."""
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator((self.x, self.t), self.values, bounds_error=False, fill_value=0.0)
        return float(interp([[x, t]])[0])


@dataclass
class GridMeasure(GridField):
    """Space-time measure stored as a density w.r.t. ``dx dt``.

    For the law ``P*`` of a walker the slice ``values[:, j]`` is the spatial
    density at time ``t[j]``.  ``injection`` records ``(mu, s)`` when the
    measure was produced from a point-in-time source.
    """

    injection: tuple | None = None

    def slice_mass(self, j: int) -> float:
        return float(self.values[:, j].sum() * self.dx)

    def cell_masses(self) -> np.ndarray:
        return self.values * self.dx * self.dt
