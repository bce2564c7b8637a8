"""Spatial grids and Ornstein-Uhlenbeck red-noise fields.

The red noise obeys ``dxi = -kappa * xi dt + sigma dW`` with a diagonal
covariance for ``W``.  Updates use the exact Gaussian transition law, so the
step size never biases the noise statistics.

Noise on a spatial grid is a discretization of white-in-space forcing: with
identity covariance each node receives an increment of variance
``dt / spacing`` so that the Riemann inner product of the field with any unit
vector has variance ``dt`` regardless of resolution.  Finite-dimensional
spaces use unit weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "BoundaryKind",
    "Grid1D",
    "OUParams",
    "OUField",
    "make_grid",
    "coordinate_grid",
    "noise_weights",
    "trajectory_rng",
    "sample_wiener_increment",
    "ou_exact_step",
    "ou_stationary_sample",
    "ou_transition_coefficients",
]


class BoundaryKind(str, Enum):
    PERIODIC = "periodic"
    DIRICHLET_ENDPOINTS = "dirichlet_endpoints"
    DECOUPLED_POINTWISE = "decoupled_pointwise"
    FINITE_DIMENSIONAL = "finite_dimensional"


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[left, right]``.

    Periodic grids hold ``n_points`` nodes ``left + i * spacing`` and omit the
    right end, which is identified with the left one.  The other spatial kinds
    include both ends.  Every node carries quadrature weight ``spacing``.
    """

    n_points: int
    spacing: float
    left: float
    right: float
    boundary_kind: BoundaryKind

    def __post_init__(self):
        kind = BoundaryKind(self.boundary_kind)
        object.__setattr__(self, "boundary_kind", kind)
        if self.n_points < 1:
            raise ValueError(f"n_points must be positive, got {self.n_points}")
        if kind is not BoundaryKind.FINITE_DIMENSIONAL and self.n_points < 2:
            raise ValueError(f"spatial grids need n_points >= 2, got {self.n_points}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        cells = self.n_points if kind in (BoundaryKind.PERIODIC, BoundaryKind.FINITE_DIMENSIONAL) else self.n_points - 1
        width = self.right - self.left
        if not math.isclose(self.spacing * cells, width, rel_tol=1e-12):
            raise ValueError(
                f"spacing {self.spacing} x {cells} cells does not match extent {width}"
            )

    @property
    def is_spatial(self) -> bool:
        return self.boundary_kind is not BoundaryKind.FINITE_DIMENSIONAL

    @property
    def nodes(self) -> np.ndarray:
        return self.left + self.spacing * np.arange(self.n_points)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_points, self.spacing)


def make_grid(kind, left: float, right: float, n_points: int) -> Grid1D:
    """Build a uniform grid.

    Parameters
    ----------
    kind : BoundaryKind or str
        ``periodic`` uses ``(right - left) / n_points`` as spacing; the other
        spatial kinds use ``(right - left) / (n_points - 1)``.
        ``finite_dimensional`` ignores the bounds and returns unit spacing.
    left, right : float
        Domain ends.
    n_points : int
        Number of nodes.

    Returns
    -------
    Grid1D
    """
    kind = BoundaryKind(kind)
    if isinstance(n_points, bool) or int(n_points) != n_points:
        raise ValueError(f"n_points must be an integer, got {n_points!r}")
    n_points = int(n_points)
    if kind is BoundaryKind.FINITE_DIMENSIONAL:
        return coordinate_grid(n_points)
    if not (math.isfinite(left) and math.isfinite(right)):
        raise ValueError(f"grid bounds must be finite, got [{left}, {right}]")
    if n_points < 2:
        raise ValueError(f"a spatial grid needs at least 2 points, got {n_points}")
    if not right > left:
        raise ValueError(f"right end {right} must exceed left end {left}")
    cells = n_points if kind is BoundaryKind.PERIODIC else n_points - 1
    return Grid1D(n_points, (right - left) / cells, float(left), float(right), kind)


def coordinate_grid(dim: int) -> Grid1D:
    """Index set of a ``dim``-dimensional coordinate space (unit weights)."""
    return Grid1D(int(dim), 1.0, 0.0, float(dim), BoundaryKind.FINITE_DIMENSIONAL)


@dataclass(frozen=True)
class OUParams:
    """Red-noise parameters.

    ``q_spectrum`` holds per-node eigenvalues of the noise covariance relative
    to the identity; ``None`` means identity.
    """

    kappa: float
    sigma: float = 0.1
    q_spectrum: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be positive and finite, got {self.kappa}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.q_spectrum is not None:
            q = np.asarray(self.q_spectrum, dtype=float)
            if q.ndim != 1 or not np.all(q > 0):
                raise ValueError("q_spectrum must be a vector of positive weights")
            object.__setattr__(self, "q_spectrum", q)


@dataclass
class OUField:
    """Red-noise state on ``grid`` at ``time``."""

    values: np.ndarray
    grid: Grid1D
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError(
                f"field has shape {self.values.shape}, grid has {self.grid.n_points} nodes"
            )

    @classmethod
    def zeros(cls, grid: Grid1D) -> "OUField":
        return cls(np.zeros(grid.n_points), grid, 0.0)


def noise_weights(grid: Grid1D, params: OUParams) -> np.ndarray:
    """Per-node covariance weights ``q_i`` of the discretized noise."""
    base = 1.0 / grid.spacing if grid.is_spatial else 1.0
    if params.q_spectrum is None:
        return np.full(grid.n_points, base)
    if params.q_spectrum.shape != (grid.n_points,):
        raise ValueError("q_spectrum length does not match the grid")
    return base * params.q_spectrum


def trajectory_rng(root_seed: int, row: int = 0, sample: int = 0) -> np.random.Generator:
    """Independent generator keyed by ``(root_seed, row, sample)``."""
    seq = np.random.SeedSequence(entropy=int(root_seed), spawn_key=(int(row), int(sample)))
    return np.random.Generator(np.random.PCG64(seq))


def sample_wiener_increment(grid: Grid1D, params: OUParams, dt: float, rng) -> np.ndarray:
    """Draw ``W(t + dt) - W(t)`` with variance ``q_i * dt`` per node."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return np.sqrt(noise_weights(grid, params) * dt) * rng.standard_normal(grid.n_points)


def ou_transition_coefficients(kappa: float, sigma: float, dt: float) -> tuple[float, float]:
    """Decay factor and innovation standard deviation for unit weight."""
    decay = math.exp(-kappa * dt)
    innov = sigma * math.sqrt(-math.expm1(-2.0 * kappa * dt) / (2.0 * kappa))
    return decay, innov


def ou_exact_step(state: OUField, params: OUParams, dt: float, rng, noise=None) -> OUField:
    """Advance the red noise by ``dt`` using its exact transition law.

    Parameters
    ----------
    state : OUField
    params : OUParams
    dt : float
    rng : numpy.random.Generator
        Consumed only when ``noise`` is None.
    noise : array_like, optional
        Standard normal draws to use instead of sampling ``rng``.  Passing
        zeros yields the deterministic part of the step.

    Returns
    -------
    OUField
        New state at ``state.time + dt``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    decay, innov = ou_transition_coefficients(params.kappa, params.sigma, dt)
    if noise is None:
        noise = rng.standard_normal(state.grid.n_points)
    scale = innov * np.sqrt(noise_weights(state.grid, params))
    return OUField(decay * state.values + scale * np.asarray(noise), state.grid, state.time + dt)


def ou_stationary_sample(grid: Grid1D, params: OUParams, rng) -> OUField:
    """Draw a field from the stationary law, variance ``sigma^2 q_i / (2 kappa)``."""
    std = params.sigma * np.sqrt(noise_weights(grid, params) / (2.0 * params.kappa))
    return OUField(std * rng.standard_normal(grid.n_points), grid, 0.0)
