"""Linear stochastic test systems and their one-step transition maps.

Four systems are provided, all driven by red noise ``xi`` with coupling
``sigma_R``:

* ``cable_periodic``: ``du = ((Laplacian + p) u + sigma_R xi) dt`` on the
  periodic unit interval, advanced with a spectral exponential integrator.
* ``jordan_chain``: ``du = (J u + sigma_R xi) dt`` with ``J`` a single Jordan
  block of eigenvalue ``p``.
* ``multiplication_op``: ``du = (f(x, p) u + sigma_R xi) dt`` pointwise in x,
  with ``f(x, p) = -|x|**alpha + p`` or a user polynomial plus ``p``.
* ``cable_boundary_noise``: ``du = (Laplacian + pi**2 + p) u dt`` on [0, 1]
  with Dirichlet data ``sigma_R xi_L`` and ``sigma_R xi_R`` carried by two
  scalar red-noise processes, advanced by implicit Euler.

For the explicit schemes the noise is frozen at its value at the start of the
step; the implicit scheme imposes the boundary data of the end of the step.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import solve_banded

from .grid_noise import BoundaryKind, Grid1D, OUField, coordinate_grid, make_grid

__all__ = [
    "Variant",
    "CablePayload",
    "JordanPayload",
    "MultiplicationPayload",
    "BoundaryPayload",
    "SystemSpec",
    "Eigenpair",
    "cable_system",
    "jordan_system",
    "multiplication_system",
    "boundary_system",
    "with_p",
    "state_grid",
    "check_noise_rate",
    "cable_mode_basis",
    "jordan_matrix",
    "jordan_propagators",
    "jordan_chains",
    "drift_values",
    "boundary_mode_basis",
    "cable_periodic_step",
    "jordan_step",
    "pointwise_step",
    "boundary_implicit_euler_step",
    "system_eigenstructure",
]


class Variant(str, Enum):
    CABLE_PERIODIC = "cable_periodic"
    JORDAN_CHAIN = "jordan_chain"
    MULTIPLICATION_OP = "multiplication_op"
    CABLE_BOUNDARY_NOISE = "cable_boundary_noise"


@dataclass(frozen=True)
class CablePayload:
    grid: Grid1D

    def __post_init__(self):
        if self.grid.boundary_kind is not BoundaryKind.PERIODIC:
            raise ValueError("the periodic cable equation needs a periodic grid")

    @property
    def n_modes(self) -> int:
        return self.grid.n_points


@dataclass(frozen=True)
class JordanPayload:
    dim: int = 4

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"Jordan block size must be positive, got {self.dim}")


@dataclass(frozen=True)
class MultiplicationPayload:
    """Pointwise drift ``f(x, p)`` on the observation set ``grid``.

    Exactly one of ``alpha`` (``f = -|x|**alpha + p``) and ``coefficients``
    (``f = sum_n a_n x**n + p``) is set.
    """

    grid: Grid1D
    alpha: float | None = 2.0
    coefficients: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.grid.boundary_kind is not BoundaryKind.DECOUPLED_POINTWISE:
            raise ValueError("the multiplication operator needs a decoupled_pointwise grid")
        if (self.alpha is None) == (self.coefficients is None):
            raise ValueError("give exactly one of alpha and coefficients")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", tuple(float(a) for a in self.coefficients))

    def base_drift(self, x) -> np.ndarray:
        """``f(x, 0)``."""
        x = np.asarray(x, dtype=float)
        if self.alpha is not None:
            return -np.abs(x) ** self.alpha
        return np.polynomial.polynomial.polyval(x, self.coefficients)


@dataclass(frozen=True)
class BoundaryPayload:
    grid: Grid1D
    shift: float = math.pi**2

    def __post_init__(self):
        if self.grid.boundary_kind is not BoundaryKind.DIRICHLET_ENDPOINTS:
            raise ValueError("the boundary-noise system needs a dirichlet_endpoints grid")
        if self.grid.n_points < 3:
            raise ValueError("the boundary-noise system needs an interior node")


_PAYLOADS = {
    Variant.CABLE_PERIODIC: CablePayload,
    Variant.JORDAN_CHAIN: JordanPayload,
    Variant.MULTIPLICATION_OP: MultiplicationPayload,
    Variant.CABLE_BOUNDARY_NOISE: BoundaryPayload,
}


@dataclass(frozen=True)
class SystemSpec:
    """One of the four test systems at bifurcation parameter ``p < 0``."""

    variant: Variant
    p: float
    payload: object
    sigma_R: float = 1.0

    def __post_init__(self):
        variant = Variant(self.variant)
        object.__setattr__(self, "variant", variant)
        if not (math.isfinite(self.p) and self.p < 0):
            raise ValueError(f"p must be a finite negative number (stable regime), got {self.p}")
        if not self.sigma_R >= 0:
            raise ValueError(f"sigma_R must be nonnegative, got {self.sigma_R}")
        if not isinstance(self.payload, _PAYLOADS[variant]):
            raise TypeError(f"{variant.value} needs a {_PAYLOADS[variant].__name__}")
        if variant is Variant.MULTIPLICATION_OP:
            f = drift_values(self)
            if not np.all(f < 0):
                worst = float(f.max())
                raise ValueError(f"drift f(x, p) must be negative on every node, max is {worst}")


@dataclass(frozen=True)
class Eigenpair:
    """Eigenvalue with right and left (dual) vectors on the state grid.

    For Jordan chains ``rank`` is the chain position ``k`` of both vectors,
    normalized so that ``<right_k, left_{M-k+1}> = 1``.
    """

    value: float
    right: np.ndarray
    left: np.ndarray
    rank: int = 1


def cable_system(p: float, n_points: int = 200, sigma_R: float = 1.0) -> SystemSpec:
    grid = make_grid(BoundaryKind.PERIODIC, 0.0, 1.0, n_points)
    return SystemSpec(Variant.CABLE_PERIODIC, p, CablePayload(grid), sigma_R)


def jordan_system(p: float, dim: int = 4, sigma_R: float = 1.0) -> SystemSpec:
    return SystemSpec(Variant.JORDAN_CHAIN, p, JordanPayload(dim), sigma_R)


def multiplication_system(
    p: float,
    alpha: float | None = 2.0,
    left: float = -0.01,
    right: float = 0.01,
    n_points: int = 2001,
    coefficients=None,
    sigma_R: float = 1.0,
) -> SystemSpec:
    grid = make_grid(BoundaryKind.DECOUPLED_POINTWISE, left, right, n_points)
    if coefficients is not None:
        alpha = None
    return SystemSpec(
        Variant.MULTIPLICATION_OP, p, MultiplicationPayload(grid, alpha, coefficients), sigma_R
    )


def boundary_system(p: float, n_points: int = 201, sigma_R: float = 1.0) -> SystemSpec:
    grid = make_grid(BoundaryKind.DIRICHLET_ENDPOINTS, 0.0, 1.0, n_points)
    return SystemSpec(Variant.CABLE_BOUNDARY_NOISE, p, BoundaryPayload(grid), sigma_R)


def with_p(spec: SystemSpec, p: float) -> SystemSpec:
    return dataclasses.replace(spec, p=p)


def state_grid(spec: SystemSpec) -> Grid1D:
    """Grid on which the solution ``u`` lives."""
    if spec.variant is Variant.JORDAN_CHAIN:
        return coordinate_grid(spec.payload.dim)
    return spec.payload.grid


def check_noise_rate(spec: SystemSpec, kappa: float, rtol: float = 1e-12) -> None:
    """Reject ``kappa`` when ``-kappa`` is a drift eigenvalue.

    Only closed forms built on the resolvent at ``-kappa`` are singular there;
    the dynamics and their stationary law are regular.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if spec.variant is Variant.CABLE_PERIODIC:
        values = cable_mode_basis(spec.payload.grid)[0] + spec.p
    elif spec.variant is Variant.JORDAN_CHAIN:
        values = np.array([spec.p])
    elif spec.variant is Variant.MULTIPLICATION_OP:
        values = drift_values(spec)
    else:
        values = boundary_mode_basis(spec)[0]
    if np.any(np.abs(values + kappa) <= rtol * kappa):
        raise ValueError(f"-kappa = {-kappa} coincides with a drift eigenvalue")


# --- cable equation -------------------------------------------------------


def _rfft_laplacian(grid: Grid1D) -> np.ndarray:
    n = np.arange(grid.n_points // 2 + 1)
    return -(2.0 * math.pi * n / (grid.right - grid.left)) ** 2


def cable_mode_basis(grid: Grid1D) -> tuple[np.ndarray, np.ndarray]:
    """Laplacian eigenvalues and orthonormal real Fourier modes.

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
        ``-(2 pi m / L)**2`` in the order constant, cos 1, sin 1, cos 2, ...
    basis : ndarray, shape (n, n)
        Row ``i`` samples mode ``i`` on the grid; rows are orthonormal for
        the Riemann inner product.
    """
    n = grid.n_points
    x = grid.nodes - grid.left
    width = grid.right - grid.left
    values, rows = [0.0], [np.ones(n) / math.sqrt(width)]
    for m in range(1, n // 2 + 1):
        lam = -(2.0 * math.pi * m / width) ** 2
        phase = 2.0 * math.pi * m * x / width
        if 2 * m == n:
            values.append(lam)
            rows.append(np.cos(phase) / math.sqrt(width))
        else:
            values.extend([lam, lam])
            rows.append(math.sqrt(2.0 / width) * np.cos(phase))
            rows.append(math.sqrt(2.0 / width) * np.sin(phase))
    return np.array(values), np.array(rows)


def _phi1(lam, dt):
    """``(exp(lam dt) - 1) / lam`` evaluated without cancellation."""
    lam = np.asarray(lam, dtype=float)
    return np.expm1(lam * dt) / lam


def _check_step(spec: SystemSpec, variant: Variant, dt: float) -> None:
    if spec.variant is not variant:
        raise ValueError(f"stepper for {variant.value} called on {spec.variant.value}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")


def _noise_values(xi, grid: Grid1D) -> np.ndarray:
    if isinstance(xi, OUField):
        if xi.grid != grid:
            raise ValueError("noise field and state live on different grids")
        return xi.values
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (grid.n_points,):
        raise ValueError(f"noise has shape {xi.shape}, expected ({grid.n_points},)")
    return xi


def cable_periodic_step(u, xi, spec: SystemSpec, dt: float) -> np.ndarray:
    """One exponential-integrator step of the periodic cable equation."""
    _check_step(spec, Variant.CABLE_PERIODIC, dt)
    grid = spec.payload.grid
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_points,):
        raise ValueError(f"state has shape {u.shape}, expected ({grid.n_points},)")
    lam = spec.p + _rfft_laplacian(grid)
    u_hat = np.fft.rfft(u)
    xi_hat = np.fft.rfft(_noise_values(xi, grid))
    out = np.exp(lam * dt) * u_hat + spec.sigma_R * _phi1(lam, dt) * xi_hat
    return np.fft.irfft(out, n=grid.n_points)


# --- Jordan block ---------------------------------------------------------


def jordan_matrix(p: float, dim: int = 4) -> np.ndarray:
    return p * np.eye(dim) + np.eye(dim, k=1)


def jordan_propagators(p: float, dim: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """``exp(J dt)`` and ``J^{-1} (exp(J dt) - I)`` in closed form.

    Both are upper-triangular Toeplitz.  The second one has entries
    ``I_m = int_0^dt exp(p s) s**m / m! ds`` on diagonal ``m``.  For
    ``|p dt| < 1`` the power series is summed; otherwise the stable recursion
    ``I_m = (dt**m / m! exp(p dt) - I_{m-1}) / p`` is used.
    """
    decay = math.exp(p * dt)
    prop = np.zeros((dim, dim))
    forcing = np.zeros((dim, dim))
    z = p * dt
    integral = math.expm1(z) / p
    for m in range(dim):
        if m > 0 and abs(z) < 1.0:
            terms = [z**n / (math.factorial(n) * (m + n + 1)) for n in range(40)]
            integral = dt ** (m + 1) / math.factorial(m) * math.fsum(terms)
        elif m > 0:
            integral = (dt**m / math.factorial(m) * decay - integral) / p
        coef = decay * dt**m / math.factorial(m)
        idx = np.arange(dim - m)
        prop[idx, idx + m] = coef
        forcing[idx, idx + m] = integral
    return prop, forcing


def jordan_step(u, xi, spec: SystemSpec, dt: float) -> np.ndarray:
    """One exact frozen-noise step of ``du = (J u + sigma_R xi) dt``."""
    _check_step(spec, Variant.JORDAN_CHAIN, dt)
    dim = spec.payload.dim
    u = np.asarray(u, dtype=float)
    if u.shape != (dim,):
        raise ValueError(f"state has shape {u.shape}, expected ({dim},)")
    prop, forcing = jordan_propagators(spec.p, dim, dt)
    return prop @ u + spec.sigma_R * (forcing @ _noise_values(xi, coordinate_grid(dim)))


# --- multiplication operator ----------------------------------------------


def drift_values(spec: SystemSpec) -> np.ndarray:
    """``f(x, p)`` on the nodes of a multiplication-operator system."""
    payload = spec.payload
    return payload.base_drift(payload.grid.nodes) + spec.p


def pointwise_step(u, xi, spec: SystemSpec, dt: float) -> np.ndarray:
    """Exact frozen-noise step of the decoupled scalar equations."""
    _check_step(spec, Variant.MULTIPLICATION_OP, dt)
    grid = spec.payload.grid
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_points,):
        raise ValueError(f"state has shape {u.shape}, expected ({grid.n_points},)")
    f = drift_values(spec)
    if not np.all(f < 0):
        raise ValueError("drift f(x, p) must be negative on every node")
    return np.exp(f * dt) * u + spec.sigma_R * _phi1(f, dt) * _noise_values(xi, grid)


# --- boundary-noise cable equation ----------------------------------------


def boundary_mode_basis(spec: SystemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and Euclidean-orthonormal eigenvectors of the interior operator.

    The interior operator is the second-difference Laplacian with zero
    Dirichlet data plus ``shift + p``.  Column ``k - 1`` of the basis is
    ``sqrt(2 / N) sin(pi j k / N)`` for interior nodes ``j = 1 .. N - 1``.
    """
    grid = spec.payload.grid
    cells = grid.n_points - 1
    k = np.arange(1, cells)
    h = grid.spacing
    values = -4.0 / h**2 * np.sin(k * math.pi / (2 * cells)) ** 2 + spec.payload.shift + spec.p
    basis = math.sqrt(2.0 / cells) * np.sin(math.pi * np.outer(k, k) / cells)
    return values, basis


def _boundary_banded(spec: SystemSpec, dt: float) -> np.ndarray:
    grid = spec.payload.grid
    n = grid.n_points
    r = dt / grid.spacing**2
    ab = np.zeros((3, n))
    ab[1, :] = 1.0
    ab[1, 1:-1] = 1.0 + 2.0 * r - dt * (spec.payload.shift + spec.p)
    ab[0, 2:] = -r
    ab[2, :-2] = -r
    return ab


def boundary_implicit_euler_step(u, xi_left: float, xi_right: float, spec: SystemSpec, dt: float) -> np.ndarray:
    """One implicit Euler step with Dirichlet data ``sigma_R xi``.

    Solves ``(I - dt (Laplacian_h + shift + p)) u' = u`` on interior nodes
    with boundary rows ``u'(0) = sigma_R xi_left`` and
    ``u'(1) = sigma_R xi_right``.
    """
    _check_step(spec, Variant.CABLE_BOUNDARY_NOISE, dt)
    grid = spec.payload.grid
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_points,):
        raise ValueError(f"state has shape {u.shape}, expected ({grid.n_points},)")
    values, _ = boundary_mode_basis(spec)
    assert np.all(1.0 - dt * values > 0), "implicit Euler matrix is singular"
    rhs = u.copy()
    rhs[0] = spec.sigma_R * xi_left
    rhs[-1] = spec.sigma_R * xi_right
    return solve_banded((1, 1), _boundary_banded(spec, dt), rhs)


# --- eigenstructure -------------------------------------------------------


def jordan_chains(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Right chain ``e_k`` and left chain ``e*_k`` as rows, k = 1 .. dim.

    ``J e_k = p e_k + e_{k-1}`` and ``J^T e*_k = p e*_k + e*_{k-1}``, with
    ``<e_k, e*_j> = 1`` exactly when ``j = dim - k + 1``.
    """
    right = np.tril(np.ones((dim, dim)))
    left = np.zeros((dim, dim))
    for k in range(1, dim + 1):
        m = dim - k
        left[k - 1, m] = 1.0
        if k > 1:
            left[k - 1, m + 1] = -1.0
    return right, left


def system_eigenstructure(spec: SystemSpec, count: int | None = None) -> list[Eigenpair]:
    """Leading eigenpairs sorted by decreasing eigenvalue.

    Jordan chains return the whole chain, ordered by rank.  Grid functions are
    normalized for the Riemann inner product on the state grid; the boundary
    system uses the continuum eigenvalues ``p + shift - (k pi)**2`` of
    ``sqrt(2) sin(k pi x)``.
    """
    variant = spec.variant
    if variant is Variant.MULTIPLICATION_OP:
        raise ValueError("the multiplication operator has continuous spectrum")
    pairs: list[Eigenpair] = []
    if variant is Variant.JORDAN_CHAIN:
        right, left = jordan_chains(spec.payload.dim)
        for k in range(spec.payload.dim):
            pairs.append(Eigenpair(spec.p, right[k], left[k], k + 1))
        return pairs
    if variant is Variant.CABLE_PERIODIC:
        lap, basis = cable_mode_basis(spec.payload.grid)
        for lam, row in zip(lap, basis):
            pairs.append(Eigenpair(spec.p + lam, row, row))
    else:
        grid = spec.payload.grid
        x = grid.nodes
        for k in range(1, grid.n_points - 1):
            row = math.sqrt(2.0) * np.sin(k * math.pi * x)
            row[[0, -1]] = 0.0
            lam = spec.p + spec.payload.shift - (k * math.pi) ** 2
            pairs.append(Eigenpair(lam, row, row))
    return pairs if count is None else pairs[:count]
