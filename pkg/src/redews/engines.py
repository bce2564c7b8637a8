"""Trajectory generators that turn standard normal draws into probe projections.

Every engine consumes a block of draws of shape ``(n_steps, noise_dim)`` and
returns the probe projections after each step, shape ``(n_probes, n_steps)``.
Engines keep their state between blocks, so a trajectory may be fed in
chunks of any size.

``StepEngine`` applies the reference transition maps from ``systems`` one
step at a time.  The filter engines compute the same recursions with
``scipy.signal.lfilter`` over whole blocks.  For the Jordan, multiplication
and boundary systems they consume the draws exactly like the step engine and
agree with it to round-off.  The cable filter engine only simulates the
Fourier modes seen by the probes and draws modal noise directly, which has
the same law but not the same realization.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

from .grid_noise import OUField, OUParams, coordinate_grid, ou_exact_step, ou_transition_coefficients
from .probes import ProbeKind, project_joint
from .systems import (
    SystemSpec,
    Variant,
    boundary_implicit_euler_step,
    boundary_mode_basis,
    cable_mode_basis,
    cable_periodic_step,
    drift_values,
    jordan_propagators,
    jordan_step,
    pointwise_step,
    state_grid,
)

__all__ = ["StepEngine", "CableModalEngine", "JordanEngine", "PointwiseEngine", "BoundaryEngine", "make_engine"]


def _ar1(coef, drive, last):
    """``x[k] = coef * x[k-1] + drive[k]`` along the last axis, with ``x[-1] = last``."""
    zi = np.asarray(coef * np.asarray(last, dtype=float))[..., None]
    out, _ = lfilter([1.0], [1.0, -coef], drive, axis=-1, zi=zi)
    return out


def _shifted(previous, block):
    """Values at the start of each step: ``previous`` then all but the last of ``block``."""
    return np.concatenate([np.asarray(previous)[..., None], block[..., :-1]], axis=-1)


def _probe_parts(probes, n):
    u_parts = np.array([p.values for p in probes]).reshape(len(probes), n)
    xi_parts = np.array(
        [p.noise_values if p.kind is ProbeKind.EXTENDED else np.zeros(n) for p in probes]
    ).reshape(len(probes), n)
    return u_parts, xi_parts


def _check_probes(spec: SystemSpec, probes):
    grid = state_grid(spec)
    for p in probes:
        if p.values.shape != (grid.n_points,):
            raise ValueError(f"probe {p.name!r} has {p.values.size} values, state has {grid.n_points}")
        if p.kind is ProbeKind.EXTENDED and spec.variant is Variant.CABLE_BOUNDARY_NOISE:
            raise ValueError("extended probes are not defined for boundary noise")


class StepEngine:
    """Reference engine: one call of the system stepper per time step."""

    def __init__(self, spec: SystemSpec, kappa: float, sigma: float, dt: float, probes):
        _check_probes(spec, probes)
        self.spec, self.dt, self.probes = spec, dt, list(probes)
        self.params = OUParams(kappa, sigma)
        self.grid = state_grid(spec)
        boundary = spec.variant is Variant.CABLE_BOUNDARY_NOISE
        self.noise_grid = coordinate_grid(2) if boundary else self.grid
        self.noise_dim = self.noise_grid.n_points
        self.u = np.zeros(self.grid.n_points)
        self.xi = OUField.zeros(self.noise_grid)

    def advance(self, normals: np.ndarray) -> np.ndarray:
        spec, dt = self.spec, self.dt
        out = np.empty((len(self.probes), normals.shape[0]))
        for i, z in enumerate(normals):
            new_xi = ou_exact_step(self.xi, self.params, dt, None, noise=z)
            if spec.variant is Variant.CABLE_PERIODIC:
                self.u = cable_periodic_step(self.u, self.xi, spec, dt)
            elif spec.variant is Variant.JORDAN_CHAIN:
                self.u = jordan_step(self.u, self.xi, spec, dt)
            elif spec.variant is Variant.MULTIPLICATION_OP:
                self.u = pointwise_step(self.u, self.xi, spec, dt)
            else:
                self.u = boundary_implicit_euler_step(self.u, *new_xi.values, spec, dt)
            self.xi = new_xi
            xi_on_grid = self.xi.values if self.noise_grid is self.grid else None
            out[:, i] = [project_joint(self.u, xi_on_grid, p, self.grid) for p in self.probes]
        return out


class CableModalEngine:
    """Periodic cable equation restricted to the Fourier modes the probes see.

    Each retained mode is an exact two-dimensional linear recursion driven by
    its own modal red noise.
    """

    def __init__(self, spec: SystemSpec, kappa: float, sigma: float, dt: float, probes, modes=None):
        _check_probes(spec, probes)
        grid = spec.payload.grid
        lap, basis = cable_mode_basis(grid)
        u_parts, xi_parts = _probe_parts(probes, grid.n_points)
        a = grid.spacing * u_parts @ basis.T
        b = grid.spacing * xi_parts @ basis.T
        if modes is None:
            scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1.0)
            modes = np.flatnonzero((np.abs(a) > 1e-12 * scale).any(0) | (np.abs(b) > 1e-12 * scale).any(0))
        self.modes = np.asarray(modes, dtype=int)
        self.a, self.b = a[:, self.modes], b[:, self.modes]
        lam = spec.p + lap[self.modes]
        self.decay_u = np.exp(lam * dt)
        self.gain = spec.sigma_R * np.expm1(lam * dt) / lam
        self.decay_xi, self.innov = ou_transition_coefficients(kappa, sigma, dt)
        self.noise_dim = self.modes.size
        self.u = np.zeros(self.noise_dim)
        self.xi = np.zeros(self.noise_dim)

    def advance(self, normals: np.ndarray) -> np.ndarray:
        drive = self.innov * normals.T
        xi = _ar1(self.decay_xi, drive, self.xi)
        xi_start = _shifted(self.xi, xi)
        u = np.empty_like(xi)
        for m in range(self.noise_dim):
            u[m] = _ar1(self.decay_u[m], self.gain[m] * xi_start[m], self.u[m])
        self.u, self.xi = u[:, -1].copy(), xi[:, -1].copy()
        return self.a @ u + self.b @ xi


class JordanEngine:
    """Jordan block, solved component by component from the bottom of the chain."""

    def __init__(self, spec: SystemSpec, kappa: float, sigma: float, dt: float, probes):
        _check_probes(spec, probes)
        self.dim = spec.payload.dim
        self.prop, forcing = jordan_propagators(spec.p, self.dim, dt)
        self.forcing = spec.sigma_R * forcing
        self.decay_xi, self.innov = ou_transition_coefficients(kappa, sigma, dt)
        self.u_parts, self.xi_parts = _probe_parts(probes, self.dim)
        self.noise_dim = self.dim
        self.u = np.zeros(self.dim)
        self.xi = np.zeros(self.dim)

    def advance(self, normals: np.ndarray) -> np.ndarray:
        xi = _ar1(self.decay_xi, self.innov * normals.T, self.xi)
        xi_start = _shifted(self.xi, xi)
        drive = self.forcing @ xi_start
        u = np.empty_like(xi)
        for i in range(self.dim - 1, -1, -1):
            d = drive[i].copy()
            for j in range(i + 1, self.dim):
                d += self.prop[i, j] * _shifted(self.u[j], u[j])
            u[i] = _ar1(self.prop[i, i], d, self.u[i])
        self.u, self.xi = u[:, -1].copy(), xi[:, -1].copy()
        return self.u_parts @ u + self.xi_parts @ xi


class PointwiseEngine:
    """Multiplication operator: one scalar recursion per node."""

    def __init__(self, spec: SystemSpec, kappa: float, sigma: float, dt: float, probes):
        _check_probes(spec, probes)
        grid = spec.payload.grid
        f = drift_values(spec)
        self.decay_u = np.exp(f * dt)
        self.gain = spec.sigma_R * np.expm1(f * dt) / f
        decay, innov = ou_transition_coefficients(kappa, sigma, dt)
        self.decay_xi, self.innov = decay, innov / math.sqrt(grid.spacing)
        u_parts, xi_parts = _probe_parts(probes, grid.n_points)
        self.u_parts, self.xi_parts = grid.spacing * u_parts, grid.spacing * xi_parts
        self.noise_dim = grid.n_points
        self.u = np.zeros(grid.n_points)
        self.xi = np.zeros(grid.n_points)

    def advance(self, normals: np.ndarray) -> np.ndarray:
        xi = _ar1(self.decay_xi, self.innov * normals.T, self.xi)
        xi_start = _shifted(self.xi, xi)
        u = np.empty_like(xi)
        for i in range(self.noise_dim):
            u[i] = _ar1(self.decay_u[i], self.gain[i] * xi_start[i], self.u[i])
        self.u, self.xi = u[:, -1].copy(), xi[:, -1].copy()
        return self.u_parts @ u + self.xi_parts @ xi


class BoundaryEngine:
    """Implicit Euler boundary-noise scheme in discrete sine coordinates.

    Interior values are ``Phi w`` with ``Phi`` orthonormal; each coordinate
    obeys ``w' = r (w + g (Phi_1k s_L' + Phi_(N-1)k s_R'))`` with
    ``r = 1 / (1 - dt mu_k)`` and ``s = sigma_R xi`` the boundary data at the
    end of the step.  Coordinates with ``r <= fast_gain`` forget their past
    within a few steps; their summed contribution to each probe is applied as
    a convolution kernel truncated where ``r**m`` drops below ``1e-17``.  The
    remaining coordinates are filtered recursively.
    """

    fast_gain = 10.0 ** (-17.0 / 256.0)

    def __init__(self, spec: SystemSpec, kappa: float, sigma: float, dt: float, probes):
        _check_probes(spec, probes)
        grid = spec.payload.grid
        mu, phi = boundary_mode_basis(spec)
        gain = 1.0 / (1.0 - dt * mu)
        if not np.all(gain > 0):
            raise ValueError("implicit Euler matrix is singular")
        g = spec.sigma_R * dt / grid.spacing**2
        coupling = g * np.stack([phi[0], phi[-1]], axis=1)
        self.decay_xi, self.innov = ou_transition_coefficients(kappa, sigma, dt)
        u_parts, _ = _probe_parts(probes, grid.n_points)
        w_parts = grid.spacing * u_parts[:, 1:-1] @ phi
        self.edge_parts = grid.spacing * spec.sigma_R * u_parts[:, [0, -1]]
        slow = gain > self.fast_gain
        self.gain, self.coupling = gain[slow], coupling[slow]
        self.w_parts = w_parts[:, slow]
        fast = ~slow
        r_max = gain[fast].max(initial=0.0)
        n_taps = 1 if r_max == 0 else int(math.ceil(-17.0 / math.log10(r_max))) + 1
        powers = gain[fast][None, :] ** np.arange(1, n_taps + 1)[:, None]
        # kernel[j, side, m] = sum_k w_parts[j, k] r_k**(m + 1) coupling[k, side]
        self.kernel = np.einsum("jk,mk,ks->jsm", w_parts[:, fast], powers, coupling[fast])
        self.history = np.zeros((2, n_taps - 1))
        self.noise_dim = 2
        self.w = np.zeros(int(slow.sum()))
        self.xi = np.zeros(2)

    def advance(self, normals: np.ndarray) -> np.ndarray:
        xi = _ar1(self.decay_xi, self.innov * normals.T, self.xi)
        n = xi.shape[1]
        out = self.edge_parts @ xi
        padded = np.concatenate([self.history, xi], axis=1)
        for j in range(out.shape[0]):
            for side in range(2):
                out[j] += lfilter(self.kernel[j, side], [1.0], padded[side])[-n:]
        forcing = self.coupling @ xi
        for k in range(self.w.size):
            w = _ar1(self.gain[k], self.gain[k] * forcing[k], self.w[k])
            out += np.outer(self.w_parts[:, k], w)
            self.w[k] = w[-1]
        if self.history.shape[1]:
            self.history = padded[:, -self.history.shape[1]:].copy()
        self.xi = xi[:, -1].copy()
        return out


_FAST = {
    Variant.CABLE_PERIODIC: CableModalEngine,
    Variant.JORDAN_CHAIN: JordanEngine,
    Variant.MULTIPLICATION_OP: PointwiseEngine,
    Variant.CABLE_BOUNDARY_NOISE: BoundaryEngine,
}


def make_engine(spec: SystemSpec, kappa: float, sigma: float, dt: float, probes, kind: str = "fast"):
    """Build the engine ``kind`` (``fast`` or ``step``) for ``spec``."""
    if kind == "step":
        return StepEngine(spec, kappa, sigma, dt, probes)
    if kind == "fast":
        return _FAST[spec.variant](spec, kappa, sigma, dt, probes)
    raise ValueError(f"unknown engine {kind!r}; use 'fast' or 'step'")
