"""Exact stationary variances and predicted divergence rates.

These values are the ground truth for the Monte Carlo estimators.  Every
finite-dimensional case also has a brute-force route through the Lyapunov
equation, which the closed forms are tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .grid_noise import ou_transition_coefficients
from .probes import Probe, ProbeKind
from .systems import (
    MultiplicationPayload,
    SystemSpec,
    Variant,
    boundary_mode_basis,
    cable_mode_basis,
    drift_values,
    jordan_chains,
    jordan_matrix,
    jordan_propagators,
)

__all__ = [
    "JordanSpec",
    "Regime",
    "Limit",
    "ThetaPrediction",
    "scalar_red_noise_variance",
    "lyapunov_stationary_covariance",
    "jordan_mu",
    "jordan_variance_formula",
    "jordan_joint_covariance",
    "jordan_scheme_covariance",
    "adaptive_simpson",
    "continuous_variance_quadrature",
    "pointwise_grid_variance",
    "cable_modal_variance",
    "boundary_scheme_variance",
    "probe_variance",
    "theta_prediction",
]


def scalar_red_noise_variance(p: float, kappa: float, sigma: float = 0.1, sigma_R: float = 1.0) -> float:
    """Stationary variance of ``du = p u dt + sigma_R xi dt`` with red noise ``xi``.

    Returns ``sigma**2 sigma_R**2 / (2 kappa (-p) (kappa - p))``.
    """
    if not (p < 0 < kappa):
        raise ValueError(f"need p < 0 < kappa, got p={p}, kappa={kappa}")
    return sigma**2 * sigma_R**2 / (2.0 * kappa * (-p) * (kappa - p))


def lyapunov_stationary_covariance(drift, noise_cov) -> np.ndarray:
    """Solve ``A C + C A^T + N = 0`` through its Kronecker linearization.

    Parameters
    ----------
    drift : (n, n) array_like
        Stable matrix ``A``.
    noise_cov : (n, n) array_like
        Symmetric positive semidefinite ``N``.

    Returns
    -------
    ndarray
        Symmetric stationary covariance ``C``.
    """
    a = np.asarray(drift, dtype=float)
    q = np.asarray(noise_cov, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or q.shape != (n, n):
        raise ValueError("drift and noise covariance must be square and of equal size")
    if np.max(np.linalg.eigvals(a).real) >= 0:
        raise ValueError("drift is not stable")
    eye = np.eye(n)
    system = np.kron(eye, a) + np.kron(a, eye)
    c = np.linalg.solve(system, -q.reshape(-1)).reshape(n, n)
    return 0.5 * (c + c.T)


# --- Jordan block ---------------------------------------------------------


@dataclass(frozen=True)
class JordanSpec:
    """Single Jordan block of eigenvalue ``p`` with identity noise covariance.

    ``p = -kappa`` is a pole of the closed form and rejected unless
    ``check_pole`` is off (the Lyapunov routes are regular there).
    """

    p: float
    dim: int = 4
    kappa: float = 2.0
    sigma: float = 0.1
    sigma_R: float = 1.0
    check_pole: bool = True

    def __post_init__(self):
        if not (self.p < 0 < self.kappa):
            raise ValueError(f"need p < 0 < kappa, got p={self.p}, kappa={self.kappa}")
        if self.check_pole and math.isclose(self.p, -self.kappa, rel_tol=1e-12):
            raise ValueError("p = -kappa is a resolvent pole")
        if self.dim < 1:
            raise ValueError("block size must be positive")


def _jordan_mu_exact(spec: JordanSpec, k: int) -> list[Fraction]:
    _, left = jordan_chains(spec.dim)
    base = Fraction(-spec.p) - Fraction(spec.kappa)
    mu = [Fraction(0)] * spec.dim
    for j in range(1, k + 1):
        weight = base ** (j - k - 1)
        mu = [m - weight * int(v) for m, v in zip(mu, left[j - 1])]
    return mu


def jordan_mu(spec: JordanSpec, k: int) -> np.ndarray:
    """``(J^T + kappa)^{-1} e*_k`` written along the left chain.

    Equals ``-sum_{j=1..k} (-p - kappa)**(j - k - 1) e*_j``.
    """
    return np.array([float(m) for m in _jordan_mu_exact(spec, k)])


def jordan_variance_formula(spec: JordanSpec, k1: int, k2: int) -> float:
    """Stationary covariance of ``u`` along ``e*_k1`` and ``e*_k2`` in closed form.

    Sums the binomial double sum, the two single sums with the noise decay
    rate, and the ``1 / (2 kappa)`` term, with dot products of the
    coordinate vectors ``jordan_mu``.  The sum is evaluated in exact rational
    arithmetic: near ``p = -kappa`` its terms are large and cancel.
    """
    for k in (k1, k2):
        if not 1 <= k <= spec.dim:
            raise ValueError(f"chain rank {k} outside 1..{spec.dim}")
    if spec.p == -spec.kappa:
        raise ValueError("p = -kappa is a resolvent pole")
    p, kappa = Fraction(spec.p), Fraction(spec.kappa)
    mu = {k: _jordan_mu_exact(spec, k) for k in range(1, max(k1, k2) + 1)}

    def dot(a, b):
        return sum(x * y for x, y in zip(mu[a], mu[b]))

    double = Fraction(0)
    for j1 in range(1, k1 + 1):
        for j2 in range(1, k2 + 1):
            m1, m2 = k1 - j1, k2 - j2
            double += math.comb(m1 + m2, m1) * (-2 * p) ** (-m1 - m2 - 1) * dot(j1, j2)
    single2 = sum((kappa - p) ** (-(k2 - j2) - 1) * dot(k1, j2) for j2 in range(1, k2 + 1))
    single1 = sum((kappa - p) ** (-(k1 - j1) - 1) * dot(j1, k2) for j1 in range(1, k1 + 1))
    last = dot(k1, k2) / (2 * kappa)
    scale = Fraction(spec.sigma) ** 2 * Fraction(spec.sigma_R) ** 2
    return float(scale * (double - single2 - single1 + last))


def jordan_joint_covariance(spec: JordanSpec) -> np.ndarray:
    """Stationary covariance of the joint state ``(u, xi)`` of size ``2 dim``."""
    n = spec.dim
    drift = np.block([
        [jordan_matrix(spec.p, n), spec.sigma_R * np.eye(n)],
        [np.zeros((n, n)), -spec.kappa * np.eye(n)],
    ])
    noise = np.zeros((2 * n, 2 * n))
    noise[n:, n:] = spec.sigma**2 * np.eye(n)
    return lyapunov_stationary_covariance(drift, noise)


# --- continuous spectrum --------------------------------------------------


def adaptive_simpson(func, a: float, b: float, abs_tol: float = 1e-10, rel_tol: float = 1e-8, max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with Richardson correction.

    A composite pass over 64 panels fixes the tolerance
    ``max(abs_tol, rel_tol * |estimate|)``, which is then shared among
    subintervals in proportion to their length.
    """
    if not b > a:
        raise ValueError("need b > a")
    x = np.linspace(a, b, 129)
    y = np.asarray(func(x), dtype=float)
    coarse = (b - a) / 384.0 * (y[0:-1:2] + 4.0 * y[1::2] + y[2::2]).sum()
    tol = max(abs_tol, rel_tol * abs(coarse))

    def simpson(lo, hi, f_lo, f_mid, f_hi):
        return (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)

    total = 0.0
    stack = []
    for i in range(64):
        lo, mid, hi = x[2 * i], x[2 * i + 1], x[2 * i + 2]
        stack.append((lo, hi, y[2 * i], y[2 * i + 1], y[2 * i + 2], simpson(lo, hi, y[2 * i], y[2 * i + 1], y[2 * i + 2]), 0))
    while stack:
        lo, hi, f_lo, f_mid, f_hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        f_q1, f_q3 = func(np.array([0.5 * (lo + mid), 0.5 * (mid + hi)]))
        left = simpson(lo, mid, f_lo, f_q1, f_mid)
        right = simpson(mid, hi, f_mid, f_q3, f_hi)
        err = left + right - whole
        local_tol = tol * (hi - lo) / (b - a)
        if abs(err) <= 15.0 * local_tol or depth >= max_depth:
            total += left + right + err / 15.0
        else:
            stack.append((lo, mid, f_lo, f_q1, f_mid, left, depth + 1))
            stack.append((mid, hi, f_mid, f_q3, f_hi, right, depth + 1))
    return float(total)


def continuous_variance_quadrature(
    payload: MultiplicationPayload,
    p: float,
    kappa: float,
    sigma: float = 0.1,
    sigma_R: float = 1.0,
    S: tuple[float, float] | None = None,
) -> float:
    """Stationary variance along the indicator of ``S`` for the multiplication operator.

    Integrates ``(-1/(2f) + 2/(f - kappa) + 1/(2 kappa)) / (f + kappa)**2``
    over ``S`` with ``f = f(x, p)``, times ``sigma**2 sigma_R**2``.

    Parameters
    ----------
    payload : MultiplicationPayload
        Supplies the drift ``f(x, 0)``; its grid is only used for the
        default ``S``.
    p, kappa, sigma, sigma_R : float
    S : (float, float), optional
        Integration interval, the grid extent by default.

    Returns
    -------
    float
    """
    if not (p < 0 < kappa):
        raise ValueError(f"need p < 0 < kappa, got p={p}, kappa={kappa}")
    lo, hi = (payload.grid.left, payload.grid.right) if S is None else S
    if not hi > lo:
        raise ValueError("empty interval S")
    probe_x = np.linspace(lo, hi, 4001)
    f_probe = payload.base_drift(probe_x) + p
    if not np.all(f_probe < 0):
        raise ValueError("f(x, p) must be negative on S")
    shifted = f_probe + kappa
    if np.any(np.abs(shifted) < 1e-9 * kappa) or shifted.min() * shifted.max() < 0:
        raise ValueError("f(x, p) + kappa vanishes on S")

    def integrand(x):
        f = payload.base_drift(x) + p
        return (-0.5 / f + 2.0 / (f - kappa) + 0.5 / kappa) / (f + kappa) ** 2

    # split at the origin, where |x|**alpha may have a cusp
    pieces = [(lo, hi)] if not lo < 0 < hi else [(lo, 0.0), (0.0, hi)]
    total = sum(adaptive_simpson(integrand, a, b) for a, b in pieces)
    return sigma**2 * sigma_R**2 * total


# --- per-system variances along probes ------------------------------------


def _pair_moments(lam, kappa: float, sigma: float, sigma_R: float, dt: float | None):
    """Stationary moments of ``(u, xi)`` for ``du = (lam u + sigma_R xi) dt``.

    ``dt=None`` gives the continuous-time law; otherwise the law of the
    frozen-noise recursion ``u' = E u + G xi``, ``xi' = c xi + noise`` with
    exact coefficients for step ``dt``.
    """
    lam = np.asarray(lam, dtype=float)
    c_xx = sigma**2 / (2.0 * kappa) * np.ones_like(lam)
    if dt is None:
        c_ux = sigma_R * c_xx / (kappa - lam)
        c_uu = sigma_R * c_ux / (-lam)
        return c_uu, c_ux, c_xx
    e = np.exp(lam * dt)
    g = sigma_R * np.expm1(lam * dt) / lam
    c = math.exp(-kappa * dt)
    c_ux = g * c * c_xx / (1.0 - e * c)
    c_uu = (2.0 * e * g * c_ux + g * g * c_xx) / (1.0 - e * e)
    return c_uu, c_ux, c_xx


def _noise_part(probe: Probe) -> np.ndarray:
    if probe.kind is ProbeKind.EXTENDED:
        return probe.noise_values
    return np.zeros_like(probe.values)


def pointwise_grid_variance(spec: SystemSpec, kappa: float, probe: Probe, sigma: float = 0.1, dt: float | None = None) -> float:
    """Exact variance of the spatially discretized multiplication system along ``probe``.

    Nodes are independent scalar processes, so the Riemann inner product has
    variance ``sum_i dx probe_i**2 V(f_i)`` with ``V`` the scalar red-noise
    variance; extended probes add the node noise and cross terms.  Pass
    ``dt`` for the law of the time-stepping scheme.
    """
    grid = spec.payload.grid
    c_uu, c_ux, c_xx = _pair_moments(drift_values(spec), kappa, sigma, spec.sigma_R, dt)
    a, b = probe.values, _noise_part(probe)
    return float(grid.spacing * np.sum(a * a * c_uu + 2.0 * a * b * c_ux + b * b * c_xx))


def cable_modal_variance(spec: SystemSpec, kappa: float, probe: Probe, sigma: float = 0.1, dt: float | None = None) -> float:
    """Exact variance of the spectrally discretized cable equation along ``probe``.

    Pass ``dt`` for the law of the time-stepping scheme.
    """
    grid = spec.payload.grid
    lap, basis = cable_mode_basis(grid)
    a = grid.spacing * basis @ probe.values
    b = grid.spacing * basis @ _noise_part(probe)
    c_uu, c_ux, c_xx = _pair_moments(spec.p + lap, kappa, sigma, spec.sigma_R, dt)
    return float(np.sum(a * a * c_uu + 2.0 * a * b * c_ux + b * b * c_xx))


def jordan_scheme_covariance(spec: JordanSpec, dt: float) -> np.ndarray:
    """Stationary covariance of the joint frozen-noise Jordan recursion."""
    n = spec.dim
    prop, forcing = jordan_propagators(spec.p, n, dt)
    decay, innov = ou_transition_coefficients(spec.kappa, spec.sigma, dt)
    trans = np.block([
        [prop, spec.sigma_R * forcing],
        [np.zeros((n, n)), decay * np.eye(n)],
    ])
    noise = np.zeros((2 * n, 2 * n))
    noise[n:, n:] = innov**2 * np.eye(n)
    cov = solve_discrete_lyapunov(trans, noise)
    return 0.5 * (cov + cov.T)


def boundary_scheme_variance(spec: SystemSpec, kappa: float, probes, sigma: float = 0.1, dt: float = 0.1) -> np.ndarray:
    """Exact stationary variances of the implicit Euler boundary-noise scheme.

    The interior solution is written in the discrete sine basis; together
    with the two boundary noises it forms a linear recursion whose stationary
    covariance solves a discrete Lyapunov equation.  This is the law of the
    simulated scheme itself, including its time-discretization error.
    """
    grid = spec.payload.grid
    mu, phi = boundary_mode_basis(spec)
    n = mu.size
    gain = 1.0 / (1.0 - dt * mu)
    g = spec.sigma_R * dt / grid.spacing**2
    decay, innov = ou_transition_coefficients(kappa, sigma, dt)
    # state (w, xi_L, xi_R); the boundary data of the step is the new noise
    couple = np.stack([gain * g * phi[0], gain * g * phi[-1]], axis=1)
    trans = np.zeros((n + 2, n + 2))
    trans[:n, :n] = np.diag(gain)
    trans[:n, n:] = decay * couple
    trans[n:, n:] = decay * np.eye(2)
    shock = np.zeros((n + 2, 2))
    shock[:n] = couple
    shock[n:] = np.eye(2)
    cov = solve_discrete_lyapunov(trans, innov**2 * shock @ shock.T)
    out = []
    for probe in probes:
        v = probe.values
        row = np.empty(n + 2)
        row[:n] = grid.spacing * phi.T @ v[1:-1]
        row[n:] = grid.spacing * spec.sigma_R * v[[0, -1]]
        out.append(float(row @ cov @ row))
    return np.array(out)


def probe_variance(
    spec: SystemSpec,
    kappa: float,
    probe: Probe,
    sigma: float = 0.1,
    dt: float = 0.1,
    law: str = "continuous",
) -> float:
    """Exact stationary variance of ``spec`` along ``probe``.

    ``law="continuous"`` is the continuous-time law of the spatially
    discretized system; ``law="scheme"`` that of the time-stepping scheme
    with step ``dt``.  The boundary-noise system only has the scheme law.
    """
    if law not in ("continuous", "scheme"):
        raise ValueError(f"unknown law {law!r}")
    step = dt if law == "scheme" else None
    variant = spec.variant
    if variant is Variant.CABLE_PERIODIC:
        return cable_modal_variance(spec, kappa, probe, sigma, step)
    if variant is Variant.JORDAN_CHAIN:
        jspec = JordanSpec(spec.p, spec.payload.dim, kappa, sigma, spec.sigma_R, check_pole=False)
        cov = jordan_joint_covariance(jspec) if step is None else jordan_scheme_covariance(jspec, step)
        row = np.concatenate([probe.values, _noise_part(probe)])
        return float(row @ cov @ row)
    if variant is Variant.MULTIPLICATION_OP:
        return pointwise_grid_variance(spec, kappa, probe, sigma, step)
    return float(boundary_scheme_variance(spec, kappa, [probe], sigma, dt)[0])


# --- predicted rates ------------------------------------------------------


class Regime(str, Enum):
    POWER_LAW = "power_law"
    LOGARITHMIC = "logarithmic"
    BOUNDED = "bounded"


class Limit(str, Enum):
    P_TO_ZERO = "p_to_zero"
    KAPPA_TO_ZERO = "kappa_to_zero"


@dataclass(frozen=True)
class ThetaPrediction:
    """Predicted growth of the variance as the limit is approached.

    ``exponent`` is the power of ``-p`` (or ``kappa``) for power laws and
    ``None`` otherwise.
    """

    regime: Regime
    limit: Limit
    exponent: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "limit", Limit(self.limit))
        if self.regime is Regime.POWER_LAW and self.exponent is None:
            raise ValueError("power laws need an exponent")


def theta_prediction(variant, limit, *, rank: int = 1, alpha: float | None = None, leading: bool = True) -> ThetaPrediction:
    """Predicted scaling regime of the stationary variance.

    Parameters
    ----------
    variant : Variant or str
    limit : Limit or str
    rank : int
        Chain rank ``k`` of the dual probe ``e*_k`` for the Jordan system.
    alpha : float
        Exponent of ``-|x|**alpha`` for the multiplication operator.
    leading : bool
        Whether the probe has a nonzero component along the leading mode
        (cable equation only).
    """
    variant, limit = Variant(variant), Limit(limit)
    if limit is Limit.KAPPA_TO_ZERO:
        return ThetaPrediction(Regime.POWER_LAW, limit, -1.0)
    if variant is Variant.CABLE_PERIODIC:
        if leading:
            return ThetaPrediction(Regime.POWER_LAW, limit, -1.0)
        return ThetaPrediction(Regime.BOUNDED, limit)
    if variant is Variant.JORDAN_CHAIN:
        if rank < 1:
            raise ValueError("chain rank starts at 1")
        return ThetaPrediction(Regime.POWER_LAW, limit, -(2.0 * rank - 1.0))
    if variant is Variant.MULTIPLICATION_OP:
        if alpha is None or not alpha > 0:
            raise ValueError("the multiplication operator needs alpha > 0")
        if math.isclose(alpha, 1.0, rel_tol=1e-12):
            return ThetaPrediction(Regime.LOGARITHMIC, limit)
        if alpha > 1:
            return ThetaPrediction(Regime.POWER_LAW, limit, -1.0 + 1.0 / alpha)
        return ThetaPrediction(Regime.BOUNDED, limit)
    return ThetaPrediction(Regime.POWER_LAW, limit, -1.0)
