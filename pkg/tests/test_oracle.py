import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redews.oracle import (
    JordanSpec,
    Limit,
    Regime,
    adaptive_simpson,
    boundary_scheme_variance,
    cable_modal_variance,
    continuous_variance_quadrature,
    jordan_joint_covariance,
    jordan_mu,
    jordan_scheme_covariance,
    jordan_variance_formula,
    lyapunov_stationary_covariance,
    pointwise_grid_variance,
    probe_variance,
    scalar_red_noise_variance,
    theta_prediction,
)
from redews.probes import eigen_probe, extended_eigenprobe, indicator_probe, noise_probe
from redews.systems import (
    MultiplicationPayload,
    Variant,
    boundary_system,
    cable_system,
    jordan_chains,
    jordan_matrix,
    jordan_system,
    multiplication_system,
)
from redews.grid_noise import BoundaryKind, make_grid
from reference_integrals import time_integral_variance

S_GRID = make_grid(BoundaryKind.DECOUPLED_POINTWISE, -0.01, 0.01, 2001)


@pytest.mark.parametrize(
    "p, kappa, sigma, sigma_R, expected",
    [
        (-1.0, 2.0, 0.1, 1.0, 8.3333e-4),
        (-0.01, 2.0, 0.1, 1.0, 0.124378),
        (-0.5, 2.0, 0.1, 1.0, 2.0e-3),
        (-1.0, 2.0, 0.1, 0.0, 0.0),
    ],
)
def test_scalar_variance(p, kappa, sigma, sigma_R, expected):
    assert scalar_red_noise_variance(p, kappa, sigma, sigma_R) == pytest.approx(expected, rel=1e-4, abs=1e-15)


@pytest.mark.parametrize("p, kappa", [(0.0, 2.0), (0.5, 2.0), (-1.0, 0.0)])
def test_scalar_variance_domain(p, kappa):
    with pytest.raises(ValueError):
        scalar_red_noise_variance(p, kappa)


def test_lyapunov_two_by_two():
    cov = lyapunov_stationary_covariance([[-1.0, 1.0], [0.0, -2.0]], np.diag([0.0, 0.01]))
    assert cov[1, 1] == pytest.approx(2.5e-3)
    assert cov[0, 1] == pytest.approx(8.3333e-4, rel=1e-4)
    assert cov[0, 0] == pytest.approx(8.3333e-4, rel=1e-4)


def test_lyapunov_identity():
    assert np.allclose(lyapunov_stationary_covariance(-np.eye(3), np.eye(3)), np.eye(3) / 2)


def test_lyapunov_rejects_unstable():
    with pytest.raises(ValueError, match="stable"):
        lyapunov_stationary_covariance([[0.1]], [[1.0]])


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_lyapunov_residual(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((8, 8))
    a -= (np.max(np.linalg.eigvals(a).real) + rng.uniform(0.1, 2.0)) * np.eye(8)
    b = rng.standard_normal((8, 8))
    q = b @ b.T
    c = lyapunov_stationary_covariance(a, q)
    assert np.linalg.norm(a @ c + c @ a.T + q) < 1e-12 * max(1.0, np.linalg.norm(q), np.linalg.norm(c))


def test_jordan_mu_solves_resolvent():
    spec = JordanSpec(-0.3, 4, 1.7)
    _, left = jordan_chains(4)
    for k in range(1, 5):
        mu = jordan_mu(spec, k)
        assert np.allclose((jordan_matrix(-0.3).T + 1.7 * np.eye(4)) @ mu, left[k - 1])


def test_jordan_scalar_reduction():
    spec = JordanSpec(-0.7, 1, 2.0, 0.1, 1.3)
    assert jordan_variance_formula(spec, 1, 1) == pytest.approx(scalar_red_noise_variance(-0.7, 2.0, 0.1, 1.3), rel=1e-13)


def _lyapunov_form(spec, k1, k2):
    _, left = jordan_chains(spec.dim)
    cov = jordan_joint_covariance(spec)[: spec.dim, : spec.dim]
    return left[k1 - 1] @ cov @ left[k2 - 1]


def test_jordan_formula_top_rank():
    spec = JordanSpec(-0.1, 4, 2.0)
    assert jordan_variance_formula(spec, 4, 4) == pytest.approx(_lyapunov_form(spec, 4, 4), rel=1e-10)


@pytest.mark.parametrize("p", -np.logspace(-3, 0, 5))
@pytest.mark.parametrize("kappa", np.logspace(-2, math.log10(4.0), 5))
def test_jordan_formula_matches_lyapunov(p, kappa):
    spec = JordanSpec(p, 4, kappa)
    for k1 in range(1, 5):
        for k2 in range(1, 5):
            closed = jordan_variance_formula(spec, k1, k2)
            assert closed == pytest.approx(_lyapunov_form(spec, k1, k2), rel=1e-8)
            assert closed == pytest.approx(jordan_variance_formula(spec, k2, k1), rel=1e-13)


def test_jordan_top_rank_rate():
    ratios = [jordan_variance_formula(JordanSpec(p, 4, 2.0), 4, 4) * (-p) ** 7 for p in (-1e-2, -1e-3, -1e-4)]
    assert ratios[2] > 0
    assert abs(ratios[2] / ratios[1] - 1) < abs(ratios[1] / ratios[0] - 1) < 0.1


def test_jordan_pole_rejected():
    with pytest.raises(ValueError, match="pole"):
        JordanSpec(-2.0, 4, 2.0)
    with pytest.raises(ValueError, match="pole"):
        jordan_variance_formula(JordanSpec(-2.0, 4, 2.0, check_pole=False), 1, 1)
    # the Lyapunov route is regular at the pole
    cov = jordan_joint_covariance(JordanSpec(-2.0, 4, 2.0, check_pole=False))
    assert np.all(np.isfinite(cov))


def test_jordan_scheme_tends_to_continuous():
    spec = JordanSpec(-0.5, 4, 2.0)
    exact = jordan_joint_covariance(spec)
    errors = [np.abs(jordan_scheme_covariance(spec, dt) - exact).max() for dt in (0.1, 0.05, 0.025)]
    # each halving of the step at least halves the discrepancy
    assert errors[0] / errors[1] > 1.9
    assert errors[1] / errors[2] > 1.9


def test_quadrature_constant_drift():
    payload = MultiplicationPayload(S_GRID, None, (0.0,))
    value = continuous_variance_quadrature(payload, -1.0, 2.0, 1.0, 1.0)
    assert value == pytest.approx(0.02 * (1 / 2 - 2 / 3 + 1 / 4), rel=1e-10)
    assert value == pytest.approx(1.6667e-3, rel=1e-4)
    width_chain = 0.02 * scalar_red_noise_variance(-1.0, 2.0, 1.0, 1.0)
    assert value == pytest.approx(width_chain, rel=1e-10)


def test_quadrature_zero_coupling():
    payload = MultiplicationPayload(S_GRID, 2.0)
    assert continuous_variance_quadrature(payload, -0.5, 2.0, 0.1, 0.0) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_quadrature_matches_time_integral(seed):
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(0.5, 3.0)
    p = -(10 ** rng.uniform(-3, 0))
    kappa = 10 ** rng.uniform(-1, 0.7)
    payload = MultiplicationPayload(S_GRID, alpha)
    assert continuous_variance_quadrature(payload, p, kappa, 0.1, 1.0) == pytest.approx(
        time_integral_variance(payload, p, kappa, 0.1, 1.0), rel=1e-6
    )


def test_quadrature_alpha_two_slope():
    payload = MultiplicationPayload(S_GRID, 2.0)
    x = np.logspace(-10, -6, 9)
    v = [continuous_variance_quadrature(payload, -q, 2.0) for q in x]
    slope = np.polyfit(np.log10(x), np.log10(v), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.02)


def test_quadrature_rejects_resonance():
    payload = MultiplicationPayload(S_GRID, None, (-2.0,))
    with pytest.raises(ValueError):
        continuous_variance_quadrature(payload, -0.5, 2.5, 0.1, 1.0)


@pytest.mark.parametrize("func, a, b, exact", [
    (np.sin, 0.0, math.pi, 2.0),
    (np.exp, -1.0, 2.0, math.e**2 - math.exp(-1)),
    (lambda x: np.sqrt(np.abs(x)), 0.0, 1.0, 2 / 3),
])
def test_adaptive_simpson(func, a, b, exact):
    assert adaptive_simpson(func, a, b) == pytest.approx(exact, rel=1e-8)


def test_cable_modal_continuous_matches_scalar():
    spec = cable_system(-0.5)
    assert cable_modal_variance(spec, 2.0, eigen_probe(spec, 1)) == pytest.approx(2.0e-3, rel=1e-12)
    lam = -0.5 - 4 * math.pi**2
    assert cable_modal_variance(spec, 2.0, eigen_probe(spec, 2)) == pytest.approx(scalar_red_noise_variance(lam, 2.0), rel=1e-10)


def test_scheme_law_converges_in_dt():
    spec = cable_system(-0.5)
    probe = eigen_probe(spec, 2)
    exact = cable_modal_variance(spec, 2.0, probe)
    err = [abs(probe_variance(spec, 2.0, probe, dt=dt, law="scheme") / exact - 1) for dt in (0.1, 0.01, 0.001)]
    assert err[0] > err[1] > err[2]
    assert err[2] < 2e-3


def test_extended_probe_continuous_variance_matches_lyapunov():
    spec = cable_system(-0.5, 8)
    probe = extended_eigenprobe(spec, 1, 2.0)
    cov = lyapunov_stationary_covariance([[-0.5, 1.0], [0.0, -2.0]], np.diag([0.0, 0.01]))
    row = np.array([1.0, 1 / 1.5])
    assert cable_modal_variance(spec, 2.0, probe) == pytest.approx(row @ cov @ row, rel=1e-12)


def test_noise_probe_variance_is_ou():
    spec = cable_system(-0.5, 16)
    probe = noise_probe(eigen_probe(spec, 1).values)
    assert cable_modal_variance(spec, 2.0, probe) == pytest.approx(2.5e-3, rel=1e-12)


def test_pointwise_grid_variance_sum_of_nodes():
    spec = multiplication_system(-0.5, n_points=21)
    probe = indicator_probe(spec.payload.grid, -0.01, 0.01)
    f = spec.payload.base_drift(spec.payload.grid.nodes) - 0.5
    expected = 0.001 * sum(scalar_red_noise_variance(v, 2.0) for v in f)
    assert pointwise_grid_variance(spec, 2.0, probe) == pytest.approx(expected, rel=1e-12)


def test_jordan_probe_variance_routes():
    spec = jordan_system(-0.5)
    for k in range(1, 5):
        probe = eigen_probe(spec, k)
        formula = jordan_variance_formula(JordanSpec(-0.5, 4, 2.0), k, k)
        assert probe_variance(spec, 2.0, probe, law="continuous") == pytest.approx(formula, rel=1e-10)


def test_boundary_scheme_variance_grows_toward_limit():
    probes = [indicator_probe(boundary_system(-0.5).payload.grid, 0.0, 1 / 3)]
    values = [boundary_scheme_variance(boundary_system(p), 2.0, probes)[0] for p in (-1.0, -0.25, -0.0625)]
    assert values[0] < values[1] < values[2]


@pytest.mark.parametrize("p", [-1.0, -0.1, -0.01])
def test_oracle_variances_increase_toward_limits(p):
    spec = cable_system(p, 16)
    probe = eigen_probe(spec, 1)
    kappas = [4.0, 1.0, 0.25, 0.0625]
    values = [cable_modal_variance(spec, k, probe) for k in kappas]
    assert all(b > a for a, b in zip(values, values[1:]))


@pytest.mark.parametrize(
    "variant, limit, kwargs, regime, exponent",
    [
        (Variant.JORDAN_CHAIN, Limit.P_TO_ZERO, {"rank": 3}, Regime.POWER_LAW, -5.0),
        (Variant.MULTIPLICATION_OP, Limit.P_TO_ZERO, {"alpha": 1.0}, Regime.LOGARITHMIC, None),
        (Variant.CABLE_PERIODIC, Limit.KAPPA_TO_ZERO, {}, Regime.POWER_LAW, -1.0),
        (Variant.CABLE_PERIODIC, Limit.P_TO_ZERO, {"leading": False}, Regime.BOUNDED, None),
        (Variant.MULTIPLICATION_OP, Limit.P_TO_ZERO, {"alpha": 2.0}, Regime.POWER_LAW, -0.5),
        (Variant.MULTIPLICATION_OP, Limit.P_TO_ZERO, {"alpha": 2**-0.5}, Regime.BOUNDED, None),
        (Variant.CABLE_BOUNDARY_NOISE, Limit.P_TO_ZERO, {}, Regime.POWER_LAW, -1.0),
    ],
)
def test_theta_prediction(variant, limit, kwargs, regime, exponent):
    pred = theta_prediction(variant, limit, **kwargs)
    assert pred.regime is regime
    if exponent is None:
        assert pred.exponent is None
    else:
        assert pred.exponent == pytest.approx(exponent)


def test_theta_prediction_needs_alpha():
    with pytest.raises(ValueError):
        theta_prediction(Variant.MULTIPLICATION_OP, Limit.P_TO_ZERO)
