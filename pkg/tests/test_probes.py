import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redews.grid_noise import BoundaryKind, coordinate_grid, make_grid
from redews.probes import (
    Probe,
    ProbeKind,
    eigen_probe,
    extended_eigenprobe,
    fourier_probe,
    indicator_probe,
    noise_probe,
    project,
    project_joint,
)
from redews.systems import boundary_system, cable_system, jordan_chains, jordan_system, multiplication_system

PERIODIC = make_grid(BoundaryKind.PERIODIC, 0.0, 1.0, 200)


def test_unit_field_against_full_indicator():
    probe = indicator_probe(PERIODIC, 0.0, 1.0)
    assert project(np.ones(200), probe, PERIODIC) == pytest.approx(1.0, rel=1e-14)


def test_sine_cosine_orthogonal():
    x = PERIODIC.nodes
    probe = Probe(ProbeKind.GRID_FUNCTION, np.cos(2 * math.pi * x))
    assert abs(project(np.sin(2 * math.pi * x), probe, PERIODIC)) < 1e-12


def test_coordinate_dot_product():
    probe = Probe(ProbeKind.COORDINATE_VECTOR, [0, 1, -1, 0])
    assert project([0, 0, 1, 0], probe, coordinate_grid(4)) == -1.0


def test_length_mismatch_rejected():
    probe = Probe(ProbeKind.COORDINATE_VECTOR, [0, 1, -1, 0])
    with pytest.raises(ValueError):
        project([0, 0, 1], probe, coordinate_grid(4))


def test_first_third_indicator():
    grid = make_grid(BoundaryKind.DIRICHLET_ENDPOINTS, 0.0, 1.0, 201)
    probe = indicator_probe(grid, 0.0, 1 / 3)
    x = grid.nodes
    assert np.array_equal(probe.values, (x < 1 / 3).astype(float))


def test_full_support_indicator_is_all_ones():
    grid = make_grid(BoundaryKind.DECOUPLED_POINTWISE, -0.01, 0.01, 2001)
    assert np.all(indicator_probe(grid, -0.01, 0.01).values == 1.0)


@pytest.mark.parametrize("a, b", [(1.5, 2.0), (-1.0, -0.5), (0.5, 0.2)])
def test_indicator_outside_rejected(a, b):
    with pytest.raises(ValueError):
        indicator_probe(make_grid(BoundaryKind.DIRICHLET_ENDPOINTS, 0.0, 1.0, 11), a, b)


@pytest.mark.parametrize("n", [201, 301, 37])
def test_partition_indicators_sum_to_domain(n):
    grid = make_grid(BoundaryKind.DIRICHLET_ENDPOINTS, 0.0, 1.0, n)
    parts = [indicator_probe(grid, a, b).values for a, b in [(0, 1 / 3), (1 / 3, 2 / 3), (2 / 3, 1)]]
    assert np.array_equal(sum(parts), indicator_probe(grid, 0.0, 1.0).values)
    assert np.all(sum(parts) == 1.0)


def test_extended_probe_weight():
    probe = extended_eigenprobe(cable_system(-0.5), 1, 2.0)
    ratio = probe.noise_values / probe.values
    assert np.allclose(ratio, 1 / 1.5)
    assert ratio[0] == pytest.approx(0.6667, abs=1e-4)


def test_extended_probe_without_coupling():
    probe = extended_eigenprobe(cable_system(-0.5, sigma_R=0.0), 1, 2.0)
    assert np.all(probe.noise_values == 0.0)


def test_noise_probe_eigenvalue():
    # (u, xi) -> (xi) is left invariant by the joint drift up to the factor -kappa
    kappa, p = 2.0, -0.5
    drift = np.array([[p, 1.0], [0.0, -kappa]])
    probe = noise_probe([1.0])
    row = np.concatenate([probe.values, probe.noise_values])
    assert np.allclose(drift.T @ row, -kappa * row)


def test_extended_probe_is_left_eigenvector_of_joint_drift():
    kappa, p = 2.0, -0.5
    drift = np.array([[p, 1.0], [0.0, -kappa]])
    probe = extended_eigenprobe(cable_system(p, 4), 1, kappa)
    row = np.array([probe.values[0], probe.noise_values[0]])
    assert np.allclose(drift.T @ row, p * row)


@pytest.mark.parametrize("spec", [multiplication_system(-0.5, n_points=11), boundary_system(-0.5, 11)])
def test_extended_probe_rejected(spec):
    with pytest.raises(ValueError):
        extended_eigenprobe(spec, 1, 2.0)


def test_extended_probe_rejects_generalized_vectors():
    with pytest.raises(ValueError, match="rank 1"):
        extended_eigenprobe(jordan_system(-0.5), 2, 2.0)


def test_jordan_probe_biorthogonality():
    right, _ = jordan_chains(4)
    spec = jordan_system(-0.5)
    grid = coordinate_grid(4)
    for k in range(1, 5):
        for j in range(1, 5):
            value = project(right[k - 1], eigen_probe(spec, j), grid)
            assert value == (1.0 if j == 4 - k + 1 else 0.0)


def test_project_joint_adds_noise_part():
    probe = extended_eigenprobe(cable_system(-0.5, 8), 1, 2.0)
    grid = cable_system(-0.5, 8).payload.grid
    u, xi = np.ones(8), np.full(8, 3.0)
    expected = project(u, probe, grid) + 3.0 * project(np.ones(8), Probe(ProbeKind.GRID_FUNCTION, probe.noise_values), grid)
    assert project_joint(u, xi, probe, grid) == pytest.approx(expected)


def test_riemann_product_converges():
    errors = []
    for n in (16, 32, 64):
        grid = make_grid(BoundaryKind.DIRICHLET_ENDPOINTS, 0.0, 1.0, n + 1)
        x = grid.nodes
        f = np.sin(2 * math.pi * x) + x**2
        exact = 0.5 + 0.2 - 2 * (1 / (2 * math.pi))  # int (sin 2 pi x + x^2)^2 over [0, 1]
        errors.append(abs(project(f, Probe(ProbeKind.GRID_FUNCTION, f), grid) - exact))
    assert errors[0] > errors[1] > errors[2]


def test_periodic_riemann_product_sine():
    for n in (16, 32):
        grid = make_grid(BoundaryKind.PERIODIC, 0.0, 1.0, n)
        s = np.sin(2 * math.pi * grid.nodes)
        assert project(s, Probe(ProbeKind.GRID_FUNCTION, s), grid) == pytest.approx(0.5, abs=1e-13)


@given(
    a=st.floats(-3, 3), b=st.floats(-3, 3),
    seed=st.integers(0, 2**32 - 1),
)
@settings(max_examples=50)
def test_project_is_bilinear(a, b, seed):
    rng = np.random.default_rng(seed)
    f, g, h, k = rng.standard_normal((4, 50))
    grid = make_grid(BoundaryKind.PERIODIC, 0.0, 1.0, 50)
    P = lambda v: Probe(ProbeKind.GRID_FUNCTION, v)  # noqa: E731
    left = project(a * f + b * g, P(h), grid)
    assert left == pytest.approx(a * project(f, P(h), grid) + b * project(g, P(h), grid), abs=1e-10)
    right = project(f, P(a * h + b * k), grid)
    assert right == pytest.approx(a * project(f, P(h), grid) + b * project(f, P(k), grid), abs=1e-10)


def test_fourier_probe_ordering():
    grid = make_grid(BoundaryKind.PERIODIC, 0.0, 1.0, 40)
    x = grid.nodes
    assert np.allclose(fourier_probe(grid, 1).values, 1.0)
    assert np.allclose(fourier_probe(grid, 2).values, math.sqrt(2) * np.cos(2 * math.pi * x))
    assert np.allclose(fourier_probe(grid, 3).values, math.sqrt(2) * np.sin(2 * math.pi * x))


def test_probe_kind_checks():
    with pytest.raises(ValueError):
        Probe(ProbeKind.EXTENDED, [1.0, 0.0])
    with pytest.raises(ValueError):
        Probe(ProbeKind.GRID_FUNCTION, [1.0], noise_values=[1.0])
