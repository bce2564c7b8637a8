"""Probing functions and the discrete inner product of the state space."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grid_noise import Grid1D
from .systems import SystemSpec, Variant, system_eigenstructure

__all__ = [
    "ProbeKind",
    "Probe",
    "project",
    "project_joint",
    "indicator_probe",
    "eigen_probe",
    "extended_eigenprobe",
    "noise_probe",
    "fourier_probe",
]


class ProbeKind(str, Enum):
    GRID_FUNCTION = "grid_function"
    COORDINATE_VECTOR = "coordinate_vector"
    EXTENDED = "extended"


@dataclass(frozen=True, eq=False)
class Probe:
    """Observation direction.

    ``values`` is the part paired with the solution ``u``; extended probes
    add ``noise_values`` paired with the red noise on the same grid.
    """

    kind: ProbeKind
    values: np.ndarray
    noise_values: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        kind = ProbeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValueError("probe values must be a vector")
        if kind is ProbeKind.EXTENDED:
            if self.noise_values is None:
                raise ValueError("extended probes need a noise part")
            noise = np.asarray(self.noise_values, dtype=float)
            if noise.shape != values.shape:
                raise ValueError("solution and noise parts of a probe differ in length")
            object.__setattr__(self, "noise_values", noise)
        elif self.noise_values is not None:
            raise ValueError("only extended probes carry a noise part")


def _weight(probe: Probe, grid: Grid1D) -> float:
    if probe.kind is ProbeKind.COORDINATE_VECTOR or not grid.is_spatial:
        return 1.0
    return grid.spacing


def project(field, probe: Probe, grid: Grid1D) -> float:
    """Inner product of ``field`` with the solution part of ``probe``.

    Grid functions use the Riemann sum ``sum_i field_i probe_i dx``;
    coordinate vectors use the plain dot product.
    """
    field = np.asarray(field, dtype=float)
    if field.shape != probe.values.shape:
        raise ValueError(f"field length {field.shape} does not match probe length {probe.values.shape}")
    if field.shape != (grid.n_points,):
        raise ValueError(f"field length {field.shape[0]} does not match grid ({grid.n_points} nodes)")
    return float(np.dot(field, probe.values) * _weight(probe, grid))


def project_joint(u, xi, probe: Probe, grid: Grid1D) -> float:
    """Pair a joint state ``(u, xi)`` with ``probe``; the noise part only counts for extended probes."""
    total = project(u, probe, grid)
    if probe.kind is ProbeKind.EXTENDED:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != probe.noise_values.shape:
            raise ValueError("noise length does not match probe")
        total += float(np.dot(xi, probe.noise_values) * _weight(probe, grid))
    return total


def indicator_probe(grid: Grid1D, a: float, b: float, name: str = "") -> Probe:
    """Indicator of ``[a, b)``; the right end is closed when it is the grid's last node.

    The half-open rule makes the indicators of a partition sum to the
    indicator of the whole domain.
    """
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    x = grid.nodes
    tol = 1e-9 * grid.spacing
    if a < grid.left - tol or b > grid.right + tol:
        raise ValueError(f"[{a}, {b}] is not inside the grid extent [{grid.left}, {grid.right}]")
    inside = (x >= a - tol) & (x < b - tol)
    if abs(b - x[-1]) <= tol:
        inside[-1] = True
    if not inside.any():
        raise ValueError(f"[{a}, {b}) contains no grid node")
    return Probe(ProbeKind.GRID_FUNCTION, inside.astype(float), name=name or f"1[{a:g},{b:g})")


def _grid_kind(spec: SystemSpec) -> ProbeKind:
    if spec.variant is Variant.JORDAN_CHAIN:
        return ProbeKind.COORDINATE_VECTOR
    return ProbeKind.GRID_FUNCTION


def eigen_probe(spec: SystemSpec, index: int, name: str = "") -> Probe:
    """Left (dual) eigenvector number ``index`` (1-based), u-part only.

    For the Jordan chain ``index`` is the rank ``k`` of ``e*_k``.
    """
    pairs = system_eigenstructure(spec)
    if not 1 <= index <= len(pairs):
        raise ValueError(f"mode index {index} out of range 1..{len(pairs)}")
    label = name or (f"e*{index}" if spec.variant is Variant.JORDAN_CHAIN else f"e{index}")
    return Probe(_grid_kind(spec), pairs[index - 1].left, name=label)


def extended_eigenprobe(spec: SystemSpec, index: int, kappa: float, name: str = "") -> Probe:
    """Eigenvector of the adjoint joint drift for a true (rank 1) eigenvalue.

    The solution part is the left eigenvector ``e*`` and the noise part is
    ``sigma_R / (lambda + kappa) e*``.  The projection of the stationary joint
    process on this probe has autocorrelation ``exp(lambda tau)``.
    """
    if spec.variant is Variant.MULTIPLICATION_OP:
        raise ValueError("the multiplication operator has continuous spectrum")
    if spec.variant is Variant.CABLE_BOUNDARY_NOISE:
        raise ValueError("boundary noise lives on the boundary; no extended probe on the state grid")
    pairs = system_eigenstructure(spec)
    if not 1 <= index <= len(pairs):
        raise ValueError(f"mode index {index} out of range 1..{len(pairs)}")
    pair = pairs[index - 1]
    if pair.rank != 1:
        raise ValueError("extended probes exist only for true eigenvectors (rank 1)")
    if math.isclose(pair.value + kappa, 0.0, abs_tol=1e-12 * kappa):
        raise ValueError("lambda + kappa vanishes")
    noise = spec.sigma_R / (pair.value + kappa) * pair.left
    return Probe(ProbeKind.EXTENDED, pair.left, noise, name=name or f"ext{index}")


def noise_probe(values, name: str = "noise") -> Probe:
    """Probe with zero solution part; its projection has autocorrelation ``exp(-kappa tau)``."""
    values = np.asarray(values, dtype=float)
    return Probe(ProbeKind.EXTENDED, np.zeros_like(values), values, name=name)


def fourier_probe(grid: Grid1D, index: int, name: str = "") -> Probe:
    """Orthonormal real Fourier mode on a periodic unit grid.

    ``index`` 1 is the constant, then ``sqrt(2) cos(2 pi m x)`` at ``2m`` and
    ``sqrt(2) sin(2 pi m x)`` at ``2m + 1``.
    """
    if index < 1:
        raise ValueError("Fourier index starts at 1")
    x = (grid.nodes - grid.left) / (grid.right - grid.left)
    scale = 1.0 / math.sqrt(grid.right - grid.left)
    if index == 1:
        values = np.full(grid.n_points, scale)
    else:
        m, odd = divmod(index, 2)
        trig = np.sin if odd else np.cos
        values = math.sqrt(2.0) * scale * trig(2.0 * math.pi * m * x)
    return Probe(ProbeKind.GRID_FUNCTION, values, name=name or f"e{index}")
