"""Ergodic time statistics of projection series and ensemble aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ProjectionSeries",
    "VarianceEstimate",
    "RunningMoments",
    "time_variance",
    "time_covariance",
    "lag_autocorrelation",
    "aggregate_ensemble",
]


@dataclass
class ProjectionSeries:
    """Projection ``<u(t), v>`` recorded every ``dt_effective`` time units.

    The first ``burn_in_count`` records are transient and ignored by the
    estimators.
    """

    values: np.ndarray
    dt_effective: float
    burn_in_count: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("series values must be one-dimensional")
        if not 0 <= self.burn_in_count < max(len(self.values), 1):
            raise ValueError(
                f"burn-in {self.burn_in_count} must be below the series length {len(self.values)}"
            )

    @property
    def stationary(self) -> np.ndarray:
        return self.values[self.burn_in_count:]


@dataclass
class VarianceEstimate:
    """Ensemble of per-sample variances summarized on a log10 scale.

    ``degenerate`` marks ensembles containing a non-positive variance; their
    log statistics are NaN.
    """

    variances: list[float]
    mean_log10: float
    std_log10: float
    n_samples: int
    degenerate: bool = False


def time_variance(series: ProjectionSeries) -> float:
    """Sample variance (denominator ``n - 1``) after burn-in."""
    x = series.stationary
    if x.size < 2:
        raise ValueError(f"need at least 2 post-burn-in values, got {x.size}")
    return float(np.var(x, ddof=1))


def time_covariance(a: ProjectionSeries, b: ProjectionSeries) -> float:
    """Sample covariance of two series recorded on the same clock."""
    if len(a.values) != len(b.values) or a.burn_in_count != b.burn_in_count:
        raise ValueError("series differ in length or burn-in")
    x, y = a.stationary, b.stationary
    if x.size < 2:
        raise ValueError(f"need at least 2 post-burn-in values, got {x.size}")
    return float(np.dot(x - x.mean(), y - y.mean()) / (x.size - 1))


def lag_autocorrelation(series: ProjectionSeries, tau: float) -> float:
    """Pearson correlation between the series and itself shifted by ``tau``.

    Parameters
    ----------
    series : ProjectionSeries
    tau : float
        Lag in time units; must be a whole number of records.

    Returns
    -------
    float
    """
    steps = tau / series.dt_effective
    lag = int(round(steps))
    if tau < 0 or not math.isclose(steps, lag, rel_tol=1e-9, abs_tol=1e-9):
        raise ValueError(f"lag {tau} is not a nonnegative multiple of the record spacing {series.dt_effective}")
    x = series.stationary
    if lag >= x.size - 1:
        raise ValueError(f"lag of {lag} records leaves too few of the {x.size} usable values")
    if lag == 0:
        return 1.0
    return float(np.corrcoef(x[:-lag], x[lag:])[0, 1])


def aggregate_ensemble(variances) -> VarianceEstimate:
    """Mean and standard deviation (``ddof=1``) of ``log10`` variances."""
    v = [float(x) for x in variances]
    if not v:
        raise ValueError("cannot aggregate an empty ensemble")
    if min(v) <= 0:
        return VarianceEstimate(v, math.nan, math.nan, len(v), degenerate=True)
    logs = np.log10(v)
    std = float(np.std(logs, ddof=1)) if len(v) > 1 else 0.0
    return VarianceEstimate(v, float(logs.mean()), std, len(v))


@dataclass
class RunningMoments:
    """Streaming mean and variance for several channels at once.

    Chunks are merged with the pairwise update of Chan, Golub and LeVeque, so
    the result does not depend on how the stream is split beyond round-off.
    """

    n_channels: int
    count: int = 0
    mean: np.ndarray = field(default=None)
    m2: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.n_channels)
        if self.m2 is None:
            self.m2 = np.zeros(self.n_channels)

    def update(self, block) -> None:
        """Add samples; ``block`` has shape ``(n_channels, n)``."""
        block = np.asarray(block, dtype=float)
        n = block.shape[1]
        if n == 0:
            return
        block_mean = block.mean(axis=1)
        block_m2 = ((block - block_mean[:, None]) ** 2).sum(axis=1)
        total = self.count + n
        delta = block_mean - self.mean
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + block_m2 + delta**2 * (self.count * n / total)
        self.count = total

    def variance(self) -> np.ndarray:
        if self.count < 2:
            raise ValueError(f"need at least 2 samples, got {self.count}")
        return self.m2 / (self.count - 1)
