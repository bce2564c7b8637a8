"""Parameter sweeps toward p -> 0- and kappa -> 0+, slope fits and verdicts."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .engines import make_engine
from .oracle import Limit, Regime, ThetaPrediction, continuous_variance_quadrature, probe_variance
from .probes import Probe
from .stats import ProjectionSeries, RunningMoments, VarianceEstimate, aggregate_ensemble
from .systems import SystemSpec, Variant, with_p
from .grid_noise import trajectory_rng

__all__ = [
    "SweepSpec",
    "SweepResult",
    "ScalingFit",
    "Verdict",
    "run_trajectory",
    "trajectory_variances",
    "run_sweep",
    "oracle_sweep",
    "fit_loglog_slope",
    "window_in_range",
    "detect_ews",
    "dyadic_grid",
]

ProbeFactory = Callable[[SystemSpec, float], Probe]


def dyadic_grid(first: int, last: int) -> tuple[float, ...]:
    """``2**-first, ..., 2**-last`` in descending order."""
    return tuple(2.0**-k for k in range(first, last + 1))


# --- single trajectories --------------------------------------------------


def _schedule(T: float, dt: float, stride: int, burn_in_fraction: float, noise_dim: int):
    if not (T > 0 and dt > 0):
        raise ValueError(f"need T > 0 and dt > 0, got T={T}, dt={dt}")
    if not 0 <= burn_in_fraction < 1:
        raise ValueError(f"burn-in fraction must lie in [0, 1), got {burn_in_fraction}")
    n_steps = int(round(T / dt))
    stride = int(stride)
    if stride < 1 or n_steps < 2 * stride:
        raise ValueError(f"horizon of {n_steps} steps is too short for stride {stride}")
    n_records = n_steps // stride
    burn = int(burn_in_fraction * n_records)
    # blocks are whole multiples of the stride and hold about 2**21 draws
    per_block = max(1, (1 << 21) // max(noise_dim, 1) // stride) * stride
    return n_records * stride, per_block, burn


def _recorded_blocks(engine, rng, n_steps: int, per_block: int, stride: int):
    done = 0
    while done < n_steps:
        size = min(per_block, n_steps - done)
        block = engine.advance(rng.standard_normal((size, engine.noise_dim)))
        done += size
        yield block[:, stride - 1::stride]


def _resolve(probes, spec: SystemSpec, kappa: float) -> list[Probe]:
    return [p if isinstance(p, Probe) else p(spec, kappa) for p in probes]


def run_trajectory(
    spec: SystemSpec,
    kappa: float,
    T: float,
    dt: float,
    probes: Sequence[Probe],
    rng: np.random.Generator,
    *,
    sigma: float = 0.1,
    engine: str = "fast",
    burn_in_fraction: float = 0.1,
    stride: int = 1,
) -> list[ProjectionSeries]:
    """Simulate from ``u = 0, xi = 0`` and record every probe projection.

    Parameters
    ----------
    spec : SystemSpec
    kappa : float
        Red-noise rate.
    T, dt : float
        Horizon and step.
    probes : sequence of Probe
        Extended probes pair with the joint state ``(u, xi)``.
    rng : numpy.random.Generator
    sigma : float
        Red-noise intensity.
    engine : {"fast", "step"}
        Block filter engine or the reference per-step loop.
    burn_in_fraction : float
        Leading fraction of the records flagged as transient.
    stride : int
        Steps between records.

    Returns
    -------
    list of ProjectionSeries
        One per probe.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    probes = _resolve(probes, spec, kappa)
    eng = make_engine(spec, kappa, sigma, dt, probes, engine)
    n_steps, per_block, burn = _schedule(T, dt, stride, burn_in_fraction, eng.noise_dim)
    blocks = list(_recorded_blocks(eng, rng, n_steps, per_block, stride))
    values = np.concatenate(blocks, axis=1)
    return [ProjectionSeries(row, stride * dt, burn) for row in values]


def trajectory_variances(
    spec: SystemSpec,
    kappa: float,
    T: float,
    dt: float,
    probes: Sequence[Probe],
    rng: np.random.Generator,
    *,
    sigma: float = 0.1,
    engine: str = "fast",
    burn_in_fraction: float = 0.1,
    stride: int = 1,
) -> np.ndarray:
    """Post-burn-in time variance of every probe, accumulated in one streaming pass."""
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    probes = _resolve(probes, spec, kappa)
    eng = make_engine(spec, kappa, sigma, dt, probes, engine)
    n_steps, per_block, burn = _schedule(T, dt, stride, burn_in_fraction, eng.noise_dim)
    moments = RunningMoments(len(probes))
    seen = 0
    for block in _recorded_blocks(eng, rng, n_steps, per_block, stride):
        skip = min(max(burn - seen, 0), block.shape[1])
        moments.update(block[:, skip:])
        seen += block.shape[1]
    return moments.variance()


# --- sweeps ---------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    """Ensemble sweep over ``-p`` (``swept="p"``) or ``kappa``.

    ``fixed_other`` is ``kappa`` for p-sweeps and ``p`` for kappa-sweeps.
    Probes may be given as factories ``(system, kappa) -> Probe`` when they
    depend on the row parameters.
    """

    system: SystemSpec
    swept: str
    values: tuple[float, ...]
    fixed_other: float
    probes: tuple
    T: float = 1e5
    dt: float = 0.1
    n_samples: int = 10
    root_seed: int = 0
    burn_in_fraction: float = 0.1
    sigma: float = 0.1
    engine: str = "fast"
    stride: int = 1

    def __post_init__(self):
        if self.swept not in ("p", "kappa"):
            raise ValueError(f"swept must be 'p' or 'kappa', got {self.swept!r}")
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probes", tuple(self.probes))
        if not values or min(values) <= 0:
            raise ValueError("swept values must be positive")
        if any(b >= a for a, b in zip(values, values[1:])):
            raise ValueError("swept values must be strictly descending")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.swept == "p" and not self.fixed_other > 0:
            raise ValueError("a p-sweep needs kappa > 0 as fixed_other")
        if self.swept == "kappa" and not self.fixed_other < 0:
            raise ValueError("a kappa-sweep needs p < 0 as fixed_other")
        if not self.probes:
            raise ValueError("at least one probe is required")

    def row_parameters(self, row: int) -> tuple[SystemSpec, float]:
        """System and ``kappa`` of row ``row``."""
        value = self.values[row]
        if self.swept == "p":
            return with_p(self.system, -value), self.fixed_other
        return with_p(self.system, self.fixed_other), value

    @property
    def limit(self) -> Limit:
        return Limit.P_TO_ZERO if self.swept == "p" else Limit.KAPPA_TO_ZERO


@dataclass
class SweepResult:
    """Per-row ensemble estimates; ``estimates[row][probe]``."""

    swept: str
    values: tuple[float, ...]
    probe_names: tuple[str, ...]
    estimates: list[list[VarianceEstimate]]
    metadata: dict = field(default_factory=dict)

    @property
    def rows(self):
        return list(zip(self.values, self.estimates))

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(x, mean_log10, std_log10)`` of probe ``name``."""
        j = self.probe_names.index(name)
        x = np.array(self.values)
        mean = np.array([row[j].mean_log10 for row in self.estimates])
        std = np.array([row[j].std_log10 for row in self.estimates])
        return x, mean, std


def _probe_names(spec: SweepSpec) -> tuple[str, ...]:
    system, kappa = spec.row_parameters(0)
    names = tuple(p.name for p in _resolve(spec.probes, system, kappa))
    if len(set(names)) != len(names) or not all(names):
        raise ValueError(f"probe names must be unique and nonempty, got {names}")
    return names


def _task(args):
    spec, row, sample = args
    system, kappa = spec.row_parameters(row)
    rng = trajectory_rng(spec.root_seed, row, sample)
    try:
        return trajectory_variances(
            system, kappa, spec.T, spec.dt, spec.probes, rng,
            sigma=spec.sigma, engine=spec.engine,
            burn_in_fraction=spec.burn_in_fraction, stride=spec.stride,
        )
    except Exception as exc:
        raise RuntimeError(f"row {row} ({spec.swept}={spec.values[row]:g}), sample {sample}: {exc}") from exc


def _metadata(spec: SweepSpec) -> dict:
    return {
        "variant": spec.system.variant.value,
        "swept": spec.swept,
        "fixed_other": spec.fixed_other,
        "T": spec.T,
        "dt": spec.dt,
        "n_samples": spec.n_samples,
        "root_seed": spec.root_seed,
        "burn_in_fraction": spec.burn_in_fraction,
        "sigma": spec.sigma,
        "sigma_R": spec.system.sigma_R,
        "engine": spec.engine,
        "stride": spec.stride,
    }


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Run every (row, sample) trajectory and aggregate per row and probe.

    Each trajectory draws from the stream keyed by ``(root_seed, row,
    sample)``, so the output does not depend on ``workers`` or on the order
    in which trajectories finish.
    """
    names = _probe_names(spec)
    tasks = [(spec, row, sample) for row in range(len(spec.values)) for sample in range(spec.n_samples)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    table = {(row, sample): res for (_, row, sample), res in zip(tasks, results)}
    estimates = []
    for row in range(len(spec.values)):
        per_sample = np.array([table[row, s] for s in range(spec.n_samples)])
        estimates.append([aggregate_ensemble(per_sample[:, j]) for j in range(len(names))])
    return SweepResult(spec.swept, spec.values, names, estimates, _metadata(spec))


def oracle_sweep(spec: SweepSpec, method: str = "scheme") -> SweepResult:
    """Exact stationary variances on the sweep grid, in the shape of a sweep result.

    ``method`` is ``"scheme"`` (law of the simulated time-stepping scheme) or
    ``"continuous"`` (continuous-time law of the spatially discretized system),
    see ``oracle.probe_variance``.  ``"continuum"`` integrates the
    multiplication operator over the grid extent instead of summing over
    nodes; it requires all-ones probes.
    """
    names = _probe_names(spec)
    estimates = []
    for row in range(len(spec.values)):
        system, kappa = spec.row_parameters(row)
        cells = []
        for probe in _resolve(spec.probes, system, kappa):
            if method == "continuum":
                if system.variant is not Variant.MULTIPLICATION_OP or not np.all(probe.values == 1.0):
                    raise ValueError("the continuum oracle needs the multiplication operator and an all-ones probe")
                value = continuous_variance_quadrature(system.payload, system.p, kappa, spec.sigma, system.sigma_R)
            elif method in ("scheme", "continuous"):
                value = probe_variance(system, kappa, probe, spec.sigma, spec.dt, law=method)
            else:
                raise ValueError(f"unknown oracle method {method!r}")
            cells.append(aggregate_ensemble([value]))
        estimates.append(cells)
    meta = dict(_metadata(spec), oracle=method)
    return SweepResult(spec.swept, spec.values, names, estimates, meta)


# --- fits and verdicts ----------------------------------------------------


class FitModel(str, Enum):
    POWER = "power"
    LOGARITHMIC = "logarithmic"


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line through a window of sweep rows.

    ``power``: ``log10(var) = slope * log10(x) + intercept``.
    ``logarithmic``: ``var = slope * ln(x) + intercept``.
    ``r_squared`` is that of the model's own regression.
    """

    slope: float
    intercept: float
    r_squared: float
    fit_window: tuple[int, ...]
    model: FitModel


def window_in_range(x, lo: float, hi: float) -> tuple[int, ...]:
    """Indices of ``x`` inside ``[lo, hi]`` (relative slack 1e-9)."""
    x = np.asarray(x, dtype=float)
    return tuple(int(i) for i in np.flatnonzero((x >= lo * (1 - 1e-9)) & (x <= hi * (1 + 1e-9))))


def fit_loglog_slope(x, mean_log10, window=None, model: str = "power", std_log10=None, max_std: float = 0.5, n_default: int = 5) -> ScalingFit:
    """Fit the growth of the variance along a sweep column.

    Parameters
    ----------
    x : array_like
        Swept values (``-p`` or ``kappa``), positive.
    mean_log10 : array_like
        ``log10`` of the variance per row.
    window : sequence of int, optional
        Row indices to fit.  By default the ``n_default`` smallest ``x``
        among rows whose ``std_log10`` does not exceed ``max_std``.
    model : {"power", "logarithmic"}
    std_log10 : array_like, optional
        Ensemble spread per row, used to exclude unreliable rows.

    Returns
    -------
    ScalingFit
    """
    model = FitModel(model)
    x = np.asarray(x, dtype=float)
    y = np.asarray(mean_log10, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and mean_log10 differ in length")
    if window is None:
        ok = np.isfinite(y)
        if std_log10 is not None:
            ok &= np.asarray(std_log10, dtype=float) <= max_std
        candidates = np.flatnonzero(ok)
        window = candidates[np.argsort(x[candidates], kind="stable")[:n_default]]
    window = tuple(sorted(int(i) for i in window))
    if len(window) < 3:
        raise ValueError(f"a fit window needs at least 3 rows, got {len(window)}")
    xw, yw = x[list(window)], y[list(window)]
    if np.any(xw <= 0) or not np.all(np.isfinite(yw)):
        raise ValueError("fit window contains non-positive x or non-finite variances")
    if np.ptp(xw) == 0:
        raise ValueError("fit window has no spread in x")
    if model is FitModel.POWER:
        u, v = np.log10(xw), yw
    else:
        u, v = np.log(xw), 10.0**yw
    slope, intercept = np.polyfit(u, v, 1)
    resid = v - (slope * u + intercept)
    total = np.sum((v - v.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / total if total > 0 else 1.0
    return ScalingFit(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)), window, model)


class Verdict(str, Enum):
    CONFIRMED = "confirmed"
    MUTED = "muted"
    ABSENT = "absent"
    FALSE_POSITIVE_CONTEXT = "false_positive_context"


def detect_ews(fit: ScalingFit, prediction: ThetaPrediction, tolerance: float, rival: ScalingFit | None = None) -> Verdict:
    """Classify a fitted column against the predicted regime.

    * power law: slope within ``tolerance`` of the exponent is confirmed
      (``false_positive_context`` in the kappa limit, where divergence does
      not signal a destabilization);
    * logarithmic: confirmed when the logarithmic fit beats the power-law
      ``rival`` in r-squared and grows toward the limit;
    * otherwise a slope within ``tolerance`` of zero is absent and any other
      slope is muted.
    """
    if prediction.regime is Regime.POWER_LAW and fit.model is FitModel.POWER:
        if abs(fit.slope - prediction.exponent) <= tolerance:
            if prediction.limit is Limit.KAPPA_TO_ZERO:
                return Verdict.FALSE_POSITIVE_CONTEXT
            return Verdict.CONFIRMED
    if prediction.regime is Regime.LOGARITHMIC and fit.model is FitModel.LOGARITHMIC:
        beats = rival is None or fit.r_squared > rival.r_squared
        if beats and fit.slope < 0:
            return Verdict.CONFIRMED
        return Verdict.MUTED
    if fit.model is FitModel.POWER and abs(fit.slope) <= tolerance:
        return Verdict.ABSENT
    return Verdict.MUTED
