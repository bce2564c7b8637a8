import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redews.config import ProbeSpec
from redews.grid_noise import trajectory_rng
from redews.oracle import Limit, Regime, ThetaPrediction, scalar_red_noise_variance, theta_prediction
from redews.probes import eigen_probe, extended_eigenprobe, noise_probe
from redews.stats import time_variance
from redews.sweep import (
    FitModel,
    ScalingFit,
    SweepSpec,
    Verdict,
    detect_ews,
    dyadic_grid,
    fit_loglog_slope,
    oracle_sweep,
    run_sweep,
    run_trajectory,
    window_in_range,
)
from redews.systems import cable_system, jordan_system


def _cable_probes():
    return tuple(ProbeSpec(f"e_{i}", "eigen", i) for i in (1, 2, 3))


def test_dyadic_grid_descends():
    g = dyadic_grid(0, 8)
    assert g[0] == 1.0 and g[-1] == 2.0**-8 and len(g) == 9
    assert all(a > b for a, b in zip(g, g[1:]))


# --- trajectories ---------------------------------------------------------


@pytest.mark.parametrize("engine", ["fast", "step"])
def test_silent_noise_gives_zero_series(engine):
    spec = cable_system(-0.5, 16, sigma_R=0.0)
    probes = [eigen_probe(spec, 1), extended_eigenprobe(spec, 1, 2.0)]
    series = run_trajectory(spec, 2.0, 50.0, 0.1, probes, np.random.default_rng(0), sigma=0.0, engine=engine)
    assert all(np.all(s.values == 0.0) for s in series)


def test_cable_leading_mode_variance():
    spec = cable_system(-0.5)
    probes = [eigen_probe(spec, i) for i in (1, 2, 3)]
    series = run_trajectory(spec, 2.0, 1e4, 0.1, probes, trajectory_rng(0, 0, 0))
    target = scalar_red_noise_variance(-0.5, 2.0, 0.1, 1.0)
    assert target == pytest.approx(2.0e-3)
    assert time_variance(series[0]) == pytest.approx(target, rel=0.15)


def test_trajectory_deterministic():
    spec = jordan_system(-0.3)
    probes = [eigen_probe(spec, k) for k in (1, 4)]
    a = run_trajectory(spec, 2.0, 500.0, 0.1, probes, trajectory_rng(7, 1, 2))
    b = run_trajectory(spec, 2.0, 500.0, 0.1, probes, trajectory_rng(7, 1, 2))
    for x, y in zip(a, b):
        assert x.values.tobytes() == y.values.tobytes()


def test_trajectory_records_and_burn_in():
    spec = jordan_system(-0.5)
    (s,) = run_trajectory(spec, 2.0, 100.0, 0.1, [eigen_probe(spec, 1)], np.random.default_rng(0), stride=2)
    assert s.values.size == 500
    assert s.dt_effective == pytest.approx(0.2)
    assert s.burn_in_count == 50


def test_trajectory_rejects_nonpositive_kappa():
    spec = jordan_system(-0.5)
    with pytest.raises(ValueError, match="kappa"):
        run_trajectory(spec, 0.0, 10.0, 0.1, [eigen_probe(spec, 1)], np.random.default_rng(0))


# --- sweeps ---------------------------------------------------------------


def _cable_sweep(**kw):
    base = dict(system=cable_system(-0.5), swept="p", values=dyadic_grid(0, 8), fixed_other=2.0,
                probes=_cable_probes(), T=1e4, dt=0.1, n_samples=3, root_seed=11)
    base.update(kw)
    return SweepSpec(**base)


@pytest.mark.parametrize("bad", [
    dict(values=(0.5, 1.0)),
    dict(values=(1.0, -0.5)),
    dict(n_samples=0),
    dict(swept="sigma"),
])
def test_sweep_spec_validation(bad):
    with pytest.raises(ValueError):
        _cable_sweep(**bad)


def test_cable_p_sweep_columns():
    result = run_sweep(_cable_sweep())
    _, e1, _ = result.column("e_1")
    assert np.all(np.diff(e1) > 0)
    for name in ("e_2", "e_3"):
        _, col, _ = result.column(name)
        assert 10.0 ** (col.max() - col.min()) < 1.2


def test_kappa_sweep_all_columns_grow():
    spec = _cable_sweep(swept="kappa", values=dyadic_grid(1, 6), fixed_other=-0.5)
    result = run_sweep(spec)
    for name in result.probe_names:
        _, col, std = result.column(name)
        assert col[-1] > col[0] + 1.0
        assert np.all(np.diff(col) > -2 * (std[1:] + std[:-1]))


def test_single_sample_has_zero_spread():
    result = run_sweep(_cable_sweep(n_samples=1, values=(1.0, 0.5, 0.25)))
    for name in result.probe_names:
        assert np.all(result.column(name)[2] == 0.0)


def test_rows_follow_spec_order_and_metadata():
    spec = _cable_sweep(values=(1.0, 0.5, 0.25), n_samples=2)
    result = run_sweep(spec)
    assert result.values == spec.values
    assert len(result.rows) == 3
    assert all(len(cells) == 3 for _, cells in result.rows)
    assert result.metadata["root_seed"] == 11 and result.metadata["T"] == 1e4


def test_workers_do_not_change_results():
    spec = _cable_sweep(values=(1.0, 0.5, 0.25), n_samples=3, T=2e3)
    a, b = run_sweep(spec, workers=1), run_sweep(spec, workers=2)
    for name in a.probe_names:
        for x, y in zip(a.column(name), b.column(name)):
            assert x.tobytes() == y.tobytes()


def test_failures_carry_row_context():
    bad = lambda s, k: noise_probe(np.ones(3), name="bad")  # wrong length for a 4-state system
    spec = SweepSpec(jordan_system(-0.5), "p", (1.0, 0.5), 2.0, (bad,), T=10.0)
    with pytest.raises(RuntimeError, match="row 0"):
        run_sweep(spec)


def test_cable_tracks_mode_oracle():
    spec = _cable_sweep(T=2e4, n_samples=5)
    mc, orc = run_sweep(spec), oracle_sweep(spec)
    for name in mc.probe_names:
        _, m, s = mc.column(name)
        _, o, _ = orc.column(name)
        inside = np.abs(m - o) <= 2 * s + 1e-12
        assert inside.sum() >= len(m) - 1


def test_cable_slopes_robust_to_dt():
    slopes = []
    for dt in (0.1, 0.05):
        result = run_sweep(_cable_sweep(T=1e4, dt=dt, n_samples=4, root_seed=3))
        x, m, s = result.column("e_1")
        slopes.append(fit_loglog_slope(x, m, std_log10=s).slope)
    assert abs(slopes[0] - slopes[1]) < 0.05


def test_oracle_sweep_rejects_unknown_method():
    with pytest.raises(ValueError):
        oracle_sweep(_cable_sweep(values=(1.0, 0.5)), method="guess")


# --- fits -----------------------------------------------------------------


@pytest.mark.parametrize("c, power", [(3e-3, -1.0), (1.0, -0.5), (2.0, -3.0)])
def test_fit_exact_power(c, power):
    x = np.array(dyadic_grid(0, 8))
    fit = fit_loglog_slope(x, np.log10(c * x**power))
    assert fit.slope == pytest.approx(power, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.model is FitModel.POWER


def test_fit_constant():
    x = np.array(dyadic_grid(0, 8))
    fit = fit_loglog_slope(x, np.full(x.size, -2.0))
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert 0.0 <= fit.r_squared <= 1.0


def test_fit_default_window_smallest_values_and_spread_cut():
    x = np.array(dyadic_grid(0, 8))
    std = np.zeros(x.size)
    std[-1] = 0.9
    fit = fit_loglog_slope(x, -np.log10(x), std_log10=std)
    assert fit.fit_window == (3, 4, 5, 6, 7)


def test_fit_logarithmic_model():
    x = np.logspace(-10, -6, 9)
    var = 0.4 - 0.02 * np.log(x)
    log_fit = fit_loglog_slope(x, np.log10(var), window=range(9), model="logarithmic")
    assert log_fit.slope == pytest.approx(-0.02, rel=1e-9)
    pow_fit = fit_loglog_slope(x, np.log10(var), window=range(9))
    assert log_fit.r_squared > pow_fit.r_squared


@pytest.mark.parametrize("window", [(0, 1), (2, 2, 2)])
def test_fit_degenerate_window(window):
    x = np.array([1.0, 0.5, 0.25])
    with pytest.raises(ValueError):
        fit_loglog_slope(x, np.zeros(3), window=window)


@settings(max_examples=40, deadline=None)
@given(st.floats(-7.5, 1.0), st.floats(-5.0, 5.0), st.integers(3, 12))
def test_fit_recovers_any_power(power, offset, n):
    x = np.logspace(0, -4, n)
    fit = fit_loglog_slope(x, offset + power * np.log10(x), window=range(n))
    assert fit.slope == pytest.approx(power, abs=1e-9)
    assert fit.intercept == pytest.approx(offset, abs=1e-8)


def test_window_in_range():
    x = dyadic_grid(0, 8)
    assert window_in_range(x, 2**-4, 1.0) == (0, 1, 2, 3, 4)


# --- verdicts -------------------------------------------------------------


def _fit(slope, model=FitModel.POWER, r2=0.99):
    return ScalingFit(slope, 0.0, r2, (0, 1, 2), model)


def test_verdict_confirmed():
    pred = ThetaPrediction(Regime.POWER_LAW, Limit.P_TO_ZERO, -1.0)
    assert detect_ews(_fit(-0.98), pred, 0.15) is Verdict.CONFIRMED


def test_verdict_absent_for_bounded_regime():
    pred = theta_prediction("multiplication_op", "p_to_zero", alpha=2**-0.5)
    assert pred.regime is Regime.BOUNDED
    assert detect_ews(_fit(-0.05), pred, 0.15) is Verdict.ABSENT


def test_verdict_false_positive_in_kappa_limit():
    pred = theta_prediction("cable_periodic", "kappa_to_zero")
    assert detect_ews(_fit(-1.02), pred, 0.15) is Verdict.FALSE_POSITIVE_CONTEXT


def test_verdict_muted_outside_band():
    pred = ThetaPrediction(Regime.POWER_LAW, Limit.P_TO_ZERO, -1.0)
    assert detect_ews(_fit(-0.6), pred, 0.15) is Verdict.MUTED


def test_verdict_logarithmic():
    pred = theta_prediction("multiplication_op", "p_to_zero", alpha=1.0)
    log_fit = _fit(-0.02, FitModel.LOGARITHMIC, 0.999)
    assert detect_ews(log_fit, pred, 0.1, rival=_fit(-0.07, r2=0.98)) is Verdict.CONFIRMED
    assert detect_ews(log_fit, pred, 0.1, rival=_fit(-0.07, r2=0.9999)) is Verdict.MUTED
