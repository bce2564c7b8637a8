"""Configuration-driven experiment runner and command line interface.

Subcommands::

    redews run <config>        run a configured sweep and write its tables
    redews preset <name>       run a built-in preset (``redews preset --list``)
    redews oracle <system> ... print exact stationary variances
    redews validate <config>   parse and validate a configuration only

Outputs of ``run``/``preset`` (in the output directory): ``sweep.csv``,
``oracle.csv``, ``fits.csv``, ``verdicts.csv``, ``manifest.json`` and a
``plot_sweep.py`` script that draws the sweep with matplotlib.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, parse_config_text
from .oracle import (
    Regime,
    ThetaPrediction,
    continuous_variance_quadrature,
    probe_variance,
    scalar_red_noise_variance,
    theta_prediction,
)
from .probes import ProbeKind
from .sweep import (
    SweepResult,
    SweepSpec,
    detect_ews,
    fit_loglog_slope,
    oracle_sweep,
    run_sweep,
    window_in_range,
)
from .systems import Variant, system_eigenstructure

__all__ = [
    "PRESETS",
    "ExperimentConfig",
    "load_config",
    "main",
    "preset_config",
    "read_table",
    "run_experiment",
    "sweep_rows",
    "write_table",
]

THREADS_ENV = "REDEWS_THREADS"


# --- tables ---------------------------------------------------------------


def _cell(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_table(path, header, rows, fmt: str = "csv") -> Path:
    """Write a rectangular table as CSV or JSON lines.

    Floats use 17 significant digits so that reading the file back recovers
    them exactly.  Files are UTF-8 with LF line endings.
    """
    header = [str(h) for h in header]
    rows = [list(r) for r in rows]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"row {i} has {len(row)} cells, header has {len(header)}")
    path = Path(path)
    buf = io.StringIO(newline="")
    if fmt == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(c) for c in row])
    elif fmt == "jsonl":
        buf.write(json.dumps({"columns": header}) + "\n")
        for row in rows:
            record = {h: _parse_cell(_cell(c)) for h, c in zip(header, row)}
            buf.write(json.dumps(record, allow_nan=True) + "\n")
    else:
        raise ValueError(f"unknown table format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def read_table(path, fmt: str | None = None) -> tuple[list[str], list[list]]:
    """Inverse of ``write_table``: ``(header, rows)`` with numbers parsed."""
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    with open(path, encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            reader = csv.reader(fh)
            header = next(reader)
            return header, [[_parse_cell(c) for c in row] for row in reader]
        lines = [json.loads(line) for line in fh if line.strip()]
    header = lines[0]["columns"]
    return header, [[rec[h] for h in header] for rec in lines[1:]]


def sweep_rows(result: SweepResult) -> tuple[list[str], list[list]]:
    """Header and rows of a sweep table: swept value, then mean and std of each probe."""
    cols = [[row[j] for row in result.estimates] for j in range(len(result.probe_names))]
    return _column_table(result.values, result.probe_names, cols)


# --- presets --------------------------------------------------------------

_KAPPA_GRID = "dyadic 0 8"
_P_GRID = "dyadic 0 8"
_ALPHAS = "2, 1.4142135623730951, 1, 0.70710678118654757"

_PRESET_BODIES = {
    "fig1a": f"""
[system]
variant = cable_periodic
n_points = 200
[noise]
kappa = 2
[sweep]
swept = p
values = {_P_GRID}
tolerance = 0.15
[probes]
list = e_1, e_2, e_3
""",
    "fig1b": """
[system]
variant = jordan_chain
[noise]
kappa = 2
[sweep]
swept = p
values = dyadic 0 4
fit_window = 0.0625, 1
tolerance = 0.2, 0.3, 0.5, 0.7
[probes]
list = e_1, e_2, e_3, e_4
""",
    "fig1c": f"""
[system]
variant = multiplication_op
left = -0.01
right = 0.01
n_points = 2001
alpha = {_ALPHAS}
[noise]
kappa = 2
[sweep]
swept = p
values = {_P_GRID}
tolerance = 0.1
[probes]
g = indicator -0.01 0.01
[oracle]
method = continuum
values = decades 0 10
fit_window = 1e-10, 1e-6
""",
    "fig1d": f"""
[system]
variant = cable_boundary_noise
n_points = 201
[noise]
kappa = 2
[sweep]
swept = p
values = {_P_GRID}
tolerance = 0.2
[probes]
S1 = indicator 0 0.3333333333333333
S2 = indicator 0.3333333333333333 0.6666666666666666
S3 = indicator 0.6666666666666666 1
""",
    "fig2a": f"""
[system]
variant = cable_periodic
n_points = 200
p = -0.5
[sweep]
swept = kappa
values = {_KAPPA_GRID}
tolerance = 0.15
[probes]
list = e_1, e_2, e_3
""",
    "fig2b": f"""
[system]
variant = jordan_chain
p = -0.5
[sweep]
swept = kappa
values = {_KAPPA_GRID}
tolerance = 0.15
[probes]
list = e_1, e_2, e_3, e_4
""",
    "fig2c": f"""
[system]
variant = multiplication_op
p = -0.5
left = -0.01
right = 0.01
n_points = 2001
alpha = {_ALPHAS}
[sweep]
swept = kappa
values = {_KAPPA_GRID}
tolerance = 0.15
[probes]
g = indicator -0.01 0.01
""",
    "fig2d": f"""
[system]
variant = cable_boundary_noise
p = -0.5
n_points = 201
[sweep]
swept = kappa
values = {_KAPPA_GRID}
tolerance = 0.2
[probes]
S1 = indicator 0 0.3333333333333333
S2 = indicator 0.3333333333333333 0.6666666666666666
S3 = indicator 0.6666666666666666 1
""",
}


def _desk(body: str) -> str:
    """Desk scale: ``T = 1e4`` and a coarse grid for the multiplication operator."""
    body = body.replace("[sweep]\n", "[sweep]\nT = 10000\n", 1)
    return body.replace("n_points = 2001", "n_points = 21")


PRESETS = {}
for _name, _body in _PRESET_BODIES.items():
    PRESETS[_name] = f"[experiment]\nname = {_name}\n" + _body.lstrip("\n")
    PRESETS[f"{_name}-desk"] = f"[experiment]\nname = {_name}-desk\n" + _desk(_body.lstrip("\n"))


def preset_config(name: str) -> ExperimentConfig:
    """Parsed configuration of a built-in preset."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return parse_config_text(PRESETS[name])


# --- experiment -----------------------------------------------------------


def _prediction(cfg: ExperimentConfig, system, probe_spec, limit) -> ThetaPrediction:
    variant = system.variant
    if probe_spec.kind == "noise":
        if limit.value == "p_to_zero":
            return ThetaPrediction(Regime.BOUNDED, limit)
        return ThetaPrediction(Regime.POWER_LAW, limit, -1.0)
    if variant is Variant.JORDAN_CHAIN:
        rank = probe_spec.index if probe_spec.kind in ("eigen", "extended") else system.payload.dim
        return theta_prediction(variant, limit, rank=rank)
    if variant is Variant.MULTIPLICATION_OP:
        return theta_prediction(variant, limit, alpha=system.payload.alpha)
    leading = True
    if variant is Variant.CABLE_PERIODIC:
        kappa = cfg.kappa if cfg.swept == "p" else cfg.values[0]
        probe = probe_spec(system, kappa)
        lead = system_eigenstructure(system, 1)[0].left
        overlap = abs(float(np.dot(probe.values, lead))) * system.payload.grid.spacing
        leading = overlap > 1e-9 * max(1.0, float(np.abs(probe.values).max()))
    return theta_prediction(variant, limit, leading=leading)


def _fit_column(x, mean, std, window, prediction):
    """Fit of the predicted model plus, for logarithmic regimes, the power-law rival."""
    power = fit_loglog_slope(x, mean, window, "power", std_log10=std)
    if prediction.regime is Regime.LOGARITHMIC:
        log = fit_loglog_slope(x, mean, power.fit_window, "logarithmic")
        return [power, log], log, power
    return [power], power, None


def _window(values, bounds):
    if bounds is None:
        return None
    window = window_in_range(values, *bounds)
    if len(window) < 3:
        raise ConfigError(f"fit window {bounds} selects {len(window)} rows; at least 3 are needed")
    return window


def _oracle_spec(cfg: ExperimentConfig, spec: SweepSpec) -> SweepSpec:
    if not cfg.oracle_values:
        return spec
    return dataclasses.replace(spec, values=cfg.oracle_values)


def _plot_script(names, swept) -> str:
    label = "-p" if swept == "p" else "kappa"
    return f'''"""Draw sweep.csv (and oracle.csv when present) on log-log axes."""
import csv
import sys

import matplotlib.pyplot as plt

NAMES = {list(names)!r}


def load(path):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return rows


rows = load("sweep.csv")
x = [float(r["swept_value"]) for r in rows]
fig, ax = plt.subplots()
for name in NAMES:
    y = [10 ** float(r[name + "_mean_log10"]) for r in rows]
    ax.loglog(x, y, "o-", label=name)
try:
    orows = load("oracle.csv")
    ox = [float(r["swept_value"]) for r in orows]
    for name in NAMES:
        ax.loglog(ox, [10 ** float(r[name + "_mean_log10"]) for r in orows], "k:", lw=0.8)
except FileNotFoundError:
    pass
ax.invert_xaxis()
ax.set_xlabel("{label}")
ax.set_ylabel("variance")
ax.legend()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "sweep.png", dpi=150)
'''


def _manifest(cfg: ExperimentConfig) -> dict:
    fields = {}
    for f in dataclasses.fields(cfg):
        if f.name == "source_text":
            continue
        value = getattr(cfg, f.name)
        if f.name == "probes":
            value = [dataclasses.asdict(p) for p in value]
        elif isinstance(value, Variant):
            value = value.value
        elif isinstance(value, tuple):
            value = list(value)
        fields[f.name] = value
    return {"config_text": cfg.source_text, "config": fields, "root_seed": cfg.root_seed, "version": __version__}


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int | None = None, log=None) -> dict:
    """Run the configured sweep, oracle, fits and verdicts and write every table.

    Returns a summary ``{"status": 0, "directory": ..., "files": [...],
    "fits": [...], "verdicts": [...]}``.  Outputs depend only on the
    configuration (seed included), not on ``workers``.
    """
    start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.workers
    say = log or (lambda msg: None)

    names, mc_cols, oracle_cols = [], [], []
    fit_rows, verdict_rows = [], []
    mc_values = oracle_values = None
    for suffix, template in cfg.systems():
        spec = SweepSpec(
            template, cfg.swept, cfg.values, cfg.fixed_other, cfg.probes,
            T=cfg.T, dt=cfg.dt, n_samples=cfg.n_samples, root_seed=cfg.root_seed,
            burn_in_fraction=cfg.burn_in_fraction, sigma=cfg.sigma,
            engine=cfg.engine, stride=cfg.stride,
        )
        say(f"sweep {cfg.name}{suffix}: {len(spec.values)} rows x {spec.n_samples} samples")
        mc = run_sweep(spec, workers=workers)
        oracle = oracle_sweep(_oracle_spec(cfg, spec), method=cfg.oracle_method)
        mc_values, oracle_values = mc.values, oracle.values
        for j, probe_spec in enumerate(cfg.probes):
            column = probe_spec.name + suffix
            names.append(column)
            mc_cols.append([row[j] for row in mc.estimates])
            oracle_cols.append([row[j] for row in oracle.estimates])
            prediction = _prediction(cfg, spec.system, probe_spec, spec.limit)
            tolerance = cfg.tolerance_for(j)
            for source, result, bounds in (("mc", mc, cfg.fit_window), ("oracle", oracle, cfg.oracle_fit_window or cfg.fit_window)):
                x, mean, std = result.column(probe_spec.name)
                fits, primary, rival = _fit_column(x, mean, std, _window(x, bounds), prediction)
                for fit in fits:
                    fit_rows.append([
                        source, column, fit.model.value, fit.slope, fit.intercept, fit.r_squared,
                        x[min(fit.fit_window)], x[max(fit.fit_window)], len(fit.fit_window),
                    ])
                verdict = detect_ews(primary, prediction, tolerance, rival)
                expected = prediction.exponent if prediction.exponent is not None else math.nan
                verdict_rows.append([
                    source, column, prediction.limit.value, prediction.regime.value, expected,
                    primary.model.value, primary.slope, tolerance, verdict.value,
                ])

    tables = {
        "sweep": _column_table(mc_values, names, mc_cols),
        "oracle": _column_table(oracle_values, names, oracle_cols),
        "fits": (["source", "probe", "model", "slope", "intercept", "r_squared", "window_lo", "window_hi", "window_rows"], fit_rows),
        "verdicts": (["source", "probe", "limit", "regime", "predicted_exponent", "model", "slope", "tolerance", "verdict"], verdict_rows),
    }
    files = []
    for fmt in cfg.formats:
        for stem, (header, rows) in tables.items():
            files.append(write_table(out / f"{stem}.{fmt}", header, rows, fmt))
    script = out / "plot_sweep.py"
    script.write_text(_plot_script(names, cfg.swept), encoding="utf-8")
    files.append(script)
    manifest = _manifest(cfg)
    manifest["outputs"] = sorted(p.name for p in files) + ["manifest.json"]
    manifest["wall_time_s"] = time.perf_counter() - start
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files.append(path)
    return {"status": 0, "directory": str(out), "files": [str(f) for f in files], "fits": fit_rows, "verdicts": verdict_rows}


def _column_table(values, names, cols):
    header = ["swept_value"]
    for name in names:
        header += [f"{name}_mean_log10", f"{name}_std_log10"]
    rows = []
    for i, value in enumerate(values):
        row = [value]
        for col in cols:
            row += [col[i].mean_log10, col[i].std_log10]
        rows.append(row)
    return header, rows


# --- oracle subcommand ----------------------------------------------------

_ORACLE_KEYS = {"p", "kappa", "sigma", "sigma_R", "n_points", "alpha", "left", "right", "dt", "law", "probe"}


def _oracle_command(system: str, params: list[str]) -> list[str]:
    values = {}
    for item in params:
        if "=" not in item:
            raise ConfigError(f"oracle parameters are key=value, got {item!r}")
        key, value = item.split("=", 1)
        if key not in _ORACLE_KEYS:
            raise ConfigError(f"unknown oracle parameter {key!r}; expected one of {sorted(_ORACLE_KEYS)}")
        values[key] = value
    p = float(values.get("p", -0.5))
    kappa = float(values.get("kappa", 2.0))
    sigma = float(values.get("sigma", 0.1))
    sigma_r = float(values.get("sigma_R", 1.0))
    if system == "scalar":
        return [f"variance = {scalar_red_noise_variance(p, kappa, sigma, sigma_r):.17g}"]
    lines = [f"[system]\nvariant = {system}\np = {p}\nsigma_R = {sigma_r}"]
    for key in ("n_points", "alpha", "left", "right"):
        if key in values:
            lines.append(f"{key} = {values[key]}")
    lines.append(f"[noise]\nkappa = {kappa}\nsigma = {sigma}")
    if "probe" in values:
        lines.append("[probes]\nlist = " + values["probe"].replace(";", ","))
    cfg = parse_config_text("\n".join(lines) + "\n")
    law = values.get("law", "continuous")
    dt = float(values.get("dt", 0.1))
    out = []
    for suffix, spec in cfg.systems():
        for probe_spec in cfg.probes:
            probe = probe_spec(spec, kappa)
            if law == "continuum":
                if spec.variant is not Variant.MULTIPLICATION_OP or probe.kind is ProbeKind.EXTENDED:
                    raise ConfigError("law=continuum applies to multiplication_op indicator probes")
                value = continuous_variance_quadrature(spec.payload, p, kappa, sigma, sigma_r)
            else:
                value = probe_variance(spec, kappa, probe, sigma, dt, law=law)
            out.append(f"{probe_spec.name}{suffix} = {value:.17g}")
    return out


# --- entry point ----------------------------------------------------------


def _thread_count(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            count = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if count < 1:
            raise ConfigError(f"{THREADS_ENV} must be at least 1")
        return count
    return None


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg.root_seed = args.seed
    if args.samples is not None:
        if args.samples < 1:
            raise ConfigError("--samples must be at least 1")
        cfg.n_samples = args.samples
    if args.horizon is not None:
        if not args.horizon >= 4 * cfg.dt:
            raise ConfigError("--horizon must be at least 4 dt")
        cfg.T = args.horizon
    overrides = {k: getattr(args, k) for k in ("seed", "samples", "horizon") if getattr(args, k) is not None}
    if overrides:
        cfg.source_text += "\n# command line overrides: " + json.dumps(overrides, sort_keys=True) + "\n"
    return cfg


def _summary(result: dict) -> str:
    lines = [f"wrote {len(result['files'])} files to {result['directory']}"]
    for source, probe, limit, regime, expected, model, slope, tol, verdict in result["verdicts"]:
        lines.append(f"  {source:6s} {probe:24s} {model:11s} slope {slope:+.3f} (predicted {regime}, {expected:+.3f}) -> {verdict}")
    return "\n".join(lines)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="redews", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--samples", type=int, help="samples per swept value")
        p.add_argument("--horizon", type=float, help="time horizon T")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help=f"worker processes (default: ${THREADS_ENV} or the config)")

    run = sub.add_parser("run", help="run a configuration file")
    run.add_argument("config")
    run_flags(run)
    preset = sub.add_parser("preset", help="run a built-in preset")
    preset.add_argument("name", nargs="?")
    preset.add_argument("--list", action="store_true", help="list presets and exit")
    run_flags(preset)
    oracle = sub.add_parser("oracle", help="print exact stationary variances")
    oracle.add_argument("system", help="scalar or a system variant")
    oracle.add_argument("params", nargs="*", help="key=value (p, kappa, sigma, sigma_R, probe, law, dt, ...)")
    validate = sub.add_parser("validate", help="validate a configuration file")
    validate.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.name} ({cfg.variant.value}, {cfg.swept}-sweep, {len(cfg.values)} values, {len(cfg.probes)} probes)")
            return 0
        if args.command == "oracle":
            print("\n".join(_oracle_command(args.system, args.params)))
            return 0
        if args.command == "preset":
            if args.list or not args.name:
                print("\n".join(sorted(PRESETS)))
                return 0
            cfg = preset_config(args.name)
        else:
            cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        workers = _thread_count(args.threads)
        if workers is not None and workers < 1:
            raise ConfigError("--threads must be at least 1")
        result = run_experiment(cfg, args.out, workers, log=lambda m: print(m, file=sys.stderr))
        print(_summary(result))
        return result["status"]
    except (ConfigError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
