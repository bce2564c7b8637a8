"""Experiment configuration: a small sectioned ``key = value`` format.

Grammar::

    file     := { line }
    line     := blank | comment | section | entry
    comment  := ("#" | ";") text
    section  := "[" name "]"
    entry    := key "=" value          (inside a section)

Probe entries are ``name = eigen k | extended k | noise k | indicator a b``,
a bare short name (``e_2``, ``ext_1``, ``noise_1``) or ``list = e_1, e_2``.
Swept values accept ``dyadic a b`` for ``2**-a, ..., 2**-b`` and
``decades a b`` for ``10**-a, ..., 10**-b``.

Values are scalars or comma-separated lists.  A space followed by ``#`` after
a value starts a trailing comment.  Every section and key is checked against the tables below;
unknown names are errors reported with their line number.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .probes import Probe, eigen_probe, extended_eigenprobe, indicator_probe, noise_probe
from .systems import (
    SystemSpec,
    Variant,
    boundary_system,
    cable_system,
    jordan_system,
    multiplication_system,
    system_eigenstructure,
)

__all__ = ["ConfigError", "ExperimentConfig", "ProbeSpec", "load_config", "parse_config_text"]


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


_DEFAULT_P = -0.5
_DEFAULT_KAPPA = 2.0

_SECTIONS = {
    "experiment": {"name", "description"},
    "system": {"variant", "p", "sigma_R", "n_points", "left", "right", "alpha", "coefficients"},
    "noise": {"kappa", "sigma"},
    "sweep": {
        "swept", "values", "fixed_other", "T", "dt", "n_samples", "root_seed",
        "burn_in_fraction", "stride", "engine", "fit_window", "tolerance", "workers",
    },
    "probes": None,  # probe names are free; values are validated separately
    "oracle": {"values", "method", "fit_window"},
    "output": {"directory", "formats"},
}

_DEFAULT_POINTS = {
    Variant.CABLE_PERIODIC: 200,
    Variant.JORDAN_CHAIN: 4,
    Variant.MULTIPLICATION_OP: 2001,
    Variant.CABLE_BOUNDARY_NOISE: 201,
}


@dataclass(frozen=True)
class ProbeSpec:
    """Named probe recipe, resolved against each row's system.

    ``kind`` is ``eigen`` (dual eigenvector or chain vector ``index``),
    ``extended`` (joint eigenprobe ``index``), ``noise`` (noise-only probe
    along eigenvector ``index``) or ``indicator`` (of ``[a, b)``).
    """

    name: str
    kind: str
    index: int = 1
    a: float = 0.0
    b: float = 0.0

    def __call__(self, system: SystemSpec, kappa: float) -> Probe:
        if self.kind == "eigen":
            return eigen_probe(system, self.index, name=self.name)
        if self.kind == "extended":
            return extended_eigenprobe(system, self.index, kappa, name=self.name)
        if self.kind == "noise":
            left = system_eigenstructure(system)[self.index - 1].left
            return noise_probe(left, name=self.name)
        grid = system.payload.grid
        return indicator_probe(grid, self.a, self.b, name=self.name)


@dataclass
class ExperimentConfig:
    """Validated experiment description with every default filled in."""

    name: str
    variant: Variant
    p: float = _DEFAULT_P
    sigma_R: float = 1.0
    n_points: int | None = None
    left: float | None = None
    right: float | None = None
    alphas: tuple[float, ...] = (2.0,)
    coefficients: tuple[float, ...] | None = None
    kappa: float = _DEFAULT_KAPPA
    sigma: float = 0.1
    swept: str = "p"
    values: tuple[float, ...] = ()
    fixed_other: float | None = None
    T: float = 1e5
    dt: float = 0.1
    n_samples: int = 10
    root_seed: int = 0
    burn_in_fraction: float = 0.1
    stride: int = 1
    engine: str = "fast"
    fit_window: tuple[float, float] | None = None
    tolerance: tuple[float, ...] = (0.15,)
    workers: int = 1
    probes: tuple[ProbeSpec, ...] = ()
    oracle_values: tuple[float, ...] = ()
    oracle_method: str = "scheme"
    oracle_fit_window: tuple[float, float] | None = None
    directory: str = "."
    formats: tuple[str, ...] = ("csv",)
    description: str = ""
    source_text: str = field(default="", repr=False)

    def systems(self) -> list[tuple[str, SystemSpec]]:
        """Template systems with a column suffix (one per ``alpha`` for the multiplication operator)."""
        v = self.variant
        if v is Variant.CABLE_PERIODIC:
            return [("", cable_system(self.p, self.n_points, self.sigma_R))]
        if v is Variant.JORDAN_CHAIN:
            return [("", jordan_system(self.p, self.n_points, self.sigma_R))]
        if v is Variant.CABLE_BOUNDARY_NOISE:
            return [("", boundary_system(self.p, self.n_points, self.sigma_R))]
        if self.coefficients is not None:
            return [("", multiplication_system(self.p, None, self.left, self.right, self.n_points, self.coefficients, self.sigma_R))]
        out = []
        for alpha in self.alphas:
            suffix = f"@alpha={alpha:.6g}" if len(self.alphas) > 1 else ""
            out.append((suffix, multiplication_system(self.p, alpha, self.left, self.right, self.n_points, None, self.sigma_R)))
        return out

    def tolerance_for(self, index: int) -> float:
        return self.tolerance[index] if len(self.tolerance) > 1 else self.tolerance[0]


# --- value parsing --------------------------------------------------------


def _number(text: str, line: int, key: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}", line) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite, got {text!r}", line)
    return value


def _integer(text: str, line: int, key: str) -> int:
    value = _number(text, line, key)
    if value != int(value):
        raise ConfigError(f"{key}: expected an integer, got {text!r}", line)
    return int(value)


def _numbers(text: str, line: int, key: str) -> tuple[float, ...]:
    parts = [t.strip() for t in text.split(",") if t.strip()]
    if not parts:
        raise ConfigError(f"{key}: empty list", line)
    return tuple(_number(t, line, key) for t in parts)


def _grid_values(text: str, line: int, key: str) -> tuple[float, ...]:
    """``dyadic a b`` (2**-a .. 2**-b), ``decades a b`` (10**-a .. 10**-b) or a list."""
    words = text.split()
    if words and words[0] in ("dyadic", "decades"):
        if len(words) != 3:
            raise ConfigError(f"{key}: '{words[0]}' takes two integer exponents", line)
        first, last = _integer(words[1], line, key), _integer(words[2], line, key)
        if last <= first:
            raise ConfigError(f"{key}: the last exponent must exceed the first", line)
        base = 2.0 if words[0] == "dyadic" else 10.0
        return tuple(base**-k for k in range(first, last + 1))
    return _numbers(text, line, key)


def _probe_spec(name: str, text: str, line: int) -> ProbeSpec:
    words = text.split()
    if not words:
        raise ConfigError(f"probe {name!r} has no definition", line)
    kind = words[0]
    if kind in ("eigen", "extended", "noise"):
        if len(words) != 2:
            raise ConfigError(f"probe {name!r}: '{kind}' takes one mode index", line)
        return ProbeSpec(name, kind, index=_integer(words[1], line, name))
    if kind == "indicator":
        if len(words) != 3:
            raise ConfigError(f"probe {name!r}: 'indicator' takes two bounds", line)
        a, b = _number(words[1], line, name), _number(words[2], line, name)
        return ProbeSpec(name, kind, a=a, b=b)
    raise ConfigError(f"probe {name!r}: unknown kind {kind!r} (eigen, extended, noise, indicator)", line)


_SHORT = re.compile(r"^(e|ext|noise)_(\d+)$")


def _short_probe(name: str, line: int) -> ProbeSpec:
    match = _SHORT.match(name)
    if not match:
        raise ConfigError(f"unknown probe name {name!r}; define it as 'name = kind args'", line)
    kind = {"e": "eigen", "ext": "extended", "noise": "noise"}[match.group(1)]
    return ProbeSpec(name, kind, index=int(match.group(2)))


def _default_probes(variant: Variant, grid_bounds) -> tuple[ProbeSpec, ...]:
    if variant is Variant.CABLE_PERIODIC:
        return tuple(ProbeSpec(f"e_{k}", "eigen", index=k) for k in (1, 2, 3))
    if variant is Variant.JORDAN_CHAIN:
        return tuple(ProbeSpec(f"e_{k}", "eigen", index=k) for k in (1, 2, 3, 4))
    if variant is Variant.MULTIPLICATION_OP:
        lo, hi = grid_bounds
        return (ProbeSpec("g", "indicator", a=lo, b=hi),)
    thirds = [(0.0, 1 / 3), (1 / 3, 2 / 3), (2 / 3, 1.0)]
    return tuple(ProbeSpec(f"S{i + 1}", "indicator", a=a, b=b) for i, (a, b) in enumerate(thirds))


# --- parser ---------------------------------------------------------------


def _tokenize(text: str):
    """Yield ``(line_no, section, key, value)`` for every entry."""
    section = None
    seen: dict[tuple[str, str], int] = {}
    sections_seen: set[str] = set()
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(" #", 1)[0].strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", no)
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]; expected one of {sorted(_SECTIONS)}", no)
            if section in sections_seen:
                raise ConfigError(f"section [{section}] appears twice", no)
            sections_seen.add(section)
            continue
        if section is None:
            raise ConfigError("entry outside any section", no)
        if "=" not in line:
            if section == "probes":
                yield no, section, line, None
                continue
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        key, value = (s.strip() for s in line.split("=", 1))
        allowed = _SECTIONS[section]
        if allowed is not None and key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{section}]; expected one of {sorted(allowed)}", no)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} in [{section}] (first on line {seen[section, key]})", no)
        seen[section, key] = no
        yield no, section, key, value


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        On the first syntax or semantic error, with its line number.
    """
    entries = {}
    probe_lines = []
    for no, section, key, value in _tokenize(text):
        if section == "probes":
            probe_lines.append((no, key, value))
        else:
            entries[section, key] = (no, value)

    def get(section, key, conv, default):
        if (section, key) not in entries:
            return default
        no, value = entries[section, key]
        return conv(value, no, key)

    def where(section, key):
        return entries.get((section, key), (None,))[0]

    text_value = lambda v, no, key: v  # noqa: E731
    if ("system", "variant") not in entries:
        raise ConfigError("[system] variant is required")
    no, variant_text = entries["system", "variant"]
    try:
        variant = Variant(variant_text)
    except ValueError:
        raise ConfigError(f"unknown variant {variant_text!r}; expected one of {[v.value for v in Variant]}", no) from None

    cfg = ExperimentConfig(name=get("experiment", "name", text_value, "experiment"), variant=variant)
    cfg.description = get("experiment", "description", text_value, "")
    cfg.source_text = text
    cfg.p = get("system", "p", _number, _DEFAULT_P)
    if not cfg.p < 0:
        raise ConfigError(f"p must be negative (stable regime p < 0), got {cfg.p}", where("system", "p"))
    cfg.sigma_R = get("system", "sigma_R", _number, 1.0)
    if cfg.sigma_R < 0:
        raise ConfigError("sigma_R must be nonnegative", where("system", "sigma_R"))
    cfg.n_points = get("system", "n_points", _integer, _DEFAULT_POINTS[variant])
    spatial_bounds = variant is Variant.MULTIPLICATION_OP
    for key in ("left", "right", "alpha", "coefficients"):
        if ("system", key) in entries and not spatial_bounds:
            raise ConfigError(f"{key} only applies to multiplication_op", where("system", key))
    cfg.left = get("system", "left", _number, -0.01 if spatial_bounds else None)
    cfg.right = get("system", "right", _number, 0.01 if spatial_bounds else None)
    cfg.alphas = get("system", "alpha", _numbers, (2.0,))
    cfg.coefficients = get("system", "coefficients", _numbers, None)
    if any(a <= 0 for a in cfg.alphas):
        raise ConfigError("alpha must be positive", where("system", "alpha"))

    cfg.kappa = get("noise", "kappa", _number, _DEFAULT_KAPPA)
    cfg.sigma = get("noise", "sigma", _number, 0.1)
    if not cfg.kappa > 0:
        raise ConfigError("kappa must be positive", where("noise", "kappa"))
    if cfg.sigma < 0:
        raise ConfigError("sigma must be nonnegative", where("noise", "sigma"))

    cfg.swept = get("sweep", "swept", text_value, "p")
    if cfg.swept not in ("p", "kappa"):
        raise ConfigError(f"swept must be 'p' or 'kappa', got {cfg.swept!r}", where("sweep", "swept"))
    cfg.values = get("sweep", "values", _grid_values, tuple(2.0**-k for k in range(0, 9)))
    if min(cfg.values) <= 0:
        label = "-p" if cfg.swept == "p" else "kappa"
        raise ConfigError(f"swept values ({label}) must be positive", where("sweep", "values"))
    if any(b >= a for a, b in zip(cfg.values, cfg.values[1:])):
        raise ConfigError("swept values must be strictly descending", where("sweep", "values"))
    default_other = cfg.kappa if cfg.swept == "p" else cfg.p
    cfg.fixed_other = get("sweep", "fixed_other", _number, default_other)
    if cfg.swept == "p" and not cfg.fixed_other > 0:
        raise ConfigError("fixed_other is kappa in a p-sweep and must be positive", where("sweep", "fixed_other"))
    if cfg.swept == "kappa" and not cfg.fixed_other < 0:
        raise ConfigError("fixed_other is p in a kappa-sweep and must be negative", where("sweep", "fixed_other"))
    cfg.T = get("sweep", "T", _number, 1e5)
    cfg.dt = get("sweep", "dt", _number, 0.1)
    if not (cfg.T > 0 and cfg.dt > 0 and cfg.T >= 4 * cfg.dt):
        raise ConfigError("need T > 0, dt > 0 and T >= 4 dt", where("sweep", "T") or where("sweep", "dt"))
    cfg.n_samples = get("sweep", "n_samples", _integer, 10)
    if cfg.n_samples < 1:
        raise ConfigError("n_samples must be at least 1", where("sweep", "n_samples"))
    cfg.root_seed = get("sweep", "root_seed", _integer, 0)
    if cfg.root_seed < 0:
        raise ConfigError("root_seed must be nonnegative", where("sweep", "root_seed"))
    cfg.burn_in_fraction = get("sweep", "burn_in_fraction", _number, 0.1)
    if not 0 <= cfg.burn_in_fraction < 1:
        raise ConfigError("burn_in_fraction must lie in [0, 1)", where("sweep", "burn_in_fraction"))
    cfg.stride = get("sweep", "stride", _integer, 1)
    if cfg.stride < 1:
        raise ConfigError("stride must be at least 1", where("sweep", "stride"))
    cfg.engine = get("sweep", "engine", text_value, "fast")
    if cfg.engine not in ("fast", "step"):
        raise ConfigError("engine must be 'fast' or 'step'", where("sweep", "engine"))
    window = get("sweep", "fit_window", _numbers, None)
    if window is not None and (len(window) != 2 or not 0 < window[0] < window[1]):
        raise ConfigError("fit_window takes two increasing positive bounds", where("sweep", "fit_window"))
    cfg.fit_window = window
    cfg.tolerance = get("sweep", "tolerance", _numbers, (0.15,))
    if min(cfg.tolerance) <= 0:
        raise ConfigError("tolerances must be positive", where("sweep", "tolerance"))
    cfg.workers = get("sweep", "workers", _integer, 1)
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1", where("sweep", "workers"))

    cfg.oracle_values = get("oracle", "values", _grid_values, ())
    cfg.oracle_method = get("oracle", "method", text_value, "scheme")
    if cfg.oracle_method not in ("scheme", "continuous", "continuum"):
        raise ConfigError("oracle method must be scheme, continuous or continuum", where("oracle", "method"))
    window = get("oracle", "fit_window", _numbers, None)
    if window is not None and (len(window) != 2 or not 0 < window[0] < window[1]):
        raise ConfigError("fit_window takes two increasing positive bounds", where("oracle", "fit_window"))
    cfg.oracle_fit_window = window
    if cfg.oracle_method == "continuum" and variant is not Variant.MULTIPLICATION_OP:
        raise ConfigError("the continuum oracle applies to multiplication_op only", where("oracle", "method"))
    if cfg.oracle_values and any(b >= a for a, b in zip(cfg.oracle_values, cfg.oracle_values[1:])):
        raise ConfigError("oracle values must be strictly descending", where("oracle", "values"))

    cfg.directory = get("output", "directory", text_value, cfg.name)
    cfg.formats = tuple(f.strip() for f in get("output", "formats", text_value, "csv").split(","))
    bad = [f for f in cfg.formats if f not in ("csv", "jsonl")]
    if bad:
        raise ConfigError(f"unknown output format {bad[0]!r} (csv, jsonl)", where("output", "formats"))

    probes = []
    for no, key, value in probe_lines:
        if value is None:
            probes.append((_short_probe(key, no), no))
        elif key == "list":
            probes.extend((_short_probe(n.strip(), no), no) for n in value.split(",") if n.strip())
        else:
            probes.append((_probe_spec(key, value, no), no))
    if not probes:
        probes = [(p, None) for p in _default_probes(variant, (cfg.left, cfg.right))]
    names = [p.name for p, _ in probes]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate probe names {names}")
    if len(cfg.tolerance) not in (1, len(probes)):
        raise ConfigError("tolerance takes one value or one per probe", where("sweep", "tolerance"))
    cfg.probes = tuple(p for p, _ in probes)

    _validate_against_systems(cfg, probes)
    return cfg


def _validate_against_systems(cfg: ExperimentConfig, probes) -> None:
    """Build every system and probe once so that errors surface before any run."""
    try:
        templates = cfg.systems()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid system: {exc}") from None
    for _, system in templates:
        kappa = cfg.kappa if cfg.swept == "p" else cfg.values[0]
        for spec, line in probes:
            try:
                spec(system, kappa)
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"probe {spec.name!r}: {exc}", line) from None


def load_config(source) -> ExperimentConfig:
    """Load a configuration from a path or from text containing a section header."""
    text = str(source)
    if "[" not in text or "\n" not in text:
        with open(text, encoding="utf-8") as fh:
            text = fh.read()
    return parse_config_text(text)
