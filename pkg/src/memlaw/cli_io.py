"""Configuration files, CSV output and the ``memlaw`` command line.

Configuration is INI text read with :mod:`configparser`::

    [model]
    preset = keyfitz_kranzer
    eta = 0.25
    delta = 0.0125

    [grid]
    x_min = -5
    x_max = 5
    dx = 0.00625
    T = 0.5

    [scheme]
    beta = 0.3333
    lambda = 0.1286
    record_times = 0, 0.017, 0.33, 0.5

Exit codes: 0 success, 1 configuration error, 2 numeric failure,
3 failed rate floor or diagnostics check.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .grid import GridError, GridSpec, PiecewiseConstant, cfl_time_grid
from .kernels import KernelMatrix, ScaledTemporalKernel, poly_bump, poly_decay, uniform
from .models import FLUXES, VELOCITIES, ModelError, ModelSpec, keyfitz_kranzer_preset, validate_model
from .scheme import InvariantRegionError, SchemeParams, run
from .studies import RateFloorError, delta_study, mesh_study

__all__ = [
    "ConfigError",
    "ModelConfig",
    "GridConfig",
    "SchemeConfig",
    "StudyConfig",
    "OutputConfig",
    "RunConfig",
    "parse_config",
    "parse_config_text",
    "format_config",
    "build_model",
    "emit_profile_csv",
    "emit_rate_table",
    "emit_report_csv",
    "main",
]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 1, 2, 3
PRESETS = ("keyfitz_kranzer", "explicit")
STUDY_KINDS = ("delta", "mesh")
SPATIAL_FAMILIES = {"poly_bump": poly_bump, "uniform": uniform}


class ConfigError(ValueError):
    """Every problem found in a configuration, each prefixed by ``section.key``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class ModelConfig:
    preset: str = "keyfitz_kranzer"
    eta: float = 0.25
    delta: float = 0.0125
    orientation: str = "downstream"
    spatial: str = "poly_bump"
    fluxes: tuple = ()
    velocities: tuple = ()
    initial: tuple = ()  # (a, b, height) per component


@dataclass(frozen=True)
class GridConfig:
    x_min: float
    x_max: float
    dx: float
    T: float


@dataclass(frozen=True)
class SchemeConfig:
    beta: float
    lam: float | None = None
    record_times: tuple = ()


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    halvings: int
    delta_0: float | None = None
    dx_0: float | None = None
    ratio: float | None = None
    dx_fine: float | None = None


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    precision: int = 12


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    grid: GridConfig
    scheme: SchemeConfig
    study: StudyConfig | None = None
    output: OutputConfig = field(default_factory=OutputConfig)


class _Reader:
    """Collects typed values and errors from a parsed INI document."""

    def __init__(self, parser):
        self.parser = parser
        self.errors = []

    def get(self, section, key, kind=float, required=True, default=None):
        if not self.parser.has_option(section, key):
            if required:
                self.errors.append(f"{section}.{key} is required")
            return default
        raw = self.parser.get(section, key).strip()
        try:
            value = kind(raw)
        except ValueError:
            self.errors.append(f"{section}.{key} must be {_KIND_NAMES.get(kind, 'valid')}, got {raw!r}")
            return default
        if kind is float and not math.isfinite(value):
            self.errors.append(f"{section}.{key} must be finite, got {raw!r}")
            return default
        return value

    def check(self, ok, message):
        if not ok:
            self.errors.append(message)


def _float_list(raw):
    items = [s for s in (t.strip() for t in raw.split(",")) if s]
    return tuple(float(s) for s in items)


def _name_list(raw):
    return tuple(s for s in (t.strip() for t in raw.split(",")) if s)


def _intervals(raw):
    out = []
    for item in _name_list(raw):
        parts = item.split(":")
        if len(parts) != 3:
            raise ValueError(item)
        out.append(tuple(float(p) for p in parts))
    return tuple(out)


_KIND_NAMES = {
    float: "a number",
    int: "an integer",
    _float_list: "a comma-separated list of numbers",
    _intervals: "a comma-separated list of a:b:height intervals",
}


def parse_config_text(text):
    """Parse and validate configuration text; raise :class:`ConfigError` listing every problem."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unreadable configuration: {exc}"]) from None
    r = _Reader(parser)

    preset = parser.get("model", "preset", fallback="keyfitz_kranzer").strip()
    r.check(preset in PRESETS, f"model.preset must be one of {', '.join(PRESETS)}, got {preset!r}")
    eta = r.get("model", "eta", required=False, default=0.25)
    delta = r.get("model", "delta", required=False, default=0.0125)
    if eta is not None:
        r.check(eta > 0.0, "model.eta must be positive")
    if delta is not None:
        r.check(delta > 0.0, "model.delta must be positive")
    orientation = parser.get("model", "orientation", fallback="downstream").strip()
    r.check(orientation in ("downstream", "upstream"), "model.orientation must be downstream or upstream")
    spatial = parser.get("model", "spatial", fallback="poly_bump").strip()
    r.check(spatial in SPATIAL_FAMILIES, f"model.spatial must be one of {', '.join(SPATIAL_FAMILIES)}")
    fluxes = velocities = initial = ()
    if preset == "explicit":
        fluxes = r.get("model", "fluxes", _name_list, default=())
        velocities = r.get("model", "velocities", _name_list, default=())
        initial = r.get("model", "initial", _intervals, default=())
        for name in fluxes:
            r.check(name in FLUXES, f"model.fluxes: unknown flux {name!r}")
        for name in velocities:
            r.check(name in VELOCITIES, f"model.velocities: unknown velocity {name!r}")
        r.check(len(fluxes) == len(velocities) == len(initial),
                "model.fluxes, model.velocities and model.initial must have one entry per component")
        for a, b, h in initial:
            r.check(a < b, "model.initial intervals need a < b")
            r.check(0.0 <= h <= 1.0, "model.initial heights must lie in [0, 1]")
    model = ModelConfig(preset, eta, delta, orientation, spatial, fluxes, velocities, initial)

    x_min = r.get("grid", "x_min")
    x_max = r.get("grid", "x_max")
    dx = r.get("grid", "dx")
    T = r.get("grid", "T")
    if dx is not None:
        r.check(dx > 0.0, "grid.dx must be positive")
    if T is not None:
        r.check(T >= 0.0, "grid.T must be nonnegative")
    if None not in (x_min, x_max):
        r.check(x_max > x_min, "grid.x_max must exceed grid.x_min")
        if dx is not None and dx > 0.0 and x_max > x_min:
            ratio = (x_max - x_min) / dx
            r.check(abs(ratio - round(ratio)) <= 1e-9 * ratio and round(ratio) >= 2,
                    "grid.dx must divide the domain length into at least two cells")
    grid = GridConfig(x_min, x_max, dx, T)

    beta = r.get("scheme", "beta")
    if beta is not None:
        r.check(0.0 < beta < 2.0 / 3.0, "scheme.beta must lie in (0, 2/3)")
    lam = r.get("scheme", "lambda", required=False)
    if lam is not None:
        r.check(lam > 0.0, "scheme.lambda must be positive")
    record_times = r.get("scheme", "record_times", _float_list, required=False, default=())
    if T is not None:
        for t in record_times:
            r.check(0.0 <= t <= T, f"scheme.record_times entry {t} lies outside [0, grid.T]")
    scheme = SchemeConfig(beta, lam, record_times)

    study = None
    if parser.has_section("study"):
        kind = parser.get("study", "kind", fallback="").strip()
        r.check(kind in STUDY_KINDS, f"study.kind must be one of {', '.join(STUDY_KINDS)}, got {kind!r}")
        halvings = r.get("study", "halvings", int)
        if halvings is not None:
            r.check(halvings >= 1, "study.halvings must be at least 1")
        delta_0 = dx_0 = ratio = dx_fine = None
        if kind == "delta":
            delta_0 = r.get("study", "delta_0")
            if delta_0 is not None:
                r.check(delta_0 > 0.0, "study.delta_0 must be positive")
        elif kind == "mesh":
            dx_0 = r.get("study", "dx_0")
            ratio = r.get("study", "ratio")
            dx_fine = r.get("study", "dx_fine")
            for key, value in (("dx_0", dx_0), ("ratio", ratio), ("dx_fine", dx_fine)):
                if value is not None:
                    r.check(value > 0.0, f"study.{key} must be positive")
        study = StudyConfig(kind, halvings, delta_0, dx_0, ratio, dx_fine)

    directory = parser.get("output", "directory", fallback="out").strip()
    precision = r.get("output", "precision", int, required=False, default=12)
    if precision is not None:
        r.check(1 <= precision <= 17, "output.precision must lie in [1, 17]")
    output = OutputConfig(directory, precision)

    if r.errors:
        raise ConfigError(r.errors)
    return RunConfig(model, grid, scheme, study, output)


def parse_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read configuration {path}: {exc.strerror}"]) from None
    return parse_config_text(text)


def _num(x):
    return repr(float(x))


def format_config(cfg):
    """Canonical configuration text; ``parse_config_text`` inverts it."""
    m, g, s = cfg.model, cfg.grid, cfg.scheme
    lines = ["[model]", f"preset = {m.preset}", f"eta = {_num(m.eta)}", f"delta = {_num(m.delta)}",
             f"orientation = {m.orientation}", f"spatial = {m.spatial}"]
    if m.preset == "explicit":
        lines += [f"fluxes = {', '.join(m.fluxes)}", f"velocities = {', '.join(m.velocities)}",
                  "initial = " + ", ".join(f"{_num(a)}:{_num(b)}:{_num(h)}" for a, b, h in m.initial)]
    lines += ["", "[grid]", f"x_min = {_num(g.x_min)}", f"x_max = {_num(g.x_max)}", f"dx = {_num(g.dx)}",
              f"T = {_num(g.T)}", "", "[scheme]", f"beta = {_num(s.beta)}"]
    if s.lam is not None:
        lines.append(f"lambda = {_num(s.lam)}")
    if s.record_times:
        lines.append("record_times = " + ", ".join(_num(t) for t in s.record_times))
    if cfg.study is not None:
        st = cfg.study
        lines += ["", "[study]", f"kind = {st.kind}", f"halvings = {st.halvings}"]
        for key in ("delta_0", "dx_0", "ratio", "dx_fine"):
            value = getattr(st, key)
            if value is not None:
                lines.append(f"{key} = {_num(value)}")
    lines += ["", "[output]", f"directory = {cfg.output.directory}", f"precision = {cfg.output.precision}", ""]
    return "\n".join(lines)


def build_model(cfg):
    m = cfg.model
    if m.preset == "keyfitz_kranzer":
        model = keyfitz_kranzer_preset(m.eta, m.delta)
        if m.spatial != "poly_bump":
            n = model.n
            model = ModelSpec(n, model.fluxes, model.velocities,
                              KernelMatrix.shared(n, SPATIAL_FAMILIES[m.spatial](m.eta), model.kernels[0, 0][1]),
                              model.initial, model.name, model.h1_waived)
    else:
        n = len(m.fluxes)
        kernels = KernelMatrix.shared(n, SPATIAL_FAMILIES[m.spatial](m.eta), ScaledTemporalKernel(poly_decay(), m.delta))
        model = ModelSpec(
            n,
            tuple(FLUXES[f] for f in m.fluxes),
            tuple(VELOCITIES[v] for v in m.velocities),
            kernels,
            tuple(PiecewiseConstant.indicator(a, b, h) for a, b, h in m.initial),
            name="explicit",
        )
    if m.orientation != model.orientation:
        model = replace(model, orientation=m.orientation)
    return model


def _fmt(value, precision):
    return format(float(value) + 0.0, f".{precision - 1}e")


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_profile_csv(traj, grid, directory, precision=12, labels=None):
    """One CSV per recorded state: header ``x,U1,...,UN``, fixed significant digits."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    x = grid.centers
    paths = []
    for i, rec in enumerate(traj.records):
        label = labels[i] if labels is not None else rec.time
        n = rec.values.shape[0]
        lines = ["x," + ",".join(f"U{k + 1}" for k in range(n))]
        for c in range(grid.M):
            lines.append(",".join(_fmt(v, precision) for v in (x[c], *rec.values[:, c])))
        path = directory / f"profile_t{label:.6f}.csv"
        _write_lines(path, lines)
        paths.append(path)
    return paths


def emit_rate_table(table, directory, stem="rates", precision=12):
    """Rate CSV plus log-log plot data with slope-1 and slope-1/2 reference columns."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv = ["parameter,error,rate,lambda_used"]
    dat = ["# parameter error slope1 slope0.5"]
    rows = table.rows
    for r in rows:
        rate = "" if r.rate is None else _fmt(r.rate, precision)
        csv.append(f"{_fmt(r.parameter, precision)},{_fmt(r.error, precision)},{rate},{_fmt(r.lambda_used, precision)}")
    if rows:
        p0, e0 = rows[0].parameter, rows[0].error
        for r in rows:
            s1 = e0 * (r.parameter / p0)
            s05 = e0 * math.sqrt(r.parameter / p0)
            dat.append(" ".join(_fmt(v, precision) for v in (r.parameter, r.error, s1, s05)))
    csv_path, dat_path = directory / f"{stem}.csv", directory / f"{stem}_loglog.dat"
    _write_lines(csv_path, csv)
    _write_lines(dat_path, dat)
    return csv_path, dat_path


def emit_report_csv(report, path, precision=12):
    lines = ["check,component,worst,tolerance,pass"]
    for row in report.rows:
        lines.append(f"{row.check},{row.component},{_fmt(row.worst, precision)},"
                     f"{_fmt(row.tolerance, precision)},{int(row.passed)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_lines(path, lines)
    return path


def _setup(cfg):
    model = build_model(cfg)
    validation = validate_model(model)
    validation.raise_if_failed()
    for hyp, msg in validation.warnings:
        log.warning("%s: %s", hyp, msg)
    consts = validation.constants
    grid = GridSpec(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.dx)
    tg = cfl_time_grid(grid.dx, cfg.grid.T, cfg.scheme.beta, consts.lip_f_max, consts.nu_max, cfg.scheme.lam)
    return model, grid, tg, SchemeParams(cfg.scheme.beta, tg.lam)


def _cmd_simulate(cfg, out):
    model, grid, tg, params = _setup(cfg)
    times = cfg.scheme.record_times or (cfg.grid.T,)
    traj = run(model, grid, tg, params, record_times=times)
    paths = emit_profile_csv(traj, grid, out, cfg.output.precision, labels=_dedupe_labels(times, tg))
    print(f"wrote {len(paths)} profile(s) to {out} (dt={tg.dt:.6g}, steps={tg.n_steps}, lambda={tg.lam:.6g})")
    return EXIT_OK


def _dedupe_labels(times, tg):
    seen, labels = set(), []
    for t in sorted(times, key=lambda t: round(t / tg.dt)):
        n = int(round(t / tg.dt))
        if n not in seen:
            seen.add(n)
            labels.append(t)
    return labels


def _cmd_verify(cfg, out):
    from .diagnostics import verify

    model, grid, tg, params = _setup(cfg)
    report, _ = verify(model, grid, tg, params)
    print(report.table())
    emit_report_csv(report, Path(out) / "diagnostics.csv", cfg.output.precision)
    return EXIT_OK if report.passed else EXIT_ASSERT


def _cmd_study(cfg, out, kind):
    st = cfg.study
    if st is None or st.kind != kind:
        raise ConfigError([f"study.kind must be {kind} for this subcommand"])
    model = build_model(cfg)
    g = cfg.grid
    status = EXIT_OK
    try:
        if kind == "delta":
            grid = GridSpec(g.x_min, g.x_max, g.dx)
            table = delta_study(model, grid, g.T, cfg.scheme.beta, cfg.scheme.lam, st.delta_0, st.halvings)
        else:
            table = mesh_study(model, g.x_min, g.x_max, g.T, cfg.scheme.beta, cfg.scheme.lam,
                               st.dx_0, st.halvings, st.ratio, st.dx_fine)
    except RateFloorError as exc:
        table = exc.table
        print(f"rate floor violated: {exc}", file=sys.stderr)
        status = EXIT_ASSERT
    emit_rate_table(table, out, stem=f"{kind}_rates", precision=cfg.output.precision)
    for r in table.rows:
        rate = "-" if r.rate is None else f"{r.rate:.3f}"
        print(f"{r.parameter:<14.6g}{r.error:<16.6e}{rate}")
    return status


def build_parser():
    parser = argparse.ArgumentParser(prog="memlaw", description="Nonlocal conservation laws with memory.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "run the scheme and write profile CSVs"),
                       ("study-delta", "memory-to-memoryless rate study"),
                       ("study-mesh", "fixed delta/dx mesh study"),
                       ("verify", "run with the stability diagnostics")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config)
        out = args.out or cfg.output.directory
        if args.command == "simulate":
            return _cmd_simulate(cfg, out)
        if args.command == "verify":
            return _cmd_verify(cfg, out)
        return _cmd_study(cfg, out, args.command.split("-")[1])
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, GridError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantRegionError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
