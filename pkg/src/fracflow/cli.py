"""Command line entry point: ``fracflow run | caputo | selftest``.

Exit codes: 0 success, 1 configuration error, 2 flow singularity.
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, TextIO

import numpy as np
from scipy.special import gamma
from threadpoolctl import threadpool_limits

from . import scenarios
from .errors import ConfigError, FlowSingularity
from .fraccalc import AxisGrid, SampledCurve, caputo_left
from .flow import MODES, NORMALIZATIONS, POTENTIALS, FlowConfig, FlowState, StepRecord, evolve
from .geometry import DMetric, GridChart, NConnectionField

EXIT_OK, EXIT_CONFIG, EXIT_SINGULAR = 0, 1, 2
METRIC_PRESETS = ("flat", "sphere-h", "perturbed-torus", "custom")
N_PRESETS = ("zero", "constant", "polynomial")
F_PRESETS = ("zero", "constant", "scenario")
FORMATS = ("csv", "jsonl")
MIN_FLOW_COUNT = 8


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    chart: GridChart
    metric: DMetric
    nconn: NConnectionField
    f: np.ndarray
    tau: float
    flow: FlowConfig
    out: Path | None
    fmt: str = "csv"
    extras: dict = field(default_factory=dict)

    def initial_state(self) -> FlowState:
        return FlowState(self.chart, self.metric, self.nconn, self.f, self.tau)


class _Reader:
    """Typed access to a ConfigParser that reports the offending ``section.key``."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def raw(self, section: str, key: str, default=None) -> str | None:
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        return default

    def _convert(self, section: str, key: str, text: str, kind: Callable, what: str):
        try:
            return kind(text)
        except (TypeError, ValueError):
            raise ConfigError(f"{section}.{key}: expected {what}, got {text!r}", f"{section}.{key}") from None

    def text(self, section: str, key: str, default: str, choices: tuple[str, ...] | None = None) -> str:
        val = self.raw(section, key, default)
        if choices is not None and val not in choices:
            raise ConfigError(f"{section}.{key}: {val!r} is not one of {', '.join(choices)}", f"{section}.{key}")
        return val

    def number(self, section: str, key: str, default: float) -> float:
        val = self.raw(section, key)
        if val is None:
            return default
        out = self._convert(section, key, val, float, "a number")
        if not math.isfinite(out):
            raise ConfigError(f"{section}.{key}: must be finite", f"{section}.{key}")
        return out

    def integer(self, section: str, key: str, default: int) -> int:
        val = self.raw(section, key)
        return default if val is None else self._convert(section, key, val, int, "an integer")

    def flag(self, section: str, key: str, default: bool) -> bool:
        if not self.has(section, key):
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected true/false", f"{section}.{key}") from None

    def numbers(self, section: str, key: str, default: list[float] | None, length: int | None = None) -> list[float] | None:
        val = self.raw(section, key)
        if val is None:
            return default
        items = [s for s in re.split(r"[,\s]+", val) if s]
        out = [self._convert(section, key, s, float, "a list of numbers") for s in items]
        if length is not None and len(out) != length:
            raise ConfigError(f"{section}.{key}: expected {length} values, got {len(out)}", f"{section}.{key}")
        return out


def _broadcast(values: list, d: int, section: str, key: str) -> list:
    if len(values) == 1:
        return values * d
    if len(values) != d:
        raise ConfigError(f"{section}.{key}: expected 1 or {d} values, got {len(values)}", f"{section}.{key}")
    return values


def _read_chart(r: _Reader, preset: str) -> GridChart:
    if preset == "sphere-h":
        defaults = dict(n=2, m=1, lower=[scenarios.SPHERE_BAND, 0.0, 0.0],
                        upper=[math.pi - scenarios.SPHERE_BAND, 2 * math.pi, 1.0],
                        count=[32, 32, 8], periodic=[False, True, False])
    else:
        defaults = dict(n=2, m=1, lower=[0.0], upper=[2 * math.pi], count=[16, 16, 8], periodic=[True])
    n = r.integer("chart", "n", defaults["n"])
    m = r.integer("chart", "m", defaults["m"])
    if n < 1 or m < 1:
        raise ConfigError("chart.n, chart.m: both must be at least 1", "chart.n")
    if preset in ("sphere-h", "perturbed-torus") and (n, m) != (2, 1):
        raise ConfigError(f"chart.n: metric preset {preset!r} needs n=2, m=1", "chart.n")
    d = n + m
    lower = _broadcast(r.numbers("chart", "lower", defaults["lower"]), d, "chart", "lower")
    upper = _broadcast(r.numbers("chart", "upper", defaults["upper"]), d, "chart", "upper")
    counts = r.numbers("chart", "count", defaults["count"])
    if any(c != int(c) for c in counts):
        raise ConfigError("chart.count: counts must be integers", "chart.count")
    counts = _broadcast([int(c) for c in counts], d, "chart", "count")
    if r.has("chart", "periodic"):
        items = [s for s in re.split(r"[,\s]+", r.raw("chart", "periodic")) if s]
        table = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}
        if any(s.lower() not in table for s in items):
            raise ConfigError("chart.periodic: expected true/false values", "chart.periodic")
        periodic = [table[s.lower()] for s in items]
    else:
        periodic = defaults["periodic"]
    periodic = _broadcast(periodic, d, "chart", "periodic")
    for k in range(d):
        if not upper[k] > lower[k]:
            raise ConfigError(f"chart.upper: axis {k} needs upper > lower", "chart.upper")
        if counts[k] < MIN_FLOW_COUNT:
            raise ConfigError(f"chart.count: axis {k} has {counts[k]} nodes, flow runs need at least {MIN_FLOW_COUNT}",
                              "chart.count")
    axes = tuple(AxisGrid(lower[k], upper[k], counts[k], periodic=periodic[k]) for k in range(d))
    return GridChart(n, m, axes)


def _spd_or_raise(block: np.ndarray, key: str) -> None:
    if not np.allclose(block, np.swapaxes(block, -1, -2)):
        raise ConfigError(f"{key}: metric block must be symmetric", key)
    if np.min(np.linalg.eigvalsh(block)) <= 0:
        raise ConfigError(f"{key}: metric block must be positive definite", key)


def _read_metric(r: _Reader, preset: str, chart: GridChart) -> tuple[DMetric, dict]:
    n, m = chart.n, chart.m
    extras = {}
    if preset == "flat":
        return DMetric.flat(chart), extras
    if preset == "sphere-h":
        radius = r.number("metric", "radius", 1.0)
        if radius <= 0:
            raise ConfigError("metric.radius: must be positive", "metric.radius")
        th = chart.coordinates()[0]
        if np.min(np.sin(th)) <= 1e-6:
            raise ConfigError("chart.lower: the sphere chart must stay away from the poles", "chart.lower")
        gh = np.zeros(chart.shape + (2, 2))
        gh[..., 0, 0] = radius**2
        gh[..., 1, 1] = radius**2 * np.sin(th) ** 2
        return DMetric(chart, gh, np.ones(chart.shape + (1, 1))), extras
    if preset == "perturbed-torus":
        eps = r.number("metric", "eps", 0.05)
        if abs(eps) >= 1:
            raise ConfigError("metric.eps: must satisfy |eps| < 1", "metric.eps")
        x1, x2 = chart.coordinates()[:2]
        conf = 1.0 + eps * np.sin(x1) * np.cos(x2)
        gh = conf[..., None, None] * np.eye(2)
        return DMetric(chart, gh, np.ones(chart.shape + (1, 1))), extras
    h = np.array(r.numbers("metric", "h", list(np.eye(n).ravel()), n * n)).reshape(n, n)
    v = np.array(r.numbers("metric", "v", list(np.eye(m).ravel()), m * m)).reshape(m, m)
    _spd_or_raise(h, "metric.h")
    _spd_or_raise(v, "metric.v")
    gh = np.broadcast_to(h, chart.shape + (n, n)).copy()
    gv = np.broadcast_to(v, chart.shape + (m, m)).copy()
    return DMetric(chart, gh, gv), extras


def _read_nconn(r: _Reader, chart: GridChart) -> NConnectionField:
    n, m, d = chart.n, chart.m, chart.dim
    preset = r.text("nconnection", "preset", "zero", N_PRESETS)
    if preset == "zero":
        return NConnectionField.zero(chart)
    const = np.array(r.numbers("nconnection", "constant", [0.0] * (n * m), n * m)).reshape(n, m)
    coeffs = np.broadcast_to(const, chart.shape + (n, m)).copy()
    if preset == "polynomial":
        lin = np.array(r.numbers("nconnection", "linear", [0.0] * (n * m * d), n * m * d)).reshape(n, m, d)
        coords = chart.coordinates()
        for k in range(d):
            coeffs += coords[k][..., None, None] * lin[..., k]
    return NConnectionField(chart, coeffs)


def _read_potential(r: _Reader, chart: GridChart, metric_preset: str) -> tuple[np.ndarray, float]:
    preset = r.text("potential", "preset", "scenario" if metric_preset == "perturbed-torus" else "zero", F_PRESETS)
    tau = r.number("potential", "tau", 1.0)
    if tau <= 0:
        raise ConfigError("potential.tau: must be positive", "potential.tau")
    if preset == "zero":
        return np.zeros(chart.shape), tau
    if preset == "constant":
        return np.full(chart.shape, r.number("potential", "value", 0.0)), tau
    if metric_preset != "perturbed-torus":
        raise ConfigError("potential.preset: 'scenario' is only defined for metric preset perturbed-torus",
                          "potential.preset")
    amp = r.number("potential", "amplitude", 0.1)
    x1, x2, y = chart.coordinates()
    return amp * (np.cos(x1) + 0.5 * np.sin(x2 + 0.3) + 0.3 * np.cos(y)), tau


def _read_flow(r: _Reader) -> FlowConfig:
    alpha = r.number("flow", "alpha", 1.0)
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"flow.alpha: must lie in (0, 1], got {alpha:g}", "flow.alpha")
    step = r.number("flow", "step", 1e-3)
    if step <= 0:
        raise ConfigError("flow.step: must be positive", "flow.step")
    steps = r.integer("flow", "steps", 10)
    if steps < 1:
        raise ConfigError("flow.steps: must be at least 1", "flow.steps")
    max_extent = r.number("flow", "max_extent", 10.0)
    if step * steps > max_extent:
        raise ConfigError(f"flow.steps: step * steps = {step * steps:g} exceeds flow.max_extent = {max_extent:g}",
                          "flow.steps")
    return FlowConfig(
        alpha=alpha,
        step=step,
        steps=steps,
        mode=r.text("flow", "mode", "canonical", MODES),
        normalization=r.text("flow", "normalization", "none", NORMALIZATIONS),
        potential=r.text("flow", "potential", "off", POTENTIALS),
        evolve_n=r.flag("flow", "evolve_n", False),
        w_norm_squared=r.flag("flow", "w_norm_squared", False),
        max_extent=max_extent,
    )


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from None
    known = {"scenario", "chart", "metric", "nconnection", "potential", "flow", "output"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"{section}: unknown section", section)
    r = _Reader(parser)
    name = r.raw("scenario", "name", Path(source).stem)
    preset = r.text("metric", "preset", "flat", METRIC_PRESETS)
    chart = _read_chart(r, preset)
    metric, extras = _read_metric(r, preset, chart)
    nconn = _read_nconn(r, chart)
    f, tau = _read_potential(r, chart, preset)
    flow = _read_flow(r)
    out = r.raw("output", "path")
    fmt = r.text("output", "format", "csv", FORMATS)
    return ScenarioConfig(name, chart, metric, nconn, f, tau, flow, Path(out) if out else None, fmt, extras)


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


# --------------------------------------------------------------------------
# output


def format_float(x: float) -> str:
    return "%.17g" % x


class RecordWriter:
    """Streams step records as CSV (with header) or JSON lines, flushing each row."""

    def __init__(self, stream: TextIO, fmt: str):
        self.stream = stream
        self.fmt = fmt
        if fmt == "csv":
            stream.write(",".join(StepRecord.COLUMNS) + "\n")
            stream.flush()

    def write(self, rec: StepRecord) -> None:
        values = rec.row()
        if self.fmt == "csv":
            cells = [str(v) if isinstance(v, int) else format_float(v) for v in values]
            self.stream.write(",".join(cells) + "\n")
        else:
            parts = []
            for key, v in zip(StepRecord.COLUMNS, values):
                if isinstance(v, int):
                    cell = str(v)
                elif math.isfinite(v):
                    cell = format_float(v)
                else:
                    cell = "null"
                parts.append(f"{json.dumps(key)}: {cell}")
            self.stream.write("{" + ", ".join(parts) + "}\n")
        self.stream.flush()


# --------------------------------------------------------------------------
# caputo table


def parse_preset(text: str) -> tuple[str, float | None]:
    text = text.strip().lower()
    if text in ("constant", "sin"):
        return text, None
    match = re.fullmatch(r"power(?:[:(]\s*([-+0-9.eE]+)\s*\)?)?", text)
    if match:
        beta = float(match.group(1)) if match.group(1) else 2.0
        if beta < 0:
            raise ConfigError("preset: power exponent must be non-negative", "preset")
        return "power", beta
    raise ConfigError(f"preset: unknown preset {text!r}; use constant, power(beta) or sin", "preset")


def sin_caputo_reference(x: np.ndarray, alpha: float, terms: int = 40) -> np.ndarray:
    """Closed-form Caputo derivative of ``sin`` with terminal 0, as a power series."""
    if alpha == 1.0:
        return np.cos(x)
    out = np.zeros_like(x)
    for k in range(terms):
        p = 2 * k + 1 - alpha
        out += (-1) ** k * x**p / gamma(p + 1.0)
    return out


def caputo_table(preset: str, alpha: float, count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    kind, beta = parse_preset(preset)
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"alpha: must lie in (0, 1], got {alpha:g}", "alpha")
    if count < 3:
        raise ConfigError("count: need at least 3 nodes", "count")
    grid = AxisGrid(0.0, 1.0, count)
    x = grid.nodes
    if kind == "constant":
        values, ref = np.ones(count), np.zeros(count)
    elif kind == "sin":
        values, ref = np.sin(x), sin_caputo_reference(x, alpha)
    else:
        values = x**beta
        if beta == 0.0:
            ref = np.zeros(count)
        else:
            ref = gamma(beta + 1.0) / gamma(beta + 1.0 - alpha) * x ** (beta - alpha)
    num = caputo_left(SampledCurve(grid, values), alpha).values
    return x, num, ref


# --------------------------------------------------------------------------
# commands


def _thread_limit() -> int | None:
    raw = os.environ.get("FRACFLOW_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FRACFLOW_THREADS: expected an integer, got {raw!r}", "FRACFLOW_THREADS") from None
    if n < 0:
        raise ConfigError("FRACFLOW_THREADS: must be >= 0", "FRACFLOW_THREADS")
    return n or None


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else cfg.out
    if out is None:
        raise ConfigError("output.path: no output path in the config and no --out given", "output.path")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as stream:
        writer = RecordWriter(stream, cfg.fmt)
        try:
            evolve(cfg.flow, cfg.initial_state(), on_record=writer.write)
        except FlowSingularity as exc:
            print(f"fracflow: {exc}; {len(exc.records)} rows written to {out}", file=sys.stderr)
            return EXIT_SINGULAR
    return EXIT_OK


def cmd_caputo(args) -> int:
    x, num, ref = caputo_table(args.preset, args.alpha, args.count)
    print("x,numerical,reference,abs_error")
    for row in zip(x, num, ref, np.abs(num - ref)):
        print(",".join(format_float(v) for v in row))
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .acceptance import run_all
    from .connection import fault_injection

    only = tuple(args.only) if args.only else None
    ctx = fault_injection(args.inject) if args.inject else contextlib.nullcontext()
    with ctx:
        results = run_all(emit=print, only=only)
    ok = all(r.passed for r in results)
    print(f"selftest: {sum(r.passed for r in results)}/{len(results)} passed")
    return EXIT_OK if ok else EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracflow", description="Fractional Ricci flow on nonholonomic charts.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="evolve a configured scenario and write per-step records")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.set_defaults(func=cmd_run)
    cap = sub.add_parser("caputo", help="tabulate the Caputo derivative of a preset function on [0, 1]")
    cap.add_argument("--preset", required=True, help="constant, power(beta) / power:beta, or sin")
    cap.add_argument("--alpha", type=float, required=True)
    cap.add_argument("--count", type=int, default=256)
    cap.set_defaults(func=cmd_caputo)
    st = sub.add_parser("selftest", help="run the acceptance suite")
    st.add_argument("--only", type=int, nargs="+", help="run only these criterion numbers")
    st.add_argument("--inject", help=argparse.SUPPRESS)
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        limit = _thread_limit()
        with threadpool_limits(limits=limit) if limit else contextlib.nullcontext():
            return args.func(args)
    except ConfigError as exc:
        print(f"fracflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
