"""Command-line experiment runner.

Subcommands compose the library modules into reproducible runs driven by
INI config files; every run directory receives the data files plus the
fully resolved configuration, and identical inputs produce identical
bytes.  Plot output is plain two-column gnuplot .dat text next to the
CSVs; nothing renders images.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import io
import sys
from pathlib import Path

import numpy as np

from . import analysis, qmm
from .config import ConfigError, RunConfig, load_config, parse_config
from .engine import (
    EngineError,
    StateSpace,
    StateVector,
    TimeSeries,
    run_effective,
    run_floquet,
)
from .lattice import SectorError, parse_pattern
from .magnus import ProtocolError, magnus_order_check, make_protocol

__all__ = ["main"]

_ERRORS = (ConfigError, EngineError, ProtocolError, qmm.QmmError, analysis.AnalysisError, SectorError)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _emit_dat(out: Path, ts: TimeSeries, names: list[str]) -> None:
    for name in names:
        lines = [f"# t {name}"]
        values = ts.column(name)
        for t, v in zip(ts.times, values):
            lines.append(f"{t:.12g} {v:.12g}")
        _write(out / f"{name}.dat", "\n".join(lines) + "\n")


def _select_columns(ts: TimeSeries, wanted: tuple[str, ...] | None) -> TimeSeries:
    if wanted is None:
        return ts
    missing = [w for w in wanted if w not in ts.columns]
    if missing:
        raise EngineError(
            f"unknown observable(s) {missing}; available: {sorted(ts.columns)}"
        )
    return TimeSeries(ts.steps, ts.times, {w: ts.columns[w] for w in wanted}, ts.metadata)


def _execute_run(cfg: RunConfig) -> TimeSeries:
    spec = cfg.lattice()
    index = parse_pattern(spec, cfg.initial_pattern())
    space = StateSpace.enclosing(spec, index)
    initial = StateVector.from_index(space, index)
    protocol = cfg.build_protocol()
    if cfg.protocol == "effective":
        return run_effective(
            protocol, initial, cfg.n_periods, stride=cfg.stride,
            orders=cfg.orders, dense_cap=cfg.dense_cap,
        )
    return run_floquet(
        protocol, initial, cfg.n_periods, stride=cfg.stride, dense_cap=cfg.dense_cap
    )


def cmd_run(cfg: RunConfig, out: Path) -> int:
    ts = _execute_run(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "resolved.ini", cfg.resolved())
    if cfg.observables is not None and len(cfg.observables) == 0:
        _write(out / "timeseries.csv", "step,t\n")
        return 0
    kept = _select_columns(ts, cfg.observables)
    kept.to_csv(out / "timeseries.csv")
    _emit_dat(out, kept, list(kept.columns))
    return 0


def _override(cfg: RunConfig, parameter: str, raw_value: str) -> RunConfig:
    if "." not in parameter:
        raise ConfigError(f"parameter must look like section.key, got {parameter!r}")
    section, key = parameter.split(".", 1)
    cp = configparser.ConfigParser()
    cp.read_string(cfg.resolved())
    if not cp.has_section(section):
        raise ConfigError(f"unknown section {section!r} in parameter")
    if section == "drive" and key in ("frequency", "spacing"):
        cp.remove_option("drive", "frequency")
        cp.remove_option("drive", "spacing")
    cp.set(section, key, raw_value)
    buf = io.StringIO()
    cp.write(buf)
    return parse_config(buf.getvalue())


def _sweep_one(config_text: str, column: str, threshold: float | None):
    cfg = parse_config(config_text)
    ts = _execute_run(cfg)
    tau = analysis.lifetime(ts, column, threshold)
    return ts, tau


def cmd_sweep(
    cfg: RunConfig,
    parameter: str,
    values: list[str],
    out: Path,
    workers: int,
    column: str,
    threshold: float | None,
) -> int:
    configs = [_override(cfg, parameter, v) for v in values]
    texts = [c.resolved() for c in configs]
    results: list[tuple[str, object]] = []
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_one, t, column, threshold) for t in texts]
            for v, fut in zip(values, futures):
                try:
                    results.append((v, fut.result()))
                except _ERRORS as exc:
                    results.append((v, exc))
    else:
        for v, text in zip(values, texts):
            try:
                results.append((v, _sweep_one(text, column, threshold)))
            except _ERRORS as exc:
                results.append((v, exc))

    key = parameter.split(".", 1)[1]
    rows = ["value,lifetime,status"]
    dat = [f"# {parameter} lifetime({column})"]
    failed = False
    for (v, res), sub in zip(results, configs):
        subdir = out / f"{key}-{v}"
        if isinstance(res, Exception):
            rows.append(f"{v},,error: {res}")
            failed = True
            continue
        ts, tau = res
        subdir.mkdir(parents=True, exist_ok=True)
        _write(subdir / "resolved.ini", sub.resolved())
        ts.to_csv(subdir / "timeseries.csv")
        if isinstance(tau, analysis.Censored):
            rows.append(f"{v},,censored at {tau.horizon:.12g}")
        else:
            rows.append(f"{v},{tau:.12g},ok")
            dat.append(f"{v} {tau:.12g}")
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "resolved.ini", cfg.resolved())
    _write(out / "sweep.csv", "\n".join(rows) + "\n")
    _write(out / "sweep.dat", "\n".join(dat) + "\n")
    print("\n".join(rows))
    return 3 if failed else 0


def cmd_qmm_compare(cfg: RunConfig, out: Path) -> int:
    spec = cfg.lattice()
    index = parse_pattern(spec, cfg.initial_pattern())
    marble = qmm.map_full_to_qmm(spec, index)
    basis = qmm.enumerate_qmm_basis(
        spec.n_sites, marble.n_defects, marble.n_kinks, spec.boundary
    )
    label = cfg.drive_label()
    if label not in ("simple", "full"):
        raise ConfigError("qmm-compare needs a simple or full drive (possibly as base)")
    protocol = make_protocol(label, spec, cfg.params(), cfg.spacing_value())
    couplings = qmm.qmm_couplings(protocol)
    h_matrix = qmm.build_qmm_hamiltonian(
        basis,
        J=cfg.J,
        lambda0=couplings["lambda0"] if 1 in cfg.orders else 0.0,
        lambda1=couplings["lambda1"] if 2 in cfg.orders else 0.0,
        lambda2=couplings["lambda2"] if 2 in cfg.orders else 0.0,
    )
    reduced = qmm.run_qmm(
        h_matrix, basis, marble, protocol.t_period, cfg.n_periods, stride=cfg.stride
    )
    space = StateSpace.enclosing(spec, index)
    initial = StateVector.from_index(space, index)
    full = run_effective(
        protocol, initial, cfg.n_periods, stride=cfg.stride,
        orders=cfg.orders, dense_cap=cfg.dense_cap,
    )
    names = [c for c in reduced.columns if c in full.columns]
    devs = qmm.compare_series(full, reduced, names)
    worst = max(devs.values())
    lines = [f"{name} {devs[name]:.6e}" for name in names]
    lines.append(f"max_deviation {worst:.6e}")
    report = "\n".join(lines) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "resolved.ini", cfg.resolved())
    full.to_csv(out / "full_trace.csv")
    reduced.to_csv(out / "qmm_trace.csv")
    _write(out / "report.txt", report)
    print(report, end="")
    return 0


def cmd_magnus_check(cfg: RunConfig, ladder: list[float], out: Path) -> int:
    label = cfg.drive_label()
    if label not in ("simple", "full"):
        raise ConfigError("magnus-check needs a simple or full drive (possibly as base)")
    protocol = make_protocol(label, cfg.lattice(), cfg.params(), cfg.spacing_value())
    scalings = magnus_order_check(protocol, ladder, cap=cfg.dense_cap)
    lines = []
    csv_rows = ["spacing," + ",".join(f"defect_order{n}" for n in sorted(scalings))]
    for i, t in enumerate(ladder):
        row = [f"{t:.12g}"]
        for n in sorted(scalings):
            row.append(f"{scalings[n].defects[i]:.12g}")
        csv_rows.append(",".join(row))
    for n in sorted(scalings):
        sc = scalings[n]
        lines.append(f"order {n}: slope {sc.slope:.4f} intercept {sc.intercept:.4f}")
    report = "\n".join(lines) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "resolved.ini", cfg.resolved())
    _write(out / "report.txt", report)
    _write(out / "defects.csv", "\n".join(csv_rows) + "\n")
    print(report, end="")
    return 0


def cmd_spectrum(segments: list[int], J: float, tol: float | None, out: Path | None) -> int:
    report = analysis.segment_spectrum(segments, J, tol)
    text = report.describe() + "\n"
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "report.txt", text)
    print(text, end="")
    return 0


def cmd_fit(
    csv: Path,
    column: str,
    window: tuple[float, float] | None,
    kind: str,
    threshold: float | None,
    out: Path | None,
) -> int:
    ts = TimeSeries.from_csv(csv)
    if kind == "power":
        fit = analysis.fit_power_law(ts.times, ts.column(column), window)
        text = (
            f"exponent {fit.exponent:.6f}\nprefactor {fit.prefactor:.6g}\n"
            f"window {fit.window[0]:.6g} {fit.window[1]:.6g}\nresidual {fit.residual:.3e}\n"
        )
    else:
        tau = analysis.lifetime(ts, column, threshold)
        if isinstance(tau, analysis.Censored):
            text = f"lifetime censored horizon {tau.horizon:.6g} threshold {tau.threshold:.6g}\n"
        else:
            text = f"lifetime {tau:.6g}\n"
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "report.txt", text)
    print(text, end="")
    return 0


def _floats(raw: str) -> list[float]:
    return [float(p) for p in raw.split(",") if p.strip()]


def _ints(raw: str) -> list[int]:
    return [int(p) for p in raw.split(",") if p.strip()]


def _window(raw: str) -> tuple[float, float]:
    parts = _floats(raw)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("window must be lo,hi")
    return parts[0], parts[1]


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="qlmfloquet",
        description="Drive-protocol experiments on a gauge-invariant spin chain.",
    )
    sub = top.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, type=Path, help="INI run configuration")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel workers (sweep)")
        p.add_argument(
            "--seedless", action="store_true",
            help="reserved; runs are always deterministic",
        )

    p = sub.add_parser("run", help="one time evolution to CSV/.dat")
    add_common(p)

    p = sub.add_parser("sweep", help="repeat a run over parameter values, tabulate lifetimes")
    add_common(p)
    p.add_argument("--parameter", required=True, help="config entry, e.g. drive.frequency")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--column", default="nd_0", help="lifetime column (default nd_0)")
    p.add_argument("--threshold", type=float, default=None, help="crossing threshold")

    p = sub.add_parser("qmm-compare", help="effective evolution vs reduced marble model")
    add_common(p)

    p = sub.add_parser("magnus-check", help="truncation-defect scaling over a spacing ladder")
    add_common(p)
    p.add_argument(
        "--ladder", type=_floats, default=[0.05, 0.04, 0.03, 0.02, 0.015, 0.01],
        help="comma-separated frame spacings",
    )

    p = sub.add_parser("spectrum", help="kink spectra of defect segments")
    p.add_argument("--segments", required=True, type=_ints, help="comma-separated lengths")
    p.add_argument("--amplitude", type=float, default=1.0, help="hop amplitude")
    p.add_argument("--tol", type=float, default=None, help="degeneracy tolerance")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("fit", help="power law or lifetime from a CSV column")
    p.add_argument("--csv", required=True, type=Path)
    p.add_argument("--column", required=True)
    p.add_argument("--window", type=_window, default=None, help="lo,hi time window")
    p.add_argument("--kind", choices=("power", "lifetime"), default="power")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", type=Path, default=None)
    return top


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(load_config(args.config), args.out)
        if args.command == "sweep":
            return cmd_sweep(
                load_config(args.config), args.parameter,
                [v.strip() for v in args.values.split(",") if v.strip()],
                args.out, args.workers, args.column, args.threshold,
            )
        if args.command == "qmm-compare":
            return cmd_qmm_compare(load_config(args.config), args.out)
        if args.command == "magnus-check":
            return cmd_magnus_check(load_config(args.config), args.ladder, args.out)
        if args.command == "spectrum":
            return cmd_spectrum(args.segments, args.amplitude, args.tol, args.out)
        if args.command == "fit":
            return cmd_fit(args.csv, args.column, args.window, args.kind, args.threshold, args.out)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
