"""Run configuration: a small INI schema for driving experiments.

One file describes one run: lattice geometry, couplings, drive protocol
and frequency, initial state, and what to record.  Parsing is strict;
unknown sections or keys are rejected so that typos fail loudly instead
of silently falling back to defaults.  The resolved form (every default
filled in) is written next to each run's outputs.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

from .lattice import Boundary, LatticeSpec
from .magnus import DriveProtocol, make_protocol
from .operators import ModelParams
from .engine import protocol_quench, uniform_vacuum_pattern, staggered_vacuum_pattern

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

_PROTOCOLS = ("simple", "full", "quench", "effective")
_PATTERN_KEYWORDS = ("uniform_vacuum", "staggered_vacuum")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters for one experiment run."""

    n_sites: int
    gauge_spin: float = 0.5
    boundary: Boundary = Boundary.PBC
    J: float = 1.0
    K: float = 4.0
    h: float = 0.0
    eps1: float = 0.0
    eps2: float = 0.0
    protocol: str = "full"
    base: str = "full"
    orders: tuple[int, ...] = (0, 1, 2)
    frequency: float | None = None
    spacing: float | None = None
    n_periods: int = 1000
    stride: int | None = None
    initial: str = "uniform_vacuum"
    observables: tuple[str, ...] | None = None
    dense_cap: int = 4096

    def __post_init__(self) -> None:
        if self.protocol not in _PROTOCOLS:
            raise ConfigError(f"protocol must be one of {_PROTOCOLS}, got {self.protocol!r}")
        if self.base not in ("simple", "full"):
            raise ConfigError(f"base must be simple or full, got {self.base!r}")
        if (self.frequency is None) == (self.spacing is None):
            raise ConfigError("exactly one of drive.frequency and drive.spacing is required")
        given = self.frequency if self.spacing is None else self.spacing
        if given <= 0:
            raise ConfigError("drive frequency/spacing must be positive")
        if self.n_periods < 1:
            raise ConfigError("n_periods must be at least 1")
        if any(o not in (0, 1, 2) for o in self.orders):
            raise ConfigError(f"orders must be drawn from 0,1,2, got {self.orders}")
        if self.stride is not None and self.stride < 1:
            raise ConfigError("stride must be positive")

    # -- derived objects ---------------------------------------------------

    def lattice(self) -> LatticeSpec:
        return LatticeSpec(self.n_sites, gauge_spin=self.gauge_spin, boundary=self.boundary)

    def params(self) -> ModelParams:
        return ModelParams(J=self.J, K=self.K, h=self.h, eps1=self.eps1, eps2=self.eps2)

    def drive_label(self) -> str:
        return self.base if self.protocol == "effective" else self.protocol

    def spacing_value(self) -> float:
        """Frame spacing of the underlying drive.

        A frequency f means 1/(K T_period): the period is 1/(K f) and the
        spacing follows from the protocol's schedule; quench reads the
        period as its time step.
        """
        if self.spacing is not None:
            return self.spacing
        t_period = 1.0 / (self.K * self.frequency)
        label = self.drive_label()
        if label == "simple":
            return t_period / (2.0 + self.J / self.K)
        if label == "full":
            return t_period / (8.0 * (2.0 + self.J / self.K))
        return t_period

    def build_protocol(self) -> DriveProtocol:
        label = self.drive_label()
        spec = self.lattice()
        if label == "quench":
            return protocol_quench(spec, self.params(), self.spacing_value())
        return make_protocol(label, spec, self.params(), self.spacing_value())

    def initial_pattern(self) -> str:
        if self.initial == "uniform_vacuum":
            return uniform_vacuum_pattern(self.lattice())
        if self.initial == "staggered_vacuum":
            return staggered_vacuum_pattern(self.lattice())
        return self.initial

    # -- serialization -----------------------------------------------------

    def resolved(self) -> str:
        """INI text with every field explicit, for provenance."""
        cp = configparser.ConfigParser()
        cp["lattice"] = {
            "n_sites": str(self.n_sites),
            "gauge_spin": repr(self.gauge_spin),
            "boundary": self.boundary.name,
        }
        cp["couplings"] = {
            "J": repr(self.J), "K": repr(self.K), "h": repr(self.h),
            "eps1": repr(self.eps1), "eps2": repr(self.eps2),
        }
        drive = {"protocol": self.protocol, "n_periods": str(self.n_periods)}
        if self.protocol == "effective":
            drive["base"] = self.base
            drive["orders"] = ",".join(str(o) for o in self.orders)
        if self.frequency is not None:
            drive["frequency"] = repr(self.frequency)
        else:
            drive["spacing"] = repr(self.spacing)
        if self.stride is not None:
            drive["stride"] = str(self.stride)
        cp["drive"] = drive
        run = {"initial": self.initial, "dense_cap": str(self.dense_cap)}
        run["observables"] = "all" if self.observables is None else ",".join(self.observables)
        cp["run"] = run
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


_SCHEMA = {
    "lattice": {"n_sites", "gauge_spin", "boundary"},
    "couplings": {"j", "k", "h", "eps1", "eps2"},
    "drive": {"protocol", "base", "orders", "frequency", "spacing", "n_periods", "stride"},
    "run": {"initial", "observables", "dense_cap"},
}


def _get(cp: configparser.ConfigParser, section: str, key: str, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp.options(section):
            if key.lower() not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    if not cp.has_section("lattice") or not cp.has_option("lattice", "n_sites"):
        raise ConfigError("required key missing: [lattice] n_sites")

    def boundary(raw: str) -> Boundary:
        try:
            return Boundary[raw.strip().upper()]
        except KeyError:
            raise ValueError(f"boundary must be PBC or OBC, got {raw!r}")

    def orders(raw: str) -> tuple[int, ...]:
        return tuple(int(p) for p in raw.split(",") if p.strip())

    def observables(raw: str) -> tuple[str, ...] | None:
        raw = raw.strip()
        if raw.lower() == "all":
            return None
        return tuple(p.strip() for p in raw.split(",") if p.strip())

    kwargs = dict(
        n_sites=_get(cp, "lattice", "n_sites", int, None),
        gauge_spin=_get(cp, "lattice", "gauge_spin", float, 0.5),
        boundary=_get(cp, "lattice", "boundary", boundary, Boundary.PBC),
        J=_get(cp, "couplings", "j", float, 1.0),
        K=_get(cp, "couplings", "k", float, 4.0),
        h=_get(cp, "couplings", "h", float, 0.0),
        eps1=_get(cp, "couplings", "eps1", float, 0.0),
        eps2=_get(cp, "couplings", "eps2", float, 0.0),
        protocol=_get(cp, "drive", "protocol", str.strip, "full"),
        base=_get(cp, "drive", "base", str.strip, "full"),
        orders=_get(cp, "drive", "orders", orders, (0, 1, 2)),
        frequency=_get(cp, "drive", "frequency", float, None),
        spacing=_get(cp, "drive", "spacing", float, None),
        n_periods=_get(cp, "drive", "n_periods", int, 1000),
        stride=_get(cp, "drive", "stride", int, None),
        initial=_get(cp, "run", "initial", str.strip, "uniform_vacuum"),
        observables=_get(cp, "run", "observables", observables, None),
        dense_cap=_get(cp, "run", "dense_cap", int, 4096),
    )
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
