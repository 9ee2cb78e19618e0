"""Experiment configuration files.

Configs are INI files with fixed sections; every key is optional and falls
back to the dataclass defaults below.  Step sizes may be written as powers of two,
``2^-13``.  Lists are comma separated.

    [scheme]   scheme K T dt x0 dt0
    [noise]    kind gamma scale
    [error]    norm time p samples
    [rates]    dts dt_ref
    [probe]    dts functionals c targets substeps samples
    [run]      seed threads bit_repro record_every name
"""

from __future__ import annotations

import configparser
import io
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .error_lab import ErrorSpec, parse_functional
from .errors import ConfigurationError
from .integrators import SchemeConfig
from .noise import QSpec, coarsening_factor

SECTIONS = {
    "scheme": ("scheme", "K", "T", "dt", "x0", "dt0"),
    "noise": ("kind", "gamma", "scale"),
    "error": ("norm", "time", "p", "samples"),
    "rates": ("dts", "dt_ref"),
    "probe": ("dts", "functionals", "c", "targets", "substeps", "samples"),
    "run": ("seed", "threads", "bit_repro", "record_every", "name"),
}

_POW2 = re.compile(r"^\s*2\s*\^\s*(-?\d+)\s*$")


def parse_number(text, key):
    m = _POW2.match(text)
    try:
        return 2.0 ** int(m.group(1)) if m else float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse number {text!r}", key=key) from None


def format_number(x):
    """Inverse of :func:`parse_number`; exact powers of two stay symbolic."""
    x = float(x)
    if 0 < x < 1 and math.frexp(x)[0] == 0.5:
        return f"2^{math.frexp(x)[1] - 1}"
    return repr(x)


def _list(text, key, conv):
    items = [t.strip() for t in re.split(r"[,;]", text) if t.strip()]
    return [conv(t, key) for t in items]


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    error: ErrorSpec = field(default_factory=ErrorSpec)
    dts: tuple = ()
    dt_ref: float = 2.0**-13
    probe_dts: tuple = ()
    functionals: tuple = ()
    c: float = 1.0
    targets: tuple = ()
    substeps: int = 4
    probe_samples: int = 200
    seed: int = 0
    threads: int = 0
    bit_repro: bool = False
    record_every: int = 1
    name: str = "experiment"

    def __post_init__(self):
        for dt in self.dts:
            try:
                m = coarsening_factor(dt, self.dt_ref)
            except ConfigurationError:
                raise ConfigurationError(
                    f"dt_ref={self.dt_ref!r} does not divide dt={dt!r}", key="rates.dt_ref") from None
            if m < 8:
                raise ConfigurationError(
                    f"dt_ref={self.dt_ref!r} must be at most dt/8 for dt={dt!r}", key="rates.dt_ref")
            n = self.scheme.T / dt
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise ConfigurationError(f"T={self.scheme.T} is not a multiple of dt={dt!r}", key="rates.dts")
        for dt in self.probe_dts:
            try:
                replace(self.scheme, dt=dt)
            except ConfigurationError as exc:
                raise ConfigurationError(str(exc), key="probe.dts") from None
        for f in self.functionals:
            try:
                parse_functional(f)
            except ConfigurationError as exc:
                raise ConfigurationError(str(exc), key="probe.functionals") from None
        for t in self.targets:
            if t not in ("XN", "ZN"):
                raise ConfigurationError(f"unknown probe target {t!r}", key="probe.targets")
        if self.substeps < 1:
            raise ConfigurationError("substeps must be positive", key="probe.substeps")
        if self.threads < 0:
            raise ConfigurationError("threads must be >= 0", key="run.threads")

    @property
    def effective_threads(self):
        return 1 if self.bit_repro else self.threads


def _get(cp, section, key):
    return cp.get(section, key) if cp.has_option(section, key) else None


def parse_config(text):
    """Parse INI text into an :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown section [{section}]", key=section)
        for key in cp[section]:
            if key not in SECTIONS[section]:
                raise ConfigurationError(f"unknown key {section}.{key}", key=f"{section}.{key}")

    def num(section, key, default, conv=float):
        raw = _get(cp, section, key)
        if raw is None:
            return default
        value = parse_number(raw, f"{section}.{key}")
        if conv is int:
            if value != int(value):
                raise ConfigurationError(f"{section}.{key} must be an integer", key=f"{section}.{key}")
            return int(value)
        return value

    def text_(section, key, default):
        raw = _get(cp, section, key)
        return default if raw is None else raw.strip()

    def build(cls, section, **kw):
        try:
            return cls(**kw)
        except ConfigurationError as exc:
            exc.key = f"{section}.{exc.key}" if exc.key else section
            exc.args = (f"{exc.key}: {exc}",)
            raise

    d = SchemeConfig()
    noise = build(QSpec, "noise", kind=text_("noise", "kind", "white"),
                  gamma=num("noise", "gamma", 0.0), scale=num("noise", "scale", 1.0))
    scheme = build(SchemeConfig, "scheme", scheme=text_("scheme", "scheme", d.scheme),
                   K=num("scheme", "K", d.K, int), T=num("scheme", "T", d.T),
                   dt=num("scheme", "dt", d.dt), x0=text_("scheme", "x0", d.x0),
                   dt0=num("scheme", "dt0", d.dt0), noise=noise)
    e = ErrorSpec()
    error = build(ErrorSpec, "error", norm=text_("error", "norm", e.norm),
                  time=text_("error", "time", e.time), p=num("error", "p", e.p),
                  samples=num("error", "samples", e.samples, int))

    def numlist(section, key):
        raw = _get(cp, section, key)
        return () if raw is None else tuple(_list(raw, f"{section}.{key}", parse_number))

    def strlist(section, key):
        raw = _get(cp, section, key)
        return () if raw is None else tuple(t.strip() for t in re.split(r"[;,]", raw) if t.strip())

    bit = text_("run", "bit_repro", "false").lower()
    if bit not in ("true", "false", "1", "0", "yes", "no"):
        raise ConfigurationError(f"run.bit_repro must be a boolean, got {bit!r}", key="run.bit_repro")
    kw = dict(
        scheme=scheme, error=error,
        dts=numlist("rates", "dts"), dt_ref=num("rates", "dt_ref", 2.0**-13),
        probe_dts=numlist("probe", "dts"), functionals=strlist("probe", "functionals"),
        c=num("probe", "c", 1.0), targets=strlist("probe", "targets"),
        substeps=num("probe", "substeps", 4, int), probe_samples=num("probe", "samples", 200, int),
        seed=num("run", "seed", 0, int), threads=num("run", "threads", 0, int),
        bit_repro=bit in ("true", "1", "yes"), record_every=num("run", "record_every", 1, int),
        name=text_("run", "name", "experiment"),
    )
    return ExperimentConfig(**kw)


def serialize_config(cfg):
    """Canonical INI text; ``parse_config(serialize_config(c)) == c``."""
    s, n, e = cfg.scheme, cfg.scheme.noise, cfg.error
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["scheme"] = {"scheme": s.scheme, "K": str(s.K), "T": format_number(s.T),
                    "dt": format_number(s.dt), "x0": s.x0, "dt0": format_number(s.dt0)}
    cp["noise"] = {"kind": n.kind, "gamma": repr(n.gamma), "scale": repr(n.scale)}
    cp["error"] = {"norm": e.norm, "time": e.time, "p": repr(float(e.p)), "samples": str(e.samples)}
    cp["rates"] = {"dt_ref": format_number(cfg.dt_ref)}
    if cfg.dts:
        cp["rates"]["dts"] = ", ".join(format_number(d) for d in cfg.dts)
    cp["probe"] = {"c": repr(float(cfg.c)), "substeps": str(cfg.substeps),
                   "samples": str(cfg.probe_samples)}
    if cfg.probe_dts:
        cp["probe"]["dts"] = ", ".join(format_number(d) for d in cfg.probe_dts)
    if cfg.functionals:
        cp["probe"]["functionals"] = "; ".join(cfg.functionals)
    if cfg.targets:
        cp["probe"]["targets"] = ", ".join(cfg.targets)
    cp["run"] = {"seed": str(cfg.seed), "threads": str(cfg.threads),
                 "bit_repro": str(cfg.bit_repro).lower(), "record_every": str(cfg.record_every),
                 "name": cfg.name}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def preset_names():
    root = resources.files("acsplit") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_config(path_or_preset):
    """Read a config file, or a bundled preset by name."""
    p = Path(path_or_preset)
    if p.is_file():
        return parse_config(p.read_text())
    name = str(path_or_preset)
    res = resources.files("acsplit") / "presets" / f"{name}.ini"
    if res.is_file():
        return parse_config(res.read_text())
    raise ConfigurationError(f"no config file or preset named {name!r}", key="config")


def with_overrides(cfg, **kw):
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg

