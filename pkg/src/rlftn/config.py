"""Run configuration: a flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored. Example::

    model = chain
    S = 0.5
    L = 16
    h = 1.0
    chi = 32
    delta_e = 1e-10

``h_grid`` (comma separated) lists several fields for ``bench-compare``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .models import ChainModel, CylinderModel, _as_spin
from .tebd import TebdConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text", "emit_config"]


class ConfigError(ValueError):
    def __init__(self, message, line=None, source="<config>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line
        self.source = source


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _opt_int(v):
    return None if v.lower() in ("none", "auto", "") else int(v)


def _bool(v):
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    return tuple(float(x) for x in v.split(",") if x.strip())


def _choice(*opts):
    def conv(v):
        if v not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}, got {v!r}")
        return v
    return conv


KEYS = {
    "model": _choice("chain", "cylinder"),
    "S": _float,
    "W": _int,
    "L": _int,
    "h": _float,
    "h_grid": _floats,
    "chi": _int,
    "delta_e": _float,
    "dt0": _float,
    "step_factor": _float,
    "check_interval": _int,
    "dt_min": _float,
    "method": _choice("tsvd", "rsvd"),
    "oversample": _opt_int,
    "power": _int,
    "gate_form": _choice("B", "P"),
    "seed": _int,
    "dtype": _choice("auto", "real", "complex"),
    "policy": _choice("per_sector_estimate", "maximal"),
    "slack": _opt_int,
    "min_rsvd_dim": _int,
    "debug": _bool,
    "max_sweeps": _opt_int,
    "repeats": _int,
    "out": str,
}
REQUIRED = ("model", "L", "h", "chi")
TEBD_KEYS = {f.name for f in fields(TebdConfig)}


@dataclass(frozen=True)
class RunConfig:
    model: str
    L: int
    h: float
    chi: int
    S: float | None = None
    W: int | None = None
    h_grid: tuple = ()
    tebd: TebdConfig = field(default=None)
    repeats: int = 1
    out: str = "out"

    def build_model(self, h: float | None = None):
        h = self.h if h is None else h
        if self.model == "chain":
            return ChainModel(self.L, h, self.S)
        return CylinderModel(self.L, self.W, h)

    @property
    def fields_to_run(self) -> tuple:
        return self.h_grid or (self.h,)

    def with_overrides(self, **kw) -> "RunConfig":
        """Replace TEBD settings (e.g. ``method``, ``seed``) after validation."""
        kw = {k: v for k, v in kw.items() if v is not None}
        top = {k: kw.pop(k) for k in list(kw) if k in ("out", "repeats")}
        tebd = replace(self.tebd, **kw) if kw else self.tebd
        return replace(self, tebd=tebd, **top)


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    raw, lines = {}, {}
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", n, source)
        key, val = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", n, source)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", n, source)
        try:
            raw[key] = KEYS[key](val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", n, source) from None
        lines[key] = n

    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}", None, source)
    model = raw["model"]
    need, forbid = ("S", "W") if model == "chain" else ("W", "S")
    if need not in raw:
        raise ConfigError(f"{model} model needs key {need!r}", None, source)
    if forbid in raw:
        raise ConfigError(f"key {forbid!r} does not apply to the {model} model", lines[forbid], source)

    def check(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}", lines.get(key), source)

    check(raw["L"] >= 2, "L", "must be >= 2")
    check(raw["chi"] >= 1, "chi", "must be >= 1")
    if model == "chain":
        try:
            _as_spin(raw["S"])
        except ValueError as exc:
            raise ConfigError(str(exc), lines["S"], source) from None
    else:
        check(2 <= raw["W"] <= 8, "W", "must lie in [2, 8]")
    if "repeats" in raw:
        check(raw["repeats"] >= 1, "repeats", "must be >= 1")

    tebd_kw = {k: v for k, v in raw.items() if k in TEBD_KEYS}
    try:
        tebd = TebdConfig(**tebd_kw)
    except ValueError as exc:
        bad = next((k for k in tebd_kw if k in str(exc)), None)
        raise ConfigError(str(exc), lines.get(bad), source) from None
    return RunConfig(
        model=model,
        L=raw["L"],
        h=raw["h"],
        chi=raw["chi"],
        S=raw.get("S"),
        W=raw.get("W"),
        h_grid=raw.get("h_grid", ()),
        tebd=tebd,
        repeats=raw.get("repeats", 1),
        out=raw.get("out", "out"),
    )


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config_text(text, str(path))


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    """Canonical text with every key spelled out; parses back to ``cfg``."""
    out = [f"model = {cfg.model}"]
    out.append(f"S = {_fmt(float(cfg.S))}" if cfg.model == "chain" else f"W = {cfg.W}")
    out += [f"L = {cfg.L}", f"h = {_fmt(float(cfg.h))}"]
    if cfg.h_grid:
        out.append(f"h_grid = {_fmt(tuple(cfg.h_grid))}")
    for f in fields(TebdConfig):
        out.append(f"{f.name} = {_fmt(getattr(cfg.tebd, f.name))}")
    out += [f"repeats = {cfg.repeats}", f"out = {cfg.out}"]
    return "\n".join(out) + "\n"
