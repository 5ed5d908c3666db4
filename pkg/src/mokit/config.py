"""Run configuration: INI or JSON text, strictly validated.

INI layout::

    [phi]
    family = M1
    p = 2 + x

    [domain]
    bounds = 0, 1          # "0,1; 0,1" for the unit square
    resolution = 1000

    [functions]
    u = ind((x > 0.3) and (x < 0.6))

    [run]
    output_dir = out
    seed = 0

    [tolerances]
    norm = 1e-8

    [command.1]
    op = experiment
    name = translation
    u = u
    h = 0.1, 0.05, 0.025

JSON uses the same names with ``commands`` as a list and ``output_dir``
and ``seed`` at the top level.  Unknown keys are errors, reported with a
line and column.
"""

from __future__ import annotations

import configparser
import json
import re
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from .errors import ConfigError

__all__ = ["PhiBlock", "DomainBlock", "Command", "RunConfig", "load_config", "parse_config",
           "ALLOWED_FIELDS"]

OPS = ("norm", "conjugate", "modular", "mollify", "experiment", "validate-phi")
EXPERIMENTS = ("kr", "translation", "mollifier", "truncation", "separation", "sandwich")

# per-command fields beyond op/name
ALLOWED_FIELDS = {
    "norm": {"u", "amemiya"},
    "conjugate": {"x", "s"},
    "modular": {"u", "lam"},
    "mollify": {"u", "eps"},
    "validate-phi": {"k", "h_bound"},
    "experiment:kr": {"r", "s", "h"},
    "experiment:translation": {"u", "h", "threshold"},
    "experiment:mollifier": {"u", "eps", "threshold"},
    "experiment:truncation": {"u", "lam", "j"},
    "experiment:separation": {"mode"},
    "experiment:sandwich": set(),
}
_OPTIONAL_ANYWHERE = {"refinements"}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PhiBlock(_Strict):
    family: str
    p: Optional[Union[float, str]] = None
    q: Optional[float] = None
    a: Optional[Union[float, str]] = None
    expr: Optional[str] = None
    density: Optional[str] = None

    def parameters(self) -> dict:
        out = {}
        for k in ("p", "q", "a", "expr", "density"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v if isinstance(v, str) or k == "q" else repr(float(v))
        return out


class DomainBlock(_Strict):
    bounds: List[List[float]]
    resolution: int = 1000

    @field_validator("bounds", mode="before")
    @classmethod
    def _split(cls, v):
        if isinstance(v, str):
            return [[float(t) for t in part.split(",")] for part in v.split(";") if part.strip()]
        if v and not isinstance(v[0], (list, tuple)):
            return [v]
        return v

    @field_validator("bounds")
    @classmethod
    def _pairs(cls, v):
        if len(v) not in (1, 2) or any(len(b) != 2 for b in v):
            raise ValueError("bounds must be one or two (lo, hi) pairs")
        return v


def _floats(v):
    if isinstance(v, str):
        return [float(t) for t in v.replace(";", ",").split(",") if t.strip()]
    if isinstance(v, (int, float)):
        return [float(v)]
    return v


class Command(_Strict):
    op: Literal[OPS]
    name: Optional[Literal[EXPERIMENTS]] = None
    u: Optional[str] = None
    x: Optional[List[float]] = None
    s: Optional[float] = None
    lam: Optional[float] = None
    eps: Optional[List[float]] = None
    h: Optional[List[float]] = None
    j: Optional[List[int]] = None
    r: Optional[float] = None
    k: Optional[float] = None
    h_bound: Optional[float] = None
    mode: Optional[Literal["delta2", "non_delta2"]] = None
    threshold: Optional[float] = None
    amemiya: Optional[bool] = None
    refinements: Optional[int] = None

    _split = field_validator("x", "eps", "h", "j", mode="before")(lambda cls, v: _floats(v))

    def key(self) -> str:
        return f"experiment:{self.name}" if self.op == "experiment" else self.op

    def given(self) -> set:
        return {k for k, v in self if v is not None} - {"op", "name"}


class Tolerances(_Strict):
    norm: float = 1e-8
    sweep_threshold: Optional[float] = None
    refinements: Optional[int] = None


class RunConfig(_Strict):
    phi: Optional[PhiBlock] = None
    domain: Optional[DomainBlock] = None
    functions: Dict[str, str] = {}
    commands: List[Command] = []
    output_dir: str = "mokit-out"
    seed: int = 0
    tolerances: Tolerances = Tolerances()


# --------------------------------------------------------------------------- positions

class _Locator:
    """Maps a pydantic error location to a (line, column) in the source text."""

    def __init__(self, text: str, kind: str, sections: Optional[list] = None):
        self.lines = text.splitlines()
        self.kind = kind
        self.sections = sections or []

    def _find(self, pattern, start=0):
        rx = re.compile(pattern)
        for i in range(start, len(self.lines)):
            m = rx.search(self.lines[i])
            if m:
                return i, m.start(1) if m.groups() else m.start()
        return None

    def locate(self, loc) -> tuple:
        loc = [str(p) for p in loc]
        if self.kind == "ini":
            section = loc[0] if loc else None
            if section == "commands" and len(loc) > 1 and loc[1].isdigit():
                idx = int(loc[1])
                section = self.sections[idx] if idx < len(self.sections) else None
                key = loc[2] if len(loc) > 2 else None
            elif section in ("output_dir", "seed"):
                key, section = section, "run"
            else:
                key = loc[1] if len(loc) > 1 else None
            start = 0
            if section:
                hit = self._find(r"^\s*\[\s*(" + re.escape(section) + r")\s*\]")
                if hit:
                    start = hit[0]
                    if key is None:
                        return hit[0] + 1, hit[1] + 1
            if key:
                hit = self._find(r"^\s*(" + re.escape(key) + r")\s*[=:]", start)
                if hit:
                    return hit[0] + 1, hit[1] + 1
            return (start + 1, 1) if section else (None, None)
        start = 0
        best = (None, None)
        for part in loc:
            if part.isdigit():
                continue
            hit = self._find(r'("' + re.escape(part) + r'")\s*:', start)
            if hit:
                start = hit[0]
                best = (hit[0] + 1, hit[1] + 1)
        return best


# --------------------------------------------------------------------------- parsing

def _ini_to_dict(text: str):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any section", exc.lineno, 1) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message.splitlines()[0], exc.lineno, 1) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", lineno, 1) from None
    data: dict = {}
    sections = []
    commands = []
    loc = _Locator(text, "ini")
    for sec in cp.sections():
        body = dict(cp[sec])
        if sec == "phi" or sec == "domain" or sec == "functions" or sec == "tolerances":
            data[sec] = body
        elif sec == "run":
            data.update(body)
        elif re.fullmatch(r"command(\.\w+)?", sec):
            sections.append(sec)
            commands.append(body)
        else:
            line, col = loc.locate([sec])
            raise ConfigError(f"unknown section [{sec}]", line, col)
    if commands:
        data["commands"] = commands
    for k in ("amemiya",):
        for c in commands:
            if k in c:
                c[k] = c[k].strip().lower() in ("1", "true", "yes", "on")
    return data, _Locator(text, "ini", sections)


def parse_config(text: str, fmt: Optional[str] = None) -> RunConfig:
    """Parse INI or JSON text (auto-detected unless ``fmt`` is given)."""
    if fmt is None:
        fmt = "json" if text.lstrip().startswith("{") else "ini"
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, exc.lineno, exc.colno) from None
        if not isinstance(data, dict):
            raise ConfigError("top level must be an object", 1, 1)
        locator = _Locator(text, "json")
    else:
        data, locator = _ini_to_dict(text)
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        line, col = locator.locate(err["loc"])
        where = ".".join(str(p) for p in err["loc"])
        raise ConfigError(f"{where}: {err['msg']}", line, col) from None
    for i, cmd in enumerate(cfg.commands):
        _check_command(cmd, i, cfg, locator)
    return cfg


def _check_command(cmd: Command, i: int, cfg: RunConfig, locator: _Locator):
    def fail(msg, field=None):
        line, col = locator.locate(["commands", i] + ([field] if field else []))
        raise ConfigError(f"command {i + 1}: {msg}", line, col)

    if cmd.op == "experiment" and cmd.name is None:
        fail("experiment needs a name", "op")
    if cmd.op != "experiment" and cmd.name is not None:
        fail("only experiment commands take a name", "name")
    allowed = ALLOWED_FIELDS[cmd.key()] | _OPTIONAL_ANYWHERE
    for f in sorted(cmd.given() - allowed):
        fail(f"field {f!r} not accepted by {cmd.key()}", f)
    if cmd.u is not None and cmd.u not in cfg.functions:
        fail(f"unknown function {cmd.u!r}", "u")
    needs_phi = cmd.key() not in ("mollify", "experiment:kr", "experiment:separation")
    if needs_phi and cfg.phi is None:
        fail("a [phi] block is required")
    if cmd.u is not None and cfg.domain is None:
        fail("a [domain] block is required")


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    fmt = "json" if str(path).lower().endswith(".json") else None
    return parse_config(text, fmt)
