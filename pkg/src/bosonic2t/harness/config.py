"""Experiment configuration: a sectioned key = value file plus CLI overrides.

Grid values accept three spellings::

    alpha = 0.5:4.0:0.25        # start:stop:step, stop included
    gamma = log:1e-3:3e-1:7     # log:start:stop:count
    delta = 0.001, 0.01, 0.1    # explicit list
"""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..conic_solver import SolverSettings

__all__ = [
    "ConfigError", "ExperimentConfig", "parse_grid", "parse_code", "is_psk",
    "default_alpha_grid", "load_config", "config_hash",
]

DEFAULT_GAMMAS = tuple(float(g) for g in np.geomspace(1e-3, 3e-1, 7))
DEFAULT_DELTAS = tuple(float(d) for d in np.geomspace(1e-3, 1e-1, 5))


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line, self.source = line, source
        where = f"{source or '<config>'}:{line}: " if line else (f"{source}: " if source else "")
        super().__init__(where + message)


def _linspace_inclusive(start, stop, step):
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    if n < 1:
        raise ValueError("empty range")
    return tuple(round(start + i * step, 12) for i in range(n))


def parse_grid(text: str) -> tuple[float, ...]:
    """Parse a grid spelling; the result must be nonempty and strictly increasing."""
    text = text.strip()
    if text.startswith("log:"):
        parts = text[4:].split(":")
        if len(parts) != 3:
            raise ValueError("log grid needs log:start:stop:count")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if a <= 0 or b <= 0 or n < 1:
            raise ValueError("log grid needs positive bounds and count")
        vals = tuple(float(v) for v in np.geomspace(a, b, n))
    elif ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range grid needs start:stop:step")
        vals = _linspace_inclusive(*(float(p) for p in parts))
    else:
        vals = tuple(float(v) for v in re.split(r"[,\s]+", text) if v)
    if not vals:
        raise ValueError("grid is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError("grid must be strictly increasing")
    return vals


_PSK_RE = re.compile(r"^\[?\s*(\d+)\s*,\s*(\d+)\s*\]?(-PSK)?$", re.IGNORECASE)


def parse_code(text: str) -> str:
    """Normalize a code name to the form make_encoding understands.

    '[d,m]-PSK' (m constellation points, a multiple of d) becomes 'psk:d,m/d';
    'random:d' and 'random' (d = 8) stay on the 2T constellation.
    """
    t = text.strip()
    low = t.lower()
    if low in ("2t-qutrit", "qutrit"):
        return "2T-qutrit"
    if low in ("2t-quoctit", "quoctit"):
        return "2T-quoctit"
    if low.startswith("psk:"):
        return "psk:" + low[4:].replace(" ", "")
    m = _PSK_RE.match(t)
    if m:
        d, pts = int(m.group(1)), int(m.group(2))
        if d < 1 or pts % d:
            raise ValueError(f"[{d},{pts}]-PSK needs a point count divisible by d")
        return f"psk:{d},{pts // d}"
    if low == "random":
        return "random:8"
    if low.startswith("random:") or low.startswith("random+"):
        return "random:" + str(int(low[7:]))
    raise ValueError(f"unknown code name {text!r}")


def is_psk(code: str) -> bool:
    return parse_code(code).startswith("psk:")


def code_dim(code: str) -> int:
    c = parse_code(code)
    if c == "2T-qutrit":
        return 3
    if c == "2T-quoctit":
        return 8
    if c.startswith("psk:"):
        return int(c[4:].split(",")[0])
    return int(c[7:])


def code_label(code: str) -> str:
    c = parse_code(code)
    if c.startswith("psk:"):
        d, n = (int(v) for v in c[4:].split(","))
        return f"[{d},{d * n}]-PSK"
    return c


def default_alpha_grid(code: str) -> tuple[float, ...]:
    # PSK optima run to much larger alpha than the 2T codes
    if is_psk(code):
        return _linspace_inclusive(0.5, 4.0, 0.25) + _linspace_inclusive(4.5, 12.0, 0.5)
    return _linspace_inclusive(0.5, 4.0, 0.25)


@dataclass(frozen=True)
class ExperimentConfig:
    code: str = "2T-quoctit"
    seed: int = 0
    alphas: tuple[float, ...] | None = None   # None: default grid for the code
    gammas: tuple[float, ...] = DEFAULT_GAMMAS
    deltas: tuple[float, ...] = DEFAULT_DELTAS
    trunc_N: int | None = None               # None: 16 for two-mode codes, 40 for PSK
    norm_floor: float = 0.75
    alpha_cap: float | None = None
    n_sdp: int = 0                            # encoding/recovery alternations after the first recovery
    rivals: tuple[str, ...] = ()
    gamma: float = 0.1                        # fixed noise for sweep-alpha
    delta: float | None = None                # set: sweep-alpha under dephasing
    T1: float = 15.6e-3
    Tphi: float = 43.2e-3
    target: float = 0.9
    steps: tuple[str, ...] = ("sweep-gamma", "fit")
    workers: int = 1
    out: str = "runs/out"
    solver: SolverSettings = field(default_factory=lambda: SolverSettings(max_iter=20_000, rel_gap=1e-3))

    def __post_init__(self):
        parse_code(self.code)
        for r in self.rivals:
            parse_code(r)
        for name in ("alphas", "gammas", "deltas"):
            g = getattr(self, name)
            if g is None:
                continue
            if not g:
                raise ValueError(f"{name} grid is empty")
            if any(b <= a for a, b in zip(g, g[1:])):
                raise ValueError(f"{name} grid must be strictly increasing")
        if self.alpha_cap is not None and self.alpha_cap <= 0:
            raise ValueError("alpha cap must be positive")
        if self.trunc_N is not None and self.trunc_N < 1:
            raise ValueError("truncation N must be >= 1")
        if self.workers < 1 or self.n_sdp < 0:
            raise ValueError("workers >= 1 and n_sdp >= 0 required")
        if not 0 < self.target < 1:
            raise ValueError("target fidelity must lie in (0, 1)")

    def alpha_grid(self, code: str | None = None, capped: bool = True) -> tuple[float, ...]:
        grid = self.alphas if self.alphas is not None else default_alpha_grid(code or self.code)
        if capped and self.alpha_cap is not None:
            grid = tuple(a for a in grid if a <= self.alpha_cap + 1e-12)
            if not grid:
                raise ValueError(f"no alpha at or below the cap {self.alpha_cap}")
        return grid

    def truncation(self, code: str | None = None) -> int:
        if self.trunc_N is not None:
            return self.trunc_N
        return 40 if is_psk(code or self.code) else 16

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = asdict(self.solver)
        return d


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of everything that affects results (the output directory does not)."""
    d = cfg.to_dict()
    d.pop("out")
    blob = json.dumps(d, sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------- parsing

def _floats(text):
    return tuple(float(v) for v in re.split(r"[,\s]+", text.strip()) if v)


def _opt_float(text):
    t = text.strip().lower()
    return None if t in ("", "none", "off") else float(t)


def _opt_int(text):
    t = text.strip().lower()
    return None if t in ("", "none", "auto") else int(t)


# (section, key) -> (field, parser); keys are case-insensitive
_KEYS = {
    ("experiment", "code"): ("code", lambda s: s.strip()),
    ("experiment", "seed"): ("seed", int),
    ("experiment", "out"): ("out", lambda s: s.strip()),
    ("experiment", "workers"): ("workers", int),
    ("experiment", "steps"): ("steps", lambda s: tuple(re.split(r"[,\s]+", s.strip()))),
    ("experiment", "n_sdp"): ("n_sdp", int),
    ("grids", "alpha"): ("alphas", parse_grid),
    ("grids", "gamma"): ("gammas", parse_grid),
    ("grids", "delta"): ("deltas", parse_grid),
    ("noise", "gamma"): ("gamma", float),
    ("noise", "delta"): ("delta", _opt_float),
    ("truncation", "n"): ("trunc_N", _opt_int),
    ("truncation", "norm_floor"): ("norm_floor", float),
    ("comparison", "alpha_cap"): ("alpha_cap", _opt_float),
    ("comparison", "rivals"): ("rivals", lambda s: tuple(v.strip() for v in s.split(";") if v.strip())),
    ("combined", "t1"): ("T1", float),
    ("combined", "tphi"): ("Tphi", float),
    ("combined", "target"): ("target", float),
}
_SOLVER_KEYS = {"tol": float, "gap_tol": float, "rel_gap": float, "max_iter": int,
                "relaxation": float, "steps": _floats, "check_every": int, "gap_every": int}


def _line_of(lines, section, key):
    cur = None
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip().lower()
        elif cur == section and re.match(rf"^{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return no
    return None


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file; ``overrides`` (field -> value) win over file values."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=str(path)) from exc
    return parse_config(text, str(path), overrides)


def parse_config(text: str, source: str = "<config>", overrides: dict | None = None) -> ExperimentConfig:
    lines = text.splitlines()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";;"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None), source) from exc
    values, solver = {}, {}
    for section in cp.sections():
        sec = section.lower()
        for key, raw in cp.items(section):
            line = _line_of(lines, sec, key)
            try:
                if sec == "solver":
                    if key not in _SOLVER_KEYS:
                        raise KeyError(key)
                    solver[key] = _SOLVER_KEYS[key](raw)
                else:
                    name, conv = _KEYS[(sec, key)]
                    values[name] = conv(raw)
            except KeyError:
                raise ConfigError(f"unknown key {key!r} in section [{section}]", line, source) from None
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", line, source) from None
    values.update(overrides or {})
    try:
        base = SolverSettings(max_iter=20_000, rel_gap=1e-3)
        values["solver"] = replace(base, **solver) if solver else values.get("solver", base)
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        # attribute whole-config failures to the first line of the offending section if possible
        msg = str(exc)
        line = None
        for (sec, key), (name, _) in _KEYS.items():
            if name in msg.split()[0]:
                line = _line_of(lines, sec, key)
        raise ConfigError(msg, line, source) from None
