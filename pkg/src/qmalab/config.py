"""Run configuration and the single table of acceptance thresholds."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import QMAError

THRESHOLDS_VERSION = 1

# (comparison, bound): "le" passes when value <= bound, "ge" when value >= bound
THRESHOLDS: dict[str, tuple[str, float]] = {
    "quaternionic": ("le", 1e-12),
    "bijection": ("le", 1e-12),
    "pre_eh": ("le", 1e-6),
    "pre_flat": ("le", 1e-12),
    "fund": ("le", 1e-7),
    "fund_negative": ("ge", 1e-3),
    "fund2": ("le", 1e-7),
    "fund2_conj": ("le", 1e-12),
    "frame": ("le", 1e-8),
    "delta": ("le", 1e-6),
    "delta_mutation": ("ge", 1e-2),
    "eqns": ("le", 1e-7),
    "eqns_mutation": ("ge", 1e-3),
    "phi4_flat": ("le", 1e-9),
    "phi4_eh": ("le", 1e-6),
    "quadratic": ("ge", -1e-12),
    "equiv": ("le", 1e-10),
    "fform": ("le", 1e-11),
    "manufactured": ("le", 1e-8),
    "b_manufactured": ("le", 1e-9),
    "self_convergence": ("le", 1e-7),
    "trace_ineq": ("ge", -1e-10),
    "max_principle": ("le", 1e-8),
    "C_emp_variation": ("le", 0.02),
    "volume": ("le", 1e-10),
    "b_closed_form": ("le", 1e-9),
}


def passes(key: str, value: float) -> bool:
    op, bound = THRESHOLDS[key]
    return value <= bound if op == "le" else value >= bound


class ConfigError(QMAError):
    """Invalid or unknown configuration."""


@dataclass
class RunConfig:
    suite: str = "fund"
    chart: str = "flat"
    a: float = 1.0
    n: int = 1
    N: int = 16
    points: int = 10
    samples: int = 20
    seed: int = 0
    out: str = "qma-out"
    mutate: str = ""
    tol: float = 1e-10
    steps: int = 5
    max_iter: int = 30
    eps_pos: float = 1e-6
    A: float = 1.0
    f: str = "zero"

    def to_dict(self) -> dict:
        return asdict(self)

    def identity(self) -> dict:
        """Everything that determines the results; the output location does not."""
        d = self.to_dict()
        d.pop("out")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def update(self, values: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(self)}
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in types:
                raise ConfigError(f"unknown configuration key {key!r}")
            current = getattr(self, key)
            try:
                setattr(self, key, type(current)(raw))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        return self


def read_config_file(path) -> dict:
    """Parse a plain ``key = value`` file (``#`` comments allowed)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + p.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return dict(parser["run"])


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cfg.update(read_config_file(path))
    if overrides:
        cfg.update(overrides)
    return cfg
