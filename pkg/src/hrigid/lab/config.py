"""Experiment configuration: JSON loading with strict, line-aware validation."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..hgroup import Ball
from .families import parse_family_spec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]

FITTERS = ("coercive", "oracle", "both")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one rigidity run.

    ``ball`` is stored as ``{"center": [...], "radius": r}`` so the config
    echoes back verbatim into reports.
    """

    n: int
    family: str
    epsilons: tuple[float, ...]
    ball: dict = field(default_factory=dict)
    sup_region_scale: float = 0.5
    p: float = 2.0
    samples: int = 100_000
    quad_order: int = 12
    seed: int = 0
    fitter: str = "both"
    output: str = "reports/rigidity"

    @property
    def region(self) -> Ball:
        return Ball(np.asarray(self.ball["center"], dtype=float), float(self.ball["radius"]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epsilons"] = list(self.epsilons)
        return d


_REQUIRED = ("n", "family", "epsilons", "ball")
_FIELDS = tuple(ExperimentConfig.__dataclass_fields__)


def _key_line(text: str, key: str, after: int = 0) -> int | None:
    m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, after)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate a JSON config string."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", 1, source)

    def fail(key: str, msg: str, after: int = 0):
        raise ConfigError(f"{key}: {msg}", _key_line(text, key, after), source)

    for key in raw:
        if key not in _FIELDS:
            fail(key, f"unknown key; allowed keys are {', '.join(_FIELDS)}")
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}", None, source)

    n = raw["n"]
    if not _is_int(n) or not 1 <= n <= 4:
        fail("n", "must be an integer in [1, 4]")
    try:
        parse_family_spec(raw["family"])
    except ValueError as exc:
        fail("family", str(exc))
    eps = raw["epsilons"]
    if not isinstance(eps, list) or not eps or not all(_is_real(e) for e in eps):
        fail("epsilons", "must be a non-empty list of numbers")
    if any(e <= 0 for e in eps):
        fail("epsilons", "values must be positive")
    if any(a <= b for a, b in zip(eps, eps[1:])):
        fail("epsilons", "values must be strictly descending")

    ball = raw["ball"]
    ball_at = text.find('"ball"')
    if not isinstance(ball, dict):
        fail("ball", "must be an object with keys center and radius")
    for key in ball:
        if key not in ("center", "radius"):
            fail(key, "unknown key in ball; allowed keys are center, radius", ball_at)
    center, radius = ball.get("center"), ball.get("radius")
    if not isinstance(center, list) or len(center) != 2 * n + 1 or not all(_is_real(c) for c in center):
        fail("ball", f"center must be a list of {2 * n + 1} numbers")
    if not _is_real(radius) or radius <= 0:
        fail("ball", "radius must be a positive number")

    out = {k: raw[k] for k in _REQUIRED}
    out["epsilons"] = tuple(float(e) for e in eps)
    out["ball"] = {"center": [float(c) for c in center], "radius": float(radius)}
    if "sup_region_scale" in raw:
        q = raw["sup_region_scale"]
        if not _is_real(q) or not 0 < q < 1:
            fail("sup_region_scale", "must lie in (0, 1)")
        out["sup_region_scale"] = float(q)
    if "p" in raw:
        if not _is_real(raw["p"]) or raw["p"] < 1:
            fail("p", "must be a number >= 1")
        out["p"] = float(raw["p"])
    for key, lo in (("samples", 16), ("quad_order", 2)):
        if key in raw:
            if not _is_int(raw[key]) or raw[key] < lo:
                fail(key, f"must be an integer >= {lo}")
            out[key] = raw[key]
    if "seed" in raw:
        if not _is_int(raw["seed"]) or raw["seed"] < 0:
            fail("seed", "must be a non-negative integer")
        out["seed"] = raw["seed"]
    if "fitter" in raw:
        if raw["fitter"] not in FITTERS:
            fail("fitter", f"must be one of {', '.join(FITTERS)}")
        if raw["fitter"] != "oracle" and n == 1:
            fail("fitter", "coercive fitting needs n > 1; use oracle")
        out["fitter"] = raw["fitter"]
    elif n == 1:
        out["fitter"] = "oracle"
    if "output" in raw:
        if not isinstance(raw["output"], str) or not raw["output"].strip():
            fail("output", "must be a non-empty path string")
        out["output"] = raw["output"]
    return ExperimentConfig(**out)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))
