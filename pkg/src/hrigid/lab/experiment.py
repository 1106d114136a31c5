"""Rigidity runs: fit, measure deviations, regress proximity exponents, report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..hgroup import Isometry
from ..kerq import (
    coercive_fit,
    exp_integrability,
    exp_threshold,
    oracle_fit,
    sobolev_deviation,
    sup_deviation,
)
from .config import ExperimentConfig
from .families import make_family

__all__ = [
    "CSV_HEADER",
    "REGRESSION_MAX_EPS",
    "ZERO_FLOOR",
    "RigidityRecord",
    "RigidityReport",
    "fit_exponent",
    "report_paths",
    "run_rigidity",
    "write_report",
]

CSV_HEADER = "epsilon,sup_dev,sobolev_dev,exp_int_ln16,fitter,fallback"
REGRESSION_MAX_EPS = 1e-2
# deviations below this are indistinguishable from rounding in rho
ZERO_FLOOR = 1e-7
AGREEMENT_FACTOR = 2.0
EXP_LEVEL = 16.0


def _finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def isometry_params(theta: Isometry) -> dict:
    return {
        "rotation_re": theta.rotation.real.tolist(),
        "rotation_im": theta.rotation.imag.tolist(),
        "translation": theta.translation.tolist(),
        "reflect": bool(theta.reflect),
    }


@dataclass(frozen=True)
class RigidityRecord:
    """Measurements for one ``eps``.

    ``sup_dev`` is the sampled sup of ``rho(f x, theta x)`` on the shrunken
    ball.  ``cross_sup_dev`` is the same quantity for the secondary fitter
    when both fitters ran; ``flagged`` marks disagreement beyond a factor 2.
    """

    epsilon: float
    sup_dev: float
    sobolev_dev: float
    exp_int_at_ln16: float
    fitter_used: str
    fit_fallback: bool
    isometry: Isometry
    cross_sup_dev: float | None = None
    flagged: bool = False
    n1_surrogate: float | None = None
    n2_surrogate: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "sup_dev": _finite_or_none(self.sup_dev),
            "sobolev_dev": _finite_or_none(self.sobolev_dev),
            "exp_int_at_ln16": _finite_or_none(self.exp_int_at_ln16),
            "fitter_used": self.fitter_used,
            "fit_fallback": self.fit_fallback,
            "isometry_params": isometry_params(self.isometry),
            "cross_sup_dev": _finite_or_none(self.cross_sup_dev),
            "flagged": self.flagged,
            "n1_surrogate": _finite_or_none(self.n1_surrogate),
            "n2_surrogate": _finite_or_none(self.n2_surrogate),
            "error": self.error,
        }


def fit_exponent(eps, dev) -> dict:
    """Least-squares line through ``(log eps, log dev)``.

    Returns ``slope``, ``intercept`` and ``r2``, all ``None`` when fewer than
    two points lie above the rounding floor.
    """
    eps = np.asarray(eps, dtype=float)
    dev = np.asarray(dev, dtype=float)
    keep = np.isfinite(dev) & (dev > ZERO_FLOOR)
    if keep.sum() < 2:
        return {"slope": None, "intercept": None, "r2": None, "points": int(keep.sum())}
    x, y = np.log(eps[keep]), np.log(dev[keep])
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": float(r2), "points": int(keep.sum())}


@dataclass(frozen=True)
class RigidityReport:
    """Config echo, per-eps records and fitted exponents."""

    config: ExperimentConfig
    records: tuple[RigidityRecord, ...]
    exponents: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "sup_metric": "rho_sup",
            "records": [r.to_dict() for r in self.records],
            "exponents": self.exponents,
            "environment": {"n": self.config.n, "seed": self.config.seed, "version": __version__},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.records:
            vals = (r.epsilon, r.sup_dev, r.sobolev_dev, r.exp_int_at_ln16)
            lines.append(",".join("%.12e" % v for v in vals) + f",{r.fitter_used},{str(r.fit_fallback).lower()}")
        return "\n".join(lines) + "\n"


def _fit(fitter: str, f, B, config: ExperimentConfig):
    """Return ``(isometry, fitter_used, fallback)``."""
    if fitter == "oracle":
        return oracle_fit(f, B, seed=config.seed).isometry, "oracle", False
    res = coercive_fit(f, B, config.quad_order, oracle_kwargs={"seed": config.seed})
    return res.isometry, "oracle" if res.fallback else "coercive", res.fallback


def _measure(eps: float, config: ExperimentConfig, family) -> RigidityRecord:
    B = config.region
    inner = B.scaled(config.sup_region_scale)
    f = family(eps)
    primary = "oracle" if config.fitter == "oracle" else "coercive"
    theta, used, fallback = _fit(primary, f, B, config)
    sup = sup_deviation(f, theta, inner, config.samples)
    sob = sobolev_deviation(f, theta, B, config.p, config.samples)
    expv = exp_integrability(f, theta, B, math.log(EXP_LEVEL), eps, config.samples)
    n1 = exp_threshold(f, theta, B, eps, EXP_LEVEL, config.samples)
    cross, flagged = None, False
    if config.fitter == "both":
        other = "oracle" if used == "coercive" else "coercive"
        if other == "oracle" or config.n > 1:
            theta2, _, _ = _fit(other, f, B, config)
            cross = sup_deviation(f, theta2, inner, config.samples)
            big, small = max(sup, cross), min(sup, cross)
            flagged = bool(big > ZERO_FLOOR and big > AGREEMENT_FACTOR * small)
    return RigidityRecord(
        eps, sup, sob, expv, used, fallback, theta, cross, flagged, n1, sup / (math.sqrt(eps) + eps)
    )


def _failed_record(eps: float, config: ExperimentConfig, exc: Exception) -> RigidityRecord:
    nan = float("nan")
    return RigidityRecord(
        eps, nan, nan, nan, config.fitter, True, Isometry.identity(config.n), error=f"{type(exc).__name__}: {exc}"
    )


def run_rigidity(config: ExperimentConfig) -> RigidityReport:
    """Measure deviations for every ``eps`` and regress the exponents.

    Slopes use only ``eps <= 1e-2``; a fit or measurement failure is recorded
    on its ``eps`` and the run continues.
    """
    family = make_family(config.family, config.n, config.seed)
    records = []
    for eps in config.epsilons:
        try:
            records.append(_measure(eps, config, family))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            records.append(_failed_record(eps, config, exc))
    asym = [r for r in records if r.epsilon <= REGRESSION_MAX_EPS]
    e = [r.epsilon for r in asym]
    sup_fit = fit_exponent(e, [r.sup_dev for r in asym])
    sob_fit = fit_exponent(e, [r.sobolev_dev for r in asym])
    r2s = [v for v in (sup_fit["r2"], sob_fit["r2"]) if v is not None]
    exponents = {
        "sup_slope": sup_fit["slope"],
        "sup_intercept": sup_fit["intercept"],
        "sup_r2": sup_fit["r2"],
        "sobolev_slope": sob_fit["slope"],
        "sobolev_intercept": sob_fit["intercept"],
        "sobolev_r2": sob_fit["r2"],
        "r2": min(r2s) if r2s else None,
        "regression_max_eps": REGRESSION_MAX_EPS,
        "regression_points": len(asym),
        "undefined": sup_fit["slope"] is None and sob_fit["slope"] is None,
    }
    return RigidityReport(config, tuple(records), exponents)


def report_paths(output: str | Path) -> tuple[Path, Path]:
    """JSON and CSV paths for an output prefix (a ``.json``/``.csv`` suffix is dropped)."""
    base = Path(output)
    if base.suffix in (".json", ".csv"):
        base = base.with_suffix("")
    return base.with_name(base.name + ".json"), base.with_name(base.name + ".csv")


def write_report(report: RigidityReport, output: str | Path | None = None) -> tuple[Path, Path]:
    """Write the JSON and CSV reports; returns their paths."""
    jpath, cpath = report_paths(output if output is not None else report.config.output)
    jpath.parent.mkdir(parents=True, exist_ok=True)
    jpath.write_text(report.to_json())
    cpath.write_text(report.to_csv())
    return jpath, cpath
