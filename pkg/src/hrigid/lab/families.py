"""Quasi-isometry families ``eps -> f_eps`` used by the experiments."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..hcalc import SmoothMap, compose, dilation_map, isometry_map
from ..hgroup import Isometry, random_points, random_unitary

__all__ = ["FAMILIES", "Family", "make_family", "parse_family_spec", "random_isometry"]

FAMILIES = ("dilation", "conjugated_dilation", "reflected_dilation", "pure_isometry")


def random_isometry(n: int, rng: np.random.Generator, scale: float = 0.3, reflect: bool | None = None) -> Isometry:
    """Haar rotation, Gaussian translation of the given scale, random flag."""
    if reflect is None:
        reflect = bool(rng.integers(2))
    return Isometry(random_unitary(n, rng), random_points(n, 1, rng, scale)[0], reflect)


@dataclass(frozen=True, eq=False)
class Family:
    """A one-parameter family of maps with its nearest-isometry reference.

    ``reference`` is the isometry the family degenerates to at ``eps = 0``.
    """

    name: str
    n: int
    left: Isometry
    right: Isometry
    dilating: bool

    def __call__(self, eps: float) -> SmoothMap:
        if eps < 0:
            raise ValueError("eps must be non-negative")
        if not self.dilating:
            core = isometry_map(self.left @ self.right)
        else:
            core = compose(isometry_map(self.left), compose(dilation_map(1.0 + eps, self.n), isometry_map(self.right)))
        return SmoothMap(core.evaluator, self.n, core.jacobian, None, f"{self.name}({eps:.6g})")

    @property
    def reference(self) -> Isometry:
        return self.left @ self.right


_SPEC = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*(-?\d+)\s*\))?\s*$")


def parse_family_spec(spec: str) -> tuple[str, int | None]:
    """Split ``"name"`` or ``"name(seed)"`` into its parts."""
    m = _SPEC.match(spec) if isinstance(spec, str) else None
    if m is None or m.group(1) not in FAMILIES:
        raise ValueError(f"unknown family {spec!r}; expected one of {', '.join(FAMILIES)}")
    return m.group(1), None if m.group(2) is None else int(m.group(2))


def make_family(spec: str, n: int, seed: int = 0) -> Family:
    """Build a family from ``"name"`` or ``"name(seed)"``.

    An explicit seed in the spec overrides ``seed``.

    ``dilation``: ``delta_(1+eps)``; ``conjugated_dilation``:
    ``theta_1 o delta_(1+eps) o theta_2`` with seeded random isometries;
    ``reflected_dilation``: ``iota o delta_(1+eps)``; ``pure_isometry``: a
    seeded random isometry independent of ``eps``.
    """
    name, spec_seed = parse_family_spec(spec)
    if spec_seed is not None:
        seed = spec_seed
    ident = Isometry.identity(n)
    rng = np.random.default_rng(seed)
    if name == "dilation":
        return Family(name, n, ident, ident, True)
    if name == "conjugated_dilation":
        return Family(name, n, random_isometry(n, rng), random_isometry(n, rng), True)
    if name == "reflected_dilation":
        return Family(name, n, Isometry.conjugation(n), ident, True)
    return Family(name, n, random_isometry(n, rng), ident, False)
