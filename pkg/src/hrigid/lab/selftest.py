"""Fast invariant suites for every module, shared by the CLI ``selftest``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import domains, hcalc, hgroup, kerq, symbolic
from .growth import embedding_suite, isometry_growth_suite
from .families import make_family, random_isometry

__all__ = ["CheckResult", "SUITES", "run_suites"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _algebra() -> tuple[bool, str]:
    bad = {n: symbolic.bracket_violations(n) for n in (1, 2, 3)}
    pts = hgroup.random_points(2, 10, np.random.default_rng(0))
    li = symbolic.left_invariance_defect(2, pts)
    return not any(bad.values()) and li <= 1e-12, f"bracket violations {sum(map(len, bad.values()))}, left-invariance defect {li:.1e}"


def _metric() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    x, y, z = (hgroup.random_points(2, 2000, rng) for _ in range(3))
    tri = int(np.sum(hgroup.kdist(x, z) > hgroup.kdist(x, y) + hgroup.kdist(y, z) + 1e-12))
    s = 3.7
    hom = float(np.max(np.abs(hgroup.knorm(hgroup.dilate(s, x)) - s * hgroup.knorm(x))))
    th = random_isometry(2, rng, scale=1.0)
    iso = float(np.max(np.abs(hgroup.kdist(th(x), th(y)) - hgroup.kdist(x, y))))
    return tri == 0 and hom <= 1e-12 and iso <= 1e-12, f"triangle violations {tri}, homogeneity {hom:.1e}, isometry {iso:.1e}"


def _calculus() -> tuple[bool, str]:
    rng = np.random.default_rng(2)
    th = random_isometry(2, rng, scale=1.0)
    x = hgroup.random_points(2, 50, rng, 0.5)
    f = hcalc.isometry_map(th).without_jacobian()
    hd = hcalc.horiz_diff(f, x, scheme="flow_fd")
    e1 = float(np.max(np.abs(hd.M - th.dh())))
    e2 = float(np.max(np.abs(hd.lam - (-1.0 if th.reflect else 1.0))))
    c = float(np.max(hcalc.contact_residual(f, x)))
    return e1 < 1e-6 and e2 < 1e-6 and c < 1e-6, f"dh error {e1:.1e}, multiplier error {e2:.1e}, contact {c:.1e}"


def _moments() -> tuple[bool, str]:
    n = 2
    B = hgroup.random_unitary(n, np.random.default_rng(3))
    const = np.array([1.0 + 2j, -0.5j])
    mc = kerq.moments(lambda x: np.broadcast_to(const, x.shape[:-1] + (n,)), n, estimate_error=False)
    mb = kerq.moments(lambda x: hgroup.complexify(x[..., : 2 * n]) @ B.T, n, estimate_error=False)
    e = max(float(np.max(np.abs(mc.a_vec - const))), float(np.max(np.abs(mb.A - B))))
    return e <= 1e-10, f"moment error {e:.1e}"


def _kernel() -> tuple[bool, str]:
    rng = np.random.default_rng(4)
    worst = 0.0
    for n, mode in ((2, None), (3, None), (1, "special_n1")):
        for _ in range(5):
            u = kerq.random_kernel_element(n, rng, mode)
            x = hgroup.random_points(n, 20, rng, 0.5)
            worst = max(worst, float(np.max(hcalc.q_apply(u.as_map(), x).norm)))
    return worst <= 1e-8, f"max |Qu| {worst:.1e}"


def _correction() -> tuple[bool, str]:
    n = 2
    K = np.array([[0.3j, 0.2 + 0.1j], [-0.2 + 0.1j, -0.1j]])

    def u(x):
        z = hgroup.complexify(x[..., : 2 * n])
        return z + 0.01 * np.sin(z @ K.T) + 0.01 * np.cos(x[..., -1:])

    c = kerq.unitary_correction(u, n, 0.02)
    Kres = kerq.moments(lambda x: u(x) @ c.V.T, n, estimate_error=False).K
    k = float(np.max(np.abs(Kres)))
    ok = c.unitary_defect <= 1e-10 and c.hermitian_defect <= 1e-9 and k <= 1e-9
    return ok, f"unitary {c.unitary_defect:.1e}, hermitian {c.hermitian_defect:.1e}, K(Vu) {k:.1e}"


def _fitting() -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    th = random_isometry(2, rng, scale=1.0)
    f = hcalc.isometry_map(th)
    B = hgroup.Ball(hgroup.origin(2), 1.0)
    a = kerq.coercive_fit(f, B).isometry
    b = kerq.oracle_fit(f, B).isometry
    da = kerq.sup_deviation(f, a, B, 4096)
    db = kerq.sup_deviation(f, b, B, 4096)
    return da <= 1e-7 and db <= 1e-7, f"coercive sup {da:.1e}, oracle sup {db:.1e}"


def _chains() -> tuple[bool, str]:
    U = domains.make_ball_domain(hgroup.origin(2), 1.0)
    pts = U.sample(20, seed=6)
    ks = [domains.build_chain(U, x) for x in pts]
    ok = all(c.certified for c in ks)
    return ok, f"{sum(c.certified for c in ks)}/{len(ks)} certified, max k {max(c.k for c in ks)}"


def _whitney() -> tuple[bool, str]:
    U = domains.make_ball_domain(hgroup.origin(2), 1.0)
    w = domains.whitney_cover(U, 5)
    return w.covered and w.disjoint, f"{len(w.balls)} balls, multiplicity {w.multiplicity_bound}"


def _families() -> tuple[bool, str]:
    eps = 0.05
    f = make_family("conjugated_dilation(3)", 2)(eps)
    hi, lo = hcalc.bilipschitz_probe(f, hgroup.Ball(hgroup.origin(2), 1.0), 500, seed=7)
    ok = hi <= (1 + eps) * (1 + 1e-9) and lo >= (1 + eps) ** -1 * (1 - 1e-9)
    return ok, f"distance ratios in [{lo:.6f}, {hi:.6f}]"


def _growth() -> tuple[bool, str]:
    g = isometry_growth_suite(seed=0, trials=5, template_size=512)
    e = embedding_suite(seed=0, trials=3)
    return g.passed and e.passed, f"growth worst ratio {max(g.worst_ratio('translation'), g.worst_ratio('rotation')):.3f}, embedding constant {e.constant:.3f}"


def _rigidity() -> tuple[bool, str]:
    fam = make_family("dilation", 2)
    B = hgroup.Ball(hgroup.origin(2), 1.0)
    th = hgroup.Isometry.identity(2)
    vals = [kerq.exp_integrability(fam(e), th, B, math.log(16.0), e, 1024) for e in (1e-2, 1e-3)]
    ok = all(abs(v - 16.0) <= 0.16 for v in vals)
    return ok, "exp functional " + ", ".join(f"{v:.6f}" for v in vals)


SUITES: dict[str, Callable[[], tuple[bool, str]]] = {
    "algebra": _algebra,
    "metric": _metric,
    "calculus": _calculus,
    "moments": _moments,
    "kernel": _kernel,
    "unitary correction": _correction,
    "fitting": _fitting,
    "families": _families,
    "chains": _chains,
    "whitney": _whitney,
    "growth": _growth,
    "exp functional": _rigidity,
}


def run_suites(names=None) -> list[CheckResult]:
    """Run the named suites (all by default); exceptions count as failures."""
    out = []
    for name in names or SUITES:
        t = time.perf_counter()
        try:
            ok, detail = SUITES[name]()
        except Exception as exc:  # a crashing suite is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t))
    return out
