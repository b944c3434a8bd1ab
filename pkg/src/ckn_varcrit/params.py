"""Problem parameters, exponent algebra and the built-in nonlinearities.

The model problem is

    -div(|x|^{-ap} |Du|^{p-2} Du) = lam |x|^{-(a+1)p+c} |u|^{p-2} u + |x|^{-bq} f(u)

with homogeneous Dirichlet data on a bounded domain containing the origin.
Two parameter regimes are supported: ``paper`` enforces the full admissible
range of the exponents, ``validation`` relaxes it so that classical oracles
(e.g. the Dirichlet Laplacian on the unit disk) can be used to check the
discrete machinery.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import AdmissibilityError, DomainError

MODES = ("paper", "validation")
FAMILIES = ("pure_power", "power_plus_bounded")

#: required gap between q and the critical exponent in paper mode
SUBCRITICAL_MARGIN = 1e-6


def critical_exponent(p: float, n_dom: float, a: float, b: float) -> float:
    """Return the critical CKN exponent ``n p / (n - (1 + a - b) p)``.

    Raises
    ------
    DomainError
        If the denominator is not positive.
    """
    d = 1.0 + a - b
    denom = n_dom - d * p
    if not denom > 0.0:
        raise DomainError(
            f"critical exponent undefined: n - d*p = {denom:g} <= 0 "
            f"(n={n_dom:g}, p={p:g}, d={d:g})"
        )
    # written so that d = 0 returns p exactly
    return p / (1.0 - d * p / n_dom)


@dataclass(frozen=True)
class ProblemParams:
    """All exponents and coefficients of the problem.

    ``theta`` defaults to ``q`` for the pure power family and to ``(p+q)/2``
    for the perturbed family. ``n`` is the dimension of the finite element
    domain (always 2); ``n_eff`` is the real dimension used by the radial
    reduction.
    """

    p: float = 2.0
    a: float = 0.0
    b: float = 0.0
    c: float = 2.0
    q: float = 4.0
    lam: float = 0.0
    kappa: float = 1.0
    theta: float | None = None
    big_m: float = 1.0
    mode: str = "validation"
    family: str = "pure_power"
    n: int = 2
    n_eff: float = 2.0
    radius: float = 1.0
    eps: float = 1e-8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.n != 2:
            raise ValueError("the finite element domain is planar (n=2)")
        if self.theta is None:
            default = self.q if self.family == "pure_power" else 0.5 * (self.p + self.q)
            object.__setattr__(self, "theta", float(default))

    @property
    def d(self) -> float:
        return 1.0 + self.a - self.b

    @property
    def p_star(self) -> float:
        return critical_exponent(self.p, self.n, self.a, self.b)

    # weight exponents: the weights are |x|^{-gamma}
    @property
    def gamma_phi(self) -> float:
        return self.a * self.p

    @property
    def gamma_j(self) -> float:
        return (self.a + 1.0) * self.p - self.c

    @property
    def gamma_f(self) -> float:
        return self.b * self.q

    def replace(self, **changes) -> "ProblemParams":
        return dataclasses.replace(self, **changes)

    def nonlinearity(self) -> "Nonlinearity":
        return Nonlinearity(self.family, self.kappa, self.q, self.theta, self.big_m)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# ----------------------------------------------------------------------------
# nonlinearities


@dataclass(frozen=True)
class Nonlinearity:
    """Built-in nonlinearity ``f`` with primitive ``F``.

    ``pure_power``: ``f(s) = kappa |s|^{q-2} s``.
    ``power_plus_bounded``: the pure power plus the bounded odd term
    ``kappa s^3 / (1 + s^2)^2``, whose primitive is
    ``kappa/2 (log(1+s^2) + 1/(1+s^2) - 1)``.
    """

    family: str = "pure_power"
    kappa: float = 1.0
    q: float = 4.0
    theta: float = 4.0
    big_m: float = 1.0

    def f(self, s):
        s = np.asarray(s, dtype=float)
        out = self.kappa * np.abs(s) ** (self.q - 2.0) * s
        if self.family == "power_plus_bounded":
            out = out + self.kappa * s**3 / (1.0 + s * s) ** 2
        return out

    def F(self, s):
        s = np.asarray(s, dtype=float)
        out = self.kappa * np.abs(s) ** self.q / self.q
        if self.family == "power_plus_bounded":
            w = 1.0 + s * s
            out = out + 0.5 * self.kappa * (np.log(w) + 1.0 / w - 1.0)
        return out

    def df(self, s):
        """Derivative ``f'(s)``; used for Hessian-vector products."""
        s = np.asarray(s, dtype=float)
        out = self.kappa * (self.q - 1.0) * np.abs(s) ** (self.q - 2.0)
        if self.family == "power_plus_bounded":
            w = 1.0 + s * s
            out = out + self.kappa * (3.0 * s * s * w - 4.0 * s**4) / w**3
        return out


# ----------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class Finding:
    name: str
    status: str  # "pass" | "warn" | "fail"
    margin: float
    message: str = ""


@dataclass(frozen=True)
class AdmissibilityReport:
    mode: str
    n_dom: float
    findings: tuple[Finding, ...]

    @property
    def verdict(self) -> str:
        return "fail" if any(f.status == "fail" for f in self.findings) else "pass"

    @property
    def ok(self) -> bool:
        return self.verdict == "pass"

    def get(self, name: str) -> Finding:
        for f in self.findings:
            if f.name == name:
                return f
        raise KeyError(name)

    def failures(self) -> list[Finding]:
        return [f for f in self.findings if f.status == "fail"]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_dom": self.n_dom,
            "verdict": self.verdict,
            "findings": [dataclasses.asdict(f) for f in self.findings],
        }


def validate_params(params: ProblemParams, n_dom: float | None = None) -> AdmissibilityReport:
    """Report every range constraint on the parameters with its margin.

    ``n_dom`` defaults to ``params.n`` (2D runs); pass ``params.n_eff`` for
    radial runs. In validation mode only ``1<p``, ``q>p`` and
    ``p<theta<=q`` are hard; the remaining checks are downgraded to warnings.
    """
    P = params
    n_dom = float(P.n if n_dom is None else n_dom)
    hard_always = {"1<p", "p<q", "p<theta", "theta<=q"}

    try:
        p_star = critical_exponent(P.p, n_dom, P.a, P.b)
    except DomainError:
        p_star = math.inf

    checks: list[tuple[str, float, str]] = [
        ("1<p", P.p - 1.0, ""),
        ("p<n", n_dom - P.p, f"n_dom={n_dom:g}"),
        ("0<=a", P.a, ""),
        ("a<(n-p)/p", (n_dom - P.p) / P.p - P.a, ""),
        ("a<=b", P.b - P.a, ""),
        ("b<=a+1", P.a + 1.0 - P.b, ""),
        ("c>0", P.c, ""),
        ("1<q", P.q - 1.0, ""),
        ("q<p_star", p_star - SUBCRITICAL_MARGIN - P.q, f"p_star={p_star:g}"),
        ("p<q", P.q - P.p, ""),
        ("p<theta", P.theta - P.p, ""),
        ("theta<=q", P.q - P.theta, ""),
    ]
    strict = {"1<p", "p<n", "a<(n-p)/p", "c>0", "1<q", "p<q", "p<theta"}

    findings = []
    for name, margin, msg in checks:
        if math.isnan(margin):
            ok = False
        else:
            ok = margin > 0.0 if name in strict else margin >= 0.0
            if name == "q<p_star":
                ok = margin >= 0.0
        if ok:
            status = "pass"
        elif name in hard_always or P.mode == "paper":
            status = "fail"
        else:
            status = "warn"
        findings.append(Finding(name, status, float(margin), msg))
    return AdmissibilityReport(P.mode, n_dom, tuple(findings))


# ----------------------------------------------------------------------------
# (f1)-(f4)


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    witness: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class ConditionReport:
    results: tuple[ConditionResult, ...]

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> ConditionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def raise_for_failure(self):
        for r in self.results:
            if not r.passed:
                raise AdmissibilityError(
                    f"condition {r.name} violated at s*={r.witness!r}: {r.detail}",
                    witness=r.witness,
                )

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "conditions": [dataclasses.asdict(r) for r in self.results],
        }


def _first_violation(s: np.ndarray, bad: np.ndarray) -> float | None:
    idx = np.flatnonzero(bad)
    return None if idx.size == 0 else float(s[idx[0]])


def check_f_conditions(
    nl: Nonlinearity, p: float, p_star: float, samples: int = 200, seed: int = 0
) -> ConditionReport:
    """Check the growth/sign/superlinearity/small-amplitude conditions on f.

    (f1) is decided from the growth exponent of the built-in family; (f2) and
    (f3) are sampled on a deterministic grid plus seeded random points; (f4)
    is read off the log-log slope of ``f(s)/|s|^{p-1}`` on ``s = 10^-k``.
    """
    if samples < 100:
        raise ValueError("samples must be >= 100")
    rng = np.random.default_rng(seed)
    # growth exponent of f is q-1 for both families (the perturbation is bounded)
    f1_margin = p_star - nl.q
    f1 = ConditionResult(
        "f1",
        bool(1.0 < nl.q and f1_margin > 0.0),
        None if f1_margin > 0 else nl.q,
        f"growth exponent q-1={nl.q - 1:g}, critical p*-1={p_star - 1:g}",
    )

    grid = np.linspace(-10.0, 10.0, samples + 1)
    extra = rng.uniform(-50.0, 50.0, samples)
    s = np.concatenate([grid, extra, [0.0]])
    fs = nl.f(s)
    zero_ok = float(nl.f(0.0)) == 0.0
    bad = s * fs < 0.0
    f2 = ConditionResult(
        "f2",
        bool(zero_ok and not bad.any()),
        0.0 if not zero_ok else _first_violation(s, bad),
        "f(0)=0 and s f(s) >= 0",
    )

    M = nl.big_m
    mags = np.concatenate([M * np.geomspace(1.0, 1e3, samples), rng.uniform(M, 100.0 * M, samples)])
    s3 = np.concatenate([mags, -mags])
    lhs = nl.theta * nl.F(s3)
    rhs = s3 * nl.f(s3)
    tol = 1e-12 * np.maximum(np.abs(lhs), np.abs(rhs))
    bad3 = ~(lhs > 0.0) | (lhs > rhs + tol)
    theta_ok = p < nl.theta < p_star
    w3 = _first_violation(s3, bad3)
    f3 = ConditionResult(
        "f3",
        bool(theta_ok and not bad3.any()),
        w3 if w3 is not None else (None if theta_ok else nl.theta),
        f"0 < theta F(s) <= s f(s) for |s| >= M={M:g}, theta={nl.theta:g}",
    )

    ss = np.logspace(-1.0, -12.0, 23)
    ratio = np.abs(nl.f(ss)) / ss ** (p - 1.0)
    if np.all(ratio == 0.0):
        f4 = ConditionResult("f4", True, None, "f vanishes identically near 0")
    else:
        tail = ratio[-12:]
        with np.errstate(divide="ignore"):
            slope = np.polyfit(np.log(ss[-12:]), np.log(np.maximum(tail, 1e-300)), 1)[0]
        passed = bool(slope > 1e-6 and np.all(np.diff(tail) <= 1e-14 * tail[:-1]))
        f4 = ConditionResult(
            "f4",
            passed,
            None if passed else float(ss[-1]),
            f"f(s)/|s|^(p-1) ~ s^{slope:.4g} as s->0 (last value {ratio[-1]:.3g})",
        )
    return ConditionReport((f1, f2, f3, f4))


# ----------------------------------------------------------------------------
# config files

#: config key -> (ProblemParams field or None, parser)
_PARAM_KEYS: dict[str, tuple[str, Callable]] = {
    "mode": ("mode", str),
    "family": ("family", str),
    "p": ("p", float),
    "a": ("a", float),
    "b": ("b", float),
    "c": ("c", float),
    "q": ("q", float),
    "lambda": ("lam", float),
    "kappa": ("kappa", float),
    "theta": ("theta", float),
    "big_m": ("big_m", float),
    "n_eff": ("n_eff", float),
    "domain.radius": ("radius", float),
    "solver.eps": ("eps", float),
}


_RUN_KEYS: dict[str, Callable] = {
    "mesh.levels": int,
    "mesh.grading": float,
    "mesh.base_rings": int,
    "solver.tol": float,
    "solver.max_iter": int,
    "seed": int,
    "lambda.scale": str,
    "ckn.r": float,
    "ckn.alpha": float,
    "radial.m": int,
    "path.beads": int,
    "loop.beads": int,
    "tail.r": float,
    "tail.alpha": float,
    "tail.samples": int,
    "out_dir": str,
    "report_format": str,
}

KNOWN_KEYS = tuple(_PARAM_KEYS) + tuple(_RUN_KEYS)


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration: problem parameters plus run settings."""

    params: ProblemParams = field(default_factory=ProblemParams)
    mesh_levels: int = 4
    mesh_grading: float | None = None
    mesh_base_rings: int = 3
    tol: float = 1e-8
    max_iter: int = 2000
    seed: int = 42
    lambda_scale: str = "absolute"
    ckn_r: float = 2.0
    ckn_alpha: float = 0.0
    radial_m: int = 4096
    path_beads: int = 17
    loop_beads: int = 32
    tail_r: float = 2.0
    tail_alpha: float = 0.5
    tail_samples: int = 6
    out_dir: str = "out"
    report_format: str = "json"

    @property
    def grading(self) -> float:
        if self.mesh_grading is not None:
            return self.mesh_grading
        return 2.0 if self.params.a > 0 else 1.0

    def to_dict(self) -> dict:
        out = {"params": self.params.as_dict()}
        for f in dataclasses.fields(self):
            if f.name != "params":
                out[f.name] = getattr(self, f.name)
        out["resolved_grading"] = self.grading
        return out


def parse_config_text(text: str, overrides: list[str] | tuple[str, ...] = ()) -> RunConfig:
    """Parse ``key = value`` lines, then apply ``key=value`` overrides in order.

    Blank lines and ``#`` comments are ignored. Unknown keys raise
    ``ValueError``.
    """
    entries: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        k, v = line.split("=", 1)
        entries.append((k.strip(), v.strip()))
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must be key=value, got {item!r}")
        k, v = item.split("=", 1)
        entries.append((k.strip(), v.strip()))

    pvals: dict = {}
    rvals: dict = {}
    for k, v in entries:
        if k in _PARAM_KEYS:
            name, conv = _PARAM_KEYS[k]
            pvals[name] = conv(v)
        elif k in _RUN_KEYS:
            rvals[k] = _RUN_KEYS[k](v)
        else:
            raise ValueError(f"unknown config key {k!r}")

    params = ProblemParams(**pvals)
    run = RunConfig(
        params=params,
        mesh_levels=rvals.get("mesh.levels", 4),
        mesh_grading=rvals.get("mesh.grading"),
        mesh_base_rings=rvals.get("mesh.base_rings", 3),
        tol=rvals.get("solver.tol", 1e-8),
        max_iter=rvals.get("solver.max_iter", 2000),
        seed=rvals.get("seed", 42),
        lambda_scale=rvals.get("lambda.scale", "absolute"),
        ckn_r=rvals.get("ckn.r", 2.0),
        ckn_alpha=rvals.get("ckn.alpha", 0.0),
        radial_m=rvals.get("radial.m", 4096),
        path_beads=rvals.get("path.beads", 17),
        loop_beads=rvals.get("loop.beads", 32),
        tail_r=rvals.get("tail.r", 2.0),
        tail_alpha=rvals.get("tail.alpha", 0.5),
        tail_samples=rvals.get("tail.samples", 6),
        out_dir=rvals.get("out_dir", "out"),
        report_format=rvals.get("report_format", "json"),
    )
    if run.report_format != "json":
        raise ValueError("report_format must be json")
    if run.lambda_scale not in ("absolute", "lambda1", "gap"):
        raise ValueError("lambda.scale must be absolute, lambda1 or gap")
    return run


def load_config(path: str | Path, overrides=()) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), overrides)
