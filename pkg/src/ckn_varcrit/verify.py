"""Quantitative checks on computed fields.

* discrete best constant of the weighted embedding (ratio maximization);
* small-ball tail decay of ``int_{|x|<delta} |x|^{-alpha} |u-u'|^r``;
* a bundle of functional values and nodal structure for one field.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .assembly import FeFunction, FeSpace, dot, space_for
from .errors import ConvergenceError, DegenerateInputError, DomainError
from .mesh import Mesh
from .minimax import ARMIJO_C, ARMIJO_SHRINK
from .params import Nonlinearity, ProblemParams
from .rng import stream


def sign_components(u: FeFunction, rel_threshold: float = 1e-10) -> int:
    """Number of connected nodal components of {u>0} and {u<0} over interior vertices."""
    c = u.coef
    scale = float(np.max(np.abs(c))) if c.size else 0.0
    if scale == 0.0:
        return 0
    adj = u.space.mesh.adjacency()
    total = 0
    for mask in (c > rel_threshold * scale, c < -rel_threshold * scale):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        sub = adj[idx][:, idx]
        n, _ = connected_components(sub, directed=False)
        total += n
    return total


@dataclass
class SolutionReport:
    I: float
    Phi: float
    J: float
    N_F: float
    residual_dual: float
    sign_changes: int
    max_abs: float
    argmax: tuple[float, float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["argmax"] = list(self.argmax)
        return d


def solution_report(u: FeFunction, params: ProblemParams, nl: Nonlinearity | None = None) -> SolutionReport:
    fn = u.space.functionals(params, nl)
    c = u.coef
    i = int(np.argmax(np.abs(c)))
    x = u.space.mesh.vertices[i]
    return SolutionReport(
        I=fn.energy(c),
        Phi=fn.phi(c),
        J=fn.J(c),
        N_F=fn.nf(c),
        residual_dual=fn.dual_norm(fn.residual(c)),
        sign_changes=sign_components(u),
        max_abs=float(abs(c[i])),
        argmax=(float(x[0]), float(x[1])),
    )


# ----------------------------------------------------------------------------
# weighted embedding constant


@dataclass
class CknEstimate:
    """Discrete best constant (a lower bound for the continuum constant)."""

    r_exp: float
    alpha_exp: float
    C_est: float
    maximizer: FeFunction
    history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    label: str = "discrete best constant (lower bound)"


def _check_ckn_exponents(params: ProblemParams, r_exp: float, alpha_exp: float) -> None:
    p, n, a = params.p, params.n, params.a
    if params.mode == "paper" and p < n and r_exp > n * p / (n - p) + 1e-12:
        raise DomainError(f"r = {r_exp:g} exceeds the Sobolev exponent np/(n-p) = {n * p / (n - p):g}")
    bound = (1 + a) * r_exp + n * (1 - r_exp / p)
    if alpha_exp > bound + 1e-12:
        raise DomainError(f"alpha = {alpha_exp:g} exceeds (1+a)r + n(1-r/p) = {bound:g}")


def ckn_ratio(space: FeSpace, params: ProblemParams, c: np.ndarray, r_exp: float, alpha_exp: float) -> float:
    fn = space.functionals(params)
    return fn.weighted_lq(c, r_exp, alpha_exp) ** (params.p / r_exp) / fn.phi(c)


def estimate_ckn_constant(params: ProblemParams, mesh: Mesh, r_exp: float = 2.0, alpha_exp: float = 0.0,
                          tol: float = 1e-8, seed: int = 42, max_iter: int = 2000,
                          space: FeSpace | None = None) -> CknEstimate:
    """Maximize ``(int |x|^{-alpha}|u|^r)^{p/r} / Phi(u)`` by normalized ascent.

    The ascent direction is the gradient of the log-ratio preconditioned by
    ``p A_u`` (the p-Laplacian metric at u), and iterates are renormalized
    to ``Phi = 1``. For ``r = p`` the unit step reduces to inverse iteration.
    """
    _check_ckn_exponents(params, r_exp, alpha_exp)
    space = space or space_for(mesh)
    fn = space.functionals(params)
    p = fn.p
    w = space.qp_weight(alpha_exp)
    rng = stream(seed, "verify.ckn")
    x = mesh.vertices
    R2 = float(np.max(np.einsum("ij,ij->i", x, x)))
    c = (R2 - np.einsum("ij,ij->i", x, x)) * (1.0 + 0.5 * rng.random(space.n))
    c[space.boundary] = 0.0

    def normalize(v):
        return v / fn.phi(v) ** (1.0 / p)

    def log_ratio(v):
        return (p / r_exp) * math.log(fn.weighted_lq(v, r_exp, alpha_exp)) - math.log(fn.phi(v))

    def grad_log(v):
        u = space.values(v)
        N = float(np.sum(w * np.abs(u) ** r_exp))
        gN = space.Bt @ (w * np.abs(u) ** (r_exp - 2.0) * u)
        out = p * gN / N - fn.dphi(v) / fn.phi(v)
        out[space.boundary] = 0.0
        return out

    c = normalize(c)
    f = log_ratio(c)
    history = [math.exp(f)]
    res = math.inf
    for it in range(1, max_iter + 1):
        g = grad_log(c)
        res = fn.dual_norm(g)
        if res < tol:
            C = ckn_ratio(space, params, c, r_exp, alpha_exp)
            return CknEstimate(r_exp, alpha_exp, C, FeFunction(space, c), history, it, True)
        solve, _ = fn.metric_operator(c, scale=p)
        d = solve(g)
        slope = dot(g, d)
        step = 1.0
        while True:
            y = normalize(c + step * d)
            fy = log_ratio(y)
            if fy >= f + ARMIJO_C * step * slope or ARMIJO_C * step * slope < 1e-13 * max(abs(f), 1.0):
                break
            step *= ARMIJO_SHRINK
            if step < 1e-14:
                raise ConvergenceError("CKN ascent line search failed", iterate=c, residual=res, history=history)
        c, f = y, fy
        history.append(math.exp(f))
        if len(history) > 100 and history[-1] > 10.0 * history[-101]:
            raise ConvergenceError(
                "ratio grew more than 10x over 100 iterations: exponent pair looks supercritical",
                iterate=c, residual=res, history=history,
            )
    raise ConvergenceError("CKN ascent did not converge", iterate=c, residual=res, history=history)


# ----------------------------------------------------------------------------
# tail exponent


DEFAULT_DELTAS = (0.4, 0.2, 0.1, 0.05, 0.025)


@dataclass
class TailCheck:
    fitted_slope: float
    predicted_slope: float
    rel_error: float
    pair_slopes: list[float]
    deltas: list[float]
    masses: list[list[float]]

    def to_dict(self) -> dict:
        return asdict(self)


def predicted_tail_slope(n: float, alpha: float, b: float, r: float, q: float) -> float:
    return n - (alpha - b * r) * q / (q - r)


def small_ball_mass(space: FeSpace, c: np.ndarray, delta: float, r_exp: float, alpha_exp: float) -> float:
    """``int_{|x|<delta} |x|^{-alpha} |u|^r`` using quadrature points inside the ball."""
    w = space.qp_weight(alpha_exp)
    inside = space.qp_r < delta
    u = space.values(c)
    return float(np.sum(w[inside] * np.abs(u[inside]) ** r_exp))


def tail_exponent_check(params: ProblemParams, mesh: Mesh, u_samples: list[FeFunction], delta_grid=None,
                        r_exp: float = 2.0, alpha_exp: float = 0.5) -> TailCheck:
    """Fit the decay exponent of the small-ball mass for pairwise differences."""
    P = params
    bound = (1 + P.a) * r_exp + P.n * (1 - r_exp / P.p)
    if not alpha_exp < bound:
        raise DomainError(f"alpha = {alpha_exp:g} must be < (1+a)r + n(1-r/p) = {bound:g}")
    if not r_exp < P.q:
        raise DomainError(f"r = {r_exp:g} must be < q = {P.q:g}")
    if len(u_samples) < 2:
        raise DegenerateInputError("need at least two samples to form differences")
    space = u_samples[0].space
    R = mesh.radius if mesh.radius is not None else float(np.max(np.hypot(*mesh.vertices.T)))
    deltas = [d * R for d in (delta_grid if delta_grid is not None else DEFAULT_DELTAS)]
    slopes, masses = [], []
    for i in range(len(u_samples)):
        for j in range(i + 1, len(u_samples)):
            diff = u_samples[i].coef - u_samples[j].coef
            m = [small_ball_mass(space, diff, d, r_exp, alpha_exp) for d in deltas]
            masses.append(m)
            ok = [(d, v) for d, v in zip(deltas, m) if v > 0.0]
            if len(ok) < 4:
                raise DegenerateInputError("fewer than 4 delta values carry nonzero mass")
            ld = np.log([d for d, _ in ok])
            lm = np.log([v for _, v in ok])
            slopes.append(float(np.polyfit(ld, lm, 1)[0]))
    pred = predicted_tail_slope(P.n, alpha_exp, P.b, r_exp, P.q)
    fitted = min(slopes)
    rel = (fitted - pred) / abs(pred) if pred != 0 else math.inf
    return TailCheck(fitted, pred, rel, slopes, deltas, masses)


def smooth_samples(space: FeSpace, count: int, seed: int) -> list[FeFunction]:
    """Random smooth bounded fields: low-order polynomials times the boundary factor."""
    rng = stream(seed, "verify.samples")
    x = space.mesh.vertices
    X, Y = x[:, 0], x[:, 1]
    R2 = float(np.max(X * X + Y * Y))
    basis = np.column_stack([np.ones_like(X), X, Y, X * Y, X * X, Y * Y])
    out = []
    for _ in range(count):
        c = (basis @ rng.standard_normal(basis.shape[1])) * (R2 - X * X - Y * Y)
        c[space.boundary] = 0.0
        out.append(FeFunction(space, c))
    return out


def write_tail_csv(check: TailCheck, path: str | Path) -> None:
    mean = np.mean(np.array(check.masses), axis=0)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "mass"])
        for d, m in zip(check.deltas, mean.tolist()):
            w.writerow([repr(d), repr(m)])
