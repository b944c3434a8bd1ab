"""Nontrivial critical points of the energy I.

Mountain pass (``0 < lam < lam1``): a bead path from 0 to ``u1 = t e1`` with
``I(u1) < -1``. Linking (``lam1 <= lam < lam2``): a polar sheet over the
half-disk ``Q_r`` in ``span{e1, e2}`` whose boundary stays pinned. In both
cases the node of maximal energy is moved by the climbing update of
:mod:`ckn_varcrit.minimax` until its dual residual is below ``tol``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .assembly import FeFunction, FeSpace, Functionals
from .eigen import EigenPair
from .errors import DegenerateInputError, GeometryError
from .minimax import Landscape, Metric, sheet_minimax, string_minimax
from .params import Nonlinearity, ProblemParams
from .rng import stream
from .verify import sign_components

TAU_Z = 1e-3
J_FLOOR = 1e-14


@dataclass
class SolveReport:
    beta: float
    alpha: float
    residual_dual: float
    u: FeFunction
    sign_changes: int
    regime: str
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    norm_u: float = 0.0

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "converged": self.converged,
            "iterations": self.iterations,
            "norm_u": self.norm_u,
            "regime": self.regime,
            "residual_dual": self.residual_dual,
            "sign_changes": self.sign_changes,
        }


def energy_landscape(fn: Functionals) -> Landscape:
    """I with the weighted stiffness (frozen at u for p != 2) as metric."""
    solve, apply = fn.metric_operator()
    fixed = Metric(solve, apply)

    def metric(c):
        if c is None or fn.p == 2.0:
            return fixed
        return Metric(*fn.metric_operator(c))

    return Landscape(value=fn.energy, grad=fn.residual, metric=metric, dual_norm=fn.dual_norm)


def random_smooth_field(space: FeSpace, rng: np.random.Generator) -> np.ndarray:
    """Smoothed white noise: the Riesz representer of random nodal loads."""
    fn0 = space.functionals(ProblemParams())
    r = rng.standard_normal(space.n)
    r[space.boundary] = 0.0
    return fn0.riesz(r)


# ----------------------------------------------------------------------------
# mountain pass


def find_u1(e1: EigenPair, params: ProblemParams, nl: Nonlinearity | None = None) -> FeFunction:
    """``t e1`` for the first ``t`` in 1, 2, 4, ... with ``I(t e1) < -1``."""
    fn = e1.func.space.functionals(params, nl)
    c = e1.func.coef
    t = 1.0
    while fn.energy(t * c) >= -1.0:
        t *= 2.0
        if t > 2.0**40:
            raise GeometryError("I(t e1) >= -1 for t up to 2^40: check the nonlinearity (f3)")
    return FeFunction(e1.func.space, t * c)


@dataclass
class MpGeometry:
    alpha: float
    rho: float
    sweep: list[dict]
    bound_ok: bool

    def __iter__(self):
        return iter((self.alpha, self.rho))


def check_mp_geometry(params: ProblemParams, nl: Nonlinearity | None, e1: EigenPair, rho_grid=None,
                      n_sphere_samples: int = 64, seed: int = 42) -> MpGeometry:
    """Sample ``I`` on spheres ``||u|| = rho`` and keep the largest rho with a positive minimum.

    Directions are e1 plus smoothed random fields, each scaled to unit
    norm ``Phi(v)^{1/p} = 1``. The sweep records, per rho, the sampled
    minimum and the lower bound ``(1/p)(1 - lam/lam1 - delta_F) rho^p``.
    """
    space = e1.func.space
    fn = space.functionals(params, nl)
    p = fn.p
    rng = stream(seed, "critical.mp_geometry")
    dirs = [e1.func.coef]
    while len(dirs) < n_sphere_samples:
        dirs.append(random_smooth_field(space, rng))
    dirs = [d / fn.norm(d) for d in dirs]
    if rho_grid is None:
        rho_grid = [2.0**k for k in range(-6, 5)]
    lam1 = e1.value
    sweep = []
    best = None
    bound_ok = True
    for rho in sorted(float(r) for r in rho_grid):
        vals = np.array([fn.energy(rho * d) for d in dirs])
        dF = max(p * fn.nf(rho * d) for d in dirs) / rho**p
        bound = (1.0 / p) * (1.0 - params.lam / lam1 - dF) * rho**p
        amin = float(vals.min())
        ok = amin >= bound - 1e-12 * max(1.0, abs(bound))
        bound_ok &= ok
        sweep.append({"rho": rho, "alpha": amin, "bound": bound, "bound_ok": bool(ok)})
        if amin > 0.0:
            best = (amin, rho)
    if best is None:
        raise GeometryError("no rho in the grid gives a positive sampled minimum of I on the sphere")
    return MpGeometry(best[0], best[1], sweep, bool(bound_ok))


def mountain_pass(params: ProblemParams, nl: Nonlinearity | None, u1: FeFunction, n_path: int = 17,
                  tol: float = 1e-8, max_iter: int = 2000, alpha: float | None = None) -> SolveReport:
    """Climbing-image bead path from 0 to ``u1`` (both endpoints fixed)."""
    if n_path < 9:
        raise ValueError("n_path must be at least 9")
    space = u1.space
    fn = space.functionals(params, nl)
    if not fn.energy(u1.coef) < 0.0:
        raise GeometryError("I(u1) must be negative")
    land = energy_landscape(fn)
    beads = [u1.coef * (i / (n_path - 1)) for i in range(n_path)]
    floor = 0.5 * alpha if alpha is not None else None
    out = string_minimax(land, beads, tol=tol, max_iter=max_iter, relax_filter=lambda v: v >= 0.0, floor=floor)
    u = FeFunction(space, out.x)
    return SolveReport(
        beta=out.value,
        alpha=alpha if alpha is not None else 0.0,
        residual_dual=out.residual,
        u=u,
        sign_changes=sign_components(u),
        regime="mountain_pass",
        iterations=out.iterations,
        converged=out.converged and out.residual < tol and out.value > 0.0,
        history=out.history,
        norm_u=fn.norm(out.x),
    )


# ----------------------------------------------------------------------------
# linking


def classify_K(u: FeFunction, e1: EigenPair, params: ProblemParams, lambda2: float, tau_z: float = TAU_Z) -> str:
    """``K1``, ``minus_K1`` or ``boundary_zone`` from the e1-pairing sign and the Rayleigh ratio."""
    fn = u.space.functionals(params)
    J = fn.J(u.coef)
    if J < J_FLOOR:
        raise DegenerateInputError(f"J(u) = {J:.3e} below floor")
    ratio = fn.phi(u.coef) / J
    sigma = fn.weighted_pairing(u.coef, e1.func.coef)
    if ratio < lambda2 * (1.0 - tau_z):
        if sigma > 0:
            return "K1"
        if sigma < 0:
            return "minus_K1"
    return "boundary_zone"


@dataclass
class LinkingFrame:
    """Sampled geometry of the linking sets in ``span{e1~, e2~}``.

    ``sheet`` has shape (n_angle, n_radius, N): node (i, j) is
    ``s_j w(phi_i) / ||w(phi_i)||`` with ``w = cos(phi) e1~ + sin(phi) e2~``,
    ``phi_i = pi i/(n_angle-1)`` and ``s_j = r j/(n_radius-1)``. ``pinned``
    marks the boundary of Q_r (the t2=0 segment and the outer arc).
    """

    space: FeSpace
    e1t: np.ndarray
    e2t: np.ndarray
    lambda1: float
    lambda2: float
    r: float
    rho: float
    z_directions: list[np.ndarray]
    n_angle: int = 17
    n_radius: int = 9
    tau_z: float = TAU_Z
    p: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.rho < self.r:
            raise ValueError("need 0 < rho < r")

    def _unit(self, phi: float, fn: Functionals) -> np.ndarray:
        w = math.cos(phi) * self.e1t + math.sin(phi) * self.e2t
        return w / fn.norm(w)

    def sheet(self, fn: Functionals) -> np.ndarray:
        phis = np.linspace(0.0, math.pi, self.n_angle)
        units = [self._unit(ph, fn) for ph in phis]
        units[0] = self.e1t / fn.norm(self.e1t)
        units[-1] = -units[0]
        s = np.linspace(0.0, self.r, self.n_radius)
        return np.array([[sj * w for sj in s] for w in units])

    def pinned(self) -> np.ndarray:
        mask = np.zeros((self.n_angle, self.n_radius), dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask

    def boundary_samples(self, fn: Functionals) -> list[np.ndarray]:
        X = self.sheet(fn)
        mask = self.pinned()
        return [X[i, j] for i in range(self.n_angle) for j in range(self.n_radius) if mask[i, j]]

    def z_samples(self) -> list[np.ndarray]:
        return [self.rho * d for d in self.z_directions]


def _project_to_z(fn: Functionals, w: np.ndarray, e1: np.ndarray, lam2: float) -> np.ndarray | None:
    """Find t >= 0 with ``Phi(w + t e1) = lam2 J(w + t e1)``; None if not bracketed."""

    def g(t):
        v = w + t * e1
        return fn.phi(v) / fn.J(v) - lam2

    g0 = g(0.0)
    if g0 == 0.0:
        return w
    if g0 < 0.0:
        return None
    hi = 1.0
    while g(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6:
            return None
    t = brentq(g, 0.0, hi, xtol=1e-14, rtol=1e-14, maxiter=200)
    return w + t * e1


def build_linking_frame(e1: EigenPair, e2: EigenPair, params: ProblemParams, r: float, rho: float,
                        grid_density: int = 32, seed: int = 42, tau_z: float = TAU_Z,
                        n_angle: int = 17, n_radius: int = 9) -> LinkingFrame:
    """Sample Q_r, its boundary and ``grid_density`` members of Z_rho."""
    space = e1.func.space
    fn = space.functionals(params)
    p = fn.p
    lam1, lam2 = e1.value, e2.value
    e1t = e1.func.coef / lam1 ** (1.0 / p)
    e2t = e2.func.coef / lam2 ** (1.0 / p)
    rng = stream(seed, "critical.linking_frame")
    dirs = [e2.func.coef / fn.norm(e2.func.coef)]
    attempts = 0
    while len(dirs) < grid_density and attempts < 20 * grid_density:
        attempts += 1
        w = random_smooth_field(space, rng)
        w = w - fn.weighted_pairing(e1.func.coef, w) * e1.func.coef
        v = _project_to_z(fn, w, e1.func.coef, lam2)
        if v is None:
            continue
        v = v / fn.norm(v)
        if abs(fn.phi(v) / (lam2 * fn.J(v)) - 1.0) <= tau_z:
            dirs.append(v)
    if len(dirs) < grid_density:
        raise GeometryError(f"only {len(dirs)} of {grid_density} Z_rho samples reached the membership tolerance")
    return LinkingFrame(space, e1t, e2t, lam1, lam2, float(r), float(rho), dirs,
                        n_angle=n_angle, n_radius=n_radius, tau_z=tau_z, p=p)


@dataclass
class LinkingGeometry:
    alpha: float
    sup_boundary: float
    frame: LinkingFrame
    r_doublings: int
    rho_halvings: int

    def __iter__(self):
        return iter((self.alpha, self.sup_boundary))


def check_linking_geometry(frame: LinkingFrame, params: ProblemParams, nl: Nonlinearity | None = None,
                           max_steps: int = 10, boundary_tol: float = 1e-8) -> LinkingGeometry:
    """Escalate r (doubling) and reduce rho (halving) until sup I on the
    boundary of Q_r is <= boundary_tol and inf I on Z_rho is positive."""
    fn = frame.space.functionals(params, nl)
    r, rho = frame.r, frame.rho
    fr = frame
    doublings = halvings = 0
    while True:
        sup_b = max(fn.energy(u) for u in fr.boundary_samples(fn))
        if sup_b <= boundary_tol:
            break
        if doublings >= max_steps:
            raise GeometryError(f"sup of I on the boundary of Q_r is {sup_b:.3e} > 0 after {max_steps} doublings of r")
        r *= 2.0
        doublings += 1
        fr = _with(fr, r=r)
    while True:
        alpha = min(fn.energy(u) for u in fr.z_samples())
        if alpha > 0.0:
            break
        if halvings >= max_steps:
            raise GeometryError(f"inf of I on Z_rho is {alpha:.3e} <= 0 after {max_steps} halvings of rho")
        rho *= 0.5
        halvings += 1
        fr = _with(fr, rho=rho)
    return LinkingGeometry(alpha, sup_b, fr, doublings, halvings)


def _with(frame: LinkingFrame, **changes) -> LinkingFrame:
    from dataclasses import replace

    return replace(frame, **changes)


def linking_solve(frame: LinkingFrame, params: ProblemParams, nl: Nonlinearity | None = None, tol: float = 1e-8,
                  max_iter: int = 2000, alpha: float | None = None) -> SolveReport:
    """Climbing node on the polar sheet ``h(Q_r)`` with pinned boundary."""
    space = frame.space
    fn = space.functionals(params, nl)
    land = energy_landscape(fn)
    out = sheet_minimax(land, frame.sheet(fn), frame.pinned(), tol=tol, max_iter=max_iter,
                        relax_filter=lambda v: v >= 0.0)
    u = FeFunction(space, out.x)
    return SolveReport(
        beta=out.value,
        alpha=alpha if alpha is not None else 0.0,
        residual_dual=out.residual,
        u=u,
        sign_changes=sign_components(u),
        regime="linking",
        iterations=out.iterations,
        converged=out.converged and out.residual < tol and out.value > 0.0,
        history=out.history,
        norm_u=fn.norm(out.x),
    )
