"""Radial reduction of the functionals on a ball of effective dimension n_eff.

For ``u(x) = u(|x|)`` every functional becomes a 1D integral against
``omega * r^{n_eff-1} dr`` with ``omega = 2 pi^{n/2} / Gamma(n/2)``. The
profile is piecewise linear on a graded grid; integrals use the midpoint
of each cell, so the possibly singular weight is never evaluated at r=0.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import gamma as gamma_fn

from .assembly import dot
from .errors import ConvergenceError, IntegrabilityError
from .minimax import ARMIJO_C, ARMIJO_SHRINK, ROUNDOFF, Landscape, Metric, string_minimax
from .params import Nonlinearity, ProblemParams


@dataclass(frozen=True, eq=False)
class RadialGrid:
    radius: float
    m: int
    grading: float = 2.0

    def __post_init__(self):
        if self.m < 2 or self.radius <= 0 or self.grading < 1:
            raise ValueError("need m >= 2, radius > 0 and grading >= 1")
        r = self.radius * (np.arange(self.m + 1) / self.m) ** self.grading
        r[-1] = self.radius
        object.__setattr__(self, "radii", r)

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.radii)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.radii[1:] + self.radii[:-1])


@dataclass(frozen=True, eq=False)
class RadialFunction:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.m + 1,):
            raise ValueError(f"expected {self.grid.m + 1} values")
        if v[-1] != 0.0:
            raise ValueError("radial function must vanish at r = R")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def sphere_area(n: float) -> float:
    return 2.0 * math.pi ** (0.5 * n) / gamma_fn(0.5 * n)


class RadialFunctionals:
    """Phi, J, N_F and I on a radial grid, with gradients."""

    def __init__(self, grid: RadialGrid, params: ProblemParams, nl: Nonlinearity | None = None):
        P = params
        n = P.n_eff
        self.grid = grid
        self.params = P
        self.nl = nl if nl is not None else P.nonlinearity()
        self.p = float(P.p)
        exps = {
            "phi": n - 1 - P.gamma_phi,
            "J": n - 1 - P.gamma_j,
            "F": n - 1 - P.gamma_f,
        }
        for name, e in exps.items():
            if e <= -1.0:
                raise IntegrabilityError(f"reduced exponent for {name} is {e:.4g} <= -1: not integrable at r=0")
        om = sphere_area(n)
        h, rm = grid.h, grid.midpoints
        self.h = h
        self.w_phi = om * h * rm ** exps["phi"]
        self.w_j = om * h * rm ** exps["J"]
        self.w_f = om * h * rm ** exps["F"]
        self.size = grid.m + 1

    # difference quotient and midpoint average
    def slope(self, u):
        return np.diff(u) / self.h

    def mid(self, u):
        return 0.5 * (u[1:] + u[:-1])

    def _dt_slope(self, s):
        out = np.zeros(self.size)
        t = s / self.h
        out[:-1] -= t
        out[1:] += t
        out[-1] = 0.0
        return out

    def _dt_mid(self, s):
        out = np.zeros(self.size)
        out[:-1] += 0.5 * s
        out[1:] += 0.5 * s
        out[-1] = 0.0
        return out

    def phi(self, u):
        return float(np.sum(self.w_phi * np.abs(self.slope(u)) ** self.p))

    def _coef(self, s, delta=None):
        if self.p == 2.0:
            return np.ones_like(s)
        d = self.params.eps if delta is None else delta
        return (s * s + d * d) ** (0.5 * (self.p - 2.0))

    def dphi(self, u):
        s = self.slope(u)
        return self.p * self._dt_slope(self.w_phi * self._coef(s) * s)

    def J(self, u):
        return float(np.sum(self.w_j * np.abs(self.mid(u)) ** self.p))

    def dJ(self, u):
        v = self.mid(u)
        return self.p * self._dt_mid(self.w_j * np.abs(v) ** (self.p - 2.0) * v)

    def nf(self, u):
        return float(np.sum(self.w_f * self.nl.F(self.mid(u))))

    def dnf(self, u):
        return self._dt_mid(self.w_f * self.nl.f(self.mid(u)))

    def energy(self, u):
        return self.phi(u) / self.p - self.params.lam * self.J(u) / self.p - self.nf(u)

    def residual(self, u):
        return self.dphi(u) / self.p - self.params.lam * self.dJ(u) / self.p - self.dnf(u)

    # tridiagonal metric on the unknowns u_0..u_{m-1}
    def metric(self, u=None, scale: float = 1.0) -> Metric:
        k = self.w_phi / self.h ** 2
        if u is not None and self.p != 2.0:
            s = self.slope(u)
            rms = math.sqrt(float(np.sum(self.h * s * s)) / self.grid.radius)
            k = k * self._coef(s, max(1e-3 * rms, self.params.eps))
        k = scale * k
        m = self.grid.m
        diag = np.zeros(m)
        diag += k
        diag[1:] += k[:-1]
        off = -k[:-1]
        ab = np.zeros((3, m))
        ab[0, 1:] = off
        ab[1] = diag
        ab[2, :-1] = off

        def solve(r):
            out = np.zeros(self.size)
            out[:-1] = solve_banded((1, 1), ab, r[:-1])
            return out

        def apply(v):
            out = np.zeros(self.size)
            w = v[:-1]
            out[:-1] = diag * w
            out[:-2] += off * w[1:]
            out[1:-1] += off * w[:-1]
            return out

        return Metric(solve, apply)

    def dual_norm(self, r):
        return math.sqrt(max(dot(r, self.metric().solve(r)), 0.0))


def radial_Phi(u: RadialFunction, params: ProblemParams) -> float:
    return RadialFunctionals(u.grid, params).phi(u.values)


def radial_J(u: RadialFunction, params: ProblemParams) -> float:
    return RadialFunctionals(u.grid, params).J(u.values)


def radial_I(u: RadialFunction, params: ProblemParams, nl: Nonlinearity | None = None) -> float:
    return RadialFunctionals(u.grid, params, nl).energy(u.values)


def radial_lambda1(params: ProblemParams, grid: RadialGrid, tol: float = 1e-10,
                   max_iter: int = 2000) -> tuple[float, RadialFunction]:
    """Minimize the radial Rayleigh quotient by preconditioned projected descent."""
    fn = RadialFunctionals(grid, params)
    p = fn.p
    r = grid.radii
    u = grid.radius ** 2 - r * r
    u[-1] = 0.0
    u = u / fn.J(u) ** (1.0 / p)
    f = fn.phi(u)
    res = math.inf
    for _ in range(max_iter):
        g = fn.dphi(u) - f * fn.dJ(u)
        res = fn.dual_norm(g)
        if res < tol:
            break
        met = fn.metric(u, scale=p)
        d = met.solve(g)
        slope = dot(g, d)
        step = 1.0
        while True:
            y = u - step * d
            y = y / fn.J(y) ** (1.0 / p)
            fy = fn.phi(y)
            pred = ARMIJO_C * step * slope
            if fy <= f - pred or pred < ROUNDOFF * abs(f):
                break
            step *= ARMIJO_SHRINK
            if step < 1e-14:
                raise ConvergenceError("radial lambda1 line search failed", iterate=u, residual=res)
        u, f = y, fy
    else:
        raise ConvergenceError("radial lambda1 did not converge", iterate=u, residual=res)
    if np.sum(u) < 0:
        u = -u
    u[-1] = 0.0
    return fn.phi(u), RadialFunction(grid, u)


def radial_landscape(fn: RadialFunctionals) -> Landscape:
    fixed = fn.metric()
    return Landscape(
        value=fn.energy,
        grad=fn.residual,
        metric=lambda u: fixed if u is None or fn.p == 2.0 else fn.metric(u),
        dual_norm=fn.dual_norm,
    )


def radial_mountain_pass(params: ProblemParams, nl: Nonlinearity, grid: RadialGrid, n_path: int = 17,
                         tol: float = 1e-8, max_iter: int = 2000) -> tuple[float, RadialFunction]:
    """Climbing-image bead path from 0 to ``t e1`` with ``I(t e1) < -1``."""
    from .params import check_f_conditions

    check_f_conditions(nl, params.p, params.p_star if params.mode == "paper" else math.inf).raise_for_failure()
    lam1, e1 = radial_lambda1(params, grid)
    if not params.lam < lam1:
        raise ValueError(f"mountain pass needs lambda < lambda1_rad = {lam1:.6g}")
    fn = RadialFunctionals(grid, params, nl)
    t = 1.0
    while fn.energy(t * e1.values) >= -1.0:
        t *= 2.0
        if t > 2.0**40:
            raise ValueError("I(t e1) >= -1 up to t = 2^40")
    u1 = t * e1.values
    beads = [u1 * (i / (n_path - 1)) for i in range(n_path)]
    land = radial_landscape(fn)
    out = string_minimax(land, beads, tol=tol, max_iter=max_iter, relax_filter=lambda v: v >= 0.0)
    if not out.value > 0.0 or np.max(np.abs(out.x)) == 0.0:
        raise ValueError("no mountain pass geometry detected")
    u = out.x.copy()
    u[-1] = 0.0
    return out.value, RadialFunction(grid, u)


def write_radial(u: RadialFunction, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "value"])
        for r, v in zip(u.grid.radii.tolist(), u.values.tolist()):
            w.writerow([repr(r), repr(v)])
