"""Independent reference values, computed without any package code."""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq
from scipy.special import jv


def bisect(f, lo: float, hi: float, tol: float = 1e-13) -> float:
    flo = f(lo)
    if flo * f(hi) > 0:
        raise ValueError("no sign change on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bessel_root(order: int, lo: float, hi: float) -> float:
    return bisect(lambda x: jv(order, x), lo, hi)


J01 = bessel_root(0, 2.0, 3.0)
J11 = bessel_root(1, 3.0, 4.5)
LAMBDA1_DISK = J01**2
LAMBDA2_DISK = J11**2


def ground_state_shooting(lam: float, radius: float = 1.0):
    """Positive radial solution of -u'' - u'/r = lam u + u^3 on (0, R), u'(0)=0, u(R)=0.

    Shoots on the central value u(0)=s and returns (s, energy I(u)) with
    I = int (u'^2/2 - lam u^2/2 - u^4/4) 2 pi r dr.
    """

    def rhs(r, y):
        u, v = y
        return [v, -v / r - lam * u - u**3]

    def start(s, r0=1e-6):
        # series u = s - (lam s + s^3) r^2 / 4
        k = lam * s + s**3
        return [s - k * r0 * r0 / 4.0, -k * r0 / 2.0], r0

    def end_value(s):
        y0, r0 = start(s)
        sol = solve_ivp(rhs, (r0, radius), y0, rtol=1e-12, atol=1e-13)
        return sol.y[0, -1]

    # the first zero moves inward as s grows: bracket the s that puts it at R
    lo, hi = 0.1, 1.0
    while end_value(hi) > 0:
        lo, hi = hi, 2.0 * hi
    s = brentq(end_value, lo, hi, xtol=1e-14, rtol=1e-14)
    y0, r0 = start(s)
    sol = solve_ivp(rhs, (r0, radius), y0, rtol=1e-12, atol=1e-13, dense_output=True)

    def integrand(r):
        u, v = sol.sol(r)
        return (0.5 * v * v - 0.5 * lam * u * u - 0.25 * u**4) * 2.0 * math.pi * r

    energy, _ = quad(integrand, r0, radius, limit=400, epsabs=1e-12)
    return s, energy


def radial_power_integral(exponent: float, radius: float = 1.0) -> float:
    """int_{|x|<R} |x|^exponent dx in the plane."""
    return 2.0 * math.pi * radius ** (exponent + 2.0) / (exponent + 2.0)


def fd_gradient(f, x: np.ndarray, idx, h: float = 1e-6) -> np.ndarray:
    out = np.empty(len(idx))
    for k, i in enumerate(idx):
        e = np.zeros_like(x)
        e[i] = h
        out[k] = (f(x + e) - f(x - e)) / (2.0 * h)
    return out
