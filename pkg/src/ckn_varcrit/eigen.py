"""First and second eigenpairs of the weighted p-Laplacian.

``lambda1`` is the minimum of Phi on ``M = {J = 1}``; ``mu2`` is the
odd-loop minimax value, computed with a climbing-image loop. For p = 2 a
linear generalized eigensolver provides an independent check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import FeFunction, FeSpace, Functionals, dot, space_for, spd_factor
from .errors import ConvergenceError, DegenerateInputError
from .mesh import Mesh
from .minimax import ARMIJO_C, ARMIJO_SHRINK, ROUNDOFF, Landscape, Metric, odd_loop_minimax
from .params import ProblemParams
from .rng import stream

log = logging.getLogger(__name__)

J_FLOOR = 1e-14


@dataclass
class EigenPair:
    value: float
    func: FeFunction
    k: int
    residual_norm: float
    iterations: int = 0
    history: list = field(default_factory=list)


@dataclass
class OddLoop:
    """Odd closed loop on M stored as its first half: ``bead[i+m] = -bead[i]``."""

    beads: list[FeFunction]

    @property
    def m(self) -> int:
        return len(self.beads)

    def bead(self, i: int) -> FeFunction:
        i %= 2 * self.m
        return self.beads[i] if i < self.m else -self.beads[i - self.m]


def normalize_to_M(u: FeFunction, params: ProblemParams, j_floor: float = J_FLOOR) -> FeFunction:
    """Scale ``u`` onto ``{J = 1}``."""
    Ju = u.space.functionals(params).J(u.coef)
    if not Ju > j_floor:
        raise DegenerateInputError(f"J(u) = {Ju:.3e} is below the floor {j_floor:.1e}")
    return FeFunction(u.space, u.coef / Ju ** (1.0 / params.p))


def rayleigh_landscape(fn: Functionals) -> Landscape:
    """``R = Phi / J`` with metric ``p * A_u`` and retraction onto M."""
    p = fn.p
    space = fn.space

    def value(c):
        return fn.phi(c) / fn.J(c)

    def grad(c):
        J = fn.J(c)
        R = fn.phi(c) / J
        return (fn.dphi(c) - R * fn.dJ(c)) / J

    def metric(c):
        solve, apply = fn.metric_operator(c, scale=p)
        return Metric(solve, apply)

    def retract(c):
        return c / fn.J(c) ** (1.0 / p)

    def dist(u, v):
        return fn.J(u - v) ** (1.0 / p)

    fixed = metric(None)
    return Landscape(
        value=value,
        grad=grad,
        metric=lambda c: fixed if c is None or p == 2.0 else metric(c),
        dual_norm=fn.dual_norm,
        retract=retract,
        dist=dist,
    )


def _sign_normalize(fn: Functionals, c: np.ndarray) -> np.ndarray:
    ones = np.zeros_like(c)
    ones[fn.space.free] = 1.0
    return -c if fn.weighted_pairing(c, ones) < 0 else c


def eigen_residual(fn: Functionals, c: np.ndarray, lam: float) -> np.ndarray:
    return fn.dphi(c) - lam * fn.dJ(c)


def solve_lambda1(params: ProblemParams, mesh: Mesh, tol: float = 1e-8, max_iter: int = 2000,
                  seed: int = 42, space: FeSpace | None = None) -> EigenPair:
    """Minimize Phi on M by preconditioned projected descent.

    Each step is ``u <- normalize(u - s P^{-1} g)`` with ``g`` the tangential
    gradient of the Rayleigh quotient and Armijo backtracking from ``s=1``;
    for p = 2 the unit step is exactly one inverse-iteration step.
    """
    space = space or space_for(mesh)
    fn = space.functionals(params)
    land = rayleigh_landscape(fn)
    rng = stream(seed, "eigen.lambda1")
    x = mesh.vertices
    R = mesh.radius if mesh.radius is not None else float(np.max(np.hypot(x[:, 0], x[:, 1])))
    c0 = (R * R - np.einsum("ij,ij->i", x, x)) * (1.0 + 0.5 * rng.random(space.n))
    c0[space.boundary] = 0.0
    c = land.retract(c0)
    f = land.value(c)
    history = []
    res = math.inf
    for it in range(1, max_iter + 1):
        g = land.grad(c)
        res = fn.dual_norm(g)
        history.append({"iter": it, "value": f, "residual": res})
        if res < tol:
            c = _sign_normalize(fn, c)
            e = FeFunction(space, c)
            val = fn.phi(c)
            _check_positive(space, c)
            return EigenPair(val, e, 1, fn.dual_norm(eigen_residual(fn, c, val)), it, history)
        metric = land.metric(c)
        d = metric.solve(g)
        slope = dot(g, d)
        step = 1.0
        while True:
            y = land.retract(c - step * d)
            fy = land.value(y)
            pred = ARMIJO_C * step * slope
            if fy <= f - pred or pred < ROUNDOFF * abs(f):
                break
            step *= ARMIJO_SHRINK
            if step < 1e-14:
                raise ConvergenceError("lambda1 line search failed", iterate=c, residual=res, history=history)
        c, f = y, fy
    raise ConvergenceError("lambda1 did not converge", iterate=c, residual=res, history=history)


def _check_positive(space: FeSpace, c: np.ndarray) -> None:
    vmin = float(np.min(c[space.free]))
    if vmin < -1e-10:
        log.warning("first eigenfunction has negative interior value %.3e (solver fault)", vmin)


def _smooth_nonradial(space: FeSpace, rng: np.random.Generator) -> np.ndarray:
    x = space.mesh.vertices
    X, Y = x[:, 0], x[:, 1]
    R2 = float(np.max(X * X + Y * Y))
    # even in y: on the reflection-symmetric mesh the loop stays in that subspace,
    # which pins the rotational freedom of the degenerate second eigenspace
    basis = np.column_stack([X, X * X - Y * Y, X * (X * X + Y * Y), X * (X * X - 3.0 * Y * Y)])
    w = (basis @ rng.standard_normal(basis.shape[1])) * (R2 - X * X - Y * Y)
    w[space.boundary] = 0.0
    return w


def initial_loop(fn: Functionals, e1: np.ndarray, m: int, seed: int) -> list[np.ndarray]:
    """Half of the great circle through e1 and a smooth field orthogonal to it."""
    rng = stream(seed, "eigen.mu2.loop")
    w = _smooth_nonradial(fn.space, rng)
    w = w - fn.weighted_pairing(e1, w) * e1
    w = w / fn.J(w) ** (1.0 / fn.p)
    beads = []
    for i in range(m):
        t = math.pi * i / m
        b = math.cos(t) * e1 + math.sin(t) * w
        beads.append(b / fn.J(b) ** (1.0 / fn.p))
    return beads


def solve_mu2(params: ProblemParams, mesh: Mesh, e1: EigenPair, m_beads: int = 16, tol: float = 1e-8,
              max_iter: int = 2000, seed: int = 42, space: FeSpace | None = None) -> tuple[EigenPair, OddLoop]:
    """Odd-loop minimax for the second eigenvalue.

    ``m_beads`` is the number of stored beads (the loop has ``2 m_beads``).
    """
    space = space or e1.func.space
    fn = space.functionals(params)
    land = rayleigh_landscape(fn)
    beads = initial_loop(fn, e1.func.coef, m_beads, seed)
    out = odd_loop_minimax(land, beads, tol=tol, max_iter=max_iter)
    c = out.x
    val = fn.phi(c)
    pair = EigenPair(val, FeFunction(space, c), 2, fn.dual_norm(eigen_residual(fn, c, val)), out.iterations, out.history)
    loop = OddLoop([FeFunction(space, b) for b in out.nodes])
    return pair, loop


def linear_cross_check(params: ProblemParams, mesh: Mesh, tol: float = 1e-12, max_iter: int = 1000,
                       seed: int = 42, return_vectors: bool = False):
    """Two smallest eigenvalues of the weighted stiffness/mass pencil (p = 2 only).

    Inverse iteration with M-orthogonal deflation of the first eigenvector.
    """
    if params.p != 2.0:
        raise ValueError("linear_cross_check requires p = 2")
    space = space_for(mesh)
    free = space.free
    A = space.stiffness(params.gamma_phi)[free][:, free].tocsc()
    Mm = space.mass(params.gamma_j)[free][:, free].tocsr()
    lu = spd_factor(A)
    rng = stream(seed, "eigen.linear")
    found: list[np.ndarray] = []
    values: list[float] = []
    for _ in range(2):
        x = rng.standard_normal(len(free))
        lam_old = math.inf
        for _ in range(max_iter):
            for v in found:
                x = x - dot(v, Mm @ x) * v
            x = x / math.sqrt(dot(x, Mm @ x))
            y = lu.solve(Mm @ x)
            lam = dot(x, A @ x)
            x = y
            if abs(lam - lam_old) <= tol * lam:
                break
            lam_old = lam
        for v in found:
            x = x - dot(v, Mm @ x) * v
        x = x / math.sqrt(dot(x, Mm @ x))
        found.append(x)
        values.append(dot(x, A @ x))
    if return_vectors:
        vecs = []
        for v in found:
            full = np.zeros(space.n)
            full[free] = v
            vecs.append(FeFunction(space, full))
        return values[0], values[1], vecs
    return values[0], values[1]
