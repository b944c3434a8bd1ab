"""Bead-path, odd-loop and bead-sheet minimax drivers.

The drivers work on any finite-dimensional functional exposed through a
:class:`Landscape` (value, gradient, a preconditioning metric and an
optional retraction onto a constraint set). The node attaining the
maximum along the path, loop or sheet is moved with a *climbing* update:

* its unstable subspace is estimated by Rayleigh-Ritz on
  ``span{T, P^{-1} H T}``, where ``T`` holds the current path or sheet
  tangents and ``H`` is a finite-difference Hessian;
* inside that subspace a capped Newton step drives the gradient to zero
  (it climbs along negative-curvature directions);
* on the complement a preconditioned Armijo descent step is taken.

The remaining nodes relax with the path tangent removed and are then
redistributed by arclength while the climbing node stays pinned. This is
the classical climbing-image string method; the climbing node converges to
a critical point rather than to a merely approximate path maximum.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import dot
from .errors import ConvergenceError, GeometryError

log = logging.getLogger(__name__)


@dataclass
class Metric:
    """Preconditioner ``P``: ``solve(r) = P^{-1} r`` and ``apply(v) = P v``."""

    solve: Callable[[np.ndarray], np.ndarray]
    apply: Callable[[np.ndarray], np.ndarray]

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return dot(u, self.apply(v))

    def norm(self, u: np.ndarray) -> float:
        return math.sqrt(max(self.inner(u, u), 0.0))


@dataclass
class Landscape:
    """A smooth functional on R^N with the hooks the drivers need.

    ``metric(x)`` may return a point-dependent preconditioner; ``metric(None)``
    must return the fixed one used for distances and cheap relaxation.
    """

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    metric: Callable[[np.ndarray | None], Metric]
    dual_norm: Callable[[np.ndarray], float]
    retract: Callable[[np.ndarray], np.ndarray] = staticmethod(lambda x: x)
    dist: Callable[[np.ndarray, np.ndarray], float] | None = None

    def distance(self, x: np.ndarray, y: np.ndarray) -> float:
        if self.dist is not None:
            return self.dist(x, y)
        return self.metric(None).norm(x - y)


ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5
ROUNDOFF = 1e-13


def armijo(value: Callable[[np.ndarray], float], x: np.ndarray, f0: float, d: np.ndarray, slope: float,
           step: float = 1.0, min_step: float = 1e-12, retract=None) -> tuple[np.ndarray, float, float]:
    """Backtracking along ``-d``; returns (point, value, step). Step 0 means no progress."""
    while step >= min_step:
        y = x - step * d
        if retract is not None:
            y = retract(y)
        fy = value(y)
        pred = ARMIJO_C * step * slope
        if fy <= f0 - pred or pred < ROUNDOFF * max(abs(f0), 1.0):
            return y, fy, step
        step *= ARMIJO_SHRINK
    return x, f0, 0.0


def orthonormalize(V: np.ndarray, metric: Metric, rel_drop: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """P-orthonormal basis of the column span of V; returns (Q, P Q)."""
    Q, PQ = [], []
    for v in V.T:
        w = v.copy()
        n0 = metric.norm(w)
        if n0 == 0.0:
            continue
        for _ in range(2):
            for q, pq in zip(Q, PQ):
                w -= dot(w, pq) * q
        pw = metric.apply(w)
        nrm = math.sqrt(max(dot(w, pw), 0.0))
        if nrm > rel_drop * n0:
            Q.append(w / nrm)
            PQ.append(pw / nrm)
    if not Q:
        return np.zeros((V.shape[0], 0)), np.zeros((V.shape[0], 0))
    return np.column_stack(Q), np.column_stack(PQ)


def hessian_vector(land: Landscape, x: np.ndarray, v: np.ndarray, scale: float, rel: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian action; ``v`` is assumed P-normalized."""
    h = rel * max(scale, 1e-12)
    return (land.grad(x + h * v) - land.grad(x - h * v)) / (2.0 * h)


@dataclass
class ClimbState:
    """Per-node memory of the climbing update (unstable subspace, trust radius, last step)."""

    T: np.ndarray | None = None
    trust: float | None = None
    ritz: np.ndarray = field(default_factory=lambda: np.zeros(0))
    last_step: np.ndarray | None = None
    newton_accepted: int = 0


def climb_step(land: Landscape, x: np.ndarray, tangents: np.ndarray, state: ClimbState,
               trust_fraction: float = 0.25) -> tuple[np.ndarray, float, np.ndarray]:
    """One climbing update of node ``x``. Returns (new x, value, gradient at new x).

    A Rayleigh-Ritz basis ``S`` is built from the current unstable subspace
    ``T``, ``P^{-1} H T``, the preconditioned gradient and the previous step.
    The stationary point of the quadratic model on ``S`` (a sign-agnostic
    subspace Newton step) is taken when it lowers the dual residual;
    otherwise a capped Newton step along ``T`` is combined with an Armijo
    descent step on the complement of ``T``.
    """
    k = tangents.shape[1]
    metric = land.metric(x)
    g = land.grad(x)
    res0 = land.dual_norm(g)
    scale = metric.norm(x)
    if state.trust is None:
        state.trust = trust_fraction * max(scale, 1e-12)
    T0 = tangents if state.T is None or state.T.shape[1] != k else state.T
    T0, _ = orthonormalize(T0, metric)
    if T0.shape[1] == 0:
        T0, _ = orthonormalize(tangents, metric)
    HT = np.column_stack([hessian_vector(land, x, t, scale) for t in T0.T])
    W = np.column_stack([metric.solve(h) for h in HT.T])
    d = metric.solve(g)
    cols = [T0, W, d[:, None]]
    if state.last_step is not None:
        cols.append(state.last_step[:, None])
    S, _ = orthonormalize(np.column_stack(cols), metric)
    HS = np.column_stack([hessian_vector(land, x, s, scale) for s in S.T])
    Hr = S.T @ HS
    Hr = 0.5 * (Hr + Hr.T)
    theta, Y = np.linalg.eigh(Hr)
    kk = min(k, len(theta))
    T = S @ Y[:, :kk]
    state.T = T
    state.ritz = theta[:kk]

    # subspace Newton on the full Ritz basis
    b = Y.T @ (S.T @ g)
    tiny = 1e-10 * max(float(np.max(np.abs(theta))), 1e-300)
    coef = np.where(np.abs(theta) > tiny, -b / np.where(np.abs(theta) > tiny, theta, 1.0), 0.0)
    step = S @ (Y @ coef)
    ns = metric.norm(step)
    if ns > state.trust:
        step *= state.trust / ns
    # backtrack on the dual residual: near-flat modes make long steps leave
    # the curved critical set
    for _ in range(12):
        z = land.retract(x + step)
        gz = land.grad(z)
        rz = land.dual_norm(gz)
        if rz < res0:
            state.last_step = z - x
            state.newton_accepted += 1
            return z, land.value(z), gz
        step *= 0.5
    log.debug("climb: subspace Newton rejected (res0=%.3e, theta=%s)", res0, np.array2string(theta, precision=4))

    # fallback: Newton along T, Armijo descent on the complement
    gT = T.T @ g
    coeffs = np.zeros(kk)
    for j in range(kk):
        th = theta[j]
        s = -gT[j] / th if abs(th) > 1e-300 else -math.copysign(state.trust, gT[j])
        coeffs[j] = max(-state.trust, min(state.trust, s))
    y = x + T @ coeffs
    d_perp = d - T @ gT
    slope = dot(g, d_perp)
    fy = land.value(land.retract(y))
    if slope > 0.0:
        z, fz, _ = armijo(land.value, y, fy, d_perp, slope, retract=land.retract)
    else:
        z, fz = land.retract(y), fy
    state.last_step = z - x
    return z, fz, land.grad(z)


def relax_step(land: Landscape, x: np.ndarray, fx: float, tangents: np.ndarray, metric: Metric,
               tries: int = 6, max_step: float | None = None) -> tuple[np.ndarray, float]:
    """Preconditioned descent with the tangent directions projected out.

    ``max_step`` caps the metric length of the move (nodes of an unbounded
    functional would otherwise run off downhill).
    """
    g = land.grad(x)
    d = metric.solve(g)
    if tangents.shape[1]:
        T, _ = orthonormalize(tangents, metric)
        d = d - T @ (T.T @ g)
    step = 1.0
    if max_step is not None:
        nd = metric.norm(d)
        if nd > max_step:
            step = max_step / nd
    for _ in range(tries):
        y = land.retract(x - step * d)
        fy = land.value(y)
        if fy < fx:
            return y, fy
        step *= 0.5
    return x, fx


# ----------------------------------------------------------------------------
# arclength redistribution


def _cumulative(points: list[np.ndarray], dist) -> np.ndarray:
    s = [0.0]
    for a, b in zip(points[:-1], points[1:]):
        s.append(s[-1] + dist(a, b))
    return np.array(s)


def redistribute(points: list[np.ndarray], n_intervals: int, dist, retract) -> list[np.ndarray]:
    """Resample a polyline at ``n_intervals`` equal arclength steps; endpoints kept exactly."""
    s = _cumulative(points, dist)
    total = s[-1]
    out = [points[0]]
    if total <= 0.0:
        return [points[0]] * n_intervals + [points[-1]]
    for i in range(1, n_intervals):
        target = total * i / n_intervals
        j = int(np.searchsorted(s, target, side="right") - 1)
        j = min(max(j, 0), len(points) - 2)
        seg = s[j + 1] - s[j]
        w = 0.0 if seg <= 0.0 else (target - s[j]) / seg
        out.append(retract((1.0 - w) * points[j] + w * points[j + 1]))
    out.append(points[-1])
    return out


# ----------------------------------------------------------------------------
# drivers


@dataclass
class MinimaxResult:
    x: np.ndarray
    value: float
    residual: float
    iterations: int
    converged: bool
    nodes: list[np.ndarray]
    history: list[dict]


def _hysteresis(v: float) -> float:
    return 1e-9 * max(abs(v), 1.0)


def string_minimax(land: Landscape, beads: list[np.ndarray], tol: float, max_iter: int,
                   relax_filter: Callable[[float], bool] | None = None, floor: float | None = None,
                   relax_every: int = 1) -> MinimaxResult:
    """Climbing-image string between two fixed endpoints.

    ``relax_filter(value)`` selects which non-climbing beads are relaxed;
    ``floor`` triggers a :class:`GeometryError` when the path maximum drops
    below it (the path slid off the ridge).
    """
    beads = [np.array(b, dtype=float) for b in beads]
    n = len(beads)
    if n < 3:
        raise ValueError("a path needs at least 3 beads")
    fixed = land.metric(None)
    vals = [land.value(b) for b in beads]
    c = 1 + int(np.argmax(vals[1:-1]))
    state = ClimbState()
    history: list[dict] = []
    res = math.inf
    for it in range(1, max_iter + 1):
        tangent = (beads[c + 1] - beads[c - 1])[:, None]
        beads[c], vals[c], g = climb_step(land, beads[c], tangent, state)
        res = land.dual_norm(g)
        if it % relax_every == 0:
            for i in range(1, n - 1):
                if i == c or (relax_filter is not None and not relax_filter(vals[i])):
                    continue
                t = (beads[i + 1] - beads[i - 1])[:, None]
                beads[i], vals[i] = relax_step(land, beads[i], vals[i], t, fixed)
        # reparameterize with the climber pinned
        s = _cumulative(beads, land.distance)
        cpos = min(max(int(round((n - 1) * s[c] / s[-1])), 1), n - 2) if s[-1] > 0 else c
        left = redistribute(beads[: c + 1], cpos, land.distance, land.retract)
        right = redistribute(beads[c:], n - 1 - cpos, land.distance, land.retract)
        if cpos != c:
            state = ClimbState(T=state.T, trust=state.trust)
        beads = left + right[1:]
        vals = [land.value(b) for b in beads]
        c = cpos
        imax = 1 + int(np.argmax(vals[1:-1]))
        if vals[imax] > vals[c] + _hysteresis(vals[c]):
            c = imax
            state = ClimbState(trust=state.trust)
        history.append({"iter": it, "max": vals[c], "residual": res})
        log.debug("string it=%d bead=%d I=%.8g res=%.3e ritz=%s", it, c, vals[c], res, state.ritz)
        if floor is not None and vals[c] < floor:
            raise GeometryError("no mountain pass geometry detected: path maximum fell below alpha/2")
        if res < tol and c == imax:
            return MinimaxResult(beads[c], vals[c], res, it, True, beads, history)
    raise ConvergenceError("string minimax did not converge", iterate=beads[c], residual=res, history=history)


def odd_loop_minimax(land: Landscape, beads: list[np.ndarray], tol: float, max_iter: int,
                     stall_window: int = 50, relax_every: int = 1) -> MinimaxResult:
    """Climbing-image loop with exact antipodal symmetry.

    Only ``m`` beads are stored; the full loop is ``b_0..b_{m-1}, -b_0..-b_{m-1}``.
    After each iteration the half-loop from the climber to its antipode is
    resampled, so the climber becomes stored bead 0.
    """
    beads = [np.array(b, dtype=float) for b in beads]
    m = len(beads)
    if m < 3:
        raise ValueError("an odd loop needs at least 3 stored beads")
    fixed = land.metric(None)

    def full(i):
        i %= 2 * m
        return beads[i] if i < m else -beads[i - m]

    vals = [land.value(b) for b in beads]
    c = int(np.argmax(vals))
    state = ClimbState()
    history: list[dict] = []
    res = math.inf
    for it in range(1, max_iter + 1):
        tangent = (full(c + 1) - full(c - 1))[:, None]
        beads[c], vals[c], g = climb_step(land, beads[c], tangent, state)
        res = land.dual_norm(g)
        if it % relax_every == 0:
            new = list(beads)
            for i in range(m):
                if i == c:
                    continue
                t = (full(i + 1) - full(i - 1))[:, None]
                new[i], vals[i] = relax_step(land, beads[i], vals[i], t, fixed)
            beads = new
        half = [full(c + j) for j in range(m + 1)]
        beads = redistribute(half, m, land.distance, land.retract)[:m]
        vals = [land.value(b) for b in beads]
        c = 0
        imax = int(np.argmax(vals))
        if vals[imax] > vals[0] + _hysteresis(vals[0]):
            c = imax
            state = ClimbState(trust=state.trust)
        history.append({"iter": it, "max": vals[c], "residual": res})
        log.debug("loop it=%d bead=%d R=%.10g res=%.3e ritz=%s", it, c, vals[c], res, state.ritz)
        stable = len(history) > stall_window and abs(history[-1]["max"] - history[-1 - stall_window]["max"]) < tol
        if res < tol and c == imax and (stable or res < 1e-2 * tol):
            return MinimaxResult(beads[c], vals[c], res, it, True, beads, history)
    raise ConvergenceError("odd-loop minimax did not converge", iterate=beads[c], residual=res, history=history)


def sheet_minimax(land: Landscape, nodes: np.ndarray, pinned: np.ndarray, tol: float, max_iter: int,
                  tear_factor: float = 10.0, relax_filter: Callable[[float], bool] | None = None) -> MinimaxResult:
    """Climbing node on a deformable polar sheet.

    ``nodes`` has shape (n_angle, n_radius, N); ``pinned`` is a boolean
    (n_angle, n_radius) mask of nodes that never move. Only the climber and
    its grid neighbours are updated each iteration.
    """
    X = np.array(nodes, dtype=float)
    na, nr = pinned.shape
    free = [(i, j) for i in range(na) for j in range(nr) if not pinned[i, j]]
    if not free:
        raise ValueError("sheet has no free nodes")
    fixed = land.metric(None)
    V = np.full((na, nr), -np.inf)
    for i, j in free:
        V[i, j] = land.value(X[i, j])

    def spacing():
        d = [land.distance(X[i, j], X[i + 1, j]) for i in range(na - 1) for j in range(nr)]
        d += [land.distance(X[i, j], X[i, j + 1]) for i in range(na) for j in range(nr - 1)]
        return max(d)

    h0 = spacing()
    ci, cj = np.unravel_index(int(np.argmax(V)), V.shape)
    state = ClimbState()
    history: list[dict] = []
    res = math.inf

    def tangents(i, j):
        ta = X[min(i + 1, na - 1), j] - X[max(i - 1, 0), j]
        tr = X[i, min(j + 1, nr - 1)] - X[i, max(j - 1, 0)]
        return np.column_stack([ta, tr])

    for it in range(1, max_iter + 1):
        X[ci, cj], V[ci, cj], g = climb_step(land, X[ci, cj], tangents(ci, cj), state)
        res = land.dual_norm(g)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                i, j = ci + di, cj + dj
                if (di, dj) == (0, 0) or not (0 <= i < na and 0 <= j < nr) or pinned[i, j]:
                    continue
                if relax_filter is not None and not relax_filter(V[i, j]):
                    continue
                X[i, j], V[i, j] = relax_step(land, X[i, j], V[i, j], tangents(i, j), fixed, max_step=h0)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                i, j = ci + di, cj + dj
                if not (0 <= i < na and 0 <= j < nr):
                    continue
                for ni, nj in ((i + 1, j), (i, j + 1)):
                    if ni < na and nj < nr and land.distance(X[i, j], X[ni, nj]) > tear_factor * h0:
                        log.debug("tear between (%d,%d) and (%d,%d): %.3g > %.3g", i, j, ni, nj,
                                  land.distance(X[i, j], X[ni, nj]), tear_factor * h0)
                        raise GeometryError("sheet tear: adjacent node distance exceeds 10x initial spacing")
        imax = np.unravel_index(int(np.argmax(V)), V.shape)
        if V[imax] > V[ci, cj] + _hysteresis(V[ci, cj]):
            ci, cj = imax
            state = ClimbState(trust=state.trust)
        history.append({"iter": it, "max": float(V[ci, cj]), "residual": res})
        log.debug("sheet it=%d node=(%d,%d) I=%.8g res=%.3e ritz=%s", it, ci, cj, V[ci, cj], res, state.ritz)
        if res < tol and (ci, cj) == tuple(imax):
            return MinimaxResult(X[ci, cj].copy(), float(V[ci, cj]), res, it, True, list(X.reshape(-1, X.shape[-1])), history)
    raise ConvergenceError("sheet minimax did not converge", iterate=X[ci, cj].copy(), residual=res, history=history)
