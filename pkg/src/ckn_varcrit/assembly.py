"""Weighted functionals of P1 finite element fields and their weak gradients.

All integrals carry a power weight ``|x|^{-gamma}`` that may be singular
at the origin. Triangles that touch the origin are integrated with a
composite rule whose nodes avoid it; all other triangles use the 7-point
degree-5 rule.

Coefficient vectors are full-length (one entry per vertex) with zero
boundary entries; the Dirichlet condition is enforced by zeroing the
boundary rows of every gradient.
"""
from __future__ import annotations

import csv
import weakref
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh
from .params import Nonlinearity, ProblemParams
from .quadrature import DUNAVANT7, origin_composite_rule


def spd_factor(A: sp.spmatrix):
    """Sparse LU of an SPD matrix with symmetric ordering and no pivoting."""
    return spla.splu(
        sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )


def dot(x: np.ndarray, y: np.ndarray) -> float:
    # pairwise summation: deterministic regardless of BLAS threading
    return float(np.sum(x * y))


class FeSpace:
    """Continuous piecewise-linear functions on a mesh, zero on the boundary."""

    def __init__(self, mesh: Mesh, layers: int = 6):
        self.mesh = mesh
        self.layers = layers
        self.n = mesh.n_vertices
        self.boundary = np.asarray(mesh.boundary)
        self.free = np.flatnonzero(~self.boundary)
        tri = np.asarray(mesh.triangles)
        self.tri = tri
        v = mesh.vertices[tri]  # (T,3,2)
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self.area = 0.5 * det
        # gradients of the barycentric coordinates
        gb = np.empty((len(tri), 3, 2))
        gb[:, 1, 0] = e2[:, 1] / det
        gb[:, 1, 1] = -e2[:, 0] / det
        gb[:, 2, 0] = -e1[:, 1] / det
        gb[:, 2, 1] = e1[:, 0] / det
        gb[:, 0] = -gb[:, 1] - gb[:, 2]
        self.grad_basis = gb

        T = len(tri)
        rows = np.broadcast_to(np.arange(2 * T).reshape(T, 2, 1), (T, 2, 3))
        cols = np.broadcast_to(tri[:, None, :], (T, 2, 3))
        vals = np.transpose(gb, (0, 2, 1))
        self.G = sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * T, self.n))

        self._build_quadrature()
        self._tri_weight_cache: dict[float, np.ndarray] = {}
        self._qp_weight_cache: dict[float, np.ndarray] = {}
        self._functionals: dict = {}

    def _build_quadrature(self):
        mesh = self.mesh
        tri = self.tri
        r2 = np.einsum("ij,ij->i", mesh.vertices, mesh.vertices)
        is_origin = r2 == 0.0
        touches = is_origin[tri]
        at_origin = np.flatnonzero(touches.any(axis=1))
        regular = np.flatnonzero(~touches.any(axis=1))

        comp = origin_composite_rule(self.layers)
        q_tri, q_bary, q_w = [], [], []
        k = len(DUNAVANT7)
        q_tri.append(np.repeat(regular, k))
        q_bary.append(np.tile(DUNAVANT7.nodes, (len(regular), 1)))
        q_w.append((self.area[regular][:, None] * DUNAVANT7.weights[None, :]).ravel())
        for t in at_origin:
            local = int(np.flatnonzero(touches[t])[0])
            # composite rule is written with the singular vertex first
            perm = [(local + j) % 3 for j in range(3)]
            bary = np.empty_like(comp.nodes)
            bary[:, perm] = comp.nodes
            q_tri.append(np.full(len(comp), t))
            q_bary.append(bary)
            q_w.append(self.area[t] * comp.weights)
        self.qp_tri = np.concatenate(q_tri)
        self.qp_bary = np.concatenate(q_bary)
        self.qp_w = np.concatenate(q_w)
        xq = np.einsum("qk,qkd->qd", self.qp_bary, mesh.vertices[tri[self.qp_tri]])
        self.qp_x = xq
        self.qp_r = np.hypot(xq[:, 0], xq[:, 1])
        self.origin_triangles = at_origin
        Q = len(self.qp_w)
        self.B = sp.csr_matrix(
            (self.qp_bary.ravel(), (np.repeat(np.arange(Q), 3), tri[self.qp_tri].ravel())),
            shape=(Q, self.n),
        )
        self.Bt = self.B.T.tocsr()

    # ------------------------------------------------------------------
    def qp_weight(self, gamma: float) -> np.ndarray:
        """Quadrature weights times ``|x|^{-gamma}``."""
        gamma = float(gamma)
        w = self._qp_weight_cache.get(gamma)
        if w is None:
            w = self.qp_w if gamma == 0.0 else self.qp_w * self.qp_r ** (-gamma)
            self._qp_weight_cache[gamma] = w
        return w

    def tri_weight(self, gamma: float) -> np.ndarray:
        """``int_T |x|^{-gamma}`` for every triangle."""
        gamma = float(gamma)
        w = self._tri_weight_cache.get(gamma)
        if w is None:
            if gamma == 0.0:
                w = self.area.copy()
            else:
                w = np.bincount(self.qp_tri, weights=self.qp_weight(gamma), minlength=len(self.tri))
            self._tri_weight_cache[gamma] = w
        return w

    def gradients(self, coef: np.ndarray) -> np.ndarray:
        return (self.G @ coef).reshape(-1, 2)

    def values(self, coef: np.ndarray) -> np.ndarray:
        return self.B @ coef

    def stiffness(self, gamma: float, coefficient: np.ndarray | None = None) -> sp.csr_matrix:
        """``int |x|^{-gamma} k_T grad phi_i . grad phi_j`` with per-triangle
        factor ``k_T`` (default 1)."""
        w = self.tri_weight(gamma)
        if coefficient is not None:
            w = w * coefficient
        D = sp.diags(np.repeat(w, 2))
        return (self.G.T @ D @ self.G).tocsr()

    def mass(self, gamma: float) -> sp.csr_matrix:
        D = sp.diags(self.qp_weight(gamma))
        return (self.Bt @ D @ self.B).tocsr()

    def zero(self) -> "FeFunction":
        return FeFunction(self, np.zeros(self.n))

    def interpolate(self, func) -> "FeFunction":
        x = self.mesh.vertices
        vals = np.asarray(func(x[:, 0], x[:, 1]), dtype=float).copy()
        vals[self.boundary] = 0.0
        return FeFunction(self, vals)

    def functionals(self, params: ProblemParams, nl: Nonlinearity | None = None) -> "Functionals":
        key = (params, nl)
        fn = self._functionals.get(key)
        if fn is None:
            fn = Functionals(self, params, nl)
            self._functionals[key] = fn
        return fn


_SPACES: "weakref.WeakKeyDictionary[Mesh, FeSpace]" = weakref.WeakKeyDictionary()


def space_for(mesh: Mesh) -> FeSpace:
    """The (cached) P1 space of a mesh."""
    sp_ = _SPACES.get(mesh)
    if sp_ is None:
        sp_ = FeSpace(mesh)
        _SPACES[mesh] = sp_
    return sp_


@dataclass(frozen=True, eq=False)
class FeFunction:
    """A P1 field: one coefficient per mesh vertex, zero on the boundary."""

    space: FeSpace
    coef: np.ndarray

    def __post_init__(self):
        c = np.array(self.coef, dtype=float)
        if c.shape != (self.space.n,):
            raise ValueError(f"expected {self.space.n} coefficients, got shape {c.shape}")
        if np.any(c[self.space.boundary] != 0.0):
            raise ValueError("boundary coefficients must be exactly zero")
        c.setflags(write=False)
        object.__setattr__(self, "coef", c)

    def __mul__(self, t: float) -> "FeFunction":
        return FeFunction(self.space, self.coef * t)

    __rmul__ = __mul__

    def __neg__(self) -> "FeFunction":
        return FeFunction(self.space, -self.coef)

    def __add__(self, other: "FeFunction") -> "FeFunction":
        return FeFunction(self.space, self.coef + other.coef)

    def __sub__(self, other: "FeFunction") -> "FeFunction":
        return FeFunction(self.space, self.coef - other.coef)


class Functionals:
    """Phi, J, N_F, I and their gradients on one space for fixed parameters.

    Gradients are full-length vectors with zero boundary entries. The
    p-Laplacian coefficient ``|grad u|^{p-2}`` is regularized as
    ``(|grad u|^2 + eps^2)^{(p-2)/2}`` when ``p != 2``.
    """

    def __init__(self, space: FeSpace, params: ProblemParams, nl: Nonlinearity | None = None):
        self.space = space
        self.params = params
        self.nl = nl if nl is not None else params.nonlinearity()
        self.p = float(params.p)
        self.w_phi = space.tri_weight(params.gamma_phi)
        self.w_j = space.qp_weight(params.gamma_j)
        self.w_f = space.qp_weight(params.gamma_f)

    # -- Phi -------------------------------------------------------------
    def phi(self, c: np.ndarray) -> float:
        g = self.space.gradients(c)
        s = np.einsum("ij,ij->i", g, g)
        return float(np.sum(self.w_phi * s ** (0.5 * self.p)))

    def grad_coefficient(self, c: np.ndarray, delta: float | None = None) -> np.ndarray:
        """Per-triangle factor ``(|grad u|^2 + delta^2)^{(p-2)/2}``."""
        if self.p == 2.0:
            return np.ones(len(self.space.tri))
        g = self.space.gradients(c)
        s = np.einsum("ij,ij->i", g, g)
        d = self.params.eps if delta is None else delta
        return (s + d * d) ** (0.5 * (self.p - 2.0))

    def dphi(self, c: np.ndarray) -> np.ndarray:
        """Gradient of Phi: ``p * int |x|^{-ap} |grad u|^{p-2} grad u . grad phi_i``."""
        g = self.space.gradients(c)
        k = self.w_phi * self.grad_coefficient(c)
        out = self.p * (self.space.G.T @ (g * k[:, None]).ravel())
        out[self.space.boundary] = 0.0
        return out

    # -- J ---------------------------------------------------------------
    def J(self, c: np.ndarray) -> float:
        u = self.space.values(c)
        return float(np.sum(self.w_j * np.abs(u) ** self.p))

    def dJ(self, c: np.ndarray) -> np.ndarray:
        u = self.space.values(c)
        out = self.p * (self.space.Bt @ (self.w_j * np.abs(u) ** (self.p - 2.0) * u))
        out[self.space.boundary] = 0.0
        return out

    def weighted_pairing(self, c: np.ndarray, e: np.ndarray) -> float:
        """``int |x|^{-(a+1)p+c} |u|^{p-2} u e``."""
        u = self.space.values(c)
        v = self.space.values(e)
        return float(np.sum(self.w_j * np.abs(u) ** (self.p - 2.0) * u * v))

    # -- N_F -------------------------------------------------------------
    def nf(self, c: np.ndarray) -> float:
        u = self.space.values(c)
        return float(np.sum(self.w_f * self.nl.F(u)))

    def dnf(self, c: np.ndarray) -> np.ndarray:
        u = self.space.values(c)
        out = self.space.Bt @ (self.w_f * self.nl.f(u))
        out[self.space.boundary] = 0.0
        return out

    def weighted_lq(self, c: np.ndarray, r: float, gamma: float) -> float:
        """``int |x|^{-gamma} |u|^r``."""
        u = self.space.values(c)
        return float(np.sum(self.space.qp_weight(gamma) * np.abs(u) ** r))

    # -- I ---------------------------------------------------------------
    def energy(self, c: np.ndarray) -> float:
        P = self.params
        return self.phi(c) / self.p - P.lam * self.J(c) / self.p - self.nf(c)

    def residual(self, c: np.ndarray) -> np.ndarray:
        """Weak residual ``<I'(u), phi_i>``; zero at boundary vertices."""
        P = self.params
        return self.dphi(c) / self.p - P.lam * self.dJ(c) / self.p - self.dnf(c)

    # -- metrics ---------------------------------------------------------
    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Weighted stiffness ``int |x|^{-ap} grad phi_i . grad phi_j``."""
        return self.space.stiffness(self.params.gamma_phi)

    @cached_property
    def _riesz(self):
        free = self.space.free
        return spd_factor(self.stiffness[free][:, free])

    def riesz(self, r: np.ndarray) -> np.ndarray:
        """Solve ``A x = r`` on the interior (A the weighted stiffness)."""
        out = np.zeros(self.space.n)
        out[self.space.free] = self._riesz.solve(np.ascontiguousarray(r[self.space.free]))
        return out

    def metric_operator(self, c: np.ndarray | None = None, delta: float | None = None, scale: float = 1.0):
        """Return ``(solve, apply)`` for the gradient metric ``P = scale * A``.

        With ``c is None`` or ``p == 2``, ``A`` is the fixed weighted
        stiffness. Otherwise it is the stiffness frozen at ``u``:
        ``int |x|^{-ap} (|grad u|^2+delta^2)^{(p-2)/2} grad phi_i . grad phi_j``
        with ``delta`` defaulting to ``1e-3`` times the rms gradient.
        """
        free = self.space.free
        n = self.space.n
        if self.p == 2.0 or c is None:
            A = self.stiffness
            lu = self._riesz
        else:
            if delta is None:
                g = self.space.gradients(c)
                area = self.space.area
                rms = np.sqrt(np.sum(area * np.einsum("ij,ij->i", g, g)) / np.sum(area))
                delta = max(1e-3 * rms, self.params.eps)
            k = self.grad_coefficient(c, delta)
            A = self.space.stiffness(self.params.gamma_phi, k)
            lu = spd_factor(A[free][:, free])

        def solve(r):
            out = np.zeros(n)
            out[free] = lu.solve(np.ascontiguousarray(r[free])) / scale
            return out

        def apply(v):
            out = scale * (A @ v)
            out[self.space.boundary] = 0.0
            return out

        return solve, apply

    def dual_norm(self, r: np.ndarray) -> float:
        """``sqrt(r^T A^{-1} r)``: dual norm w.r.t. the weighted stiffness."""
        return float(np.sqrt(max(dot(r, self.riesz(r)), 0.0)))

    @cached_property
    def basis_norms(self) -> np.ndarray:
        """``||phi_i|| = (int |x|^{-ap} |grad phi_i|^p)^{1/p}`` per vertex."""
        gb = self.space.grad_basis
        mag = np.sqrt(np.einsum("tkd,tkd->tk", gb, gb)) ** self.p * self.w_phi[:, None]
        s = np.bincount(self.space.tri.ravel(), weights=mag.ravel(), minlength=self.space.n)
        return s ** (1.0 / self.p)

    def norm(self, c: np.ndarray) -> float:
        """The D_a^{1,p} norm ``Phi(u)^{1/p}``."""
        return self.phi(c) ** (1.0 / self.p)


# ----------------------------------------------------------------------------
# module-level operations


def _fn(u: FeFunction, params: ProblemParams, nl: Nonlinearity | None = None) -> Functionals:
    return u.space.functionals(params, nl)


def assemble_Phi(u: FeFunction, params: ProblemParams) -> float:
    return _fn(u, params).phi(u.coef)


def assemble_J(u: FeFunction, params: ProblemParams) -> float:
    return _fn(u, params).J(u.coef)


def assemble_NF(u: FeFunction, params: ProblemParams, nl: Nonlinearity | None = None) -> float:
    """``int |x|^{-bq} F(u)`` (the energy carries it with a minus sign)."""
    return _fn(u, params, nl).nf(u.coef)


def energy_I(u: FeFunction, params: ProblemParams, nl: Nonlinearity | None = None) -> float:
    return _fn(u, params, nl).energy(u.coef)


def residual(u: FeFunction, params: ProblemParams, nl: Nonlinearity | None = None) -> np.ndarray:
    return _fn(u, params, nl).residual(u.coef)


@dataclass(frozen=True)
class DualNorm:
    """Norms of a residual vector.

    ``dual`` is ``sqrt(r^T A^{-1} r)`` with A the weighted stiffness (the
    exact dual norm for p=2); ``scaled_max`` is ``max_i |r_i| / ||phi_i||``;
    ``euclidean`` the plain vector norm; ``cerami`` is ``(1+||u||) dual``.
    """

    dual: float
    scaled_max: float
    euclidean: float
    cerami: float

    def __float__(self):
        return self.dual


def dual_residual_norm(r: np.ndarray, u_scale: FeFunction, params: ProblemParams) -> DualNorm:
    fn = _fn(u_scale, params)
    r = np.asarray(r, dtype=float)
    free = u_scale.space.free
    scaled = np.abs(r[free]) / fn.basis_norms[free]
    d = fn.dual_norm(r)
    return DualNorm(
        dual=d,
        scaled_max=float(scaled.max()) if scaled.size else 0.0,
        euclidean=float(np.sqrt(np.sum(r * r))),
        cerami=(1.0 + fn.norm(u_scale.coef)) * d,
    )


def write_field(u: FeFunction, path: str | Path) -> None:
    x = u.space.mesh.vertices
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex_id", "x", "y", "value"])
        for i, ((xi, yi), val) in enumerate(zip(x.tolist(), u.coef.tolist())):
            w.writerow([i, repr(xi), repr(yi), repr(val)])


def read_field(space: FeSpace, path: str | Path) -> FeFunction:
    coef = np.zeros(space.n)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            coef[int(row["vertex_id"])] = float(row["value"])
    return FeFunction(space, coef)
