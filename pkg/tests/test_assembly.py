import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ckn_varcrit import (FeFunction, FeSpace, ProblemParams, assemble_J, assemble_NF, assemble_Phi, disk_mesh_level,
                         dual_residual_norm, energy_I, read_field, residual, space_for, write_field)
from ckn_varcrit.mesh import Mesh

from oracles import fd_gradient, radial_power_integral


def random_field(space, rng, smooth=True):
    x = space.mesh.vertices
    r2 = np.einsum("ij,ij->i", x, x)
    if smooth:
        coeffs = rng.standard_normal(6)
        X, Y = x[:, 0], x[:, 1]
        c = (coeffs[0] + coeffs[1] * X + coeffs[2] * Y + coeffs[3] * X * Y + coeffs[4] * X * X + coeffs[5] * Y * Y)
        c = c * (1.0 - r2)
    else:
        c = rng.standard_normal(space.n)
    c[space.boundary] = 0.0
    return c


@pytest.fixture(scope="module")
def space(mesh3):
    return space_for(mesh3)


@pytest.fixture(scope="module")
def gspace(graded3):
    return space_for(graded3)


def reference_triangle(free_all=True):
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return Mesh(v, np.array([[0, 1, 2]]), np.zeros(3, bool), 1.0, 1, None)


def test_fefunction_invariants(space):
    c = np.zeros(space.n)
    c[np.flatnonzero(space.boundary)[0]] = 1e-300
    with pytest.raises(ValueError):
        FeFunction(space, c)
    u = FeFunction(space, np.zeros(space.n))
    with pytest.raises(ValueError):
        u.coef[0] = 1.0


def test_quadrature_nodes(gspace):
    s = gspace
    assert np.all(s.qp_r > 0.0)
    assert np.all(s.qp_w > 0.0)
    per_tri = np.bincount(s.qp_tri, weights=s.qp_w, minlength=len(s.tri))
    np.testing.assert_allclose(per_tri, s.area, rtol=1e-13)


@pytest.mark.parametrize("gamma", [0.3, 1.3])
def test_singular_weight_integrals(gamma):
    """int over the disk of |x|^-gamma against the exact disk value."""
    s = space_for(disk_mesh_level(1.0, 4, 2.0))
    got = float(np.sum(s.qp_weight(gamma)))
    assert got == pytest.approx(radial_power_integral(-gamma), rel=2e-3)


def test_strongly_singular_weight_is_still_integrable():
    # with gamma close to 2 the unresolved innermost layer dominates the error
    s = space_for(disk_mesh_level(1.0, 4, 2.0))
    got = float(np.sum(s.qp_weight(1.7)))
    assert got == pytest.approx(radial_power_integral(-1.7), rel=0.05)


def _origin_triangle_exact(tri_xy, gamma):
    """int_T |x|^-gamma for a triangle with a vertex at the origin (polar form)."""
    a, b = tri_xy[1], tri_xy[2]
    t0, t1 = math.atan2(a[1], a[0]), math.atan2(b[1], b[0])
    if t1 < t0:
        t1 += 2 * math.pi
    n = np.array([b[1] - a[1], a[0] - b[0]])
    h = abs(n @ a) / np.linalg.norm(n)
    phi_n = math.atan2(n[1], n[0]) if n @ a > 0 else math.atan2(-n[1], -n[0])

    def rho(t):
        return h / math.cos(t - phi_n)

    val, _ = quad(lambda t: rho(t) ** (2 - gamma) / (2 - gamma), t0, t1, epsabs=1e-14, epsrel=1e-13)
    return val


def test_composite_rule_converges():
    mesh = disk_mesh_level(1.0, 2, 2.0)
    gamma = 0.9  # a p < 1
    errs = []
    for layers in range(1, 8):
        s = FeSpace(mesh, layers=layers)
        k = int(s.origin_triangles[0])
        exact = _origin_triangle_exact(mesh.vertices[mesh.triangles[k]], gamma)
        errs.append(abs(s.tri_weight(gamma)[k] - exact))
    diffs = np.abs(np.diff(errs))
    assert np.all(diffs[1:] / diffs[:-1] < 0.5)
    assert errs[-1] < 1e-4 * exact


def test_reference_triangle():
    s = FeSpace(reference_triangle())
    P = ProblemParams(p=2.0, a=0.0, c=2.0)
    u = FeFunction(s, np.array([0.0, 1.0, 0.0]))
    assert assemble_Phi(u, P) == pytest.approx(0.5, rel=1e-14)
    one = FeFunction(s, np.ones(3))
    assert assemble_NF(one, P) == pytest.approx(0.25 * 0.5, rel=1e-13)
    # exact P1 mass matrix: area/12 * (1 + delta_ij)
    rng = np.random.default_rng(3)
    c = rng.standard_normal(3)
    M = 0.5 / 12.0 * (np.ones((3, 3)) + np.eye(3))
    assert assemble_J(FeFunction(s, c), P) == pytest.approx(c @ M @ c, rel=1e-8)


def test_two_triangle_stiffness():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    m = Mesh(v, np.array([[0, 1, 2], [0, 2, 3]]), np.zeros(4, bool), 1.0, 1, None)
    s = FeSpace(m)
    # hand assembly: each right triangle with legs 1 contributes [[1,-1,0],...]/2 patterns
    K = np.array([[1.0, -0.5, 0.0, -0.5], [-0.5, 1.0, -0.5, 0.0], [0.0, -0.5, 1.0, -0.5], [-0.5, 0.0, -0.5, 1.0]])
    P = ProblemParams(p=2.0, a=0.0, c=2.0, kappa=0.0)
    c = np.array([0.3, -1.2, 0.7, 2.0])
    np.testing.assert_allclose(residual(FeFunction(s, c), P), K @ c, rtol=1e-13, atol=1e-14)


def test_zero_field(space, vparams):
    z = space.zero()
    assert assemble_Phi(z, vparams) == 0.0
    assert assemble_J(z, vparams) == 0.0
    assert assemble_NF(z, vparams) == 0.0
    assert energy_I(z, vparams) == 0.0
    assert np.all(residual(z, vparams) == 0.0)
    assert float(dual_residual_norm(np.zeros(space.n), z, vparams)) == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), t=st.floats(-5.0, 5.0).filter(lambda t: abs(t) > 1e-3),
       p=st.sampled_from([1.5, 2.0, 2.5]))
def test_homogeneity(gspace, seed, t, p):
    P = ProblemParams(p=p, a=0.2, b=0.2, c=0.5, q=4.0)
    rng = np.random.default_rng(seed)
    u = FeFunction(gspace, random_field(gspace, rng, smooth=False))
    assert assemble_Phi(t * u, P) == pytest.approx(abs(t) ** p * assemble_Phi(u, P), rel=1e-10)
    assert assemble_J(t * u, P) == pytest.approx(abs(t) ** p * assemble_J(u, P), rel=1e-10)
    assert assemble_NF(t * u, P) == pytest.approx(abs(t) ** 4 * assemble_NF(u, P), rel=1e-10)


def test_homogeneity_t_minus_2_5(space, vparams):
    u = FeFunction(space, random_field(space, np.random.default_rng(11)))
    assert assemble_Phi(-2.5 * u, vparams) == pytest.approx(2.5**2 * assemble_Phi(u, vparams), rel=1e-13)
    assert assemble_NF(2 * u, vparams) == pytest.approx(16 * assemble_NF(u, vparams), rel=1e-13)


def test_energy_identities(space, vparams):
    u = FeFunction(space, random_field(space, np.random.default_rng(5)))
    P0 = vparams.replace(kappa=0.0, lam=0.0)
    assert energy_I(u, P0) == pytest.approx(assemble_Phi(u, P0) / 2, rel=1e-14)
    lam = assemble_Phi(u, P0) / assemble_J(u, P0)
    assert abs(energy_I(u, P0.replace(lam=lam))) < 1e-12 * assemble_Phi(u, P0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_residual_matches_finite_differences(gspace, p):
    P = ProblemParams(p=p, a=0.2, b=0.2, c=0.5, q=3.0, lam=0.7, family="power_plus_bounded", theta=2.5)
    fn = gspace.functionals(P)
    rng = np.random.default_rng(int(10 * p))
    for _ in range(5):
        c = random_field(gspace, rng)
        idx = rng.choice(gspace.free, 10, replace=False)
        r = fn.residual(c)[idx]
        fd = fd_gradient(fn.energy, c, idx, h=1e-5)
        np.testing.assert_allclose(r, fd, rtol=1e-4, atol=1e-4 * np.max(np.abs(fd)))


def test_dual_norm_scaling(space, vparams):
    rng = np.random.default_rng(2)
    u = FeFunction(space, random_field(space, rng))
    r = residual(u, vparams)
    a, b = dual_residual_norm(r, u, vparams), dual_residual_norm(2 * r, u, vparams)
    for name in ("dual", "scaled_max", "euclidean", "cerami"):
        assert getattr(b, name) == pytest.approx(2 * getattr(a, name), rel=1e-13)
    assert a.dual > 0


def test_weight_one_mass_matches_p1(space):
    P = ProblemParams(p=2.0, a=0.0, c=2.0)
    M = space.mass(0.0)
    c = random_field(space, np.random.default_rng(9), smooth=False)
    assert assemble_J(FeFunction(space, c), P) == pytest.approx(c @ (M @ c), rel=1e-12)


def test_field_roundtrip(tmp_path, space):
    u = FeFunction(space, random_field(space, np.random.default_rng(1)))
    path = tmp_path / "u.csv"
    write_field(u, path)
    assert path.read_text().splitlines()[0] == "vertex_id,x,y,value"
    back = read_field(space, path)
    np.testing.assert_array_equal(back.coef, u.coef)
