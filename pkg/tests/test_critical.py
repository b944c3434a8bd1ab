import numpy as np
import pytest

from ckn_varcrit import (DegenerateInputError, FeFunction, GeometryError, build_linking_frame, check_linking_geometry,
                         check_mp_geometry, classify_K, find_u1, linking_solve, mountain_pass)
from ckn_varcrit.critical import energy_landscape, random_smooth_field
from ckn_varcrit.minimax import string_minimax
from ckn_varcrit.rng import stream

TOL = 1e-8


@pytest.fixture(scope="module")
def mp_setup(eig3, vparams):
    e1 = eig3[0]
    P = vparams.replace(lam=0.3 * e1.value)
    nl = P.nonlinearity()
    geo = check_mp_geometry(P, nl, e1)
    u1 = find_u1(e1, P, nl)
    rep = mountain_pass(P, nl, u1, tol=TOL, alpha=geo.alpha)
    return P, nl, geo, u1, rep


@pytest.fixture(scope="module")
def link_setup(eig3, vparams):
    e1, e2, _ = eig3
    P = vparams.replace(lam=0.5 * (e1.value + e2.value))
    nl = P.nonlinearity()
    frame = build_linking_frame(e1, e2, P, r=1.0, rho=0.5)
    geo = check_linking_geometry(frame, P, nl)
    rep = linking_solve(geo.frame, P, nl, tol=TOL, alpha=geo.alpha)
    return P, nl, frame, geo, rep


def weak_pairings(rep, P, nl, count=20, seed=0):
    """<I'(u), phi> for random unit-norm combinations of hat functions."""
    s = rep.u.space
    fn = s.functionals(P, nl)
    r = fn.residual(rep.u.coef)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        phi = np.zeros(s.n)
        idx = rng.choice(s.free, 25, replace=False)
        phi[idx] = rng.standard_normal(25)
        out.append(abs(r @ phi) / fn.norm(phi))
    return np.array(out)


def energy_identity(rep, P, nl):
    fn = rep.u.space.functionals(P, nl)
    c = rep.u.coef
    lq = fn.weighted_lq(c, P.q, P.gamma_f)
    return fn.energy(c), (1 / P.p - 1 / P.q) * P.kappa * lq


# -- mountain pass -----------------------------------------------------------


def test_find_u1(eig3, mp_setup):
    P, nl, _, u1, _ = mp_setup
    e1 = eig3[0]
    fn = e1.func.space.functionals(P, nl)
    t = u1.coef[e1.func.space.free][0] / e1.func.coef[e1.func.space.free][0]
    assert fn.energy(u1.coef) < -1
    assert fn.energy(2 * u1.coef) < fn.energy(u1.coef)
    if t > 1:
        assert fn.energy(0.5 * u1.coef) >= -1


def test_find_u1_needs_superlinear_term(eig3, vparams):
    e1 = eig3[0]
    P = vparams.replace(lam=0.3 * e1.value, kappa=0.0)
    with pytest.raises(GeometryError):
        find_u1(e1, P, P.nonlinearity())


def test_mp_geometry_pure_phi(eig3, vparams):
    e1 = eig3[0]
    P = vparams.replace(lam=0.0, kappa=0.0)
    geo = check_mp_geometry(P, P.nonlinearity(), e1, rho_grid=[0.5, 1.0, 3.0])
    assert geo.rho == 3.0
    assert geo.alpha == pytest.approx(3.0**2 / 2, rel=1e-12)
    for row in geo.sweep:
        assert row["alpha"] == pytest.approx(row["rho"] ** 2 / 2, rel=1e-12)


def test_mp_geometry_sweep(mp_setup, eig3):
    P, nl, geo, _, _ = mp_setup
    alphas = [row["alpha"] for row in geo.sweep]
    assert alphas[0] > 0 and alphas[-1] < 0
    assert geo.bound_ok
    again = check_mp_geometry(P, nl, eig3[0])
    assert (again.alpha, again.rho) == (geo.alpha, geo.rho)


def test_mp_geometry_failure(eig3, vparams):
    e1 = eig3[0]
    P = vparams.replace(lam=0.3 * e1.value, kappa=1e6)
    with pytest.raises(GeometryError):
        check_mp_geometry(P, P.nonlinearity(), e1, rho_grid=[4.0, 8.0])


def test_mountain_pass_solution(mp_setup):
    P, nl, geo, _, rep = mp_setup
    s = rep.u.space
    assert rep.converged and rep.regime == "mountain_pass"
    assert rep.residual_dual < TOL
    assert rep.beta >= geo.alpha > 0
    assert np.all(rep.u.coef[s.free] > 0)
    assert rep.sign_changes == 1
    assert np.all(weak_pairings(rep, P, nl) < 10 * TOL)
    I, rhs = energy_identity(rep, P, nl)
    assert I == pytest.approx(rhs, rel=1e-2)


def test_path_max_non_increasing(mp_setup):
    hist = [h["max"] for h in mp_setup[4].history]
    assert np.all(np.diff(hist[1:]) <= 1e-12 * max(hist))


def test_path_endpoints_pinned(mp_setup):
    P, nl, _, u1, _ = mp_setup
    fn = u1.space.functionals(P, nl)
    beads = [u1.coef * (i / 16) for i in range(17)]
    first, last = beads[0].copy(), beads[-1].copy()
    out = string_minimax(energy_landscape(fn), beads, tol=1e-6, max_iter=200, relax_filter=lambda v: v >= 0)
    assert out.nodes[0].tobytes() == first.tobytes()
    assert out.nodes[-1].tobytes() == last.tobytes()


def test_path_collapse_is_reported(mp_setup):
    P, nl, _, u1, rep = mp_setup
    with pytest.raises(GeometryError, match="alpha/2"):
        mountain_pass(P, nl, u1, alpha=2.5 * rep.beta)


def test_mountain_pass_needs_negative_endpoint(mp_setup, eig3):
    P, nl, _, _, _ = mp_setup
    with pytest.raises(GeometryError):
        mountain_pass(P, nl, eig3[0].func)


# -- linking -----------------------------------------------------------------


def test_classify_K(eig3, vparams):
    e1, e2, _ = eig3
    assert classify_K(e1.func, e1, vparams, e2.value) == "K1"
    assert classify_K(-e1.func, e1, vparams, e2.value) == "minus_K1"
    assert classify_K(e2.func, e1, vparams, e2.value) == "boundary_zone"
    with pytest.raises(DegenerateInputError):
        classify_K(e1.func.space.zero(), e1, vparams, e2.value)


def test_linking_frame_invariants(link_setup, eig3):
    P, nl, frame, _, _ = link_setup
    e1, e2, _ = eig3
    fn = frame.space.functionals(P)
    assert fn.norm(frame.e1t) == pytest.approx(1.0, abs=1e-8)
    assert fn.norm(frame.e2t) == pytest.approx(1.0, abs=1e-8)
    assert frame.rho < frame.r
    Z = frame.z_samples()
    for z in Z:
        assert fn.norm(z) == pytest.approx(frame.rho, abs=1e-8)
        assert fn.phi(z) / (e2.value * fn.J(z)) == pytest.approx(1.0, abs=frame.tau_z)
    first = Z[0] / np.linalg.norm(Z[0])
    assert abs(abs(first @ e2.func.coef / np.linalg.norm(e2.func.coef)) - 1) < 1e-12
    for u in frame.boundary_samples(fn):
        off_axis = u - (u @ frame.e1t) / (frame.e1t @ frame.e1t) * frame.e1t
        on_segment = np.linalg.norm(off_axis) <= 1e-10 * max(np.linalg.norm(u), 1.0)
        assert on_segment or fn.norm(u) == pytest.approx(frame.r, abs=1e-8)
    for t in (-0.7, 0.3):
        assert fn.norm(t * frame.e1t) == pytest.approx(abs(t), abs=1e-8)


def test_linking_geometry_and_solution(link_setup):
    P, nl, _, geo, rep = link_setup
    assert geo.sup_boundary <= 1e-8 and geo.alpha > 0
    assert rep.converged and rep.regime == "linking"
    assert rep.residual_dual < TOL
    assert rep.beta >= geo.alpha > 0
    assert rep.norm_u > 0 and rep.sign_changes >= 2
    assert np.all(weak_pairings(rep, P, nl) < 10 * TOL)
    I, rhs = energy_identity(rep, P, nl)
    assert I == pytest.approx(rhs, rel=1e-2)
    hist = [h["max"] for h in rep.history]
    assert np.all(np.diff(hist[1:]) <= 1e-12 * max(hist))


def test_linking_geometry_deterministic(link_setup, eig3):
    P, nl, frame, geo, _ = link_setup
    e1, e2, _ = eig3
    again = check_linking_geometry(build_linking_frame(e1, e2, P, r=1.0, rho=0.5), P, nl)
    assert (again.alpha, again.sup_boundary) == (geo.alpha, geo.sup_boundary)


def test_linking_z_energy_without_nonlinearity(link_setup, eig3):
    P, _, frame, _, _ = link_setup
    e2 = eig3[1]
    P0 = P.replace(kappa=0.0)
    fn = frame.space.functionals(P0)
    for z in frame.z_samples():
        expected = 0.5 * (1 - P.lam / e2.value) * fn.phi(z)
        assert fn.energy(z) == pytest.approx(expected, rel=2e-3 * e2.value / (e2.value - P.lam))


def test_linking_geometry_fails_without_nonlinearity(link_setup):
    P, _, frame, _, _ = link_setup
    P0 = P.replace(kappa=0.0)
    with pytest.raises(GeometryError):
        check_linking_geometry(frame, P0, P0.nonlinearity())


def test_linking_below_lambda1_matches_mountain_pass(eig3, vparams):
    e1, e2, _ = eig3
    P = vparams.replace(lam=0.95 * e1.value)
    nl = P.nonlinearity()
    geo = check_mp_geometry(P, nl, e1)
    mp = mountain_pass(P, nl, find_u1(e1, P, nl), alpha=geo.alpha)
    ln = linking_solve(build_linking_frame(e1, e2, P, r=4.0, rho=0.5), P, nl, alpha=geo.alpha)
    assert mp.converged and ln.converged
    assert ln.beta == pytest.approx(mp.beta, rel=0.1)


def test_random_smooth_field_deterministic(mesh3):
    from ckn_varcrit import space_for

    s = space_for(mesh3)
    a = random_smooth_field(s, stream(3, "x"))
    b = random_smooth_field(s, stream(3, "x"))
    c = random_smooth_field(s, stream(3, "y"))
    assert a.tobytes() == b.tobytes() and a.tobytes() != c.tobytes()
    assert np.all(a[s.boundary] == 0)
