import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckn_varcrit import (AdmissibilityError, IntegrabilityError, ProblemParams, RadialFunction, RadialGrid, radial_I,
                         radial_J, radial_lambda1, radial_mountain_pass, radial_Phi)
from ckn_varcrit.radial import write_radial

from oracles import LAMBDA1_DISK, ground_state_shooting

LAP = ProblemParams(p=2.0, a=0.0, b=0.0, c=2.0, q=4.0, mode="validation")


def test_grid_invariants():
    g = RadialGrid(1.5, 64, 2.0)
    assert g.radii[0] == 0.0 and g.radii[-1] == 1.5
    assert np.all(np.diff(g.radii) > 0)
    with pytest.raises(ValueError):
        RadialFunction(g, np.ones(65))


def test_zero_and_closed_form():
    g = RadialGrid(1.0, 4096, 2.0)
    z = RadialFunction(g, np.zeros(4097))
    assert radial_Phi(z, LAP) == radial_J(z, LAP) == radial_I(z, LAP) == 0.0
    u = RadialFunction(g, 1.0 - g.radii**2)
    assert radial_Phi(u, LAP) == pytest.approx(2 * math.pi, rel=1e-5)
    assert radial_J(u, LAP) == pytest.approx(math.pi / 3, rel=1e-5)


@settings(max_examples=25, deadline=None)
@given(t=st.floats(-4, 4).filter(lambda t: abs(t) > 1e-3), p=st.sampled_from([1.5, 2.0, 3.0]))
def test_radial_homogeneity(t, p):
    g = RadialGrid(1.0, 128, 2.0)
    P = LAP.replace(p=p, q=4.0)
    v = np.cos(3 * g.radii) * (1 - g.radii)
    v[-1] = 0.0
    u, tu = RadialFunction(g, v), RadialFunction(g, t * v)
    assert radial_Phi(tu, P) == pytest.approx(abs(t) ** p * radial_Phi(u, P), rel=1e-12)
    assert radial_J(tu, P) == pytest.approx(abs(t) ** p * radial_J(u, P), rel=1e-12)


def test_integrability_error():
    with pytest.raises(IntegrabilityError):
        radial_Phi(RadialFunction(RadialGrid(1.0, 8), np.zeros(9)), LAP.replace(a=1.0, p=2.0))


def test_lambda1_disk_and_ball():
    lam, e = radial_lambda1(LAP, RadialGrid(1.0, 4096, 2.0))
    assert lam == pytest.approx(LAMBDA1_DISK, rel=5e-3)
    assert radial_J(e, LAP) == pytest.approx(1.0, abs=1e-12)
    assert np.all(e.values[:-1] > 0)
    lam3, _ = radial_lambda1(LAP.replace(n_eff=3.0), RadialGrid(1.0, 4096, 2.0))
    assert lam3 == pytest.approx(math.pi**2, rel=5e-3)


def test_lambda1_grid_refinement():
    vals = [radial_lambda1(LAP, RadialGrid(1.0, m, 2.0))[0] for m in (256, 512, 1024, 2048, 4096)]
    assert vals[1] >= vals[-1] - 1e-6
    gaps = np.abs(np.diff(vals[:4]))
    assert np.all(np.diff(gaps) < 0)


def test_paper_regime_n_eff_3():
    P = ProblemParams(p=2.0, a=0.25, b=0.25, c=0.5, q=3.0, n_eff=3.0, mode="paper")
    lam, e = radial_lambda1(P, RadialGrid(1.0, 1024, 2.0))
    assert lam > 0 and np.all(e.values[:-1] > 0)


def test_mountain_pass_matches_shooting():
    lam = 0.3 * LAMBDA1_DISK
    P = LAP.replace(lam=lam)
    beta, u = radial_mountain_pass(P, P.nonlinearity(), RadialGrid(1.0, 1024, 2.0))
    _, beta_ref = ground_state_shooting(lam)
    assert beta > 0 and np.all(u.values[:-1] > 0)
    assert beta == pytest.approx(beta_ref, rel=2e-3)


def test_mountain_pass_kappa_monotone():
    lam = 0.3 * LAMBDA1_DISK
    g = RadialGrid(1.0, 512, 2.0)
    P1 = LAP.replace(lam=lam)
    P2 = P1.replace(kappa=2.0)
    b1, _ = radial_mountain_pass(P1, P1.nonlinearity(), g)
    b2, _ = radial_mountain_pass(P2, P2.nonlinearity(), g)
    assert b2 < b1


def test_mountain_pass_rejects_kappa_zero():
    P = LAP.replace(lam=1.0, kappa=0.0)
    with pytest.raises(AdmissibilityError, match="f3"):
        radial_mountain_pass(P, P.nonlinearity(), RadialGrid(1.0, 64))


def test_write_radial(tmp_path):
    g = RadialGrid(1.0, 4)
    write_radial(RadialFunction(g, [1, 0.5, 0.2, 0.1, 0.0]), tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "r,value" and len(lines) == 6
