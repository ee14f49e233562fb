import numpy as np
import pytest

import katolab.carleson as cb  # imported as a module: it exports a function named test_function
from conftest import make_op
from katolab.dyadic import DyadicDecomposition
from katolab.lattice import GridSpec, laplacian
from katolab.littlewood_paley import LambdaGrid
from katolab.offdiag import ParabolicCube

G = GridSpec(2, 16, 16)
LG = LambdaGrid(1e-3, 1.0, per_decade=2)


def test_cutoffs():
    s = np.linspace(-1.5, 1.5, 301)
    chi, eta = cb.cutoff_chi(s), cb.cutoff_eta(s)
    assert np.all((0 <= chi) & (chi <= 1)) and np.all((0 <= eta) & (eta <= 1))
    assert np.allclose(chi[np.abs(s) <= 0.5], 1) and np.allclose(chi[np.abs(s) >= 1], 0)
    assert np.allclose(eta[np.abs(s) <= 0.25], 1) and np.allclose(eta[np.abs(s) >= 1], 0)


def test_directions():
    assert len(cb.directions(2)) == 8
    assert len(cb.directions(2, 2)) == 16
    assert np.allclose(np.linalg.norm(cb.directions(3), axis=1), 1)
    with pytest.raises(ValueError):
        cb.directions(2, 0)


def test_tb_config():
    with pytest.raises(ValueError):
        cb.TbConfig(epsilon=1.0)
    with pytest.raises(ValueError):
        cb.TbConfig(directions=((1.0, 1.0),))
    assert cb.TbConfig(directions=((1.0, 0.0),)).W(2).shape == (1, 2)


def test_identity_carleson_vanishes():
    rep = cb.carleson_functional(make_op(G), lambda_grid=LG)
    assert rep.supremum <= 1e-12
    rows = rep.rows()
    assert set(rows[0]) == {"scale", "cube", "value"}
    assert len(rows) == sum(v.size for v in rep.values.values())
    assert rep.running_sup == sorted(rep.running_sup)
    assert set(rep.to_dict()) >= {"supremum", "attaining", "running_sup", "tail_share"}


def test_fixed_resolvent_scaling():
    # halving the column field quarters the functional
    op = make_op(G, "checkerboard", 1.0)
    A = op.coeffs.A
    full = cb.carleson_functional(op, lambda_grid=LG, columns=A).supremum
    half = cb.carleson_functional(op, lambda_grid=LG, columns=A / 2).supremum
    assert half / full == pytest.approx(0.25, rel=1e-9)


def test_theta_bounds_agree():
    out = cb.theta_ab_bounds(make_op(G, "checkerboard", 1.0), 0.1)
    assert out["ok"] and out["C"] == pytest.approx(1.0)


def test_R_lambda_for_identity_is_resolved_laplacian(rng):
    # U_lambda I = 0, so only lambda E_lambda div(grad g) remains
    g = rng.standard_normal(G.shape)
    lam = 0.1
    out = cb.R_lambda_apply(make_op(G), lam, g)
    exact = np.fft.ifftn(lam * np.fft.fftn(laplacian(G, g)) / (1 + lam**2 * G.heat_symbol))
    assert np.allclose(out["R"], exact, atol=1e-8)
    assert np.isfinite(out["ratio"])


def test_laa_shapes_and_validation():
    g = GridSpec(2, 16, 16)
    op = make_op(g)
    D = ParabolicCube((0.5, 0.5, 0.5), 0.5)
    tf = cb.test_function(op, D, [1.0, 0.0], 0.1)
    assert tf["L"].shape == g.shape and tf["f_test"].shape == g.shape
    with pytest.raises(ValueError):
        cb.test_function(op, D, [1.0, 1.0], 0.1)
    sc = cb.laa_scaling(op, D, [1.0, 0.0], 0.1)
    assert sc["factor_i"] > 1


def test_tb_reduction_identity_is_zero():
    out = cb.tb_reduction_check(make_op(G), DyadicDecomposition(G), lambda_grid=LG)
    assert out["left"] <= 1e-12 and out["W_size"] == 8
