import math

import numpy as np
import pytest

from conftest import make_op
from katolab.lattice import GridSpec
from katolab.offdiag import (
    OffDiagConfig,
    ParabolicCube,
    SeparatedSets,
    annuli_decay,
    annuli_fit,
    decay_rows,
    exp_weighted_check,
    fit_decay,
    monotone_decay,
    tent,
    time_separated_check,
    time_separated_sweep,
)
from katolab.operator import random_field

G = GridSpec(2, 16, 16)


def test_cube_mask_and_annuli():
    D = ParabolicCube((0.5, 0.5, 0.5), 0.125)
    m = D.mask(G)
    assert m.sum() == 2 * 2 * 1  # two cells per spatial side; the time side 1/64 holds one lattice time
    assert D.max_k(G) == 2
    a0, a1 = D.annulus(G, 0), D.annulus(G, 1)
    assert not (a0 & m).any() and not (a0 & a1).any()
    assert (m | a0 | a1).sum() == D.mask(G, 4.0).sum()
    with pytest.raises(ValueError):
        D.mask(G, 16.0)
    with pytest.raises(ValueError):
        ParabolicCube((0.5, 0.5), 0.125).mask(G)


def test_separated_sets_distances():
    g = G
    E = np.zeros(g.shape, bool)
    F = np.zeros(g.shape, bool)
    E[0, 0, 0] = True
    F[0, 0, 4] = True  # time offset 4/16 = 0.25
    s = SeparatedSets(g, E, F)
    assert s.d == pytest.approx(0.5) and s.d_time == pytest.approx(0.5)
    F2 = np.zeros(g.shape, bool)
    F2[0, 0, 12] = True  # wraps to the same offset
    assert SeparatedSets(g, E, F2).d_time == pytest.approx(0.5)
    with pytest.raises(ValueError):
        SeparatedSets(g, E, np.zeros(g.shape, bool))


def test_fit_decay():
    pts = [(s, -0.5 * s + 1.0) for s in (1, 2, 4, 8)]
    fit = fit_decay(pts)
    assert fit.slope == pytest.approx(-0.5) and fit.r2 == pytest.approx(1.0)
    assert fit.decaying and fit.c_hat == pytest.approx(2.0)
    flat = fit_decay([(s, 0.3) for s in (1, 2, 4, 8)])
    assert flat.slope == 0.0 and math.isinf(flat.c_hat)
    for bad in ([(1, 0)] * 3, [(1, 0), (1.5, 0), (2, 0), (3, 0)], [(1, 0), (2, np.nan), (4, 0), (8, 0)]):
        with pytest.raises(ValueError):
            fit_decay(bad)
    assert set(fit.to_dict()) >= {"slope", "r2", "c_hat"}


def test_monotone_decay():
    assert monotone_decay([1.0, 0.5, 0.52, 0.3], noise_floor=0.05)
    assert not monotone_decay([1.0, 0.5, 0.6], noise_floor=0.05)
    assert monotone_decay([1.0, 1.5, 0.5], start=1) is True
    assert not monotone_decay([1.0, 1.5, 0.5], start=0)
    assert monotone_decay([1.0, 1e-14, 2e-14], abs_floor=1e-12)


def test_config_validation():
    for kw in ({"theta": 1.0}, {"k_max": -1}, {"sources": 0}, {"lambda_list": (0.1, -1.0)}):
        with pytest.raises(ValueError):
            OffDiagConfig(**kw)


def test_tent_is_periodic_lipschitz():
    s = np.linspace(0, 3, 301)
    t = tent(s, 1.0, 0.25)
    assert t.max() <= 0.5 + 1e-12 and np.all(np.abs(np.diff(t)) <= np.diff(s) + 1e-12)


def test_exp_weighted_bounds(rng):
    g = GridSpec(2, 8, 8)
    op = make_op(g, "checkerboard", 1.0)
    f = random_field(g, rng)
    hist = {}
    out = exp_weighted_check(op, 0.1, [0.05, 0.0], f, history=hist)
    # small weights barely perturb the unweighted contraction bound
    assert out["ratios"]["E"] <= 1.2
    assert set(hist) == {"E", "lam_grad_E", "lam_E_div"}
    with pytest.raises(ValueError):
        exp_weighted_check(op, 0.1, [0.2, 0.0], f)
    with pytest.raises(ValueError):
        exp_weighted_check(op, 0.1, [0.05], f)


def test_annuli_identity_decays():
    g = GridSpec(2, 32, 32)
    op = make_op(g)
    D = ParabolicCube((0.5, 0.5, 0.5), 1 / 16)
    rows = annuli_decay(op, D, D.ell / 8, "scalar", OffDiagConfig(sources=2))
    inward = [r["ratio"] for r in rows if r["direction"] == "inward"]
    assert len(inward) == D.max_k(g) + 1
    assert inward[-1] < inward[0]
    fit = annuli_fit(rows, "inward", "scalar")
    assert fit.decaying
    table = decay_rows("identity", D.ell / 8, rows, fit)
    assert set(table[0]) == {"family", "variant", "lambda", "k_or_d", "norm_ratio", "fitted_c"}
    assert table[0]["variant"] == "scalar/inward"
    with pytest.raises(ValueError):
        annuli_decay(op, D, 0.01, "bogus")


def test_time_separated(rng):
    g = GridSpec(2, 8, 16)
    op = make_op(g, "checkerboard", 1.0)
    E = np.zeros(g.shape, bool)
    F = np.zeros(g.shape, bool)
    E[..., :2] = True
    F[..., 8:10] = True
    sets = SeparatedSets(g, E, F)
    f = np.where(E, random_field(g, rng), 0)
    sw = time_separated_sweep(op, sets, [0.05, 0.1, 0.2, 0.4], f)
    assert sw["fit"].decaying
    assert all(r["ratio"] <= r["bound"] * 10 for r in sw["rows"])
    with pytest.raises(ValueError):
        time_separated_check(op, sets, 0.1, random_field(g, rng))
    V = np.where(E, random_field(g, rng), 0)[None].repeat(2, axis=0)
    assert time_separated_check(op, sets, 0.1, V, kind="div")["ratio"] >= 0
