import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_op
from katolab.dyadic import DyadicDecomposition, scale_index
from katolab.lattice import GridSpec
from katolab.littlewood_paley import (
    LambdaGrid,
    MollifierSpec,
    SupportOverflow,
    conv_P,
    dyadic_average,
    lp_constants,
    lp_samples,
    maximal_domination,
    mollifier_symbol,
    triple_norm,
    verify_kee,
    verify_lp_suite,
)

G = GridSpec(2, 16, 32)


@given(st.floats(1e-3, 0.99))
def test_scale_index_brackets(lam):
    j = scale_index(G, lam)
    assert lam <= G.Lx * 2.0**-j < 2 * lam * (1 + 1e-9)


def test_scale_index_rejects_nonpositive():
    with pytest.raises(ValueError):
        scale_index(G, 0.0)


def test_dyadic_partition_and_means(rng):
    dec = DyadicDecomposition(G)
    assert dec.j_max == 2  # Nt = 32 allows two quarterings in time
    f = rng.standard_normal(G.shape)
    for j in dec.scales:
        means = dec.block_means(f, j)
        bx, bt = dec.counts(j)
        assert means.shape == (bx, bx, bt)
        assert np.isclose(means.mean(), f.mean())
        assert np.isclose(dec.block_sums_sq(f, j).sum(), G.cell_volume * np.sum(f**2))
        assert sum(dec.mask(j, q).sum() for q in dec.cubes(j)) == G.size
        A = dec.average(f, j)
        assert np.allclose(dec.average(A, j), A)
    with pytest.raises(ValueError):
        DyadicDecomposition(G, j_max=9)
    assert DyadicDecomposition(G, clamp_time=True).j_max == 4


def test_dyadic_average_is_projection(rng):
    f = rng.standard_normal(G.shape)
    a = dyadic_average(G, 0.2, f)
    assert np.allclose(dyadic_average(G, 0.2, a), a)
    with pytest.raises(ValueError):
        dyadic_average(G, 1e-3, f)


def test_lambda_grid():
    lg = LambdaGrid(1e-3, 1.0, per_decade=8)
    assert lg.count == 24 and len(lg.values) == 24
    assert np.isclose(lg.edges[-1], 1.0) and np.isclose(lg.weights.sum(), np.log(1e3))
    assert lg.refined().count == 48
    assert LambdaGrid.default(G).lambda_max == pytest.approx(0.25)
    for args in ((0.0, 1.0), (1.0, 0.5)):
        with pytest.raises(ValueError):
            LambdaGrid(*args)


def test_mollifier_is_even_unit_mass():
    m = MollifierSpec(2)
    assert np.isclose(m.symbol1(np.array([0.0]))[0], 1.0)
    assert np.isclose(m.symbol2(np.array([0.0]))[0], 1.0)
    assert np.allclose(m.first_moments(), 0.0, atol=1e-14)
    assert m.kernel1_max() > 0
    with pytest.raises(SupportOverflow):
        mollifier_symbol(G, 0.8)
    with pytest.raises(ValueError):
        mollifier_symbol(G, 0.1, mol=MollifierSpec(3))


def test_conv_preserves_mean_and_contracts(rng):
    f = rng.standard_normal(G.shape)
    p = conv_P(G, 0.1, f)
    assert np.isclose(p.mean(), f.mean())
    assert np.linalg.norm(p) <= np.linalg.norm(f) * (1 + 1e-12)


def test_maximal_domination(rng):
    f = rng.standard_normal(G.shape)
    r = maximal_domination(G, 0.1, f)
    assert r["ok"] and r["ratio"] <= r["constant"]


def test_triple_norm_of_constant_family():
    lg = LambdaGrid(0.01, 1.0, per_decade=4)
    t = triple_norm(lambda lam: np.ones(G.shape), lg, G)
    assert np.isclose(t.squared, np.log(100.0) * G.volume)
    assert np.isclose(t.first_share, 1 / lg.count)


def test_lp_constants_finite_and_stable():
    F = lp_samples(G, seed=1, count=4)
    assert F.shape == (4,) + G.shape
    lg = LambdaGrid.default(G, per_decade=16)
    rep = verify_lp_suite(F, G, lg)
    ref = verify_lp_suite(F, G, lg.refined())
    for k, v in rep.constants.items():
        assert np.isfinite(v) and 0 < v
        assert ref.constants[k] <= 2 * v and v <= 2 * ref.constants[k]
    one = lp_constants(G, F[0], lg)
    assert set(one["truncation"]) == {"square_function", "high_pass", "averaging"}


def test_kee_identity_cross_check():
    g = GridSpec(2, 8, 8)
    op = make_op(g, "checkerboard", 1.0)
    out = verify_kee(op, lp_samples(g, count=2), LambdaGrid(1e-3, 1.0, per_decade=2))
    assert out["identity_discrepancy"] <= out["identity_tolerance"]
    assert np.isfinite(out["max_ratio"]) and out["max_ratio"] > 0
    with pytest.raises(ValueError):
        verify_kee(op, np.ones(g.shape), LambdaGrid(1e-3, 1.0, per_decade=2))
