import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_op
from katolab.lattice import GridSpec, fft, inner, norms
from katolab.operator import (
    FormParams,
    accretivity_report,
    band_embed,
    coercivity_terms,
    delta_star,
    form_parts,
    form_value,
    random_band_field,
    random_field,
)
from katolab.resolvent import NonConvergence, SolverConfig, resolvent, resolvent_div, resolvent_halfdt, solve_shifted

FAMS = [("identity", 0.0), ("checkerboard", 1.0), ("log_singular", 1.0), ("time_modulated", 1.0), ("random_smooth", 0.5)]


@pytest.mark.parametrize("family,mag", FAMS)
def test_form_matches_strong_operator_and_adjoint(family, mag, small_grid, rng):
    op = make_op(small_grid, family, mag)
    u = random_field(small_grid, rng)
    v = random_field(small_grid, rng)
    assert np.isclose(form_value(op, u, v), inner(small_grid, op.apply(u), v))
    assert np.isclose(inner(small_grid, op.apply(u), v), inner(small_grid, u, op.H_star.apply(v)))


@pytest.mark.parametrize("family,mag", FAMS)
def test_D_block_has_no_real_part(family, mag, small_grid, rng):
    op = make_op(small_grid, family, mag)
    u = random_field(small_grid, rng)
    p = form_parts(op, u, u)
    assert abs(p["D"].real) <= 1e-12 * max(1.0, abs(p["S"]))
    assert np.isclose(p["D"], p["D_antisym"])


def test_accretivity_report(grid16):
    rep = accretivity_report(make_op(grid16, "checkerboard", 2.0), sample_count=10)
    assert rep["min_margin"] >= -1e-8 and rep["max_D_real_rel"] <= 1e-12
    with pytest.raises(ValueError):
        accretivity_report(make_op(grid16), sample_count=0)


def test_hidden_coercivity(grid16, rng):
    op = make_op(grid16, "checkerboard", 0.5)
    d = delta_star(1.0, 1.0, 0.5, 1.0)
    assert 0 < d < 1
    v = random_field(grid16, rng, decay=1.0)
    t = coercivity_terms(op, v, FormParams(d, 1.0), 1.0, 1.0)
    assert t["lhs"] >= t["rhs"] - 1e-10
    with pytest.raises(ValueError):
        FormParams(1.2)


def test_band_embed_matches_across_grids(rng):
    block = rng.standard_normal((5, 5, 5)) + 1j * rng.standard_normal((5, 5, 5))
    a = band_embed(GridSpec(2, 8, 8), block, 2)
    b = band_embed(GridSpec(2, 16, 8), block, 2)
    assert np.count_nonzero(a) == np.count_nonzero(b) == np.count_nonzero(block)
    f = random_band_field(GridSpec(2, 16, 16), rng, 3)
    spec = np.abs(fft(GridSpec(2, 16, 16), f)) > 1e-12
    assert not spec[4:13].any()


@given(seed=st.integers(0, 2**31), sre=st.floats(0.05, 5), sim=st.floats(-20, 20))
def test_shifted_solve_contraction(seed, sre, sim):
    g = GridSpec(2, 8, 8)
    op = make_op(g, "checkerboard", 1.0)
    f = random_field(g, np.random.default_rng(seed))
    cfg = SolverConfig(rel_tol=1e-10)
    res = solve_shifted(op, complex(sre, sim), f, cfg)
    assert sre * np.linalg.norm(res.u) <= np.linalg.norm(f) * (1 + 10 * cfg.rel_tol)
    assert np.allclose((complex(sre, sim) * res.u + op.apply(res.u)), f, atol=1e-8)


def test_resolvent_identity_is_exact_multiplier(small_grid, rng):
    g = small_grid
    op = make_op(g)
    f = random_field(g, rng)
    lam = 0.3
    u = resolvent(op, lam, f).u
    exact = np.fft.ifftn(np.fft.fftn(f) / (1 + lam**2 * g.heat_symbol))
    assert np.allclose(u, exact, atol=1e-10)


def test_resolvent_variants_and_batches(small_grid, rng):
    g = small_grid
    op = make_op(g, "log_singular", 1.0)
    F = np.stack([random_field(g, rng) for _ in range(3)])
    batch = resolvent(op, 0.2, F).u
    single = np.stack([resolvent(op, 0.2, f).u for f in F])
    assert np.allclose(batch, single, atol=1e-9)
    V = rng.standard_normal(g.vshape) + 0j
    r = resolvent_div(op, 0.2, V)
    assert "lam_E_div" in r.norms
    assert "lam_E_halfdt" in resolvent_halfdt(op, 0.2, F[0]).norms
    # uniform bounds of the resolvent family
    n = norms(g, resolvent(op, 0.2, F[0]).u)
    assert n["l2"] <= norms(g, F[0])["l2"] * (1 + 1e-9)
    with pytest.raises(ValueError):
        resolvent(op, -1.0, F[0])


def test_nonconvergence_raises(small_grid, rng):
    op = make_op(small_grid, "checkerboard", 4.0)
    f = random_field(small_grid, rng)
    with pytest.raises(NonConvergence):
        resolvent(op, 1.0, f, SolverConfig(rel_tol=1e-12, max_iter=1, restart=1, preconditioner="none"))
