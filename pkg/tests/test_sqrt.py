import warnings

import numpy as np
import pytest

from conftest import make_op
from katolab.lattice import GridSpec, fft, ifft
from katolab.operator import random_field
from katolab.resolvent import SolverConfig
from katolab.sqrt import (
    QuadratureSpec,
    QuadratureTruncation,
    SampleSpec,
    kato_ratio_sweep,
    kato_samples,
    kato_symbol_ratio_sq,
    sqrt_apply,
    sqrt_dense_oracle,
    sqrt_symbol,
)

TINY = GridSpec(2, 4, 4)


def test_quadrature_spec():
    q = QuadratureSpec()
    lams = q.lambdas
    assert len(lams) == 200 and lams[0] > 1e-4 and lams[-1] < 1e4
    assert np.allclose(np.diff(np.log(lams)), q.log_step)
    assert q.refined().nodes == 400
    for kw in ({"lambda_min": 0.0}, {"lambda_min": 2.0, "lambda_max": 1.0}, {"nodes": 4}, {"spacing": "linear"}, {"formula": "x"}):
        with pytest.raises(ValueError):
            QuadratureSpec(**kw)


def test_symbol_ratio_range(grid16):
    r = kato_symbol_ratio_sq(grid16)
    assert r.min() >= 2**-1.5 - 1e-12 and r.max() <= 1 + 1e-12


@pytest.mark.parametrize("formula,tol", [("cubic", 1e-6), ("first_order", 1e-6)])
def test_heat_quadrature_matches_symbol(formula, tol, small_grid, rng):
    g = small_grid
    op = make_op(g)
    u = random_field(g, rng, decay=2.0)
    exact = ifft(g, sqrt_symbol(g) * fft(g, u))
    got = sqrt_apply(op, u, QuadratureSpec(formula=formula, truncation_tol=1.0))
    assert np.linalg.norm(got - exact) <= tol * np.linalg.norm(exact)


def test_adjoint_symbol_is_conjugate(small_grid):
    assert np.allclose(sqrt_symbol(small_grid, adjoint=True), np.conj(sqrt_symbol(small_grid)))


def test_truncation_warning(small_grid, rng):
    op = make_op(small_grid)
    with pytest.warns(QuadratureTruncation):
        sqrt_apply(op, random_field(small_grid, rng), QuadratureSpec(1.0, 2.0, 8))


def test_dense_oracle_squares_to_H():
    op = make_op(TINY, "checkerboard", 0.5)
    O = sqrt_dense_oracle(op)
    H = op.to_dense()
    assert np.linalg.norm(O @ O - H, 2) <= 1e-10 * np.linalg.norm(H, 2)
    with pytest.raises(ValueError):
        sqrt_dense_oracle(op, max_dof=10)


def test_quadrature_agrees_with_oracle(rng):
    op = make_op(TINY, "checkerboard", 0.5)
    O = sqrt_dense_oracle(op)
    u = random_field(TINY, rng)
    u = u - u.mean()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureTruncation)
        got = sqrt_apply(op, u, QuadratureSpec(nodes=120), SolverConfig(rel_tol=1e-11))
    ref = (O @ u.ravel()).reshape(TINY.shape)
    assert np.linalg.norm(got - ref) <= 1e-4 * np.linalg.norm(ref)


def test_kato_samples_deterministic_and_normalized(small_grid):
    spec = SampleSpec(count=6, pure_modes=2, band=2, seed=5)
    a = kato_samples(small_grid, spec)
    b = kato_samples(small_grid, spec)
    assert np.array_equal(a, b)
    l2 = np.sqrt(small_grid.cell_volume) * np.linalg.norm(a.reshape(6, -1), axis=1)
    assert np.allclose(l2, 1.0)
    assert np.all(np.abs(a.mean(axis=(1, 2, 3))) < 1e-12)
    # the same continuum samples on a finer lattice
    fine = kato_samples(GridSpec(2, 16, 8), spec)
    assert np.allclose(fine[:, ::2, ::2], a)
    for kw in ({"count": 0}, {"count": 3, "pure_modes": 4}, {"band": 0}):
        with pytest.raises(ValueError):
            SampleSpec(**kw)


def test_identity_kato_ratios_inside_symbol_bounds(small_grid):
    rep = kato_ratio_sweep(make_op(small_grid), SampleSpec(count=6, pure_modes=3, band=2))
    # first-order sweep quadrature is accurate to a few percent
    assert 2**-0.75 * 0.95 <= rep.min <= rep.max <= 1.05
    assert len(rep.ratios) == 6 and set(rep.to_dict()) >= {"ratios", "min", "max", "adjoint"}
