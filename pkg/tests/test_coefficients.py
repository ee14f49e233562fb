import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from katolab.coefficients import (
    FAMILIES,
    Cube,
    GeneratorSpec,
    antisym_from_upper,
    bmo_norm,
    generate,
    john_nirenberg_growth,
    normalize_D,
    upper_entries,
    validate,
)
from katolab.lattice import GridSpec


@pytest.mark.parametrize("family", FAMILIES)
def test_generated_fields_are_valid(family, grid16):
    mag = 0.5 if family == "random_smooth" else 1.0
    c = generate(GeneratorSpec(family, mag), grid16)
    rep = validate(c)
    assert rep.ok
    assert np.array_equal(c.D, -np.swapaxes(c.D, 0, 1))
    assert rep.c1_observed >= c.params.c1 - 1e-12
    assert np.allclose(c.A_adjoint, np.conj(np.swapaxes(c.A, 0, 1)))


def test_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec("nope")
    with pytest.raises(ValueError):
        GeneratorSpec("checkerboard", -1.0)
    with pytest.raises(ValueError):
        GeneratorSpec("random_smooth", 1.0)
    with pytest.raises(ValueError):
        generate(GeneratorSpec("checkerboard", 1.0), GridSpec(1, 16, 16))


@given(st.integers(2, 3))
def test_antisym_storage_round_trip(n):
    g = GridSpec(n, 4, 4)
    U = np.random.default_rng(n).standard_normal((n * (n - 1) // 2,) + g.shape)
    D = antisym_from_upper(U, n)
    assert np.array_equal(upper_entries(D), U)
    assert np.array_equal(D, -np.swapaxes(D, 0, 1))


def test_scaled_D_is_linear(grid16):
    c = generate(GeneratorSpec("checkerboard", 1.0), grid16)
    assert np.allclose(c.scaled_D(0.5).D, 0.5 * c.D)
    assert np.isclose(c.scaled_D(0.5).params.c3, 0.5 * c.params.c3)


def test_bmo_norm_properties(grid16):
    g = grid16
    assert bmo_norm(g, generate(GeneratorSpec("identity"), g).D) == 0.0
    assert bmo_norm(g, generate(GeneratorSpec("constant_antisym", 2.0), g).D) == pytest.approx(0.0, abs=1e-14)
    D = generate(GeneratorSpec("checkerboard", 1.0), g).D
    assert bmo_norm(g, 3 * D) == pytest.approx(3 * bmo_norm(g, D))
    assert 0 < bmo_norm(g, D) <= 1.0 + 1e-12
    assert bmo_norm(g, D, "parabolic") > 0
    with pytest.raises(ValueError):
        bmo_norm(g, D, "bogus")


def test_log_singular_bmo_bound_and_growth():
    g = GridSpec(2, 32, 4)
    c = generate(GeneratorSpec("log_singular", 1.0), g)
    assert bmo_norm(g, c.D) <= c.params.c3 + 1e-12
    # log|x| oscillation grows at most linearly under dilation
    jn = john_nirenberg_growth(g, c.D, Cube((15, 15), 2))
    assert not jn["superlinear"] and len(jn["rows"]) == 4
    with pytest.raises(ValueError):
        john_nirenberg_growth(g, c.D, Cube((0, 0), 4), k_max=5)


def test_normalize_D_idempotent(grid16):
    c = generate(GeneratorSpec("log_singular", 1.0), grid16)
    a = normalize_D(c)
    b = normalize_D(a)
    assert np.allclose(upper_entries(a.D).mean(axis=(1, 2)), 0, atol=1e-12)
    assert np.array_equal(a.D, b.D)
    with pytest.raises(ValueError):
        normalize_D(c, Cube((0,), 4))
