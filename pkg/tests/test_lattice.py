import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from katolab.lattice import (
    GridSpec,
    divx,
    dt,
    fft,
    gradx,
    half_dt,
    hilbert_t,
    ifft,
    inner,
    l2_norm,
    laplacian,
    norms,
    read_field,
    write_field,
)
from katolab.rng import STREAM, stream_rng


def test_gridspec_validation():
    for kw in ({"n": 0}, {"n": 4}, {"Nx": 12}, {"Nt": 2}, {"Lx": 0.0}):
        with pytest.raises(ValueError):
            GridSpec(**kw)
    g = GridSpec(2, 8, 16, Lx=2.0, Lt=3.0)
    assert g.shape == (8, 8, 16) and g.vshape == (2, 8, 8, 16)
    assert g.size == 1024 and np.isclose(g.cell_volume * g.size, g.volume)
    assert g.refined().Nx == 16


def test_mode_derivatives_exact(grid16):
    g = grid16
    x, y, t = g.coords
    kx, kt = 3, 2
    u = np.exp(1j * (2 * np.pi * kx * x + 2 * np.pi * kt * t)) * np.ones(g.shape)
    G = gradx(g, u)
    assert np.allclose(G[0], 1j * 2 * np.pi * kx * u)
    assert np.allclose(G[1], 0)
    assert np.allclose(dt(g, u), 1j * 2 * np.pi * kt * u)
    assert np.allclose(half_dt(g, u), np.sqrt(2 * np.pi * kt) * u)
    assert np.allclose(hilbert_t(g, u), 1j * u)
    assert np.allclose(laplacian(g, u), -((2 * np.pi * kx) ** 2) * u)


def test_factorization_of_dt(grid16, rng):
    # dt = D^{1/2} H_t D^{1/2} away from the Nyquist line
    g = grid16
    u = ifft(g, np.where(g.time_nyquist, 0, fft(g, rng.standard_normal(g.shape))))
    assert np.allclose(half_dt(g, hilbert_t(g, half_dt(g, u))), dt(g, u))


@given(seed=st.integers(0, 2**32 - 1))
def test_div_is_minus_adjoint_of_grad(seed):
    g = GridSpec(2, 8, 8)
    r = np.random.default_rng(seed)
    u = r.standard_normal(g.shape) + 1j * r.standard_normal(g.shape)
    F = r.standard_normal(g.vshape) + 1j * r.standard_normal(g.vshape)
    lhs = sum(inner(g, gradx(g, u)[i], F[i]) for i in range(2))
    assert np.isclose(lhs, -inner(g, u, divx(g, F)))


@given(seed=st.integers(0, 2**32 - 1))
def test_parseval_norms(seed):
    g = GridSpec(2, 8, 8)
    u = np.random.default_rng(seed).standard_normal(g.shape) + 0j
    n = norms(g, u)
    assert np.isclose(n["l2"], l2_norm(g, u))
    assert np.isclose(n["grad"] ** 2, sum(l2_norm(g, c) ** 2 for c in gradx(g, u)))
    assert np.isclose(n["energy"] ** 2, n["l2"] ** 2 + n["D_seminorm"] ** 2)


def test_field_container_round_trip(tmp_path, small_grid, rng):
    g = small_grid
    for data in (rng.standard_normal(g.shape) + 1j, rng.standard_normal(g.vshape) + 0j):
        p = tmp_path / "f.bin"
        write_field(p, g, data)
        g2, back = read_field(p)
        assert g2 == g and np.array_equal(back, data)
    p.write_bytes(b"XXXXXXXX" + p.read_bytes()[8:])
    with pytest.raises(ValueError):
        read_field(p)
    with pytest.raises(ValueError):
        write_field(tmp_path / "bad.bin", g, np.zeros((3, 3)))


def test_streams_independent_and_reproducible():
    a = stream_rng(7, STREAM["lp"]).standard_normal(5)
    b = stream_rng(7, STREAM["lp"]).standard_normal(5)
    c = stream_rng(7, STREAM["kee"]).standard_normal(5)
    d = stream_rng(8, STREAM["lp"]).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c) and not np.allclose(a, d)
    assert len(set(STREAM.values())) == len(STREAM)
