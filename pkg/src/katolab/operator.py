"""The parabolic operator ``H = dt - div_x(A grad_x)``, its adjoint, and its forms.

The operator is realized in strong form with collocation products ``A * grad_x u``.
All internal kernels accept a leading batch axis so that solvers and dense
assembly can push many fields through a single FFT call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientField, upper_entries, validate
from .rng import STREAM, stream_rng
from .lattice import GridSpec, as_field, fft, ifft, inner, norms

__all__ = [
    "ParabolicOperator",
    "FormParams",
    "delta_star",
    "random_field",
    "random_band_field",
    "band_embed",
    "form_value",
    "form_parts",
    "modified_form_value",
    "coercivity_terms",
    "accretivity_report",
]


def random_field(grid: GridSpec, rng: np.random.Generator, decay: float = 0.0, band: int | None = None) -> np.ndarray:
    """Random complex field with spectrum ``|xi,tau|^(-decay)`` and no Nyquist content.

    ``band`` restricts to ``|k| <= band`` per axis (band-limited, smooth fields).
    """
    kx = np.fft.fftfreq(grid.Nx, 1.0 / grid.Nx)
    kt = np.fft.fftfreq(grid.Nt, 1.0 / grid.Nt)
    mask = np.ones(grid.shape, dtype=bool)
    for j in range(grid.n):
        ok = kx != -grid.Nx // 2
        if band is not None:
            ok &= np.abs(kx) <= band
        mask &= ok.reshape(grid._axis_shape(j, grid.Nx))
    ok = kt != -grid.Nt // 2
    if band is not None:
        ok &= np.abs(kt) <= band
    mask &= ok.reshape(grid._axis_shape(grid.n, grid.Nt))
    coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    if decay:
        r = np.sqrt(grid.xi2 + np.abs(grid.tau)) + 2 * np.pi
        coef = coef * r ** (-decay)
    f = ifft(grid, np.where(mask, coef, 0.0))
    return f / np.sqrt(grid.cell_volume * np.vdot(f, f).real)


def band_embed(grid: GridSpec, block: np.ndarray, band: int) -> np.ndarray:
    """Place coefficients indexed by ``k in [-band, band]^(n+1)`` into a full spectrum."""
    if 2 * band + 1 > min(grid.Nx, grid.Nt) - 1:
        raise ValueError(f"band {band} is not resolved by {grid}")
    spec = np.zeros(grid.shape, dtype=complex)
    idx_x = np.arange(-band, band + 1) % grid.Nx
    idx_t = np.arange(-band, band + 1) % grid.Nt
    spec[np.ix_(*([idx_x] * grid.n + [idx_t]))] = block
    return spec


def random_band_field(grid: GridSpec, rng: np.random.Generator, band: int, decay: float = 0.0) -> np.ndarray:
    """Mean-free random trigonometric polynomial of degree ``band``, L2-normalized.

    The coefficients live on the band only, so every grid resolving the band
    carries the same continuum function; ``decay`` weights mode ``k`` by
    ``(|xi| + |tau|^(1/2) + 2 pi)^(-decay)``.
    """
    bshape = (2 * band + 1,) * (grid.n + 1)
    block = rng.standard_normal(bshape) + 1j * rng.standard_normal(bshape)
    block[(band,) * (grid.n + 1)] = 0.0
    if decay:
        k = np.arange(-band, band + 1)
        xi2 = sum((2 * np.pi * k / grid.Lx).reshape(grid._axis_shape(j, 2 * band + 1)) ** 2 for j in range(grid.n))
        tau = (2 * np.pi * k / grid.Lt).reshape(grid._axis_shape(grid.n, 2 * band + 1))
        block = block * (np.sqrt(xi2) + np.sqrt(np.abs(tau)) + 2 * np.pi) ** (-decay)
    f = ifft(grid, band_embed(grid, block, band))
    return f / np.sqrt(grid.cell_volume * np.vdot(f, f).real)


@dataclass(frozen=True)
class FormParams:
    delta: float
    sigma: complex = 1.0

    def __post_init__(self):
        if not (0 <= self.delta < 1):
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")
        if complex(self.sigma).real <= 0:
            raise ValueError("sigma must have positive real part")


def delta_star(c1: float, c2: float, c3: float, sigma: complex) -> float:
    """Largest admissible weight for the modified form's coercivity bound."""
    sigma = complex(sigma)
    return min(c1 / (c2 + c3 + 1.0), sigma.real / (abs(sigma.imag) + 1.0))


class ParabolicOperator:
    """``H = dt - div_x(A grad_x)`` (or ``H* = -dt - div_x(A* grad_x)`` when ``adjoint``)."""

    def __init__(self, coeffs: CoefficientField, adjoint: bool = False, dealias: bool = False):
        self.coeffs = coeffs
        self.grid = coeffs.grid
        self.adjoint = adjoint
        self.dealias = dealias
        self.matrix = coeffs.A_adjoint if adjoint else coeffs.A
        self.S = np.conj(np.swapaxes(coeffs.S, 0, 1)) if adjoint else coeffs.S
        self.D = -coeffs.D if adjoint else coeffs.D
        self._time_sign = -1.0 if adjoint else 1.0
        if dealias:
            g = self.grid
            keep = np.ones(g.shape, dtype=bool)
            kx = np.abs(np.fft.fftfreq(g.Nx, 1.0 / g.Nx))
            for j in range(g.n):
                keep &= (kx < g.Nx / 3).reshape(g._axis_shape(j, g.Nx))
            self._keep = keep
        self._mean_S = None

    @property
    def H_star(self) -> "ParabolicOperator":
        return ParabolicOperator(self.coeffs, adjoint=not self.adjoint, dealias=self.dealias)

    def __repr__(self):
        tag = "H*" if self.adjoint else "H"
        return f"ParabolicOperator({tag}, {self.coeffs.label or 'coeffs'}, {self.grid})"

    # -- batch kernels ---------------------------------------------------------------

    def _batch(self, U: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
        g = self.grid
        lead = U.shape[: U.ndim - (g.n + 1)]
        if U.shape[len(lead):] != g.shape:
            raise ValueError(f"field shape {U.shape} does not match grid {g.shape}")
        return U.reshape((-1,) + g.shape), lead

    def grad_hat(self, Uh: np.ndarray) -> np.ndarray:
        """Physical-space gradient from a batch of spectra: shape ``(b, n) + shape``."""
        g = self.grid
        if self.dealias:
            Uh = Uh * self._keep
        return np.stack([ifft(g, 1j * w * Uh) for w in g.xi], axis=1)

    def flux(self, G: np.ndarray, matrix: np.ndarray | None = None) -> np.ndarray:
        M = self.matrix if matrix is None else matrix
        n = self.grid.n
        out = np.empty_like(G)
        for i in range(n):
            acc = M[i, 0] * G[:, 0]
            for j in range(1, n):
                acc += M[i, j] * G[:, j]
            out[:, i] = acc
        if self.dealias:
            out = ifft(self.grid, fft(self.grid, out) * self._keep)
        return out

    def div_hat(self, F: np.ndarray) -> np.ndarray:
        """Spectrum of ``div_x F`` for a batch ``(b, n) + shape``."""
        g = self.grid
        acc = np.zeros((F.shape[0],) + g.shape, dtype=complex)
        for j, w in enumerate(g.xi):
            acc += 1j * w * fft(g, F[:, j])
        return acc

    def apply_hat(self, Uh: np.ndarray) -> np.ndarray:
        """Spectrum of ``H u`` from a batch of spectra."""
        g = self.grid
        return self._time_sign * g.dt_symbol * Uh - self.div_hat(self.flux(self.grad_hat(Uh)))

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Strong-form action; accepts a single field or a leading batch axis."""
        U, lead = self._batch(np.asarray(u, dtype=complex))
        out = ifft(self.grid, self.apply_hat(fft(self.grid, U)))
        return out.reshape(lead + self.grid.shape)

    __call__ = apply

    def mean_symbol_matrix(self) -> np.ndarray:
        """Space-time average of ``S`` (used for constant-coefficient preconditioning)."""
        if self._mean_S is None:
            self._mean_S = self.S.mean(axis=tuple(range(2, self.S.ndim)))
        return self._mean_S

    def constant_symbol(self) -> np.ndarray:
        """Symbol ``+-i tau + xi . Sbar xi`` of the averaged constant-coefficient operator."""
        g = self.grid
        Sb = self.mean_symbol_matrix()
        q = np.zeros(g.shape, dtype=complex)
        for i in range(g.n):
            for j in range(g.n):
                q = q + Sb[i, j] * g.xi[i] * g.xi[j]
        return self._time_sign * g.dt_symbol + q

    def to_dense(self, max_dof: int = 4096) -> np.ndarray:
        """Matrix of ``H`` in the lattice basis (row-major flattening of the field)."""
        N = self.grid.size
        if N > max_dof:
            raise ValueError(f"{N} degrees of freedom exceed the dense cap {max_dof}")
        cols = []
        step = 256
        for s in range(0, N, step):
            m = min(step, N - s)
            E = np.zeros((m, N), dtype=complex)
            E[np.arange(m), s + np.arange(m)] = 1.0
            cols.append(self.apply(E.reshape((m,) + self.grid.shape)).reshape(m, N))
        return np.concatenate(cols, axis=0).T


# -- forms ----------------------------------------------------------------------------


def _time_form(grid: GridSpec, u: np.ndarray, v: np.ndarray) -> complex:
    """``<H_t D^{1/2} u, D^{1/2} v>``, with the exact ``i tau`` symbol on the Nyquist line.

    Off the time-Nyquist line this is the factorized hidden-coercivity term; on
    it the Hilbert symbol vanishes, so the pairing falls back to ``<dt u, v>``
    to stay consistent with the strong operator.
    """
    uh = fft(grid, u)
    vh = fft(grid, v)
    w = grid.cell_volume / grid.size
    fac = grid.hilbert_symbol * grid.half_dt_symbol**2
    fac = np.where(grid.time_nyquist, grid.dt_symbol, fac)
    return complex(w * np.sum(fac * uh * np.conj(vh)))


def form_parts(op: ParabolicOperator, u, v) -> dict:
    """Components of ``(Hu)(v)``: S-part, D-part (direct and anti-symmetrized), time part."""
    g = op.grid
    u = as_field(g, u)
    v = as_field(g, v)
    Gu = op.grad_hat(fft(g, u)[None])[0]
    Gv = op.grad_hat(fft(g, v)[None])[0]
    cv = g.cell_volume
    s_part = cv * np.sum(np.einsum("ij...,j...->i...", op.S, Gu) * np.conj(Gv))
    d_direct = cv * np.sum(np.einsum("ij...,j...->i...", op.D, Gu) * np.conj(Gv))
    # index convention: (D grad u) . conj(grad v) = sum_ij D_ij d_j u conj(d_i v)
    d_anti = 0.0
    for i in range(g.n):
        for j in range(i + 1, g.n):
            Dij = op.D[i, j]
            d_anti += cv * np.sum(Dij * (Gu[j] * np.conj(Gv[i]) - Gu[i] * np.conj(Gv[j])))
    t_part = op._time_sign * _time_form(g, u, v)
    return {
        "S": complex(s_part),
        "D": complex(d_direct),
        "D_antisym": complex(d_anti),
        "time": complex(t_part),
    }


def form_value(op: ParabolicOperator, u, v) -> complex:
    """Sesquilinear form ``(Hu)(v) = <A grad u, grad v> + <H_t D^{1/2} u, D^{1/2} v>``."""
    if op.dealias:
        return inner(op.grid, op.apply(u), v)
    p = form_parts(op, u, v)
    return p["S"] + p["D"] + p["time"]


def modified_form_value(op: ParabolicOperator, u, v, p: FormParams) -> complex:
    """``B_{delta,sigma}(u, v)``: the form and the shift tested against ``(1 + delta H_t) v``."""
    g = op.grid
    v = as_field(g, v)
    w = v + p.delta * ifft(g, g.hilbert_symbol * fft(g, v))
    return form_value(op, u, w) + complex(p.sigma) * inner(g, as_field(g, u), w)


def coercivity_terms(op: ParabolicOperator, v, p: FormParams, c1: float, c2: float) -> dict:
    """Both sides of the lower bound for ``Re B(v, v)``, with the measured D-form constant.

    The D-form constant is ``|<D grad v, grad H_t v>| / |grad v|^2`` for this sample,
    replacing the structural BMO constant.
    """
    g = op.grid
    v = as_field(g, v)
    hv = ifft(g, g.hilbert_symbol * fft(g, v))
    nv = norms(g, v)
    grad2 = nv["grad"] ** 2
    parts = form_parts(op, v, hv)
    c3_obs = abs(parts["D"]) / grad2 if grad2 > 0 else 0.0
    sig = complex(p.sigma)
    lhs = modified_form_value(op, v, v, p).real
    rhs = (
        p.delta * nv["half_dt"] ** 2
        + (c1 - (c2 + c3_obs) * p.delta) * grad2
        + (sig.real - p.delta * abs(sig.imag)) * nv["l2"] ** 2
    )
    return {"lhs": lhs, "rhs": rhs, "c3_observed": c3_obs}


def accretivity_report(op: ParabolicOperator, sample_count: int = 100, seed: int = 0, decay: float = 1.0) -> dict:
    """Sampled accretivity diagnostics for ``op``.

    For each random field: ``Re<Hu,u> / |grad u|^2``, the real part of the
    D-block pairing relative to ``int |D| |grad u|^2``, the real part of the time
    block, and the margin in ``Re<Hu,u> >= c1_obs |grad u|^2``.
    """
    if sample_count < 1:
        raise ValueError("need at least one sample")
    g = op.grid
    rng = stream_rng(seed, STREAM["accretivity"])
    c1 = validate(op.coeffs).c1_observed
    Dmag = np.sqrt((upper_entries(op.D) ** 2).sum(axis=0)) if g.n > 1 else np.zeros(g.shape)
    ratios, d_real, d_imag, t_real, margins = [], [], [], [], []
    for _ in range(sample_count):
        u = random_field(g, rng, decay=decay)
        Hu = op.apply(u)
        pair = inner(g, Hu, u)
        nu = norms(g, u)
        grad2 = nu["grad"] ** 2
        Gu = op.grad_hat(fft(g, u)[None])[0]
        dflux = -ifft(g, op.div_hat(np.einsum("ij...,j...->i...", op.D, Gu)[None])[0])
        dpair = inner(g, dflux, u)
        scale = g.cell_volume * float(np.sum(Dmag * np.sum(np.abs(Gu) ** 2, axis=0)))
        parts = form_parts(op, u, u)
        ratios.append(pair.real / grad2)
        d_real.append(abs(dpair.real) / scale if scale > 0 else 0.0)
        d_imag.append(abs(dpair.imag))
        t_real.append(abs(parts["time"].real) / max(nu["energy"] ** 2, 1e-300))
        margins.append((pair.real - c1 * grad2) / nu["energy"] ** 2)
    return {
        "c1_observed": c1,
        "min_ratio": float(min(ratios)),
        "max_D_real_rel": float(max(d_real)),
        "max_D_imag": float(max(d_imag)),
        "max_time_real_rel": float(max(t_real)),
        "min_margin": float(min(margins)),
        "samples": sample_count,
    }
