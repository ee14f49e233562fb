"""The square root of H by resolvent quadrature, a dense Schur oracle, and Kato ratios.

Two quadratures of the resolution formula are available, both on geometric
(midpoint-in-log) nodes:

``"cubic"``
    ``sqrt(H) u = (16/pi) int_0^inf (1 + l^2 H)^-3 l^3 H^2 u dl/l``; each
    ``E^3`` is three chained resolvent solves.  The integrand vanishes like
    ``l^4`` at 0 and ``l^-2`` at infinity, so truncation is cheap to control.
``"first_order"``
    ``sqrt(H) u = (2/pi) int_0^inf l E_l H u dl/l`` with the two tails added
    in closed form (``l_min H u`` below, ``(u - mean u) / l_max`` above).  One
    solve per node; used for large sample sweeps.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .lattice import GridSpec, fft, ifft, norms
from .operator import ParabolicOperator, band_embed, random_band_field
from .resolvent import SolverConfig, resolvent
from .rng import STREAM, stream_rng

__all__ = [
    "QuadratureSpec",
    "QuadratureTruncation",
    "KatoReport",
    "SampleSpec",
    "sqrt_apply",
    "sqrt_symbol",
    "sqrt_dense_oracle",
    "kato_symbol_ratio_sq",
    "kato_samples",
    "kato_ratio_sweep",
    "KATO_QUAD",
    "KATO_SOLVER",
]

_FORMULAS = ("cubic", "first_order")


class QuadratureTruncation(UserWarning):
    """A boundary node carries more than the allowed share of the quadrature."""


@dataclass(frozen=True)
class QuadratureSpec:
    lambda_min: float = 1e-4
    lambda_max: float = 1e4
    nodes: int = 200
    spacing: str = "geometric"
    formula: str = "cubic"
    truncation_tol: float = 1e-8

    def __post_init__(self):
        if not (0 < self.lambda_min < self.lambda_max):
            raise ValueError("need 0 < lambda_min < lambda_max")
        if self.nodes < 8:
            raise ValueError("need at least 8 nodes")
        if self.spacing != "geometric":
            raise ValueError("only geometric spacing is supported")
        if self.formula not in _FORMULAS:
            raise ValueError(f"formula must be one of {_FORMULAS}")

    @property
    def log_step(self) -> float:
        return (np.log(self.lambda_max) - np.log(self.lambda_min)) / self.nodes

    @property
    def lambdas(self) -> np.ndarray:
        """Midpoints (in log) of ``nodes`` equal cells covering ``[lambda_min, lambda_max]``."""
        s = np.log(self.lambda_min) + (np.arange(self.nodes) + 0.5) * self.log_step
        return np.exp(s)

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(self.lambda_min, self.lambda_max, 2 * self.nodes, self.spacing, self.formula, self.truncation_tol)


# sweeps over many samples use the one-solve formula at a looser tolerance
KATO_QUAD = QuadratureSpec(1e-3, 10.0, 13, formula="first_order", truncation_tol=5e-2)
KATO_SOLVER = SolverConfig(rel_tol=1e-4)


def _l2(grid: GridSpec, U: np.ndarray) -> np.ndarray:
    flat = U.reshape((-1, grid.size))
    return np.sqrt(grid.cell_volume) * np.linalg.norm(flat, axis=1)


def sqrt_apply(
    op: ParabolicOperator,
    u,
    quad: QuadratureSpec = QuadratureSpec(),
    cfg: SolverConfig = SolverConfig(),
    info: dict | None = None,
) -> np.ndarray:
    """Quadrature of the resolution formula for ``sqrt(H) u`` (single field or batch).

    Nodes are summed in increasing order of lambda.  When ``info`` is given it
    receives the boundary-node shares used by the truncation monitor.
    """
    g = op.grid
    U = np.asarray(u, dtype=complex)
    Hu = op.apply(U)
    lams = quad.lambdas
    w = quad.log_step
    axes = tuple(range(U.ndim - g.n - 1, U.ndim))

    def mean_free(X):
        # H X and E_l X - X are mean-free exactly; removing the roundoff mean keeps it
        # from riding undamped through chained solves with huge right-hand sides
        return X - X.mean(axis=axes, keepdims=True)

    Hu = mean_free(Hu)
    acc = np.zeros_like(U)
    first = last = None
    if quad.formula == "cubic":
        H2u = mean_free(op.apply(Hu))
        for k, lam in enumerate(lams):
            x = mean_free(resolvent(op, lam, lam**3 * H2u, cfg).u)
            x = mean_free(resolvent(op, lam, x, cfg).u)
            x = mean_free(resolvent(op, lam, x, cfg).u)
            term = (16.0 / np.pi) * w * x
            acc += term
            if k == 0:
                first = term
            last = term
        tails = np.zeros_like(U)
    else:
        for k, lam in enumerate(lams):
            term = (2.0 / np.pi) * w * lam * mean_free(resolvent(op, lam, Hu, cfg).u)
            acc += term
            if k == 0:
                first = term
            last = term
        tails = (2.0 / np.pi) * (quad.lambda_min * Hu + mean_free(U) / quad.lambda_max)
        acc += tails
    total = np.maximum(_l2(g, acc), 1e-300)
    share = float(np.max(np.maximum(_l2(g, first), _l2(g, last)) / total))
    if info is not None:
        info["boundary_share"] = share
        info["tail_share"] = float(np.max(_l2(g, tails) / total))
    if share > quad.truncation_tol:
        warnings.warn(
            f"boundary quadrature node carries {share:.2e} of the result (tolerance {quad.truncation_tol:.0e})",
            QuadratureTruncation,
            stacklevel=2,
        )
    return acc


def sqrt_symbol(grid: GridSpec, adjoint: bool = False) -> np.ndarray:
    """Principal root of the heat symbol ``+-i tau + |xi|^2``."""
    sign = -1.0 if adjoint else 1.0
    return np.sqrt(sign * grid.dt_symbol + grid.xi2)


def sqrt_dense_oracle(op: ParabolicOperator, max_dof: int = 4096, rel_tol: float = 1e-10) -> np.ndarray:
    """Principal square root of the assembled matrix of ``H`` (Schur method)."""
    Hm = op.to_dense(max_dof)
    hnorm = np.linalg.norm(Hm, 2)
    ev = np.linalg.eigvals(Hm)
    if ev.real.min() < -1e-8 * hnorm:
        raise ValueError(f"H has an eigenvalue with real part {ev.real.min():.3e}; discretization is not accretive")
    O = scipy.linalg.sqrtm(Hm)
    resid = np.linalg.norm(O @ O - Hm, 2)
    if resid > rel_tol * hnorm:
        raise ValueError(f"Schur root residual {resid / hnorm:.2e} exceeds {rel_tol:.0e}")
    return np.asarray(O)


# -- Kato ratios ------------------------------------------------------------------


def kato_symbol_ratio_sq(grid: GridSpec) -> np.ndarray:
    """``|sqrt(i tau + |xi|^2)|^2 / (|xi| + |tau|^(1/2))^2`` over all nonzero modes."""
    at = np.broadcast_to(np.abs(grid.tau), grid.shape)
    num = np.sqrt(at**2 + grid.xi2**2)
    den = (np.sqrt(grid.xi2) + np.sqrt(at)) ** 2
    nz = den > 0
    return num[nz] / den[nz]


@dataclass(frozen=True)
class SampleSpec:
    """``count`` samples: band-limited random fields followed by ``pure_modes`` single modes."""

    count: int = 50
    pure_modes: int = 10
    band: int = 4
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.pure_modes <= self.count) or self.count < 1:
            raise ValueError("need 0 <= pure_modes <= count and count >= 1")
        if self.band < 1:
            raise ValueError("band must be >= 1")


def kato_samples(grid: GridSpec, spec: SampleSpec) -> np.ndarray:
    """Nonconstant trigonometric polynomials of degree ``band``.

    The random coefficients are drawn on the band only, so every grid that
    resolves the band samples the same continuum functions (refinement studies
    compare like with like).
    """
    band = spec.band
    rng = stream_rng(spec.seed, STREAM["kato"])
    bshape = (2 * band + 1,) * (grid.n + 1)
    out = [random_band_field(grid, rng, band) for _ in range(spec.count - spec.pure_modes)]
    for _ in range(spec.pure_modes):
        while True:
            k = rng.integers(-band, band + 1, size=grid.n + 1)
            if np.any(k != 0):
                break
        block = np.zeros(bshape, dtype=complex)
        block[tuple(k + band)] = 1.0
        out.append(ifft(grid, band_embed(grid, block, band)))
    U = np.stack(out)
    return U / _l2(grid, U).reshape((-1,) + (1,) * (grid.n + 1))


@dataclass
class KatoReport:
    ratios: list
    min: float
    max: float
    adjoint: bool = False
    label: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def kato_ratio_sweep(
    op: ParabolicOperator,
    samples: SampleSpec | np.ndarray = SampleSpec(),
    quad: QuadratureSpec = KATO_QUAD,
    cfg: SolverConfig = KATO_SOLVER,
) -> KatoReport:
    """``|sqrt(H) u| / (|grad u| + |D_t^(1/2) u|)`` over a sample family."""
    g = op.grid
    U = kato_samples(g, samples) if isinstance(samples, SampleSpec) else np.asarray(samples, dtype=complex)
    info: dict = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureTruncation)
        R = sqrt_apply(op, U, quad, cfg, info=info)
    num = _l2(g, R)
    ratios = []
    for u, a in zip(U, num):
        nu = norms(g, u)
        den = nu["grad"] + nu["half_dt"]
        if den <= 0:
            raise ValueError("constant sample: Kato ratio undefined")
        ratios.append(float(a / den))
    return KatoReport(ratios, float(min(ratios)), float(max(ratios)), op.adjoint, op.coeffs.label, info)
