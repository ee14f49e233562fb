"""Mollifiers ``P_lambda``, dyadic averages ``A_lambda`` and square-function norms.

``P(x, t) = P1(x) P2(t)`` with ``P1`` the radial bump ``exp(-1/(1-|x|^2))`` on
the unit ball and ``P2`` the same profile on ``[-1, 1]``, each of integral one.
On the torus the periodized ``P_lambda`` has Fourier coefficients exactly
``P1^(lambda |xi|) P2^(lambda^2 tau)`` as long as its support fits, so every
convolution here is a Fourier multiplier and every triple-bar norm can be
evaluated by Parseval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma, j0

from .dyadic import DyadicDecomposition, scale_index
from .lattice import GridSpec, fft, ifft, norms
from .operator import ParabolicOperator
from .resolvent import SolverConfig, resolvent

__all__ = [
    "SupportOverflow",
    "MollifierSpec",
    "LambdaGrid",
    "TripleNorm",
    "conv_P",
    "conv_P1",
    "conv_P2",
    "mollifier_symbol",
    "dyadic_average",
    "triple_norm",
    "maximal_x",
    "maximal_t",
    "maximal_domination",
    "verify_lp_suite",
    "lp_samples",
    "verify_kee",
    "KEE_GRID",
]


class SupportOverflow(ValueError):
    """The scaled mollifier support does not fit in the torus."""


@lru_cache(maxsize=8)
def _gauss01(m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s, dtype=float)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True)
class MollifierSpec:
    """Bump mollifier; transforms by Gauss-Legendre quadrature of the radial profile."""

    n: int = 2
    quad_points: int = 400

    @property
    def _nodes(self):
        return _gauss01(self.quad_points)

    def _radial_transform(self, r: np.ndarray, dim: int) -> np.ndarray:
        rho, w = self._nodes
        p = _bump(rho)
        r = np.asarray(r, dtype=float)
        arg = np.multiply.outer(r, rho)
        if dim == 1:
            kern, jac = np.cos(arg), 2.0 * np.ones_like(rho)
        elif dim == 2:
            kern, jac = j0(arg), 2 * np.pi * rho
        else:
            kern, jac = np.sinc(arg / np.pi), 4 * np.pi * rho**2
        vals = kern @ (w * p * jac)
        mass = np.sum(w * p * jac)
        return vals / mass

    def symbol1(self, r) -> np.ndarray:
        """``P1^`` as a function of ``|xi|``."""
        return self._radial_transform(r, self.n)

    def symbol2(self, s) -> np.ndarray:
        return self._radial_transform(np.abs(s), 1)

    def kernel1_max(self) -> float:
        """``sup P1`` (the value at the origin)."""
        rho, w = self._nodes
        jac = {1: 2.0 * np.ones_like(rho), 2: 2 * np.pi * rho, 3: 4 * np.pi * rho**2}[self.n]
        return float(np.exp(-1.0) / np.sum(w * _bump(rho) * jac))

    def kernel2_max(self) -> float:
        rho, w = self._nodes
        return float(np.exp(-1.0) / np.sum(w * _bump(rho) * 2.0))

    def first_moments(self, m: int = 201) -> np.ndarray:
        """``int x_i P1(x) dx`` by tensor quadrature (vanishes by evenness)."""
        s = np.linspace(-1, 1, m)
        h = s[1] - s[0]
        X = np.meshgrid(*([s] * self.n), indexing="ij")
        r = np.sqrt(sum(x**2 for x in X))
        P = _bump(r)
        P = P / (P.sum() * h**self.n)
        return np.array([float((X[i] * P).sum() * h**self.n) for i in range(self.n)])


DEFAULT_MOLLIFIER = {n: MollifierSpec(n) for n in (1, 2, 3)}


def _mol(grid: GridSpec, mol: MollifierSpec | None) -> MollifierSpec:
    m = mol or DEFAULT_MOLLIFIER[grid.n]
    if m.n != grid.n:
        raise ValueError("mollifier dimension does not match the grid")
    return m


def _check_support(grid: GridSpec, lam: float, space: bool = True, time: bool = True) -> None:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if space and lam > grid.Lx / 2:
        raise SupportOverflow(f"spatial support {2 * lam:g} exceeds the period {grid.Lx:g}")
    if time and lam**2 > grid.Lt / 2:
        raise SupportOverflow(f"time support {2 * lam**2:g} exceeds the period {grid.Lt:g}")


@lru_cache(maxsize=512)
def _symbols(grid: GridSpec, lam: float, mol: MollifierSpec) -> tuple[np.ndarray, np.ndarray]:
    r, inv = np.unique(np.sqrt(grid.xi2), return_inverse=True)
    s1 = mol.symbol1(lam * r)[inv].reshape(grid.shape)
    s2 = mol.symbol2(lam**2 * grid.tau)
    s1.setflags(write=False)
    s2.setflags(write=False)
    return s1, s2


def mollifier_symbol(grid: GridSpec, lam: float, which: str = "P", mol: MollifierSpec | None = None) -> np.ndarray:
    """Multiplier of ``P_lambda`` (``which='P'``), ``P1_lambda`` or ``P2_lambda``."""
    _check_support(grid, lam, space=which in ("P", "P1"), time=which in ("P", "P2"))
    s1, s2 = _symbols(grid, float(lam), _mol(grid, mol))
    return {"P": s1 * s2, "P1": s1, "P2": s2}[which]


def conv_P(grid: GridSpec, lam: float, f, mol: MollifierSpec | None = None) -> np.ndarray:
    return ifft(grid, fft(grid, np.asarray(f, dtype=complex)) * mollifier_symbol(grid, lam, "P", mol))


def conv_P1(grid: GridSpec, lam: float, f, mol: MollifierSpec | None = None) -> np.ndarray:
    return ifft(grid, fft(grid, np.asarray(f, dtype=complex)) * mollifier_symbol(grid, lam, "P1", mol))


def conv_P2(grid: GridSpec, lam: float, f, mol: MollifierSpec | None = None) -> np.ndarray:
    return ifft(grid, fft(grid, np.asarray(f, dtype=complex)) * mollifier_symbol(grid, lam, "P2", mol))


# -- dyadic averages ----------------------------------------------------------------


@lru_cache(maxsize=32)
def _avg_decomposition(grid: GridSpec) -> DyadicDecomposition:
    return DyadicDecomposition(grid, clamp_time=True)


def dyadic_average(grid: GridSpec, lam: float, f) -> np.ndarray:
    """Average over the dyadic parabolic cube of size in ``[lam, 2 lam)`` containing each point.

    Time sides shorter than one lattice cell are widened to one cell.
    """
    j = scale_index(grid, lam)
    dec = _avg_decomposition(grid)
    if j < 0:
        raise ValueError(f"scale {lam:g} exceeds the torus")
    if j > dec.j_max:
        raise ValueError(f"scale {lam:g} is finer than one lattice cell ({grid.hx:g})")
    return dec.average(np.asarray(f), j)


# -- lambda grids and triple-bar norms ---------------------------------------------


@dataclass(frozen=True)
class LambdaGrid:
    """Geometric midpoint nodes on ``[lambda_min, lambda_max]``, ``per_decade`` per decade."""

    lambda_min: float
    lambda_max: float
    per_decade: int = 64

    def __post_init__(self):
        if not (0 < self.lambda_min < self.lambda_max):
            raise ValueError("need 0 < lambda_min < lambda_max")
        if self.per_decade < 1:
            raise ValueError("per_decade must be >= 1")

    @classmethod
    def default(cls, grid: GridSpec, per_decade: int = 64) -> "LambdaGrid":
        """Three decades ending at a quarter period (the largest scale whose support fits)."""
        top = min(grid.Lx / 4, np.sqrt(grid.Lt) / 4)
        return cls(top * 1e-3, top, per_decade)

    @property
    def count(self) -> int:
        return max(1, int(round(self.per_decade * np.log10(self.lambda_max / self.lambda_min))))

    @property
    def step(self) -> float:
        return np.log(self.lambda_max / self.lambda_min) / self.count

    @property
    def edges(self) -> np.ndarray:
        return self.lambda_min * np.exp(self.step * np.arange(self.count + 1))

    @property
    def values(self) -> np.ndarray:
        return self.lambda_min * np.exp(self.step * (np.arange(self.count) + 0.5))

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.count, self.step)

    def refined(self) -> "LambdaGrid":
        return LambdaGrid(self.lambda_min, self.lambda_max, 2 * self.per_decade)


@dataclass
class TripleNorm:
    value: float
    squared: float
    first_share: float
    last_share: float
    window: tuple = ()

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _triple_from_sq(sq: np.ndarray, lg: LambdaGrid) -> TripleNorm:
    """``sq[j]`` is ``|g_{lambda_j}|_2^2``; returns the quadrature with end-node shares."""
    contrib = lg.weights * np.asarray(sq, dtype=float)
    total = float(contrib.sum())
    safe = total if total > 0 else 1.0
    return TripleNorm(
        float(np.sqrt(total)),
        total,
        float(contrib[0] / safe),
        float(contrib[-1] / safe),
        (lg.lambda_min, lg.lambda_max),
    )


def triple_norm(family, lg: LambdaGrid, grid: GridSpec | None = None) -> TripleNorm:
    """``(int int |g_lambda|^2 dx dt dlambda/lambda)^(1/2)`` over the grid nodes.

    ``family(lam)`` returns a field (or vector field); ``grid`` supplies the
    cell volume (unit weight when omitted).
    """
    cv = grid.cell_volume if grid is not None else 1.0
    sq = [cv * float(np.sum(np.abs(family(lam)) ** 2)) for lam in lg.values]
    return _triple_from_sq(np.array(sq), lg)


# -- maximal functions ----------------------------------------------------------------


def _window_sup(f: np.ndarray, axes: tuple[int, ...], sizes: tuple[int, ...]) -> np.ndarray:
    """Sup over centred windows of ``2m+1`` cells per axis (``m`` below half the axis) of the window mean of ``|f|``."""
    a = np.abs(f).astype(float)
    best = a.copy()
    for m in range(1, min(s // 2 for s in sizes)):
        box = a
        for ax in axes:
            box = _box_sum(box, ax, m)
        best = np.maximum(best, box / (2 * m + 1) ** len(axes))
    return best


def _box_sum(a: np.ndarray, axis: int, m: int) -> np.ndarray:
    """Periodic sum over offsets ``-m..m`` along ``axis``."""
    N = a.shape[axis]
    ext = np.concatenate([np.take(a, range(N - m, N), axis=axis), a, np.take(a, range(m), axis=axis)], axis=axis)
    c = np.cumsum(ext, axis=axis)
    zero = np.zeros_like(np.take(c, [0], axis=axis))
    c = np.concatenate([zero, c], axis=axis)
    hi = np.take(c, range(2 * m + 1, 2 * m + 1 + N), axis=axis)
    lo = np.take(c, range(0, N), axis=axis)
    return hi - lo


def maximal_x(grid: GridSpec, f) -> np.ndarray:
    """Centred-cube maximal function in ``x`` at each fixed ``t`` (discrete windows)."""
    return _window_sup(np.asarray(f), tuple(range(grid.n)), (grid.Nx,) * grid.n)


def maximal_t(grid: GridSpec, f) -> np.ndarray:
    return _window_sup(np.asarray(f), (grid.n,), (grid.Nt,))


def maximal_domination(grid: GridSpec, lam: float, f, mol: MollifierSpec | None = None) -> dict:
    """``max |P_lambda f| / (M1 M2 f)`` against the layer-cake constant.

    For a radially decreasing kernel of unit mass, ``|P f| <= |Q|/|B| M f`` where
    the cube circumscribes the ball; in time the windows are the balls.
    """
    mol = _mol(grid, mol)
    pf = np.abs(conv_P(grid, lam, f, mol))
    m = maximal_x(grid, maximal_t(grid, f))
    omega = np.pi ** (grid.n / 2) / gamma(grid.n / 2 + 1)
    const = 2.0**grid.n / omega
    ratio = float(np.max(pf / np.maximum(m, 1e-300)))
    return {"ratio": ratio, "constant": const, "ok": ratio <= const * (1 + 1e-9)}


# -- Littlewood-Paley constants -------------------------------------------------------


def _decomp_scale(grid: GridSpec, lam: float) -> int | None:
    j = scale_index(grid, lam)
    return j if j <= _avg_decomposition(grid).j_max else None


@lru_cache(maxsize=16)
def _lp_multipliers(grid: GridSpec, lg: LambdaGrid, mol: MollifierSpec) -> dict:
    """lambda-integrated multipliers: every square function below is ``sum_k M(k) |f^(k)|^2``.

    Each entry holds the full quadrature and its first/last node terms (for
    truncation shares).  The averaging term is grouped by dyadic scale ``j`` (``None``
    for sub-cell scales, where ``A_lambda`` is the identity on the lattice).
    """
    xi2, tau = grid.xi2, np.abs(grid.tau)
    lams, wts = lg.values, lg.weights
    keys = ("grad", "dt", "half", "hi")
    out = {k: [np.zeros(grid.shape), None, None] for k in keys}
    groups: dict = {}
    for idx, (lam, wt) in enumerate(zip(lams, wts)):
        P = mollifier_symbol(grid, lam, "P", mol)
        P2 = np.abs(P) ** 2
        terms = {
            "grad": lam**2 * xi2 * P2,
            "dt": lam**4 * tau**2 * P2,
            "half": lam**2 * tau * P2,
            "hi": lam**-2 * np.abs(1 - P) ** 2,
        }
        for k, m in terms.items():
            out[k][0] = out[k][0] + wt * m
            if idx == 0:
                out[k][1] = wt * m
            if idx == len(lams) - 1:
                out[k][2] = wt * m
        j = _decomp_scale(grid, lam)
        g = groups.setdefault(j, [0.0, np.zeros(grid.shape, dtype=complex), np.zeros(grid.shape)])
        g[0] += wt
        g[1] = g[1] + wt * P
        g[2] = g[2] + wt * P2
    ends = []
    for idx in (0, len(lams) - 1):
        ends.append((_decomp_scale(grid, lams[idx]), wts[idx], mollifier_symbol(grid, lams[idx], "P", mol)))
    out["avg_groups"] = groups
    out["avg_ends"] = ends
    return out


def _shares(total: float, first: float, last: float) -> tuple[float, float]:
    safe = total if total > 0 else 1.0
    return first / safe, last / safe


def lp_constants(grid: GridSpec, f, lg: LambdaGrid, mol: MollifierSpec | None = None) -> dict:
    """The three Littlewood-Paley ratios for one sample, evaluated spectrally.

    ``square_function``: sum of the three square functions of ``P_lambda f`` over ``|f|``;
    ``high_pass``: ``|||lambda^-1 (I - P_lambda) f||| / |D f|``;
    ``averaging``: ``|||(A_lambda - P_lambda) f||| / |f|`` (``A_lambda = I`` below one cell).
    """
    mol = _mol(grid, mol)
    M = _lp_multipliers(grid, lg, mol)
    f = np.asarray(f, dtype=complex)
    fh = fft(grid, f)
    p = np.abs(fh) ** 2
    w = grid.cell_volume / grid.size
    nf = norms(grid, f)
    vals, trunc = {}, {}
    for k in ("grad", "dt", "half", "hi"):
        tot, first, last = (w * float((m * p).sum()) for m in M[k])
        vals[k] = np.sqrt(tot)
        trunc[k] = _shares(tot, first, last)
    dec = _avg_decomposition(grid)
    avg_hat = {j: (fh if j is None else fft(grid, dec.average(f, j))) for j in M["avg_groups"]}
    tot = 0.0
    for j, (W, SP, SP2) in M["avg_groups"].items():
        a = avg_hat[j]
        tot += w * float((W * np.abs(a) ** 2 - 2 * (np.conj(a) * fh * SP).real + SP2 * p).sum())
    ends = [w * wt * float((np.abs(avg_hat[j] - P * fh) ** 2).sum()) for j, wt, P in M["avg_ends"]]
    tot = max(tot, 0.0)
    vals["avg"] = np.sqrt(tot)
    trunc["avg"] = _shares(tot, *(float(e) for e in ends))
    return {
        "square_function": (vals["grad"] + vals["dt"] + vals["half"]) / nf["l2"],
        "high_pass": vals["hi"] / nf["D_seminorm"] if nf["D_seminorm"] > 0 else 0.0,
        "averaging": vals["avg"] / nf["l2"],
        "truncation": {
            "square_function": max(trunc[k][1] for k in ("grad", "dt", "half")),
            "high_pass": max(trunc["hi"]),
            "averaging": max(trunc["avg"]),
        },
    }


@dataclass
class LPReport:
    constants: dict
    per_sample: list = field(default_factory=list)
    window: tuple = ()

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def lp_samples(grid: GridSpec, seed: int = 0, count: int = 10) -> np.ndarray:
    """Test fields: half rough (band 7, spectrum just inside the energy space), half smooth (band 3)."""
    from .operator import random_band_field
    from .rng import STREAM, stream_rng

    rng = stream_rng(seed, STREAM["lp"])
    top = (min(grid.Nx, grid.Nt) - 2) // 2
    rough = [random_band_field(grid, rng, min(7, top), decay=(grid.n + 2) / 2 + 0.1) for _ in range(count // 2)]
    smooth = [random_band_field(grid, rng, min(3, top)) for _ in range(count - count // 2)]
    return np.stack(rough + smooth)


def verify_lp_suite(f_samples, grid: GridSpec, lg: LambdaGrid | None = None, mol: MollifierSpec | None = None) -> LPReport:
    """Largest measured value of each constant over the samples."""
    lg = lg or LambdaGrid.default(grid)
    rows = [lp_constants(grid, f, lg, mol) for f in f_samples]
    keys = ("square_function", "high_pass", "averaging")
    consts = {k: float(max(r[k] for r in rows)) for k in keys}
    return LPReport(consts, rows, (lg.lambda_min, lg.lambda_max))


# -- reduction estimate ------------------------------------------------------------------

# resolvent scales: integrand ~ lambda^4 |z|^2 below 1/sqrt|z| and ~ lambda^-2 above
KEE_GRID = LambdaGrid(1e-4, 10.0, per_decade=4)


def verify_kee(
    op: ParabolicOperator,
    f_samples,
    lg: LambdaGrid = KEE_GRID,
    cfg: SolverConfig = SolverConfig(rel_tol=1e-6),
) -> dict:
    """``|||lambda E_lambda H f||| / |D f|`` per sample, plus the identity cross-check.

    The second evaluation is ``lambda^-1 (f - E_lambda f)``.  Both solves have
    relative residual at most ``rel_tol`` and ``E_lambda`` is a contraction, so
    they differ by at most ``rel_tol (|f| / lambda + lambda |H f|)``; the
    reported discrepancy is measured in units of that bound.
    """
    g = op.grid
    F = np.asarray(f_samples, dtype=complex)
    if F.shape == g.shape:
        F = F[None]
    HF = op.apply(F)
    axes = tuple(range(1, F.ndim))
    nf = np.sqrt(g.cell_volume * np.sum(np.abs(F) ** 2, axis=axes))
    nHf = np.sqrt(g.cell_volume * np.sum(np.abs(HF) ** 2, axis=axes))
    sq = np.zeros((F.shape[0], lg.count))
    discrepancy = 0.0
    for k, lam in enumerate(lg.values):
        a = lam * resolvent(op, lam, HF, cfg).u
        b = (F - resolvent(op, lam, F, cfg).u) / lam
        sq[:, k] = g.cell_volume * np.sum(np.abs(a) ** 2, axis=axes)
        diff = np.sqrt(g.cell_volume * np.sum(np.abs(a - b) ** 2, axis=axes))
        bound = cfg.rel_tol * (nf / lam + lam * nHf)
        discrepancy = max(discrepancy, float(np.max(diff / bound)))
    ratios, trunc = [], 0.0
    for i, f in enumerate(F):
        t = _triple_from_sq(sq[i], lg)
        d = norms(g, f)["D_seminorm"]
        if d <= 0:
            raise ValueError("constant sample: ratio undefined")
        ratios.append(t.value / d)
        trunc = max(trunc, t.first_share, t.last_share)
    return {
        "ratios": ratios,
        "max_ratio": float(max(ratios)),
        "identity_discrepancy": discrepancy,
        "identity_tolerance": 10.0,
        "truncation": trunc,
        "window": (lg.lambda_min, lg.lambda_max),
    }
