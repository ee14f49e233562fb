"""Exponential off-diagonal decay of the resolvents.

Three families of checks: exponentially weighted bounds, bounds between
time-separated sets, and decay over parabolic annuli ``2^{k+1} Delta \\ 2^k Delta``
in both support directions.  Decay constants are fitted, never assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lattice import GridSpec, fft, ifft
from .operator import random_band_field
from .resolvent import SolverConfig, resolvent, resolvent_div
from .rng import STREAM, stream_rng

__all__ = [
    "ParabolicCube",
    "SeparatedSets",
    "DecayFit",
    "OffDiagConfig",
    "fit_decay",
    "tent",
    "exp_weighted_check",
    "annuli_decay",
    "annuli_fit",
    "monotone_decay",
    "time_separated_check",
    "time_separated_sweep",
    "decay_rows",
    "VARIANTS",
]

VARIANTS = ("scalar", "gradient_source", "div_source")


def _toroidal(d: np.ndarray, period: float) -> np.ndarray:
    """Signed offset reduced to ``[-period/2, period/2)``."""
    return (d + period / 2) % period - period / 2


@dataclass(frozen=True)
class ParabolicCube:
    """``Q x I`` with spatial side ``ell`` and time side ``Lt (ell/Lx)^2``.

    Dilation follows ``c Delta = cQ x c^2 I`` about the same center.  Lattice
    membership is half-open, ``-s/2 < offset <= s/2`` per axis.
    """

    center: tuple[float, ...]
    ell: float

    def time_side(self, grid: GridSpec, c: float = 1.0) -> float:
        return grid.Lt * (c * self.ell / grid.Lx) ** 2

    def fits(self, grid: GridSpec, c: float = 1.0) -> bool:
        eps = 1e-12
        return c * self.ell <= grid.Lx * (1 + eps) and self.time_side(grid, c) <= grid.Lt * (1 + eps)

    def mask(self, grid: GridSpec, c: float = 1.0) -> np.ndarray:
        if len(self.center) != grid.n + 1:
            raise ValueError("cube center needs n + 1 coordinates")
        if not self.fits(grid, c):
            raise ValueError(f"{c:g}-dilate of {self} exceeds the torus")
        m = np.ones(grid.shape, dtype=bool)
        sides = [c * self.ell] * grid.n + [self.time_side(grid, c)]
        periods = [grid.Lx] * grid.n + [grid.Lt]
        for axis, (x, x0, s, L) in enumerate(zip(grid.coords, self.center, sides, periods)):
            if s >= L * (1 - 1e-12):
                continue
            d = _toroidal(x - x0, L)
            # small slack so that lattice points exactly on the upper face count
            tol = 1e-9 * L
            m = m & (d > -s / 2 + tol) & (d <= s / 2 + tol)
        return np.broadcast_to(m, grid.shape).copy()

    def annulus(self, grid: GridSpec, k: int) -> np.ndarray:
        return self.mask(grid, 2.0 ** (k + 1)) & ~self.mask(grid, 2.0**k)

    def max_k(self, grid: GridSpec) -> int:
        """Largest ``k`` with ``2^{k+1} Delta`` inside the torus (-1 if none)."""
        k = -1
        while self.fits(grid, 2.0 ** (k + 2)):
            k += 1
        return k


def _offset_hits(grid: GridSpec, E: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Boolean array over lattice offsets ``y - x`` realized by some ``x in E``, ``y in F``."""
    C = ifft(grid, np.conj(fft(grid, E.astype(float))) * fft(grid, F.astype(float))).real
    return C > 0.5


@dataclass(frozen=True, eq=False)
class SeparatedSets:
    """Lattice sets ``E``, ``F`` and their parabolic toroidal distances."""

    grid: GridSpec
    E: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        for name in ("E", "F"):
            m = np.asarray(getattr(self, name), dtype=bool)
            if m.shape != self.grid.shape:
                raise ValueError(f"{name} must be a mask of shape {self.grid.shape}")
            if not m.any():
                raise ValueError(f"{name} is empty")
            object.__setattr__(self, name, m)

    @cached_property
    def d(self) -> float:
        """``min |x - y| + |t - s|^{1/2}`` over ``E x F`` with wraparound."""
        g = self.grid
        hits = _offset_hits(g, self.E, self.F)
        xs = [_toroidal(c, g.Lx) for c in g.coords[:-1]]
        dt = _toroidal(g.coords[-1], g.Lt)
        dist = np.sqrt(sum(x**2 for x in xs)) + np.sqrt(np.abs(dt))
        return float(np.broadcast_to(dist, g.shape)[hits].min())

    @cached_property
    def d_time(self) -> float:
        """``inf |t - s|^{1/2}`` over the time projections of ``E`` and ``F``."""
        g = self.grid
        axes = tuple(range(g.n))
        pe = self.E.any(axis=axes).astype(float)
        pf = self.F.any(axis=axes).astype(float)
        C = np.fft.ifft(np.conj(np.fft.fft(pe)) * np.fft.fft(pf)).real
        dt = np.abs(_toroidal(np.arange(g.Nt) * g.ht, g.Lt))
        return float(np.sqrt(dt[C > 0.5].min()))


@dataclass
class DecayFit:
    points: list
    slope: float
    intercept: float
    r2: float

    @property
    def decaying(self) -> bool:
        return self.slope < 0

    @property
    def c_hat(self) -> float:
        """Empirical ``c`` in ``exp(-s / c)``; infinite when nothing decays."""
        return -1.0 / self.slope if self.slope < 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "points": [list(map(float, p)) for p in self.points],
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "c_hat": self.c_hat,
            "decaying": self.decaying,
        }


def fit_decay(points) -> DecayFit:
    """Least-squares line through ``(separation / lambda, log ratio)`` pairs."""
    pts = [(float(s), float(y)) for s, y in points]
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points to fit a decay rate, got {len(pts)}")
    s = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
        raise ValueError("decay points must be finite")
    if s.min() <= 0 or s.max() / s.min() < 4:
        raise ValueError("separations must be positive and span a factor of at least 4")
    X = np.stack([s, np.ones_like(s)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - (slope * s + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot <= 1e-300:
        slope, r2 = 0.0, 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return DecayFit(pts, float(slope), float(intercept), float(r2))


@dataclass(frozen=True)
class OffDiagConfig:
    theta: float = 0.1
    k_max: int | None = None
    lambda_list: tuple[float, ...] = ()
    noise_floor: float = 0.05
    sources: int = 8
    source_band: int = 7
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not (0 < self.theta < 1):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if self.k_max is not None and self.k_max < 0:
            raise ValueError("k_max must be nonnegative")
        if self.sources < 1 or self.source_band < 1:
            raise ValueError("need at least one source of band >= 1")
        if any(lam <= 0 for lam in self.lambda_list):
            raise ValueError("lambdas must be positive")


# -- weighted bounds ---------------------------------------------------------


def tent(s: np.ndarray, period: float, origin: float = 0.0) -> np.ndarray:
    """Periodic 1-Lipschitz distance to ``origin``, with values in ``[0, period/2]``."""
    return np.abs(_toroidal(s - origin, period))


def _weight(grid: GridSpec, chi, lam: float, origin) -> np.ndarray:
    phi = np.zeros(grid.shape)
    for j in range(grid.n):
        if chi[j]:
            phi = phi + chi[j] * tent(grid.coords[j], grid.Lx, origin[j]) / lam
    return np.exp(phi)


def _wnorm(grid: GridSpec, w: np.ndarray, u: np.ndarray) -> float:
    """Weighted L2 norm; vector fields carry the component axis first."""
    return float(np.sqrt(grid.cell_volume * np.sum(np.abs(w * u) ** 2)))


def exp_weighted_check(
    op,
    lam: float,
    chi,
    f,
    cfg: OffDiagConfig = OffDiagConfig(),
    *,
    origin=None,
    adjoint: bool = False,
    history: dict | None = None,
) -> dict:
    """Weighted resolvent bounds with weight ``exp(sum_i chi_i T(x_i) / lambda)``.

    ``T`` is the periodic tent, so the log-gradient of the weight is bounded by
    ``|chi| / lambda`` exactly as for the linear weight ``x . chi / lambda``.  The
    divergence variant uses ``f`` times the unit vector along ``chi`` (``e_1``
    when ``chi = 0``).  ``history`` holds running maxima per ratio; a ratio more
    than twice its running maximum is flagged.
    """
    g = op.grid
    chi = np.asarray(chi, dtype=float).reshape(-1)
    if chi.shape != (g.n,):
        raise ValueError(f"chi must have {g.n} components")
    if np.linalg.norm(chi) > cfg.theta * (1 + 1e-12):
        raise ValueError(f"|chi| = {np.linalg.norm(chi):.3g} exceeds theta = {cfg.theta}")
    origin = (0.0,) * g.n if origin is None else tuple(origin)
    f = np.asarray(f, dtype=complex)
    w = _weight(g, chi, lam, origin)
    nchi = np.linalg.norm(chi)
    e = chi / nchi if nchi > 0 else np.eye(g.n)[0]
    F = e.reshape((g.n,) + (1,) * (g.n + 1)) * f
    u = resolvent(op, lam, f, cfg.solver, adjoint).u
    grad = lam * op.grad_hat(fft(g, u)[None])[0]
    v = resolvent_div(op, lam, F, cfg.solver, adjoint).u
    rhs = _wnorm(g, w, f)
    lhs = {"E": _wnorm(g, w, u), "lam_grad_E": _wnorm(g, w, grad), "lam_E_div": _wnorm(g, w, v)}
    ratios = {k: val / rhs for k, val in lhs.items()}
    flags = []
    if history is not None:
        for k, r in ratios.items():
            if k in history and r > 2 * history[k]:
                flags.append(k)
            history[k] = max(history.get(k, 0.0), r)
    return {"lhs": lhs, "rhs": rhs, "ratios": ratios, "chi": chi.tolist(), "lambda": lam, "flagged": flags}


# -- annuli ------------------------------------------------------------------


def _sources(grid: GridSpec, seed: int, count: int, band: int, ncomp: int = 0) -> np.ndarray:
    """Ensemble of band-limited random fields (``ncomp`` components each when nonzero)."""
    band = min(band, (min(grid.Nx, grid.Nt) - 2) // 2)
    m = max(ncomp, 1)
    out = np.stack([random_band_field(grid, stream_rng(seed, STREAM["offdiag"] + i), band) for i in range(count * m)])
    return out.reshape((count, ncomp) + grid.shape) if ncomp else out


def _apply_variant(op, lam, src, variant, cfg, adjoint):
    """Batched ``E f``, ``lambda grad E f`` or ``lambda E div f`` (component axis after batch)."""
    g = op.grid
    if variant == "div_source":
        return resolvent_div(op, lam, src, cfg.solver, adjoint).u
    u = resolvent(op, lam, src, cfg.solver, adjoint).u
    if variant == "scalar":
        return u
    return lam * op.grad_hat(fft(g, u))


def _masked_norms(grid: GridSpec, U: np.ndarray, masks: np.ndarray, vector: bool) -> np.ndarray:
    """``||U_b||_{L2(mask_b)}`` row-wise; ``masks`` broadcasts against the batch."""
    a2 = np.abs(U) ** 2
    if vector:
        a2 = a2.sum(axis=1)
    return np.sqrt(grid.cell_volume * np.sum(a2 * masks, axis=tuple(range(1, grid.n + 2))))


def annuli_decay(
    op,
    Delta: ParabolicCube,
    lam: float,
    f_kind: str = "scalar",
    cfg: OffDiagConfig = OffDiagConfig(),
    *,
    seed: int = 0,
    adjoint: bool = False,
) -> list[dict]:
    """Per-``k`` norm ratios over the annuli of ``Delta``, both support directions.

    ``inward``: source on the annulus, norm on ``Delta``.  ``outward``: source on
    ``Delta``, norm on the annulus.  Each ratio is normalized by its source norm
    and combined as a root mean square over ``cfg.sources`` band-limited random
    fields, so every grid resolving the band sees the same continuum sources.
    """
    if f_kind not in VARIANTS:
        raise ValueError(f"unknown variant {f_kind!r}")
    g = op.grid
    k_top = Delta.max_k(g)
    k_max = k_top if cfg.k_max is None else cfg.k_max
    if k_max > k_top or k_top < 0:
        raise ValueError(f"annulus 2^{k_max + 1} Delta exceeds the torus (largest admissible k is {k_top})")
    ks = list(range(k_max + 1))
    core = Delta.mask(g)
    ann = np.stack([Delta.annulus(g, k) for k in ks])
    if not core.any() or not ann.any(axis=tuple(range(1, g.n + 2))).all():
        raise ValueError("cube or annulus contains no lattice points; refine the grid or enlarge Delta")
    M = cfg.sources
    vector = f_kind == "div_source"
    f = _sources(g, seed, M, cfg.source_band, g.n if vector else 0)
    nk = len(ks)
    # batch layout: (member, annulus k) inward sources, then one Delta source per member
    if vector:
        src_in = (f[:, None] * ann[None, :, None]).reshape((M * nk, g.n) + g.shape)
        src_out = f * core
    else:
        src_in = (f[:, None] * ann[None]).reshape((M * nk,) + g.shape)
        src_out = f * core
    out = _apply_variant(op, lam, np.concatenate([src_in, src_out]), f_kind, cfg, adjoint)
    vec_out = f_kind == "gradient_source"
    ones = np.ones((1,) + g.shape)
    core_in = _masked_norms(g, out[: M * nk], core[None], vec_out) / _masked_norms(g, src_in, ones, vector)
    out_core = np.repeat(out[M * nk :], nk, axis=0)
    ann_out = _masked_norms(g, out_core, np.tile(ann, (M,) + (1,) * (g.n + 1)), vec_out)
    ann_out = ann_out / np.repeat(_masked_norms(g, src_out, ones, vector), nk)
    # root-mean-square over the ensemble
    n_in = np.sqrt(np.mean(core_in.reshape(M, nk) ** 2, axis=0))
    n_out = np.sqrt(np.mean(ann_out.reshape(M, nk) ** 2, axis=0))
    rows = []
    for i, k in enumerate(ks):
        sep = 2.0**k * Delta.ell / lam
        rows.append({"direction": "inward", "variant": f_kind, "k": k, "separation": sep, "ratio": float(n_in[i])})
        rows.append({"direction": "outward", "variant": f_kind, "k": k, "separation": sep, "ratio": float(n_out[i])})
    return rows


def monotone_decay(ratios, noise_floor: float = 0.05, start: int = 1, abs_floor: float = 0.0) -> bool:
    """Non-increasing beyond index ``start`` up to a relative noise floor.

    Values already below ``abs_floor`` (solver noise) are treated as converged.
    """
    r = list(ratios)
    for a, b in zip(r[start:], r[start + 1 :]):
        if b <= abs_floor:
            continue
        if b > a * (1 + noise_floor):
            return False
    return True


def annuli_fit(rows: list[dict], direction: str | None = None, variant: str | None = None) -> DecayFit:
    sel = [r for r in rows if (direction is None or r["direction"] == direction) and (variant is None or r["variant"] == variant)]
    return fit_decay([(r["separation"], np.log(r["ratio"])) for r in sel])


# -- time-separated sets -----------------------------------------------------


def time_separated_check(
    op,
    sets: SeparatedSets,
    lam: float,
    f,
    cfg: OffDiagConfig = OffDiagConfig(),
    *,
    kind: str = "scalar",
    adjoint: bool = False,
) -> dict:
    """Mass reaching ``F`` from a source supported in ``E``.

    ``kind = "scalar"``: ``iint_F |E f|^2 + |lambda grad E f|^2 / iint_E |f|^2``.
    ``kind = "div"``: ``iint_F |lambda E div f|^2 / iint_E |f|^2`` for vector ``f``.
    """
    g = op.grid
    d = sets.d_time
    if d <= 0:
        raise ValueError("E and F are not time-separated (d = 0)")
    f = np.asarray(f, dtype=complex)
    if kind == "scalar":
        if f.shape != g.shape:
            raise ValueError("scalar source must be a field")
        if np.any(f[~sets.E] != 0):
            raise ValueError("source must be supported in E")
        u = resolvent(op, lam, f, cfg.solver, adjoint).u
        gr = lam * op.grad_hat(fft(g, u)[None])[0]
        num = np.sum((np.abs(u) ** 2 + np.sum(np.abs(gr) ** 2, axis=0))[sets.F])
        den = np.sum(np.abs(f[sets.E]) ** 2)
    elif kind == "div":
        if f.shape != g.vshape:
            raise ValueError("div source must be a vector field")
        if np.any(f[:, ~sets.E] != 0):
            raise ValueError("source must be supported in E")
        v = resolvent_div(op, lam, f, cfg.solver, adjoint).u
        num = np.sum(np.abs(v[sets.F]) ** 2)
        den = np.sum(np.abs(f[:, sets.E]) ** 2)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return {"ratio": float(num / den), "d": d, "lambda": lam, "d_over_lambda": d / lam, "kind": kind}


def time_separated_sweep(op, sets: SeparatedSets, lambdas, f, cfg: OffDiagConfig = OffDiagConfig(), **kw) -> dict:
    """Ratios over ``lambdas`` with the fitted bound ``exp(-d / (c_hat lambda))``."""
    rows = [time_separated_check(op, sets, lam, f, cfg, **kw) for lam in lambdas]
    fit = fit_decay([(r["d_over_lambda"], np.log(r["ratio"])) for r in rows])
    for r in rows:
        r["bound"] = float(np.exp(-r["d_over_lambda"] / fit.c_hat)) if fit.decaying else 1.0
    return {"rows": rows, "fit": fit}


def decay_rows(family: str, lam: float, rows: list[dict], fit: DecayFit | None = None) -> list[dict]:
    """Flatten a decay table to the CSV schema."""
    c = fit.c_hat if fit is not None else float("nan")
    out = []
    for r in rows:
        variant = f"{r.get('variant', r.get('kind', ''))}/{r['direction']}" if "direction" in r else r.get("kind", "")
        out.append(
            {
                "family": family,
                "variant": variant,
                "lambda": r.get("lambda", lam),
                "k_or_d": r["k"] if "k" in r else r["d"],
                "norm_ratio": r["ratio"],
                "fitted_c": c,
            }
        )
    return out
