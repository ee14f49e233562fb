"""Carleson and Tb machinery: ``U_lambda = lambda E_lambda div_x`` applied to the
columns of ``A``, the remainder ``R_lambda``, local test functions and the
Carleson functional over parabolic dyadic cubes.

On the torus the coefficients are periodic and integrable, so ``U_lambda A_i``
is evaluated directly; no cutoff limit is needed once ``D`` is normalized to
have zero mean over the full torus.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicDecomposition, scale_index
from .lattice import GridSpec, fft, ifft, norms
from .littlewood_paley import LambdaGrid
from .offdiag import ParabolicCube
from .resolvent import SolverConfig, resolvent, resolvent_div

__all__ = [
    "TbConfig",
    "CarlesonReport",
    "CARLESON_GRID",
    "directions",
    "U_columns",
    "U_lambda_A",
    "local_average",
    "theta_ab_bounds",
    "R_lambda_apply",
    "cutoff_chi",
    "cutoff_eta",
    "test_function",
    "verify_laa",
    "laa_scaling",
    "carleson_functional",
    "tb_reduction_check",
]

# lambda nodes for the Carleson integral: three decades up to the largest cube side
CARLESON_GRID = LambdaGrid(1e-3, 1.0, per_decade=8)


# -- cutoffs and directions ---------------------------------------------------


def _h(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u, dtype=float)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _plateau(s: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """Smooth, 1 on ``|s| <= inner``, 0 on ``|s| >= outer``."""
    a = np.abs(s)
    num = _h(outer - a)
    return num / (num + _h(a - inner))


def cutoff_chi(s: np.ndarray) -> np.ndarray:
    """Spatial cutoff profile per axis: 1 on ``[-1/2, 1/2]``, supported in ``(-1, 1)``."""
    return _plateau(s, 0.5, 1.0)


def cutoff_eta(s: np.ndarray) -> np.ndarray:
    """Time cutoff: 1 on ``[-1/4, 1/4]``, supported in ``[-1, 1]``."""
    return _plateau(s, 0.25, 1.0)


def directions(n: int, level: int = 1) -> np.ndarray:
    """Unit vectors: axes and diagonals at level 1, each level adds pairwise bisectors."""
    if level < 1:
        raise ValueError("level must be >= 1")
    eye = np.eye(n)
    W = [s * eye[i] for i in range(n) for s in (1, -1)]
    for i in range(n):
        for j in range(i + 1, n):
            for si in (1, -1):
                for sj in (1, -1):
                    W.append((si * eye[i] + sj * eye[j]) / np.sqrt(2))
    W = np.array(W)
    for _ in range(level - 1):
        cos = W @ W.T
        nearest = np.max(np.where(cos < 1 - 1e-12, cos, -np.inf), axis=1)
        new = []
        for a in range(len(W)):
            for b in range(a + 1, len(W)):
                if abs(cos[a, b] - nearest[a]) < 1e-12 and cos[a, b] > -1 + 1e-12:
                    v = W[a] + W[b]
                    new.append(v / np.linalg.norm(v))
        W = np.unique(np.round(np.vstack([W] + new), 14), axis=0)
    return W


@dataclass(frozen=True)
class TbConfig:
    epsilon: float = 0.1
    level: int = 1
    directions: tuple | None = None

    def __post_init__(self):
        if not (0 < self.epsilon < 1):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.directions is not None:
            W = np.asarray(self.directions, dtype=complex)
            if not np.allclose(np.linalg.norm(W, axis=1), 1.0, atol=1e-12):
                raise ValueError("every direction must be a unit vector")

    def W(self, n: int) -> np.ndarray:
        if self.directions is not None:
            return np.asarray(self.directions, dtype=complex)
        return directions(n, self.level).astype(complex)


# -- U_lambda A -------------------------------------------------------------------

_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def U_columns(op, lam: float, M: np.ndarray, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """``lambda E_lambda div_x`` of each column ``M[:, i]``; shape ``(n,) + grid.shape``."""
    cols = np.moveaxis(np.asarray(M, dtype=complex), 1, 0)  # (i, j) -> column i, component j
    return resolvent_div(op, lam, cols, cfg).u


def U_lambda_A(op, lam: float, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """Cached ``U_lambda A`` for the operator's own coefficients (read-only)."""
    per_op = _CACHE.setdefault(op, {})
    key = (float(lam), cfg)
    if key not in per_op:
        U = U_columns(op, lam, op.matrix, cfg)
        U.setflags(write=False)
        per_op[key] = U
    return per_op[key]


# -- local dyadic averaging ---------------------------------------------------------


def _avg_cells(grid: GridSpec, lam: float) -> tuple[int, int] | None:
    """Cells per side of the averaging cube of size ``[lam, 2 lam)``; None below one cell."""
    j = scale_index(grid, lam)
    if j < 0:
        raise ValueError(f"scale {lam:g} exceeds the torus")
    cx = grid.Nx >> j
    if cx < 1:
        return None
    return cx, max(grid.Nt >> (2 * j), 1)


def local_average(grid: GridSpec, block: np.ndarray, cells: tuple[int, int] | None) -> np.ndarray:
    """Dyadic averages inside an aligned block (trailing ``n + 1`` axes)."""
    if cells is None:
        return block
    n = grid.n
    lead = block.shape[: block.ndim - n - 1]
    sizes = block.shape[block.ndim - n - 1 :]
    # averaging cubes never exceed the block they live in
    cx, ct = min(cells[0], sizes[0]), min(cells[1], sizes[n])
    shp = list(lead)
    for s in sizes[:n]:
        shp += [s // cx, cx]
    shp += [sizes[n] // ct, ct]
    B = block.reshape(shp)
    nl = len(lead)
    inner = tuple(nl + 2 * a + 1 for a in range(n + 1))
    m = B.mean(axis=inner, keepdims=True)
    return np.broadcast_to(m, B.shape).reshape(block.shape)


def _average(grid: GridSpec, f: np.ndarray, lam: float) -> np.ndarray:
    return local_average(grid, f, _avg_cells(grid, lam))


# -- averaging bounds and R_lambda ---------------------------------------------------


def theta_ab_bounds(op, lam: float, f=None, cfg: SolverConfig = SolverConfig(), probes: int = 4, seed: int = 0) -> dict:
    """``Gamma`` (cube-normalized local norms) versus ``Gamma'`` (probe norms).

    ``Gamma = sup_{Delta'} |Delta'|^{-1} ||U_lambda A||^2_{L2(Delta')}`` over the
    dyadic cubes used by ``A_lambda``; ``Gamma' = sup_f ||(U_lambda A) A_lambda f||^2``
    over unit probes: ``f`` (if given), random fields and the cube indicators.
    """
    from .operator import random_field
    from .rng import STREAM, stream_rng

    g = op.grid
    U = U_lambda_A(op, lam, cfg)
    q = np.sum(np.abs(U) ** 2, axis=0)
    cells = _avg_cells(g, lam)
    cx, ct = cells if cells is not None else (1, 1)
    dec_means = local_average(g, q, (cx, ct))
    gamma = float(dec_means.max())
    pr = []
    if f is not None:
        pr.append(np.asarray(f, dtype=complex))
    rng = stream_rng(seed, STREAM["carleson"])
    pr += [random_field(g, rng, decay=1.0) for _ in range(probes)]
    values = []
    for p in pr:
        a = _average(g, p, lam)
        values.append(float(np.sum(q * np.abs(a) ** 2) / np.sum(np.abs(p) ** 2)))
    # indicator probes: each averaging cube, A_lambda 1_cube = 1_cube
    ind = float(dec_means.max())
    gamma_prime = max(values + [ind])
    C = gamma_prime / gamma if gamma > 0 else (0.0 if gamma_prime == 0 else np.inf)
    return {
        "lambda": lam,
        "gamma": gamma,
        "gamma_prime": gamma_prime,
        "probe_values": values,
        "indicator_value": ind,
        "C": float(C),
        "ok": gamma <= gamma_prime * (1 + 1e-12) and gamma_prime <= gamma * (1 + 1e-9),
    }


# -- R_lambda -----------------------------------------------------------------------


def R_lambda_apply(op, lam: float, g, cfg: SolverConfig = SolverConfig()) -> dict:
    """``R_lambda (grad g) = U_lambda (A grad g) - (U_lambda A) . A_lambda grad g``."""
    grid = op.grid
    gh = fft(grid, np.asarray(g, dtype=complex))
    G = op.grad_hat(gh[None])[0]
    flux = op.flux(G[None])[0]
    first = resolvent_div(op, lam, flux, cfg).u
    U = U_lambda_A(op, lam, cfg)
    second = np.sum(U * _average(grid, G, lam), axis=0)
    R = first - second
    # ||lambda grad grad g|| and ||lambda^2 dt grad g||
    hess = lam * np.sqrt(sum(norms(grid, G[i])["grad"] ** 2 for i in range(grid.n)))
    dtg = lam**2 * np.sqrt(sum(norms(grid, ifft(grid, grid.dt_symbol * fft(grid, G[i])))["l2"] ** 2 for i in range(grid.n)))
    rn = norms(grid, R)["l2"]
    denom = hess + dtg
    return {
        "R": R,
        "norm": rn,
        "rhs": denom,
        "ratio": rn / denom if denom > 0 else (0.0 if rn == 0 else np.inf),
        "lambda": lam,
    }


# -- Tb test functions ----------------------------------------------------------------


def _offsets(grid: GridSpec, Delta: ParabolicCube) -> list[np.ndarray]:
    out = []
    for c, x0, L in zip(grid.coords, Delta.center, [grid.Lx] * grid.n + [grid.Lt]):
        out.append((c - x0 + L / 2) % L - L / 2)
    return out


def _profile(grid: GridSpec, Delta: ParabolicCube) -> tuple[np.ndarray, list[np.ndarray]]:
    if not Delta.fits(grid, 2.0):
        raise ValueError(f"support of the test function around {Delta} exceeds the torus")
    off = _offsets(grid, Delta)
    ell = Delta.ell
    chi = np.ones(grid.shape)
    for d in off[:-1]:
        chi = chi * cutoff_chi(d / ell)
    chi = chi * cutoff_eta(off[-1] / Delta.time_side(grid))
    phi = [np.broadcast_to(d, grid.shape) for d in off[:-1]]
    return chi, phi


def _L_fields(grid: GridSpec, Delta: ParabolicCube) -> np.ndarray:
    """``L^{e_i}`` for each axis ``i``; ``L^zeta = sum_i conj(zeta_i) L^{e_i}``."""
    chi, phi = _profile(grid, Delta)
    return np.stack([chi * p for p in phi]).astype(complex)


def _cube_volume(grid: GridSpec, Delta: ParabolicCube) -> float:
    return Delta.ell**grid.n * Delta.time_side(grid)


def test_function(op, Delta: ParabolicCube, zeta, epsilon: float, cfg: SolverConfig = SolverConfig()) -> dict:
    """``L = chi_Delta (Phi_Delta . conj(zeta))`` and ``f = E_{eps ell} L``."""
    g = op.grid
    zeta = np.asarray(zeta, dtype=complex)
    if zeta.shape != (g.n,) or not np.isclose(np.linalg.norm(zeta), 1.0):
        raise ValueError("zeta must be a unit vector in C^n")
    Le = _L_fields(g, Delta)
    L = np.tensordot(np.conj(zeta), Le, axes=1)
    f = resolvent(op, epsilon * Delta.ell, L, cfg).u
    return {"L": L, "f_test": f}


def verify_laa(op, Delta: ParabolicCube, zeta, epsilon: float, cfg: SolverConfig = SolverConfig()) -> dict:
    """The three test-function estimates divided by their normalizers."""
    g = op.grid
    tf = test_function(op, Delta, zeta, epsilon, cfg)
    vol = _cube_volume(g, Delta)
    diff = norms(g, tf["f_test"] - tf["L"])
    nf = norms(g, tf["f_test"])
    lhs = {"i": diff["l2"] ** 2, "ii": diff["D_seminorm"] ** 2, "iii": nf["D_seminorm"] ** 2}
    return {
        "lhs": lhs,
        "ratios": {
            "i": lhs["i"] / ((epsilon * Delta.ell) ** 2 * vol),
            "ii": lhs["ii"] / vol,
            "iii": lhs["iii"] / vol,
        },
        "volume": vol,
        "epsilon": epsilon,
    }


def laa_scaling(op, Delta: ParabolicCube, zeta, epsilon: float, cfg: SolverConfig = SolverConfig()) -> dict:
    """Halve ``epsilon``: factor by which ``||f - L||^2`` drops, and stability of (ii), (iii)."""
    a = verify_laa(op, Delta, zeta, epsilon, cfg)
    b = verify_laa(op, Delta, zeta, epsilon / 2, cfg)
    return {
        "factor_i": a["lhs"]["i"] / b["lhs"]["i"],
        "change_ii": b["ratios"]["ii"] / a["ratios"]["ii"],
        "change_iii": b["ratios"]["iii"] / a["ratios"]["iii"],
        "coarse": a,
        "fine": b,
    }


# -- Carleson functional ------------------------------------------------------------------


@dataclass
class CarlesonReport:
    values: dict  # scale j -> array of per-cube values, shape (bx,)*n + (bt,)
    supremum: float
    attaining: tuple  # (j, cube index)
    running_sup: list  # sup over scales <= J, for J = 0..j_max
    tail_share: float
    lambda_window: tuple
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "supremum": self.supremum,
            "attaining": [int(self.attaining[0]), [int(i) for i in self.attaining[1]]],
            "running_sup": list(self.running_sup),
            "per_scale_max": {str(j): float(v.max()) for j, v in self.values.items()},
            "tail_share": self.tail_share,
            "lambda_window": list(self.lambda_window),
            "diagnostics": self.diagnostics,
        }

    def rows(self) -> list[dict]:
        out = []
        for j, v in self.values.items():
            for idx in np.ndindex(v.shape):
                out.append({"scale": j, "cube": "-".join(map(str, idx)), "value": float(v[idx])})
        return out


def _clipped_weights(lg: LambdaGrid, top: float) -> np.ndarray:
    """Log-measure of each node cell inside ``[lambda_min, top]``."""
    e = np.log(lg.edges)
    return np.clip(np.minimum(e[1:], np.log(top)) - e[:-1], 0.0, None)


def _U_stack(op, lg: LambdaGrid, cfg: SolverConfig, columns) -> list[np.ndarray]:
    if columns is None:
        return [U_lambda_A(op, lam, cfg) for lam in lg.values]
    return [U_columns(op, lam, columns, cfg) for lam in lg.values]


def carleson_functional(
    op,
    decomposition: DyadicDecomposition | None = None,
    lambda_grid: LambdaGrid = CARLESON_GRID,
    cfg: SolverConfig = SolverConfig(),
    *,
    columns: np.ndarray | None = None,
) -> CarlesonReport:
    """``|Delta|^{-1} int_0^{l(Delta)} iint_Delta |U_lambda A|^2 dx dt dlambda / lambda`` per dyadic cube.

    Piecewise-constant quadrature on the log-spaced nodes, cells clipped at
    ``l(Delta)``.  Below ``lambda_min`` the lattice gives ``U_lambda A ~ lambda``,
    so that tail is added in closed form and its share reported.  ``columns``
    replaces ``A`` as the source while keeping the operator's resolvent.
    """
    g = op.grid
    dec = decomposition or DyadicDecomposition(g)
    lam = lg_vals = lambda_grid.values
    Us = _U_stack(op, lambda_grid, cfg, columns)
    q = [np.sum(np.abs(U) ** 2, axis=0) for U in Us]
    tail = q[0] * (lambda_grid.lambda_min / lam[0]) ** 2 / 2
    values, run, best, best_at = {}, [], -1.0, None
    tail_tot = main_tot = 0.0
    for j in dec.scales:
        w = _clipped_weights(lambda_grid, dec.side(j))
        acc = sum(wk * qk for wk, qk in zip(w, q) if wk > 0)
        acc = acc + tail
        tail_tot += float(tail.sum())
        main_tot += float(np.sum(acc))
        v = dec.block_means(acc, j).real
        values[j] = v
        idx = np.unravel_index(int(np.argmax(v)), v.shape)
        if v[idx] > best:
            best, best_at = float(v[idx]), (j, tuple(int(i) for i in idx))
        run.append(best)
    top_cut = max(0.0, float(np.log(dec.side(0) / lambda_grid.lambda_max)))
    return CarlesonReport(
        values=values,
        supremum=best,
        attaining=best_at,
        running_sup=run,
        tail_share=tail_tot / main_tot if main_tot > 0 else 0.0,
        lambda_window=(lambda_grid.lambda_min, lambda_grid.lambda_max, lambda_grid.per_decade),
        diagnostics={"uncovered_log_range_above": top_cut, "nodes": int(len(lg_vals))},
    )


# -- Tb reduction ---------------------------------------------------------------------


def _tb_cubes(dec: DyadicDecomposition):
    """Dyadic cubes whose doubled support fits in the torus."""
    g = dec.grid
    for j in dec.scales:
        D0 = ParabolicCube(dec.center(j, (0,) * (g.n + 1)), dec.side(j))
        if D0.fits(g, 2.0):
            yield j


def tb_reduction_check(
    op,
    decomposition: DyadicDecomposition | None = None,
    tb: TbConfig = TbConfig(),
    cfg: SolverConfig = SolverConfig(),
    lambda_grid: LambdaGrid = CARLESON_GRID,
) -> dict:
    """Both sides of the Tb reduction over the dyadic cubes that carry test functions.

    Left: the Carleson supremum.  Right, per direction ``zeta``:
    ``sup_Delta |Delta|^{-1} int_0^{l} iint_Delta |(U_lambda A) . A_lambda grad f^zeta|^2``.
    ``L^zeta`` is linear in ``conj(zeta)``, so one Gram matrix per cube gives
    every direction.  ``C = left / max_zeta right``; the sum over ``W`` is
    reported as well.
    """
    g = op.grid
    n = g.n
    dec = decomposition or DyadicDecomposition(g)
    W = tb.W(n)
    scales = list(_tb_cubes(dec))
    if not scales:
        raise ValueError("no dyadic scale admits test functions on this torus")
    lam = lambda_grid.values
    Us = [U_lambda_A(op, lv, cfg) for lv in lam]
    left = carleson_functional(op, DyadicDecomposition(g, j_max=dec.j_max), lambda_grid, cfg)
    left_sup = max(float(left.values[j].max()) for j in scales)
    per_zeta = np.zeros(len(W))
    at = [None] * len(W)
    cells = [_avg_cells(g, lv) for lv in lam]
    for j in scales:
        w = _clipped_weights(lambda_grid, dec.side(j))
        cubes = list(dec.cubes(j))
        Ls = []
        for idx in cubes:
            Ls.append(_L_fields(g, ParabolicCube(dec.center(j, idx), dec.side(j))))
        Ls = np.concatenate(Ls)  # (cubes * n,) + shape
        F = resolvent(op, tb.epsilon * dec.side(j), Ls, cfg).u
        grads = op.grad_hat(fft(g, F)).reshape((len(cubes), n, n) + g.shape)  # cube, e_i, d_m
        vol = dec.volume(j)
        for c, idx in enumerate(cubes):
            sl = (slice(None),) + dec.slices(j, idx)
            G = grads[c][(slice(None),) + sl]  # (i, m) + block
            Gram = np.zeros((n, n), dtype=complex)
            for k, wk in enumerate(w):
                if wk <= 0:
                    continue
                Ub = Us[k][sl]  # (m,) + block
                V = np.einsum("m...,im...->i...", Ub, local_average(g, G, cells[k]))
                Vf = V.reshape(n, -1)
                Gram += wk * g.cell_volume * (Vf @ np.conj(Vf).T)
            Gram /= vol
            a = np.conj(W)
            vals = np.einsum("zi,ik,zk->z", a, Gram, np.conj(a)).real
            better = vals > per_zeta
            per_zeta = np.where(better, vals, per_zeta)
            for z in np.nonzero(better)[0]:
                at[z] = (j, idx)
    right_max = float(per_zeta.max())
    zbest = int(np.argmax(per_zeta))
    C = left_sup / right_max if right_max > 0 else (0.0 if left_sup == 0 else np.inf)
    return {
        "left": left_sup,
        "right_max": right_max,
        "right_sum": float(per_zeta.sum()),
        "C": float(C),
        "per_direction": per_zeta.tolist(),
        "directions": [[complex(z).real for z in v] for v in W],
        "attaining_direction": [complex(z).real for z in W[zbest]],
        "attaining_cube": at[zbest],
        "scales": scales,
        "epsilon": tb.epsilon,
        "W_size": int(len(W)),
    }
