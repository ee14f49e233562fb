"""Shifted solves ``(alpha + beta H) u = f`` and the scaled resolvents ``E_lambda``.

The solver is restarted GMRES with right preconditioning by the exact inverse of
the averaged constant-coefficient operator, applied spectrally.  It runs on a
batch of right-hand sides at once; every batch member has its own Krylov space
and all reductions are row-wise, so a member's result does not depend on what
else is in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import GridSpec, fft, ifft, norms
from .operator import ParabolicOperator

__all__ = [
    "NonConvergence",
    "SolverConfig",
    "ResolventResult",
    "gmres_batch",
    "solve_shifted",
    "resolvent",
    "resolvent_div",
    "resolvent_halfdt",
    "resolvent_report",
]


class NonConvergence(RuntimeError):
    """GMRES stagnated before reaching the requested relative residual."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-10
    max_iter: int = 600
    restart: int = 60
    preconditioner: str = "constant_coefficient"

    def __post_init__(self):
        if not (0 < self.rel_tol <= 1e-4):
            raise ValueError(f"rel_tol must lie in (0, 1e-4], got {self.rel_tol}")
        if self.max_iter < 1 or self.restart < 1:
            raise ValueError("max_iter and restart must be >= 1")
        if self.preconditioner not in ("constant_coefficient", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class ResolventResult:
    u: np.ndarray
    residual: float
    iterations: int
    norms: dict = field(default_factory=dict)


# rows per GMRES batch, sized so the Krylov basis stays cache friendly
_CHUNK_DOF = 32768


def _rownorm(X: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((X * np.conj(X)).real, axis=-1))


def _rowdot(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Row-wise ``<Y, X> = sum conj(X) Y`` for 2-D arrays."""
    return np.sum(np.conj(X) * Y, axis=-1)


def gmres_batch(matvec, precond, B: np.ndarray, rel_tol: float, max_iter: int, restart: int):
    """Right-preconditioned restarted GMRES on the rows of ``B`` (shape ``(b, N)``).

    Orthogonalization is classical Gram-Schmidt with one reorthogonalization
    pass.  Returns ``(X, relative_residuals, iterations)``; residuals are
    recomputed from the final iterate, not taken from the Arnoldi estimate.
    """
    nb, N = B.shape
    X = np.zeros_like(B)
    bnorm = _rownorm(B)
    bnorm_safe = np.where(bnorm > 0, bnorm, 1.0)
    R = B.copy()
    res = _rownorm(R) / bnorm_safe
    its = 0
    while its < max_iter:
        active = res > rel_tol
        if not active.any():
            break
        m = min(restart, max_iter - its)
        beta = _rownorm(R)
        V = np.zeros((nb, m + 1, N), dtype=complex)
        Hh = np.zeros((nb, m + 1, m), dtype=complex)
        cs = np.zeros((nb, m), dtype=complex)
        sn = np.zeros((nb, m), dtype=complex)
        g = np.zeros((nb, m + 1), dtype=complex)
        g[:, 0] = beta
        V[:, 0] = R / np.where(beta > 0, beta, 1.0)[:, None]
        kdone = np.full(nb, m)
        live = active.copy()
        steps = 0
        for j in range(m):
            w = matvec(precond(V[:, j]))
            Vj = V[:, : j + 1]
            VjT = np.swapaxes(Vj, 1, 2)
            h = np.conj(Vj @ np.conj(w)[:, :, None])
            w = w - (VjT @ h)[:, :, 0]
            h2 = np.conj(Vj @ np.conj(w)[:, :, None])
            w = w - (VjT @ h2)[:, :, 0]
            h, h2 = h[:, :, 0], h2[:, :, 0]
            Hh[:, : j + 1, j] = h + h2
            hn = _rownorm(w)
            Hh[:, j + 1, j] = hn
            V[:, j + 1] = w / np.where(hn > 0, hn, 1.0)[:, None]
            for i in range(j):
                a = Hh[:, i, j].copy()
                b = Hh[:, i + 1, j].copy()
                Hh[:, i, j] = np.conj(cs[:, i]) * a + np.conj(sn[:, i]) * b
                Hh[:, i + 1, j] = -sn[:, i] * a + cs[:, i] * b
            a = Hh[:, j, j].copy()
            b = Hh[:, j + 1, j].copy()
            r = np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
            rs = np.where(r > 0, r, 1.0)
            cs[:, j] = np.where(r > 0, a / rs, 1.0)
            sn[:, j] = np.where(r > 0, b / rs, 0.0)
            Hh[:, j, j] = r
            Hh[:, j + 1, j] = 0.0
            g[:, j + 1] = -sn[:, j] * g[:, j]
            g[:, j] = np.conj(cs[:, j]) * g[:, j]
            est = np.abs(g[:, j + 1]) / bnorm_safe
            newly = live & ((est <= 0.5 * rel_tol) | (hn == 0))
            kdone[newly] = j + 1
            live &= ~newly
            steps = j + 1
            if not live.any():
                break
        its += steps
        # back-substitution per row with its own Krylov dimension
        for b_ in range(nb):
            if not active[b_]:
                continue
            k = int(min(kdone[b_], steps))
            y = np.linalg.solve(np.triu(Hh[b_, :k, :k]), g[b_, :k])
            X[b_] += precond((y @ V[b_, :k])[None])[0]
        R = B - matvec(X)
        res = _rownorm(R) / bnorm_safe
    return X, res, its


def _shifted_system(op: ParabolicOperator, alpha: complex, beta: float, cfg: SolverConfig):
    """Matvec and preconditioner acting on flattened spectra."""
    shape = op.grid.shape

    def matvec(X):
        Xh = X.reshape((-1,) + shape)
        out = alpha * Xh + beta * op.apply_hat(Xh)
        return out.reshape(X.shape[0], -1)

    if cfg.preconditioner == "constant_coefficient":
        inv = (1.0 / (alpha + beta * op.constant_symbol())).ravel()

        def precond(X):
            return X * inv

    else:

        def precond(X):
            return X

    return matvec, precond


def _solve(op, alpha, beta, f, cfg: SolverConfig) -> ResolventResult:
    """Solve in Fourier space; relative residuals are unchanged by Parseval."""
    g = op.grid
    F = np.asarray(f, dtype=complex)
    Fh = fft(g, F.reshape((-1,) + g.shape)).reshape(-1, g.size)
    # constants are invariant (H 1 = 0, range of H is mean-free): solve them exactly,
    # otherwise roundoff on the DC mode is amplified by beta * |H|
    dc = Fh[:, 0].copy()
    Fh[:, 0] = 0.0
    matvec, precond = _shifted_system(op, alpha, beta, cfg)
    Xh = np.empty_like(Fh)
    res = np.zeros(Fh.shape[0])
    its = 0
    # chunking bounds the Krylov basis memory; rows are independent either way
    chunk = max(1, _CHUNK_DOF // g.size)
    for s in range(0, Fh.shape[0], chunk):
        sl = slice(s, s + chunk)
        Xh[sl], res[sl], it = gmres_batch(matvec, precond, Fh[sl], cfg.rel_tol, cfg.max_iter, cfg.restart)
        its = max(its, it)
    Xh[:, 0] = dc / alpha
    U = ifft(g, Xh.reshape((-1,) + g.shape)).reshape(F.shape)
    result = ResolventResult(U, float(res.max()) if res.size else 0.0, its)
    if res.size and res.max() > cfg.rel_tol:
        raise NonConvergence(
            f"GMRES residual {res.max():.3e} > {cfg.rel_tol:.1e} after {its} iterations ({op})", result
        )
    return result


def solve_shifted(op: ParabolicOperator, sigma: complex, f, cfg: SolverConfig = SolverConfig()) -> ResolventResult:
    """Solve ``(sigma + H) u = f`` for ``Re sigma > 0``."""
    sigma = complex(sigma)
    if sigma.real <= 0:
        raise ValueError("sigma must have positive real part")
    return _solve(op, sigma, 1.0, f, cfg)


def _target(op: ParabolicOperator, adjoint: bool) -> ParabolicOperator:
    return op.H_star if adjoint else op


def resolvent_report(grid: GridSpec, lam: float, u: np.ndarray) -> dict:
    n = norms(grid, u)
    return {"l2": n["l2"], "lam_grad": lam * n["grad"], "lam_half_dt": lam * n["half_dt"]}


def resolvent(op, lam: float, f, cfg: SolverConfig = SolverConfig(), adjoint: bool = False) -> ResolventResult:
    """``E_lambda f = (1 + lambda^2 H)^{-1} f`` (``E*_lambda`` when ``adjoint``)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    res = _solve(_target(op, adjoint), 1.0, lam**2, f, cfg)
    if res.u.shape == op.grid.shape:
        res.norms = resolvent_report(op.grid, lam, res.u)
    return res


def resolvent_div(op, lam: float, F, cfg: SolverConfig = SolverConfig(), adjoint: bool = False) -> ResolventResult:
    """``lambda E_lambda div_x F`` for a vector field (or batch of them, shape ``(b, n) + shape``)."""
    g = op.grid
    F = np.asarray(F, dtype=complex)
    single = F.shape == g.vshape
    Fb = F.reshape((-1,) + g.vshape)
    src = lam * ifft(g, op.div_hat(Fb))
    res = resolvent(op, lam, src[0] if single else src, cfg, adjoint)
    if single:
        n = norms(g, res.u)
        res.norms = {"lam_E_div": n["l2"], "lam2_D_E_div": lam * n["D_seminorm"]}
    return res


def resolvent_halfdt(op, lam: float, f, cfg: SolverConfig = SolverConfig(), adjoint: bool = False) -> ResolventResult:
    """``lambda E_lambda D_t^{1/2} f``."""
    g = op.grid
    src = lam * ifft(g, fft(g, np.asarray(f, dtype=complex)) * g.half_dt_symbol)
    res = resolvent(op, lam, src, cfg, adjoint)
    if res.u.shape == g.shape:
        n = norms(g, res.u)
        res.norms = {"lam_E_halfdt": n["l2"], "lam2_D_E_halfdt": lam * n["D_seminorm"]}
    return res
