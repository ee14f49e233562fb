"""Verification suites run by the orchestrator.

Each suite maps an :class:`ExperimentConfig` to a plain dict::

    {"checks": [...], "measurements": {...}, "rows": {...}, "plot": {...}}

Every asserted inequality appears in ``checks`` with its lhs, rhs, tolerance
and verdict.  Nothing here reads the clock, so results depend only on the
configuration.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .carleson import TbConfig, carleson_functional, laa_scaling, tb_reduction_check
from .coefficients import GeneratorSpec, generate
from .config import ExperimentConfig
from .lattice import GridSpec, fft, ifft
from .littlewood_paley import KEE_GRID, LambdaGrid, lp_samples, verify_kee, verify_lp_suite
from .offdiag import VARIANTS, OffDiagConfig, ParabolicCube, annuli_decay, annuli_fit, decay_rows
from .operator import ParabolicOperator, accretivity_report, random_field
from .resolvent import NonConvergence, solve_shifted
from .rng import STREAM, stream_rng
from .sqrt import (
    QuadratureTruncation,
    SampleSpec,
    kato_ratio_sweep,
    kato_symbol_ratio_sq,
    sqrt_apply,
    sqrt_dense_oracle,
    sqrt_symbol,
)

__all__ = ["check", "run_suite", "SUITE_FUNCTIONS", "ORACLE_GRID", "SIGMAS", "PINNED_SLOPES", "companion_grid", "resolved_grid", "heat_checks", "oracle_checks"]

RELATIONS = ("<=", ">=", "<", ">", "rel")

# shifts for the contraction bound: real, moderate, and nearly imaginary
SIGMAS = (1.0, 2 + 3j, 0.1 + 10j)
ORACLE_GRID = GridSpec(n=2, Nx=8, Nt=8)

# A = I, scalar inward annuli fit; pinned from the first run, keyed by (n, Nx, Nt)
PINNED_SLOPES = {(2, 32, 32): -0.14001}
PIN_TOL = 0.10


def check(name: str, lhs, rhs, relation: str = "<=", tolerance: float = 0.0) -> dict:
    """Record one inequality.

    ``<=``: ``lhs <= rhs + tolerance``.  ``>=``: ``lhs >= rhs - tolerance``.
    ``<`` and ``>`` are strict and ignore the tolerance.
    ``rel``: ``|lhs / rhs - 1| <= tolerance``.  NaN never passes.
    """
    if relation not in RELATIONS:
        raise ValueError(f"unknown relation {relation!r}")
    lhs, rhs, tolerance = float(lhs), float(rhs), float(tolerance)
    if relation == "<=":
        ok = lhs <= rhs + tolerance
    elif relation == ">=":
        ok = lhs >= rhs - tolerance
    elif relation == "<":
        ok = lhs < rhs
    elif relation == ">":
        ok = lhs > rhs
    else:
        ok = rhs != 0 and abs(lhs / rhs - 1.0) <= tolerance
    ok = bool(ok) and not (math.isnan(lhs) or math.isnan(rhs))
    return {"name": name, "lhs": lhs, "rhs": rhs, "relation": relation, "tolerance": tolerance, "verdict": "pass" if ok else "fail"}


def companion_grid(grid: GridSpec) -> GridSpec:
    """The other member of the refinement pair: Nx doubled below 32, halved from 32 on; Nt fixed."""
    Nx = grid.Nx * 2 if grid.Nx < 32 else grid.Nx // 2
    return GridSpec(grid.n, Nx, grid.Nt, grid.Lx, grid.Lt)


def _pair(grid: GridSpec) -> tuple[GridSpec, GridSpec]:
    other = companion_grid(grid)
    return (grid, other) if grid.Nx < other.Nx else (other, grid)


def resolved_grid(grid: GridSpec, min_nx: int = 32) -> GridSpec:
    """``grid`` with Nx raised to ``min_nx`` (Nt at least as large) for suites whose cubes need it."""
    if grid.Nx >= min_nx:
        return grid
    return GridSpec(grid.n, min_nx, max(grid.Nt, min_nx), grid.Lx, grid.Lt)


def _operator(cfg: ExperimentConfig, grid: GridSpec | None = None, adjoint: bool = False) -> ParabolicOperator:
    return ParabolicOperator(generate(cfg.coefficients, grid or cfg.grid), adjoint=adjoint)


def _result(checks=(), measurements=None, rows=None, plot=None) -> dict:
    return {"checks": list(checks), "measurements": measurements or {}, "rows": rows or {}, "plot": plot or {}}


def _rel_l2(a: np.ndarray, b: np.ndarray) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a))


# -- suites -------------------------------------------------------------------------


def suite_accretivity(cfg: ExperimentConfig) -> dict:
    checks, meas = [], {}
    for tag, adjoint in (("H", False), ("H*", True)):
        rep = accretivity_report(_operator(cfg, adjoint=adjoint), sample_count=100, seed=cfg.seed)
        meas[tag] = rep
        checks.append(check(f"{tag}: Re<Hu,u> - c1|grad u|^2 (energy-normalized)", rep["min_margin"], 0.0, ">=", 1e-8))
        checks.append(check(f"{tag}: D-block real pairing (relative)", rep["max_D_real_rel"], 0.0, "<=", 1e-12))
    return _result(checks, meas)


def suite_resolvent(cfg: ExperimentConfig) -> dict:
    g = cfg.grid
    rng = stream_rng(cfg.seed, STREAM["resolvent"])
    F = np.stack([random_field(g, rng, decay=1.0) for _ in range(20)])
    nf = np.linalg.norm(F.reshape(len(F), -1), axis=1)
    bound = 1 + 10 * cfg.solver.rel_tol
    checks, meas = [], {}
    for tag, adjoint in (("H", False), ("H*", True)):
        op = _operator(cfg, adjoint=adjoint)
        for s in SIGMAS:
            res = solve_shifted(op, s, F, cfg.solver)
            nu = np.linalg.norm(res.u.reshape(len(F), -1), axis=1)
            worst = float(np.max(complex(s).real * nu / nf))
            key = f"{tag} sigma={complex(s).real:g}{complex(s).imag:+g}i"
            meas[key] = {"max_scaled_norm": worst, "residual": float(res.residual), "iterations": int(res.iterations)}
            checks.append(check(f"{key}: Re(sigma) |(sigma+H)^-1 f| / |f|", worst, bound, "<="))
    return _result(checks, meas)


def _symbol_error(grid: GridSpec, quad, solver, seed: int) -> tuple[float, np.ndarray]:
    op = ParabolicOperator(generate(GeneratorSpec("identity"), grid))
    rng = stream_rng(seed, STREAM["sqrt"])
    U = np.stack([random_field(grid, rng, decay=2.0) for _ in range(4)])
    exact = ifft(grid, fft(grid, U) * sqrt_symbol(grid))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureTruncation)
        R = sqrt_apply(op, U, quad, solver)
    return _rel_l2(R, exact), R


def heat_checks(cfg: ExperimentConfig) -> tuple[list, dict]:
    """Quadrature root of the heat operator against its closed-form symbol, plus node doubling."""
    quad, solver = cfg.quadrature, cfg.solver
    err, R1 = _symbol_error(cfg.grid, quad, solver, cfg.seed)
    _, R2 = _symbol_error(cfg.grid, quad.refined(), solver, cfg.seed)
    change = _rel_l2(R2, R1)
    checks = [
        check("heat: |sqrt_apply u - symbol u| / |symbol u|", err, 1e-6, "<="),
        check("heat: node-doubling change", change, 1e-7, "<="),
    ]
    return checks, {"relative_error": err, "node_doubling_change": change, "nodes": quad.nodes}


def oracle_checks(cfg: ExperimentConfig, grid: GridSpec = ORACLE_GRID) -> tuple[list, dict]:
    """Quadrature root against the dense Schur root of the configured operator on a small grid."""
    op = _operator(cfg, grid)
    O = sqrt_dense_oracle(op)
    Hm = op.to_dense()
    resid = float(np.linalg.norm(O @ O - Hm, 2) / np.linalg.norm(Hm, 2))
    rng = stream_rng(cfg.seed, STREAM["sqrt"] + 1)
    U = np.stack([random_field(grid, rng, decay=1.0) for _ in range(10)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureTruncation)
        R = sqrt_apply(op, U, cfg.quadrature, cfg.solver)
    errs = []
    for u, r in zip(U, R):
        ou = O @ u.ravel()
        errs.append(float(np.linalg.norm(r.ravel() - ou) / np.linalg.norm(ou)))
    checks = [
        check("oracle: |O^2 - H| / |H|", resid, 1e-10, "<="),
        check("oracle: max |sqrt_apply u - O u| / |O u|", max(errs), 1e-3, "<="),
    ]
    return checks, {"grid": [grid.n, grid.Nx, grid.Nt], "schur_residual": resid, "errors": errs}


def suite_sqrt_oracle(cfg: ExperimentConfig) -> dict:
    c1, heat = heat_checks(cfg)
    c2, oracle = oracle_checks(cfg)
    return _result(c1 + c2, {"heat": heat, "oracle": oracle})


KATO_BOUNDS = (2.0**-1.5, 1.0)


def suite_kato(cfg: ExperimentConfig) -> dict:
    checks, meas, plot = [], {}, {}
    r = kato_symbol_ratio_sq(cfg.grid)
    meas["symbol"] = {"min": float(r.min()), "max": float(r.max()), "modes": int(r.size)}
    checks.append(check("A=I squared symbol ratio >= 2^-3/2", r.min(), KATO_BOUNDS[0], ">=", 1e-12))
    checks.append(check("A=I squared symbol ratio <= 1", r.max(), KATO_BOUNDS[1], "<=", 1e-12))
    spec = SampleSpec(count=50, seed=cfg.seed)
    coarse, fine = _pair(cfg.grid)
    for tag, adjoint in (("H", False), ("H*", True)):
        reps = {}
        for grid in (coarse, fine):
            reps[grid.Nx] = kato_ratio_sweep(_operator(cfg, grid, adjoint), spec)
        rc, rf = reps[coarse.Nx], reps[fine.Nx]
        meas[tag] = {str(k): {"min": v.min, "max": v.max, "boundary_share": v.diagnostics.get("boundary_share")} for k, v in reps.items()}
        plot[f"kato_ratios/{tag}/Nx={cfg.grid.Nx}"] = {"x": list(range(spec.count)), "y": reps[cfg.grid.Nx].ratios}
        for stat in ("min", "max"):
            a, b = getattr(rc, stat), getattr(rf, stat)
            checks.append(check(f"{tag}: {stat} ratio positive and finite", b if math.isfinite(b) else float("nan"), 0.0, ">="))
            checks.append(check(f"{tag}: {stat} ratio, Nx {fine.Nx} vs {coarse.Nx}", b, a, "rel", 0.20))
    return _result(checks, meas, plot=plot)


def suite_lp(cfg: ExperimentConfig) -> dict:
    checks, meas = [], {}
    coarse, fine = _pair(cfg.grid)
    keys = ("square_function", "high_pass", "averaging")
    consts = {}
    for grid in (coarse, fine):
        F = lp_samples(grid, cfg.seed)
        lg = LambdaGrid.default(grid)
        for label, lgrid in (("base", lg), ("doubled", lg.refined())):
            rep = verify_lp_suite(F, grid, lgrid)
            consts[(grid.Nx, label)] = rep.constants
    meas["constants"] = {f"Nx={nx}/{lab}": v for (nx, lab), v in consts.items()}
    base = consts[(cfg.grid.Nx, "base")]
    for k in keys:
        checks.append(check(f"{k}: finite", base[k] if math.isfinite(base[k]) else float("nan"), 0.0, ">="))
        for (nx, lab), other in (((cfg.grid.Nx, "doubled"), "lambda-grid doubling"), ((companion_grid(cfg.grid).Nx, "base"), "lattice refinement")):
            v = consts[(nx, lab)][k]
            ratio = max(v, base[k]) / min(v, base[k]) if min(v, base[k]) > 0 else float("nan")
            checks.append(check(f"{k}: change under {other}", ratio, 2.0, "<="))

    kee = {}
    for grid in (coarse, fine):
        op = _operator(cfg, grid)
        F = lp_samples(grid, cfg.seed)
        for label, lgrid in (("base", KEE_GRID), ("doubled", KEE_GRID.refined())):
            kee[(grid.Nx, label)] = verify_kee(op, F, lgrid)
    meas["kee"] = {f"Nx={nx}/{lab}": {k: v[k] for k in ("max_ratio", "identity_discrepancy", "truncation")} for (nx, lab), v in kee.items()}
    kb = kee[(cfg.grid.Nx, "base")]["max_ratio"]
    for (nx, lab), other in (((cfg.grid.Nx, "doubled"), "lambda-grid doubling"), ((companion_grid(cfg.grid).Nx, "base"), "lattice refinement")):
        v = kee[(nx, lab)]["max_ratio"]
        checks.append(check(f"kee: change under {other}", max(v, kb) / min(v, kb), 2.0, "<="))
    worst = max(v["identity_discrepancy"] for v in kee.values())
    checks.append(check("kee: identity cross-check (units of rel_tol bound)", worst, 10.0, "<="))
    return _result(checks, meas)


def offdiag_setup(grid: GridSpec) -> tuple[ParabolicCube, float]:
    """Cube at the torus center with side Lx/16 and lambda = l/8."""
    center = tuple([grid.Lx / 2] * grid.n + [grid.Lt / 2])
    Delta = ParabolicCube(center, grid.Lx / 16)
    return Delta, Delta.ell / 8


def suite_offdiag(cfg: ExperimentConfig) -> dict:
    # Delta has side Lx/16 and must span at least two cells
    g = resolved_grid(cfg.grid)
    op = _operator(cfg, g)
    Delta, lam = offdiag_setup(g)
    ocfg = OffDiagConfig(solver=cfg.solver)
    fam = cfg.coefficients.family
    checks, meas, csv_rows, plot = [], {}, [], {}
    for variant in VARIANTS:
        rows = annuli_decay(op, Delta, lam, variant, ocfg, seed=cfg.seed)
        for direction in ("inward", "outward"):
            sel = [r for r in rows if r["direction"] == direction]
            ratios = [r["ratio"] for r in sel]
            fit = annuli_fit(rows, direction, variant)
            key = f"{variant}/{direction}"
            meas[key] = {"ratios": ratios, "fit": fit.to_dict()}
            plot[f"decay/{key}"] = {"x": [r["separation"] for r in sel], "y": [math.log(v) for v in ratios]}
            csv_rows.extend(decay_rows(fam, lam, sel, fit))
            rises = [b / a - 1 for a, b in zip(ratios, ratios[1:])]
            worst = max(rises) if rises else 0.0
            checks.append(check(f"{key}: largest relative rise of annulus norm in k", worst, ocfg.noise_floor, "<="))
            if direction == "inward":
                checks.append(check(f"{key}: fitted slope", fit.slope, 0.0, "<"))
                if fam == "identity" and variant == "scalar":
                    checks.append(check(f"{key}: r^2 of log-linear fit", fit.r2, 0.9, ">="))
                    pin = PINNED_SLOPES.get((g.n, g.Nx, g.Nt))
                    if pin is not None:
                        checks.append(check(f"{key}: slope against pinned value", fit.slope, pin, "rel", PIN_TOL))
    meas["setup"] = {"center": list(Delta.center), "ell": Delta.ell, "lambda": lam, "grid": [g.n, g.Nx, g.Nt]}
    return _result(checks, meas, {"decay": csv_rows}, plot)


CONSTANT_FAMILIES = ("identity", "constant_antisym")


def _carleson(cfg: ExperimentConfig, grid: GridSpec, alpha: float = 1.0):
    coeffs = generate(cfg.coefficients, grid)
    if alpha != 1.0:
        coeffs = coeffs.scaled_D(alpha)
    return carleson_functional(ParabolicOperator(coeffs), cfg=cfg.solver)


def suite_carleson(cfg: ExperimentConfig) -> dict:
    rep = _carleson(cfg, cfg.grid)
    meas = {"functional": rep.to_dict()}
    rows = {"cubes": rep.rows()}
    plot = {"carleson/running_sup": {"x": list(range(len(rep.running_sup))), "y": rep.running_sup}}
    checks = []
    if cfg.coefficients.family in CONSTANT_FAMILIES:
        checks.append(check("constant coefficients: Carleson supremum", rep.supremum, 0.0, "<=", 1e-12))
        return _result(checks, meas, rows, plot)
    # two-point alpha^2 check in the small-alpha regime
    s_half = _carleson(cfg, cfg.grid, 0.5).supremum
    s_quarter = _carleson(cfg, cfg.grid, 0.25).supremum
    meas["alpha"] = {"1": rep.supremum, "0.5": s_half, "0.25": s_quarter}
    checks.append(check("sup(D/2) / sup(D/4) against 4", s_half / s_quarter, 4.0, "rel", 0.05))
    # with the resolvent held fixed the functional is exactly quadratic
    op = _operator(cfg)
    fixed = carleson_functional(op, cfg=cfg.solver, columns=0.5 * (op.coeffs.A - _eye(cfg.grid)) + _eye(cfg.grid)).supremum
    meas["alpha"]["fixed_resolvent_ratio"] = fixed / rep.supremum if rep.supremum > 0 else float("nan")
    other = _carleson(cfg, companion_grid(cfg.grid)).supremum
    meas["refinement"] = {f"Nx={cfg.grid.Nx}": rep.supremum, f"Nx={companion_grid(cfg.grid).Nx}": other}
    checks.append(check(f"supremum, Nx {companion_grid(cfg.grid).Nx} vs {cfg.grid.Nx}", other, rep.supremum, "rel", 0.20))
    return _result(checks, meas, rows, plot)


def _eye(grid: GridSpec) -> np.ndarray:
    E = np.zeros((grid.n, grid.n) + grid.shape, dtype=complex)
    for i in range(grid.n):
        E[i, i] = 1.0
    return E


TB_FACTOR = (4.0, 0.30)


def tb_cube(grid: GridSpec) -> ParabolicCube:
    return ParabolicCube(tuple([grid.Lx / 2] * grid.n + [grid.Lt / 2]), grid.Lx / 2)


def suite_tb(cfg: ExperimentConfig) -> dict:
    # the halved test-function scale eps l / 2 must not sink far below a cell
    g = resolved_grid(cfg.grid)
    op = _operator(cfg, g)
    zeta = np.eye(g.n)[0]
    sc = laa_scaling(op, tb_cube(g), zeta, 0.1, cfg.solver)
    meas = {"laa": {k: sc[k] for k in ("factor_i", "change_ii", "change_iii")}, "grid": [g.n, g.Nx, g.Nt]}
    checks = [
        check("(i) drop factor under epsilon halving", sc["factor_i"], TB_FACTOR[0], "rel", TB_FACTOR[1]),
        check("(ii) growth under epsilon halving", sc["change_ii"], 2.0, "<="),
        check("(iii) growth under epsilon halving", sc["change_iii"], 2.0, "<="),
    ]
    red = {}
    for level in (1, 2):
        r = tb_reduction_check(op, tb=TbConfig(level=level), cfg=cfg.solver)
        red[level] = r
        meas[f"reduction/level={level}"] = {k: r[k] for k in ("left", "right_max", "right_sum", "C", "W_size")}
    c1, c2 = red[1]["C"], red[2]["C"]
    if red[1]["left"] == 0 and red[2]["left"] == 0:
        checks.append(check("C under doubling |W| (both sides vanish)", red[2]["left"], 0.0, "<=", 1e-12))
    else:
        checks.append(check(f"C, |W|={red[2]['W_size']} vs {red[1]['W_size']}", c2, c1, "rel", 0.20))
    return _result(checks, meas)


SUITE_FUNCTIONS = {
    "accretivity": suite_accretivity,
    "resolvent": suite_resolvent,
    "sqrt-oracle": suite_sqrt_oracle,
    "kato": suite_kato,
    "lp": suite_lp,
    "offdiag": suite_offdiag,
    "carleson": suite_carleson,
    "tb": suite_tb,
}


def run_suite(name: str, cfg: ExperimentConfig) -> dict:
    """Run one suite; any exception becomes a recorded failure."""
    try:
        out = SUITE_FUNCTIONS[name](cfg)
        error = None
    except (NonConvergence, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        out = _result()
        error = {"type": type(exc).__name__, "message": str(exc)}
    checks = out["checks"]
    passed = error is None and all(c["verdict"] == "pass" for c in checks)
    return {"name": name, "passed": passed, "error": error, **out}
