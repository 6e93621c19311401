"""Part-learning optimizers: one-shot Hungarian, IPFP, Iterative
Soft-Assign (ISA) and Generalized Forward-Backward (GFB).

Every solver takes an initial matching matrix and a :class:`CostContext`
and returns the final matrix together with a :class:`SolverReport`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import MatchingMatrix, constraint_residual, in_M
from .cost import (CostContext, cost_matrix, gradient_Jrho, objective_J,
                   objective_Jrho)
from .projections import project_halfspace_sum, project_matching, project_simplex

CONVERGED = "converged"
MAX_ITER = "max_iter"
EARLY_STOP = "early_stop"

SOLVERS = ("hungarian", "ipfp", "isa", "gfb", "gfb-rho")


@dataclass
class SolverReport:
    """Per-iteration trace of one solver run.

    ``objective_trace`` holds J (to maximize) for Hungarian, IPFP and ISA,
    and J_rho (to minimize) for GFB.  ``wall_time`` is the only field that
    varies between identical runs.
    """

    solver: str
    objective_trace: list = field(default_factory=list)
    constraint_residuals: list = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0
    stop_reason: str = MAX_ITER
    params: dict = field(default_factory=dict)
    rounded: Optional[MatchingMatrix] = None

    def record(self, objective: float, residual: float):
        self.objective_trace.append(float(objective))
        self.constraint_residuals.append(float(residual))
        self.iterations = len(self.objective_trace)

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "solver": self.solver,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "params": self.params,
            "objective_trace": self.objective_trace,
            "constraint_residuals": self.constraint_residuals,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


@dataclass(frozen=True)
class IsaSchedule:
    """Annealing schedule of ISA.  ``None`` fields are filled from the
    problem: ``beta0 = beta0_scale / max|C(M0)|`` and ``inner_tol = 1e-4 P n+``."""

    beta0: Optional[float] = None
    beta0_scale: float = 3.0
    beta_rate: float = 1.05
    inner_tol: Optional[float] = None
    inner_max: int = 100
    outer_max: int = 1000
    early_stop_outer: Optional[int] = 50
    hard_tol: float = 1e-3
    sinkhorn_tol: float = 1e-4
    sinkhorn_max_iter: int = 1000

    def __post_init__(self):
        if self.beta_rate <= 1:
            raise ValueError("beta_rate must exceed 1")
        if self.beta0 is not None and self.beta0 <= 0:
            raise ValueError("beta0 must be positive")


@dataclass(frozen=True)
class GfbOptions:
    """``L=None`` means ||A|| / 10.  ``rho_scale`` multiplies ||A|` when
    ``rho`` is None (the GFB_rho preset uses 1e-3)."""

    rho: Optional[float] = 0.0
    rho_scale: float = 0.0
    L: Optional[float] = None
    max_iter: int = 2000
    residual_tol: float = 1e-6
    nonneg_columns: bool = True

    def __post_init__(self):
        if self.L is not None and self.L <= 0:
            raise ValueError("L must be positive")
        if self.rho is not None and self.rho < 0:
            raise ValueError("rho must be non-negative")

    @classmethod
    def preset(cls, name: str, **kw) -> "GfbOptions":
        if name == "gfb":
            return cls(rho=0.0, **kw)
        if name == "gfb-rho":
            return cls(rho=None, rho_scale=1e-3, **kw)
        raise ValueError(f"unknown GFB preset {name!r}")


def _as_matrix(M, block) -> MatchingMatrix:
    return M if isinstance(M, MatchingMatrix) else MatchingMatrix(M, block)


def solve_hungarian(M0: MatchingMatrix, ctx: CostContext):
    """Single projection of the initial cost C(M0) onto the hard set."""
    t0 = time.perf_counter()
    M = project_matching(cost_matrix(M0, ctx), ctx.block)
    report = SolverReport("hungarian", stop_reason=CONVERGED)
    report.record(objective_J(M, ctx), constraint_residual(M))
    report.wall_time = time.perf_counter() - t0
    return M, report


def solve_ipfp(M0: MatchingMatrix, ctx: CostContext, max_iter: int = 100):
    """Integer projected fixed point ascent on J(M) = <M, M A - B>.

    Each step projects the gradient 2 M A - B onto the hard set, then takes
    the exact line-search step on the quadratic along the segment.  Stops
    when the projection reproduces the current iterate.
    """
    t0 = time.perf_counter()
    report = SolverReport("ipfp", params={"max_iter": max_iter})
    M = np.array(M0.values)
    B = ctx.b_row[None, :]
    proj = M0 if in_M(M0) else None
    for _ in range(max_iter):
        G = 2.0 * ctx.apply_A(M) - B
        proj = project_matching(G, ctx.block)
        delta = proj.values - M
        c = float(np.sum(G * delta))
        d = float(np.sum(ctx.apply_A(delta) * delta))
        t = min(-c / (2.0 * d), 1.0) if d < 0 else 1.0
        M_next = t * proj.values + (1.0 - t) * M
        report.record(objective_J(M_next, ctx),
                      constraint_residual(MatchingMatrix(M_next, ctx.block)))
        if np.array_equal(proj.values, M):
            report.stop_reason = CONVERGED
            break
        M = M_next
    report.wall_time = time.perf_counter() - t0
    if proj is None:
        proj = project_matching(cost_matrix(M0, ctx), ctx.block)
    return proj, report


def default_pad_value(C_I: np.ndarray) -> float:
    lo, hi = float(np.min(C_I)), float(np.max(C_I))
    return lo - (hi - lo)


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))


def _newton_polish(base: np.ndarray, f: np.ndarray, g: np.ndarray, target: np.ndarray,
                   tol: float, max_iter: int = 50):
    """Damped Newton on the dual of the balancing problem.

    Sinkhorn is only linearly (sometimes sublinearly) convergent; a few
    Newton steps on the convex potential
    ``sum exp(base + f + g) - <a, f> - <1, g>`` finish the job.  The last
    column potential is pinned to remove the (1, -1) null direction.
    """
    n, m, R = base.shape
    a = target[0, :, 0]
    k = m + R - 1
    dm, dr = np.arange(m), m + np.arange(R - 1)

    def phi(f, g):
        with np.errstate(over="ignore"):
            return (np.exp(base + f + g).sum(axis=(1, 2)) - (a * f[:, :, 0]).sum(axis=1)
                    - g[:, 0, :].sum(axis=1))

    for _ in range(max_iter):
        K = np.exp(base + f + g)
        rs, cs = K.sum(axis=2), K.sum(axis=1)
        r, c = rs - a, cs - 1.0
        if max(np.max(np.abs(r)), np.max(np.abs(c))) < tol:
            return f, g, True
        H = np.zeros((n, k, k))
        H[:, dm, dm] = rs
        H[:, dr, dr] = cs[:, :R - 1]
        H[:, :m, m:] = K[:, :, :R - 1]
        H[:, m:, :m] = K[:, :, :R - 1].transpose(0, 2, 1)
        H[:, np.arange(k), np.arange(k)] += 1e-14 * np.max(rs)
        grad = np.concatenate([r, c[:, :R - 1]], axis=1)
        delta = -np.linalg.solve(H, grad[..., None])[..., 0]
        df = delta[:, :m, None]
        dg = np.zeros_like(g)
        dg[:, 0, :R - 1] = delta[:, m:]
        slope = np.sum(grad * delta, axis=1)
        phi0 = phi(f, g)
        step = np.ones(n)
        for _ in range(40):
            trial = phi(f + step[:, None, None] * df, g + step[:, None, None] * dg)
            ok = trial <= phi0 + 1e-4 * step * slope + 1e-13 * np.abs(phi0)
            if ok.all():
                break
            step = np.where(ok, step, 0.5 * step)
        f = f + step[:, None, None] * df
        g = g + step[:, None, None] * dg
    return f, g, False


SINKHORN_SWEEPS = 100


def _sinkhorn_batch(C: np.ndarray, beta: float, pad: np.ndarray, tol: float,
                    max_iter: int) -> tuple[np.ndarray, int]:
    """Balance a stack of n x P x |R| blocks padded to |R| x |R|.

    The |R| - P dummy rows are identical and stay identical under
    balancing, so they are carried as one row with marginal |R| - P.
    Returns the n x (P+1) x |R| matrix (last row = one dummy row, i.e. the
    collapsed row divided by |R| - P) and the iteration count.  If plain
    scaling has not converged after ``SINKHORN_SWEEPS`` sweeps the
    potentials are finished by Newton steps (``max_iter`` bounds both).
    """
    n, P, R = C.shape
    n_pad = R - P
    rows = P + (1 if n_pad else 0)
    target = np.ones((1, rows, 1))
    if n_pad:
        target[0, P, 0] = n_pad
    logK = np.empty((n, rows, R))
    logK[:, :P] = beta * C
    if n_pad:
        logK[:, P] = beta * pad[:, None]
    it = 0
    converged = False
    sweeps = min(max_iter, SINKHORN_SWEEPS)
    if beta * np.max(np.abs(C)) > 30:
        # log-domain potentials; f is refreshed only while rows are off by >= tol
        base = logK
        log_target = np.log(target)
        f = log_target - _lse(logK, axis=2)
        for it in range(1, sweeps + 1):
            g = -_lse(logK + f, axis=1)
            f_new = log_target - _lse(logK + g, axis=2)
            if np.max(np.abs(target * np.expm1(f - f_new))) < tol:
                converged = True
                break
            f = f_new
        if sweeps == 0:
            g = -_lse(logK + f, axis=1)
    else:
        base = logK - logK.max(axis=(1, 2), keepdims=True)
        K = np.exp(base)
        u = np.ones((n, rows, 1))
        v = 1.0 / np.einsum("nij,nik->nkj", K, u)
        for it in range(1, sweeps + 1):
            v = 1.0 / np.einsum("nij,nik->nkj", K, u)  # n x 1 x R
            Kv = np.einsum("nij,nkj->nik", K, v)
            if np.max(np.abs(u * Kv - target)) < tol:
                converged = True
                break
            u = target / Kv
        f, g = np.log(u), np.log(v)
    if not converged and max_iter > 0:
        f, g, _ = _newton_polish(base, f, g, target, tol, min(max_iter, 100))
    K = np.exp(base + f + g)
    if n_pad:
        K[:, P] /= n_pad
    return K, it


def sinkhorn_assign(C_I, beta: float, pad_value: Optional[float] = None,
                    tol: float = 1e-6, max_iter: int = 10000, full: bool = False):
    """Entropic soft assignment of P parts to |R| >= P regions.

    The block is padded with |R| - P dummy rows of cost ``pad_value``
    (default ``min(C) - range(C)``), ``exp(beta C)`` is row/column balanced,
    and the P real rows are returned (the whole padded matrix if ``full``).
    Scaling runs in the log domain when ``beta * max|C| > 30``.
    """
    C_I = np.atleast_2d(np.asarray(C_I, dtype=float))
    P, R = C_I.shape
    if beta <= 0:
        raise ValueError("beta must be positive")
    if P > R:
        raise ValueError(f"infeasible partial assignment: {P} parts, {R} regions")
    pad = default_pad_value(C_I) if pad_value is None else pad_value
    K, _ = _sinkhorn_batch(C_I[None], beta, np.array([pad]), tol, max_iter)
    K = K[0]
    if not full:
        return K[:P]
    return np.vstack([K[:P], np.repeat(K[P:], R - P, axis=0)])


def sinkhorn_blocks(C: np.ndarray, block: int, beta: float, tol: float = 1e-6,
                    max_iter: int = 1000) -> np.ndarray:
    """Apply :func:`sinkhorn_assign` to every per-image block of a P x R+ cost."""
    P, Rp = C.shape
    n = Rp // block
    stack = C.reshape(P, n, block).transpose(1, 0, 2)
    lo = stack.min(axis=(1, 2))
    hi = stack.max(axis=(1, 2))
    K, _ = _sinkhorn_batch(stack, beta, lo - (hi - lo), tol, max_iter)
    return K[:, :P].transpose(1, 0, 2).reshape(P, Rp)


def round_to_hard(M: MatchingMatrix, ctx: Optional[CostContext] = None) -> MatchingMatrix:
    """Nearest hard matrix: the projection that maximizes <M_hard, M>."""
    return project_matching(M.values, M.block)


def solve_isa(M0: MatchingMatrix, ctx: CostContext, schedule: IsaSchedule = IsaSchedule()):
    """Iterated soft-assign: anneal beta upward; at each temperature
    alternate the cost update C(M) and per-image Sinkhorn until M settles.

    Returns the soft matrix; its rounded companion is ``report.rounded``.
    """
    t0 = time.perf_counter()
    P = M0.n_parts
    beta = schedule.beta0
    if beta is None:
        scale = float(np.max(np.abs(cost_matrix(M0, ctx))))
        beta = schedule.beta0_scale / max(scale, 1e-300)
    inner_tol = schedule.inner_tol
    if inner_tol is None:
        inner_tol = 1e-4 * P * ctx.n_plus
    cap = schedule.outer_max
    if schedule.early_stop_outer is not None:
        cap = min(cap, schedule.early_stop_outer)
    report = SolverReport("isa", params={
        "beta0": beta, "beta_rate": schedule.beta_rate, "inner_tol": inner_tol,
        "inner_max": schedule.inner_max, "outer_max": schedule.outer_max,
        "early_stop_outer": schedule.early_stop_outer})
    M = np.array(M0.values)
    inner_counts = []
    for _ in range(cap):
        beta *= schedule.beta_rate
        for inner in range(schedule.inner_max):
            M_new = sinkhorn_blocks(cost_matrix(M, ctx), ctx.block, beta,
                                    schedule.sinkhorn_tol, schedule.sinkhorn_max_iter)
            change = np.linalg.norm(M_new - M)
            M = M_new
            if change < inner_tol:
                break
        inner_counts.append(inner + 1)
        soft = MatchingMatrix(M, ctx.block)
        report.record(objective_J(soft, ctx), constraint_residual(soft))
        if np.max(np.abs(round_to_hard(soft).values - M)) < schedule.hard_tol:
            report.stop_reason = CONVERGED
            break
    else:
        if cap < schedule.outer_max:
            report.stop_reason = EARLY_STOP
    report.params["final_beta"] = beta
    report.params["inner_iterations"] = inner_counts
    out = MatchingMatrix(M, ctx.block, "soft")
    report.rounded = round_to_hard(out)
    report.wall_time = time.perf_counter() - t0
    return out, report


def resolve_gfb(opts: GfbOptions, ctx: CostContext) -> tuple[float, float]:
    """Concrete (rho, L) for a context."""
    norm = None
    rho = opts.rho
    if rho is None:
        norm = ctx.spectral_norm()
        rho = opts.rho_scale * norm
    L = opts.L
    if L is None:
        norm = ctx.spectral_norm() if norm is None else norm
        L = norm / 10.0
    return float(rho), float(L)


def solve_gfb(M0: MatchingMatrix, ctx: CostContext, opts: GfbOptions = GfbOptions()):
    """Generalized forward-backward splitting on J_rho over the relaxed set.

    Two auxiliary copies carry the constraints: ``M1`` keeps every
    per-image part row on the probability simplex, ``M2`` keeps every
    region column in {sum <= 1}.  The iterate is their average.
    """
    t0 = time.perf_counter()
    rho, L = resolve_gfb(opts, ctx)
    report = SolverReport("gfb", params={"rho": rho, "L": L, "max_iter": opts.max_iter,
                                         "residual_tol": opts.residual_tol})
    P = M0.n_parts
    n, R = ctx.n_plus, ctx.block
    M = np.array(M0.values)
    M1 = M.copy()
    M2 = M.copy()
    step = 1.0 / L
    for _ in range(opts.max_iter):
        G = gradient_Jrho(M, ctx, rho)
        Z1 = (2 * M - M1 - step * G).reshape(P, n, R)
        M1 = M1 - M + project_simplex(Z1).reshape(P, n * R)
        Z2 = 2 * M - M2 - step * G
        M2 = M2 - M + project_halfspace_sum(Z2.T, nonneg=opts.nonneg_columns).T
        M_new = 0.5 * (M1 + M2)
        if not np.all(np.isfinite(M_new)):
            raise FloatingPointError(
                f"GFB diverged (rho={rho:g}, L={L:g}); raise L or enable nonneg_columns")
        change = float(np.max(np.abs(M_new - M)))
        M = M_new
        cur = MatchingMatrix(M, ctx.block)
        report.record(objective_Jrho(M, ctx, rho), constraint_residual(cur))
        if change < opts.residual_tol:
            report.stop_reason = CONVERGED
            break
    report.wall_time = time.perf_counter() - t0
    return MatchingMatrix(M, ctx.block, "soft"), report


def solve(name: str, M0: MatchingMatrix, ctx: CostContext, isa: IsaSchedule = IsaSchedule(),
          gfb: Optional[GfbOptions] = None, ipfp_max_iter: int = 100):
    """Dispatch by solver name (one of :data:`SOLVERS`)."""
    if name == "hungarian":
        return solve_hungarian(M0, ctx)
    if name == "ipfp":
        return solve_ipfp(M0, ctx, ipfp_max_iter)
    if name == "isa":
        return solve_isa(M0, ctx, isa)
    if name in ("gfb", "gfb-rho"):
        if gfb is None:
            gfb = GfbOptions.preset(name)
        M, rep = solve_gfb(M0, ctx, gfb)
        rep.solver = name
        return M, rep
    raise ValueError(f"unknown solver {name!r}; expected one of {SOLVERS}")
