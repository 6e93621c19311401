"""LDA statistics and the factored objective of the part-learning problem.

With ``A = X+^T S^-1 X+ / n+`` and ``B = 1_P mu^T S^-1 X+`` the cost of a
matching matrix is ``C(M) = M A - B``.  ``A`` is R+ x R+ and is never
formed: every product goes through d-dimensional intermediates
(``M X+^T`` is P x d), so the cost of a product is O(P d R+).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import MatchingMatrix, PartModel, TrainingCorpus


class ConvergenceWarning(RuntimeWarning):
    pass


class EmptyPartError(ValueError):
    pass


def _values(M) -> np.ndarray:
    return M.values if isinstance(M, MatchingMatrix) else np.asarray(M, dtype=float)


@dataclass(frozen=True, eq=False)
class Moments:
    """Mean and Cholesky factor of the ridge-regularized covariance."""

    mu: np.ndarray
    chol: tuple  # scipy cho_factor output of Sigma + lam I
    lam: float
    covariance: np.ndarray  # Sigma + lam I, kept for reporting and checks

    @classmethod
    def from_covariance(cls, mu, cov, lam: float = 0.0) -> "Moments":
        """Factorize ``cov + lam I``.  Raises ``LinAlgError`` if not PD."""
        mu = np.asarray(mu, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        reg = cov + lam * np.eye(cov.shape[0])
        try:
            chol = linalg.cho_factor(reg, lower=True)
        except linalg.LinAlgError as exc:
            raise linalg.LinAlgError(
                f"covariance + {lam:g} I is not positive definite; increase the ridge") from exc
        return cls(mu=mu, chol=chol, lam=float(lam), covariance=reg)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply (Sigma + lam I)^-1."""
        return linalg.cho_solve(self.chol, rhs, check_finite=False)


def default_ridge(cov: np.ndarray) -> float:
    return 1e-2 * float(np.trace(cov)) / cov.shape[0]


def compute_moments(corpus: TrainingCorpus, lam: float | None = None,
                    normalization: str = "regions") -> Moments:
    """Mean and covariance of every training region descriptor.

    ``normalization="regions"`` divides the scatter by the number of
    regions R (biased covariance); ``"images"`` divides by the number of
    images n, which scales Sigma by |R| and every part model by 1/|R|.
    ``lam=None`` picks ``1e-2 trace(Sigma) / d``.
    """
    X = corpus.train_matrix()
    d, R = X.shape
    mu = X.mean(axis=1)
    Xc = X - mu[:, None]
    if normalization == "regions":
        denom = R
    elif normalization == "images":
        denom = R // corpus.n_regions
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    cov = Xc @ Xc.T / denom
    if lam is None:
        lam = default_ridge(cov)
    if lam < 0:
        raise ValueError("ridge must be non-negative")
    if lam == 0 and d >= R:
        raise ValueError(f"d={d} >= R={R}: a positive ridge is required")
    return Moments.from_covariance(mu, cov, lam)


@dataclass(frozen=True, eq=False)
class CostContext:
    """Everything needed to evaluate costs, objectives and gradients for one
    category.  ``SinvX`` is S^-1 X+ (d x R+) and ``b_row`` is mu^T S^-1 X+."""

    moments: Moments
    Xplus: np.ndarray
    n_plus: int
    block: int
    SinvX: np.ndarray
    b_row: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, moments: Moments, Xplus, block: int) -> "CostContext":
        Xplus = np.asarray(Xplus, dtype=float)
        if Xplus.shape[1] % block:
            raise ValueError("positive regions do not split into image blocks")
        SinvX = moments.solve(Xplus)
        b_row = moments.mu @ SinvX
        for a in (Xplus, SinvX, b_row):
            a.setflags(write=False)
        return cls(moments=moments, Xplus=Xplus, n_plus=Xplus.shape[1] // block,
                   block=block, SinvX=SinvX, b_row=b_row)

    @classmethod
    def for_category(cls, corpus: TrainingCorpus, category: int,
                     moments: Moments) -> "CostContext":
        return cls.build(moments, corpus.positive_matrix(category), corpus.n_regions)

    @property
    def n_cols(self) -> int:
        return self.Xplus.shape[1]

    @property
    def d(self) -> int:
        return self.Xplus.shape[0]

    def apply_A(self, V: np.ndarray) -> np.ndarray:
        """V A for a k x R+ matrix V, via (V X+^T) S^-1 X+ / n+."""
        return (V @ self.Xplus.T) @ self.SinvX / self.n_plus

    def B(self, n_parts: int) -> np.ndarray:
        return np.broadcast_to(self.b_row, (n_parts, self.n_cols))

    def dense_A(self) -> np.ndarray:
        """Explicit R+ x R+ A.  Only for checks on small instances."""
        return self.Xplus.T @ self.SinvX / self.n_plus

    def spectral_norm(self, tol: float = 1e-10, max_iter: int = 1000) -> float:
        """Cached largest eigenvalue of A."""
        key = ("norm", tol)
        if key not in self._cache:
            self._cache[key] = spectral_norm_A(self, tol, max_iter)
        return self._cache[key]


def part_models(M, ctx: CostContext, denominator: str = "rowsum",
                category: int = 0) -> PartModel:
    """LDA part classifiers W(M); column p is S^-1 (X+ m_p^T / s_p - mu).

    ``s_p`` is the row sum of M (``denominator="rowsum"``) or n+
    (``"n_plus"``); the two agree whenever every per-image row sums to 1.
    """
    V = _values(M)
    if denominator == "rowsum":
        s = V.sum(axis=1)
        if np.any(s <= 0):
            raise EmptyPartError(f"empty part: rows {np.flatnonzero(s <= 0).tolist()} sum to 0")
    elif denominator == "n_plus":
        s = np.full(V.shape[0], float(ctx.n_plus))
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    means = ctx.Xplus @ V.T / s
    W = ctx.moments.solve(means - ctx.moments.mu[:, None])
    return PartModel(W=W, category=category)


def cost_matrix(M, ctx: CostContext) -> np.ndarray:
    """C(M) = M A - B = (M X+^T / n+ - 1 mu^T) S^-1 X+."""
    V = _values(M)
    left = V @ ctx.Xplus.T / ctx.n_plus - ctx.moments.mu[None, :]
    return left @ ctx.SinvX


def objective_J0(M, ctx: CostContext) -> float:
    """J0(M) = <M, B> - <M, M A>; the minimization objective."""
    V = _values(M)
    MX = V @ ctx.Xplus.T  # P x d
    quad = np.sum(MX * ctx.moments.solve(MX.T).T) / ctx.n_plus
    lin = float(V.sum(axis=0) @ ctx.b_row)
    return lin - float(quad)


def objective_J(M, ctx: CostContext) -> float:
    """J(M) = -J0(M) = <M, C(M)>; the maximization objective."""
    return -objective_J0(M, ctx)


def objective_Jrho(M, ctx: CostContext, rho: float) -> float:
    V = _values(M)
    return objective_J0(V, ctx) + rho * float(np.sum(V * V))


def gradient_Jrho(M, ctx: CostContext, rho: float) -> np.ndarray:
    """2 M (rho I - A) + B."""
    V = _values(M)
    return 2.0 * (rho * V - ctx.apply_A(V)) + ctx.b_row[None, :]


def spectral_norm_A(ctx: CostContext, tol: float = 1e-10, max_iter: int = 1000) -> float:
    """Largest eigenvalue of A by power iteration on v -> A v.

    Warns with :class:`ConvergenceWarning` and returns the last estimate if
    the relative change is still above ``tol`` after ``max_iter`` steps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(0)
    v = 1.0 + 0.1 * rng.standard_normal(ctx.n_cols)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = ctx.apply_A(v[None, :])[0]
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if abs(new - est) <= tol * abs(new):
            return new
        est = new
    warnings.warn(f"power iteration did not reach tol={tol:g} in {max_iter} steps",
                  ConvergenceWarning, stacklevel=2)
    return est
