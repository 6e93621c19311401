import warnings

import numpy as np
import pytest

from partqap.core import MatchingMatrix, constraint_residual, in_M
from partqap.cost import (CostContext, compute_moments, cost_matrix, gradient_Jrho, objective_J, objective_J0,
                          objective_Jrho)
from partqap.initialization import initialize_parts
from partqap.projections import project_matching
from partqap.solvers import (CONVERGED, EARLY_STOP, GfbOptions, IsaSchedule, round_to_hard,
                             sinkhorn_assign, sinkhorn_blocks, solve, solve_gfb,
                             solve_hungarian, solve_ipfp, solve_isa)
from partqap.synth import SyntheticSpec, synth_generate

from conftest import enumerate_hard, identity_context, random_context, random_hard, random_soft


def inner(a, b):
    return float(np.sum(np.asarray(a) * np.asarray(b)))


class TestHungarian:
    def test_toy_p1(self):
        ctx = identity_context([[1.0, 0.0]], 2)
        M0 = MatchingMatrix([[0.5, 0.5]], 2)
        M, rep = solve_hungarian(M0, ctx)
        np.testing.assert_array_equal(M.values, [[1, 0]])
        assert rep.stop_reason == CONVERGED and rep.iterations == 1

    def test_projection_maximal(self, rng):
        for _ in range(10):
            ctx = random_context(rng, 3, 2, 3)
            M0 = random_soft(rng, 2, 2, 3)
            C = cost_matrix(M0, ctx)
            M, _ = solve_hungarian(M0, ctx)
            assert in_M(M)
            best = max(inner(H, C) for H in enumerate_hard(2, 2, 3))
            assert inner(M.values, C) == pytest.approx(best, abs=1e-12)
            hard0 = random_hard(rng, 2, 2, 3)
            assert inner(M.values, C) >= inner(hard0.values, C) - 1e-12


class TestIpfp:
    def test_fixed_point_stops_after_one(self, rng):
        ctx = random_context(rng, 3, 2, 4)
        M0 = random_hard(rng, 2, 2, 4)
        fixed, _ = solve_ipfp(M0, ctx)
        M, rep = solve_ipfp(fixed, ctx)
        assert rep.iterations == 1 and rep.stop_reason == CONVERGED
        np.testing.assert_array_equal(M.values, fixed.values)

    def test_monotone_and_terminates(self, rng):
        for _ in range(20):
            ctx = random_context(rng, 4, 3, 5)
            M, rep = solve_ipfp(random_soft(rng, 3, 3, 5), ctx)
            t = np.array(rep.objective_trace)
            assert np.all(np.diff(t) >= -1e-9)
            assert rep.iterations <= 100 and rep.stop_reason == CONVERGED
            assert in_M(M)
            assert objective_J(M, ctx) == pytest.approx(t[-1], abs=1e-9)

    def test_step_is_full_projection(self, rng):
        # A is PSD so the curvature term is never negative
        ctx = random_context(rng, 3, 2, 4)
        M = random_soft(rng, 2, 2, 4).values
        G = 2 * ctx.apply_A(M) - ctx.b_row[None, :]
        delta = project_matching(G, 4).values - M
        assert inner(ctx.apply_A(delta), delta) >= -1e-12


class TestSinkhorn:
    def test_uniform_limit(self):
        K = sinkhorn_assign([[3.0, -1.0], [0.5, 2.0]], 1e-9)
        np.testing.assert_allclose(K, 0.5, atol=1e-6)

    def test_identity(self):
        K = sinkhorn_assign([[1.0, 0.0], [0.0, 1.0]], 50.0)
        np.testing.assert_allclose(K, np.eye(2), atol=1e-6)

    def test_symmetric_tie(self):
        np.testing.assert_allclose(sinkhorn_assign([[1.0, 1.0]], 5.0), [[0.5, 0.5]], atol=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError, match="beta"):
            sinkhorn_assign([[1.0, 0.0]], 0.0)
        with pytest.raises(ValueError, match="infeasible"):
            sinkhorn_assign(np.zeros((3, 2)), 1.0)

    @pytest.mark.parametrize("beta", [0.1, 1.0, 10.0, 100.0])
    def test_doubly_stochastic(self, rng, beta):
        for _ in range(10):
            P, R = rng.integers(1, 5), 5
            K = sinkhorn_assign(rng.standard_normal((P, R)), beta, full=True)
            assert K.shape == (R, R)
            np.testing.assert_allclose(K.sum(axis=1), 1, atol=1e-6)
            np.testing.assert_allclose(K.sum(axis=0), 1, atol=1e-6)

    def test_explicit_pad_value(self):
        K = sinkhorn_assign([[2.0, 0.0, 1.0]], 1.0, pad_value=-5.0, full=True)
        np.testing.assert_allclose(K.sum(axis=0), 1, atol=1e-6)
        np.testing.assert_allclose(K[1], K[2])

    def test_scaling_form(self, rng):
        # balanced output = diag(u) exp(beta C) diag(v) restricted to real rows
        C = rng.standard_normal((3, 6))
        K = sinkhorn_assign(C, 7.0, tol=1e-12)
        L = np.log(K) - 7.0 * C
        np.testing.assert_allclose(L - L[:, :1] - L[:1, :] + L[0, 0], 0, atol=1e-9)

    def test_hungarian_limit(self, rng):
        done = 0
        while done < 20:
            C = rng.standard_normal((3, 6))
            vals = sorted(inner(H, C) for H in enumerate_hard(3, 1, 6))
            if vals[-1] - vals[-2] < 1e-3:
                continue
            done += 1
            H = project_matching(C, 6).values
            beta = 500.0 / np.ptp(C)
            K = sinkhorn_assign(C, beta)
            gap = inner(H, C) - inner(K, C)
            assert gap < 0.01 * abs(inner(H, C))

    def test_no_overflow_at_large_beta(self, rng):
        C = 100 * rng.standard_normal((3, 6))
        K = sinkhorn_assign(C, 1e4 / np.max(np.abs(C)))
        assert np.all(np.isfinite(K))
        np.testing.assert_allclose(K.sum(axis=1), 1, atol=1e-6)

    def test_blocks_match_single(self, rng):
        C = rng.standard_normal((2, 12))
        K = sinkhorn_blocks(C, 4, 2.0, tol=1e-10, max_iter=10000)
        for i in range(3):
            np.testing.assert_allclose(K[:, 4 * i:4 * i + 4],
                                       sinkhorn_assign(C[:, 4 * i:4 * i + 4], 2.0, tol=1e-10),
                                       atol=1e-8)


class TestIsa:
    def test_zero_cap_returns_start(self, rng):
        ctx = random_context(rng, 3, 2, 4)
        M0 = random_soft(rng, 2, 2, 4)
        M, rep = solve_isa(M0, ctx, IsaSchedule(early_stop_outer=0))
        np.testing.assert_array_equal(M.values, M0.values)
        assert rep.stop_reason == EARLY_STOP and rep.iterations == 0

    def test_large_beta_matches_hungarian(self, rng):
        for _ in range(5):
            ctx = random_context(rng, 3, 3, 5)
            M0 = random_soft(rng, 2, 3, 5)
            C = cost_matrix(M0, ctx)
            H, _ = solve_hungarian(M0, ctx)
            sched = IsaSchedule(beta0=1e4 / np.max(np.abs(C)), inner_max=1, early_stop_outer=1,
                                sinkhorn_max_iter=10000)
            _, rep = solve_isa(M0, ctx, sched)
            np.testing.assert_array_equal(rep.rounded.values, H.values)

    def test_output_soft_with_rounding(self, rng):
        ctx = random_context(rng, 3, 3, 5)
        M, rep = solve_isa(random_soft(rng, 2, 3, 5), ctx)
        assert M.mode == "soft"
        assert in_M(rep.rounded)
        np.testing.assert_allclose(M.block_row_sums(), 1, atol=1e-3)
        assert len(rep.params["inner_iterations"]) == rep.iterations


def dense_jrho_oracle(ctx, P, rho):
    cvxpy = pytest.importorskip("cvxpy")
    A = ctx.dense_A()
    S = rho * np.eye(A.shape[0]) - A
    Lc = np.linalg.cholesky(S + 1e-12 * np.eye(len(S)))
    n, R = ctx.n_plus, ctx.block
    X = cvxpy.Variable((P, n * R))
    B = np.tile(ctx.b_row, (P, 1))
    obj = cvxpy.sum_squares(X @ Lc) + cvxpy.sum(cvxpy.multiply(X, B))
    cons = [X >= 0, cvxpy.sum(X, axis=0) <= 1]
    for i in range(n):
        cons.append(cvxpy.sum(X[:, i * R:(i + 1) * R], axis=1) == 1)
    cvxpy.Problem(cvxpy.Minimize(obj), cons).solve(solver=cvxpy.CLARABEL)
    return X.value


class TestGfb:
    def test_zero_iterations_returns_start(self, rng):
        ctx = random_context(rng, 3, 2, 4)
        M0 = random_soft(rng, 2, 2, 4)
        M, rep = solve_gfb(M0, ctx, GfbOptions(max_iter=0))
        np.testing.assert_array_equal(M.values, M0.values)
        assert rep.iterations == 0

    @pytest.mark.parametrize("nonneg", [True, False])
    def test_convex_regime_matches_qp(self, rng, nonneg):
        ctx = random_context(rng, 3, 2, 4)
        nA = ctx.spectral_norm()
        rho = 1.5 * nA
        M0 = random_soft(rng, 2, 2, 4)
        M, rep = solve_gfb(M0, ctx, GfbOptions(rho=rho, L=4 * rho, max_iter=20000,
                                               residual_tol=1e-12, nonneg_columns=nonneg))
        assert rep.stop_reason == CONVERGED
        X = dense_jrho_oracle(ctx, 2, rho)
        assert objective_Jrho(M, ctx, rho) == pytest.approx(objective_Jrho(X, ctx, rho),
                                                            rel=1e-6, abs=1e-7)
        np.testing.assert_allclose(M.values, X, atol=1e-4)
        assert constraint_residual(M) < 1e-8

    def test_convex_trace_monotone_on_benchmark(self):
        corpus, _ = synth_generate(SyntheticSpec(seed=0))
        moments = compute_moments(corpus)
        ctx = CostContext.for_category(corpus, 1, moments)
        M0 = initialize_parts(corpus, 1, 4, ctx)
        rho = 1.1 * ctx.spectral_norm()
        _, rep = solve_gfb(M0, ctx, GfbOptions(rho=rho, L=8 * rho, nonneg_columns=False))
        t = np.array(rep.objective_trace)
        assert np.max(np.diff(t[1:])) <= 1e-9 * np.max(np.abs(t))

    def test_stationary_gradient_direction(self, rng):
        # projected-gradient residual of the output vanishes
        ctx = random_context(rng, 3, 2, 4)
        rho = 2 * ctx.spectral_norm()
        M, _ = solve_gfb(random_soft(rng, 2, 2, 4), ctx,
                         GfbOptions(rho=rho, L=4 * rho, max_iter=20000, residual_tol=1e-13))
        X = dense_jrho_oracle(ctx, 2, rho)
        G = gradient_Jrho(M, ctx, rho)
        # first-order optimality: no feasible point decreases the linearization
        assert inner(G, X - M.values) >= -1e-5 * np.linalg.norm(G)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_is_reported(self, rng):
        ctx = random_context(rng, 3, 2, 4)
        with pytest.raises(FloatingPointError):
            solve_gfb(random_soft(rng, 2, 2, 4), ctx,
                      GfbOptions(L=1e-6 * ctx.spectral_norm(), nonneg_columns=False,
                                 max_iter=5000))

    def test_options_validated(self):
        with pytest.raises(ValueError):
            GfbOptions(L=0.0)
        with pytest.raises(ValueError):
            GfbOptions(rho=-1.0)
        with pytest.raises(ValueError):
            GfbOptions.preset("nope")


class TestRounding:
    def test_hard_unchanged(self, rng):
        H = random_hard(rng, 2, 3, 4)
        np.testing.assert_array_equal(round_to_hard(H).values, H.values)

    def test_p1(self):
        M = MatchingMatrix([[0.6, 0.4]], 2, "soft")
        np.testing.assert_array_equal(round_to_hard(M).values, [[1, 0]])

    def test_tie_lowest_column(self):
        M = MatchingMatrix([[0.5, 0.5, 0.0]], 3, "soft")
        np.testing.assert_array_equal(round_to_hard(M).values, [[1, 0, 0]])


def test_dispatch_and_determinism(rng):
    ctx = random_context(rng, 3, 3, 5)
    M0 = random_soft(rng, 2, 3, 5)
    for name in ("hungarian", "ipfp", "isa", "gfb", "gfb-rho"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            M1, r1 = solve(name, M0, ctx)
            M2, r2 = solve(name, M0, ctx)
        np.testing.assert_array_equal(M1.values, M2.values)
        assert r1.to_dict(timing=False) == r2.to_dict(timing=False)
        assert r1.solver == name
    with pytest.raises(ValueError, match="unknown solver"):
        solve("nope", M0, ctx)


def test_sign_identity_ranking(rng):
    ctx = random_context(rng, 3, 2, 4)
    outs = [solve(n, random_soft(rng, 2, 2, 4), ctx)[0] for n in ("hungarian", "ipfp")]
    outs += [random_hard(rng, 2, 2, 4) for _ in range(4)]
    by_J = np.argsort([objective_J(M, ctx) for M in outs], kind="stable")
    by_J0 = np.argsort([-objective_J0(M, ctx) for M in outs], kind="stable")
    np.testing.assert_array_equal(by_J, by_J0)
