import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from coarsenkit.fgc import closed_form_xtilde
from coarsenkit.solver import (
    CBlock, Infeasible, Problem, Projection, SolverConfig, SolverError, StepRule,
    analytic_lipschitz_c, backtrack, check_kkt_fgc, grad_c_fgc, grad_c_fgcr, grad_c_gc,
    grad_h_fgcr, grad_w_fgcr, grad_xtilde_fgc, init_loading, majorizer, objective_fgc,
    objective_fgcr, objective_gc, project_loading_set, project_nonneg_rowscaled,
    projected_gradient_residual, round_relaxed, step_length,
)

from conftest import random_binary_loading, random_connected_graph


def central_diff(f, z, h=1e-6):
    g = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        g[idx] = (f(zp) - f(zm)) / (2 * h)
    return g


def max_rel_err(analytic, numeric):
    return np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-12)


def make_problem(rng, p=10, k=3, n=4):
    g = random_connected_graph(rng, p, n)
    gamma, alpha, lam = rng.uniform(0.5, 3.0, size=3)
    prob = Problem(g.laplacian, k, gamma, lam, alpha, g.features)
    c = project_loading_set(rng.uniform(0.05, 1.0, size=(p, k)))
    return prob, c


class TestProjections:
    def test_rowscaled_examples(self):
        out = project_nonneg_rowscaled(np.array([[0.5, -0.2, 0.3], [-1.0, -2.0, 0.0],
                                                 [1.0, 0.0, 0.0]]))
        assert_allclose(out[0], [0.5 / np.sqrt(0.38), 0, 0.3 / np.sqrt(0.38)], atol=1e-12)
        assert_allclose(out[0], [0.8111, 0, 0.4867], atol=1e-4)
        assert_allclose(out[1], [0, 0, 0])
        assert_allclose(out[2], [1, 0, 0])

    def test_rowscaled_flags_zero_rows(self):
        _, zero = project_nonneg_rowscaled(np.array([[0.0, 0.0], [1.0, 2.0]]), return_zero_rows=True)
        assert zero.tolist() == [0]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_projection_properties(self, p, k, seed):
        a = np.random.default_rng(seed).normal(scale=2.0, size=(p, k))
        for proj in (project_nonneg_rowscaled, project_loading_set):
            out = proj(a)
            assert np.all(out >= 0)
            assert np.all(np.linalg.norm(out, axis=1) <= 1 + 1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_euclidean_projection_is_nearest(self, p, k, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(p, k))
        out = project_loading_set(a)
        # no feasible point is closer: compare against random feasible points
        others = project_loading_set(rng.normal(size=(200, p, k)).reshape(-1, k)).reshape(200, p, k)
        d0 = np.linalg.norm(a - out)
        assert np.all(np.linalg.norm((others - a).reshape(200, -1), axis=1) >= d0 - 1e-12)
        # idempotent
        assert_allclose(project_loading_set(out), out, atol=1e-15)

    def test_init_is_feasible_and_seeded(self):
        a = init_loading(20, 4, np.random.default_rng(1))
        b = init_loading(20, 4, np.random.default_rng(1))
        assert_allclose(a, b)
        assert_allclose(np.linalg.norm(a, axis=1), 1.0)


class TestObjective:
    def test_termwise_oracle(self, rng):
        prob, c = make_problem(rng)
        xt = rng.normal(size=(3, 4))
        theta = prob.theta.toarray()
        m = c.T @ theta @ c + np.ones((3, 3)) / 3
        expected = (-prob.gamma * np.log(np.linalg.det(m)) + np.trace(xt.T @ c.T @ theta @ c @ xt)
                    + prob.alpha / 2 * np.linalg.norm(c @ xt - prob.x) ** 2
                    + prob.lam / 2 * np.sum(c.sum(axis=1) ** 2))
        assert_allclose(objective_fgc(c, xt, prob), expected, rtol=1e-10)

    def test_binary_loading_is_feasible(self, rng):
        prob, _ = make_problem(rng)
        c = random_binary_loading(rng, 10, 3)
        assert np.isfinite(objective_fgc(c, closed_form_xtilde(c, prob), prob))

    def test_empty_column_infeasible(self, rng):
        prob, _ = make_problem(rng)
        c = random_binary_loading(rng, 10, 3)
        c[:, 2] = 0
        c[c.sum(axis=1) == 0, 0] = 1
        with pytest.raises(Infeasible):
            objective_gc(c, prob)

    def test_fast_block_matches_direct(self, rng):
        prob, c = make_problem(rng)
        xt = rng.normal(size=(3, 4))
        block = CBlock.fgc(prob, xt)
        assert_allclose(block.value(c), objective_fgc(c, xt, prob), rtol=1e-12)
        assert_allclose(block.grad(c), grad_c_fgc(c, xt, prob), rtol=1e-12, atol=1e-12)
        w, h = rng.normal(size=(3, 2)), rng.normal(size=(2, 4))
        block = CBlock.fgcr(prob, w, h)
        assert_allclose(block.value(c), objective_fgcr(c, w, h, prob), rtol=1e-12)
        assert_allclose(block.grad(c), grad_c_fgcr(c, w, h, prob), rtol=1e-12, atol=1e-12)


class TestGradients:
    """Central differences at h = 1e-6 on small random instances."""

    @pytest.mark.parametrize("seed", range(5))
    def test_fgc(self, seed):
        rng = np.random.default_rng(seed)
        prob, c = make_problem(rng)
        xt = rng.normal(size=(3, 4))
        assert max_rel_err(grad_c_fgc(c, xt, prob),
                           central_diff(lambda z: objective_fgc(z, xt, prob), c)) < 1e-5
        assert max_rel_err(grad_xtilde_fgc(xt, c, prob),
                           central_diff(lambda z: objective_fgc(c, z, prob), xt)) < 1e-5

    @pytest.mark.parametrize("seed", range(5))
    def test_gc(self, seed):
        rng = np.random.default_rng(seed)
        prob, c = make_problem(rng)
        assert max_rel_err(grad_c_gc(c, prob), central_diff(lambda z: objective_gc(z, prob), c)) < 1e-5

    @pytest.mark.parametrize("seed", range(5))
    def test_fgcr(self, seed):
        rng = np.random.default_rng(seed)
        prob, c = make_problem(rng)
        w, h = rng.normal(size=(3, 2)), rng.normal(size=(2, 4))
        assert max_rel_err(grad_c_fgcr(c, w, h, prob),
                           central_diff(lambda z: objective_fgcr(z, w, h, prob), c)) < 1e-5
        assert max_rel_err(grad_w_fgcr(w, c, h, prob),
                           central_diff(lambda z: objective_fgcr(c, z, h, prob), w)) < 1e-5
        assert max_rel_err(grad_h_fgcr(h, c, w, prob),
                           central_diff(lambda z: objective_fgcr(c, w, z, prob), h)) < 1e-5

    def test_lambda_term_broadcasts_row_sums(self, rng):
        prob, c = make_problem(rng)
        only_lam = Problem(prob.theta, 3, 1e-300, 2.0)
        g = CBlock.gc(only_lam).grad(c)
        assert_allclose(g, 2.0 * np.repeat(c.sum(axis=1, keepdims=True), 3, axis=1), atol=1e-12)


class TestStepLength:
    def test_inverse_k(self):
        assert step_length("inv-k", k=812) == 812.0

    def test_backtracking_on_quadratic(self, rng):
        alpha = 3.0
        xt = rng.normal(size=(4, 6))
        x = rng.normal(size=(9, 6))
        c = rng.normal(size=(9, 4))

        def f(z):
            return 0.5 * alpha * np.sum((z @ xt - x) ** 2)

        g = alpha * (c @ xt - x) @ xt.T
        step = backtrack(f, c, f(c), g, 1e-3)
        lmax = alpha * np.linalg.eigvalsh(xt @ xt.T)[-1]
        assert step.L <= 2 * lmax
        d = step.x - c
        curvature = alpha * np.sum((d @ xt) ** 2) / np.sum(d * d)
        assert step.L >= curvature * (1 - 1e-9)

    def test_majorizer_tangent_and_dominating(self, rng):
        prob, c = make_problem(rng)
        xt = rng.normal(size=(3, 4))
        block = CBlock.fgc(prob, xt)
        for _ in range(100):
            c = project_loading_set(rng.uniform(0.05, 1.0, size=c.shape))
            fc, g = block.value_and_grad(c)
            assert majorizer(fc, g, c, c, 1.0) == fc
            step = backtrack(block.safe_value, c, fc, g, 1.0, project_loading_set)
            assert step.value <= majorizer(fc, g, c, step.x, step.L) + 1e-9 * abs(fc)

    def test_analytic_bound_majorizes(self, rng):
        prob, c = make_problem(rng)
        xt = rng.normal(size=(3, 4))
        block = CBlock.fgc(prob, xt)
        fc, g = block.value_and_grad(c)
        L = analytic_lipschitz_c(prob, c, block.smooth_gram, block.fit_gram)
        c_new = project_loading_set(c - g / L)
        assert block.value(c_new) <= majorizer(fc, g, c, c_new, L) + 1e-9
        assert L >= step_length("backtrack", block=block, c=c, g=g, fc=fc,
                                project=project_loading_set) / 2

    def test_backtracking_gives_up(self):
        with pytest.raises(SolverError, match="doublings"):
            backtrack(lambda z: np.inf, np.zeros(2), 0.0, np.ones(2), 1.0, max_doublings=3)


class TestKKT:
    def test_closed_form_xtilde_is_stationary(self, rng):
        prob, c = make_problem(rng)
        xt = closed_form_xtilde(c, prob)
        assert np.linalg.norm(grad_xtilde_fgc(xt, c, prob)) < 1e-8
        rep = check_kkt_fgc(c, xt, prob, 1e-4)
        assert rep.x_residual < 1e-8

    def test_random_point_fails(self, rng):
        prob, c = make_problem(rng)
        rep = check_kkt_fgc(c, rng.normal(size=(3, 4)), prob, 1e-4)
        assert not rep
        assert rep.c_residual > 1e-2

    def test_residual_zero_at_interior_stationary_point(self):
        c = np.full((2, 2), 0.5)
        assert projected_gradient_residual(c, np.zeros((2, 2))) == 0
        # gradient pushing against an active bound is not a violation
        c = np.array([[0.0, 1.0]])
        assert projected_gradient_residual(c, np.array([[1.0, -1.0]])) == 0


class TestConfig:
    @pytest.mark.parametrize("kwargs", [dict(ratio=1.0), dict(ratio=0.0), dict(gamma=0.0),
                                        dict(tol=0.0), dict(lam=-1.0), dict(outer_iters=0)])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)

    def test_enums_from_strings(self):
        cfg = SolverConfig(step_rule="inv-k", projection="rowscaled")
        assert cfg.step_rule is StepRule.INV_K and cfg.projection is Projection.ROWSCALED

    def test_k_from_ratio(self):
        assert SolverConfig(ratio=0.3).n_supernodes(2708) == 812
        assert SolverConfig(ratio=0.01).n_supernodes(20) == 2
        assert SolverConfig(k=5).n_supernodes(100) == 5


def test_round_relaxed_places_zero_rows_by_gradient():
    c = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.9], [0.0, 0.8, 0.0]])
    grad = np.array([[3.0, 1.0, 2.0], [0, 0, 0], [0, 0, 0], [0, 0, 0]])
    res, zero = round_relaxed(c, grad)
    assert zero.tolist() == [0]
    assert res.loading.assignment.tolist() == [1, 0, 2, 1]
