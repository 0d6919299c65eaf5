import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from translasso.estimators import RegressionProblem
from translasso.transductive import (
    TwoStepConfig,
    check_design_proximity,
    fit_transductive_dantzig,
    fit_transductive_lasso,
    preliminary_labels,
    two_step_fit,
)

from oracles import enumerate_lp_vertices


def make_problem(seed, n=7, m=10, p=8, sigma=1.0, beta=None):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, p))
    x = z[:n]
    if beta is None:
        beta = np.zeros(p)
        beta[:3] = [3.0, 1.5, 2.0]
    y = x @ beta + sigma * rng.standard_normal(n)
    return RegressionProblem(x=x, y=y, z=z, sigma=sigma), np.asarray(beta, float)


class TestPreliminaryLabels:
    def test_zero_stage_one_gives_zero_labels(self):
        prob, _ = make_problem(0)
        lam_big = 10.0 * np.abs(prob.x.T @ prob.y).max()
        check_y, est = preliminary_labels(prob, lam_big, "lasso")
        assert np.array_equal(est.beta, np.zeros(prob.p))
        assert np.array_equal(check_y, np.zeros(prob.m))

    def test_noiseless_full_rank_recovers(self):
        prob, beta = make_problem(1, n=12, m=16, p=5, sigma=0.0)
        check_y, _ = preliminary_labels(prob, 0.0, "lasso")
        assert np.max(np.abs(check_y - prob.z @ beta)) < 1e-6

    def test_labels_consistent_with_recorded_estimate(self):
        prob, _ = make_problem(2)
        check_y, est = preliminary_labels(prob, 1.0, "dantzig")
        assert np.allclose(check_y, prob.z @ est.beta, atol=1e-12)

    def test_requires_unlabeled_design(self):
        rng = np.random.default_rng(3)
        prob = RegressionProblem(x=rng.standard_normal((5, 3)), y=np.ones(5))
        with pytest.raises(ValueError, match="unlabeled"):
            preliminary_labels(prob, 1.0)


class TestTransductiveLasso:
    def test_zero_above_threshold(self):
        prob, _ = make_problem(4)
        check_y = prob.z @ np.array([1.0, -2.0, 0, 0, 0.5, 0, 0, 0])
        level = np.abs((prob.n / prob.m) * prob.z.T @ check_y).max()
        est = fit_transductive_lasso(
            check_y, prob.z, prob.n, prob.m, level * 1.001, multiplier=1.0
        )
        assert np.array_equal(est.beta, np.zeros(prob.p))

    def test_exact_interpolation_at_zero_lambda(self):
        prob, _ = make_problem(5, n=12, m=16, p=5)
        beta0 = np.array([1.0, 0, -2.0, 0, 0.5])
        check_y = prob.z @ beta0
        est = fit_transductive_lasso(check_y, prob.z, prob.n, prob.m, 0.0)
        assert np.max(np.abs(est.beta - beta0)) < 1e-6

    def test_kkt_residual_within_constraint_level(self):
        prob, _ = make_problem(6)
        check_y, _ = preliminary_labels(prob, 2.0, "lasso")
        for mult in (1.0, 20.0):
            est = fit_transductive_lasso(
                check_y, prob.z, prob.n, prob.m, 0.7, multiplier=mult
            )
            resid = np.abs(
                (prob.n / prob.m) * prob.z.T @ (check_y - prob.z @ est.beta)
            ).max()
            assert resid <= mult * 0.7 + 1e-6
            assert est.kkt_infinity_norm == pytest.approx(resid, abs=1e-12)


class TestTransductiveDantzig:
    def test_zero_above_threshold(self):
        prob, _ = make_problem(7)
        check_y = prob.z @ np.array([0.5, 1.0, 0, 0, 0, 0, -1.0, 0])
        level = np.abs((prob.n / prob.m) * prob.z.T @ check_y).max()
        est = fit_transductive_dantzig(
            check_y, prob.z, prob.n, prob.m, level * 1.001
        )
        assert np.array_equal(est.beta, np.zeros(prob.p))

    def test_toy_matches_vertex_enumeration(self):
        rng = np.random.default_rng(8)
        n, m, p = 4, 6, 2
        z = rng.standard_normal((m, p))
        check_y = z @ np.array([2.0, -1.0]) + 0.1 * rng.standard_normal(m)
        lam = 0.4
        est = fit_transductive_dantzig(check_y, z, n, m, lam)
        c_mat = (n / m) * z.T @ z
        r0 = (n / m) * z.T @ check_y
        eye = np.eye(p)
        g = np.vstack(
            [
                np.hstack([eye, -eye]),
                np.hstack([-eye, -eye]),
                np.hstack([-c_mat, np.zeros((p, p))]),
                np.hstack([c_mat, np.zeros((p, p))]),
            ]
        )
        h = np.concatenate([np.zeros(2 * p), lam - r0, lam + r0])
        best, _ = enumerate_lp_vertices(
            np.concatenate([np.zeros(p), np.ones(p)]), g, h
        )
        assert np.abs(est.beta).sum() == pytest.approx(best, abs=1e-8)

    def test_noiseless_l1_no_larger_than_truth(self):
        prob, _ = make_problem(9, n=10, m=14, p=6, sigma=0.0)
        beta0 = np.array([2.0, 0, 0, -1.0, 0, 0])
        check_y = prob.z @ beta0
        est = fit_transductive_dantzig(check_y, prob.z, prob.n, prob.m, 0.05)
        assert np.abs(est.beta).sum() <= np.abs(beta0).sum() + 1e-9


class TestTwoStep:
    def test_noiseless_identity_recovery(self):
        prob, beta = make_problem(10, n=12, m=16, p=5, sigma=0.0)
        cfg = TwoStepConfig(lambda1=0.0, lambda2=0.0, constraint_multiplier=1.0)
        est = two_step_fit(prob, cfg)
        assert np.max(np.abs(est.beta - beta)) < 1e-5
        assert est.lam1 == 0.0

    def test_bitwise_deterministic(self):
        prob, _ = make_problem(11)
        cfg = TwoStepConfig(lambda1=1.3, lambda2=0.9)
        e1 = two_step_fit(prob, cfg)
        e2 = two_step_fit(prob, cfg)
        assert np.array_equal(e1.beta, e2.beta)

    def test_multiplier_defaults(self):
        assert TwoStepConfig(1.0, 1.0, stage2="lasso").multiplier == 20.0
        assert TwoStepConfig(1.0, 1.0, stage2="dantzig").multiplier == 1.0
        assert TwoStepConfig(1.0, 1.0, constraint_multiplier=1.0).multiplier == 1.0

    def test_stage_one_output_feasible_for_stage_two(self):
        # with lambda1 = lambda2 and proximity built in, the stage-1 estimate
        # satisfies the stage-2 constraint, so the Dantzig stage is feasible
        rng = np.random.default_rng(12)
        n, p = 20, 8
        x = rng.standard_normal((n, p))
        x /= np.sqrt((x**2).sum(axis=0) / n)
        z = np.vstack([x, x + 1e-3 * rng.standard_normal((n, p))])
        beta = np.array([3.0, 1.5, 0, 0, 2.0, 0, 0, 0])
        sigma, eta = 1.0, 0.05
        y = x @ beta + sigma * rng.standard_normal(n)
        prob = RegressionProblem(x=x, y=y, z=z, sigma=sigma)
        lam = 0.1 * sigma * np.sqrt(2 * n * np.log(p / eta))
        prox = check_design_proximity(
            x, z, n, 2 * n, radius=np.abs(beta).sum(), sigma=sigma, eta=eta
        )
        assert prox.satisfied
        check_y, stage1 = preliminary_labels(prob, lam, "dantzig")
        resid = np.abs((n / (2 * n)) * z.T @ (check_y - z @ stage1.beta)).max()
        assert resid <= lam + 1e-9  # stage-1 point is stage-2 feasible
        est = fit_transductive_dantzig(check_y, z, n, 2 * n, lam)
        assert np.abs(est.beta).sum() <= np.abs(stage1.beta).sum() + 1e-9

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TwoStepConfig(-1.0, 0.0)
        with pytest.raises(ValueError):
            TwoStepConfig(1.0, 1.0, preliminary="ridge")
        with pytest.raises(ValueError):
            TwoStepConfig(1.0, 1.0, weighting="nope")
        with pytest.raises(ValueError):
            TwoStepConfig(1.0, 1.0, constraint_multiplier=0.0)


class TestDesignProximity:
    def test_exact_replication_gives_zero(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((6, 4))
        z = np.vstack([x, x])
        rep = check_design_proximity(x, z, 6, 12, radius=3.0, sigma=1.0, eta=0.1)
        assert rep.sup_value < 1e-12  # zero up to summation-order rounding
        assert rep.satisfied

    def test_zero_radius(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal((5, 3))
        z = rng.standard_normal((9, 3))
        rep = check_design_proximity(x, z, 5, 9, radius=0.0, sigma=1.0, eta=0.1)
        assert rep.sup_value == 0.0

    def test_sampled_points_never_exceed_closed_form(self):
        rng = np.random.default_rng(15)
        x = rng.standard_normal((6, 5))
        z = rng.standard_normal((11, 5))
        radius = 2.5
        rep = check_design_proximity(x, z, 6, 11, radius=radius, sigma=1.0, eta=0.1)
        delta = x.T @ x - (6 / 11) * z.T @ z
        # 1e5 random points of the l1 ball
        raw = rng.standard_normal((100_000, 5))
        u = radius * raw / np.abs(raw).sum(axis=1, keepdims=True)
        u *= rng.uniform(0, 1, size=(100_000, 1))
        sampled = np.abs(u @ delta.T).max(axis=1)
        assert sampled.max() <= rep.sup_value + 1e-9
        # vertices of the ball attain the closed form
        verts = radius * np.vstack([np.eye(5), -np.eye(5)])
        vert_max = np.abs(verts @ delta.T).max()
        assert vert_max == pytest.approx(rep.sup_value, rel=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_dominance_property(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((5, 4))
        z = rng.standard_normal((8, 4))
        radius = float(rng.uniform(0, 4))
        rep = check_design_proximity(x, z, 5, 8, radius=radius, sigma=1.0, eta=0.2)
        delta = x.T @ x - (5 / 8) * z.T @ z
        raw = rng.standard_normal(4)
        u = radius * raw / np.abs(raw).sum()
        assert np.abs(delta @ u).max() <= rep.sup_value + 1e-9

    def test_eta_validation(self):
        z = np.vstack([np.eye(3), np.eye(3)])
        with pytest.raises(ValueError):
            check_design_proximity(np.eye(3), z, 3, 6, radius=1.0, sigma=1.0, eta=1.5)
