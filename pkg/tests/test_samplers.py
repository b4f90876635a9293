import numpy as np
import pytest

from guidedflow import mlp
from guidedflow.flow import FlowModel
from guidedflow.rewards import PullbackReward, QuadraticReward, ToyMixtureReward
from guidedflow.samplers import (MonitorParams, SamplerConfig, SamplerMode,
                                 StepError, monitor_value, run_chain,
                                 run_chain_batch, step_adaptive,
                                 step_gradient_ascent, step_langevin,
                                 step_naive_adaptive, step_norm_reg)
from tests.test_flow import zero_model

IDENTITY_QUAD = PullbackReward(QuadraticReward(1.0))


def small_model(seed=12):
    return FlowModel(mlp.init_params(seed, 1.0, hidden_width=16), 1)


class TestGradientAscent:
    def test_fixed_point_at_zero_gradient(self):
        x = np.zeros(2)
        assert np.array_equal(step_gradient_ascent(x, IDENTITY_QUAD, 0.5), x)

    def test_quadratic_contraction(self):
        x = np.array([1.0, 0.0])
        got = step_gradient_ascent(x, IDENTITY_QUAD, 0.1)
        assert np.allclose(got, [0.9, 0.0], atol=1e-15)

    def test_displacement_linear_in_eta(self):
        pr = PullbackReward(ToyMixtureReward(), small_model())
        x = np.array([0.5, -0.3])
        d1 = step_gradient_ascent(x, pr, 0.2) - x
        d2 = step_gradient_ascent(x, pr, 0.4) - x
        assert np.allclose(d2, 2 * d1, rtol=1e-12)


class TestNormReg:
    def test_unit_circle_is_stationary_radius(self):
        x = np.array([np.cos(0.7), np.sin(0.7)])
        pr = IDENTITY_QUAD
        got = step_norm_reg(x, pr, 0.0, 1.0)
        assert np.allclose(got, x, atol=1e-15)

    def test_zero_rates_identity(self):
        x = np.array([0.4, 0.2])
        assert np.allclose(step_norm_reg(x, IDENTITY_QUAD, 0.0, 0.0), x)

    def test_regularizer_pulls_radius_toward_one(self):
        x = np.array([3.0, 0.0])
        for _ in range(200):
            x = step_norm_reg(x, IDENTITY_QUAD, 0.0, 0.05)
        assert abs(np.linalg.norm(x) - 1.0) < 1e-6

    def test_origin_is_singular(self):
        with pytest.raises(StepError):
            step_norm_reg(np.zeros(2), IDENTITY_QUAD, 0.1, 0.1)


class TestMonitor:
    def test_value_at_zero_reward(self):
        assert monitor_value(MonitorParams(), 0.0) == pytest.approx(1 / 3, abs=1e-15)

    def test_limit_at_deeply_negative_reward(self):
        assert monitor_value(MonitorParams(), -1e6) == pytest.approx(4 / 3, abs=1e-12)

    def test_hand_value(self):
        got = monitor_value(MonitorParams(), -2.0)
        assert got == pytest.approx(1 / 3 + np.tanh(0.6), abs=1e-15)
        assert got == pytest.approx(0.870, abs=1e-3)

    def test_clamped_to_bounds_on_random_rewards(self):
        mp = MonitorParams()
        rng = np.random.default_rng(0)
        vals = monitor_value(mp, rng.uniform(-100, 100, 1000))
        assert np.all(vals >= mp.s_min)
        assert np.all(vals <= mp.s_max)

    def test_monotone_on_nonpositive_rewards(self):
        mp = MonitorParams()
        assert monitor_value(mp, -5.0) > monitor_value(mp, -0.01)

    def test_validation(self):
        with pytest.raises(ValueError):
            MonitorParams(s_min=2.0, s_max=1.0)
        with pytest.raises(ValueError):
            MonitorParams(s_min=0.0, s_max=1.0)


class TestLangevinStep:
    def test_gamma_zero_boundary_probe(self):
        # permitted for testing only: no contraction, no drift, no noise scale
        x = np.array([1.0, -2.0])
        got = step_langevin(x, IDENTITY_QUAD, 0.0, 0.0001, np.zeros(2))
        # eta * grad enters scaled by gamma = 0
        assert np.allclose(got, x, atol=1e-15)

    def test_contraction_factor(self):
        pr = PullbackReward(QuadraticReward(1.0), zero_model())
        x = np.array([4.0, 0.0])
        # choose the critical point of the pullback so the gradient vanishes
        got = step_langevin(np.zeros(2), pr, 0.19, 0.5, np.zeros(2))
        assert np.array_equal(got, np.zeros(2))
        got = step_langevin(x, IDENTITY_QUAD, 0.19, 0.0 + 1e-300, np.zeros(2))
        # drift is negligible at eta ~ 1e-300, contraction is sqrt(0.81) = 0.9
        assert np.allclose(got, 0.9 * x, atol=1e-12)

    def test_stationary_variance_identity_quadratic(self):
        cfg = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=1500, gamma=0.05,
                            eta=0.5, seed=8)
        acc = {"ss": 0.0, "n": 0}

        def hook(i, x):
            if i >= 500:
                acc["ss"] += float(np.sum(x * x))
                acc["n"] += x.size

        run_chain_batch(None, QuadraticReward(1.0), cfg, n_chains=3000,
                        iterate_hook=hook)
        var = acc["ss"] / acc["n"]
        assert abs(var - 0.5) < 0.03

    def test_nonfinite_gradient_raises(self):
        class BadReward(QuadraticReward):
            def grad(self, x):
                return np.full_like(np.asarray(x, dtype=float), np.nan)

        with pytest.raises(StepError):
            step_langevin(np.ones(2), PullbackReward(BadReward(1.0)), 0.1, 0.5,
                          np.zeros(2))


class TestAdaptiveStep:
    def test_constant_monitor_equals_langevin_bitwise(self):
        mp = MonitorParams(s_min=1.0, s_max=1.0, k=0.3)
        pr = PullbackReward(ToyMixtureReward(), small_model())
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.standard_normal(2)
            noise = rng.standard_normal(2)
            a = step_adaptive(x, pr, 0.3, 0.8, mp, noise)
            b = step_langevin(x, pr, 0.3, 0.8, noise)
            assert np.array_equal(a, b)

    def test_zero_gradient_drops_correction(self):
        pr = IDENTITY_QUAD
        x = np.zeros(2)
        noise = np.array([0.5, -0.5])
        got = step_adaptive(x, pr, 0.3, 0.8, MonitorParams(), noise)
        g0 = monitor_value(MonitorParams(), 0.0)
        want = np.sqrt(g0 * 0.3) * noise
        assert np.allclose(got, want, atol=1e-15)

    def test_effective_step_larger_at_low_reward(self):
        mp = MonitorParams()
        low = monitor_value(mp, -5.0) * 0.3
        high = monitor_value(mp, -0.01) * 0.3
        assert low > high

    def test_naive_equals_langevin_with_unit_monitor(self):
        mp = MonitorParams(s_min=1.0, s_max=1.0, k=0.3)
        pr = PullbackReward(ToyMixtureReward(), small_model())
        x = np.array([0.3, 0.4])
        noise = np.array([-0.2, 0.9])
        a = step_naive_adaptive(x, pr, 0.25, 0.8, mp, noise)
        b = step_langevin(x, pr, 0.25, 0.8, noise)
        assert np.array_equal(a, b)

    def test_adaptive_minus_naive_is_correction_term(self):
        from guidedflow.samplers import monitor_log_slope
        mp = MonitorParams()
        pr = PullbackReward(ToyMixtureReward(), small_model())
        rng = np.random.default_rng(4)
        for _ in range(10):
            x = rng.standard_normal(2)
            noise = rng.standard_normal(2)
            r, g = pr.value_and_grad(x)
            gm = monitor_value(mp, r) * 0.3
            corr = 0.5 * gm * monitor_log_slope(mp, r) * g
            a = step_adaptive(x, pr, 0.3, 0.8, mp, noise)
            b = step_naive_adaptive(x, pr, 0.3, 0.8, mp, noise)
            assert np.allclose(a - b, corr, atol=1e-12)


class TestRunChain:
    def test_m_one_scores_both_points(self):
        cfg = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=1, gamma=0.3,
                            eta=0.5, seed=5)
        rec = run_chain(None, QuadraticReward(1.0), cfg)
        assert len(rec.chain.reward_history) == 2
        assert rec.chain.best_reward == max(rec.chain.reward_history)

    def test_best_tracking_invariant(self):
        model = small_model()
        cfg = SamplerConfig(SamplerMode.ADAPTIVE_LANGEVIN, n_iterations=40,
                            gamma=0.3, eta=0.8, seed=6)
        rec = run_chain(model, ToyMixtureReward(), cfg)
        pr = PullbackReward(ToyMixtureReward(), model)
        assert rec.chain.best_reward == max(rec.chain.reward_history)
        assert abs(pr.value(rec.chain.best_latent) - rec.chain.best_reward) <= 1e-12

    def test_final_output_is_pushforward_of_best(self):
        from guidedflow.flow import generate_one_step
        model = small_model()
        cfg = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=15, gamma=0.3,
                            eta=0.8, seed=7)
        rec = run_chain(model, ToyMixtureReward(), cfg)
        assert np.array_equal(rec.final_output,
                              generate_one_step(model, rec.chain.best_latent))

    def test_deterministic_given_config(self):
        model = small_model()
        cfg = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=25, gamma=0.3,
                            eta=0.8, seed=11)
        a = run_chain(model, ToyMixtureReward(), cfg)
        b = run_chain(model, ToyMixtureReward(), cfg)
        assert np.array_equal(a.chain.x, b.chain.x)
        assert a.chain.reward_history == b.chain.reward_history
        assert np.array_equal(a.final_output, b.final_output)

    def test_zero_iterations_scores_initial_point_only(self):
        cfg = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=0, gamma=0.3,
                            eta=0.5, seed=9)
        rec = run_chain(None, QuadraticReward(1.0), cfg)
        assert len(rec.chain.reward_history) == 1
        x0 = np.random.default_rng(9).standard_normal(2)
        assert np.array_equal(rec.chain.x, x0)

    def test_threshold_counts_evaluations(self):
        cfg = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=10, gamma=0.3,
                            eta=0.5, seed=10)
        rec = run_chain(None, QuadraticReward(1.0), cfg, threshold=-1e9)
        assert rec.nfe_to_threshold == 1
        rec = run_chain(None, QuadraticReward(1.0), cfg, threshold=1e9)
        assert rec.nfe_to_threshold is None

    def test_norm_reg_abort_gives_partial_record(self):
        class PullToOrigin(QuadraticReward):
            def grad(self, x):
                return -np.asarray(x, dtype=float) * 1e12

        cfg = SamplerConfig(SamplerMode.NORM_REG_ASCENT, n_iterations=30,
                            gamma=0.3, eta=1e-12, eta2=0.0, seed=3)
        rec = run_chain(None, PullToOrigin(1.0), cfg)
        assert rec.aborted
        assert rec.error is not None
        assert len(rec.chain.reward_history) >= 1

    def test_noise_freshness(self):
        cfg = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=400, gamma=0.3,
                            eta=0.5, seed=21)
        noise = []
        run_chain(None, QuadraticReward(1.0), cfg, noise_log=noise)
        noise = np.array(noise)
        m = len(noise)
        for dim in range(2):
            series = noise[:, dim]
            lag1 = np.corrcoef(series[:-1], series[1:])[0, 1]
            assert abs(lag1) < 3.0 / np.sqrt(m)

    def test_trajectory_retention(self):
        cfg = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=5, gamma=0.3,
                            eta=0.5, seed=2)
        rec = run_chain(None, QuadraticReward(1.0), cfg, keep_trajectory=True)
        assert rec.chain.trajectory.shape == (6, 2)
        assert np.array_equal(rec.chain.trajectory[-1], rec.chain.x)


class TestRunChainBatch:
    def test_matches_invariants(self):
        model = small_model()
        cfg = SamplerConfig(SamplerMode.ADAPTIVE_LANGEVIN, n_iterations=30,
                            gamma=0.3, eta=0.8, seed=13)
        res = run_chain_batch(model, ToyMixtureReward(), cfg, n_chains=50,
                              threshold=-0.5)
        assert np.allclose(res.best_rewards, res.reward_history.max(axis=1))
        pr = PullbackReward(ToyMixtureReward(), model)
        vals = pr.value(res.best_latents)
        assert np.allclose(vals, res.best_rewards, atol=1e-12)

    def test_deterministic(self):
        cfg = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=20, gamma=0.3,
                            eta=0.5, seed=14)
        a = run_chain_batch(None, QuadraticReward(1.0), cfg, n_chains=10)
        b = run_chain_batch(None, QuadraticReward(1.0), cfg, n_chains=10)
        assert np.array_equal(a.final_latents, b.final_latents)

    def test_adaptive_with_unit_monitor_matches_langevin_bitwise(self):
        model = small_model()
        mp = MonitorParams(s_min=1.0, s_max=1.0, k=0.3)
        cfgA = SamplerConfig(SamplerMode.ADAPTIVE_LANGEVIN, n_iterations=50,
                             gamma=0.3, eta=0.8, monitor=mp, seed=15)
        cfgL = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=50, gamma=0.3,
                             eta=0.8, seed=15)
        a = run_chain_batch(model, ToyMixtureReward(), cfgA, n_chains=40)
        b = run_chain_batch(model, ToyMixtureReward(), cfgL, n_chains=40)
        assert np.array_equal(a.final_latents, b.final_latents)
        assert np.array_equal(a.reward_history, b.reward_history)

    def test_paired_seeds_share_initial_points(self):
        cfgA = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=0, gamma=0.3,
                             eta=0.5, seed=77)
        cfgB = SamplerConfig(SamplerMode.ADAPTIVE_LANGEVIN, n_iterations=0,
                             gamma=0.3, eta=0.5, seed=77)
        a = run_chain_batch(None, QuadraticReward(1.0), cfgA, n_chains=8)
        b = run_chain_batch(None, QuadraticReward(1.0), cfgB, n_chains=8)
        assert np.array_equal(a.final_latents, b.final_latents)


class TestSamplerConfig:
    def test_gamma_bounds(self):
        with pytest.raises(ValueError):
            SamplerConfig(SamplerMode.LANGEVIN, gamma=0.0)
        with pytest.raises(ValueError):
            SamplerConfig(SamplerMode.LANGEVIN, gamma=1.0)

    def test_rescaled_contraction_must_stay_real(self):
        mp = MonitorParams(s_min=1.0 / 3.0, s_max=4.0 / 3.0, k=0.3)
        with pytest.raises(ValueError):
            SamplerConfig(SamplerMode.ADAPTIVE_LANGEVIN, gamma=0.8, monitor=mp)
        SamplerConfig(SamplerMode.LANGEVIN, gamma=0.8)  # not monitored: fine

    def test_m_zero_allowed(self):
        SamplerConfig(SamplerMode.LANGEVIN, n_iterations=0)
