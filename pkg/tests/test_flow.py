import numpy as np
import pytest

from guidedflow import mlp
from guidedflow.flow import (FlowModel, MixtureSpec, TrainConfig,
                             default_mixture, generate_multi_step,
                             generate_one_step, rectified_flow_loss,
                             reflow_distill, sample_mixture, sample_prior,
                             straightness, train)

QUICK_TRAIN = TrainConfig(seed=0, num_steps=1200, hidden_width=32)


def constant_velocity_model(c, width=8):
    """Network computing v(x, t) = c for every input."""
    params = mlp.zero_params(hidden_width=width)
    biases = list(params.biases)
    biases[-1] = np.asarray(c, dtype=np.float64)
    params = mlp.NetworkParams(params.weights, tuple(biases), params.input_dim,
                               params.hidden_width, params.hidden_depth,
                               params.output_dim)
    return FlowModel(params, rectification_level=1)


def zero_model(width=8):
    return FlowModel(mlp.zero_params(hidden_width=width), rectification_level=1)


def test_sample_prior_moments():
    x = sample_prior(11, 100_000)
    assert np.all(np.abs(x.mean(axis=0)) < 0.02)
    assert np.all(np.abs(x.var(axis=0) - 1.0) < 0.02)


def test_sample_prior_deterministic():
    assert np.array_equal(sample_prior(5, 100), sample_prior(5, 100))


def test_sample_mixture_mode_split():
    x = sample_mixture(default_mixture(), 3, 100_000)
    frac = np.mean(x[:, 0] > 0)
    assert abs(frac - 0.5) < 0.01


def test_sample_mixture_degenerate_is_prior_like():
    spec = MixtureSpec(means=((0.0, 0.0),), stddevs=(1.0,), weights=(1.0,))
    x = sample_mixture(spec, 11, 100_000)
    assert np.all(np.abs(x.mean(axis=0)) < 0.02)
    assert np.all(np.abs(x.var(axis=0) - 1.0) < 0.02)


def test_sample_mixture_zero_weight_component():
    spec = MixtureSpec(means=((4.0, 0.0), (-4.0, 0.0)), stddevs=(0.3, 0.9),
                       weights=(1.0, 0.0))
    x = sample_mixture(spec, 3, 10_000)
    off = np.max(np.abs(x - np.array([4.0, 0.0])), axis=1)
    assert np.sum(off > 4 * 0.3) <= 1


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        MixtureSpec(means=((0.0, 0.0),), stddevs=(1.0,), weights=(0.9,))
    with pytest.raises(ValueError):
        MixtureSpec(means=((0.0, 0.0),), stddevs=(-1.0,), weights=(1.0,))


def test_loss_zero_for_perfect_predictor():
    model = constant_velocity_model([4.0, 0.0])
    loss, _ = rectified_flow_loss(model, np.zeros(2), np.array([4.0, 0.0]), 0.5)
    assert loss == 0.0


def test_loss_zero_displacement():
    loss, _ = rectified_flow_loss(zero_model(), np.array([1.0, -1.0]),
                                  np.array([1.0, -1.0]), 0.3)
    assert loss == 0.0


def test_loss_zero_network_value():
    loss, _ = rectified_flow_loss(zero_model(), np.zeros(2),
                                  np.array([4.0, 0.0]), 0.5)
    assert loss == pytest.approx(16.0, abs=1e-12)


def test_train_beats_zero_velocity_baseline():
    spec = default_mixture()
    model = train(spec, QUICK_TRAIN)
    # baseline: constant zero velocity scores E||x1 - x0||^2 over the coupling
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal((50_000, 2))
    x1 = sample_mixture(spec, 1, 50_000)
    baseline = float(np.mean(np.sum((x1 - x0) ** 2, axis=1)))
    assert model.training_meta["final_running_loss"] < baseline


def test_train_deterministic():
    spec = default_mixture()
    cfg = TrainConfig(seed=4, num_steps=50, hidden_width=16)
    a = train(spec, cfg)
    b = train(spec, cfg)
    for wa, wb in zip(a.params.weights, b.params.weights):
        assert np.array_equal(wa, wb)


def test_train_zero_steps_returns_init():
    cfg = TrainConfig(seed=9, num_steps=0, hidden_width=16)
    model = train(default_mixture(), cfg)
    init = mlp.init_params(9, 1.0, hidden_width=16)
    for wa, wb in zip(model.params.weights, init.weights):
        assert np.array_equal(wa, wb)


def test_generate_zero_network_identity():
    model = zero_model()
    x = np.array([0.7, -0.2])
    assert np.array_equal(generate_one_step(model, x), x)
    assert np.array_equal(generate_multi_step(model, x, 10), x)


def test_generate_constant_field_shift():
    model = constant_velocity_model([4.0, 0.0])
    x = np.array([1.0, 1.0])
    assert np.allclose(generate_one_step(model, x), [5.0, 1.0], atol=1e-15)


def test_multi_step_one_equals_one_step():
    model = FlowModel(mlp.init_params(2, 1.0, hidden_width=16), 1)
    x = sample_prior(0, 20)
    assert np.array_equal(generate_multi_step(model, x, 1),
                          generate_one_step(model, x))


def test_one_step_deterministic():
    model = FlowModel(mlp.init_params(6, 1.0, hidden_width=16), 1)
    x = np.array([0.4, 0.6])
    assert np.array_equal(generate_one_step(model, x),
                          generate_one_step(model, x))


def test_reflow_increments_level_and_keeps_shape():
    spec = default_mixture()
    cfg = TrainConfig(seed=1, num_steps=30, hidden_width=16)
    m1 = train(spec, cfg)
    m2 = reflow_distill(m1, spec, cfg, integration_steps=5, pool_size=500)
    m3 = reflow_distill(m2, spec, cfg, integration_steps=5, pool_size=500)
    assert (m1.rectification_level, m2.rectification_level,
            m3.rectification_level) == (1, 2, 3)
    assert m2.params.hidden_width == m1.params.hidden_width
    assert m2.params.hidden_depth == m1.params.hidden_depth


def test_reflow_deterministic():
    spec = default_mixture()
    cfg = TrainConfig(seed=1, num_steps=30, hidden_width=16)
    m1 = train(spec, cfg)
    a = reflow_distill(m1, spec, cfg, integration_steps=5, pool_size=500)
    b = reflow_distill(m1, spec, cfg, integration_steps=5, pool_size=500)
    for wa, wb in zip(a.params.weights, b.params.weights):
        assert np.array_equal(wa, wb)


def test_straightness_constant_velocity_zero():
    assert straightness(constant_velocity_model([1.0, 2.0]), 50, 20) < 1e-12


def test_straightness_zero_network_zero():
    assert straightness(zero_model(), 50, 20) < 1e-12


def test_train_divergence_raises():
    from guidedflow.flow import TrainingDivergedError
    # an absurd init overflows the squared loss on the first batch
    cfg = TrainConfig(seed=0, num_steps=10, hidden_width=16, init_scale=1e200)
    with pytest.raises(TrainingDivergedError):
        train(default_mixture(), cfg)
