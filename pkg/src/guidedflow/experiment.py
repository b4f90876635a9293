"""Experiment orchestration behind the compare and validate commands.

``run_compare`` reproduces the equal-budget four-way comparison: the
oracle draw of the target law next to the terminal samples of each
configured search method, with MMD, energy-test and threshold metrics
written to a results CSV. ``run_validation`` is the self-contained
property suite (gradients, monitor, rewards, stationarity, round-trips)
with one report line per check.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import checkpoint as ckpt
from . import csvio, metrics, mlp, oracle
from .config import CompareConfig, ExperimentConfig, config_hash
from .flow import FlowModel, generate_one_step
from .rewards import (CategoricalAngleDist, OrientationTarget,
                      PullbackReward, QuadraticReward, ToyMixtureReward,
                      discretize_gaussian, kl_categorical, orientation_reward)
from .samplers import (MonitorParams, SamplerConfig, SamplerMode,
                       monitor_value, run_chain_batch)

__all__ = ["CompareOutput", "run_compare", "run_threshold_experiment",
           "run_validation", "Check"]


@dataclass
class CompareOutput:
    results_rows: list
    sample_files: dict
    oracle_ess: float
    method_latents: dict
    oracle_latents: np.ndarray


def _rel_err(approx: np.ndarray, exact: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(exact)), 1e-12)
    return float(np.linalg.norm(approx - exact)) / scale


def fd_gradient(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, per coordinate."""
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fn(xp) - fn(xm)) / (2 * h)
    return g


def run_compare(model: FlowModel, cfg: ExperimentConfig,
                out_dir: str) -> CompareOutput:
    """Equal-NFE comparison of the configured methods against the oracle.

    Per method, the terminal latents of ``n_chains`` chains are compared
    with an oracle draw of the target law (MMD with shared bandwidth, and
    the energy-distance permutation test). Every method consumes the same
    iteration budget. Writes per-method latent- and data-space sample CSVs
    plus a results CSV.
    """
    os.makedirs(out_dir, exist_ok=True)
    cc = cfg.compare
    budgets = {m.n_iterations for m in cc.methods.values()}
    if budgets and budgets != {cc.n_iterations}:
        raise ValueError(f"methods disagree on the iteration budget: {budgets}")

    reward = ToyMixtureReward()
    pullback = PullbackReward(reward, model)
    target = oracle.TargetDensity(alpha=cc.alpha, pullback=pullback)
    oracle_draw = oracle.sample_q_star(target, seed=cc.seed,
                                       n=cc.oracle.n_samples,
                                       n_proposals=cc.oracle.n_proposals)
    chash = config_hash(cfg)
    rows = []
    files: dict[str, str] = {}
    latents: dict[str, np.ndarray] = {}

    def emit(method: str, metric: str, value) -> None:
        rows.append((method, metric, value, cc.seed, chash))

    oracle_data = generate_one_step(model, oracle_draw.points)
    files["oracle_latent"] = os.path.join(out_dir, "samples_latent_oracle.csv")
    files["oracle_data"] = os.path.join(out_dir, "samples_data_oracle.csv")
    csvio.write_points(files["oracle_latent"], oracle_draw.points)
    csvio.write_points(files["oracle_data"], oracle_data)
    emit("oracle", "ess", oracle_draw.effective_sample_size)
    emit("oracle", "mean_reward", float(np.mean(reward.value(oracle_data))))

    for name, scfg in cc.methods.items():
        result = run_chain_batch(model, reward, scfg, n_chains=cc.n_chains,
                                 threshold=cc.threshold)
        latents[name] = result.final_latents
        files[f"{name}_latent"] = os.path.join(
            out_dir, f"samples_latent_{name}.csv")
        files[f"{name}_data"] = os.path.join(out_dir, f"samples_data_{name}.csv")
        csvio.write_points(files[f"{name}_latent"], result.final_latents)
        csvio.write_points(files[f"{name}_data"], result.final_outputs)

        mmd = metrics.mmd_rbf(result.final_latents, oracle_draw.points)
        test = oracle.stationarity_test(result.final_latents,
                                        oracle_draw.points, seed=cc.seed)
        stats = metrics.mean_iterations_to_threshold(result, cc.threshold)
        emit(name, "mmd_vs_oracle", mmd.value)
        emit(name, "mmd_raw", mmd.raw)
        emit(name, "mmd_bandwidth", mmd.bandwidth)
        emit(name, "energy_statistic", test.statistic)
        emit(name, "energy_p_value", test.p_value)
        emit(name, "stationarity_pass", int(test.passed))
        emit(name, "mean_final_reward",
             float(np.mean(result.reward_history[:, -1])))
        emit(name, "mean_best_reward", float(np.mean(result.best_rewards)))
        emit(name, "mean_nfe_to_threshold",
             stats.mean_nfe if stats.mean_nfe is not None else "")
        emit(name, "threshold_success_rate", stats.success_rate)

    results_path = os.path.join(out_dir, "results.csv")
    csvio.write_rows(results_path,
                     ["method", "metric", "value", "seed", "config_hash"], rows)
    files["results"] = results_path
    return CompareOutput(results_rows=rows, sample_files=files,
                         oracle_ess=oracle_draw.effective_sample_size,
                         method_latents=latents,
                         oracle_latents=oracle_draw.points)


def run_threshold_experiment(model: FlowModel, methods: dict[str, SamplerConfig],
                             n_chains: int, threshold: float):
    """First-hit statistics for each method over paired chain seeds."""
    reward = ToyMixtureReward()
    out = {}
    for name, scfg in methods.items():
        result = run_chain_batch(model, reward, scfg, n_chains=n_chains,
                                 threshold=threshold)
        out[name] = metrics.mean_iterations_to_threshold(result, threshold)
    return out


# --- validation suite ---


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def _check_reward_gradients(rng) -> Check:
    worst = 0.0
    toy = ToyMixtureReward()
    quad = QuadraticReward(c=2.0)
    for _ in range(100):
        x = rng.uniform(-6, 6, size=2)
        for rw in (toy, quad):
            err = _rel_err(fd_gradient(rw.value, x), rw.grad(x))
            worst = max(worst, err)
    return Check("reward_gradient_fd", worst <= 1e-6, f"max rel err {worst:.2e}")


def _check_vjp_input(rng) -> Check:
    worst = 0.0
    for trial in range(100):
        params = mlp.init_params(seed=1000 + trial, scale=1.0,
                                 input_dim=3, hidden_width=16,
                                 hidden_depth=4, output_dim=2)
        x = rng.uniform(-3, 3, size=2)
        t = rng.uniform(0, 1)
        u = rng.standard_normal(2)
        _, tape = mlp.forward(params, x, t)
        exact = mlp.vjp_input(params, tape, u)
        fd = fd_gradient(lambda p: float(u @ mlp.forward(params, p, t)[0]), x)
        worst = max(worst, _rel_err(fd, exact))
    return Check("vjp_input_fd", worst <= 1e-5, f"max rel err {worst:.2e}")


def _check_vjp_params(rng) -> Check:
    worst = 0.0
    h = 1e-5
    for trial in range(100):
        params = mlp.init_params(seed=2000 + trial, scale=1.0,
                                 input_dim=3, hidden_width=16,
                                 hidden_depth=4, output_dim=2)
        x = rng.uniform(-3, 3, size=2)
        t = rng.uniform(0, 1)
        u = rng.standard_normal(2)
        _, tape = mlp.forward(params, x, t)
        grads = mlp.vjp_params(params, tape, u)
        direction = [rng.standard_normal(w.shape) for w in params.weights]
        bdir = [rng.standard_normal(b.shape) for b in params.biases]
        analytic = sum(float(np.sum(gw * dw)) for gw, dw
                       in zip(grads.weights, direction))
        analytic += sum(float(np.sum(gb * db)) for gb, db
                        in zip(grads.biases, bdir))

        def shifted(sign):
            ws = tuple(w + sign * h * dw for w, dw
                       in zip(params.weights, direction))
            bs = tuple(b + sign * h * db for b, db in zip(params.biases, bdir))
            moved = mlp.NetworkParams(ws, bs, params.input_dim,
                                      params.hidden_width, params.hidden_depth,
                                      params.output_dim)
            return float(u @ mlp.forward(moved, x, t)[0])

        fd = (shifted(+1) - shifted(-1)) / (2 * h)
        worst = max(worst, abs(fd - analytic) / max(abs(analytic), 1e-12))
    return Check("vjp_params_fd", worst <= 1e-5, f"max rel err {worst:.2e}")


def _check_pullback_gradient(rng) -> Check:
    worst = 0.0
    reward = ToyMixtureReward()
    for trial in range(20):
        params = mlp.init_params(seed=3000 + trial, scale=1.0)
        model = FlowModel(params, rectification_level=1)
        pr = PullbackReward(reward, model)
        for _ in range(5):
            x = rng.uniform(-3, 3, size=2)
            fd = fd_gradient(lambda p: pr.value(p), x)
            worst = max(worst, _rel_err(fd, pr.grad(x)))
    return Check("pullback_gradient_fd", worst <= 1e-4, f"max rel err {worst:.2e}")


def _check_monitor(rng) -> Check:
    mp = MonitorParams()
    ok = abs(monitor_value(mp, 0.0) - 1.0 / 3.0) < 1e-15
    ok &= abs(monitor_value(mp, -2.0) - 0.870383) < 1e-3
    rewards = rng.uniform(-50, 50, size=1000)
    vals = monitor_value(mp, rewards)
    ok &= bool(np.all(vals >= mp.s_min - 1e-15) and np.all(vals <= mp.s_max + 1e-15))
    return Check("monitor_values", bool(ok), "G(0), G(-2), clamp bounds")


def _check_orientation_reward() -> Check:
    p = CategoricalAngleDist(np.array([0.5, 0.5]), circular=False)
    q = CategoricalAngleDist(np.array([0.75, 0.25]), circular=False)
    ok = abs(kl_categorical(p, q) - 0.143841) < 1e-5
    target = OrientationTarget(azimuth=45.0, polar=30.0, rotation=10.0)
    pred = {name: discretize_gaussian(target.angle(name), target.sigma(name),
                                      {"azimuth": 360, "polar": 180,
                                       "rotation": 360}[name],
                                      name != "polar")
            for name in ("azimuth", "polar", "rotation")}
    ok &= abs(orientation_reward([pred], [target])) < 1e-12
    dist = discretize_gaussian(213.0, 20.0, 360, True)
    ok &= abs(float(dist.probs.sum()) - 1.0) < 1e-9
    return Check("orientation_reward", bool(ok),
                 "hand KL, zero at target, normalization")


def _check_checkpoint_roundtrip(tmp_dir: str) -> Check:
    model = FlowModel(mlp.init_params(seed=7, scale=1.0),
                      rectification_level=2, training_meta={"seed": 7})
    path = os.path.join(tmp_dir, "roundtrip.ckpt")
    ckpt.save_checkpoint(path, model)
    loaded = ckpt.load_checkpoint(path)
    same = all(np.array_equal(a, b) for a, b in
               zip(model.params.weights, loaded.params.weights))
    same &= all(np.array_equal(a, b) for a, b in
                zip(model.params.biases, loaded.params.biases))
    same &= loaded.rectification_level == 2
    return Check("checkpoint_roundtrip", bool(same), "bitwise round trip")


def _check_quadratic_stationarity() -> Check:
    alpha, c = 1.0, 1.0
    scfg = SamplerConfig(SamplerMode.LANGEVIN, n_iterations=1500, gamma=0.02,
                         eta=1.0 / (2 * alpha), seed=99)
    result = run_chain_batch(None, QuadraticReward(c), scfg, n_chains=4000)
    var = float(np.var(result.final_latents))
    expected = alpha / (alpha + c)
    rel = abs(var - expected) / expected
    return Check("quadratic_stationarity", rel < 0.05,
                 f"variance {var:.4f} vs {expected:.4f} (rel {rel:.3f})")


def _check_drift_identity(rng) -> Check:
    params = mlp.init_params(seed=11, scale=1.0)
    model = FlowModel(params, rectification_level=1)
    pr = PullbackReward(ToyMixtureReward(), model)
    td = oracle.TargetDensity(alpha=1.3, pullback=pr)
    worst = max(oracle.drift_identity_residual(td, rng.uniform(-3, 3, size=2))
                for _ in range(100))
    return Check("drift_identity", worst <= 1e-4, f"max residual {worst:.2e}")


def _check_adaptive_stationarity(corrupt_update: bool) -> Check:
    """Corrected adaptive chains on the quadratic target must match an exact
    Gaussian draw; the corrupted (correction-free) rule must not."""
    alpha, c = 1.0, 1.0
    mode = (SamplerMode.NAIVE_ADAPTIVE if corrupt_update
            else SamplerMode.ADAPTIVE_LANGEVIN)
    scfg = SamplerConfig(mode, n_iterations=1500, gamma=0.05,
                         eta=1.0 / (2 * alpha), seed=17,
                         monitor=MonitorParams(s_min=1.0 / 3.0, s_max=4.0 / 3.0,
                                               k=1.0))
    result = run_chain_batch(None, QuadraticReward(c), scfg, n_chains=2000)
    exact = np.sqrt(alpha / (alpha + c)) * \
        np.random.default_rng(5).standard_normal((2000, 2))
    test = oracle.stationarity_test(result.final_latents, exact, seed=3)
    return Check("adaptive_stationarity", test.passed,
                 f"energy p={test.p_value:.4f} "
                 f"({'corrupted rule' if corrupt_update else 'corrected rule'})")


def run_validation(tmp_dir: str, corrupt_update: bool = False) -> list[Check]:
    """Run every check exactly once and return the report."""
    rng = np.random.default_rng(42)
    return [
        _check_reward_gradients(rng),
        _check_vjp_input(rng),
        _check_vjp_params(rng),
        _check_pullback_gradient(rng),
        _check_monitor(rng),
        _check_orientation_reward(),
        _check_checkpoint_roundtrip(tmp_dir),
        _check_quadratic_stationarity(),
        _check_drift_identity(rng),
        _check_adaptive_stationarity(corrupt_update),
    ]
