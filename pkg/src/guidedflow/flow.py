"""Rectified-flow training on 2D Gaussian mixtures and reflow distillation.

A velocity field v(x, t) is regressed onto straight-line displacements
x1 - x0 along linear interpolations between prior and data samples.
``reflow_distill`` re-trains on couplings produced by integrating the
previous model, straightening trajectories until a single Euler step
(the one-step generator F(x) = x + v(x, 0)) is accurate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mlp
from .mlp import NetworkParams, ParamGrads

__all__ = [
    "MixtureSpec",
    "TrainConfig",
    "FlowModel",
    "TrainingDivergedError",
    "default_mixture",
    "sample_prior",
    "sample_mixture",
    "rectified_flow_loss",
    "train",
    "reflow_distill",
    "generate_one_step",
    "generate_multi_step",
    "straightness",
]


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture in R^d (the toy data distribution)."""

    means: tuple[tuple[float, ...], ...]
    stddevs: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.means) == len(self.stddevs) == len(self.weights)):
            raise ValueError("means, stddevs, weights must have equal length")
        if any(s <= 0 for s in self.stddevs):
            raise ValueError("stddevs must be positive")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        dims = {len(m) for m in self.means}
        if len(dims) != 1:
            raise ValueError("all means must share one dimension")

    @property
    def dim(self) -> int:
        return len(self.means[0])


def default_mixture() -> MixtureSpec:
    """Two well-separated modes at (+-4, 0) with stddevs 0.3 and 0.9."""
    return MixtureSpec(means=((4.0, 0.0), (-4.0, 0.0)),
                       stddevs=(0.3, 0.9),
                       weights=(0.5, 0.5))


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    num_steps: int = 20000
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden_width: int = 128
    hidden_depth: int = 4
    init_scale: float = 1.0

    def __post_init__(self):
        if self.num_steps < 0:
            raise ValueError("num_steps must be >= 0")
        if self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("batch_size and learning_rate must be positive")


@dataclass(frozen=True)
class FlowModel:
    """A trained velocity field plus its rectification level.

    Level 1 is the base model; each distillation pass increments the level,
    so a twice-distilled model has level 3.
    """

    params: NetworkParams
    rectification_level: int
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rectification_level < 1:
            raise ValueError("rectification_level must be >= 1")

    @property
    def dim(self) -> int:
        return self.params.output_dim


def sample_prior(seed: int, n: int, dim: int = 2) -> np.ndarray:
    """n i.i.d. standard normal points, deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.random.default_rng(seed).standard_normal((n, dim))


def sample_mixture(spec: MixtureSpec, seed: int, n: int) -> np.ndarray:
    """n mixture samples: component by weight, then isotropic Gaussian."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    means = np.asarray(spec.means, dtype=np.float64)
    stds = np.asarray(spec.stddevs, dtype=np.float64)
    comp = rng.choice(len(spec.weights), size=n, p=np.asarray(spec.weights))
    eps = rng.standard_normal((n, spec.dim))
    return means[comp] + stds[comp, None] * eps


def _loss_and_grad_batch(params: NetworkParams, x0: np.ndarray, x1: np.ndarray,
                         t: np.ndarray) -> tuple[float, ParamGrads]:
    """Mean squared velocity error over a batch and its parameter gradient."""
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    target = x1 - x0
    v, tape = mlp.forward_batch(params, xt, t)
    resid = v - target
    loss = float(np.sum(resid * resid) / x0.shape[0])
    # d(loss)/dv = 2 * resid / n; vjp_params on a batched tape sums over rows
    grads = mlp.vjp_params(params, tape, (2.0 / x0.shape[0]) * resid)
    return loss, grads


def rectified_flow_loss(model: FlowModel, x0: np.ndarray, x1: np.ndarray,
                        t: float) -> tuple[float, ParamGrads]:
    """Squared velocity error ||v((1-t)x0 + t x1, t) - (x1 - x0)||^2 at one
    probe point, with its parameter gradient."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    loss, grads = _loss_and_grad_batch(model.params, x0[None, :], x1[None, :],
                                       np.array([t]))
    return loss, grads


class _Adam:
    """Adaptive-moment optimizer over the (weights, biases) tree."""

    def __init__(self, params: NetworkParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m_w = [np.zeros_like(w) for w in params.weights]
        self.v_w = [np.zeros_like(w) for w in params.weights]
        self.m_b = [np.zeros_like(b) for b in params.biases]
        self.v_b = [np.zeros_like(b) for b in params.biases]
        self.t = 0

    def step(self, params: NetworkParams, grads: ParamGrads) -> NetworkParams:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        new_w = []
        new_b = []
        for l in range(len(params.weights)):
            self.m_w[l] = cfg.beta1 * self.m_w[l] + (1 - cfg.beta1) * grads.weights[l]
            self.v_w[l] = cfg.beta2 * self.v_w[l] + (1 - cfg.beta2) * grads.weights[l] ** 2
            new_w.append(params.weights[l] - cfg.learning_rate *
                         (self.m_w[l] / bc1) / (np.sqrt(self.v_w[l] / bc2) + cfg.eps))
            self.m_b[l] = cfg.beta1 * self.m_b[l] + (1 - cfg.beta1) * grads.biases[l]
            self.v_b[l] = cfg.beta2 * self.v_b[l] + (1 - cfg.beta2) * grads.biases[l] ** 2
            new_b.append(params.biases[l] - cfg.learning_rate *
                         (self.m_b[l] / bc1) / (np.sqrt(self.v_b[l] / bc2) + cfg.eps))
        return NetworkParams(tuple(new_w), tuple(new_b), params.input_dim,
                             params.hidden_width, params.hidden_depth,
                             params.output_dim)


def _train_on_sampler(params: NetworkParams, cfg: TrainConfig, draw_batch,
                      loss_log: list | None = None) -> tuple[NetworkParams, float]:
    """Shared optimization loop; ``draw_batch(rng)`` yields (x0, x1) pairs."""
    opt = _Adam(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    running = 0.0
    for step in range(cfg.num_steps):
        x0, x1 = draw_batch(rng)
        t = rng.uniform(0.0, 1.0, size=cfg.batch_size)
        loss, grads = _loss_and_grad_batch(params, x0, x1, t)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss {loss!r} at step {step} (lr={cfg.learning_rate})")
        running = loss if step == 0 else 0.99 * running + 0.01 * loss
        if loss_log is not None:
            loss_log.append((step, loss, running))
        params = opt.step(params, grads)
    return params, running


def train(spec: MixtureSpec, cfg: TrainConfig,
          loss_log: list | None = None) -> FlowModel:
    """Train a level-1 model on fresh independent (prior, data) couplings."""
    params = mlp.init_params(cfg.seed, cfg.init_scale, input_dim=spec.dim + 1,
                             hidden_width=cfg.hidden_width,
                             hidden_depth=cfg.hidden_depth, output_dim=spec.dim)

    def draw_batch(rng):
        x0 = rng.standard_normal((cfg.batch_size, spec.dim))
        comp = rng.choice(len(spec.weights), size=cfg.batch_size,
                          p=np.asarray(spec.weights))
        means = np.asarray(spec.means)
        stds = np.asarray(spec.stddevs)
        x1 = means[comp] + stds[comp, None] * rng.standard_normal(
            (cfg.batch_size, spec.dim))
        return x0, x1

    params, running = _train_on_sampler(params, cfg, draw_batch, loss_log)
    meta = {"seed": cfg.seed, "num_steps": cfg.num_steps,
            "batch_size": cfg.batch_size, "learning_rate": cfg.learning_rate,
            "final_running_loss": running, "coupling": "independent"}
    return FlowModel(params, rectification_level=1, training_meta=meta)


def generate_one_step(model: FlowModel, x0: np.ndarray) -> np.ndarray:
    """One-step generator F(x) = x + v(x, 0); accepts (d,) or (n, d)."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim == 1:
        v, _ = mlp.forward(model.params, x0, 0.0)
    else:
        v, _ = mlp.forward_batch(model.params, x0, 0.0)
    return x0 + v


def generate_multi_step(model: FlowModel, x0: np.ndarray, n_steps: int) -> np.ndarray:
    """Euler integration of dx/dt = v(x, t) from t=0 to 1; (d,) or (n, d)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = np.asarray(x0, dtype=np.float64)
    batched = x.ndim == 2
    dt = 1.0 / n_steps
    for i in range(n_steps):
        t = i * dt
        v, _ = (mlp.forward_batch(model.params, x, t) if batched
                else mlp.forward(model.params, x, t))
        x = x + v * dt
        if not np.all(np.isfinite(x)):
            raise TrainingDivergedError(f"non-finite state at integration step {i}")
    return x


def reflow_distill(model: FlowModel, spec: MixtureSpec, cfg: TrainConfig,
                   integration_steps: int = 100, pool_size: int = 25_000,
                   loss_log: list | None = None) -> FlowModel:
    """One reflow pass: regress on couplings (x0, teacher(x0)).

    The teacher trajectory is integrated with ``integration_steps`` Euler
    steps over a fixed pool of prior points; the student starts from the
    teacher's parameters. The rectification level increments by one.
    """
    if integration_steps < 1:
        raise ValueError("integration_steps must be >= 1")
    pool_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xF10]))
    x0_pool = pool_rng.standard_normal((pool_size, spec.dim))
    x1_pool = generate_multi_step(model, x0_pool, integration_steps)

    def draw_batch(rng):
        idx = rng.integers(0, pool_size, size=cfg.batch_size)
        return x0_pool[idx], x1_pool[idx]

    params, running = _train_on_sampler(model.params, cfg, draw_batch, loss_log)
    meta = {"seed": cfg.seed, "num_steps": cfg.num_steps,
            "batch_size": cfg.batch_size, "learning_rate": cfg.learning_rate,
            "final_running_loss": running,
            "coupling": f"reflow(integration_steps={integration_steps}, "
                        f"pool_size={pool_size})"}
    return FlowModel(params, model.rectification_level + 1, meta)


def straightness(model: FlowModel, n_eval: int, n_steps: int,
                 seed: int = 0) -> float:
    """Mean squared deviation of the velocity from the straight chord.

    Trajectories are integrated from prior points; for each, the average of
    ||v(x_t, t) - (x1 - x0)||^2 over the visited steps is taken, then the
    mean over trajectories. Zero iff every trajectory is exactly straight.
    """
    if n_eval < 1 or n_steps < 1:
        raise ValueError("n_eval and n_steps must be >= 1")
    x0 = sample_prior(seed, n_eval, model.dim)
    x = x0.copy()
    dt = 1.0 / n_steps
    velocities = []
    for i in range(n_steps):
        v, _ = mlp.forward_batch(model.params, x, i * dt)
        velocities.append(v)
        x = x + v * dt
    chord = x - x0
    dev = 0.0
    for v in velocities:
        diff = v - chord
        dev += np.sum(diff * diff, axis=1)
    return float(np.mean(dev / n_steps))
