"""Latent-space search procedures over a pullback reward.

Five update rules share one loop harness:

* gradient ascent              x' = x + eta * g
* norm-regularized ascent      x' = x + eta1 * g + eta2 * grad log y(||x||)
* reward-guided Langevin       x' = sqrt(1-gamma) x + gamma eta g + sqrt(gamma) eps
* adaptive Langevin            Langevin with step size gamma(x) = G(r) gamma and
                               the correction drift 0.5 gamma(x) grad log G(r)
* naive adaptive               adaptive WITHOUT the correction drift (negative
                               control: its long-run law is provably biased)

where g = grad Rhat(x) and y is the chi_d density whose log-gradient is
((d-1)/||x||^2 - 1) x. The monitor G shrinks steps at high reward and
enlarges them at low reward; with G == 1 the adaptive rule degenerates to
plain Langevin, bitwise.

Each chain tracks the best reward seen (the returned sample is the
generator image of the best latent) and the first iteration at which the
reward crossed an optional threshold.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .flow import FlowModel, generate_one_step
from .rewards import PullbackReward, Reward

__all__ = [
    "SamplerMode",
    "MonitorParams",
    "SamplerConfig",
    "ChainState",
    "RunRecord",
    "BatchRunResult",
    "StepError",
    "monitor_value",
    "monitor_log_slope",
    "step_gradient_ascent",
    "step_norm_reg",
    "step_langevin",
    "step_adaptive",
    "step_naive_adaptive",
    "run_chain",
    "run_chain_batch",
]


class StepError(RuntimeError):
    """A sampler update could not be completed (non-finite or singular)."""


class SamplerMode(enum.Enum):
    GRADIENT_ASCENT = "gradient_ascent"
    NORM_REG_ASCENT = "norm_reg_ascent"
    LANGEVIN = "langevin"
    ADAPTIVE_LANGEVIN = "adaptive_langevin"
    NAIVE_ADAPTIVE = "naive_adaptive"


_STOCHASTIC = {SamplerMode.LANGEVIN, SamplerMode.ADAPTIVE_LANGEVIN,
               SamplerMode.NAIVE_ADAPTIVE}
_MONITORED = {SamplerMode.ADAPTIVE_LANGEVIN, SamplerMode.NAIVE_ADAPTIVE}


@dataclass(frozen=True)
class MonitorParams:
    """Constants of the reward-adaptive step-size monitor

        G(r) = s_min - tanh(k r) (s_max - s_min),  clamped to [s_min, s_max].

    G(0) = s_min and G -> s_max as r -> -inf: small steps at high reward,
    large steps at low reward. The clamp only acts for r > 0, where the raw
    formula would dip below s_min.
    """

    s_min: float = 1.0 / 3.0
    s_max: float = 4.0 / 3.0
    k: float = 0.3

    def __post_init__(self):
        if not 0 < self.s_min <= self.s_max:
            raise ValueError("need 0 < s_min <= s_max")
        if self.k <= 0:
            raise ValueError("k must be positive")


def monitor_value(mp: MonitorParams, reward):
    """G(reward), clamped to [s_min, s_max]. Accepts scalars or arrays."""
    raw = mp.s_min - np.tanh(mp.k * np.asarray(reward, dtype=np.float64)) \
        * (mp.s_max - mp.s_min)
    out = np.clip(raw, mp.s_min, mp.s_max)
    return float(out) if np.isscalar(reward) else out


def monitor_log_slope(mp: MonitorParams, reward):
    """d(log G)/dr, zero wherever the clamp is active.

    grad log G(Rhat(x)) equals this slope times grad Rhat(x), so the
    correction drift reuses the already-computed reward gradient.
    """
    r = np.asarray(reward, dtype=np.float64)
    th = np.tanh(mp.k * r)
    raw = mp.s_min - th * (mp.s_max - mp.s_min)
    slope = -mp.k * (1.0 - th * th) * (mp.s_max - mp.s_min) / raw
    out = np.where(raw < mp.s_min, 0.0, slope)
    return float(out) if np.isscalar(reward) else out


@dataclass(frozen=True)
class SamplerConfig:
    mode: SamplerMode
    n_iterations: int = 50
    gamma: float = 0.3
    eta: float = 0.8
    monitor: MonitorParams = field(default_factory=MonitorParams)
    eta2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.mode in _MONITORED and self.gamma * self.monitor.s_max >= 1.0:
            raise ValueError(
                f"gamma * s_max = {self.gamma * self.monitor.s_max} must stay "
                "below 1 so the rescaled contraction stays real")


@dataclass
class ChainState:
    """Evolving state of one chain: current latent, best-so-far, history.

    ``trajectory`` (one row per scored iterate) is only retained when the
    chain was run with ``keep_trajectory``.
    """

    x: np.ndarray
    iteration: int
    best_reward: float
    best_latent: np.ndarray
    reward_history: list[float]
    trajectory: np.ndarray | None = None


@dataclass
class RunRecord:
    """Outcome of one chain run.

    ``final_output`` is the generator image of the best latent; ``chain.x``
    is the last iterate (the distribution-level sample). A chain whose
    reward never reached the threshold has ``nfe_to_threshold`` None; hits
    count reward evaluations, so a hit at the initial point costs 1.
    """

    final_output: np.ndarray
    chain: ChainState
    nfe_to_threshold: int | None = None
    aborted: bool = False
    error: str | None = None


def _finite_or_raise(g: np.ndarray):
    if not np.all(np.isfinite(g)):
        raise StepError("non-finite reward gradient")


def _chi_log_grad(x: np.ndarray) -> np.ndarray:
    """Gradient of the chi_d log-density (d-1) log r - r^2/2 at r = ||x||."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    r2 = np.sum(x * x, axis=-1, keepdims=x.ndim > 1)
    if np.any(r2 == 0.0):
        raise StepError("norm regularizer is singular at x = 0")
    return ((d - 1) / r2 - 1.0) * x


def _update(mode: SamplerMode, x, r, g, cfg: SamplerConfig, noise):
    """One update given the precomputed reward value r and gradient g.

    ``x``/``g`` may be (d,) or (n, d); for batches, r is (n,) and the
    monitor-dependent factors broadcast per chain.
    """
    if mode is SamplerMode.GRADIENT_ASCENT:
        return x + cfg.eta * g
    if mode is SamplerMode.NORM_REG_ASCENT:
        return x + cfg.eta * g + cfg.eta2 * _chi_log_grad(x)
    if mode is SamplerMode.LANGEVIN:
        gm = cfg.gamma
    else:
        G = monitor_value(cfg.monitor, r)
        gm = G * cfg.gamma
        if np.ndim(gm) == 1:
            gm = gm[:, None]
    base = np.sqrt(1.0 - gm) * x + (gm * cfg.eta) * g
    if mode is SamplerMode.ADAPTIVE_LANGEVIN:
        slope = monitor_log_slope(cfg.monitor, r)
        if np.ndim(slope) == 1:
            slope = slope[:, None]
        base = base + (0.5 * gm * slope) * g
    return base + np.sqrt(gm) * noise


def step_gradient_ascent(x: np.ndarray, pr: PullbackReward, eta: float) -> np.ndarray:
    """Plain ascent x' = x + eta grad Rhat(x)."""
    _, g = pr.value_and_grad(x)
    _finite_or_raise(g)
    return x + eta * g


def step_norm_reg(x: np.ndarray, pr: PullbackReward, eta1: float,
                  eta2: float) -> np.ndarray:
    """Ascent with the chi_d radial regularizer pulling ||x|| toward its mode."""
    _, g = pr.value_and_grad(x)
    _finite_or_raise(g)
    return x + eta1 * g + eta2 * _chi_log_grad(x)


def step_langevin(x: np.ndarray, pr: PullbackReward, gamma: float, eta: float,
                  noise: np.ndarray) -> np.ndarray:
    """x' = sqrt(1-gamma) x + gamma eta grad Rhat(x) + sqrt(gamma) noise."""
    r, g = pr.value_and_grad(x)
    _finite_or_raise(g)
    return np.sqrt(1.0 - gamma) * x + (gamma * eta) * g + np.sqrt(gamma) * noise


def step_adaptive(x: np.ndarray, pr: PullbackReward, gamma: float, eta: float,
                  mp: MonitorParams, noise: np.ndarray) -> np.ndarray:
    """Monitored step with the stationarity-preserving correction drift."""
    r, g = pr.value_and_grad(x)
    _finite_or_raise(g)
    cfg = SamplerConfig(SamplerMode.ADAPTIVE_LANGEVIN, gamma=gamma, eta=eta,
                        monitor=mp)
    return _update(SamplerMode.ADAPTIVE_LANGEVIN, x, r, g, cfg, noise)


def step_naive_adaptive(x: np.ndarray, pr: PullbackReward, gamma: float,
                        eta: float, mp: MonitorParams,
                        noise: np.ndarray) -> np.ndarray:
    """Monitored step WITHOUT the correction drift (biased; negative control)."""
    r, g = pr.value_and_grad(x)
    _finite_or_raise(g)
    cfg = SamplerConfig(SamplerMode.NAIVE_ADAPTIVE, gamma=gamma, eta=eta,
                        monitor=mp)
    return _update(SamplerMode.NAIVE_ADAPTIVE, x, r, g, cfg, noise)


def run_chain(model: FlowModel | None, reward: Reward, cfg: SamplerConfig,
              threshold: float | None = None, dim: int | None = None,
              noise_log: list | None = None,
              keep_trajectory: bool = False) -> RunRecord:
    """Run one chain of ``cfg.n_iterations`` update steps from x0 ~ N(0, I).

    The reward is evaluated at every iterate x_0 .. x_M (the loop scores
    x_i before updating, and the final iterate is scored after the loop so
    the best-tracker sees every produced latent). On a step failure the
    partial record is returned with ``aborted`` set.
    """
    pr = PullbackReward(reward, model)
    d = dim if dim is not None else pr.dim
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal(d)

    best_reward = -np.inf
    best_latent = x
    history: list[float] = []
    visited: list[np.ndarray] = []
    aborted = False
    error = None
    it = 0
    for it in range(cfg.n_iterations):
        try:
            r, g = pr.value_and_grad(x)
            _finite_or_raise(g)
            history.append(float(r))
            if keep_trajectory:
                visited.append(x)
            if r > best_reward:
                best_reward = float(r)
                best_latent = x
            if cfg.mode in _STOCHASTIC:
                noise = rng.standard_normal(d)
                if noise_log is not None:
                    noise_log.append(noise)
            else:
                noise = None
            x = _update(cfg.mode, x, r, g, cfg, noise)
        except StepError as exc:
            aborted = True
            error = str(exc)
            break
    else:
        it = cfg.n_iterations

    if not aborted:
        r_final = float(pr.value(x))
        history.append(r_final)
        if keep_trajectory:
            visited.append(x)
        if r_final > best_reward:
            best_reward = r_final
            best_latent = x

    nfe = None
    if threshold is not None:
        for i, r in enumerate(history):
            if r >= threshold:
                nfe = i + 1
                break

    chain = ChainState(x=x, iteration=it, best_reward=best_reward,
                       best_latent=best_latent, reward_history=history,
                       trajectory=np.array(visited) if keep_trajectory else None)
    final_output = best_latent if model is None else generate_one_step(model, best_latent)
    return RunRecord(final_output=final_output, chain=chain,
                     nfe_to_threshold=nfe, aborted=aborted, error=error)


@dataclass
class BatchRunResult:
    """Vectorized chains sharing one noise stream (one draw per iteration).

    ``reward_history[i, j]`` is the reward of chain i at iterate j, for
    j = 0 .. n_iterations. ``nfe_to_threshold`` holds evaluation counts
    with 0 marking a censored chain.
    """

    final_latents: np.ndarray
    final_outputs: np.ndarray
    best_latents: np.ndarray
    best_rewards: np.ndarray
    best_outputs: np.ndarray
    reward_history: np.ndarray
    nfe_to_threshold: np.ndarray

    @property
    def n_chains(self) -> int:
        return self.final_latents.shape[0]

    def nfe_list(self) -> list[int | None]:
        return [int(v) if v > 0 else None for v in self.nfe_to_threshold]


def run_chain_batch(model: FlowModel | None, reward: Reward, cfg: SamplerConfig,
                    n_chains: int, threshold: float | None = None,
                    dim: int | None = None,
                    iterate_hook=None) -> BatchRunResult:
    """Run ``n_chains`` chains in lockstep from one seeded stream.

    Two configs with equal seeds draw identical initial points and,
    mode permitting, identical per-iteration noise, which makes method
    comparisons paired. Semantics per chain match :func:`run_chain`.
    ``iterate_hook(i, x)`` is called with every scored iterate, e.g. to
    accumulate occupation statistics along the chains.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    pr = PullbackReward(reward, model)
    d = dim if dim is not None else pr.dim
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal((n_chains, d))

    history = np.empty((n_chains, cfg.n_iterations + 1))
    best_rewards = np.full(n_chains, -np.inf)
    best_latents = x.copy()
    for i in range(cfg.n_iterations):
        r, g = pr.value_and_grad(x)
        if not np.all(np.isfinite(g)):
            raise StepError(f"non-finite reward gradient at iteration {i}")
        history[:, i] = r
        improved = r > best_rewards
        best_rewards[improved] = r[improved]
        best_latents[improved] = x[improved]
        if iterate_hook is not None:
            iterate_hook(i, x)
        noise = rng.standard_normal((n_chains, d)) if cfg.mode in _STOCHASTIC else None
        x = _update(cfg.mode, x, r, g, cfg, noise)

    r_final = pr.value(x)
    history[:, cfg.n_iterations] = r_final
    improved = r_final > best_rewards
    best_rewards[improved] = r_final[improved]
    best_latents[improved] = x[improved]
    if iterate_hook is not None:
        iterate_hook(cfg.n_iterations, x)

    if threshold is not None:
        hit = history >= threshold
        first = hit.argmax(axis=1)
        nfe = np.where(hit.any(axis=1), first + 1, 0)
    else:
        nfe = np.zeros(n_chains, dtype=np.int64)

    final_outputs = x if model is None else generate_one_step(model, x)
    best_outputs = (best_latents if model is None
                    else generate_one_step(model, best_latents))
    return BatchRunResult(final_latents=x, final_outputs=final_outputs,
                          best_latents=best_latents, best_rewards=best_rewards,
                          best_outputs=best_outputs, reward_history=history,
                          nfe_to_threshold=nfe.astype(np.int64))
