"""Reward-guided Langevin sampling in the latent space of one-step flows.

The package trains a rectified-flow velocity field on a 2D Gaussian
mixture, distills it into a one-step generator, and searches its latent
space for high-reward samples with four competing procedures whose
stationary behavior is checked against an exact oracle of the
reward-tilted target law.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .flow import (FlowModel, MixtureSpec, TrainConfig, default_mixture,
                   generate_multi_step, generate_one_step, reflow_distill,
                   sample_mixture, sample_prior, straightness, train)
from .metrics import mean_iterations_to_threshold, mmd_rbf, mode_proportions
from .oracle import (OracleSamples, TargetDensity, drift_identity_residual,
                     log_q_star_unnorm, sample_q_star, stationarity_test)
from .rewards import (CategoricalAngleDist, OrientationTarget, PullbackReward,
                      QuadraticReward, Reward, ToyMixtureReward,
                      discretize_gaussian, kl_categorical, orientation_reward)
from .samplers import (ChainState, MonitorParams, RunRecord, SamplerConfig,
                       SamplerMode, monitor_value, run_chain, run_chain_batch,
                       step_adaptive, step_gradient_ascent, step_langevin,
                       step_naive_adaptive, step_norm_reg)

__version__ = "0.1.0"
