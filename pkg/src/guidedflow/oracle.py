"""Ground truth for the reward-tilted target law and stationarity checks.

The target of the Langevin samplers is the tilted prior

    q*(x)  proportional to  exp(-||x||^2 / 2) * exp(Rhat(x) / alpha),

the maximizer of expected reward minus alpha times the KL divergence from
the standard normal prior. Because the desk-scale latent space is 2D and
the reward is bounded above, self-normalized importance resampling with
the prior as proposal samples q* essentially exactly; the effective sample
size guards against weight degeneracy.

``drift_identity_residual`` checks numerically that half the score of q*
equals the Langevin drift -x/2 + grad Rhat / (2 alpha), and
``stationarity_test`` is an energy-distance permutation two-sample test
used to compare sampler output against the oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rewards import PullbackReward

__all__ = [
    "TargetDensity",
    "OracleSamples",
    "OracleDegeneracyError",
    "log_q_star_unnorm",
    "sample_q_star",
    "drift_identity_residual",
    "energy_distance",
    "stationarity_test",
    "StationarityResult",
]

FD_STEP_REL = 1e-4


class OracleDegeneracyError(RuntimeError):
    """Importance weights collapsed; raise the proposal count."""


@dataclass(frozen=True)
class TargetDensity:
    """q*(x) ~ q(x) exp(Rhat(x)/alpha) with regularization strength alpha."""

    alpha: float
    pullback: PullbackReward

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class OracleSamples:
    points: np.ndarray
    method: str
    effective_sample_size: float


def log_q_star_unnorm(td: TargetDensity, x: np.ndarray):
    """-||x||^2/2 + Rhat(x)/alpha, the normalizing constant dropped."""
    x = np.asarray(x, dtype=np.float64)
    quad = -0.5 * np.sum(x * x, axis=-1)
    return quad + np.asarray(td.pullback.value(x)) / td.alpha


def sample_q_star(td: TargetDensity, seed: int, n: int,
                  n_proposals: int | None = None) -> OracleSamples:
    """Self-normalized importance resampling with proposal N(0, I).

    Draws ``n_proposals`` prior points (default 100 per requested sample,
    at least 10^5), weights them by exp(Rhat/alpha), reports the effective
    sample size and resamples ``n`` points with replacement.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n_proposals is None:
        n_proposals = max(100 * n, 100_000)
    rng = np.random.default_rng(seed)
    d = td.pullback.dim
    proposals = rng.standard_normal((n_proposals, d))
    logw = np.asarray(td.pullback.value(proposals)) / td.alpha
    w = np.exp(logw - logw.max())
    ess = float(w.sum() ** 2 / np.sum(w * w))
    if ess < 0.01 * n_proposals:
        raise OracleDegeneracyError(
            f"effective sample size {ess:.1f} of {n_proposals} proposals "
            "(< 1%); raise n_proposals")
    idx = rng.choice(n_proposals, size=n, replace=True, p=w / w.sum())
    return OracleSamples(points=proposals[idx], method="importance-resampled",
                         effective_sample_size=ess)


def drift_identity_residual(td: TargetDensity, x: np.ndarray) -> float:
    """|| 0.5 grad log q*(x) - (-x/2 + grad Rhat(x)/(2 alpha)) ||.

    The score is taken by central finite differences of the unnormalized
    log-density (relative step 1e-4), so the residual measures both the
    analytic identity and the VJP gradient route.
    """
    x = np.asarray(x, dtype=np.float64)
    score_fd = np.empty_like(x)
    for i in range(x.size):
        h = FD_STEP_REL * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        score_fd[i] = (log_q_star_unnorm(td, xp) - log_q_star_unnorm(td, xm)) / (2 * h)
    drift = -0.5 * x + td.pullback.grad(x) / (2.0 * td.alpha)
    return float(np.linalg.norm(0.5 * score_fd - drift))


def energy_distance(x: np.ndarray, y: np.ndarray) -> float:
    """2 E||X-Y|| - E||X-X'|| - E||Y-Y'|| with within-set means over i != j."""
    dxy = _pairwise(x, y)
    dxx = _pairwise(x, x)
    dyy = _pairwise(y, y)
    m, n = len(x), len(y)
    exy = dxy.mean()
    exx = dxx.sum() / (m * (m - 1))
    eyy = dyy.sum() / (n * (n - 1))
    return float(2 * exy - exx - eyy)


def _pairwise(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d2 = (np.sum(x * x, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :]
          - 2.0 * x @ y.T)
    return np.sqrt(np.maximum(d2, 0.0))


@dataclass(frozen=True)
class StationarityResult:
    statistic: float
    p_value: float
    passed: bool
    n_permutations: int


def stationarity_test(samples_a: np.ndarray, samples_b: np.ndarray,
                      n_permutations: int = 200, seed: int = 0,
                      significance: float = 0.01) -> StationarityResult:
    """Energy-distance permutation test; passes iff p > significance.

    The pooled pairwise distance matrix is computed once; each permutation
    relabels the pool and recomputes the statistic from sub-blocks.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("both sample sets need at least 2 points")
    m, n = len(a), len(b)
    pool = np.concatenate([a, b], axis=0)
    dist = _pairwise(pool, pool)
    total = dist.sum()

    def statistic(idx_a: np.ndarray) -> float:
        # one matvec per permutation: with u = dist @ 1_A,
        # saa = 1_A . u and sab = sum(u) - saa
        mask = np.zeros(m + n)
        mask[idx_a] = 1.0
        u = dist @ mask
        saa = float(mask @ u)
        sab = float(u.sum()) - saa
        sbb = total - saa - 2 * sab
        return float(2 * sab / (m * n) - saa / (m * (m - 1)) - sbb / (n * (n - 1)))

    observed = statistic(np.arange(m))
    rng = np.random.default_rng(seed)
    count = 0
    for _ in range(n_permutations):
        perm = rng.permutation(m + n)[:m]
        if statistic(perm) >= observed:
            count += 1
    p = (1 + count) / (1 + n_permutations)
    return StationarityResult(statistic=observed, p_value=p,
                              passed=p > significance,
                              n_permutations=n_permutations)
