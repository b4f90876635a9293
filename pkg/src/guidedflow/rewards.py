"""Differentiable rewards over data space and their latent-space pullbacks.

The pullback of a reward R through the one-step generator F is
Rhat = R o F; its gradient is J_F(x)^T grad R(F(x)), obtained with one
forward pass and one input-VJP. A pullback built without a generator uses
the identity map, which is the closed-form route used by the oracle tests.

The module also houses the multi-object orientation reward: the negative
KL divergence between predicted categorical angle distributions and
discretized Gaussians centered at the target angles, averaged over objects
and summed over the selected angles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import mlp
from .flow import FlowModel

__all__ = [
    "Reward",
    "ToyMixtureReward",
    "QuadraticReward",
    "PullbackReward",
    "CategoricalAngleDist",
    "OrientationTarget",
    "ANGLE_NAMES",
    "ANGLE_BINS",
    "ANGLE_CIRCULAR",
    "DEFAULT_ANGLE_SIGMAS",
    "discretize_gaussian",
    "kl_categorical",
    "orientation_reward",
    "orientation_reward_from_distributions",
    "load_angle_distributions",
]

KL_FLOOR = 1e-12


class Reward:
    """Base class for differentiable rewards on R^d.

    Subclasses implement ``value`` and ``grad`` accepting a single point
    (d,) or a batch (n, d). Custom rewards subclass this directly.
    """

    def value(self, x: np.ndarray):
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ToyMixtureReward(Reward):
    """Two Gaussian bumps of height 1 and 0.1 at (4,0) and (-4,0), offset
    by -1 so the reward is non-positive away from the dominant mode:

        R(x, y) = exp(-((x-4)^2 + y^2)/2) + 0.1 exp(-((x+4)^2 + y^2)/2) - 1

    Range: -1 < R <= 0.1 for finite inputs.
    """

    centers = np.array([[4.0, 0.0], [-4.0, 0.0]])
    amplitudes = np.array([1.0, 0.1])
    offset = -1.0

    def _bumps(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d2 = ((x[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-0.5 * d2)

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        b = self._bumps(x)
        vals = b @ self.amplitudes + self.offset
        return float(vals[0]) if x.ndim == 1 else vals

    def grad(self, x):
        x = np.asarray(x, dtype=np.float64)
        x2 = np.atleast_2d(x)
        b = self._bumps(x2)
        diff = x2[:, None, :] - self.centers[None, :, :]
        g = -np.einsum("nk,k,nkd->nd", b, self.amplitudes, diff)
        return g[0] if x.ndim == 1 else g


class QuadraticReward(Reward):
    """R(x) = -c ||x||^2 / 2, the closed-form validation reward."""

    def __init__(self, c: float = 1.0):
        if c <= 0:
            raise ValueError("c must be positive")
        self.c = c

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        v = -0.5 * self.c * np.sum(x * x, axis=-1)
        return float(v) if x.ndim == 1 else v

    def grad(self, x):
        return -self.c * np.asarray(x, dtype=np.float64)


class PullbackReward:
    """Rhat = R o F for a one-step generator F, or R itself when
    ``generator`` is None (identity map)."""

    def __init__(self, reward: Reward, generator: FlowModel | None = None):
        self.reward = reward
        self.generator = generator

    @property
    def dim(self) -> int:
        return 2 if self.generator is None else self.generator.dim

    def push(self, x: np.ndarray) -> np.ndarray:
        """F(x): data-space image of the latent point(s)."""
        if self.generator is None:
            return np.asarray(x, dtype=np.float64)
        from .flow import generate_one_step
        return generate_one_step(self.generator, x)

    def value(self, x):
        return self.reward.value(self.push(x))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.value_and_grad(x)[1]

    def value_and_grad(self, x: np.ndarray):
        """One reward-and-gradient evaluation (the NFE unit).

        Costs one network forward plus one input-VJP; with the identity
        generator it reduces to the reward's own closed forms.
        """
        x = np.asarray(x, dtype=np.float64)
        if self.generator is None:
            return self.reward.value(x), self.reward.grad(x)
        params = self.generator.params
        if x.ndim == 1:
            v, tape = mlp.forward(params, x, 0.0)
            y = x + v
            r = self.reward.value(y)
            u = self.reward.grad(y)
            # J_F = I + J_v, so the pullback adds u to the network VJP
            return r, u + mlp.vjp_input(params, tape, u)
        v, tape = mlp.forward_batch(params, x, 0.0)
        y = x + v
        r = self.reward.value(y)
        u = self.reward.grad(y)
        return r, u + mlp.vjp_input_batch(params, tape, u)


# --- orientation reward over categorical angle distributions ---

ANGLE_NAMES = ("azimuth", "polar", "rotation")
ANGLE_BINS = {"azimuth": 360, "polar": 180, "rotation": 360}
ANGLE_CIRCULAR = {"azimuth": True, "polar": False, "rotation": True}
DEFAULT_ANGLE_SIGMAS = {"azimuth": 20.0, "polar": 2.0, "rotation": 1.0}


@dataclass(frozen=True)
class CategoricalAngleDist:
    """Probabilities over one-degree bins; bin k covers [k, k+1) degrees."""

    probs: np.ndarray
    circular: bool

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probs must be a non-empty vector")
        if np.any(p < 0):
            raise ValueError("probabilities must be >= 0")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()}, expected 1")

    @property
    def n_bins(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class OrientationTarget:
    """Target Euler angles for one object, with per-angle Gaussian widths."""

    azimuth: float
    polar: float
    rotation: float
    sigma_azimuth: float = 20.0
    sigma_polar: float = 2.0
    sigma_rotation: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.azimuth < 360.0:
            raise ValueError("azimuth must lie in [0, 360)")
        if not 0.0 <= self.polar < 180.0:
            raise ValueError("polar must lie in [0, 180)")
        if not 0.0 <= self.rotation < 360.0:
            raise ValueError("rotation must lie in [0, 360)")
        if min(self.sigma_azimuth, self.sigma_polar, self.sigma_rotation) <= 0:
            raise ValueError("sigmas must be positive")

    def angle(self, name: str) -> float:
        return {"azimuth": self.azimuth, "polar": self.polar,
                "rotation": self.rotation}[name]

    def sigma(self, name: str) -> float:
        return {"azimuth": self.sigma_azimuth, "polar": self.sigma_polar,
                "rotation": self.sigma_rotation}[name]


def discretize_gaussian(center: float, sigma: float, n_bins: int,
                        circular: bool) -> CategoricalAngleDist:
    """Gaussian mass over one-degree bins, centered at the reference angle.

    The reference is snapped to the center of its containing bin (bin k has
    center k + 0.5). Circular angles sum the density over +-2 full turns;
    non-circular ones simply renormalize over the covered range.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not 0.0 <= center < n_bins:
        raise ValueError(f"center {center} outside [0, {n_bins})")
    bin_centers = np.arange(n_bins, dtype=np.float64) + 0.5
    mu = np.floor(center) + 0.5
    if circular:
        offsets = np.arange(-2, 3) * float(n_bins)
        d = bin_centers[:, None] - mu + offsets[None, :]
        mass = np.exp(-0.5 * (d / sigma) ** 2).sum(axis=1)
    else:
        d = bin_centers - mu
        mass = np.exp(-0.5 * (d / sigma) ** 2)
    return CategoricalAngleDist(mass / mass.sum(), circular)


def kl_categorical(p: CategoricalAngleDist, q: CategoricalAngleDist) -> float:
    """D_KL(p || q); zero-mass bins of p contribute 0, and empty bins of q
    are floored at 1e-12 so the divergence stays finite."""
    if p.n_bins != q.n_bins:
        raise ValueError(f"bin counts differ: {p.n_bins} vs {q.n_bins}")
    pk = p.probs
    qk = np.where(q.probs > 0.0, q.probs, KL_FLOOR)
    nz = pk > 0
    return float(np.sum(pk[nz] * np.log(pk[nz] / qk[nz])))


def orientation_reward_from_distributions(
        preds: list[dict[str, CategoricalAngleDist]],
        target_dists: list[dict[str, CategoricalAngleDist]],
        angles: tuple[str, ...] = ANGLE_NAMES) -> float:
    """Negative KL against already-built target distributions, summed over
    the selected angles and averaged over objects."""
    if len(preds) != len(target_dists):
        raise ValueError(f"{len(preds)} predictions vs {len(target_dists)} targets")
    if not target_dists:
        raise ValueError("at least one object required")
    total = 0.0
    for pred, target in zip(preds, target_dists):
        for name in angles:
            if name not in pred:
                raise ValueError(f"missing predicted distribution for {name!r}")
            if name not in target:
                raise ValueError(f"missing target distribution for {name!r}")
            total += kl_categorical(pred[name], target[name])
    return -total / len(target_dists)


def orientation_reward(preds: list[dict[str, CategoricalAngleDist]],
                       targets: list[OrientationTarget],
                       angles: tuple[str, ...] = ANGLE_NAMES) -> float:
    """Negative KL between predictions and discretized-Gaussian targets,
    summed over the selected angles and averaged over objects."""
    unknown = set(angles) - set(ANGLE_NAMES)
    if unknown:
        raise ValueError(f"unknown angles: {sorted(unknown)}")
    target_dists = [
        {name: discretize_gaussian(t.angle(name), t.sigma(name),
                                   ANGLE_BINS[name], ANGLE_CIRCULAR[name])
         for name in angles}
        for t in targets]
    return orientation_reward_from_distributions(preds, target_dists, angles)


def load_angle_distributions(path) -> dict[str, dict[str, CategoricalAngleDist]]:
    """Read per-object angle distributions from a CSV fixture.

    Columns: object_id, angle_name, bin, probability. Bins omitted from the
    file carry zero mass. Returns {object_id: {angle_name: dist}}.
    """
    cells: dict[str, dict[str, np.ndarray]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            oid = row["object_id"]
            name = row["angle_name"]
            if name not in ANGLE_BINS:
                raise ValueError(f"unknown angle_name {name!r} in {path}")
            probs = cells.setdefault(oid, {}).setdefault(
                name, np.zeros(ANGLE_BINS[name]))
            probs[int(row["bin"])] = float(row["probability"])
    return {oid: {name: CategoricalAngleDist(p, ANGLE_CIRCULAR[name])
                  for name, p in per_angle.items()}
            for oid, per_angle in cells.items()}
