"""Stochastic bandit environment and pseudo-regret accounting.

Arms are 0-indexed and kept sorted so that arm 0 is the unique best arm.
Regret is the gap-weighted count of pulls, ``sum_j gap_j * n_j(t)``, using the
true means rather than realized rewards.

Environment state carries a leading replica axis so several independent runs
can share one vectorized simulation. Shapes: counts ``(replicas, agents, K)``,
cumulative regret ``(replicas,)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError

ARM_KINDS = ("bernoulli", "uniform01", "gaussian")


@dataclass(frozen=True)
class ArmModel:
    kind: str
    mu: float
    sigma2: float = 0.0

    def __post_init__(self):
        if self.kind not in ARM_KINDS:
            raise ConfigError(f"unknown arm kind {self.kind!r}")
        if not math.isfinite(self.mu):
            raise ConfigError(f"arm mean must be finite, got {self.mu!r}")
        if self.kind == "gaussian":
            if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
                raise ConfigError(f"gaussian arm needs sigma2 > 0, got {self.sigma2!r}")
        elif not 0.0 <= self.mu <= 1.0:
            raise ConfigError(f"{self.kind} arm mean must lie in [0, 1], got {self.mu!r}")

    @property
    def variate(self) -> str:
        return "normal" if self.kind == "gaussian" else "uniform"


def make_arms(means, kind: str = "bernoulli", sigma: float = 0.1) -> list[ArmModel]:
    s2 = sigma * sigma if kind == "gaussian" else 0.0
    return [ArmModel(kind, float(mu), s2) for mu in means]


def evenly_spaced_means(K: int, lo: float = 0.1, hi: float = 0.9) -> list[float]:
    """Default experiment means: ``K`` values from ``hi`` down to ``lo``."""
    if K == 1:
        return [hi]
    return np.linspace(hi, lo, K).tolist()


def rewards_from_variates(kind: str, mu, sigma2, v):
    """Turn standard variates into rewards (vectorized over ``mu``/``v``).

    ``v`` is uniform on [0, 1) for bernoulli/uniform01 arms and standard
    normal for gaussian arms. uniform01 arms draw from
    ``[mu - h, mu + h]`` with ``h = min(mu, 1 - mu)``.
    """
    if kind == "bernoulli":
        return (v < mu).astype(float)
    if kind == "uniform01":
        h = np.minimum(mu, 1.0 - mu)
        return mu + h * (2.0 * v - 1.0)
    return mu + np.sqrt(sigma2) * v


class BanditEnv:
    def __init__(self, arms, n_agents: int = 1, replicas: int = 1, horizon: int | None = None):
        arms = list(arms)
        if not arms:
            raise ConfigError("need at least one arm")
        kinds = {a.kind for a in arms}
        if len(kinds) != 1:
            raise ConfigError(f"all arms must share one distribution kind, got {sorted(kinds)}")
        arms = sorted(arms, key=lambda a: -a.mu)
        if len(arms) > 1 and not arms[0].mu > arms[1].mu:
            raise ConfigError("best arm must be unique (minimum gap must be positive)")
        if n_agents < 1 or replicas < 1:
            raise ConfigError("need at least one agent and one replica")
        self.arms = arms
        self.kind = arms[0].kind
        self.K = len(arms)
        self.M = n_agents
        self.replicas = replicas
        self.means = np.array([a.mu for a in arms])
        self.sigma2 = np.array([a.sigma2 for a in arms])
        self.gaps = self.means[0] - self.means
        self.counts = np.zeros((replicas, n_agents, self.K), dtype=np.int64)
        self.cumulative_regret = np.zeros(replicas)
        self.steps = 0
        self._horizon = horizon
        self._history = np.zeros((replicas, horizon)) if horizon else []

    @property
    def variate(self) -> str:
        return self.arms[0].variate

    @property
    def gap_min(self) -> float:
        return float(self.gaps[1:].min()) if self.K > 1 else 0.0

    @property
    def gap_max(self) -> float:
        return float(self.gaps.max())

    def _check(self, agent, arm, replica):
        if not 0 <= agent < self.M:
            raise IndexError(f"agent {agent} out of range [0, {self.M})")
        if not 0 <= arm < self.K:
            raise IndexError(f"arm {arm} out of range [0, {self.K})")
        if not 0 <= replica < self.replicas:
            raise IndexError(f"replica {replica} out of range")

    def pull(self, agent: int, arm: int, rng: np.random.Generator, replica: int = 0) -> float:
        """Single pull: draw a reward and charge the arm's gap to the regret."""
        self._check(agent, arm, replica)
        v = rng.standard_normal() if self.variate == "normal" else rng.random()
        reward = float(rewards_from_variates(self.kind, self.means[arm], self.sigma2[arm], v))
        self.counts[replica, agent, arm] += 1
        self.cumulative_regret[replica] += self.gaps[arm]
        return reward

    def pull_all(self, arms: np.ndarray, variates: np.ndarray) -> np.ndarray:
        """One synchronous step: every (replica, agent) pulls ``arms[r, i]``."""
        arms = np.asarray(arms)
        if arms.shape != (self.replicas, self.M):
            raise ValueError(f"arms must have shape {(self.replicas, self.M)}, got {arms.shape}")
        if arms.min() < 0 or arms.max() >= self.K:
            raise IndexError("arm id out of range")
        rewards = rewards_from_variates(self.kind, self.means[arms], self.sigma2[arms], variates)
        rr, ii = np.indices(arms.shape)
        self.counts[rr, ii, arms] += 1
        self.cumulative_regret += self.gaps[arms].sum(axis=1)
        if self._horizon:
            self._history[:, self.steps] = self.cumulative_regret
        else:
            self._history.append(self.cumulative_regret.copy())
        self.steps += 1
        return rewards

    @property
    def arm_counts(self) -> np.ndarray:
        """Network-wide pulls per arm, ``n_j(t) = sum_i n_ij(t)``; shape (replicas, K)."""
        return self.counts.sum(axis=1)

    def regret_from_counts(self) -> np.ndarray:
        return self.arm_counts @ self.gaps

    def regret_trace(self) -> np.ndarray:
        """Per-step cumulative pseudo-regret, shape (replicas, steps)."""
        if self._horizon:
            return self._history[:, : self.steps].copy()
        if not self._history:
            return np.zeros((self.replicas, 0))
        return np.stack(self._history, axis=1)
