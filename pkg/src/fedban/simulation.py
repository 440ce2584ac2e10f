"""Plumbing shared by the federated simulators."""
from __future__ import annotations

import math

import numpy as np

from .dp import MechanismBank
from .env import BanditEnv
from .exceptions import ConfigError, NumericalFault
from .rng import ReplicaStreams


def default_clamp_range(env: BanditEnv) -> tuple[float, float]:
    """[0, 1] for bounded arms; ``[min mu - 3 sigma, max mu + 3 sigma]`` for gaussian."""
    if env.kind != "gaussian":
        return (0.0, 1.0)
    sigma = float(np.sqrt(env.sigma2.max()))
    return (float(env.means.min()) - 3 * sigma, float(env.means.max()) + 3 * sigma)


def raise_on_nan(values: np.ndarray, what: str) -> None:
    """Raise ``NumericalFault`` naming the first (agent, arm) holding a NaN."""
    bad = np.argwhere(np.isnan(values))
    if bad.size:
        *_, agent, arm = bad[0]
        raise NumericalFault(f"{what} is NaN for agent {agent}, arm {arm}",
                             agent=int(agent), arm=int(arm))


class FederatedSimulation:
    """Synchronous multi-agent run over a batch of independent replicas.

    Subclasses implement ``_choose(t)`` returning the ``(replicas, agents)``
    arm matrix for step ``t``. The policy reads rewards only through the
    private sums of ``self.bank``; the bank stays sealed while a step runs.
    """

    def __init__(self, arms, n_agents: int, *, epsilon: float, delta: float,
                 horizon: int | None = None, clamp_range=None, seeds=(0,),
                 record_actions: bool = False):
        if not 0.0 < delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {delta!r}")
        if not epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {epsilon!r}")
        seeds = list(seeds)
        self.env = BanditEnv(arms, n_agents, replicas=len(seeds), horizon=horizon)
        self.K = self.env.K
        self.M = n_agents
        self.R = len(seeds)
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.horizon = horizon
        self.clamp_range = tuple(clamp_range) if clamp_range else default_clamp_range(self.env)
        self.bank = MechanismBank.for_horizon((self.R, self.M, self.K), self.epsilon,
                                              self.clamp_range, horizon)
        self.streams = ReplicaStreams(seeds, n_agents, self.env.variate,
                                      noise=self.bank.noise_enabled)
        self.t = 0
        self._record = record_actions
        self._actions: list[np.ndarray] = []

    @property
    def noise_enabled(self) -> bool:
        return math.isfinite(self.epsilon)

    def _choose(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def _after_pull(self, arms, rewards, private_increments) -> None:
        pass

    def step(self) -> np.ndarray:
        """Advance one time slot; returns the arms played, shape (replicas, agents)."""
        t = self.t + 1
        with self.bank.sealed():
            arms = self._choose(t)
        rewards = self.env.pull_all(arms, self.streams.rewards_at(t))
        increments = self.bank.insert(arms, rewards, self.streams.noise_at(t))
        self._after_pull(arms, rewards, increments)
        self.t = t
        if self._record:
            self._actions.append(arms.copy())
        return arms

    def run(self, T: int | None = None):
        T = self.horizon if T is None else T
        if T is None:
            raise ConfigError("no horizon given")
        while self.t < T:
            self.step()
        return self

    @property
    def actions(self) -> np.ndarray:
        """Recorded actions, shape (replicas, steps, agents)."""
        if not self._record:
            raise RuntimeError("actions were not recorded; pass record_actions=True")
        if not self._actions:
            return np.zeros((self.R, 0, self.M), dtype=np.int64)
        return np.stack(self._actions, axis=1)

    def regret_trace(self) -> np.ndarray:
        return self.env.regret_trace()
