"""DP master-worker UCB.

Each agent keeps one hybrid mechanism per arm. On communication rounds every
agent computes private UCB indices, a central node averages them per arm, and
all agents play the arm with the largest average. An arm chosen again keeps
being replayed over doubling windows: the per-agent counter ``eta`` grows by
one each slot, communication happens only when ``eta`` is a power of two, and
``eta`` restarts at 1 whenever the central choice switches arm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dp import error_certificate
from .exceptions import InvariantViolation, NumericalFault
from .simulation import FederatedSimulation, raise_on_nan


def ucb_index(private_mean, n, t: int, epsilon: float, delta: float):
    """``X + sqrt(2 ln t / n) + (1/eps) ln(1/delta) ln^1.5(n) / n``."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise ValueError("index needs every arm pulled at least once")
    if t < 1:
        raise ValueError("t must be >= 1")
    return private_mean + np.sqrt(2.0 * math.log(t) / n) + error_certificate(n, epsilon, delta)


@dataclass(frozen=True)
class CentralAggregate:
    average: np.ndarray

    @property
    def best_arm(self):
        """Largest average index; ties go to the lowest arm id."""
        return np.argmax(self.average, axis=-1)


def central_average(indices) -> CentralAggregate:
    """Average ``(..., M, K)`` agent indices over agents."""
    indices = np.asarray(indices, dtype=float)
    bad = np.argwhere(~np.isfinite(indices))
    if bad.size:
        *_, agent, arm = bad[0]
        raise NumericalFault(f"non-finite index from agent {agent} for arm {arm}",
                             agent=int(agent), arm=int(arm))
    M = indices.shape[-2]
    return CentralAggregate(indices.sum(axis=-2) / M)


def master_regret_bound(M: int, T: int, epsilon: float, gaps, beta0: float = 0.5) -> float:
    """Closed-form regret envelope for the master-worker algorithm."""
    gaps = np.asarray(gaps, dtype=float)
    K = gaps.size
    sub = gaps[gaps > 0]
    d_min, d_max = sub.min(), sub.max()
    logT = math.log(T)
    privacy = (8 * logT / (epsilon * (1 - beta0) * d_min)) ** 2.25
    sampling = math.ceil(8 * logT / (d_min ** 2 * beta0 ** 2))
    return M * K * d_max * (4 + max(privacy, sampling))


class MasterWorkerUCB(FederatedSimulation):
    """Vectorized over replicas; arms are 0-indexed.

    ``delta`` defaults to ``horizon ** -4``.
    """

    def __init__(self, arms, n_agents: int, *, epsilon: float = 2.0, delta: float | None = None,
                 horizon: int | None = None, clamp_range=None, seeds=(0,),
                 record_actions: bool = False):
        if delta is None:
            if horizon is None:
                raise ValueError("delta defaults to horizon**-4; give a horizon or a delta")
            delta = float(horizon) ** -4
        super().__init__(arms, n_agents, epsilon=epsilon, delta=delta, horizon=horizon,
                         clamp_range=clamp_range, seeds=seeds, record_actions=record_actions)
        self.eta = np.ones((self.R, self.M), dtype=np.int64)
        self.last = np.full((self.R, self.M), -1, dtype=np.int64)
        self.indices = np.full((self.R, self.M, self.K), np.nan)
        self.comm_rounds = np.zeros(self.R, dtype=np.int64)
        self.switches = np.zeros(self.R, dtype=np.int64)

    def _choose(self, t: int) -> np.ndarray:
        if t <= self.K:
            return np.full((self.R, self.M), t - 1, dtype=np.int64)
        comm = (self.eta & (self.eta - 1)) == 0
        if not (comm == comm[:, :1]).all():
            raise InvariantViolation(f"agents disagree on the communication schedule at t={t}")
        arms = self.last.copy()
        rows = np.flatnonzero(comm[:, 0])
        if rows.size:
            n = self.bank.counts[rows]
            means = self.bank.private_sums()[rows] / n
            idx = ucb_index(means, n, t, self.epsilon, self.delta)
            raise_on_nan(idx, "UCB index")
            self.indices[rows] = idx
            choice = central_average(idx).best_arm
            new = np.broadcast_to(choice[:, None], (rows.size, self.M))
            switched = new != self.last[rows]
            self.eta[rows] = np.where(switched, 1, self.eta[rows])
            self.switches[rows] += switched[:, 0]
            self.comm_rounds[rows] += 1
            arms[rows] = new
        self.eta += 1
        return arms

    def _after_pull(self, arms, rewards, private_increments) -> None:
        self.last = arms
