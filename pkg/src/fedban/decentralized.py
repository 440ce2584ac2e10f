"""DP decentralized UCB over a consensus network.

Every slot each agent mixes two per-arm quantities with its neighbours via the
mixing matrix ``P``: an estimate of the network-average play count ``n_hat``
and an estimate of the network-average private reward sum ``s_hat``. The
index it maximizes is

    s_hat/n_hat + sigma * sqrt(2 rho (n_hat + c_i) / (M n_hat) * ln t / n_hat)
                + (1/eps) ln(1/delta) ln^1.5(n_hat) / n_hat

Rewards enter ``s_hat`` only as increments of the agent's own private sums:
after a pull the agent adds the change in that arm's mechanism output, and the
next mixing step spreads it. Play indicators enter ``n_hat`` the same way, so
both estimates always cover the same set of pulls.
"""
from __future__ import annotations

import math

import numpy as np

from .exceptions import ConfigError, InvariantViolation
from .graph import MixingMatrix
from .simulation import FederatedSimulation, raise_on_nan

# n_hat below 1 - this counts as "not yet estimable"; absorbs mixing round-off
COUNT_TOL = 1e-9


def consensus_update(n_hat, s_hat, xi, s_increment, P):
    """One mixing step: ``n <- P (n + xi)``, ``s <- P (s + ds)``.

    Arrays are ``(..., M, K)``; ``xi`` flags the pulls of the previous slot and
    ``s_increment`` holds the matching private-sum increments.
    """
    P = np.asarray(P)
    M = P.shape[0]
    for name, a in (("n_hat", n_hat), ("s_hat", s_hat), ("xi", xi), ("s_increment", s_increment)):
        if np.shape(a)[-2] != M:
            raise ValueError(f"{name} has {np.shape(a)[-2]} agents, mixing matrix has {M}")
    return P @ (n_hat + xi), P @ (s_hat + s_increment)


def decentralized_index(s_hat, n_hat, t: int, M: int, ci, rho: float, sigma: float,
                        epsilon: float, delta: float):
    """Index per agent and arm; ``+inf`` wherever ``n_hat < 1`` (forced exploration).

    ``ci`` must broadcast against ``n_hat`` (e.g. shape ``(M, 1)``).
    """
    if t < 2:
        raise ValueError("t must be >= 2")
    n_hat = np.asarray(n_hat, dtype=float)
    n = np.maximum(n_hat, 1.0)
    # sqrt(2 rho (n + c)/(M n) * ln t / n) == sqrt(2 rho ln t / M * (n + c)) / n
    radius = sigma * np.sqrt((2.0 * rho * math.log(t) / M) * (n + ci))
    log_n = np.log(n)
    privacy = ((1.0 / epsilon) * math.log(1.0 / delta)) * (log_n * np.sqrt(log_n))
    index = (s_hat + radius + privacy) / n
    return np.where(n_hat < 1.0 - COUNT_TOL, np.inf, index)


def decentralized_regret_bound(M: int, T: int, epsilon: float, rho: float, gaps, sigma: float,
                               c0: float, ci, beta0: float = 0.5) -> float:
    """Closed-form regret envelope for the decentralized algorithm.

    Uses the looser form without the ``1/M`` on the sampling term.
    """
    gaps = np.asarray(gaps, dtype=float)
    ci = np.broadcast_to(np.asarray(ci, dtype=float), (M,))
    K = gaps.size
    if rho <= 1:
        return math.inf
    logT = math.log(T)
    privacy = ((2 + 2 * rho * logT) / (epsilon * (1 - beta0))) ** 2.25
    total = 2 * M * K * rho * gaps.max() / (rho - 1)
    for c in ci:
        for d in gaps[gaps > 0]:
            sampling = math.ceil(c0 / beta0 ** 2 + 8 * sigma ** 2 * rho * (1 + c) * logT
                                 / (beta0 ** 2 * d))
            total += max(privacy, sampling)
    return total


class DecentralizedUCB(FederatedSimulation):
    """Vectorized over replicas; arms are 0-indexed.

    Parameters
    ----------
    mixing : MixingMatrix
        Network; its size fixes the number of agents.
    rho : float
        Exploration parameter (>= 1).
    sigma : float, optional
        Reward standard deviation known to the agents. Defaults to the arms'
        sigma for gaussian arms and 0.5 otherwise.
    delta : float, optional
        Defaults to ``0.5 * horizon ** -rho``.
    check_invariants : bool
        Assert the count-estimate bound ``|n_hat - n_avg| <= c0`` every slot.
    track_true : bool
        Also mix the raw reward sums (``y_hat``) for diagnostics. The policy
        never reads them.
    policy : callable, optional
        ``policy(t) -> (replicas, agents)`` arms overriding index selection
        after initialization (used to study the estimators under a fixed
        schedule).
    """

    def __init__(self, arms, mixing: MixingMatrix, *, epsilon: float = 2.0, rho: float = 2.0,
                 sigma: float | None = None, delta: float | None = None,
                 horizon: int | None = None, clamp_range=None, seeds=(0,),
                 check_invariants: bool = False, track_true: bool = False, policy=None,
                 record_actions: bool = False):
        if rho < 1:
            raise ConfigError(f"rho must be >= 1, got {rho!r}")
        if delta is None:
            if horizon is None:
                raise ValueError("delta defaults to 0.5*horizon**-rho; give a horizon or a delta")
            delta = 0.5 * float(horizon) ** -rho
        super().__init__(arms, mixing.M, epsilon=epsilon, delta=delta, horizon=horizon,
                         clamp_range=clamp_range, seeds=seeds, record_actions=record_actions)
        if sigma is None:
            sigma = float(np.sqrt(self.env.sigma2.max())) if self.env.kind == "gaussian" else 0.5
        self.mixing = mixing
        self.rho = float(rho)
        self.sigma = float(sigma)
        self.check_invariants = check_invariants
        self.track_true = track_true
        self.policy = policy
        shape = (self.R, self.M, self.K)
        self.n_hat = np.zeros(shape)
        self.s_hat = np.zeros(shape)
        self._xi = np.zeros(shape)
        self._ds = np.zeros(shape)
        if track_true:
            self.y_hat = np.zeros(shape)
            self._dr = np.zeros(shape)
        self._ci = np.asarray(mixing.ci, dtype=float)[:, None]
        self.max_count_deviation = 0.0

    def _flush_local(self) -> None:
        self.n_hat += self._xi
        self.s_hat += self._ds
        self._xi[:] = 0.0
        self._ds[:] = 0.0
        if self.track_true:
            self.y_hat += self._dr
            self._dr[:] = 0.0

    def _mix(self) -> None:
        self.n_hat, self.s_hat = consensus_update(self.n_hat, self.s_hat, self._xi, self._ds,
                                                  self.mixing.P)
        self._xi[:] = 0.0
        self._ds[:] = 0.0
        if self.track_true:
            self.y_hat = self.mixing.P @ (self.y_hat + self._dr)
            self._dr[:] = 0.0

    def check_count_bound(self) -> None:
        n_avg = self.env.counts.mean(axis=1, keepdims=True)
        dev = np.abs(self.n_hat - n_avg)
        worst = float(dev.max())
        self.max_count_deviation = max(self.max_count_deviation, worst)
        limit = self.mixing.c0 + COUNT_TOL * max(1.0, float(n_avg.max()))
        if worst > limit:
            r, i, j = np.unravel_index(int(dev.argmax()), dev.shape)
            raise InvariantViolation(
                f"count estimate off by {worst:.6g} > c0={self.mixing.c0:.6g} "
                f"(replica {r}, agent {i}, arm {j}, t={self.t})")

    def indices(self, t: int) -> np.ndarray:
        return decentralized_index(self.s_hat, self.n_hat, t, self.M, self._ci, self.rho,
                                   self.sigma, self.epsilon, self.delta)

    def _choose(self, t: int) -> np.ndarray:
        if t <= self.K:
            self._flush_local()
            return np.full((self.R, self.M), t - 1, dtype=np.int64)
        self._mix()
        if self.check_invariants:
            self.check_count_bound()
        if self.policy is not None:
            return np.asarray(self.policy(t), dtype=np.int64)
        idx = self.indices(t)
        raise_on_nan(idx, "decentralized index")
        return np.argmax(idx, axis=-1)

    def _after_pull(self, arms, rewards, private_increments) -> None:
        rr, ii = np.indices(arms.shape)
        self._xi[rr, ii, arms] = 1.0
        self._ds[rr, ii, arms] = private_increments
        if self.track_true:
            self._dr[rr, ii, arms] = rewards

    @property
    def y_hat_mean(self) -> np.ndarray:
        """Mixed true-reward mean ``y_hat / n_hat`` (diagnostics only)."""
        return self.y_hat / self.n_hat
