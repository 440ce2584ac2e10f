"""Portable, seed-derived random streams.

Every replica of an experiment owns two Philox (counter-based, 64-bit)
generators: one for reward variates and one for privacy noise. Both are
derived from ``SeedSequence(master_seed, spawn_key=(replica,))`` so a replica
produces the same numbers whether it runs alone or batched with others.
"""
from __future__ import annotations

from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]

CHUNK = 4096


def replica_seed(master_seed: int, replica: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replica),))


def replica_seeds(master_seed: int, repeats: int) -> list[np.random.SeedSequence]:
    return [replica_seed(master_seed, r) for r in range(repeats)]


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def run_streams(seed: SeedLike) -> tuple[np.random.Generator, np.random.Generator]:
    """Return ``(reward_rng, noise_rng)`` for one replica."""
    reward_ss, noise_ss = as_seed_sequence(seed).spawn(2)
    return (np.random.Generator(np.random.Philox(reward_ss)),
            np.random.Generator(np.random.Philox(noise_ss)))


class ReplicaStreams:
    """Per-step variates for a batch of replicas, drawn in chunks.

    Step ``t`` (1-based) of replica ``r`` uses row ``t - 1`` of that replica's
    stream, so chunking never changes which value an agent receives.
    """

    def __init__(self, seeds: Sequence[SeedLike], n_agents: int,
                 variate: str = "uniform", noise: bool = True, chunk: int = CHUNK):
        if variate not in ("uniform", "normal"):
            raise ValueError(f"unknown variate kind {variate!r}")
        self.n_agents = n_agents
        self.variate = variate
        self.noise = noise
        self.chunk = chunk
        pairs = [run_streams(s) for s in seeds]
        self._reward_rngs = [p[0] for p in pairs]
        self._noise_rngs = [p[1] for p in pairs]
        self._block_start = None
        self._rewards = None
        self._uniforms = None

    @property
    def replicas(self) -> int:
        return len(self._reward_rngs)

    def _refill(self, start: int) -> None:
        shape = (self.chunk, self.n_agents)
        if self.variate == "normal":
            self._rewards = np.stack([g.standard_normal(shape) for g in self._reward_rngs])
        else:
            self._rewards = np.stack([g.random(shape) for g in self._reward_rngs])
        if self.noise:
            self._uniforms = np.stack([g.random(shape) for g in self._noise_rngs])
        self._block_start = start

    def _row(self, t: int) -> int:
        k = t - 1
        start = k - k % self.chunk
        if self._block_start != start:
            if self._block_start is not None and start < self._block_start:
                raise ValueError("streams are forward-only")
            self._refill(start)
        return k - start

    def rewards_at(self, t: int) -> np.ndarray:
        """Reward variates for step ``t``, shape (replicas, agents)."""
        row = self._row(t)
        return self._rewards[:, row, :]

    def noise_at(self, t: int) -> np.ndarray | None:
        """Uniform draws feeding the Laplace sampler at step ``t``."""
        if not self.noise:
            return None
        row = self._row(t)
        return self._uniforms[:, row, :]
