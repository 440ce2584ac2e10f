"""Differentially private running sums.

The hybrid mechanism splits the input stream into epochs ``[2^k, 2^(k+1))``
by count. Inside an epoch a binary tree is grown one leaf at a time; each node
draws its Laplace noise once, when it is created, and keeps it. A prefix query
adds up the dyadic cover of the in-epoch prefix plus the frozen noisy totals
of all completed epochs. Node noise scale is ``1/epsilon`` on the unit scale.

``epsilon = math.inf`` (``NOISE_OFF``) disables noise entirely; the mechanism
then returns exact clamped sums.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, EmptyMechanismError, PrivacyViolation

NOISE_OFF = math.inf


@dataclass(frozen=True)
class LaplaceScale:
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.b) and self.b > 0):
            raise ConfigError(f"Laplace scale must be positive and finite, got {self.b!r}")


def laplace_inverse_cdf(u, scale):
    """Map uniform ``u`` in [0, 1) to Laplace(0, scale) by the inverse CDF."""
    c = np.asarray(u, dtype=float) - 0.5
    # u == 0 gives -inf*scale; Philox doubles are k/2^53 so this has probability 2^-53
    with np.errstate(divide="ignore"):
        standard = -np.sign(c) * np.log1p(-2.0 * np.abs(c))
    return scale * standard


def sample_laplace(scale: LaplaceScale | float, rng: np.random.Generator) -> float:
    """One Laplace(0, b) draw from one uniform of ``rng``."""
    if not isinstance(scale, LaplaceScale):
        scale = LaplaceScale(float(scale))
    return float(laplace_inverse_cdf(rng.random(), scale.b))


def error_certificate(n, epsilon: float, delta: float):
    """Width ``(1/eps) * ln(n)^1.5 * ln(1/delta) / n`` of the private-mean error.

    Natural logarithms throughout. Accepts scalars or arrays of counts;
    ``n`` may be real-valued (the decentralized estimator uses mixed counts).
    """
    if not (0.0 < delta < 1.0):
        raise ConfigError(f"delta must lie in (0, 1), got {delta!r}")
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon!r}")
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 1):
        raise ValueError("error certificate needs n >= 1")
    out = (1.0 / epsilon) * np.log(n_arr) ** 1.5 * math.log(1.0 / delta) / n_arr
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PrivateSumReport:
    n: int
    s_private: float
    x_private: float
    h_n: float
    delta: float


def _trailing_zeros(m: int) -> int:
    return (m & -m).bit_length() - 1


class _Node:
    __slots__ = ("level", "start", "raw", "noise")

    def __init__(self, level, start, raw, noise):
        self.level = level
        self.start = start
        self.raw = raw
        self.noise = noise


class HybridMechanism:
    """Private running sum of one reward stream.

    Parameters
    ----------
    epsilon : float
        Privacy parameter; ``NOISE_OFF`` disables noise.
    clamp_range : (float, float)
        Rewards are clipped to this range and rescaled to [0, 1] on insert.
        Sums are reported back in reward units.
    rng : numpy Generator
        Source of the single uniform consumed per insert (when noise is on).
    """

    def __init__(self, epsilon: float = 1.0, clamp_range=(0.0, 1.0), rng=None):
        if not epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {epsilon!r}")
        lo, hi = map(float, clamp_range)
        if not hi > lo:
            raise ConfigError(f"clamp range must have hi > lo, got {clamp_range!r}")
        self.epsilon = float(epsilon)
        self.clamp_range = (lo, hi)
        self.noise_enabled = math.isfinite(self.epsilon)
        if self.noise_enabled and rng is None:
            raise ConfigError("an explicitly seeded rng is required when noise is on")
        self._rng = rng
        self._scale = LaplaceScale(1.0 / self.epsilon) if self.noise_enabled else None
        self.count = 0
        self.clamp_count = 0
        self.epoch_index = 0
        self.completed_epochs_private_sum = 0.0
        self._nodes: list[_Node] = []
        self._raw_total = 0.0

    def _epoch_start(self) -> int:
        return 1 << self.epoch_index

    def insert(self, reward: float) -> None:
        lo, hi = self.clamp_range
        x = min(max(float(reward), lo), hi)
        if x != reward:
            self.clamp_count += 1
        unit = (x - lo) / (hi - lo)
        self.count += 1
        self._raw_total += unit

        n = self.count
        self.epoch_index = n.bit_length() - 1
        m = n - self._epoch_start() + 1
        level = _trailing_zeros(m)
        raw = unit
        for _ in range(level):
            raw += self._nodes.pop().raw
        noise = sample_laplace(self._scale, self._rng) if self.noise_enabled else 0.0
        self._nodes.append(_Node(level, n - (1 << level) + 1, raw, noise))

        if m == self._epoch_start():
            root = self._nodes.pop()
            self.completed_epochs_private_sum += root.raw + root.noise
            self.epoch_index += 1

    def _private_unit_sum(self) -> float:
        return self.completed_epochs_private_sum + sum(nd.raw + nd.noise for nd in self._nodes)

    def private_sum(self) -> float:
        if self.count == 0:
            raise EmptyMechanismError("private_sum queried before any insert")
        lo, hi = self.clamp_range
        return lo * self.count + (hi - lo) * self._private_unit_sum()

    def private_mean(self) -> float:
        return self.private_sum() / self.count

    def cover(self) -> list[tuple[int, int]]:
        """Inclusive global index ranges of the in-epoch nodes a query uses."""
        return [(nd.start, nd.start + (1 << nd.level) - 1) for nd in self._nodes]

    def report(self, delta: float) -> PrivateSumReport:
        s = self.private_sum()
        return PrivateSumReport(self.count, s, s / self.count,
                                error_certificate(self.count, self.epsilon, delta), delta)

    @property
    def raw_sum(self) -> float:
        """Exact clamped sum in reward units. Test seam; never read by policies."""
        lo, hi = self.clamp_range
        return lo * self.count + (hi - lo) * self._raw_total


class MechanismBank:
    """A grid of independent hybrid mechanisms stored in arrays.

    ``shape`` is ``(replicas, agents, arms)``. Each step, every (replica,
    agent) inserts into exactly one arm. Level ``b`` of the noise array holds
    the cached noise of the in-epoch cover node of size ``2^b`` (zero if that
    level is not in the cover). Numerically this matches ``HybridMechanism``
    fed with the same uniforms.
    """

    def __init__(self, shape, epsilon: float, clamp_range=(0.0, 1.0), levels: int = 48):
        if not epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {epsilon!r}")
        lo, hi = map(float, clamp_range)
        if not hi > lo:
            raise ConfigError(f"clamp range must have hi > lo, got {clamp_range!r}")
        self.shape = tuple(shape)
        R, M, K = self.shape
        self.epsilon = float(epsilon)
        self.noise_enabled = math.isfinite(self.epsilon)
        self.scale = 1.0 / self.epsilon
        self.clamp_range = (lo, hi)
        self.levels = levels
        size = R * M * K
        self._counts = np.zeros(size, dtype=np.int64)
        self.clamp_count = np.zeros(R, dtype=np.int64)
        self._completed = np.zeros(size)
        self._epoch_raw = np.zeros(size)
        self._raw_total = np.zeros(size)
        self._unit_private = np.zeros(size)
        self._noise = np.zeros((size, levels))
        self._level_ids = np.arange(levels)
        self._row_base = (np.arange(R * M) * K).reshape(R, M)
        self._sealed = False

    @classmethod
    def for_horizon(cls, shape, epsilon, clamp_range=(0.0, 1.0), horizon=None):
        levels = 48 if horizon is None else max(2, int(horizon).bit_length() + 1)
        return cls(shape, epsilon, clamp_range, levels=levels)

    @contextmanager
    def sealed(self):
        """While active, reading raw accumulators raises ``PrivacyViolation``."""
        prev, self._sealed = self._sealed, True
        try:
            yield self
        finally:
            self._sealed = prev

    @property
    def counts(self) -> np.ndarray:
        return self._counts.reshape(self.shape)

    @property
    def raw_sums(self) -> np.ndarray:
        if self._sealed:
            raise PrivacyViolation("raw reward sums are not readable by policy code")
        lo, hi = self.clamp_range
        return (lo * self._counts + (hi - lo) * self._raw_total).reshape(self.shape)

    def private_sums(self) -> np.ndarray:
        lo, hi = self.clamp_range
        return (lo * self._counts + (hi - lo) * self._unit_private).reshape(self.shape)

    def insert(self, arms: np.ndarray, rewards: np.ndarray, uniforms=None) -> np.ndarray:
        """Insert one reward per (replica, agent) into arm ``arms[r, i]``.

        Returns the change in each touched mechanism's private sum (reward
        units), shape (replicas, agents).
        """
        R, M = arms.shape
        idx = (self._row_base + arms).ravel()
        lo, hi = self.clamp_range
        r = rewards.ravel()
        x = np.clip(r, lo, hi)
        clamped = x != r
        if clamped.any():
            self.clamp_count += clamped.reshape(R, M).sum(axis=1)
        unit = (x - lo) / (hi - lo)

        n = self._counts[idx] + 1
        self._counts[idx] = n
        self._raw_total[idx] += unit
        epoch_len = np.left_shift(1, np.frexp(n.astype(float))[1] - 1)
        m = n - epoch_len + 1
        level = np.frexp((m & -m).astype(float))[1] - 1
        if level.max() >= self.levels:
            raise OverflowError("mechanism count exceeds configured tree levels")

        k = np.arange(idx.size)
        rows = self._noise[idx]
        rows = np.where(self._level_ids < level[:, None], 0.0, rows)
        if self.noise_enabled:
            rows[k, level] = laplace_inverse_cdf(uniforms.ravel(), self.scale)
        epoch_raw = self._epoch_raw[idx] + unit
        completed = self._completed[idx]

        done = m == epoch_len
        if done.any():
            completed = completed + np.where(done, epoch_raw + rows[k, level], 0.0)
            epoch_raw[done] = 0.0
            rows[done] = 0.0
            self._completed[idx] = completed
        self._epoch_raw[idx] = epoch_raw
        self._noise[idx] = rows

        before = self._unit_private[idx]
        after = completed + epoch_raw + rows.sum(axis=1)
        self._unit_private[idx] = after
        return ((hi - lo) * (after - before) + lo).reshape(R, M)
