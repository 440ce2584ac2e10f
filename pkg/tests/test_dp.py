import math

import numpy as np
import pytest
from scipy import stats

from fedban.dp import (NOISE_OFF, HybridMechanism, LaplaceScale, MechanismBank,
                       error_certificate, laplace_inverse_cdf, sample_laplace)
from fedban.exceptions import ConfigError, EmptyMechanismError, PrivacyViolation


def philox(seed):
    return np.random.Generator(np.random.Philox(seed))


# -- Laplace sampler ----------------------------------------------------------

def test_inverse_cdf_median_and_quartiles():
    assert laplace_inverse_cdf(0.5, 1.0) == 0.0
    # F^-1(0.75) = b ln 2 for Laplace(0, b)
    assert laplace_inverse_cdf(0.75, 2.0) == pytest.approx(2.0 * math.log(2))
    assert laplace_inverse_cdf(0.25, 2.0) == pytest.approx(-2.0 * math.log(2))


def test_scale_family_exact():
    u = philox(1).random(1000)
    assert np.array_equal(laplace_inverse_cdf(u, 3.0), 3.0 * laplace_inverse_cdf(u, 1.0))


def test_sampler_ks_against_closed_form_cdf():
    g = philox(7)
    draws = laplace_inverse_cdf(g.random(100_000), 0.5)
    ks = stats.kstest(draws, stats.laplace(scale=0.5).cdf).statistic
    assert ks < 0.02


def test_sampler_variance():
    draws = laplace_inverse_cdf(philox(8).random(100_000), 1.5)
    assert np.var(draws) == pytest.approx(2 * 1.5 ** 2, rel=0.05)


def test_sample_laplace_scalar_consumes_one_uniform():
    a, b = philox(3), philox(3)
    x = sample_laplace(2.0, a)
    assert x == pytest.approx(float(laplace_inverse_cdf(b.random(), 2.0)))
    assert a.random() == b.random()


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_laplace_scale_rejects(bad):
    with pytest.raises(ConfigError):
        LaplaceScale(bad)


# -- hybrid mechanism ---------------------------------------------------------

def test_fresh_insert():
    h = HybridMechanism(NOISE_OFF)
    h.insert(0.7)
    assert h.count == 1
    assert h.raw_sum == pytest.approx(0.7)


def test_clamp_counts_event():
    h = HybridMechanism(NOISE_OFF, clamp_range=(0.0, 1.0))
    h.insert(1.5)
    assert h.raw_sum == 1.0
    assert h.clamp_count == 1
    h.insert(-0.2)
    assert h.raw_sum == 1.0
    assert h.clamp_count == 2
    h.insert(0.4)
    assert h.clamp_count == 2


def test_eight_ones_noise_off_exact():
    h = HybridMechanism(NOISE_OFF)
    for _ in range(8):
        h.insert(1.0)
    assert h.private_sum() == 8.0


def test_clamp_range_rescales_back_to_reward_units():
    h = HybridMechanism(NOISE_OFF, clamp_range=(-1.0, 3.0))
    for r in (2.5, -0.5, 4.0):
        h.insert(r)
    assert h.private_sum() == pytest.approx(2.5 - 0.5 + 3.0)


def test_empty_query_raises():
    with pytest.raises(EmptyMechanismError):
        HybridMechanism(1.0, rng=philox(0)).private_sum()


def test_noise_on_needs_rng():
    with pytest.raises(ConfigError):
        HybridMechanism(1.0)


def test_cover_of_six_in_epoch():
    # global count 11 sits at position 6 of the epoch [8, 16)
    h = HybridMechanism(NOISE_OFF)
    for _ in range(7):
        h.insert(0.0)
    assert h.cover() == []            # epoch [4, 8) just completed
    for _ in range(4):
        h.insert(0.0)
    assert h.cover() == [(8, 11)]
    h.insert(0.0)
    h.insert(0.0)
    covered = [(a - 7, b - 7) for a, b in h.cover()]
    assert covered == [(1, 4), (5, 6)]


def brute_dyadic_cover(m):
    """Greedy largest aligned blocks covering [1, m]."""
    out, start = [], 1
    while start <= m:
        size = 1
        while (start - 1) % (2 * size) == 0 and start + 2 * size - 1 <= m:
            size *= 2
        out.append((start, start + size - 1))
        start += size
    return out


def test_cover_matches_brute_force_decomposition():
    h = HybridMechanism(NOISE_OFF)
    for n in range(1, 600):
        h.insert(0.5)
        e = 1 << (n.bit_length() - 1)
        m = n - e + 1
        expected = [] if m == e else [(a + e - 1, b + e - 1) for a, b in brute_dyadic_cover(m)]
        assert h.cover() == expected
        assert len(h.cover()) <= math.ceil(math.log2(max(m, 1))) + 1


def test_noise_free_equals_running_sum():
    g = philox(11)
    h = HybridMechanism(NOISE_OFF)
    acc = 0.0
    for r in g.uniform(-0.2, 1.2, 10_000):
        h.insert(r)
        acc += min(max(r, 0.0), 1.0)
        assert h.private_sum() == pytest.approx(acc, abs=1e-9)


def test_repeated_queries_idempotent():
    h = HybridMechanism(1.0, rng=philox(2))
    for _ in range(13):
        h.insert(0.3)
    assert h.private_sum() == h.private_sum()


def test_determinism_same_seed():
    a = HybridMechanism(1.0, rng=philox(5))
    b = HybridMechanism(1.0, rng=philox(5))
    for r in philox(6).random(300):
        a.insert(r)
        b.insert(r)
        assert a.private_sum() == b.private_sum()


def test_one_draw_per_insert():
    g = philox(9)
    h = HybridMechanism(1.0, rng=g)
    for _ in range(37):
        h.insert(0.5)
    ref = philox(9)
    ref.random(37)
    assert g.random() == ref.random()


@pytest.mark.parametrize("t", [16, 64, 256])
def test_concentration(t):
    eps, delta, trials = 1.0, 0.05, 1000
    bank = MechanismBank((trials, 1, 1), eps)
    g = philox(100 + t)
    rewards = g.random((t, trials, 1))
    uniforms = g.random((t, trials, 1))
    arms = np.zeros((trials, 1), dtype=np.int64)
    for k in range(t):
        bank.insert(arms, rewards[k], uniforms[k])
    err = np.abs(bank.private_sums() - bank.raw_sums).ravel()
    bound = (1 / eps) * math.log(t) ** 1.5 * math.log(1 / delta)
    assert np.mean(err <= bound) >= 1 - delta - 0.02


def test_report_fields():
    h = HybridMechanism(2.0, rng=philox(4))
    for _ in range(5):
        h.insert(1.0)
    rep = h.report(0.1)
    assert rep.n == 5
    assert rep.x_private == pytest.approx(rep.s_private / 5)
    assert rep.h_n == pytest.approx(error_certificate(5, 2.0, 0.1))


# -- error certificate --------------------------------------------------------

def test_certificate_zero_at_one():
    assert error_certificate(1, 0.3, 0.2) == 0.0


def test_certificate_unit_logs():
    assert error_certificate(math.e, 1.0, math.exp(-1)) == pytest.approx(1 / math.e)
    assert error_certificate(math.e, 1.0, math.exp(-1)) == pytest.approx(0.3679, abs=1e-4)


def test_certificate_halves_with_double_epsilon():
    assert error_certificate(50, 2.0, 0.01) == pytest.approx(error_certificate(50, 1.0, 0.01) / 2)


def test_certificate_vectorized():
    n = np.array([1.0, 4.0, 9.0])
    expected = [error_certificate(v, 1.5, 0.1) for v in n]
    assert np.allclose(error_certificate(n, 1.5, 0.1), expected)


@pytest.mark.parametrize("delta", [0.0, 1.0, 1.5, -0.1])
def test_certificate_delta_domain(delta):
    with pytest.raises(ConfigError):
        error_certificate(10, 1.0, delta)


def test_certificate_rejects_small_n():
    with pytest.raises(ValueError):
        error_certificate(0.5, 1.0, 0.1)


# -- bank ---------------------------------------------------------------------

@pytest.mark.parametrize("eps", [0.7, NOISE_OFF])
def test_bank_matches_scalar_mechanisms(eps):
    R, M, K, T = 3, 2, 3, 300
    clamp = (-0.5, 1.5)
    g = philox(21)
    arms = g.integers(0, K, (T, R, M))
    rewards = g.normal(0.5, 0.6, (T, R, M))
    uniforms = g.random((T, R, M))
    bank = MechanismBank((R, M, K), eps, clamp, levels=12)
    feeds = {}
    for t in range(T):
        deltas = bank.insert(arms[t], rewards[t], uniforms[t] if math.isfinite(eps) else None)
        for r in range(R):
            for i in range(M):
                key = (r, i, int(arms[t, r, i]))
                # scalar twin fed the same uniforms through a stub rng
                feeds.setdefault(key, []).append((rewards[t, r, i], uniforms[t, r, i]))
    for (r, i, j), feed in feeds.items():
        stub = _Replay([u for _, u in feed])
        h = HybridMechanism(eps, clamp, rng=stub if math.isfinite(eps) else None)
        for x, _ in feed:
            h.insert(x)
        assert bank.private_sums()[r, i, j] == pytest.approx(h.private_sum(), abs=1e-9)
        assert bank.counts[r, i, j] == h.count
    assert bank.clamp_count.sum() == np.sum((rewards < clamp[0]) | (rewards > clamp[1]))


def test_bank_increments_sum_to_private_sums():
    R, M, K = 2, 2, 2
    g = philox(22)
    bank = MechanismBank((R, M, K), 1.0)
    total = np.zeros((R, M, K))
    for _ in range(100):
        arms = g.integers(0, K, (R, M))
        d = bank.insert(arms, g.random((R, M)), g.random((R, M)))
        rr, ii = np.indices(arms.shape)
        total[rr, ii, arms] += d
    assert np.allclose(total, bank.private_sums())


def test_bank_sealed_blocks_raw_reads():
    bank = MechanismBank((1, 1, 2), NOISE_OFF)
    bank.insert(np.array([[0]]), np.array([[0.5]]))
    assert bank.raw_sums[0, 0, 0] == 0.5
    with bank.sealed():
        bank.private_sums()
        with pytest.raises(PrivacyViolation):
            bank.raw_sums
    assert bank.raw_sums[0, 0, 0] == 0.5


def test_bank_level_overflow():
    bank = MechanismBank((1, 1, 1), NOISE_OFF, levels=2)
    arms = np.zeros((1, 1), dtype=np.int64)
    with pytest.raises(OverflowError):
        for _ in range(8):
            bank.insert(arms, np.ones((1, 1)))


class _Replay:
    """Minimal generator stand-in returning preset uniforms."""

    def __init__(self, values):
        self._it = iter(values)

    def random(self):
        return next(self._it)
