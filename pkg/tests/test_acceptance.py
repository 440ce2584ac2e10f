"""Acceptance criteria 1-9, one test each.

Every test records a ``criterion N: PASS|FAIL ...`` line; the lines are
printed at the end of the pytest run (and immediately when run with ``-s``).
Run just this file with ``pytest tests/test_acceptance.py``.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from fedban.decentralized import DecentralizedUCB, decentralized_regret_bound
from fedban.dp import NOISE_OFF, MechanismBank
from fedban.env import evenly_spaced_means, make_arms
from fedban.graph import build_graph, mixing_matrix
from fedban.harness import ExperimentConfig, sweep
from fedban.master import MasterWorkerUCB, master_regret_bound
from fedban.rng import replica_seeds

from oracles import ucb, ucb_with_doubling

RESULTS = {}


def report(n, ok, detail, seconds, limit=None):
    timing = f"{seconds:.1f}s" + (f" (limit {limit:.0f}s)" if limit else "")
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  [{timing}]"
    RESULTS[n] = line
    print(line)
    return ok


def test_criterion_1_mechanism_concentration():
    t0 = time.perf_counter()
    t, eps, delta, trials = 256, 1.0, 0.05, 1000
    g = np.random.Generator(np.random.Philox(2024))
    bank = MechanismBank((trials, 1, 1), eps, levels=10)
    arms = np.zeros((trials, 1), dtype=np.int64)
    for _ in range(t):
        bank.insert(arms, g.random((trials, 1)), g.random((trials, 1)))
    err = np.abs(bank.private_sums() - bank.raw_sums).ravel()
    bound = (1 / eps) * math.log(t) ** 1.5 * math.log(1 / delta)
    freq = float(np.mean(err <= bound))
    dt = time.perf_counter() - t0
    ok = freq >= 0.93 and dt < 5
    assert report(1, ok, f"coverage {freq:.3f} >= 0.93 (bound {bound:.2f})", dt, 5)


def test_criterion_2_noise_free_reduction():
    t0 = time.perf_counter()
    K, T, seed = 5, 10_000, 17
    means = evenly_spaced_means(K)
    mw = MasterWorkerUCB(make_arms(means), 1, epsilon=NOISE_OFF, horizon=T,
                         seeds=replica_seeds(seed, 1), record_actions=True).run()
    dec = DecentralizedUCB(make_arms(means), mixing_matrix(build_graph("complete", 1)),
                           epsilon=NOISE_OFF, rho=1.0, sigma=1.0, horizon=T,
                           seeds=replica_seeds(seed, 1), record_actions=True).run()
    assert dec.mixing.c0 == 0 and not dec.mixing.ci.any()
    a1 = mw.actions[0, :, 0].tolist() == ucb_with_doubling(means, T, master_seed=seed)
    a2 = dec.actions[0, :, 0].tolist() == ucb(means, T, master_seed=seed)
    dt = time.perf_counter() - t0
    ok = a1 and a2 and dt < 5
    assert report(2, ok, f"master-worker match={a1}, decentralized match={a2}", dt, 5)


def test_criterion_3_count_estimate_bound():
    t0 = time.perf_counter()
    T, seeds = 10_000, replica_seeds(33, 10)
    worst = []
    for topo in ("cycle", "complete"):
        for M in (5, 20):
            mm = mixing_matrix(build_graph(topo, M), 0.5)
            sim = DecentralizedUCB(make_arms(evenly_spaced_means(10), "gaussian", 0.1), mm,
                                   horizon=T, seeds=seeds, check_invariants=True)
            sim.run()     # raises InvariantViolation on the first breach
            worst.append(f"{topo}/{M}: {sim.max_count_deviation:.2f}<={mm.c0:.2f}")
    dt = time.perf_counter() - t0
    assert report(3, dt < 60, "max |n_hat - n_avg| vs c0: " + ", ".join(worst), dt, 60)


def test_criterion_4_variance_bound():
    t0 = time.perf_counter()
    M, K, T, R, sigma = 5, 3, 1000, 2000, 0.1
    mm = mixing_matrix(build_graph("cycle", M), 0.5)
    sim = DecentralizedUCB(
        make_arms([0.7, 0.5, 0.3], "gaussian", sigma), mm, epsilon=NOISE_OFF, horizon=T,
        seeds=replica_seeds(44, R), track_true=True,
        policy=lambda t: np.broadcast_to((t + np.arange(M)) % K, (R, M)))
    sim.run()
    n_hat = sim.n_hat[0]
    assert np.allclose(sim.n_hat, n_hat)   # schedule is reward independent
    var = sim.y_hat_mean.var(axis=0, ddof=1)
    bound = (n_hat + mm.ci[:, None]) * sigma ** 2 / (M * n_hat ** 2)
    ratio = float((var / bound).max())
    dt = time.perf_counter() - t0
    ok = ratio <= 1.15 and dt < 120
    assert report(4, ok, f"max var/bound {ratio:.3f} <= 1.15", dt, 120)


def test_criterion_5_consensus_convergence():
    t0 = time.perf_counter()
    P = mixing_matrix(build_graph("cycle", 20), 0.5).P
    row_err = float(np.abs(P.sum(axis=1) - 1).max())
    J = np.full_like(P, 1 / 20)
    Pt, steps = P.copy(), 1
    while np.abs(Pt - J).sum(axis=1).max() >= 1e-6 and steps < 10_000:
        Pt = Pt @ P
        steps += 1
    dist = float(np.abs(Pt - J).sum(axis=1).max())
    dt = time.perf_counter() - t0
    ok = dist < 1e-6 and row_err <= 1e-12 and dt < 1
    assert report(5, ok, f"||P^t - J||_inf={dist:.2e} at t={steps}, row-sum err {row_err:.1e}",
                  dt, 1)


def test_criterion_6_privacy_and_exploration_curves():
    t0 = time.perf_counter()
    base = ExperimentConfig(algorithm="decentralized", M=20, K=10, T=100_000, topology="cycle",
                            kappa=0.5, epsilon=2.0, rho=2.0, repeats=20, master_seed=0)
    eps = sweep(base, "epsilon", [1.5, 2.0, 5.0], write=False)
    rho = sweep(base, "rho", [1.2, 4.0], write=False)
    e_means = eps.final_means()
    r_means = [rho.final_means()[0], e_means[1], rho.final_means()[1]]
    ratios = [s.growth_ratio(10) for s in eps.summaries + rho.summaries]
    dec_eps = e_means[0] > e_means[1] > e_means[2]
    inc_rho = r_means[0] < r_means[1] < r_means[2]
    sub = all(r < 0.8 for r in ratios)
    dt = time.perf_counter() - t0
    detail = (f"eps 1.5/2/5 -> {e_means[0]:.0f}/{e_means[1]:.0f}/{e_means[2]:.0f} "
              f"decreasing={dec_eps}; rho 1.2/2/4 -> {r_means[0]:.0f}/{r_means[1]:.0f}/"
              f"{r_means[2]:.0f} increasing={inc_rho}; max growth ratio {max(ratios):.3f} < 0.8")
    assert report(6, dec_eps and inc_rho and sub and dt < 600, detail, dt, 600)


def test_criterion_7_regret_envelopes():
    t0 = time.perf_counter()
    T, lines, ok = 10_000, [], True
    for M, K, e in [(1, 3, 2.0), (5, 5, 1.5), (20, 10, 2.0), (10, 4, 5.0)]:
        sim = MasterWorkerUCB(make_arms(evenly_spaced_means(K)), M, epsilon=e, horizon=T,
                              seeds=replica_seeds(7, 3)).run()
        bound = master_regret_bound(M, T, e, sim.env.gaps)
        worst = float(sim.env.cumulative_regret.max())
        ok &= worst < bound
        lines.append(f"mw M={M} K={K} eps={e}: {worst:.0f}<{bound:.3g}")
    for topo, M, K, e, rho in [("cycle", 5, 4, 2.0, 2.0), ("complete", 5, 4, 1.5, 1.2),
                               ("cycle", 20, 10, 2.0, 2.0), ("star", 6, 5, 5.0, 4.0)]:
        mm = mixing_matrix(build_graph(topo, M), 0.5)
        sim = DecentralizedUCB(make_arms(evenly_spaced_means(K), "gaussian", 0.1), mm,
                               epsilon=e, rho=rho, horizon=T, seeds=replica_seeds(7, 3)).run()
        bound = decentralized_regret_bound(M, T, e, rho, sim.env.gaps, sim.sigma, mm.c0, mm.ci)
        worst = float(sim.env.cumulative_regret.max())
        ok &= worst < bound
        lines.append(f"dec {topo} M={M} eps={e} rho={rho}: {worst:.0f}<{bound:.3g}")
    dt = time.perf_counter() - t0
    assert report(7, ok and dt < 300, "; ".join(lines), dt, 300)


def test_criterion_8_spectral_constants():
    t0 = time.perf_counter()
    c0 = mixing_matrix(build_graph("complete", 3), 1.0).c0
    cyc = mixing_matrix(build_graph("cycle", 20), 0.5).ci
    com = mixing_matrix(build_graph("complete", 20), 0.5).ci
    c0_ok = abs(c0 - 2 * math.sqrt(3)) < 1e-8
    order_ok = bool(np.all(cyc >= com))
    dt = time.perf_counter() - t0
    detail = (f"c0={c0:.10f} (2*sqrt3 err {abs(c0 - 2 * math.sqrt(3)):.1e}); "
              f"min ci cycle {cyc.min():.1f} >= max ci complete {com.max():.1f}: {order_ok}")
    assert report(8, c0_ok and order_ok and dt < 1, detail, dt, 1)


def test_criterion_9_sweep_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(M=20, K=10, T=3000, repeats=4, master_seed=99, grid_points=50)
    sweep(cfg.replace(out=str(tmp_path / "a")), "epsilon", [1.5, 2.0, "off"])
    sweep(cfg.replace(out=str(tmp_path / "b"), workers=2), "epsilon", [1.5, 2.0, "off"])
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                     if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*")
                     if p.is_file())
    same = files_a == files_b and all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files_a)
    dt = time.perf_counter() - t0
    assert report(9, same, f"{len(files_a)} files byte-identical across two invocations "
                           f"(second with 2 workers): {same}", dt)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
