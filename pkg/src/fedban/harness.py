"""Experiment configuration, seeded runs, sweeps and trace files.

Config files are plain ``key = value`` lines; ``#`` starts a comment. Keys:

    algorithm    master_worker | decentralized
    M, K, T      agents, arms, horizon
    topology     cycle | complete | star | path | custom   (decentralized)
    kappa        mixing step size in (0, 1]
    edge_file    edge list for topology = custom
    means        comma-separated arm means (default: evenly spaced 0.9 .. 0.1)
    distribution auto | bernoulli | uniform01 | gaussian
                 (auto: gaussian when decentralized, bernoulli otherwise)
    sigma        gaussian reward standard deviation (known to the agents)
    epsilon      privacy parameter, or ``off`` to disable noise
    rho          exploration parameter (decentralized)
    delta_rule   auto | T^-4 | half_T^-rho | explicit
    delta        value used when delta_rule = explicit
    repeats      independent runs
    master_seed  64-bit integer; replica r uses SeedSequence(master_seed, spawn_key=(r,))
    out          output directory
    full_trace   true to keep every step instead of the log-spaced grid
    grid_points  size of the log-spaced grid (T, T/2 and T/10 are always added)
    workers      worker processes for independent replicas

The environment variable ``FEDBAN_SEED`` overrides ``master_seed``.

Each run writes ``trace_rNNN.csv``: four ``#`` header lines (config hash with
the canonical config, seed and run statistics, algorithm, grid spec), then
``t,regret`` rows. ``summary.jsonl`` holds one line per run plus an aggregate.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decentralized import DecentralizedUCB
from .env import ARM_KINDS, evenly_spaced_means, make_arms
from .exceptions import ConfigError, FedbanError, TraceIntegrityError
from .graph import TOPOLOGIES, build_graph, mixing_matrix, read_edge_list
from .master import MasterWorkerUCB
from .rng import replica_seeds

log = logging.getLogger(__name__)

ALGORITHMS = ("master_worker", "decentralized")
DELTA_RULES = ("auto", "T^-4", "half_T^-rho", "explicit")
SWEEP_PARAMS = ("epsilon", "rho", "topology", "M")
SEED_ENV = "FEDBAN_SEED"

EPSILON_NOTE = ("note: regret should fall as epsilon grows, since the privacy bonus scales "
                "with 1/epsilon; a curve that rises with epsilon points to a problem")

# fields that do not change results and are left out of the config hash
_NON_RESULT_FIELDS = ("out", "workers")


@dataclass
class ExperimentConfig:
    algorithm: str = "decentralized"
    M: int = 20
    K: int = 10
    T: int = 100_000
    topology: str = "cycle"
    kappa: float = 0.5
    edge_file: str | None = None
    means: tuple | None = None
    distribution: str = "auto"
    sigma: float = 0.1
    epsilon: float = 2.0
    rho: float = 2.0
    delta_rule: str = "auto"
    delta: float | None = None
    repeats: int = 20
    master_seed: int = 0
    out: str = "runs"
    full_trace: bool = False
    grid_points: int = 200
    workers: int = 1

    # -- derived -----------------------------------------------------------
    @property
    def arm_kind(self) -> str:
        if self.distribution != "auto":
            return self.distribution
        return "gaussian" if self.algorithm == "decentralized" else "bernoulli"

    @property
    def arm_means(self) -> list[float]:
        return list(self.means) if self.means is not None else evenly_spaced_means(self.K)

    def arms(self):
        return make_arms(self.arm_means, self.arm_kind, self.sigma)

    def resolved_delta(self) -> float:
        rule = self.delta_rule
        if rule == "auto":
            rule = "T^-4" if self.algorithm == "master_worker" else "half_T^-rho"
        if rule == "T^-4":
            return float(self.T) ** -4
        if rule == "half_T^-rho":
            return 0.5 * float(self.T) ** -self.rho
        return float(self.delta)

    def mixing(self):
        if self.M == 1:
            return mixing_matrix(build_graph("complete", 1), self.kappa)
        if self.topology == "custom":
            g = read_edge_list(self.edge_file)
            if g.M != self.M:
                raise ConfigError(f"edge file has {g.M} agents but M = {self.M}")
        else:
            g = build_graph(self.topology, self.M)
        return mixing_matrix(g, self.kappa)

    # -- validation / identity ---------------------------------------------
    def violations(self) -> list[str]:
        errs = []
        if self.algorithm not in ALGORITHMS:
            errs.append(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.M < 1:
            errs.append(f"M must be >= 1, got {self.M}")
        if self.K < 2:
            errs.append(f"K must be >= 2, got {self.K}")
        if self.T <= self.K:
            errs.append(f"T must exceed K, got T={self.T}, K={self.K}")
        if self.topology not in TOPOLOGIES:
            errs.append(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        elif self.algorithm == "decentralized" and self.M > 1:
            if self.topology == "cycle" and self.M < 3:
                errs.append("cycle topology needs M >= 3")
            if self.topology == "custom" and not self.edge_file:
                errs.append("topology = custom needs edge_file")
        if not 0 < self.kappa <= 1:
            errs.append(f"kappa must lie in (0, 1], got {self.kappa}")
        if self.distribution not in ARM_KINDS + ("auto",):
            errs.append(f"distribution must be auto or one of {ARM_KINDS}, got {self.distribution!r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            errs.append(f"sigma must be positive, got {self.sigma}")
        means = self.arm_means
        if len(means) != self.K:
            errs.append(f"means has {len(means)} entries but K = {self.K}")
        elif self.K >= 2:
            top = sorted(means, reverse=True)
            if not top[0] > top[1]:
                errs.append("the best arm must be unique (minimum gap must be positive)")
            if self.arm_kind != "gaussian" and not all(0 <= m <= 1 for m in means):
                errs.append(f"{self.arm_kind} means must lie in [0, 1]")
        if not self.epsilon > 0:
            errs.append(f"epsilon must be positive or 'off', got {self.epsilon}")
        if not self.rho >= 1:
            errs.append(f"rho must be >= 1, got {self.rho}")
        if self.delta_rule not in DELTA_RULES:
            errs.append(f"delta_rule must be one of {DELTA_RULES}, got {self.delta_rule!r}")
        elif self.delta_rule == "explicit" and not (self.delta is not None and 0 < self.delta < 1):
            errs.append(f"delta_rule = explicit needs 0 < delta < 1, got {self.delta}")
        if self.repeats < 1:
            errs.append(f"repeats must be >= 1, got {self.repeats}")
        if not 0 <= self.master_seed < 2 ** 64:
            errs.append(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.grid_points < 2:
            errs.append(f"grid_points must be >= 2, got {self.grid_points}")
        if self.workers < 1:
            errs.append(f"workers must be >= 1, got {self.workers}")
        return errs

    def validate(self) -> "ExperimentConfig":
        errs = self.violations()
        if errs:
            raise ConfigError(errs)
        return self

    def canonical(self) -> dict:
        d = dataclasses.asdict(self)
        for k in _NON_RESULT_FIELDS:
            d.pop(k)
        d["epsilon"] = "off" if math.isinf(self.epsilon) else self.epsilon
        d["means"] = list(self.means) if self.means is not None else None
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


# -- parsing ----------------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def parse_epsilon(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    text = str(text).strip().lower()
    if text in ("off", "inf", "none"):
        return math.inf
    return float(text)


def _parse_value(key: str, text: str):
    text = text.strip()
    if key == "epsilon":
        return parse_epsilon(text)
    if key == "means":
        return tuple(float(v) for v in text.split(",") if v.strip())
    if key == "full_trace":
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {text!r}")
        return text.lower() in ("true", "1", "yes")
    if key == "delta":
        return None if text.lower() == "none" else float(text)
    if key == "edge_file":
        return text or None
    kind = _FIELD_TYPES[key]
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def config_from_mapping(values: dict) -> ExperimentConfig:
    """Build a config from string values, collecting every parse error."""
    errs, kwargs = [], {}
    for key, text in values.items():
        if key not in _FIELD_TYPES:
            errs.append(f"unknown key {key!r}")
            continue
        try:
            kwargs[key] = _parse_value(key, text) if isinstance(text, str) else text
        except ValueError as exc:
            errs.append(f"{key}: {exc}")
    if errs:
        raise ConfigError(errs)
    return ExperimentConfig(**kwargs)


def load_config(path=None, env=None) -> ExperimentConfig:
    """Read a config file (or defaults when ``path`` is None) and apply ``FEDBAN_SEED``."""
    values: dict = {}
    if path is not None:
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        values["master_seed"] = env[SEED_ENV]
    return config_from_mapping(values)


# -- traces -----------------------------------------------------------------

def regret_grid(T: int, points: int = 200) -> np.ndarray:
    """Log-spaced steps in [1, T] plus T/10, T/2 and T."""
    base = np.round(np.logspace(0, math.log10(T), points)).astype(np.int64)
    extra = np.array([max(1, T // 10), max(1, T // 2), T], dtype=np.int64)
    return np.unique(np.concatenate([base, extra]))


@dataclass
class RegretTrace:
    t: np.ndarray
    regret: np.ndarray
    action_histogram: list
    clamp_events: int
    config_hash: str
    config_json: str
    algorithm: str
    master_seed: int
    replica: int
    grid_spec: str

    def at(self, step: int) -> float:
        i = np.searchsorted(self.t, step)
        if i >= len(self.t) or self.t[i] != step:
            raise KeyError(f"step {step} is not on this trace's grid")
        return float(self.regret[i])

    def header_lines(self) -> list[str]:
        hist = ",".join(str(int(c)) for c in self.action_histogram)
        return [
            f"# config_hash={self.config_hash} config={self.config_json}",
            f"# master_seed={self.master_seed} replica={self.replica} "
            f"clamp_events={self.clamp_events} action_histogram={hist}",
            f"# algorithm={self.algorithm}",
            f"# grid={self.grid_spec}",
        ]

    def to_csv(self) -> str:
        rows = [f"{int(t)},{float(r)!r}" for t, r in zip(self.t, self.regret)]
        return "\n".join(self.header_lines() + ["t,regret"] + rows) + "\n"

    def record(self) -> dict:
        return {
            "kind": "run",
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "replica": self.replica,
            "final_regret": float(self.regret[-1]),
            "action_histogram": [int(c) for c in self.action_histogram],
            "clamp_events": int(self.clamp_events),
        }


def _header_fields(line: str) -> dict:
    out = {}
    for part in line.lstrip("# ").split(" "):
        if "=" in part:
            k, _, v = part.partition("=")
            out[k] = v
    return out


def load_trace(path) -> RegretTrace:
    """Parse a trace file, checking its config hash against its embedded config."""
    lines = Path(path).read_text().splitlines()
    if len(lines) < 5 or not all(ln.startswith("#") for ln in lines[:4]):
        raise TraceIntegrityError(f"{path}: missing 4-line trace header")
    first = lines[0]
    if " config=" not in first:
        raise TraceIntegrityError(f"{path}: header lacks the embedded config")
    head, _, config_json = first.partition(" config=")
    recorded = _header_fields(head)["config_hash"]
    actual = hashlib.sha256(config_json.encode()).hexdigest()
    if recorded != actual:
        raise TraceIntegrityError(f"{path}: config hash mismatch ({recorded} != {actual})")
    seed = _header_fields(lines[1])
    algorithm = _header_fields(lines[2])["algorithm"]
    grid_spec = lines[3].partition("grid=")[2]
    body = np.loadtxt(lines[5:], delimiter=",", ndmin=2)
    hist = seed.get("action_histogram", "")
    return RegretTrace(
        t=body[:, 0].astype(np.int64), regret=body[:, 1],
        action_histogram=[int(v) for v in hist.split(",") if v],
        clamp_events=int(seed.get("clamp_events", 0)),
        config_hash=recorded, config_json=config_json, algorithm=algorithm,
        master_seed=int(seed["master_seed"]), replica=int(seed["replica"]), grid_spec=grid_spec,
    )


# -- running ----------------------------------------------------------------

def build_simulation(cfg: ExperimentConfig, seeds, **kwargs):
    common = dict(epsilon=cfg.epsilon, delta=cfg.resolved_delta(), horizon=cfg.T, seeds=seeds)
    common.update(kwargs)
    if cfg.algorithm == "master_worker":
        return MasterWorkerUCB(cfg.arms(), cfg.M, **common)
    return DecentralizedUCB(cfg.arms(), cfg.mixing(), rho=cfg.rho, sigma=cfg.sigma, **common)


def _simulate(cfg: ExperimentConfig, replicas: list[int]) -> list[RegretTrace]:
    seeds = [replica_seeds(cfg.master_seed, cfg.repeats)[r] for r in replicas]
    sim = build_simulation(cfg, seeds).run()
    full = sim.regret_trace()
    if cfg.full_trace:
        grid, spec = np.arange(1, cfg.T + 1), f"full T={cfg.T}"
    else:
        grid, spec = regret_grid(cfg.T, cfg.grid_points), f"log{cfg.grid_points}+T/10+T/2+T T={cfg.T}"
    hist = sim.env.arm_counts
    h, cj = cfg.config_hash(), cfg.canonical_json()
    return [
        RegretTrace(t=grid, regret=full[k, grid - 1], action_histogram=hist[k].tolist(),
                    clamp_events=int(sim.bank.clamp_count[k]), config_hash=h, config_json=cj,
                    algorithm=cfg.algorithm, master_seed=cfg.master_seed, replica=r,
                    grid_spec=spec)
        for k, r in enumerate(replicas)
    ]


def simulate(cfg: ExperimentConfig) -> list[RegretTrace]:
    """Run every repeat of ``cfg`` and return traces ordered by replica."""
    cfg.validate()
    cfg.mixing() if cfg.algorithm == "decentralized" else None  # surfaces spectral errors early
    chunks = [list(c) for c in np.array_split(np.arange(cfg.repeats), min(cfg.workers, cfg.repeats))]
    chunks = [[int(r) for r in c] for c in chunks if len(c)]
    if cfg.workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_simulate, [cfg] * len(chunks), chunks))
    else:
        parts = [_simulate(cfg, c) for c in chunks]
    return [tr for part in parts for tr in part]


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def write_run(traces: list[RegretTrace], out_dir, summary: "Summary") -> None:
    out = Path(out_dir)
    for tr in traces:
        _write_text(out / f"trace_r{tr.replica:03d}.csv", tr.to_csv())
    lines = [json.dumps(tr.record(), sort_keys=True) for tr in traces]
    lines.append(json.dumps(summary.record(), sort_keys=True))
    _write_text(out / "summary.jsonl", "\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> list[RegretTrace]:
    traces = simulate(cfg)
    if write:
        write_run(traces, cfg.out, summarize(traces))
    return traces


# -- summaries --------------------------------------------------------------

@dataclass
class Summary:
    t: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    min: np.ndarray
    max: np.ndarray
    final: np.ndarray
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return int(self.t[-1])

    def mean_at(self, step: int) -> float:
        i = np.searchsorted(self.t, step)
        if i >= len(self.t) or self.t[i] != step:
            raise KeyError(f"step {step} is not on the summary grid")
        return float(self.mean[i])

    def growth_ratio(self, fraction: int) -> float:
        """``(R(T)/T) / (R(T/f)/(T/f))``; values below 1 mean sublinear growth."""
        T = self.T
        early = T // fraction
        r_early = self.mean_at(early)
        if r_early == 0:
            return math.nan
        return (self.mean[-1] / T) / (r_early / early)

    @property
    def sublinearity(self) -> float:
        return self.growth_ratio(2)

    def record(self) -> dict:
        rec = {
            "kind": "summary",
            "config_hash": self.config_hash,
            "runs": int(self.final.size),
            "T": self.T,
            "final_mean": float(self.final.mean()),
            "final_std": float(self.final.std()),
            "final_min": float(self.final.min()),
            "final_max": float(self.final.max()),
            "final_regrets": [float(v) for v in self.final],
            "sublinearity_half": _finite_or_none(self.sublinearity),
        }
        if self.T // 10 in set(self.t.tolist()):
            rec["sublinearity_tenth"] = _finite_or_none(self.growth_ratio(10))
        rec.update(self.extra)
        return rec


def _finite_or_none(x: float):
    return float(x) if math.isfinite(x) else None


def summarize(traces: list[RegretTrace]) -> Summary:
    """Per-grid-point mean, std (population), min and max across runs."""
    if not traces:
        raise ValueError("summarize needs at least one trace")
    grid = traces[0].t
    for tr in traces[1:]:
        if not np.array_equal(tr.t, grid):
            raise ValueError("traces have mismatched grids")
    R = np.stack([tr.regret for tr in traces])
    hashes = {tr.config_hash for tr in traces}
    return Summary(t=grid, mean=R.mean(axis=0), std=R.std(axis=0), min=R.min(axis=0),
                   max=R.max(axis=0), final=R[:, -1],
                   config_hash=hashes.pop() if len(hashes) == 1 else "mixed")


# -- sweeps -----------------------------------------------------------------

def _coerce_sweep_value(param: str, value):
    if param == "epsilon":
        return parse_epsilon(value)
    if param == "rho":
        return float(value)
    if param == "M":
        return int(value)
    return str(value)


def _label(value) -> str:
    if isinstance(value, float) and math.isinf(value):
        return "off"
    return str(value)


@dataclass
class SweepResult:
    param: str
    values: list
    summaries: list
    traces: list

    def final_means(self) -> list[float]:
        return [float(s.final.mean()) for s in self.summaries]


def sweep(base: ExperimentConfig, param: str, values, write: bool = True) -> SweepResult:
    """Run ``base`` once per value of ``param`` with shared seeds.

    Writes one sub-directory per value plus ``plot_data.csv`` (mean regret,
    one column per value) and ``sweep_summary.jsonl``.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"cannot sweep {param!r}; choose from {SWEEP_PARAMS}")
    values = [_coerce_sweep_value(param, v) for v in values]
    if not values:
        raise ConfigError("sweep needs at least one value")
    if param == "rho" and base.algorithm == "master_worker":
        raise ConfigError("rho does not apply to the master_worker algorithm")
    cfgs = [base.replace(**{param: v}) for v in values]
    errs = [f"{param}={_label(v)}: {e}" for v, c in zip(values, cfgs) for e in c.violations()]
    if errs:
        raise ConfigError(errs)
    if param == "epsilon":
        log.warning(EPSILON_NOTE)

    summaries, all_traces = [], []
    for v, cfg in zip(values, cfgs):
        traces = simulate(cfg)
        summary = summarize(traces)
        summary.extra = {"param": param, "value": _label(v)}
        if write:
            write_run(traces, Path(base.out) / f"{param}={_label(v)}", summary)
        summaries.append(summary)
        all_traces.append(traces)

    if write:
        grids = {tuple(s.t.tolist()) for s in summaries}
        if len(grids) == 1:
            header = "t," + ",".join(f"{param}={_label(v)}" for v in values)
            rows = [
                f"{int(t)}," + ",".join(repr(float(s.mean[k])) for s in summaries)
                for k, t in enumerate(summaries[0].t)
            ]
            _write_text(Path(base.out) / "plot_data.csv", "\n".join([header] + rows) + "\n")
        recs = [json.dumps(s.record(), sort_keys=True) for s in summaries]
        _write_text(Path(base.out) / "sweep_summary.jsonl", "\n".join(recs) + "\n")
    return SweepResult(param, values, summaries, all_traces)


__all__ = [
    "ExperimentConfig", "RegretTrace", "Summary", "SweepResult", "FedbanError",
    "load_config", "config_from_mapping", "load_trace", "regret_grid", "run_experiment",
    "simulate", "summarize", "sweep", "build_simulation",
]
