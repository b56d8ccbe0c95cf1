"""Paired-seed batch experiments, the distractor sweep, and the demo trace."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import statistics
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from .agent import (AgentConfig, CorppRules, EpisodeResult, run_baseline_corpp,
                    run_baseline_joint, run_baseline_predefined, run_baseline_uniform,
                    run_sarp_episode)
from .corpus import SceneGraphCorpus, generate_synthetic_corpus, load_corpus
from .inference import BpConfig
from .pomdp import MAX_JOINT_DISTRACTORS, SolverConfig, build_joint_pomdp, build_pomdp, solve
from .simworld import (DistractorSpec, EnvironmentMap, PerceptionModel, load_environment,
                       relations_from_corpus, resolve_path, sample_world)

log = logging.getLogger(__name__)

AGENTS = ("sarp", "uniform", "predefined", "corpp")
CSV_FIELDS = ["trial_id", "agent", "seed", "env", "query", "action_cost", "success", "steps",
              "biased_steps"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    environment: str = "hallway"
    query: Optional[str] = None
    corpus: dict = field(default_factory=lambda: {"synthetic": "hallway_corpus.json", "seed": 0})
    agents: list = field(default_factory=lambda: list(AGENTS))
    trials: int = 500
    seed: int = 0
    solver: dict = field(default_factory=dict)
    perception: dict = field(default_factory=dict)
    # perception relations follow corpus triplet frequencies
    relations_from_corpus: bool = True
    model: dict = field(default_factory=dict)
    p_move: float = 0.95
    rules: object = None
    distractors: dict = field(default_factory=dict)
    bp: dict = field(default_factory=dict)
    step_cap: int = 50
    association_radius: float = 0.5
    output: Optional[str] = None
    base_dir: Optional[str] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trial count must be >= 1")
        unknown = set(self.agents) - set(AGENTS)
        if unknown:
            raise ConfigError(f"unknown agents: {sorted(unknown)}")

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        path = resolve_path(path)
        with open(path) as fh:
            data = json.load(fh)
        data.setdefault("base_dir", str(Path(path).parent))
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def _path(self, name) -> Path:
        p = Path(name)
        if not p.is_absolute() and self.base_dir and (Path(self.base_dir) / p).exists():
            return Path(self.base_dir) / p
        return resolve_path(name)


@dataclass
class AgentStats:
    agent: str
    mean_cost: float
    std_cost: float
    success_rate: float
    mean_steps: float
    trials: int

    @classmethod
    def from_rows(cls, agent, rows) -> "AgentStats":
        costs = [float(r["action_cost"]) for r in rows]
        return cls(
            agent,
            statistics.fmean(costs),
            statistics.stdev(costs) if len(costs) > 1 else 0.0,
            statistics.fmean(float(r["success"]) for r in rows),
            statistics.fmean(float(r["steps"]) for r in rows),
            len(rows),
        )


@dataclass
class AggregateReport:
    stats: dict
    env: str = ""
    query: str = ""

    def __getitem__(self, agent) -> AgentStats:
        return self.stats[agent]

    @classmethod
    def from_rows(cls, rows, env="", query="") -> "AggregateReport":
        by_agent: dict = {}
        for r in rows:
            by_agent.setdefault(r["agent"], []).append(r)
        return cls({a: AgentStats.from_rows(a, rs) for a, rs in by_agent.items()}, env, query)

    def table(self) -> str:
        lines = [f"{'agent':<12}{'cost':>10}{'(std)':>10}{'success':>10}{'steps':>9}{'trials':>8}"]
        for s in self.stats.values():
            lines.append(f"{s.agent:<12}{s.mean_cost:>10.2f}{s.std_cost:>10.2f}"
                         f"{s.success_rate:>10.3f}{s.mean_steps:>9.2f}{s.trials:>8d}")
        return "\n".join(lines)


class Setup:
    """Everything built once per experiment: map, corpus, perception, model, policy."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.env: EnvironmentMap = load_environment(config._path(config.environment))
        self.query = config.query or self.env.target_label
        if not self.query:
            raise ConfigError("no query label in config or environment")
        self.corpus = self._corpus()
        perception = dict(config.perception)
        if config.relations_from_corpus:
            perception.setdefault("relation_table", relations_from_corpus(self.corpus))
            perception.setdefault("unlisted_relations", False)
        self.perception = PerceptionModel.from_dict(perception)
        self.agent_config = AgentConfig(self.perception, BpConfig(**config.bp),
                                        config.association_radius, config.step_cap)
        self.rules = self._rules()
        self.model = build_pomdp(self.env, self.query, self.perception, p_move=config.p_move,
                                 **config.model)
        starts = [self.rules.prior(self.env)] if self.rules is not None else []
        self.solver_config = SolverConfig(**config.solver)
        t0 = time.perf_counter()
        self.policy = solve(self.model, self.solver_config, starts)
        self.solve_time = time.perf_counter() - t0
        d = config.distractors
        self.distractors = DistractorSpec(int(d.get("count", 0)), tuple(d.get("labels", ())),
                                          tuple(d["locations"]) if d.get("locations") else None)

    def _corpus(self) -> SceneGraphCorpus:
        spec = self.config.corpus
        if "file" in spec:
            return load_corpus(self.config._path(spec["file"]))
        gen = spec["synthetic"]
        if isinstance(gen, str):
            with open(self.config._path(gen)) as fh:
                gen = json.load(fh)
        return generate_synthetic_corpus(gen, int(spec.get("seed", 0)))

    def _rules(self) -> Optional[CorppRules]:
        rules = self.config.rules
        if rules is None:
            return None
        if isinstance(rules, str):
            return CorppRules.load(self.config._path(rules))
        return CorppRules.from_list(rules)

    def world(self, seed, distractors=None):
        return sample_world(self.env, self.query, distractors=distractors or self.distractors,
                            seed=seed, p_move=self.config.p_move)

    def run_agent(self, agent, seed, distractors=None) -> EpisodeResult:
        w = self.world(seed, distractors)
        cfg = self.agent_config
        if agent == "sarp":
            return run_sarp_episode(w, self.model, self.policy, self.corpus, cfg)
        if agent == "uniform":
            return run_baseline_uniform(w, self.model, self.policy, cfg)
        if agent == "predefined":
            return run_baseline_predefined(w, self.model, cfg)
        if agent == "corpp":
            if self.rules is None:
                raise ConfigError("corpp agent needs a rules file")
            return run_baseline_corpp(w, self.model, self.policy, self.rules, self.env, cfg)
        raise ConfigError(f"unknown agent {agent!r}")


def _row(trial_id, seed, setup: Setup, res: EpisodeResult) -> dict:
    return {
        "trial_id": trial_id, "agent": res.agent, "seed": seed, "env": setup.env.name,
        "query": setup.query, "action_cost": res.action_cost, "success": int(res.success),
        "steps": res.steps, "biased_steps": res.biased_steps,
    }


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS)
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def read_trials_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_experiment(config: ExperimentConfig, setup: Optional[Setup] = None):
    """Run every agent on trial seeds ``seed, seed+1, ...``; returns (report, rows)."""
    setup = setup or Setup(config)
    rows = []
    for i in range(config.trials):
        seed = config.seed + i
        for agent in config.agents:
            rows.append(_row(i, seed, setup, setup.run_agent(agent, seed)))
    report = AggregateReport.from_rows(rows, setup.env.name, setup.query)
    if config.output:
        out = Path(config.output)
        _atomic_write(out / "trials.csv", rows_to_csv(rows))
        _atomic_write(out / "report.txt", report.table() + "\n")
    return report, rows


def paired_t_pvalue(a, b) -> float:
    """Two-sided paired t-test; identical samples give p = 1."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if np.allclose(d, d[0]):
        return 1.0 if np.allclose(d, 0.0) else 0.0
    return float(stats.ttest_rel(a, b).pvalue)


@dataclass
class SweepRow:
    distractors: int
    sarp: AgentStats
    joint: Optional[AgentStats]
    joint_solve_time: Optional[float]
    p_value: Optional[float]


def run_scalability_sweep(config: ExperimentConfig, counts, setup: Optional[Setup] = None):
    """SARP (objects enter the scene graph) against the joint-state POMDP
    (objects enter the hidden state) for each distractor count."""
    setup = setup or Setup(config)
    labels = tuple(config.distractors.get("labels", ()))
    out = []
    csv_rows = []
    for k in counts:
        spec = DistractorSpec(k, labels)
        sarp_rows = []
        for i in range(config.trials):
            seed = config.seed + i
            res = setup.run_agent("sarp", seed, spec)
            sarp_rows.append(_row(i, seed, setup, res))
        joint_stats = joint_time = p = None
        if k <= MAX_JOINT_DISTRACTORS:
            jm = build_joint_pomdp(setup.env, setup.query, k, setup.perception, labels,
                                   p_move=config.p_move, **config.model)
            t0 = time.perf_counter()
            jp = solve(jm, setup.solver_config)
            joint_time = time.perf_counter() - t0
            joint_rows = []
            for i in range(config.trials):
                seed = config.seed + i
                res = run_baseline_joint(setup.world(seed, spec), jm, jp, labels,
                                         setup.agent_config)
                joint_rows.append(_row(i, seed, setup, res))
            joint_stats = AgentStats.from_rows("joint", joint_rows)
            p = paired_t_pvalue([r["action_cost"] for r in sarp_rows],
                                [r["action_cost"] for r in joint_rows])
            csv_rows += [dict(r, agent=f"joint@{k}") for r in joint_rows]
        csv_rows += [dict(r, agent=f"sarp@{k}") for r in sarp_rows]
        out.append(SweepRow(k, AgentStats.from_rows("sarp", sarp_rows), joint_stats, joint_time, p))
    if config.output:
        _atomic_write(Path(config.output) / "sweep.csv", rows_to_csv(csv_rows))
        _atomic_write(Path(config.output) / "sweep.txt", sweep_table(out) + "\n")
    return out


def sweep_table(rows) -> str:
    lines = [f"{'k':>3}{'sarp cost':>12}{'sarp succ':>11}{'joint cost':>12}{'joint succ':>12}"
             f"{'solve s':>10}{'paired p':>10}"]
    for r in rows:
        j = r.joint
        lines.append(
            f"{r.distractors:>3}{r.sarp.mean_cost:>12.2f}{r.sarp.success_rate:>11.3f}"
            + (f"{j.mean_cost:>12.2f}{j.success_rate:>12.3f}{r.joint_solve_time:>10.3f}"
               f"{r.p_value:>10.3f}" if j else f"{'-':>12}{'-':>12}{'-':>10}{'-':>10}"))
    return "\n".join(lines)


def run_demo(config: ExperimentConfig, seed: int, setup: Optional[Setup] = None,
             placement=None) -> tuple[EpisodeResult, str]:
    """One SARP episode with a per-step belief table."""
    setup = setup or Setup(config)
    world = sample_world(setup.env, setup.query, placement=placement,
                         distractors=setup.distractors, seed=seed, p_move=config.p_move)
    cfg = replace(setup.agent_config, keep_graph=True)
    res = run_sarp_episode(world, setup.model, setup.policy, setup.corpus, cfg)
    return res, format_trace(res, setup.query)


def format_trace(res: EpisodeResult, query="") -> str:
    fmt = lambda v: "[" + ", ".join(f"{x:.2f}" for x in v) + "]"
    lines = [f"search for {query!r}; target at s^E_{res.target_location}", ""]
    lines.append(f"{'step':>4}  {'action':<10}{'obs':<14}{'row':<8}belief over target locations")
    for i, s in enumerate(res.trace):
        obs = {"Detected": "Yes", "NotDetected": "No"}.get(s.observation, "-")
        if s.action == "terminate":
            lines.append(f"{i:>4}  {s.action:<10}{obs:<14}")
            continue
        lines.append(f"{i:>4}  {s.action:<10}{obs:<14}{'update':<8}{fmt(s.b)}")
        lines.append(f"{'':>4}  {'':<10}{'':<14}{'bias':<8}"
                     + (fmt(s.b_prime) if s.biased else "No"))
    lines.append("")
    lines.append(f"reported location: {res.reported_location}  success: {res.success}  "
                 f"action cost: {res.action_cost:.0f}")
    return "\n".join(lines)
