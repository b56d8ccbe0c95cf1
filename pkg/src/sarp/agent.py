"""Episode runners: the scene-graph-biased agent and the three baselines."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .corpus import SceneGraphCorpus
from .inference import BpConfig, build_network, target_bias_vector
from .pomdp import Policy, TargetSearchPomdp, belief_update
from .scenegraph import DEFAULT_ASSOCIATION_RADIUS, GlobalSceneGraph
from .simworld import (DETECTED, NOT_APPLICABLE, EnvironmentMap, PerceptionModel, WorldState,
                       perceive, step)

STEP_CAP = 50


class AgentError(ValueError):
    pass


@dataclass
class TraceStep:
    action: str
    observation: str
    robot_location: int
    b: list
    b_prime: list
    biased: bool
    bias: Optional[list] = None


@dataclass
class EpisodeResult:
    agent: str
    total_reward: float
    action_cost: float
    success: bool
    steps: int
    target_location: int
    reported_location: Optional[int]
    terminated: bool
    trace: list[TraceStep] = field(default_factory=list)
    graph: Optional[dict] = None

    @property
    def biased_steps(self) -> int:
        return sum(s.biased for s in self.trace)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["biased_steps"] = self.biased_steps
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass(frozen=True)
class AgentConfig:
    perception: PerceptionModel = PerceptionModel()
    bp: BpConfig = BpConfig()
    association_radius: float = DEFAULT_ASSOCIATION_RADIUS
    step_cap: int = STEP_CAP
    keep_graph: bool = False


def bias_belief(b, bias) -> np.ndarray:
    """Elementwise reweighting of ``b`` by a location likelihood; ``b`` is not modified."""
    b = np.asarray(b, dtype=float)
    bias = np.asarray(bias, dtype=float)
    if bias.shape != b.shape:
        raise AgentError("bias and belief must have the same shape")
    if bias.min() < 0:
        raise AgentError("bias entries must be non-negative")
    if bias.max() > 0 and np.all(bias == bias[0]):
        return b.copy()  # a constant factor cancels in the normalizer
    post = bias * b
    total = post.sum()
    if total <= 0:
        raise AgentError("bias removes all belief mass")
    return post / total


class _PotentialCache:
    """Edge tables keyed by label triplet; filled from each local graph."""

    def __init__(self, corpus: SceneGraphCorpus):
        self.corpus = corpus
        self.tables = {}

    def update(self, local):
        for t in local.triplets():
            if t not in self.tables:
                self.tables[t] = self.corpus.potential(t)

    def aligned(self, graph: GlobalSceneGraph):
        out = []
        for t in graph.relation_triplets():
            if t not in self.tables:
                self.tables[t] = self.corpus.potential(t)
            out.append(self.tables[t])
        return out


def _policy_episode(name, world: WorldState, model: TargetSearchPomdp, policy: Policy,
                    config: AgentConfig, b0=None, corpus: Optional[SceneGraphCorpus] = None):
    """Shared loop. Biasing is active only when ``corpus`` is given."""
    if model.n_hidden != model.n_locations:
        raise AgentError("policy agents expect a target-only model")
    n = model.n_locations
    b = model.uniform_belief() if b0 is None else np.asarray(b0, dtype=float)
    b_prime = b.copy()
    graph = cache = None
    # every agent takes the initial image so paired runs share one random stream
    local, _ = perceive(world, config.perception)
    if corpus is not None:
        graph = GlobalSceneGraph(world.query_label)
        cache = _PotentialCache(corpus)
        graph.merge_local(local, config.association_radius)
        cache.update(local)

    trace, total, cost, terminated = [], 0.0, 0.0, False
    for _ in range(config.step_cap):
        a = policy.action(b_prime, world.robot_location)
        if a == model.terminate:
            _, reward = step(world, a, model)
            total += reward
            trace.append(TraceStep("terminate", NOT_APPLICABLE, world.robot_location,
                                   b.tolist(), b_prime.tolist(), False))
            terminated = True
            break
        _, reward = step(world, a, model)
        total += reward
        cost -= reward
        local, z = perceive(world, config.perception)
        b = belief_update(b, a, z, model, world.robot_location)
        biased, bias = False, None
        if graph is not None:
            graph.merge_local(local, config.association_radius)
            cache.update(local)
        if graph is not None and z == DETECTED:
            net = build_network(graph, cache.aligned(graph))
            bias = target_bias_vector(net, graph, n, config.bp)
            b_prime = bias_belief(b, bias)
            biased = True
        else:
            b_prime = b.copy()
        trace.append(TraceStep(model.action_name(a), z, world.robot_location, b.tolist(),
                               b_prime.tolist(), biased,
                               None if bias is None else bias.tolist()))
    reported = int(np.argmax(b_prime)) if terminated else None
    return EpisodeResult(name, total, cost, terminated and reported == world.target_location,
                         len(trace), world.target_location, reported, terminated, trace,
                         graph.to_dict() if (graph is not None and config.keep_graph) else None)


def run_sarp_episode(world, model, policy, corpus, config: AgentConfig = AgentConfig(),
                     b0=None) -> EpisodeResult:
    return _policy_episode("sarp", world, model, policy, config, b0, corpus)


def run_baseline_uniform(world, model, policy, config: AgentConfig = AgentConfig()) -> EpisodeResult:
    return _policy_episode("uniform", world, model, policy, config)


def run_baseline_corpp(world, model, policy, rules, env: Optional[EnvironmentMap] = None,
                       config: AgentConfig = AgentConfig()) -> EpisodeResult:
    prior = rules.prior(env or world.env) if isinstance(rules, CorppRules) else np.asarray(rules)
    return _policy_episode("corpp", world, model, policy, config, prior)


def run_baseline_predefined(world, model, config: AgentConfig = AgentConfig()) -> EpisodeResult:
    """Observe every location once, always heading for the nearest unobserved
    one (start first, ties to the lowest index), then report the belief argmax."""
    env, n = world.env, model.n_locations
    b = model.uniform_belief()
    perceive(world, config.perception)
    observed = set()
    trace, total, cost = [], 0.0, 0.0
    while len(observed) < n and len(trace) < config.step_cap:
        r = world.robot_location
        goal = min((g for g in range(n) if g not in observed),
                   key=lambda g: (len(env.shortest_path(r, g)), g))
        a = goal if goal == r else env.shortest_path(r, goal)[0]
        _, reward = step(world, a, model)
        total += reward
        cost -= reward
        _, z = perceive(world, config.perception)
        b = belief_update(b, a, z, model, world.robot_location)
        observed.add(world.robot_location)
        trace.append(TraceStep(model.action_name(a), z, world.robot_location, b.tolist(),
                               b.tolist(), False))
    terminated = len(trace) < config.step_cap
    reported = None
    if terminated:
        _, reward = step(world, model.terminate, model)
        total += reward
        trace.append(TraceStep("terminate", NOT_APPLICABLE, world.robot_location, b.tolist(),
                               b.tolist(), False))
        reported = int(np.argmax(b))
    return EpisodeResult("predefined", total, cost,
                         terminated and reported == world.target_location, len(trace),
                         world.target_location, reported, terminated, trace)


@dataclass(frozen=True)
class CorppRule:
    """With ``probability`` the target sits at a location satisfying the rule:
    ``location`` (or any location when None) holding ``condition`` (a label in
    the static layout, or anything when None)."""

    condition: Optional[str]
    location: Optional[int]
    probability: float


@dataclass(frozen=True)
class CorppRules:
    rules: tuple = ()

    def __post_init__(self):
        for r in self.rules:
            if not 0.0 <= r.probability <= 1.0:
                raise AgentError(f"rule probability {r.probability} outside [0, 1]")

    @classmethod
    def from_list(cls, items) -> "CorppRules":
        return cls(tuple(CorppRule(i.get("condition"), i.get("location"), float(i["probability"]))
                         for i in items))

    @classmethod
    def load(cls, path) -> "CorppRules":
        with open(path) as fh:
            return cls.from_list(json.load(fh))

    def matches(self, rule: CorppRule, env: EnvironmentMap) -> list[int]:
        locs = range(env.n) if rule.location is None else [int(rule.location)]
        if rule.condition is None:
            return list(locs)
        present = {int(loc) for label, loc in env.objects
                   if label == rule.condition and loc != "target"}
        return [l for l in locs if l in present]

    def prior(self, env: EnvironmentMap) -> np.ndarray:
        """Mixture: each rule spreads its probability over its matching
        locations; leftover mass is uniform."""
        n = env.n
        prior = np.zeros(n)
        used = 0.0
        for rule in self.rules:
            locs = self.matches(rule, env)
            if not locs and rule.probability > 0:
                raise AgentError(f"rule {rule} matches no location")
            if locs and rule.probability > 0:
                prior[locs] += rule.probability / len(locs)
                used += rule.probability
        if used > 1.0 + 1e-9:
            raise AgentError("rule probabilities sum above 1")
        prior += max(0.0, 1.0 - used) / n
        if prior.sum() <= 0:
            raise AgentError("rules induce an all-zero prior")
        return prior / prior.sum()


def run_baseline_joint(world, model: TargetSearchPomdp, policy: Policy, distractor_labels,
                       config: AgentConfig = AgentConfig()) -> EpisodeResult:
    """Uniform-prior agent whose hidden state also tracks ``k`` non-target objects."""
    labels = [world.query_label] + list(distractor_labels)[:model.n_distractors]
    b = model.uniform_belief()
    perceive(world, config.perception, fp_labels=labels)
    trace, total, cost, terminated = [], 0.0, 0.0, False
    for _ in range(config.step_cap):
        a = policy.action(b, world.robot_location)
        marginal = model.target_marginal(b)
        if a == model.terminate:
            _, reward = step(world, a, model)
            total += reward
            trace.append(TraceStep("terminate", NOT_APPLICABLE, world.robot_location,
                                   marginal.tolist(), marginal.tolist(), False))
            terminated = True
            break
        _, reward = step(world, a, model)
        total += reward
        cost -= reward
        local, _ = perceive(world, config.perception, fp_labels=labels)
        seen = {o.label for o in local.objects}
        z = sum(1 << j for j, label in enumerate(labels) if label not in seen)
        b = belief_update(b, a, z, model, world.robot_location)
        marginal = model.target_marginal(b)
        trace.append(TraceStep(model.action_name(a), str(model.obs_names[z]), world.robot_location,
                               marginal.tolist(), marginal.tolist(), False))
    marginal = model.target_marginal(b)
    reported = int(np.argmax(marginal)) if terminated else None
    return EpisodeResult("joint", total, cost, terminated and reported == world.target_location,
                         len(trace), world.target_location, reported, terminated, trace)
