"""Seedable discrete-location world: ground truth, motion and simulated perception.

Perception stands in for a learned scene-graph generator: objects in sensing
range are detected independently, co-located detections emit relations, and the
target label can be hallucinated at the false-positive rate.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .scenegraph import LocalSceneGraph, ObjectInstance, RelationshipEdge

log = logging.getLogger(__name__)

DETECTED = "Detected"
NOT_DETECTED = "NotDetected"
NOT_APPLICABLE = "NotApplicable"

TARGET_ANCHOR = "target"
OBJECT_RING_RADIUS = 0.6


class WorldError(ValueError):
    pass


@dataclass
class EnvironmentMap:
    name: str
    locations: np.ndarray
    adjacency: list[list[int]]
    start: int = 0
    # static layout: (label, location index or "target")
    objects: list[tuple[str, object]] = field(default_factory=list)
    target_label: Optional[str] = None
    target_distribution: Optional[np.ndarray] = None

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float).reshape(-1, 2)
        n = len(self.locations)
        if n == 0:
            raise WorldError("environment needs at least one location")
        self.adjacency = [sorted(set(int(j) for j in nb)) for nb in self.adjacency]
        if len(self.adjacency) != n:
            raise WorldError("adjacency must list neighbours for every location")
        for i, nb in enumerate(self.adjacency):
            for j in nb:
                if not 0 <= j < n or j == i:
                    raise WorldError(f"bad neighbour {j} of location {i}")
                if i not in self.adjacency[j]:
                    raise WorldError(f"adjacency not symmetric: {i}-{j}")
        if not self.is_connected():
            raise WorldError(f"environment {self.name!r} is disconnected")
        if not 0 <= self.start < n:
            raise WorldError("start location out of range")
        if self.target_distribution is not None:
            self.target_distribution = np.asarray(self.target_distribution, dtype=float)

    def __len__(self):
        return len(self.locations)

    @property
    def n(self) -> int:
        return len(self.locations)

    def distance(self, i, j) -> float:
        return float(np.linalg.norm(self.locations[i] - self.locations[j]))

    def is_connected(self) -> bool:
        seen = {0}
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in self.adjacency[i]:
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
        return len(seen) == self.n

    def can_go(self, frm, to) -> bool:
        return to == frm or to in self.adjacency[frm]

    def sensed(self, robot_location, sensing_range=0.0) -> list[int]:
        return [i for i in range(self.n)
                if i == robot_location or self.distance(robot_location, i) <= sensing_range]

    def nearest_location(self, position) -> int:
        return int(np.argmin(np.linalg.norm(self.locations - np.asarray(position), axis=1)))

    def shortest_path(self, frm, to) -> list[int]:
        """Locations after ``frm`` up to and including ``to`` (BFS, lowest index first)."""
        prev = {frm: None}
        queue = deque([frm])
        while queue:
            i = queue.popleft()
            if i == to:
                break
            for j in self.adjacency[i]:
                if j not in prev:
                    prev[j] = i
                    queue.append(j)
        path = []
        node = to
        while node != frm:
            path.append(node)
            node = prev[node]
        return path[::-1]

    @classmethod
    def from_dict(cls, data) -> "EnvironmentMap":
        placement = data.get("target_placement") or {}
        dist = placement.get("distribution")
        n = len(data["locations"])
        if isinstance(dist, dict):
            vec = np.zeros(n)
            for k, v in dist.items():
                vec[int(k)] = v
            dist = vec
        elif dist == "uniform":
            dist = np.full(n, 1.0 / n)
        objects = [(o["label"], o["location"]) for o in data.get("objects", [])]
        return cls(data.get("name", "env"), data["locations"], data["adjacency"],
                   data.get("start", 0), objects, placement.get("label"), dist)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "locations": self.locations.tolist(),
            "adjacency": self.adjacency,
            "start": self.start,
            "objects": [{"label": l, "location": loc} for l, loc in self.objects],
        }
        if self.target_label is not None:
            out["target_placement"] = {
                "label": self.target_label,
                "distribution": None if self.target_distribution is None
                else self.target_distribution.tolist(),
            }
        return out


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("sarp") / "data" / name))


def resolve_path(path_or_name) -> Path:
    """Filesystem path, or the name of a shipped fixture (``hallway``, ``kitchen``...)."""
    p = Path(path_or_name)
    if p.exists():
        return p
    for candidate in (str(path_or_name), f"{path_or_name}.json"):
        b = builtin_path(candidate)
        if b.exists():
            return b
    raise FileNotFoundError(path_or_name)


def load_environment(path_or_name) -> EnvironmentMap:
    with open(resolve_path(path_or_name)) as fh:
        return EnvironmentMap.from_dict(json.load(fh))


@dataclass(frozen=True)
class PerceptionModel:
    tp: float = 0.8
    fp: float = 0.05
    tp_by_label: dict = field(default_factory=dict)
    fp_by_label: dict = field(default_factory=dict)
    sensing_range: float = 0.0
    relation_prob: float = 0.9
    predicates: tuple = ("on", "in", "belongs")
    # "a|b" (sorted labels) -> [subject, predicate, object], or a list of
    # [[subject, predicate, object], weight] alternatives
    relation_table: dict = field(default_factory=dict)
    # pairs missing from relation_table: emit a random predicate, or nothing
    unlisted_relations: bool = True
    position_sigma: float = 0.1

    def __post_init__(self):
        rates = [self.tp, self.fp, self.relation_prob,
                 *self.tp_by_label.values(), *self.fp_by_label.values()]
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise WorldError("perception rates must lie in [0, 1]")
        if self.tp <= self.fp:
            log.warning("TP %.3f <= FP %.3f: detections are uninformative", self.tp, self.fp)

    def tp_of(self, label) -> float:
        return self.tp_by_label.get(label, self.tp)

    def fp_of(self, label) -> float:
        return self.fp_by_label.get(label, self.fp)

    def emits(self, a, b) -> bool:
        return self.unlisted_relations or "|".join(sorted((a, b))) in self.relation_table

    def triplet_for(self, a, b, rng):
        key = "|".join(sorted((a, b)))
        entry = self.relation_table.get(key)
        if entry is None:
            s, o = sorted((a, b))
            return (s, self.predicates[int(rng.integers(len(self.predicates)))], o)
        if isinstance(entry[0], str):
            return tuple(entry)
        weights = np.array([w for _, w in entry], dtype=float)
        pick = int(rng.choice(len(entry), p=weights / weights.sum()))
        return tuple(entry[pick][0])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["predicates"] = list(self.predicates)
        return d

    @classmethod
    def from_dict(cls, data) -> "PerceptionModel":
        data = dict(data or {})
        if "predicates" in data:
            data["predicates"] = tuple(data["predicates"])
        return cls(**data)


@dataclass
class PlacedObject:
    label: str
    location: int
    position: tuple[float, float]


@dataclass
class WorldState:
    env: EnvironmentMap
    query_label: str
    robot_location: int
    target_location: int
    target_position: tuple[float, float]
    objects: list[PlacedObject]
    rng: np.random.Generator
    p_move: float = 0.95
    timestep: int = 0
    terminal: bool = False

    @property
    def distractors(self) -> list[PlacedObject]:
        return self.objects


def _ring_positions(env, counts, location):
    """Next free slot on a ring around ``location``; keeps co-located objects apart."""
    k = counts.get(location, 0)
    counts[location] = k + 1
    angle = 2 * math.pi * (k * 0.381966)  # golden-angle spacing
    cx, cy = env.locations[location]
    return (cx + OBJECT_RING_RADIUS * math.cos(angle), cy + OBJECT_RING_RADIUS * math.sin(angle))


@dataclass(frozen=True)
class DistractorSpec:
    count: int = 0
    labels: tuple = ()
    # locations drawn uniformly unless given
    locations: Optional[tuple] = None


def sample_world(env: EnvironmentMap, query_label: str, placement=None,
                 distractors: DistractorSpec = DistractorSpec(), seed: int = 0,
                 p_move: float = 0.95) -> WorldState:
    """Place the target (and target-anchored objects) by ``placement``, then the
    static layout, then ``distractors``. Same seed, same world."""
    placement = env.target_distribution if placement is None else placement
    if placement is None:
        placement = np.full(env.n, 1.0 / env.n)
    placement = np.asarray(placement, dtype=float)
    if placement.shape != (env.n,) or placement.min() < 0 or abs(placement.sum() - 1) > 1e-9:
        raise WorldError("target placement must be a normalized distribution over locations")
    if not 0.0 <= p_move <= 1.0:
        raise WorldError("p_move must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    target = int(rng.choice(env.n, p=placement))
    counts: dict[int, int] = {}
    target_pos = _ring_positions(env, counts, target)
    objects = []
    for label, loc in env.objects:
        loc = target if loc == TARGET_ANCHOR else int(loc)
        objects.append(PlacedObject(label, loc, _ring_positions(env, counts, loc)))
    if distractors.count:
        if not distractors.labels:
            raise WorldError("distractor spec needs labels")
        for i in range(distractors.count):
            label = distractors.labels[i % len(distractors.labels)]
            if distractors.locations is not None:
                loc = int(distractors.locations[i % len(distractors.locations)])
            else:
                loc = int(rng.integers(env.n))
            objects.append(PlacedObject(label, loc, _ring_positions(env, counts, loc)))
    # perception/motion stream is independent of how many placement draws happened
    stream = np.random.default_rng([seed, 1])
    return WorldState(env, query_label, env.start, target, target_pos, objects, stream, p_move)


def step(world: WorldState, action: int, model=None) -> tuple[WorldState, float]:
    """Execute ``action`` (``n`` = terminate, otherwise go to that location)."""
    env = world.env
    if world.terminal:
        raise WorldError("episode already terminated")
    if action == env.n:
        world.terminal = True
        world.timestep += 1
        reward = model.terminate_reward(world.robot_location, world.target_location) if model else 0.0
        return world, reward
    if not 0 <= action < env.n or not env.can_go(world.robot_location, action):
        raise WorldError(f"illegal action go_{action} from location {world.robot_location}")
    frm = world.robot_location
    if action == frm or world.rng.random() < world.p_move:
        world.robot_location = action
    world.timestep += 1
    reward = model.reward(frm, action) if model else 0.0
    return world, reward


def perceive(world: WorldState, perception: PerceptionModel,
             fp_labels: Optional[Sequence[str]] = None) -> tuple[LocalSceneGraph, str]:
    """Simulated image at the robot's location.

    ``fp_labels`` are the labels that can be hallucinated (default: the query).
    """
    env, rng = world.env, world.rng
    visible = set(env.sensed(world.robot_location, perception.sensing_range))
    fp_labels = [world.query_label] if fp_labels is None else list(fp_labels)
    sigma = perception.position_sigma

    candidates = [PlacedObject(world.query_label, world.target_location, world.target_position)]
    candidates += world.objects
    detected: list[PlacedObject] = []
    for obj in candidates:
        if obj.location in visible and rng.random() < perception.tp_of(obj.label):
            detected.append(obj)

    objects = []
    for obj in detected:
        pos = (obj.position[0] + rng.normal(0, sigma), obj.position[1] + rng.normal(0, sigma))
        objects.append(ObjectInstance(len(objects), obj.label, pos, env.nearest_location(pos)))
    relations = []
    for i in range(len(detected)):
        for j in range(i + 1, len(detected)):
            a, b = detected[i], detected[j]
            if a.location != b.location or a.label == b.label or not perception.emits(a.label, b.label):
                continue
            if rng.random() < perception.relation_prob:
                s, pred, o = perception.triplet_for(a.label, b.label, rng)
                si, oi = (i, j) if s == a.label else (j, i)
                relations.append(RelationshipEdge(si, pred, oi))

    present = {o.label for o in detected}
    for label in fp_labels:
        in_view = label == world.query_label and world.target_location in visible
        in_view = in_view or any(o.label == label and o.location in visible for o in world.objects)
        if not in_view and label not in present and rng.random() < perception.fp_of(label):
            # hallucinations carry no relations
            cx, cy = env.locations[world.robot_location]
            pos = (cx + rng.normal(0, sigma), cy + rng.normal(0, sigma))
            objects.append(ObjectInstance(len(objects), label, pos, world.robot_location))
            present.add(label)

    local = LocalSceneGraph(world.timestep, world.robot_location, objects, relations)
    z = DETECTED if world.query_label in present else NOT_DETECTED
    return local, z


def relations_from_corpus(corpus) -> dict:
    """Relation table whose predicates follow corpus triplet frequencies, the
    way a generator trained on that corpus would label pairs."""
    table: dict = {}
    for (s, pred, o), ids in sorted(corpus.triplet_index.items()):
        key = "|".join(sorted((s, o)))
        table.setdefault(key, []).append([[s, pred, o], len(ids)])
    return table
