"""Local and global scene graphs with label+position instance association."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

DEFAULT_ASSOCIATION_RADIUS = 0.5
ANCHOR_PREDICATE = "duplicate_of"

# ids of the query node and its duplicate in every global graph
QUERY_ID = 0
QUERY_DUP_ID = 1


@dataclass
class ObjectInstance:
    instance_id: int
    label: str
    position: Optional[tuple[float, float]] = None
    location_id: Optional[int] = None


@dataclass(frozen=True)
class RelationshipEdge:
    subject_id: int
    predicate: str
    object_id: int

    def __post_init__(self):
        if self.subject_id == self.object_id:
            raise ValueError("relation endpoints must differ")


@dataclass
class LocalSceneGraph:
    """One view. Relation endpoints index into ``objects`` by list position."""

    timestep: int
    robot_location: int
    objects: list[ObjectInstance] = field(default_factory=list)
    relations: list[RelationshipEdge] = field(default_factory=list)

    def validate(self):
        if self.timestep < 0:
            raise ValueError("timestep must be >= 0")
        n = len(self.objects)
        for rel in self.relations:
            if not (0 <= rel.subject_id < n and 0 <= rel.object_id < n):
                raise ValueError(f"relation {rel} indexes outside the local objects")

    def triplets(self) -> list[tuple[str, str, str]]:
        return [
            (self.objects[r.subject_id].label, r.predicate, self.objects[r.object_id].label)
            for r in self.relations
        ]


def _cell(position, radius):
    return (math.floor(position[0] / radius), math.floor(position[1] / radius))


class GlobalSceneGraph:
    """Episode-wide scene graph.

    Node 0 is the query node Q, node 1 its duplicate Q', joined by the anchor
    relation. Detections carrying the query label are folded onto Q, so any
    relation observed between the target and another object becomes an edge
    incident to Q.
    """

    def __init__(self, query_label: str):
        if not query_label:
            raise ValueError("query label must be non-empty")
        self.query_label = query_label
        self.objects: list[ObjectInstance] = [
            ObjectInstance(QUERY_ID, query_label),
            ObjectInstance(QUERY_DUP_ID, query_label),
        ]
        self.relations: list[RelationshipEdge] = [
            RelationshipEdge(QUERY_ID, ANCHOR_PREDICATE, QUERY_DUP_ID)
        ]
        # (label, cell) -> instance ids; cells are radius-sized so a match can
        # only live in the 3x3 neighbourhood of the query cell
        self.instance_registry: dict[tuple[str, tuple[int, int]], list[int]] = {}
        self._registry_radius: Optional[float] = None
        self._relation_set = set(self.relations)

    @property
    def query(self) -> ObjectInstance:
        return self.objects[QUERY_ID]

    def __len__(self):
        return len(self.objects)

    def copy(self) -> "GlobalSceneGraph":
        return copy.deepcopy(self)

    def _rebuild_registry(self, radius):
        self.instance_registry = {}
        self._registry_radius = radius
        for obj in self.objects[2:]:
            key = (obj.label, _cell(obj.position, radius))
            self.instance_registry.setdefault(key, []).append(obj.instance_id)

    def associate_instance(self, label, position, radius=DEFAULT_ASSOCIATION_RADIUS,
                           location_id=None) -> int:
        """Return the id of the nearest same-label instance within ``radius``,
        inserting a new instance when none qualifies."""
        if not radius > 0:
            raise ValueError("association radius must be positive")
        if label == self.query_label:
            return QUERY_ID
        if self._registry_radius != radius:
            self._rebuild_registry(radius)
        cx, cy = _cell(position, radius)
        best = None
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for iid in self.instance_registry.get((label, (cx + dx, cy + dy)), ()):
                    d = math.dist(self.objects[iid].position, position)
                    if d <= radius and (best is None or (d, iid) < best):
                        best = (d, iid)
        if best is not None:
            return best[1]
        iid = len(self.objects)
        self.objects.append(
            ObjectInstance(iid, label, (float(position[0]), float(position[1])), location_id)
        )
        self.instance_registry.setdefault((label, (cx, cy)), []).append(iid)
        return iid

    def add_relation(self, subject_id, predicate, object_id) -> bool:
        if subject_id == object_id:
            return False
        rel = RelationshipEdge(subject_id, predicate, object_id)
        if rel in self._relation_set:
            return False
        self._relation_set.add(rel)
        self.relations.append(rel)
        return True

    def merge_local(self, local: LocalSceneGraph, radius=DEFAULT_ASSOCIATION_RADIUS):
        local.validate()
        ids = [self.associate_instance(o.label, o.position, radius, o.location_id)
               for o in local.objects]
        for rel in local.relations:
            self.add_relation(ids[rel.subject_id], rel.predicate, ids[rel.object_id])
        return self

    def label_of(self, instance_id) -> str:
        return self.objects[instance_id].label

    def relation_triplets(self) -> list[tuple[str, str, str]]:
        return [
            (self.label_of(r.subject_id), r.predicate, self.label_of(r.object_id))
            for r in self.relations
        ]

    def evidence_at(self, location_id) -> list[int]:
        """Instances (excluding Q and Q') placed at ``location_id``."""
        return [o.instance_id for o in self.objects[2:] if o.location_id == location_id]

    def to_dict(self) -> dict:
        return {
            "query": self.query_label,
            "objects": [asdict(o) for o in self.objects],
            "relations": [asdict(r) for r in self.relations],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data) -> "GlobalSceneGraph":
        g = cls(data["query"])
        g.objects = [
            ObjectInstance(o["instance_id"], o["label"],
                           tuple(o["position"]) if o["position"] is not None else None,
                           o["location_id"])
            for o in data["objects"]
        ]
        g.relations = [RelationshipEdge(**r) for r in data["relations"]]
        g._relation_set = set(g.relations)
        g._registry_radius = None
        return g


def init_graph(query_label: str) -> GlobalSceneGraph:
    return GlobalSceneGraph(query_label)


def associate_instance(graph, label, position, radius=DEFAULT_ASSOCIATION_RADIUS, location_id=None):
    return graph.associate_instance(label, position, radius, location_id)


def merge_local(graph, local, radius=DEFAULT_ASSOCIATION_RADIUS):
    return graph.merge_local(local, radius)
