"""Scene-graph corpus: per-image label/triplet sets, count indexes, edge potentials."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

SMOOTHING = 1e-3

Triplet = tuple[str, str, str]


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusImage:
    image_id: str
    labels: frozenset
    relations: frozenset

    def __post_init__(self):
        for s, _, o in self.relations:
            if s not in self.labels or o not in self.labels:
                raise CorpusError(
                    f"image {self.image_id}: relation endpoint not among labels: {(s, _, o)}")

    @classmethod
    def from_record(cls, record) -> "CorpusImage":
        return cls(
            str(record["image_id"]),
            frozenset(record["labels"]),
            frozenset(tuple(r) for r in record.get("relations", [])),
        )

    def to_record(self) -> dict:
        return {
            "image_id": self.image_id,
            "labels": sorted(self.labels),
            "relations": [list(r) for r in sorted(self.relations)],
        }


@dataclass(frozen=True)
class PotentialTable:
    """Four-entry edge potential; ``as_matrix()[x_subject, x_object]``."""

    p11: float
    p00: float
    p01: float
    p10: float

    def __post_init__(self):
        if min(self.p11, self.p00, self.p01, self.p10) < 0:
            raise ValueError("potential entries must be non-negative")

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.p00, self.p01], [self.p10, self.p11]])

    def smoothed(self, eps=SMOOTHING) -> "PotentialTable":
        return PotentialTable(self.p11 + eps, self.p00 + eps, self.p01 + eps, self.p10 + eps)


def _pair(a, b):
    return (a, b) if a <= b else (b, a)


class SceneGraphCorpus:
    """Immutable image collection with inverted indexes over labels, label pairs
    and triplets. Counting is per image: duplicates within one image count once."""

    def __init__(self, images: Iterable[CorpusImage] = ()):
        self.images: tuple[CorpusImage, ...] = tuple(images)
        self._build_indexes()

    def _build_indexes(self):
        by_label: dict[str, set] = {}
        by_pair: dict[tuple[str, str], set] = {}
        by_triplet: dict[Triplet, set] = {}
        seen = set()
        for img in self.images:
            if img.image_id in seen:
                raise CorpusError(f"duplicate image_id {img.image_id!r}")
            seen.add(img.image_id)
            labels = sorted(img.labels)
            for i, a in enumerate(labels):
                by_label.setdefault(a, set()).add(img.image_id)
                for b in labels[i + 1:]:
                    by_pair.setdefault((a, b), set()).add(img.image_id)
            for t in img.relations:
                by_triplet.setdefault(t, set()).add(img.image_id)
        self.label_index = {k: frozenset(v) for k, v in by_label.items()}
        self.pair_index = {k: frozenset(v) for k, v in by_pair.items()}
        self.triplet_index = {k: frozenset(v) for k, v in by_triplet.items()}

    def __len__(self):
        return len(self.images)

    def images_with(self, label) -> int:
        return len(self.label_index.get(label, ()))

    def images_with_pair(self, a, b) -> int:
        if a == b:
            return self.images_with(a)
        return len(self.pair_index.get(_pair(a, b), ()))

    def images_with_triplet(self, triplet) -> int:
        return len(self.triplet_index.get(tuple(triplet), ()))

    def images_with_any(self, a, b) -> int:
        return self.images_with(a) + self.images_with(b) - self.images_with_pair(a, b)

    def potential(self, triplet: Triplet, smoothing=SMOOTHING) -> PotentialTable:
        """Counting rule for a single relation (v, e, v')."""
        v, _, w = triplet
        m = self.images_with_any(v, w)
        if m == 0:
            table = PotentialTable(0.25, 0.25, 0.25, 0.25)
        else:
            both = self.images_with_pair(v, w)
            with_rel = self.images_with_triplet(triplet)
            table = PotentialTable(
                p11=with_rel / m,
                # both labels present but not this relation
                p00=(both - with_rel) / m,
                p01=(self.images_with(w) - both) / m,
                p10=(self.images_with(v) - both) / m,
            )
        return table.smoothed(smoothing) if smoothing else table

    def to_records(self) -> list[dict]:
        return [img.to_record() for img in self.images]

    def save(self, path):
        with open(path, "w") as fh:
            for rec in self.to_records():
                fh.write(json.dumps(rec) + "\n")


def load_corpus(path) -> SceneGraphCorpus:
    images = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                images.append(CorpusImage.from_record(record))
            except (json.JSONDecodeError, KeyError, TypeError, CorpusError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
    return SceneGraphCorpus(images)


def calc_phi(local, corpus: SceneGraphCorpus, smoothing=SMOOTHING) -> list[PotentialTable]:
    """One potential table per relation of ``local`` (a LocalSceneGraph or a
    list of label triplets)."""
    triplets = local.triplets() if hasattr(local, "triplets") else list(local)
    return [corpus.potential(t, smoothing) for t in triplets]


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise CorpusError(f"{name}: probability {p} outside [0, 1]")


def generate_synthetic_corpus(spec: dict, seed: int) -> SceneGraphCorpus:
    """Sample a corpus from a generator config.

    ``spec`` keys:
      images: number of images
      classes: {label: independent appearance probability}
      cooccurrence: [{"labels": [a, b, ...], "p": prob}] -- all labels added together
      relations: [{"triplet": [s, pred, o], "p": prob}] -- emitted when s and o present
    """
    n = int(spec.get("images", 100))
    classes = dict(spec.get("classes", {}))
    groups = list(spec.get("cooccurrence", []))
    rels = list(spec.get("relations", []))
    for label, p in classes.items():
        _check_prob(label, p)
    for g in groups:
        _check_prob("+".join(g["labels"]), g["p"])
    for r in rels:
        _check_prob(" ".join(r["triplet"]), r["p"])

    rng = np.random.default_rng(seed)
    class_names = sorted(classes)
    class_p = np.array([classes[c] for c in class_names])
    images = []
    for i in range(n):
        present = {c for c, hit in zip(class_names, rng.random(len(class_names)) < class_p) if hit}
        for g in groups:
            if rng.random() < g["p"]:
                present.update(g["labels"])
        triplets = set()
        for r in rels:
            s, pred, o = r["triplet"]
            if s in present and o in present and rng.random() < r["p"]:
                triplets.add((s, pred, o))
        images.append(CorpusImage(f"img{i:06d}", frozenset(present), frozenset(triplets)))
    return SceneGraphCorpus(images)
