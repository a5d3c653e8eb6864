"""In-memory knowledge graph: file ingestion, label resolution, neighbor lookup.

A graph is a deduplicated, ordered collection of (head, relation, tail)
triples over opaque string identifiers, with adjacency indexes for both
directions and optional display labels. Graphs are immutable after load and
safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple


class GraphLoadError(Exception):
    """Raised when a triple or label file cannot be parsed."""

    def __init__(self, message: str, path: str | None = None, line_number: int | None = None):
        self.path = path
        self.line_number = line_number
        super().__init__(message)


class Direction(str, enum.Enum):
    OUTGOING = "outgoing"
    INCOMING = "incoming"
    BOTH = "both"


class Triple(NamedTuple):
    head: str
    relation: str
    tail: str


def _validate_id(value: str, role: str, path: str, line_number: int) -> str:
    if not value or "\t" in value or "\n" in value or "\r" in value:
        raise GraphLoadError(
            f"{path}:{line_number}: invalid {role} identifier {value!r}",
            path=path,
            line_number=line_number,
        )
    return value


@dataclass(frozen=True)
class LoadStats:
    """Line accounting from `load_graph`."""

    parsed: int = 0
    duplicates: int = 0
    labels: int = 0


@dataclass(eq=True)
class KnowledgeGraph:
    """Immutable triple store with per-entity adjacency indexes.

    `out_index` / `in_index` map an entity id to the positions (into
    `triples`) where it appears as head / tail. Together the two indexes
    cover exactly the triple set.
    """

    triples: tuple[Triple, ...]
    entity_labels: dict[str, str] = field(default_factory=dict)
    relation_labels: dict[str, str] = field(default_factory=dict)
    out_index: dict[str, tuple[int, ...]] = field(default_factory=dict)
    in_index: dict[str, tuple[int, ...]] = field(default_factory=dict)
    stats: LoadStats = field(default_factory=LoadStats)

    @classmethod
    def from_triples(
        cls,
        triples: Iterable[Triple],
        entity_labels: dict[str, str] | None = None,
        relation_labels: dict[str, str] | None = None,
        stats: LoadStats | None = None,
    ) -> "KnowledgeGraph":
        unique = tuple(dict.fromkeys(Triple(*t) for t in triples))
        out: dict[str, list[int]] = {}
        inc: dict[str, list[int]] = {}
        for i, t in enumerate(unique):
            out.setdefault(t.head, []).append(i)
            inc.setdefault(t.tail, []).append(i)
        return cls(
            triples=unique,
            entity_labels=dict(entity_labels or {}),
            relation_labels=dict(relation_labels or {}),
            out_index={e: tuple(ix) for e, ix in out.items()},
            in_index={e: tuple(ix) for e, ix in inc.items()},
            stats=stats or LoadStats(parsed=len(unique)),
        )

    @property
    def entities(self) -> set[str]:
        return set(self.out_index) | set(self.in_index)

    @property
    def relations(self) -> set[str]:
        return {t.relation for t in self.triples}

    def entity_label(self, entity: str) -> str:
        return self.entity_labels.get(entity, entity)

    def relation_label(self, relation: str) -> str:
        return self.relation_labels.get(relation, relation)

    def __len__(self) -> int:
        return len(self.triples)


@dataclass(eq=True)
class Subgraph:
    """Ordered, deduplicated subset of a parent graph's triples."""

    triples: tuple[Triple, ...] = ()

    @classmethod
    def from_triples(cls, triples: Iterable[Triple]) -> "Subgraph":
        return cls(tuple(dict.fromkeys(triples)))

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self):
        return iter(self.triples)


def _read_label_file(path: Path) -> dict[str, str]:
    labels: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise GraphLoadError(
                    f"{path}:{line_number}: expected 2 tab-separated fields, "
                    f"got {len(fields)}: {line!r}",
                    path=str(path),
                    line_number=line_number,
                )
            labels[fields[0]] = fields[1]
    return labels


def load_graph(path: str | Path, format: str = "tsv_triples") -> KnowledgeGraph:
    """Load a tab-separated triple file (and its optional label companion).

    Each data line is `head<TAB>relation<TAB>tail`; lines starting with `#`
    and blank lines are ignored. Duplicate triples are collapsed and counted
    in the returned graph's `stats`. A sibling file with the `.labels`
    extension (same stem) supplies `id<TAB>label` display names.
    """
    if format != "tsv_triples":
        raise ValueError(f"unsupported graph format: {format!r}")
    path = Path(path)
    if not path.is_file():
        raise GraphLoadError(f"file not found: {path}", path=str(path))

    triples: list[Triple] = []
    parsed = 0
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise GraphLoadError(
                    f"{path}:{line_number}: expected 3 tab-separated fields, "
                    f"got {len(fields)}: {line!r}",
                    path=str(path),
                    line_number=line_number,
                )
            head = _validate_id(fields[0], "head", str(path), line_number)
            relation = _validate_id(fields[1], "relation", str(path), line_number)
            tail = _validate_id(fields[2], "tail", str(path), line_number)
            triples.append(Triple(head, relation, tail))
            parsed += 1

    unique = list(dict.fromkeys(triples))
    label_path = path.with_suffix(".labels")
    labels = _read_label_file(label_path) if label_path.is_file() else {}

    entity_ids = {t.head for t in unique} | {t.tail for t in unique}
    relation_ids = {t.relation for t in unique}
    entity_labels = {k: v for k, v in labels.items() if k in entity_ids}
    relation_labels = {k: v for k, v in labels.items() if k in relation_ids}

    return KnowledgeGraph.from_triples(
        unique,
        entity_labels=entity_labels,
        relation_labels=relation_labels,
        stats=LoadStats(parsed=parsed, duplicates=parsed - len(unique), labels=len(labels)),
    )


def neighbors(
    kg: KnowledgeGraph, entity: str, direction: Direction = Direction.BOTH
) -> list[Triple]:
    """Triples incident to `entity`, in graph insertion order per direction.

    Unknown entities yield an empty list. With `BOTH`, outgoing triples come
    first and self-loops are not repeated.
    """
    direction = Direction(direction)
    out = [kg.triples[i] for i in kg.out_index.get(entity, ())]
    if direction is Direction.OUTGOING:
        return out
    inc = [kg.triples[i] for i in kg.in_index.get(entity, ())]
    if direction is Direction.INCOMING:
        return inc
    seen = set(out)
    return out + [t for t in inc if t not in seen]


def verbalize(kg: KnowledgeGraph, triple: Triple) -> str:
    """Render a triple as `head label, relation label, tail label`.

    Ids without a label entry fall back to the raw id so verbalization never
    fails on incomplete label tables.
    """
    return (
        f"{kg.entity_label(triple.head)}, "
        f"{kg.relation_label(triple.relation)}, "
        f"{kg.entity_label(triple.tail)}"
    )


def seed_subgraph(
    kg: KnowledgeGraph,
    entities: Iterable[str],
    direction: Direction = Direction.BOTH,
    hops: int = 1,
) -> Subgraph:
    """Union of the entities' neighborhoods, deduplicated in discovery order.

    With `hops` > 1 the frontier is widened through the endpoints of each
    newly collected triple, so `hops=2` covers the 2-hop neighborhood and so
    on. Entities absent from the graph contribute nothing.
    """
    if hops < 1:
        raise ValueError("hops must be >= 1")
    direction = Direction(direction)
    collected: dict[Triple, None] = {}
    frontier = list(dict.fromkeys(entities))
    visited: set[str] = set(frontier)
    for _ in range(hops):
        if not frontier:
            break
        next_frontier: list[str] = []
        for entity in frontier:
            for triple in neighbors(kg, entity, direction):
                if triple not in collected:
                    collected[triple] = None
                for endpoint in (triple.head, triple.tail):
                    if endpoint not in visited:
                        visited.add(endpoint)
                        next_frontier.append(endpoint)
        frontier = next_frontier
    return Subgraph(tuple(collected))
