"""Recursive update/refine observation over the knowledge graph.

Each seed entity is walked independently for up to depth_limit turns. A turn
collects the out-edges of the current frontier, scores every candidate
against the question embedding, appends the top_n best (skipping triples the
subgraph already holds), and promotes the tails of the top refine_percent of
that selection to the next frontier, never revisiting an entity for the same
seed. The selection is ranked before deduplication so that seeds stay
independent of each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import ceil
from typing import Iterable

from .embedding import EmbeddingCache, EmbeddingProvider, embed_text, score_candidate
from .kg import EntityId, KnowledgeGraph, Triple


@dataclass
class ObservationParams:
    depth_limit: int = 3
    top_n: int = 50
    refine_percent: float = 10.0
    global_pool: bool = False  # experiment option: rank all seeds in one pool

    def __post_init__(self) -> None:
        if self.depth_limit < 1:
            raise ValueError("depth_limit must be >= 1")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if not 0 < self.refine_percent <= 100:
            raise ValueError("refine_percent must be in (0, 100]")

    @property
    def refine_count(self) -> int:
        return max(1, ceil(self.refine_percent / 100.0 * self.top_n))


@dataclass(frozen=True, slots=True)
class ScoredTriple:
    triple: Triple
    score: float
    depth: int
    seed: EntityId


@dataclass
class TurnRecord:
    seed: EntityId | None  # None when ranking a global pool
    depth: int
    candidate_count: int
    appended: list[ScoredTriple]
    frontier: list[EntityId]


@dataclass
class ObservationSubgraph:
    """Ordered, scored, deduplicated triple set built by one observe call."""

    entries: list[ScoredTriple] = field(default_factory=list)
    turns: list[TurnRecord] = field(default_factory=list)
    _index: set[Triple] = field(default_factory=set, repr=False)

    def add(self, entry: ScoredTriple) -> bool:
        if entry.triple in self._index:
            return False
        self._index.add(entry.triple)
        self.entries.append(entry)
        return True

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._index

    def __len__(self) -> int:
        return len(self.entries)

    def is_empty(self) -> bool:
        return not self.entries

    def triples(self) -> list[Triple]:
        return [entry.triple for entry in self.entries]


def rank_scored_triples(pairs: Iterable[tuple[float, Triple]]) -> list[tuple[float, Triple]]:
    """Descending score; ties break on lexicographic (head, relation, tail)."""
    return sorted(pairs, key=lambda pair: (-pair[0], pair[1].as_tuple()))


def _score_all(
    candidates: list[Triple],
    question_vector,
    kg: KnowledgeGraph,
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None,
) -> list[tuple[float, Triple]]:
    return rank_scored_triples(
        (
            score_candidate(
                question_vector,
                kg.label_of(triple.relation),
                kg.label_of(triple.tail),
                provider,
                cache,
            ),
            triple,
        )
        for triple in candidates
    )


def observe(
    kg: KnowledgeGraph,
    question: str,
    entities: Iterable[EntityId],
    params: ObservationParams,
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
) -> ObservationSubgraph:
    """Run the depth-bounded update/refine walk from every seed entity.

    The question is embedded once and reused for all candidate scores.
    Seeds missing from the graph contribute nothing.
    """
    seeds = list(dict.fromkeys(entities))
    if not seeds:
        raise ValueError("observe requires at least one seed entity")
    question_vector = embed_text(question, provider, cache)
    subgraph = ObservationSubgraph()

    if params.global_pool:
        _observe_pool(kg, question_vector, seeds, params, provider, cache, subgraph)
        return subgraph

    for seed in seeds:
        frontier = [seed]
        visited = {seed}
        for depth in range(params.depth_limit):
            candidates = [t for entity in frontier for t in kg.get_neighbors(entity)]
            if not candidates:
                break
            selected = _score_all(candidates, question_vector, kg, provider, cache)
            selected = selected[: params.top_n]
            appended = []
            for score, triple in selected:
                entry = ScoredTriple(triple, score, depth, seed)
                if subgraph.add(entry):
                    appended.append(entry)
            tails = [triple.tail for _, triple in selected[: params.refine_count]]
            frontier = [t for t in dict.fromkeys(tails) if t not in visited]
            visited.update(frontier)
            subgraph.turns.append(
                TurnRecord(seed, depth, len(candidates), appended, list(frontier))
            )
            if not frontier:
                break
    return subgraph


def _observe_pool(
    kg: KnowledgeGraph,
    question_vector,
    seeds: list[EntityId],
    params: ObservationParams,
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None,
    subgraph: ObservationSubgraph,
) -> None:
    # Single shared frontier; entries attribute each triple to the seed whose
    # walk first reached its head.
    origin = {seed: seed for seed in seeds}
    frontier = list(seeds)
    visited = set(seeds)
    for depth in range(params.depth_limit):
        candidates = [t for entity in frontier for t in kg.get_neighbors(entity)]
        if not candidates:
            break
        selected = _score_all(candidates, question_vector, kg, provider, cache)
        selected = selected[: params.top_n]
        appended = []
        for score, triple in selected:
            entry = ScoredTriple(triple, score, depth, origin[triple.head])
            if subgraph.add(entry):
                appended.append(entry)
        tails = []
        for _, triple in selected[: params.refine_count]:
            origin.setdefault(triple.tail, origin[triple.head])
            tails.append(triple.tail)
        frontier = [t for t in dict.fromkeys(tails) if t not in visited]
        visited.update(frontier)
        subgraph.turns.append(TurnRecord(None, depth, len(candidates), appended, list(frontier)))
        if not frontier:
            break


def render_observation(observation: ObservationSubgraph, kg: KnowledgeGraph) -> str:
    """Labeled "(head, relation, tail)" tuples in entry order."""
    return ", ".join(
        f"({kg.label_of(e.triple.head)}, {kg.label_of(e.triple.relation)}, "
        f"{kg.label_of(e.triple.tail)})"
        for e in observation.entries
    )


def dump_turns(observation: ObservationSubgraph) -> str:
    """Line-delimited JSON turn records for golden tests."""
    lines = []
    for turn in observation.turns:
        lines.append(
            json.dumps(
                {
                    "seed": turn.seed,
                    "depth": turn.depth,
                    "candidates": turn.candidate_count,
                    "appended": [
                        [*entry.triple.as_tuple(), entry.score] for entry in turn.appended
                    ],
                    "frontier": turn.frontier,
                },
                sort_keys=True,
                ensure_ascii=True,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")
