"""Reflection: selecting up to k_max triples from an action's output and
deriving the next task-relevant entities, plus the ablation strategies
(similarity ranking, seeded random pick, free-text generated facts)."""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field
from typing import Sequence

from .embedding import EmbeddingCache, EmbeddingProvider, embed_text, score_candidate
from .kg import EntityId, KnowledgeGraph, Triple
from .action import fill_template, load_template
from .llm import CompletionRequest, LLMProvider
from .memory import Memory, render_memory
from .observation import ObservationSubgraph, rank_scored_triples, render_observation

logger = logging.getLogger(__name__)

STRATEGIES = ("oda", "similarity", "random", "generated_fact", "no_observation")

GENERATED_FACTS_PROMPT = (
    "You are an agent that answers questions using your own knowledge.\n"
    "Write up to [KMax] short factual statements related to the question: [Question].\n"
    "One fact per line, with no numbering and no extra commentary."
)


@dataclass
class ReflectionParams:
    k_max: int = 15
    strategy: str = "oda"

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")


@dataclass
class ReflectionResult:
    kept: list[Triple] = field(default_factory=list)
    next_entities: list[EntityId] = field(default_factory=list)

    @classmethod
    def from_kept(cls, kept: Sequence[Triple]) -> "ReflectionResult":
        """Next entities are the kept tails, deduplicated in first-seen order."""
        return cls(list(kept), list(dict.fromkeys(t.tail for t in kept)))

    def is_empty(self) -> bool:
        return not self.kept


def _render_candidates(candidates: Sequence[Triple], kg: KnowledgeGraph) -> str:
    return ", ".join(
        f"({kg.label_of(t.head)}, {kg.label_of(t.relation)}, {kg.label_of(t.tail)})"
        for t in candidates
    )


def _candidate_labels(candidates: Sequence[Triple], kg: KnowledgeGraph) -> str:
    identifiers: dict[str, None] = {}
    for triple in candidates:
        for identifier in triple.as_tuple():
            identifiers.setdefault(identifier)
    return ", ".join(f"{i}: {kg.label_of(i)}" for i in identifiers)


def build_reflection_prompt(
    question: str,
    candidates: Sequence[Triple],
    kg: KnowledgeGraph,
    observation: ObservationSubgraph,
    memory: Memory,
    k_max: int = 15,
) -> str:
    """Fill the reflection template; see templates/reflection.txt.

    Candidates render as labeled tuples with an id-to-label legend so the
    model can echo raw id triads. The observation line is omitted entirely
    when the subgraph is empty.
    """
    if not candidates:
        raise ValueError("build_reflection_prompt requires candidate triples")
    template = load_template("reflection.txt")
    if observation.is_empty():
        template = "\n".join(
            line for line in template.splitlines() if "[Observation]" not in line
        ) + "\n"
    return fill_template(
        template,
        {
            "Triples": _render_candidates(candidates, kg),
            "EntityLabels": _candidate_labels(candidates, kg),
            "Question": question,
            "Observation": render_observation(observation, kg),
            "Memory": render_memory(memory, kg),
            "KMax": str(k_max),
        },
    )


_TRIAD_PAREN_RE = re.compile(r"\(([^()]*)\)")


def _iter_triads(text: str):
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        line = re.sub(r"^\s*Triples?\s*:\s*", "", line, flags=re.IGNORECASE)
        groups = _TRIAD_PAREN_RE.findall(line)
        pieces = groups if groups else [line]
        for piece in pieces:
            parts = [part.strip().strip("\"'").strip() for part in piece.split(",")]
            if len(parts) == 3 and all(parts):
                yield tuple(parts)


def parse_reflected(
    response: str, candidates: Sequence[Triple], params: ReflectionParams
) -> ReflectionResult:
    """Keep candidate id-triads from the response, capped at k_max.

    Triads absent from the candidates (hallucinations) are dropped and
    logged; repeats keep their first position. An empty result signals the
    agent to keep its previous task-relevant entities.
    """
    candidate_set = set(candidates)
    kept: list[Triple] = []
    seen: set[Triple] = set()
    for head, relation, tail in _iter_triads(response):
        triple = Triple(head, relation, tail)
        if triple not in candidate_set:
            logger.info("dropping reflected triple not in candidates: %s", triple.to_tsv())
            continue
        if triple in seen:
            continue
        seen.add(triple)
        kept.append(triple)
    return ReflectionResult.from_kept(kept[: params.k_max])


def reflect_with_model(
    provider: LLMProvider,
    question: str,
    candidates: Sequence[Triple],
    kg: KnowledgeGraph,
    observation: ObservationSubgraph,
    memory: Memory,
    params: ReflectionParams,
    temperature: float = 0.4,
    max_tokens: int = 500,
) -> tuple[ReflectionResult, str, str]:
    """Full prompt/complete/parse round trip; returns (result, prompt, response)."""
    prompt = build_reflection_prompt(
        question, candidates, kg, observation, memory, k_max=params.k_max
    )
    response = provider.complete(CompletionRequest.user(prompt, temperature, max_tokens))
    return parse_reflected(response, candidates, params), prompt, response


def reflect_similarity(
    question: str,
    candidates: Sequence[Triple],
    kg: KnowledgeGraph,
    params: ReflectionParams,
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
) -> ReflectionResult:
    """Rank candidates by relation+tail similarity to the question; keep top k."""
    if not candidates:
        return ReflectionResult()
    question_vector = embed_text(question, provider, cache)
    ranked = rank_scored_triples(
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
    return ReflectionResult.from_kept([triple for _, triple in ranked[: params.k_max]])


def reflect_random(
    candidates: Sequence[Triple],
    params: ReflectionParams,
    rng_seed: int | random.Random = 0,
) -> ReflectionResult:
    """Uniform sample without replacement of min(k_max, n) candidates."""
    rng = rng_seed if isinstance(rng_seed, random.Random) else random.Random(rng_seed)
    kept = rng.sample(list(candidates), min(params.k_max, len(candidates)))
    return ReflectionResult.from_kept(kept)


def reflect_generated_fact(
    question: str,
    params: ReflectionParams,
    provider: LLMProvider,
    temperature: float = 0.4,
    max_tokens: int = 500,
) -> list[str]:
    """Ask the model for up to k_max free-text facts about the question.

    Facts live in a separate text lane, never in the path memory.
    """
    prompt = GENERATED_FACTS_PROMPT.replace("[KMax]", str(params.k_max)).replace(
        "[Question]", question
    )
    response = provider.complete(CompletionRequest.user(prompt, temperature, max_tokens))
    facts = []
    for line in response.splitlines():
        line = re.sub(r"^\s*(?:[-*]|\d+[.)])\s*", "", line).strip()
        if line:
            facts.append(line)
    return facts[: params.k_max]
