"""The iterative observe -> act -> reflect loop for one question.

Each run owns its memory, action history, and trace; the graph, embedding
cache, and providers may be shared across concurrent runs.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field, asdict
from random import Random
from typing import Iterable

from .action import (
    ActionAttempt,
    ActionHistory,
    Answer,
    build_answer_prompt,
    choose_action,
    execute_action,
    parse_answer,
    render_action,
)
from .embedding import EmbeddingCache, EmbeddingProvider, EmbeddingProviderError
from .kg import EntityId, KnowledgeGraph, Triple
from .llm import CompletionRequest, LLMError, LLMProvider
from .memory import Memory, integrate
from .observation import ObservationParams, ObservationSubgraph, ScoredTriple, observe
from .reflection import (
    ReflectionParams,
    ReflectionResult,
    reflect_generated_fact,
    reflect_random,
    reflect_similarity,
    reflect_with_model,
)


class AgentError(RuntimeError):
    """Provider failure or timeout; carries the partial trace."""

    def __init__(self, message: str, trace: "AgentTrace") -> None:
        super().__init__(message)
        self.trace = trace


@dataclass
class AgentConfig:
    max_iterations: int = 8
    observation: ObservationParams = field(default_factory=ObservationParams)
    reflection: ReflectionParams = field(default_factory=ReflectionParams)
    path_max_len: int = 3
    temperature: float = 0.4
    max_tokens: int = 500
    neighbor_limit: int | None = 5000
    action_retries: int = 2
    question_timeout: float | None = 300.0
    random_seed: int = 0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.path_max_len < 1:
            raise ValueError("path_max_len must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AgentConfig":
        data = dict(data)
        if "observation" in data:
            data["observation"] = ObservationParams(**data["observation"])
        if "reflection" in data:
            data["reflection"] = ReflectionParams(**data["reflection"])
        return cls(**data)


@dataclass
class Providers:
    llm: LLMProvider
    embedder: EmbeddingProvider
    cache: EmbeddingCache | None = None


@dataclass
class IterationRecord:
    index: int
    entities: list[EntityId]
    observation: list[ScoredTriple]
    action_prompt: str
    action_response: str
    retries: list[ActionAttempt]
    action: str
    fallback: bool
    outcome_count: int
    reflection_prompt: str | None
    reflection_response: str | None
    reflected: list[Triple]
    facts: list[str]
    memory_snapshot: list[list[Triple]]


@dataclass
class AgentTrace:
    question: str
    seed_entities: list[EntityId]
    iterations: list[IterationRecord] = field(default_factory=list)
    answer_prompt: str | None = None
    answer_response: str | None = None
    answers: list[str] = field(default_factory=list)
    halted_by: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "seed_entities": list(self.seed_entities),
            "iterations": [
                {
                    "index": record.index,
                    "entities": list(record.entities),
                    "observation": [
                        [*entry.triple.as_tuple(), entry.score, entry.depth, entry.seed]
                        for entry in record.observation
                    ],
                    "action_prompt": record.action_prompt,
                    "action_response": record.action_response,
                    "retries": [
                        {"prompt": attempt.prompt, "response": attempt.response}
                        for attempt in record.retries
                    ],
                    "action": record.action,
                    "fallback": record.fallback,
                    "outcome_count": record.outcome_count,
                    "reflection_prompt": record.reflection_prompt,
                    "reflection_response": record.reflection_response,
                    "reflected": [list(t.as_tuple()) for t in record.reflected],
                    "facts": list(record.facts),
                    "memory": [
                        [list(t.as_tuple()) for t in path] for path in record.memory_snapshot
                    ],
                }
                for record in self.iterations
            ],
            "answer_prompt": self.answer_prompt,
            "answer_response": self.answer_response,
            "answers": list(self.answers),
            "halted_by": self.halted_by,
            "error": self.error,
        }


def trace_to_json(trace: AgentTrace) -> str:
    """Canonical JSON serialization; byte-stable across runs and platforms."""
    return json.dumps(trace.to_dict(), sort_keys=True, ensure_ascii=True, indent=2) + "\n"


@dataclass
class AgentResult:
    answers: list[str]
    halted_by: str  # "answer_action" | "iteration_cap"
    trace: AgentTrace


def _render_facts(facts: list[str]) -> str:
    return "\n".join(facts)


def run(
    question: str,
    seed_entities: Iterable[EntityId],
    kg: KnowledgeGraph,
    providers: Providers,
    config: AgentConfig | None = None,
) -> AgentResult:
    """Answer one question by looping observe -> act -> reflect.

    Halts when the model chooses the Answer action, or forces an answer from
    accumulated memory once max_iterations is exhausted. Provider failures
    raise AgentError carrying the partial trace.
    """
    config = config or AgentConfig()
    entities = list(dict.fromkeys(seed_entities))
    if not entities:
        raise ValueError("run requires at least one seed entity")
    strategy = config.reflection.strategy
    memory = Memory()
    facts: list[str] = []
    history = ActionHistory()
    rng = Random(config.random_seed)
    trace = AgentTrace(question=question, seed_entities=list(entities))
    deadline = (
        time.monotonic() + config.question_timeout if config.question_timeout else None
    )

    try:
        for index in range(1, config.max_iterations + 1):
            if deadline is not None and time.monotonic() > deadline:
                raise AgentError(
                    f"question timed out after {config.question_timeout:.0f}s", trace
                )
            if strategy == "no_observation":
                observation = ObservationSubgraph()
            else:
                observation = observe(
                    kg, question, entities, config.observation,
                    providers.embedder, providers.cache,
                )
            action, attempts, fallback = choose_action(
                providers.llm,
                question,
                memory,
                entities,
                observation,
                kg,
                history,
                memory_extra=_render_facts(facts),
                temperature=config.temperature,
                max_tokens=config.max_tokens,
                max_retries=config.action_retries,
            )
            record = IterationRecord(
                index=index,
                entities=list(entities),
                observation=list(observation.entries),
                action_prompt=attempts[-1].prompt,
                action_response=attempts[-1].response,
                retries=attempts[:-1],
                action=render_action(action),
                fallback=fallback,
                outcome_count=0,
                reflection_prompt=None,
                reflection_response=None,
                reflected=[],
                facts=[],
                memory_snapshot=[],
            )
            if isinstance(action, Answer):
                record.memory_snapshot = [list(p.links) for p in memory.paths]
                trace.iterations.append(record)
                answers = _final_answer(question, memory, facts, kg, providers, config, trace)
                trace.halted_by = "answer_action"
                return AgentResult(answers, "answer_action", trace)

            outcome = execute_action(
                kg, action, path_max_len=config.path_max_len,
                neighbor_limit=config.neighbor_limit,
            )
            history.append(action)
            record.outcome_count = len(outcome)

            result = ReflectionResult()
            if strategy == "generated_fact":
                new_facts = reflect_generated_fact(
                    question, config.reflection, providers.llm,
                    temperature=config.temperature, max_tokens=config.max_tokens,
                )
                facts.extend(new_facts)
                record.facts = list(new_facts)
            elif outcome:
                if strategy in ("oda", "no_observation"):
                    result, prompt, response = reflect_with_model(
                        providers.llm, question, outcome, kg, observation, memory,
                        config.reflection,
                        temperature=config.temperature, max_tokens=config.max_tokens,
                    )
                    record.reflection_prompt = prompt
                    record.reflection_response = response
                elif strategy == "similarity":
                    result = reflect_similarity(
                        question, outcome, kg, config.reflection,
                        providers.embedder, providers.cache,
                    )
                elif strategy == "random":
                    result = reflect_random(outcome, config.reflection, rng)

            if not result.is_empty():
                integrate(memory, result.kept)
                entities = list(result.next_entities)
            record.reflected = list(result.kept)
            record.memory_snapshot = [list(p.links) for p in memory.paths]
            trace.iterations.append(record)

        answers = _final_answer(question, memory, facts, kg, providers, config, trace)
        trace.halted_by = "iteration_cap"
        return AgentResult(answers, "iteration_cap", trace)
    except (LLMError, EmbeddingProviderError) as exc:
        trace.error = str(exc)
        raise AgentError(str(exc), trace) from exc


def _final_answer(
    question: str,
    memory: Memory,
    facts: list[str],
    kg: KnowledgeGraph,
    providers: Providers,
    config: AgentConfig,
    trace: AgentTrace,
) -> list[str]:
    prompt = build_answer_prompt(question, memory, kg, memory_extra=_render_facts(facts))
    response = providers.llm.complete(
        CompletionRequest.user(prompt, config.temperature, config.max_tokens)
    )
    answers = parse_answer(response)
    trace.answer_prompt = prompt
    trace.answer_response = response
    trace.answers = list(answers)
    return answers


def _substitute_labels(text: str, kg: KnowledgeGraph) -> str:
    if not kg.labels:
        return text
    pattern = re.compile(
        r"\b(" + "|".join(re.escape(i) for i in sorted(kg.labels, key=len, reverse=True)) + r")\b"
    )
    return pattern.sub(lambda match: kg.labels[match.group(1)], text)


def render_case(trace: AgentTrace, kg: KnowledgeGraph) -> str:
    """Readable transcript with entity ids replaced by their labels."""
    if not trace.iterations and not trace.answers:
        return ""
    lines = [f"Question: {trace.question}"]
    for record in trace.iterations:
        lines.append(f"--- Iteration {record.index} ---")
        lines.append(_substitute_labels(record.action_response, kg))
        lines.append(f"Executed: {_substitute_labels(record.action, kg)}")
        if record.reflection_response is not None:
            lines.append(_substitute_labels(record.reflection_response, kg))
        if record.reflected:
            lines.append(
                "Reflected: "
                + ", ".join(
                    f"({kg.label_of(t.head)}, {kg.label_of(t.relation)}, {kg.label_of(t.tail)})"
                    for t in record.reflected
                )
            )
        if record.facts:
            lines.extend(record.facts)
    if trace.answers:
        lines.append("Answer: " + ", ".join(trace.answers))
    if trace.error:
        lines.append(f"Error: {trace.error}")
    return "\n".join(lines) + "\n"
