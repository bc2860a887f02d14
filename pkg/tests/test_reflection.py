from __future__ import annotations

import random

import pytest

from kgagent.embedding import cosine
from kgagent.kg import Triple
from kgagent.llm import ScriptedProvider, ScriptEntry
from kgagent.memory import Memory
from kgagent.observation import ObservationParams, ObservationSubgraph, observe
from kgagent.reflection import (
    ReflectionParams,
    build_reflection_prompt,
    parse_reflected,
    reflect_generated_fact,
    reflect_random,
    reflect_similarity,
)

from conftest import TOKYO_QUESTION, make_kg, random_kg

TOKYO_CANDIDATES = [
    Triple("Q1490", "P31", "Q50337"),
    Triple("Q1490", "P36", "Q192724"),
    Triple("Q1490", "P36", "Q17"),
]


class TestBuildReflectionPrompt:
    def test_tokyo_candidates_rendered_with_labels(self, tokyo_kg, embedder):
        observation = observe(
            tokyo_kg, TOKYO_QUESTION, ["Q1490"], ObservationParams(), embedder
        )
        prompt = build_reflection_prompt(
            TOKYO_QUESTION, TOKYO_CANDIDATES, tokyo_kg, observation, Memory()
        )
        assert "(Tokyo, capital, Shinjuku)" in prompt
        assert "Q192724: Shinjuku" in prompt
        assert "entityID,relationID,entityID" in prompt
        assert "You can select less than 15 triples" in prompt

    def test_empty_observation_omits_slot_entirely(self, tokyo_kg):
        prompt = build_reflection_prompt(
            TOKYO_QUESTION, TOKYO_CANDIDATES, tokyo_kg, ObservationSubgraph(), Memory()
        )
        assert "observation" not in prompt.casefold()

    def test_requires_candidates(self, tokyo_kg):
        with pytest.raises(ValueError):
            build_reflection_prompt(
                TOKYO_QUESTION, [], tokyo_kg, ObservationSubgraph(), Memory()
            )

    def test_golden_render(self, tokyo_kg, embedder, datadir):
        observation = observe(
            tokyo_kg, TOKYO_QUESTION, ["Q1490"], ObservationParams(), embedder
        )
        prompt = build_reflection_prompt(
            TOKYO_QUESTION, TOKYO_CANDIDATES, tokyo_kg, observation, Memory()
        )
        golden = (datadir / "golden" / "reflection_prompt_tokyo.txt").read_text(
            encoding="utf-8"
        )
        assert prompt == golden


class TestParseReflected:
    def test_candidate_triads_kept_in_order(self):
        params = ReflectionParams()
        response = "Q1490,P31,Q50337\nQ1490,P36,Q192724"
        result = parse_reflected(response, TOKYO_CANDIDATES, params)
        assert result.kept == [TOKYO_CANDIDATES[0], TOKYO_CANDIDATES[1]]
        assert result.next_entities == ["Q50337", "Q192724"]

    def test_hallucinated_triple_dropped(self):
        response = "Q1490,P31,Q50337\nQ9999,P1,Q8888"
        result = parse_reflected(response, TOKYO_CANDIDATES, ReflectionParams())
        assert result.kept == [TOKYO_CANDIDATES[0]]

    def test_truncation_to_k_max(self):
        candidates = [Triple(f"Q{i}", "P1", f"Q{i + 100}") for i in range(20)]
        response = "\n".join(f"Q{i},P1,Q{i + 100}" for i in range(20))
        result = parse_reflected(response, candidates, ReflectionParams(k_max=15))
        assert len(result.kept) == 15
        assert result.kept == candidates[:15]

    def test_parenthesized_tuples(self):
        response = "Triples: (Q1490, P31, Q50337), (Q1490, P36, Q192724)"
        result = parse_reflected(response, TOKYO_CANDIDATES, ReflectionParams())
        assert len(result.kept) == 2

    def test_zero_valid_triples_is_empty_signal(self):
        result = parse_reflected("nothing useful", TOKYO_CANDIDATES, ReflectionParams())
        assert result.is_empty()
        assert result.next_entities == []

    def test_repeats_keep_first_position(self):
        response = "Q1490,P36,Q17\nQ1490,P31,Q50337\nQ1490,P36,Q17"
        result = parse_reflected(response, TOKYO_CANDIDATES, ReflectionParams())
        assert result.kept == [TOKYO_CANDIDATES[2], TOKYO_CANDIDATES[0]]

    def test_next_entities_deduplicated(self):
        candidates = [Triple("A", "r", "X"), Triple("B", "s", "X"), Triple("C", "t", "Y")]
        response = "A,r,X\nB,s,X\nC,t,Y"
        result = parse_reflected(response, candidates, ReflectionParams())
        assert result.next_entities == ["X", "Y"]


class TestReflectSimilarity:
    def test_under_cap_keeps_all_sorted(self, tokyo_kg, embedder):
        result = reflect_similarity(
            TOKYO_QUESTION, TOKYO_CANDIDATES, tokyo_kg, ReflectionParams(), embedder
        )
        assert set(result.kept) == set(TOKYO_CANDIDATES)
        question_vector = embedder.embed(TOKYO_QUESTION)

        def score(t: Triple) -> float:
            return cosine(
                question_vector,
                embedder.embed(f"{tokyo_kg.label_of(t.relation)} {tokyo_kg.label_of(t.tail)}"),
            )

        scores = [score(t) for t in result.kept]
        assert scores == sorted(scores, reverse=True)

    def test_matches_brute_force_oracle(self, embedder):
        rng = random.Random(101)
        kg = random_kg(rng, n_entities=12, n_triples=80)
        candidates = sorted(kg.triples)[:40]
        rng.shuffle(candidates)
        params = ReflectionParams(k_max=15)
        result = reflect_similarity("some question", candidates, kg, params, embedder)
        question_vector = embedder.embed("some question")
        expected = sorted(
            candidates,
            key=lambda t: (
                -cosine(question_vector, embedder.embed(f"{t.relation} {t.tail}")),
                t.as_tuple(),
            ),
        )[:15]
        assert result.kept == expected

    def test_equal_scores_break_lexicographically(self, embedder):
        # identical relation+tail text means identical score
        candidates = [Triple("B", "P1", "X"), Triple("A", "P1", "X")]
        result = reflect_similarity("q", candidates, make_kg([]), ReflectionParams(), embedder)
        assert result.kept == [Triple("A", "P1", "X"), Triple("B", "P1", "X")]

    def test_empty_candidates(self, embedder):
        result = reflect_similarity("q", [], make_kg([]), ReflectionParams(), embedder)
        assert result.is_empty()


class TestReflectRandom:
    def test_under_cap_keeps_all(self):
        candidates = [Triple(f"Q{i}", "P", "T") for i in range(5)]
        result = reflect_random(candidates, ReflectionParams(k_max=15), rng_seed=3)
        assert set(result.kept) == set(candidates)

    def test_fixed_seed_reproducible(self):
        candidates = [Triple(f"Q{i}", "P", f"T{i}") for i in range(30)]
        first = reflect_random(candidates, ReflectionParams(k_max=10), rng_seed=12)
        second = reflect_random(candidates, ReflectionParams(k_max=10), rng_seed=12)
        assert first.kept == second.kept

    def test_sample_without_replacement(self):
        candidates = [Triple(f"Q{i}", "P", f"T{i}") for i in range(30)]
        result = reflect_random(candidates, ReflectionParams(k_max=10), rng_seed=5)
        assert len(result.kept) == 10
        assert len(set(result.kept)) == 10


class TestReflectGeneratedFact:
    def test_fact_stored_verbatim(self):
        provider = ScriptedProvider(
            [ScriptEntry("substring", "factual statements", "Tokyo is the capital of Japan")]
        )
        facts = reflect_generated_fact(TOKYO_QUESTION, ReflectionParams(), provider)
        assert facts == ["Tokyo is the capital of Japan"]

    def test_empty_response_empty_facts(self):
        provider = ScriptedProvider([ScriptEntry("substring", "", "")], sequential=False)
        assert reflect_generated_fact("q", ReflectionParams(), provider) == []

    def test_k_max_enforced(self):
        response = "\n".join(f"fact {i}" for i in range(20))
        provider = ScriptedProvider([ScriptEntry("substring", "", response)], sequential=False)
        facts = reflect_generated_fact("q", ReflectionParams(k_max=15), provider)
        assert len(facts) == 15

    def test_bullets_and_numbering_stripped(self):
        provider = ScriptedProvider(
            [ScriptEntry("substring", "", "- first\n2. second\n* third")], sequential=False
        )
        facts = reflect_generated_fact("q", ReflectionParams(), provider)
        assert facts == ["first", "second", "third"]


def test_params_validation():
    with pytest.raises(ValueError):
        ReflectionParams(k_max=0)
    with pytest.raises(ValueError):
        ReflectionParams(strategy="alchemy")
