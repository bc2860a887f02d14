from __future__ import annotations

import random
from pathlib import Path

import pytest

from kgagent.embedding import DeterministicEmbedder
from kgagent.kg import KnowledgeGraph, Triple


def make_kg(triples: list[tuple[str, str, str]], labels: dict[str, str] | None = None) -> KnowledgeGraph:
    kg = KnowledgeGraph()
    for head, relation, tail in triples:
        kg.add(Triple(head, relation, tail))
    if labels:
        kg.labels.update(labels)
    return kg


def random_kg(rng: random.Random, n_entities: int, n_triples: int, n_relations: int = 6) -> KnowledgeGraph:
    """Random directed multigraph over Q-style ids; duplicates collapse."""
    kg = KnowledgeGraph()
    for _ in range(n_triples):
        head = f"Q{rng.randrange(n_entities)}"
        tail = f"Q{rng.randrange(n_entities)}"
        relation = f"P{rng.randrange(n_relations)}"
        kg.add(Triple(head, relation, tail))
    return kg


TOKYO_TRIPLES = [
    ("Q1490", "P31", "Q50337"),
    ("Q1490", "P36", "Q192724"),
    ("Q1490", "P36", "Q17"),
    ("Q1490", "P17", "Q17"),
    ("Q192724", "P31", "Q494721"),
    ("Q17", "P36", "Q1490"),
]

TOKYO_LABELS = {
    "Q1490": "Tokyo",
    "P31": "instance of",
    "Q50337": "prefecture of Japan",
    "P36": "capital",
    "Q192724": "Shinjuku",
    "Q17": "Japan",
    "P17": "country",
    "Q494721": "special ward of Tokyo",
}

TOKYO_QUESTION = "What is the capital of the prefecture Tokyo ?"

GOETHE_TRIPLES = [
    ("Q5879", "P451", "Q61597"),
    ("Q5879", "P19", "Q1794"),
    ("Q5879", "P106", "Q36180"),
    ("Q61597", "P19", "Q3042"),
    ("Q61597", "P451", "Q5879"),
    ("Q3042", "P17", "Q183"),
]

GOETHE_LABELS = {
    "Q5879": "Johann Wolfgang von Goethe",
    "P451": "unmarried Partner",
    "Q61597": "Lili Schöneman",
    "P19": "place of birth",
    "Q1794": "Frankfurt",
    "P106": "occupation",
    "Q36180": "writer",
    "Q3042": "Offenbach am Main",
    "P17": "country",
    "Q183": "Germany",
}

GOETHE_QUESTION = "Where was the unmarried partner of Johann Wolfgang von Goethe born?"

LONDON_TRIPLES = [
    ("Q1164538", "P840", "Q2009"),
    ("Q1164538", "P840", "Q16"),
    ("Q1164538", "P840", "Q30"),
    ("Q1164538", "P840", "Q797"),
    ("Q1164538", "P50", "Q45765"),
    ("Q1164538", "P156", "Q208143"),
    ("Q208143", "P840", "Q2009"),
    ("Q208143", "P840", "Q16"),
    ("Q208143", "P50", "Q45765"),
    ("Q45765", "P19", "Q62"),
]

LONDON_LABELS = {
    "Q1164538": "The Call of the Wild",
    "Q208143": "White Fang",
    "P840": "Narrative location",
    "Q2009": "Yukon",
    "Q16": "Canada",
    "Q30": "United States of America",
    "Q797": "Alaska",
    "P50": "author",
    "Q45765": "Jack London",
    "P156": "followed by",
    "P19": "place of birth",
    "Q62": "San Francisco",
}

LONDON_QUESTION = (
    "Where are both The Call of the Wild and White Fang set, "
    "the most two famous works of Jack London?"
)


@pytest.fixture
def tokyo_kg() -> KnowledgeGraph:
    return make_kg(TOKYO_TRIPLES, TOKYO_LABELS)


@pytest.fixture
def goethe_kg() -> KnowledgeGraph:
    return make_kg(GOETHE_TRIPLES, GOETHE_LABELS)


@pytest.fixture
def london_kg() -> KnowledgeGraph:
    return make_kg(LONDON_TRIPLES, LONDON_LABELS)


@pytest.fixture
def embedder() -> DeterministicEmbedder:
    return DeterministicEmbedder(seed=7, dimension=32)


@pytest.fixture
def datadir() -> Path:
    return Path(__file__).parent / "data"


# Scripted transcripts for the fixture questions, mirroring the worked case
# studies the agent must replay. Each entry matches the next expected request.

TOKYO_SCRIPT = [
    (
        "substring",
        "Candidate EntityIDs: Q1490",
        "Thought: The question is asking for the capital of the prefecture Tokyo. "
        "The candidate entity ID 'Q1490' corresponds to Tokyo. I can see from the "
        "observation that there is a triple (Tokyo, capital, Shinjuku) which might "
        "answer the question. However, to confirm this, I will execute a GetNeighbor "
        "action on 'Q1490' to get all the triples where Tokyo is the head.\n"
        "Action: GetNeighbor\n"
        "Entity_id: Tokyo",
    ),
    (
        "substring",
        "select related triples",
        "Thought: The question is asking for the capital of Tokyo. From the "
        "observation, we can see that Tokyo is the capital of Japan and it is a "
        "prefecture of Japan. The capital of Tokyo is Shinjuku. Therefore, we should "
        "select the triples that contain this information.\n"
        "Triples: Q1490,P31,Q50337\nQ1490,P36,Q192724\nQ1490,P36,Q17",
    ),
    (
        "substring",
        "Candidate EntityIDs: Q50337, Q192724, Q17",
        "Thought: The question is asking for the capital of the prefecture Tokyo. "
        "From the reference memory, it is stated that the capital of Tokyo is "
        "Shinjuku. Therefore, the answer to the question is Shinjuku.\n"
        "Action: Answer",
    ),
    ("substring", "reference memory", "Shinjuku"),
]

GOETHE_SCRIPT = [
    (
        "substring",
        "Candidate EntityIDs: Q5879",
        "Thought: I should look at the neighbors of Johann Wolfgang von Goethe to "
        "find the unmarried partner.\n"
        "Action: GetNeighbor\n"
        "Entity_id: Q5879",
    ),
    (
        "substring",
        "select related triples",
        "Thought: The unmarried partner triple is the relevant one.\n"
        "Triples: Q5879,P451,Q61597",
    ),
    (
        "substring",
        "Candidate EntityIDs: Q61597",
        "Thought: Now I need the place of birth of Lili Schöneman.\n"
        "Action: GetNeighbor\n"
        "Entity_id: Q61597",
    ),
    (
        "substring",
        "select related triples",
        "Thought: The place of birth triple answers the question.\n"
        "Triples: Q61597,P19,Q3042",
    ),
    (
        "substring",
        "Candidate EntityIDs: Q3042",
        "Thought: The memory states that Lili Schöneman was born in Offenbach am "
        "Main, which answers the question.\n"
        "Action: Answer",
    ),
    ("substring", "reference memory", "Offenbach am Main"),
]

LONDON_SCRIPT = [
    (
        "substring",
        "Candidate EntityIDs: Q1164538, Q208143",
        "Thought: The question asks about the setting of two works, The Call of the "
        "Wild and White Fang, both by Jack London. The observation provides some "
        "information about the narrative locations of these works, but to confirm "
        "and provide a specific answer, I will use the GetNeighbor function on The "
        "Call of the Wild.\n"
        "Action: GetNeighbor\n"
        "Entity_id: The Call of the Wild",
    ),
    (
        "substring",
        "select related triples",
        "Thought: I will focus on the triples related to the locations of the two "
        "works and the link to White Fang.\n"
        "Triples: Q1164538,P840,Q2009\nQ1164538,P840,Q16\nQ1164538,P156,Q208143",
    ),
    (
        "substring",
        "Candidate EntityIDs: Q2009, Q16, Q208143",
        "Thought: We don't have the narrative location for White Fang. Therefore, I "
        "will use the GetNeighbor function on the entityID of White Fang to find its "
        "narrative location.\n"
        "Action: GetNeighbor\n"
        "Entity_id: White Fang",
    ),
    (
        "substring",
        "select related triples",
        "Thought: There are two triples that indicate a narrative location for White "
        "Fang.\n"
        "Triples: Q208143,P840,Q2009\nQ208143,P840,Q16",
    ),
    (
        "substring",
        "Candidate EntityIDs: Q2009, Q16",
        "Thought: The common locations for both books are Canada and Yukon.\n"
        "Action: Answer",
    ),
    ("substring", "reference memory", "[Canada, Yukon]"),
]


def make_script_provider(script: list[tuple[str, str, str]], sequential: bool = True):
    from kgagent.llm import ScriptedProvider, ScriptEntry

    return ScriptedProvider(
        [ScriptEntry(kind, match, response) for kind, match, response in script],
        sequential=sequential,
    )


def make_providers(script: list[tuple[str, str, str]], sequential: bool = True, seed: int = 7):
    from kgagent.agent import Providers

    return Providers(
        llm=make_script_provider(script, sequential=sequential),
        embedder=DeterministicEmbedder(seed=seed, dimension=32),
    )


# (candidates, action responses) re-typed from the fixture transcripts, for
# checking that parse_action is total and exact on every scripted action turn.
FIXTURE_ACTION_TURNS = [
    (TOKYO_SCRIPT[0][2], ["Q1490"], TOKYO_LABELS),
    (TOKYO_SCRIPT[2][2], ["Q50337", "Q192724", "Q17"], TOKYO_LABELS),
    (GOETHE_SCRIPT[0][2], ["Q5879"], GOETHE_LABELS),
    (GOETHE_SCRIPT[2][2], ["Q61597"], GOETHE_LABELS),
    (GOETHE_SCRIPT[4][2], ["Q3042"], GOETHE_LABELS),
    (LONDON_SCRIPT[0][2], ["Q1164538", "Q208143"], LONDON_LABELS),
    (LONDON_SCRIPT[2][2], ["Q2009", "Q16", "Q208143"], LONDON_LABELS),
    (LONDON_SCRIPT[4][2], ["Q2009", "Q16"], LONDON_LABELS),
]
