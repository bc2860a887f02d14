"""Dataset loading, Hits@1 exact-match scoring, batch execution, reporting."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Callable, Iterable, Sequence

from .agent import AgentConfig, AgentError, Providers, run, trace_to_json
from .kg import EntityId, KnowledgeGraph


class DatasetError(ValueError):
    """Malformed dataset record; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass
class DatasetRecord:
    question: str
    seed_entities: list[EntityId]
    gold_answers: list[str]

    def __post_init__(self) -> None:
        if not self.question:
            raise ValueError("question must be non-empty")
        if not self.gold_answers:
            raise ValueError("gold answers must be non-empty")


def load_dataset(source: str | Path | IO | Iterable[str]) -> list[DatasetRecord]:
    """Read JSON-lines records with question / entities / answers fields."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            return load_dataset(handle)
    records: list[DatasetRecord] = []
    for number, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            data = json.loads(line)
            records.append(
                DatasetRecord(
                    question=data["question"],
                    seed_entities=list(data["entities"]),
                    gold_answers=list(data["answers"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad dataset record: {exc}", number) from exc
    return records


def save_dataset(records: Sequence[DatasetRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(
                json.dumps(
                    {
                        "question": record.question,
                        "entities": record.seed_entities,
                        "answers": record.gold_answers,
                    },
                    sort_keys=True,
                    ensure_ascii=True,
                )
                + "\n"
            )


def normalize_answer(text: str) -> str:
    """Trim, case-fold, and collapse internal whitespace."""
    return " ".join(text.split()).casefold()


def score_hit(
    predicted: Sequence[str], gold: Iterable[str], mode: str = "normalized"
) -> int:
    """1 iff any predicted answer matches any gold answer.

    mode "normalized" compares after normalize_answer; "strict" compares raw
    bytes.
    """
    if mode == "strict":
        gold_set = set(gold)
        return int(any(p in gold_set for p in predicted))
    if mode != "normalized":
        raise ValueError(f"unknown match mode {mode!r}")
    gold_set = {normalize_answer(g) for g in gold}
    return int(any(normalize_answer(p) in gold_set for p in predicted))


@dataclass
class QuestionOutcome:
    index: int
    question: str
    hit: int
    answers: list[str]
    gold: list[str]
    halted_by: str | None
    error: str | None
    elapsed: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "question": self.question,
            "hit": self.hit,
            "answers": self.answers,
            "gold": self.gold,
            "halted_by": self.halted_by,
            "error": self.error,
            "elapsed": round(self.elapsed, 6),
        }


@dataclass
class EvalReport:
    total: int
    hits: int
    accuracy: float
    outcomes: list[QuestionOutcome] = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    note: str | None = None

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "hits": self.hits,
            "accuracy": self.accuracy,
            "outcomes": [outcome.to_dict() for outcome in self.outcomes],
            "timing": self.timing,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            total=data["total"],
            hits=data["hits"],
            accuracy=data["accuracy"],
            outcomes=[QuestionOutcome(**outcome) for outcome in data["outcomes"]],
            timing=dict(data["timing"]),
            note=data.get("note"),
        )


def _percentile(sorted_values: list[float], q: float) -> float:
    if not sorted_values:
        return 0.0
    rank = max(0, min(len(sorted_values) - 1, int(q * len(sorted_values) + 0.999999) - 1))
    return sorted_values[rank]


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, ensure_ascii=True, indent=2) + "\n"


def report_from_json(payload: str) -> EvalReport:
    return EvalReport.from_dict(json.loads(payload))


ProvidersFactory = Callable[[DatasetRecord, int], Providers]


def run_eval(
    dataset: Sequence[DatasetRecord],
    kg: KnowledgeGraph,
    providers: Providers | ProvidersFactory,
    config: AgentConfig | None = None,
    workers: int = 1,
    out_dir: str | Path | None = None,
    match_mode: str = "normalized",
) -> EvalReport:
    """Run the agent on every record and aggregate Hits@1.

    Per-question failures are recorded as misses with their error message;
    the batch never aborts. Traces are persisted under out_dir/traces when an
    output directory is given. Accuracy is invariant to dataset order and
    worker count.
    """
    config = config or AgentConfig()
    traces_dir: Path | None = None
    if out_dir is not None:
        traces_dir = Path(out_dir) / "traces"
        traces_dir.mkdir(parents=True, exist_ok=True)

    def evaluate(indexed: tuple[int, DatasetRecord]) -> QuestionOutcome:
        index, record = indexed
        started = time.monotonic()
        question_providers = (
            providers(record, index) if callable(providers) else providers
        )
        trace = None
        try:
            result = run(record.question, record.seed_entities, kg, question_providers, config)
            trace = result.trace
            outcome = QuestionOutcome(
                index=index,
                question=record.question,
                hit=score_hit(result.answers, record.gold_answers, mode=match_mode),
                answers=result.answers,
                gold=list(record.gold_answers),
                halted_by=result.halted_by,
                error=None,
                elapsed=time.monotonic() - started,
            )
        except AgentError as exc:
            trace = exc.trace
            outcome = QuestionOutcome(
                index=index,
                question=record.question,
                hit=0,
                answers=[],
                gold=list(record.gold_answers),
                halted_by=None,
                error=str(exc),
                elapsed=time.monotonic() - started,
            )
        except Exception as exc:  # defensive: misconfigured records stay misses
            outcome = QuestionOutcome(
                index=index,
                question=record.question,
                hit=0,
                answers=[],
                gold=list(record.gold_answers),
                halted_by=None,
                error=f"{type(exc).__name__}: {exc}",
                elapsed=time.monotonic() - started,
            )
        if traces_dir is not None and trace is not None:
            path = traces_dir / f"q{index:05d}.json"
            path.write_text(trace_to_json(trace), encoding="utf-8", newline="\n")
        return outcome

    started_batch = time.monotonic()
    indexed_records = list(enumerate(dataset))
    if workers <= 1:
        outcomes = [evaluate(item) for item in indexed_records]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(evaluate, indexed_records))
    wall = time.monotonic() - started_batch

    total = len(outcomes)
    hits = sum(outcome.hit for outcome in outcomes)
    durations = sorted(outcome.elapsed for outcome in outcomes)
    report = EvalReport(
        total=total,
        hits=hits,
        accuracy=(hits / total) if total else 0.0,
        outcomes=outcomes,
        timing={
            "wall_seconds": round(wall, 6),
            "mean": round(sum(durations) / total, 6) if total else 0.0,
            "p50": round(_percentile(durations, 0.50), 6),
            "p90": round(_percentile(durations, 0.90), 6),
            "p99": round(_percentile(durations, 0.99), 6),
            "max": round(durations[-1], 6) if durations else 0.0,
        },
        note="empty dataset" if total == 0 else None,
    )
    if out_dir is not None:
        report_path = Path(out_dir) / "report.json"
        report_path.write_text(report_to_json(report), encoding="utf-8", newline="\n")
    return report
