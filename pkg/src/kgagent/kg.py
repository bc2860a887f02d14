"""In-memory triple store: TSV loading, neighbor and path queries, k-hop
subgraph extraction, and an optional line-protocol query service.

The graph is mutable only while loading; afterwards it is treated as
immutable and may be shared freely across threads.
"""

from __future__ import annotations

import socket
import socketserver
import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

EntityId = str
RelationId = str

TRIPLES_FILENAME = "triples.tsv"
LABELS_FILENAME = "labels.tsv"


class TripleParseError(ValueError):
    """Malformed TSV input; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True, order=True, slots=True)
class Triple:
    """One directed edge (head entity, relation, tail entity)."""

    head: EntityId
    relation: RelationId
    tail: EntityId

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)

    def to_tsv(self) -> str:
        return f"{self.head}\t{self.relation}\t{self.tail}"


@dataclass
class KnowledgeGraph:
    """Directed labeled graph with head-indexed adjacency and a label map.

    Adjacency lists preserve first-seen load order; duplicate triples
    collapse to one edge.
    """

    triples: set[Triple] = field(default_factory=set)
    adjacency: dict[EntityId, list[Triple]] = field(default_factory=dict)
    labels: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.triples)

    def add(self, triple: Triple) -> bool:
        """Insert a triple; returns False if it was already present."""
        if triple in self.triples:
            return False
        self.triples.add(triple)
        self.adjacency.setdefault(triple.head, []).append(triple)
        return True

    def label_of(self, identifier: str) -> str:
        """Human-readable label, falling back to the raw id."""
        return self.labels.get(identifier, identifier)

    def get_neighbors(self, entity: EntityId, limit: int | None = None) -> list[Triple]:
        """Triples with the given entity as head, in load order.

        Unknown entities yield an empty list. ``limit`` truncates hub
        entities; None means unlimited.
        """
        out = self.adjacency.get(entity, [])
        if limit is not None:
            return out[:limit]
        return list(out)

    def find_paths(
        self, start: EntityId, goal: EntityId, max_len: int = 3
    ) -> list[list[Triple]]:
        """All directed simple paths from start to goal up to max_len edges.

        Intermediate entities never repeat and never revisit either
        endpoint. Results are ordered by (length, lexicographic triple
        sequence).
        """
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        paths: list[list[Triple]] = []

        def walk(node: EntityId, visited: set[EntityId], chain: list[Triple]) -> None:
            for triple in self.adjacency.get(node, ()):
                tail = triple.tail
                if tail == goal:
                    paths.append(chain + [triple])
                    continue
                if len(chain) + 1 < max_len and tail not in visited:
                    visited.add(tail)
                    chain.append(triple)
                    walk(tail, visited, chain)
                    chain.pop()
                    visited.discard(tail)

        walk(start, {start}, [])
        paths.sort(key=lambda p: (len(p), [t.as_tuple() for t in p]))
        return paths


def _iter_text_lines(source: str | Path | IO | Iterable[str | bytes]) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as handle:
            for raw in handle:
                yield raw.decode("utf-8")
        return
    for raw in source:
        if isinstance(raw, bytes):
            yield raw.decode("utf-8")
        else:
            yield raw


def _check_id(value: str, kind: str, line_number: int) -> str:
    if not value:
        raise TripleParseError(f"empty {kind} field", line_number)
    if "\t" in value or "\n" in value or "\r" in value:
        raise TripleParseError(f"{kind} contains tab or newline", line_number)
    return sys.intern(value)


def load_triples(source: str | Path | IO | Iterable[str | bytes]) -> KnowledgeGraph:
    """Build a graph from TSV lines ``head<TAB>relation<TAB>tail``.

    Blank lines are skipped; duplicate triples collapse; first-seen order
    is preserved in adjacency lists.
    """
    kg = KnowledgeGraph()
    for number, line in enumerate(_iter_text_lines(source), start=1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise TripleParseError(
                f"expected 3 tab-separated fields, got {len(fields)}", number
            )
        head, relation, tail = (
            _check_id(fields[0], "head", number),
            _check_id(fields[1], "relation", number),
            _check_id(fields[2], "tail", number),
        )
        kg.add(Triple(head, relation, tail))
    return kg


def load_labels(
    kg: KnowledgeGraph, source: str | Path | IO | Iterable[str | bytes]
) -> KnowledgeGraph:
    """Merge TSV lines ``id<TAB>label`` into the graph's label map.

    Later lines overwrite earlier labels for the same id.
    """
    for number, line in enumerate(_iter_text_lines(source), start=1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise TripleParseError(
                f"expected 2 tab-separated fields, got {len(fields)}", number
            )
        identifier = _check_id(fields[0], "id", number)
        kg.labels[identifier] = fields[1]
    return kg


def dump_triples(kg: KnowledgeGraph) -> Iterator[str]:
    """TSV lines in adjacency order; load_triples(dump_triples(kg)) == kg."""
    for triples in kg.adjacency.values():
        for triple in triples:
            yield triple.to_tsv() + "\n"


def dump_labels(kg: KnowledgeGraph) -> Iterator[str]:
    for identifier, label in kg.labels.items():
        yield f"{identifier}\t{label}\n"


def extract_khop_subgraph(
    kg: KnowledgeGraph, seeds: Iterable[EntityId], k: int
) -> KnowledgeGraph:
    """All triples reachable by following head->tail edges for at most k steps.

    The frontier after each step is the set of tails just reached; labels in
    the result are restricted to the ids that survive.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    out = KnowledgeGraph()
    frontier = list(dict.fromkeys(seeds))
    visited = set(frontier)
    for _ in range(k):
        next_frontier: list[EntityId] = []
        for entity in frontier:
            for triple in kg.adjacency.get(entity, ()):
                out.add(triple)
                if triple.tail not in visited:
                    visited.add(triple.tail)
                    next_frontier.append(triple.tail)
        if not next_frontier:
            break
        frontier = next_frontier
    for triples in out.adjacency.values():
        for triple in triples:
            for identifier in triple.as_tuple():
                if identifier in kg.labels:
                    out.labels[identifier] = kg.labels[identifier]
    return out


def save_kg(kg: KnowledgeGraph, directory: str | Path) -> None:
    """Write triples.tsv and labels.tsv under a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / TRIPLES_FILENAME, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(dump_triples(kg))
    with open(directory / LABELS_FILENAME, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(dump_labels(kg))


def load_kg(directory: str | Path) -> KnowledgeGraph:
    """Load a graph saved by save_kg; labels.tsv is optional."""
    directory = Path(directory)
    kg = load_triples(directory / TRIPLES_FILENAME)
    labels_path = directory / LABELS_FILENAME
    if labels_path.exists():
        load_labels(kg, labels_path)
    return kg


class KnowledgeGraphServer:
    """Line-protocol query service over a local TCP socket.

    Requests: ``NEIGHBORS <id>`` or ``PATHS <id1> <id2> <max_len>``.
    Responses: one TSV triple per line, terminated by a blank line.
    Malformed requests get an ``ERR <reason>`` line plus the terminator.
    """

    def __init__(self, kg: KnowledgeGraph, host: str = "127.0.0.1", port: int = 0):
        self.kg = kg

        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                for raw in self.rfile:
                    reply = outer._answer(raw.decode("utf-8").strip())
                    self.wfile.write(("".join(reply) + "\n").encode("utf-8"))
                    self.wfile.flush()

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def _answer(self, request: str) -> list[str]:
        parts = request.split()
        try:
            if len(parts) == 2 and parts[0] == "NEIGHBORS":
                found = self.kg.get_neighbors(parts[1])
            elif len(parts) == 4 and parts[0] == "PATHS":
                paths = self.kg.find_paths(parts[1], parts[2], int(parts[3]))
                found = list(dict.fromkeys(t for path in paths for t in path))
            else:
                return [f"ERR unsupported request: {request!r}\n"]
        except ValueError as exc:
            return [f"ERR {exc}\n"]
        return [t.to_tsv() + "\n" for t in found]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> "KnowledgeGraphServer":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def query_service(host: str, port: int, request: str) -> list[Triple]:
    """Send one request line to a KnowledgeGraphServer and parse the reply."""
    with socket.create_connection((host, port)) as conn:
        conn.sendall((request + "\n").encode("utf-8"))
        buffered = conn.makefile("rb")
        triples: list[Triple] = []
        for raw in buffered:
            line = raw.decode("utf-8").rstrip("\n")
            if not line:
                break
            if line.startswith("ERR "):
                raise RuntimeError(line[4:])
            head, relation, tail = line.split("\t")
            triples.append(Triple(head, relation, tail))
        return triples
