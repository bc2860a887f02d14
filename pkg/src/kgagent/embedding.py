"""Embedding providers, cosine scoring, and a persistent embedding cache.

Scores feed golden trace files that must be byte-identical across runs and
platforms, so no BLAS or libm transcendentals are used anywhere on the
scoring path: sums go through math.fsum (correctly rounded) and the
deterministic provider builds vectors from hash-derived integers using only
IEEE-exact operations.
"""

from __future__ import annotations

import hashlib
import struct
import threading
import time
from math import fsum, isfinite, sqrt
from operator import mul
from pathlib import Path
from typing import Callable, Iterable, Protocol

Vector = tuple[float, ...]

_RECORD_LENGTH = struct.Struct("<I")


class EmbeddingError(ValueError):
    """Degenerate vector input (dimension mismatch or zero norm)."""


class EmbeddingProviderError(RuntimeError):
    """Provider failed after the configured retry attempts."""


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> Vector: ...


def cosine(a: Iterable[float], b: Iterable[float]) -> float:
    """dot(a, b) / (|a| * |b|), in [-1, 1] up to rounding."""
    a = tuple(a)
    b = tuple(b)
    if len(a) != len(b):
        raise EmbeddingError(f"dimension mismatch: {len(a)} vs {len(b)}")
    norm_a = sqrt(fsum(x * x for x in a))
    norm_b = sqrt(fsum(x * x for x in b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise EmbeddingError("zero-norm vector")
    return fsum(map(mul, a, b)) / (norm_a * norm_b)


def combined_text(relation_label: str, tail_label: str) -> str:
    """Relation and tail labels joined by exactly one space."""
    return f"{relation_label} {tail_label}"


def embed_text(
    text: str,
    provider: EmbeddingProvider,
    cache: "EmbeddingCache | None" = None,
    attempts: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> Vector:
    """Embed text through the cache, retrying provider failures.

    Retries with exponential backoff, then raises EmbeddingProviderError.
    Cache hits return the stored vector bit-for-bit.
    """
    if cache is not None:
        hit = cache.get(text)
        if hit is not None:
            return hit
    last_error: Exception | None = None
    for attempt in range(attempts):
        try:
            raw = provider.embed(text)
            break
        except Exception as exc:  # provider failures are retryable
            last_error = exc
            if attempt + 1 < attempts:
                sleep(backoff * (2**attempt))
    else:
        raise EmbeddingProviderError(
            f"embedding failed after {attempts} attempts: {last_error}"
        ) from last_error
    vector = tuple(float(x) for x in raw)
    if not vector or not all(isfinite(x) for x in vector):
        raise EmbeddingError("provider returned a non-finite or empty vector")
    if cache is not None:
        cache.put(text, vector)
    return vector


def score_candidate(
    question_vector: Vector,
    relation_label: str,
    tail_label: str,
    provider: EmbeddingProvider,
    cache: "EmbeddingCache | None" = None,
    attempts: int = 3,
    backoff: float = 0.5,
) -> float:
    """Cosine between the question vector and the embedded relation+tail text."""
    vector = embed_text(
        combined_text(relation_label, tail_label),
        provider,
        cache,
        attempts=attempts,
        backoff=backoff,
    )
    return cosine(question_vector, vector)


class DeterministicEmbedder:
    """Keyed-hash unit vectors, stable across runs and platforms.

    Components come from signed 64-bit chunks of a keyed BLAKE2b stream;
    normalization uses only correctly rounded IEEE operations.
    """

    def __init__(self, seed: int = 0, dimension: int = 64) -> None:
        if dimension < 2:
            raise ValueError("dimension must be >= 2")
        self.seed = seed
        self.dimension = dimension
        self._key = seed.to_bytes(8, "little", signed=True)

    def embed(self, text: str) -> Vector:
        data = text.encode("utf-8")
        components: list[float] = []
        counter = 0
        while len(components) < self.dimension:
            digest = hashlib.blake2b(
                data, key=self._key + counter.to_bytes(4, "little"), digest_size=64
            ).digest()
            for offset in range(0, 64, 8):
                components.append(
                    float(int.from_bytes(digest[offset : offset + 8], "little", signed=True))
                )
                if len(components) == self.dimension:
                    break
            counter += 1
        norm = sqrt(fsum(x * x for x in components))
        if norm == 0.0:  # unreachable in practice; keep the contract total
            components[0] = 1.0
            norm = 1.0
        return tuple(x / norm for x in components)


def deterministic_test_provider(seed: int, dimension: int) -> DeterministicEmbedder:
    return DeterministicEmbedder(seed=seed, dimension=dimension)


class HttpEmbedder:
    """Client for an OpenAI-style /embeddings endpoint.

    The API key is read from the environment; the provider is single-shot
    and relies on embed_text for retry policy.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        session=None,
    ) -> None:
        import requests

        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._session = session or requests.Session()
        self._dimension: int | None = None

    @property
    def dimension(self) -> int:
        if self._dimension is None:
            raise EmbeddingProviderError("dimension unknown before the first embed call")
        return self._dimension

    def embed(self, text: str) -> Vector:
        import os

        key = os.environ.get(self.api_key_env, "")
        response = self._session.post(
            f"{self.endpoint}/embeddings",
            json={"model": self.model, "input": text},
            headers={"Authorization": f"Bearer {key}"} if key else {},
            timeout=self.timeout,
        )
        response.raise_for_status()
        vector = tuple(float(x) for x in response.json()["data"][0]["embedding"])
        if self._dimension is None:
            self._dimension = len(vector)
        elif len(vector) != self._dimension:
            raise EmbeddingProviderError(
                f"provider dimension changed: {len(vector)} != {self._dimension}"
            )
        return vector


class EmbeddingCache:
    """Text -> vector cache with optional append-only file persistence.

    Record layout: u32 text length, UTF-8 text, u32 dimension, dimension
    little-endian float64 components. Reload yields bit-identical vectors.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self._entries: dict[str, Vector] = {}
        self._lock = threading.Lock()
        self._path = Path(path) if path is not None else None
        self._file = None
        if self._path is not None:
            if self._path.exists():
                self._load(self._path)
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._file = open(self._path, "ab")

    def _load(self, path: Path) -> None:
        blob = path.read_bytes()
        offset = 0

        def take(count: int) -> bytes:
            nonlocal offset
            if offset + count > len(blob):
                raise EmbeddingError(f"truncated cache record at byte {offset} in {path}")
            piece = blob[offset : offset + count]
            offset += count
            return piece

        while offset < len(blob):
            (text_length,) = _RECORD_LENGTH.unpack(take(4))
            text = take(text_length).decode("utf-8")
            (dimension,) = _RECORD_LENGTH.unpack(take(4))
            vector = struct.unpack(f"<{dimension}d", take(8 * dimension))
            self._entries[text] = vector

    def get(self, text: str) -> Vector | None:
        with self._lock:
            return self._entries.get(text)

    def put(self, text: str, vector: Vector) -> None:
        with self._lock:
            if text in self._entries:
                return  # identical by provider determinism
            self._entries[text] = vector
            if self._file is not None:
                data = text.encode("utf-8")
                self._file.write(_RECORD_LENGTH.pack(len(data)))
                self._file.write(data)
                self._file.write(_RECORD_LENGTH.pack(len(vector)))
                self._file.write(struct.pack(f"<{len(vector)}d", *vector))
                self._file.flush()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def __contains__(self, text: str) -> bool:
        return self.get(text) is not None

    def close(self) -> None:
        with self._lock:
            if self._file is not None:
                self._file.close()
                self._file = None

    def __enter__(self) -> "EmbeddingCache":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
