"""Text chunking, exhaustive vector search, keyword (BM25-style) search, and
the hybrid retriever over graph-derived SearchDocs.

Corpora here are desk-scale, so both indexes do exact exhaustive scoring;
results are deterministic with ties broken by insertion order.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .graph_store import PropertyGraph

DEFAULT_CHUNK_SIZE = 200
DEFAULT_OVERLAP = 20
TOKEN_PATTERN = re.compile(r"[a-z0-9][a-z0-9_\-\.]*")


class InvalidParams(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


def tokenize(text: str) -> List[str]:
    return TOKEN_PATTERN.findall(text.lower())


@dataclass
class Chunk:
    doc_id: str
    start_offset: int
    text: str
    embedding: Optional[np.ndarray] = None


@dataclass
class SearchDoc:
    element_ref: str  # node or edge id
    text: str
    embedding: Optional[np.ndarray] = None
    keywords: List[str] = field(default_factory=list)


@dataclass
class RetrievalHit:
    ref: object  # Chunk or SearchDoc
    score: float
    channel: str  # "VECTOR" | "KEYWORD" | "HYBRID"
    # raw per-channel components, filled by the hybrid retriever: cosine
    # before the [0,1] shift, and the normalized keyword weight
    raw_cosine: Optional[float] = None
    keyword_score: Optional[float] = None

    @property
    def has_evidence(self) -> bool:
        """True when at least one channel found actual overlap (used by HRAG
        to decide whether the text branch produced anything)."""
        if self.raw_cosine is None and self.keyword_score is None:
            return self.score > 0.0
        return bool((self.raw_cosine or 0.0) > 0.0 or (self.keyword_score or 0.0) > 0.0)


def chunk_text(
    doc_id: str,
    text: str,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> List[Chunk]:
    """Slice text into fixed-size chunks on a stride of chunk_size - overlap.

    Offsets count unicode scalar values. Concatenating the chunks with the
    overlaps removed reproduces the input exactly.
    """
    if chunk_size <= 0 or overlap < 0 or overlap >= chunk_size:
        raise InvalidParams(f"need 0 <= overlap < chunk_size, got {overlap}/{chunk_size}")
    if not text:
        return []
    stride = chunk_size - overlap
    chunks: List[Chunk] = []
    start = 0
    while True:
        chunks.append(Chunk(doc_id=doc_id, start_offset=start, text=text[start : start + chunk_size]))
        if start + chunk_size >= len(text):
            break
        start += stride
    return chunks


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector dims differ: {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class VectorIndex:
    """Exhaustive cosine index over embedded items (chunks or SearchDocs)."""

    def __init__(self):
        self._items: List[object] = []
        self._vectors: List[np.ndarray] = []

    def add(self, item: object, embedding: Sequence[float]) -> None:
        self._items.append(item)
        self._vectors.append(np.asarray(embedding, dtype=float))

    def __len__(self) -> int:
        return len(self._items)

    @property
    def items(self) -> List[object]:
        return list(self._items)

    def scores(self, query_embedding: Sequence[float]) -> List[float]:
        """Cosine similarity per item, mapped to [0, 1] via (cos + 1) / 2."""
        query = np.asarray(query_embedding, dtype=float)
        return [(cosine(query, vec) + 1.0) / 2.0 for vec in self._vectors]

    def top_k(self, query_embedding: Sequence[float], k: int = 3) -> List[RetrievalHit]:
        if k < 1:
            raise InvalidParams("k must be >= 1")
        if not self._items:
            return []
        scored = self.scores(query_embedding)
        order = sorted(range(len(scored)), key=lambda i: (-scored[i], i))
        return [
            RetrievalHit(ref=self._items[i], score=scored[i], channel="VECTOR")
            for i in order[:k]
        ]


def top_k_vector(query_embedding: Sequence[float], index: VectorIndex, k: int = 3) -> List[RetrievalHit]:
    return index.top_k(query_embedding, k)


# -- SearchDoc layer ------------------------------------------------------------

def build_searchdocs(graph: PropertyGraph) -> List[SearchDoc]:
    """One human-readable SearchDoc per frozen-graph node and edge."""
    if not graph.frozen:
        raise InvalidParams("build_searchdocs requires a frozen graph")
    docs: List[SearchDoc] = []
    for node in graph.nodes:
        text = f"{node.label} {node.name}"
        summary = node.properties.get("summary")
        if summary:
            text += f": {summary}"
        extras = [
            f"{key}={node.properties[key]}"
            for key in sorted(node.properties)
            if key not in ("name", "summary")
        ]
        if extras:
            text += " (" + ", ".join(extras) + ")"
        docs.append(SearchDoc(element_ref=node.id, text=text, keywords=tokenize(text)))
    for edge in graph.edges:
        src = graph.node(edge.source).name
        dst = graph.node(edge.target).name
        text = f"{src} {edge.label} {dst}"
        extras = [f"{key}={edge.properties[key]}" for key in sorted(edge.properties)]
        if extras:
            text += " (" + ", ".join(extras) + ")"
        docs.append(SearchDoc(element_ref=edge.id, text=text, keywords=tokenize(text)))
    return docs


# -- keyword scoring ------------------------------------------------------------

BM25_K1 = 1.5
BM25_B = 0.75


def bm25_scores(query_tokens: Sequence[str], doc_tokens: Sequence[Sequence[str]]) -> List[float]:
    """Okapi BM25 with Lucene-style non-negative idf."""
    n_docs = len(doc_tokens)
    if n_docs == 0:
        return []
    avg_len = sum(len(toks) for toks in doc_tokens) / n_docs
    df: Dict[str, int] = {}
    for toks in doc_tokens:
        for term in set(toks):
            df[term] = df.get(term, 0) + 1
    scores = []
    for toks in doc_tokens:
        counts: Dict[str, int] = {}
        for term in toks:
            counts[term] = counts.get(term, 0) + 1
        score = 0.0
        for term in query_tokens:
            tf = counts.get(term, 0)
            if tf == 0:
                continue
            idf = math.log(1.0 + (n_docs - df[term] + 0.5) / (df[term] + 0.5))
            denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * len(toks) / avg_len) if avg_len > 0 else tf + BM25_K1
            score += idf * tf * (BM25_K1 + 1.0) / denom
        scores.append(score)
    return scores


def keyword_scores(query_text: str, docs: Sequence[SearchDoc]) -> List[float]:
    """BM25 scores normalized to [0, 1] by the per-query maximum."""
    raw = bm25_scores(tokenize(query_text), [doc.keywords for doc in docs])
    peak = max(raw, default=0.0)
    if peak <= 0.0:
        return [0.0] * len(raw)
    return [score / peak for score in raw]


def fuse_scores(vector_score: float, keyword_score: float, alpha: float = 0.5) -> float:
    """Linear fusion; monotone in both channels for alpha in [0, 1]."""
    return alpha * vector_score + (1.0 - alpha) * keyword_score


def hybrid_retrieve(
    query_text: str,
    query_embedding: Sequence[float],
    searchdocs: Sequence[SearchDoc],
    k: int = 3,
    alpha: float = 0.5,
) -> List[RetrievalHit]:
    """Top-k SearchDocs by fused vector + keyword score."""
    if k < 1:
        raise InvalidParams("k must be >= 1")
    if not searchdocs:
        return []
    query = np.asarray(query_embedding, dtype=float)
    raw = [cosine(query, doc.embedding) if doc.embedding is not None else 0.0 for doc in searchdocs]
    vec = [(value + 1.0) / 2.0 for value in raw]
    kw = keyword_scores(query_text, searchdocs)
    fused = [fuse_scores(v, w, alpha) for v, w in zip(vec, kw)]
    order = sorted(range(len(searchdocs)), key=lambda i: (-fused[i], i))
    return [
        RetrievalHit(
            ref=searchdocs[i],
            score=fused[i],
            channel="HYBRID",
            raw_cosine=raw[i],
            keyword_score=kw[i],
        )
        for i in order[:k]
    ]


# -- snapshots ------------------------------------------------------------------

def dump_chunks_jsonl(chunks: Iterable[Chunk], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            rec = {
                "doc_id": chunk.doc_id,
                "start_offset": chunk.start_offset,
                "text": chunk.text,
                "embedding": None if chunk.embedding is None else [float(x) for x in chunk.embedding],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_chunks_jsonl(path: str) -> List[Chunk]:
    chunks = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            emb = rec.get("embedding")
            chunks.append(
                Chunk(
                    doc_id=rec["doc_id"],
                    start_offset=rec["start_offset"],
                    text=rec["text"],
                    embedding=None if emb is None else np.asarray(emb, dtype=float),
                )
            )
    return chunks


def dump_searchdocs_jsonl(docs: Iterable[SearchDoc], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            rec = {
                "element_ref": doc.element_ref,
                "text": doc.text,
                "keywords": list(doc.keywords),
                "embedding": None if doc.embedding is None else [float(x) for x in doc.embedding],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_searchdocs_jsonl(path: str) -> List[SearchDoc]:
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            emb = rec.get("embedding")
            docs.append(
                SearchDoc(
                    element_ref=rec["element_ref"],
                    text=rec["text"],
                    keywords=list(rec["keywords"]),
                    embedding=None if emb is None else np.asarray(emb, dtype=float),
                )
            )
    return docs
