import math
import random

import numpy as np
import pytest

from ctirag.gateway import hashed_bow_embedding
from ctirag.retrieval import (
    DimensionMismatch,
    InvalidParams,
    SearchDoc,
    VectorIndex,
    bm25_scores,
    build_searchdocs,
    chunk_text,
    fuse_scores,
    hybrid_retrieve,
    keyword_scores,
    tokenize,
    top_k_vector,
)

from oracles import cosine_textbook


# -- chunking ----------------------------------------------------------------------

def test_exact_fit_single_chunk():
    chunks = chunk_text("d", "x" * 200)
    assert len(chunks) == 1
    assert chunks[0].start_offset == 0
    assert len(chunks[0].text) == 200


def test_two_chunk_stride():
    text = "".join(chr(ord("a") + i % 26) for i in range(380))
    chunks = chunk_text("d", text)
    assert [(c.start_offset, len(c.text)) for c in chunks] == [(0, 200), (180, 200)]


def test_empty_text_no_chunks():
    assert chunk_text("d", "") == []


def test_invalid_params():
    with pytest.raises(InvalidParams):
        chunk_text("d", "abc", chunk_size=10, overlap=10)
    with pytest.raises(InvalidParams):
        chunk_text("d", "abc", chunk_size=0, overlap=0)
    with pytest.raises(InvalidParams):
        chunk_text("d", "abc", chunk_size=10, overlap=-1)


def reconstruct(chunks, overlap):
    if not chunks:
        return ""
    return chunks[0].text + "".join(c.text[overlap:] for c in chunks[1:])


def test_reconstruction_property_random_texts():
    rng = random.Random(123)
    for _ in range(200):
        length = rng.randint(0, 1200)
        text = "".join(rng.choice("abcdef é中") for _ in range(length))
        chunk_size = rng.randint(2, 300)
        overlap = rng.randint(0, chunk_size - 1)
        chunks = chunk_text("d", text, chunk_size, overlap)
        assert reconstruct(chunks, overlap) == text
        stride = chunk_size - overlap
        for i, chunk in enumerate(chunks):
            assert chunk.start_offset == i * stride


def test_offsets_count_unicode_scalars():
    text = "中文" * 150  # 300 chars, multibyte in utf-8
    chunks = chunk_text("d", text)
    assert chunks[0].start_offset == 0
    assert chunks[1].start_offset == 180
    assert reconstruct(chunks, 20) == text


# -- vector index -------------------------------------------------------------------

def test_self_similarity_ranks_first():
    index = VectorIndex()
    vectors = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), np.array([0.7, 0.7, 0.0])]
    for i, vec in enumerate(vectors):
        index.add(f"item{i}", vec)
    hits = top_k_vector(np.array([0.0, 1.0, 0.0]), index, k=1)
    assert hits[0].ref == "item1"
    assert hits[0].score == pytest.approx(1.0)


def test_fewer_items_than_k():
    index = VectorIndex()
    index.add("a", np.array([1.0, 0.0]))
    index.add("b", np.array([0.0, 1.0]))
    hits = top_k_vector(np.array([1.0, 0.0]), index, k=3)
    assert len(hits) == 2


def test_empty_index_returns_empty():
    assert top_k_vector(np.array([1.0]), VectorIndex(), k=3) == []


def test_k_must_be_positive():
    index = VectorIndex()
    index.add("a", np.array([1.0]))
    with pytest.raises(InvalidParams):
        top_k_vector(np.array([1.0]), index, k=0)


def test_dimension_mismatch():
    index = VectorIndex()
    index.add("a", np.array([1.0, 0.0]))
    with pytest.raises(DimensionMismatch):
        top_k_vector(np.array([1.0, 0.0, 0.0]), index, k=1)


def test_top_k_matches_exhaustive_oracle():
    rng = random.Random(2024)
    for _ in range(20):
        index = VectorIndex()
        vectors = []
        for i in range(5):
            vec = [rng.uniform(-1, 1) for _ in range(4)]
            vectors.append(vec)
            index.add(i, np.array(vec))
        query = [rng.uniform(-1, 1) for _ in range(4)]
        hits = top_k_vector(np.array(query), index, k=3)
        scored = [((cosine_textbook(query, vec) + 1.0) / 2.0, i) for i, vec in enumerate(vectors)]
        expected = sorted(range(5), key=lambda i: (-scored[i][0], i))[:3]
        assert [h.ref for h in hits] == expected
        for hit in hits:
            assert hit.score == pytest.approx(scored[hit.ref][0])
        # top-k is a prefix of the full ranking
        full = top_k_vector(np.array(query), index, k=5)
        assert [h.ref for h in full[:3]] == [h.ref for h in hits]


# -- searchdocs -------------------------------------------------------------------

def test_build_searchdocs_one_per_element(small_graph):
    docs = build_searchdocs(small_graph)
    assert len(docs) == small_graph.node_count() + small_graph.edge_count()
    refs = {d.element_ref for d in docs}
    assert len(refs) == len(docs)


def test_searchdoc_node_rendering(small_graph):
    docs = {d.element_ref: d for d in build_searchdocs(small_graph)}
    malware = next(n for n in small_graph.nodes if n.name == "RokRAT")
    text = docs[malware.id].text
    assert "RokRAT" in text and "remote access trojan" in text and "Malware" in text


def test_searchdoc_edge_rendering(small_graph):
    docs = build_searchdocs(small_graph)
    uses = next(d for d in docs if d.element_ref.startswith("e") and "uses" in d.text)
    assert "APT37" in uses.text and "RokRAT" in uses.text
    assert "evidence=deployed RokRAT" in uses.text


def test_empty_graph_no_searchdocs():
    from ctirag.graph_store import PropertyGraph

    g = PropertyGraph()
    g.freeze()
    assert build_searchdocs(g) == []


def test_searchdocs_require_frozen(small_graph):
    from ctirag.graph_store import PropertyGraph

    g = PropertyGraph()
    with pytest.raises(InvalidParams):
        build_searchdocs(g)


# -- hybrid retrieval -----------------------------------------------------------------

def make_doc(ref, text):
    return SearchDoc(element_ref=ref, text=text, embedding=hashed_bow_embedding(text), keywords=tokenize(text))


def test_exact_text_match_ranks_first():
    docs = [
        make_doc("a", "Malware LockBit: ransomware payload"),
        make_doc("b", "ThreatActor APT37: espionage group"),
        make_doc("c", "Sector Healthcare"),
    ]
    query = "ThreatActor APT37: espionage group"
    hits = hybrid_retrieve(query, hashed_bow_embedding(query), docs, k=3)
    assert hits[0].ref.element_ref == "b"
    assert hits[0].score == pytest.approx(1.0)


def test_alpha_one_equals_vector_ranking():
    rng = random.Random(5)
    texts = [
        "alpha beta gamma", "delta epsilon", "alpha delta", "zeta eta theta",
    ]
    docs = [make_doc(str(i), t) for i, t in enumerate(texts)]
    query = "alpha delta"
    emb = hashed_bow_embedding(query)
    hybrid = hybrid_retrieve(query, emb, docs, k=4, alpha=1.0)
    index = VectorIndex()
    for doc in docs:
        index.add(doc.element_ref, doc.embedding)
    vector = top_k_vector(emb, index, k=4)
    assert [h.ref.element_ref for h in hybrid] == [h.ref for h in vector]
    for h_hit, v_hit in zip(hybrid, vector):
        assert h_hit.score == pytest.approx(v_hit.score)


def test_fusion_matches_hand_computation():
    texts = ["lockbit ransomware", "apt37 espionage", "lockbit tool", "healthcare sector"]
    docs = [make_doc(str(i), t) for i, t in enumerate(texts)]
    query = "lockbit"
    emb = hashed_bow_embedding(query)

    # hand-computed channel scores with the documented formulas
    vec_scores = [(cosine_textbook(emb, d.embedding) + 1.0) / 2.0 for d in docs]
    n, avg_len = 4, sum(len(d.keywords) for d in docs) / 4
    df = sum(1 for d in docs if "lockbit" in d.keywords)
    idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
    raw = []
    for d in docs:
        tf = d.keywords.count("lockbit")
        if tf == 0:
            raw.append(0.0)
        else:
            denom = tf + 1.5 * (1.0 - 0.75 + 0.75 * len(d.keywords) / avg_len)
            raw.append(idf * tf * 2.5 / denom)
    peak = max(raw)
    kw_scores = [r / peak if peak > 0 else 0.0 for r in raw]
    expected = [0.5 * v + 0.5 * w for v, w in zip(vec_scores, kw_scores)]
    order = sorted(range(4), key=lambda i: (-expected[i], i))

    hits = hybrid_retrieve(query, emb, docs, k=4, alpha=0.5)
    assert [h.ref.element_ref for h in hits] == [str(i) for i in order]
    for hit in hits:
        assert hit.score == pytest.approx(expected[int(hit.ref.element_ref)])


def test_fusion_monotone_in_each_channel():
    rng = random.Random(11)
    for _ in range(200):
        alpha = rng.random()
        v1, w1 = rng.random(), rng.random()
        v2, w2 = rng.random(), rng.random()
        base1 = fuse_scores(v1, w1, alpha)
        base2 = fuse_scores(v2, w2, alpha)
        if base1 >= base2:
            # raising either channel of doc 1 never drops it below doc 2
            assert fuse_scores(min(1.0, v1 + rng.random()), w1, alpha) >= base2 - 1e-12
            assert fuse_scores(v1, min(1.0, w1 + rng.random()), alpha) >= base2 - 1e-12


def test_keyword_scores_normalized():
    docs = [make_doc("a", "lockbit ransomware"), make_doc("b", "unrelated words")]
    scores = keyword_scores("lockbit", docs)
    assert scores[0] == pytest.approx(1.0)
    assert scores[1] == 0.0
    assert keyword_scores("zzz", docs) == [0.0, 0.0]


def test_bm25_empty_corpus():
    assert bm25_scores(["x"], []) == []


# -- JSONL snapshots --------------------------------------------------------------

def test_chunk_jsonl_round_trip(tmp_path):
    from ctirag.retrieval import dump_chunks_jsonl, load_chunks_jsonl

    chunks = chunk_text("doc", "a" * 250)
    chunks[0].embedding = hashed_bow_embedding(chunks[0].text)
    path = str(tmp_path / "chunks.jsonl")
    dump_chunks_jsonl(chunks, path)
    loaded = load_chunks_jsonl(path)
    assert [(c.doc_id, c.start_offset, c.text) for c in loaded] == [
        (c.doc_id, c.start_offset, c.text) for c in chunks
    ]
    assert loaded[0].embedding is not None
    assert loaded[1].embedding is None


def test_searchdoc_jsonl_round_trip(tmp_path, small_graph):
    from ctirag.retrieval import dump_searchdocs_jsonl, load_searchdocs_jsonl

    docs = build_searchdocs(small_graph)
    docs[0].embedding = hashed_bow_embedding(docs[0].text)
    path = str(tmp_path / "docs.jsonl")
    dump_searchdocs_jsonl(docs, path)
    loaded = load_searchdocs_jsonl(path)
    assert [(d.element_ref, d.text, d.keywords) for d in loaded] == [
        (d.element_ref, d.text, d.keywords) for d in docs
    ]
