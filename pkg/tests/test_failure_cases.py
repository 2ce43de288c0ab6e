"""Scripted-mock reproductions of the three representative failure cases:
a repaired relationship-name mismatch with a large speedup, safe abstention
versus a confident fabrication on a missing property, and the retry-loop
death spiral that cycles nonexistent property names until the budget cap.
"""

import json

import pytest

from ctirag.gateway import Gateway, PromptRole, ScriptedMockProvider
from ctirag.graph_store import PropertyGraph
from ctirag.pipelines import PipelineConfig, run_agrag, run_grag, run_hrag, run_rag
from ctirag.retrieval import VectorIndex, build_searchdocs, chunk_text
from ctirag.scoring import REFUSAL_PHRASE


def make_gateway(script):
    return Gateway(ScriptedMockProvider(script))


def chunk_index_for(gateway, texts):
    index = VectorIndex()
    for doc_id, text in texts.items():
        for chunk in chunk_text(doc_id, text):
            emb = gateway.embed_one(chunk.text)
            chunk.embedding = emb
            index.add(chunk, emb)
    return index


def searchdocs_for(gateway, graph):
    docs = build_searchdocs(graph)
    for doc in docs:
        doc.embedding = gateway.embed_one(doc.text)
    return docs


# -- Case 1: agentic correction recovers with dramatic speedup ------------------------

CASE1_QUESTION = "Which CVE was exploited in the APT37 Internet Explorer incident?"
CASE1_GOLD_QUERY = (
    'MATCH (c:CVE)-[:exploited_in]->(i:Incident {name: "APT37 Internet Explorer incident"}) '
    "RETURN c.name AS cve"
)
CASE1_BAD_QUERY = (
    'MATCH (c:CVE)-[:involved_in]->(i:Incident {name: "APT37 Internet Explorer incident"}) '
    "RETURN c.name AS cve"
)


def test_case1_agrag_fixes_bad_relationship_after_grag_exhausts(small_graph):
    config = PipelineConfig(wall_budget_s=3000.0)

    grag_gateway = make_gateway(
        [
            {
                "role": "GEN_CYPHER",
                "match": "*",
                # the paper's pathological pattern: every retry insists on a
                # relationship name that is not in the schema
                "responses": [{"text": CASE1_BAD_QUERY, "latency_s": 29.4}] * 25,
            }
        ]
    )
    grag = run_grag(CASE1_QUESTION, small_graph, [], grag_gateway, config)
    assert grag.iterations == 25
    assert grag.failed and grag.answer_text == ""
    assert "LoopExhausted" in grag.notes
    assert grag.latency_s == pytest.approx(735.0)
    assert all("involved_in" in entry["query"] for entry in grag.cypher_trace)

    agrag_gateway = make_gateway(
        [
            {
                "role": "CRITIQUE_CYPHER",
                "match": "*",
                "responses": [
                    {
                        "text": json.dumps(
                            {
                                "verdict": "refine",
                                "cypher": CASE1_GOLD_QUERY,
                                "comment": "relationship schema mismatch: use exploited_in",
                            }
                        ),
                        "latency_s": 2.5,
                    }
                ],
            },
            {"role": "ANSWER_RAG", "match": "*", "responses": [{"text": "CVE-2022-41128", "latency_s": 2.4}]},
        ]
    )
    agrag = run_agrag(CASE1_QUESTION, small_graph, grag, agrag_gateway, config)
    assert agrag.iterations == 1
    assert agrag.answer_text == "CVE-2022-41128"
    assert agrag.latency_s == pytest.approx(4.9)
    assert grag.latency_s / agrag.latency_s > 100  # the observed ~147x speedup shape


# -- Case 2: hybrid retrieval enables safe abstention ------------------------------------

CASE2_QUESTION = "What CVSS score is recorded for CVE-2024-21338?"


def case2_graph():
    graph = PropertyGraph()
    actor = graph.merge_node("ThreatActor", {"name": "LockBit"})
    victim = graph.merge_node("Victim", {"name": "Hospital"})
    graph.merge_edge(actor, victim, "attacked")
    graph.freeze()
    return graph


def test_case2_rag_hallucinates_hrag_refuses():
    graph = case2_graph()

    rag_gateway = make_gateway(
        [
            {
                "role": "ANSWER_RAG",
                "match": "*",
                "responses": [{"text": "The CVSS score recorded for CVE-2024-21338 is 9.1", "latency_s": 1.2}],
            }
        ]
    )
    index = chunk_index_for(rag_gateway, {"r": "LockBit attacked Hospital in January."})
    rag = run_rag(CASE2_QUESTION, index, rag_gateway)
    assert "9.1" in rag.answer_text
    assert not rag.is_refusal  # the safety failure: confident fabrication
    assert rag.latency_s == pytest.approx(1.2)

    hrag_gateway = make_gateway(
        [
            {
                "role": "GEN_CYPHER",
                "match": "*",
                "responses": [
                    # zero-shot attempt asks for a property outside the schema,
                    # and the one LLM repair still cannot name a valid path
                    {"text": 'MATCH (c:CVE) WHERE c.cvss = 9.1 RETURN c.name AS name', "latency_s": 6.0},
                    {"text": 'MATCH (c:CVE {name: "CVE-2024-21338"}) RETURN c.name AS name', "latency_s": 6.0},
                ],
            }
        ]
    )
    docs = searchdocs_for(hrag_gateway, graph)
    hrag = run_hrag(CASE2_QUESTION, graph, docs, hrag_gateway)
    assert hrag.is_refusal
    assert hrag.answer_text == REFUSAL_PHRASE
    assert "both branches empty" in hrag.notes
    assert hrag_gateway.calls_for_role(PromptRole.SYNTHESIZE_HYBRID) == []
    # cross-validation shape: graph branch found nothing, text branch no evidence
    assert hrag.retrieved_context["graph_rows"] is None
    assert hrag.retrieved_context["text_hits"] == []


# -- Case 3: query-correction death spiral ------------------------------------------------

CASE3_QUESTION = "What exact GoAnywhere MFT version is vulnerable to CVE-2024-0204?"
CASE3_VARIANTS = [
    'MATCH (c:CVE {name: "CVE-2024-0204"}) WHERE c.affected_version = "7.4.0" RETURN c.name AS name',
    'MATCH (c:CVE {name: "CVE-2024-0204"}) WHERE c.version = "7.4.0" RETURN c.name AS name',
    'MATCH (c:CVE {name: "CVE-2024-0204"}) WHERE c.vulnerable_version = "7.4.0" RETURN c.name AS name',
    'MATCH (c:CVE {name: "CVE-2024-0204"}) WHERE c.product_version = "7.4.0" RETURN c.name AS name',
    'MATCH (t:Tool {name: "GoAnywhere MFT"})-[:has_alias]->(x:Tool) RETURN x.name AS name',
]


def case3_graph():
    graph = PropertyGraph()
    cve = graph.merge_node("CVE", {"name": "CVE-2024-0204"})
    tool = graph.merge_node("Tool", {"name": "GoAnywhere MFT"})
    actor = graph.merge_node("ThreatActor", {"name": "Lazarus Group"})
    graph.merge_edge(actor, cve, "exploits")
    graph.freeze()
    return graph


def test_case3_grag_death_spiral_bounded_by_budget():
    graph = case3_graph()
    config = PipelineConfig(wall_budget_s=3000.0)
    responses = [
        {"text": CASE3_VARIANTS[i % len(CASE3_VARIANTS)], "latency_s": 93.9}
        for i in range(25)
    ]
    gateway = make_gateway([{"role": "GEN_CYPHER", "match": "*", "responses": responses}])
    answer = run_grag(CASE3_QUESTION, graph, [], gateway, config)

    assert answer.iterations == 25
    assert answer.answer_text == ""  # empty non-answer, not a refusal
    assert not answer.is_refusal
    assert "LoopExhausted" in answer.notes
    # every attempt failed validation (unknown property) or returned empty
    for entry in answer.cypher_trace:
        assert entry["error"] is not None
    seen = " ".join(entry["query"] for entry in answer.cypher_trace)
    for variant in ("affected_version", "version", "vulnerable_version", "product_version"):
        assert variant in seen
    # ~2,348 s observed in the wild; here it stays within the configured budget
    assert answer.latency_s == pytest.approx(25 * 93.9)
    assert answer.latency_s <= config.wall_budget_s + 93.9


def test_case3_default_budget_cuts_the_spiral_early():
    graph = case3_graph()
    config = PipelineConfig(wall_budget_s=120.0)
    responses = [
        {"text": CASE3_VARIANTS[i % len(CASE3_VARIANTS)], "latency_s": 93.9}
        for i in range(25)
    ]
    gateway = make_gateway([{"role": "GEN_CYPHER", "match": "*", "responses": responses}])
    answer = run_grag(CASE3_QUESTION, graph, [], gateway, config)
    assert "budget_exceeded" in answer.notes
    assert answer.iterations < 25
    assert answer.latency_s <= config.wall_budget_s + 93.9
