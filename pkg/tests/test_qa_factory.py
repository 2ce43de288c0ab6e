import json

import pytest

from ctirag.cypher import execute
from ctirag.cypher.validate import validate_text
from ctirag.gateway import Gateway, ScriptedMockProvider
from ctirag.graph_store import DEFAULT_ONTOLOGY
from ctirag.qa_factory import (
    GenerationUnderflow,
    QAItem,
    generate_from_cypher,
    generate_guided,
    load_dataset,
    render_gold,
    save_dataset,
    validate_dataset,
)
from ctirag import toydata


def make_gateway(script):
    return Gateway(ScriptedMockProvider(script))


def toy_graph():
    graph, statements = toydata.build_toy_graph()
    return graph, statements


def qa_script(payloads):
    return [
        {
            "role": "QA_FROM_CYPHER",
            "match": "*",
            "responses": [json.dumps(p) for p in payloads],
        }
    ]


# -- validate_dataset ---------------------------------------------------------------

def item(question, gold, category, aggregate=False):
    return QAItem(
        id="x",
        question=question,
        gold_answer=gold,
        category=category,
        provenance="q",
        is_aggregate=aggregate,
    )


def test_prefix_diversity_quarter():
    items = [
        item("Which CVE was exploited in alpha?", "a", "simple"),
        item("Which CVE was exploited in beta?", "b", "simple"),
        item("Which CVE was exploited in gamma?", "c", "simple"),
        item("Which CVE was exploited in delta?", "d", "simple"),
    ]
    report = validate_dataset(items)
    assert report.prefix_diversity == 0.25


def test_one_word_answers():
    items = [item(f"Question number {i} asks what?", "word", "simple") for i in range(5)]
    report = validate_dataset(items)
    assert report.factoid_within_12w == 1.0
    assert report.answer_words_median["simple"] == 1
    assert report.answer_words_mean["simple"] == 1.0


def test_empty_dataset_all_zero():
    report = validate_dataset([])
    assert report.prefix_diversity == 0.0
    assert report.factoid_within_12w == 0.0
    assert report.aggregate_multihop_count == 0
    assert all(v == 0 for v in report.counts.values())


def test_guided_excluded_from_conciseness():
    long_answer = " ".join(["w"] * 40)
    items = [item("Guided question about LockBit?", long_answer, "guided"),
             item("Short factoid?", "yes", "simple")]
    report = validate_dataset(items)
    assert report.factoid_within_12w == 1.0
    assert report.answer_words_mean["guided"] == 40.0


def test_aggregate_multihop_count():
    items = [
        item("How many things?", "3", "multi_hop", aggregate=True),
        item("Which chain of things?", "a", "multi_hop", aggregate=False),
    ]
    assert validate_dataset(items).aggregate_multihop_count == 1


# -- generate_from_cypher ---------------------------------------------------------------

def test_generate_full_quota_from_toy_script():
    graph, statements = toy_graph()
    payload = [
        {"category": category, "question": question, "cypher": query}
        for category, question, query in toydata.CYPHER_QA
    ]
    gateway = make_gateway(qa_script([payload]))
    items = generate_from_cypher(statements, graph, gateway)
    report = validate_dataset(items)
    assert report.counts == {"simple": 15, "single_hop": 15, "multi_hop": 15,
                             "guided": 0, "unanswerable": 5}
    assert report.aggregate_multihop_count >= 5
    assert report.factoid_within_12w == 1.0


def test_verification_property_golds_reproducible():
    graph, statements = toy_graph()
    payload = [
        {"category": category, "question": question, "cypher": query}
        for category, question, query in toydata.CYPHER_QA
    ]
    gateway = make_gateway(qa_script([payload]))
    items = generate_from_cypher(statements, graph, gateway)
    for qa in items:
        ast, report = validate_text(qa.provenance, DEFAULT_ONTOLOGY, "READ")
        if qa.category == "unanswerable":
            assert qa.gold_answer == ""
            continue
        assert report.passed
        assert render_gold(execute(ast, graph)) == qa.gold_answer


def test_overlong_gold_rejected_then_regenerated():
    graph, statements = toy_graph()
    # first response: a simple item whose gold answer is 13 words
    long_node = 'MATCH (g:Campaign {name: "Operation Bleed"}) RETURN g.name AS n'
    wordy = {
        "category": "simple",
        "question": "Fill the quota with something too wordy?",
        "cypher": 'MATCH (m:Malware) RETURN COLLECT(m.summary) AS all',
    }
    base = [
        {"category": c, "question": q, "cypher": s} for c, q, s in toydata.CYPHER_QA
    ]
    # drop one simple item and offer the wordy one instead; factory must
    # reject it (gold > 12 words after collection) and take the re-ask item
    first = [r for r in base if r["question"] != base[0]["question"]] + [wordy]
    second = [base[0]]
    gateway = make_gateway(qa_script([first, second]))
    items = generate_from_cypher(statements, graph, gateway)
    assert validate_dataset(items).counts["simple"] == 15
    assert all(len(i.gold_answer.split()) <= 12 for i in items if i.category != "guided")


def test_unanswerable_probe_with_rows_rejected():
    graph, statements = toy_graph()
    base = [
        {"category": c, "question": q, "cypher": s} for c, q, s in toydata.CYPHER_QA
    ]
    bad_probe = {
        "category": "unanswerable",
        "question": "Pretend this cannot be answered?",
        "cypher": 'MATCH (m:Malware {name: "RokRAT"}) RETURN m.name AS name',
    }
    replaced = [r for r in base if r["category"] != "unanswerable"][: len(base) - 5]
    first = replaced + [bad_probe]
    second = [r for r in base if r["category"] == "unanswerable"]
    gateway = make_gateway(qa_script([first, second]))
    items = generate_from_cypher(statements, graph, gateway)
    unanswerable = [i for i in items if i.category == "unanswerable"]
    assert len(unanswerable) == 5
    assert all(i.question != "Pretend this cannot be answered?" for i in unanswerable)


def test_generation_underflow_after_budget():
    graph, statements = toy_graph()
    gateway = make_gateway(qa_script([[], [], [], []]))
    with pytest.raises(GenerationUnderflow):
        generate_from_cypher(statements, graph, gateway)


def test_aggregate_multihop_minimum_enforced_by_regeneration():
    graph, statements = toy_graph()
    base = [
        {"category": c, "question": q, "cypher": s} for c, q, s in toydata.CYPHER_QA
    ]
    aggregates = [
        r for r in base
        if r["category"] == "multi_hop" and ("COUNT(" in r["cypher"] or "COLLECT(" in r["cypher"])
    ]
    plain_multi = [r for r in base if r["category"] == "multi_hop" and r not in aggregates]
    # pad the first payload with extra plain 2-hop items so the multi_hop
    # quota fills with only 4 aggregates
    fillers = []
    for i, template in enumerate(plain_multi[:2]):
        fillers.append(
            {
                "category": "multi_hop",
                "question": f"Filler chain question number {i} goes where exactly?",
                "cypher": template["cypher"],
            }
        )
    first = [r for r in base if r not in aggregates[:1]] + fillers
    second = [aggregates[0]]
    gateway = make_gateway(qa_script([first, second]))
    items = generate_from_cypher(statements, graph, gateway)
    report = validate_dataset(items)
    assert report.counts["multi_hop"] == 15
    assert report.aggregate_multihop_count >= 5


def test_category_shape_enforced():
    graph, statements = toy_graph()
    base = [
        {"category": c, "question": q, "cypher": s} for c, q, s in toydata.CYPHER_QA
    ]
    # single-hop query mislabeled as simple must be rejected
    mislabeled = {
        "category": "simple",
        "question": "Mislabeled hop question?",
        "cypher": 'MATCH (a:ThreatActor {name: "APT37"})-[:uses]->(m:Malware) RETURN m.name AS n',
    }
    first = [r for r in base if r["question"] != base[0]["question"]] + [mislabeled]
    second = [base[0]]
    gateway = make_gateway(qa_script([first, second]))
    items = generate_from_cypher(statements, graph, gateway)
    assert all(i.question != "Mislabeled hop question?" for i in items)


# -- generate_guided ---------------------------------------------------------------

def guided_script(payloads):
    return [
        {"role": "GUIDED_QA", "match": "*", "responses": [json.dumps(p) for p in payloads]}
    ]


def test_guided_generation_full_quota():
    graph, _ = toy_graph()
    gateway = make_gateway(guided_script([toydata.GUIDED_QA]))
    items = generate_guided(toydata.GUIDED_DOC, graph, gateway)
    assert len(items) == 16
    assert sum(1 for i in items if i.category == "guided") == 16
    assert all(i.provenance == "guided" for i in items)


def test_guided_rejects_unknown_entities():
    graph, _ = toy_graph()
    bogus = {"question": "What about the Quasar satellite array?", "answer": "Nothing relevant here at all.", "multi_hop": True}
    payloads = [[bogus] + toydata.GUIDED_QA]
    gateway = make_gateway(guided_script(payloads))
    items = generate_guided(toydata.GUIDED_DOC, graph, gateway)
    assert all("Quasar" not in i.question for i in items)
    assert len(items) == 16


def test_guided_rejects_near_trivial_lookup():
    graph, _ = toy_graph()
    trivial = {
        "question": "What is the summary recorded for RokRAT in one phrase?",
        "answer": "remote access trojan",  # exactly a node's summary property
        "multi_hop": False,
    }
    payloads = [[trivial] + toydata.GUIDED_QA]
    gateway = make_gateway(guided_script(payloads))
    items = generate_guided(toydata.GUIDED_DOC, graph, gateway)
    assert all(i.gold_answer != "remote access trojan" for i in items)


def test_guided_multi_hop_flag_quota():
    graph, _ = toy_graph()
    gateway = make_gateway(guided_script([toydata.GUIDED_QA]))
    items = generate_guided(toydata.GUIDED_DOC, graph, gateway)
    # builder marks 8 as multi-hop; quota bookkeeping keeps 8 + 8
    assert len(items) == 16


def test_guided_underflow():
    graph, _ = toy_graph()
    gateway = make_gateway(guided_script([[], [], [], []]))
    with pytest.raises(GenerationUnderflow):
        generate_guided(toydata.GUIDED_DOC, graph, gateway)


# -- dataset file io ---------------------------------------------------------------

def test_dataset_round_trip(tmp_path):
    items = [
        item("Question one about LockBit?", "a b", "simple"),
        item("How many things total exist?", "3", "multi_hop", aggregate=True),
    ]
    path = tmp_path / "dataset.jsonl"
    save_dataset(items, str(path))
    first_line = json.loads(path.read_text().splitlines()[0])
    assert first_line == {"format": "ctirag-qa/1"}
    loaded = load_dataset(str(path))
    assert [i.to_dict() for i in loaded] == [i.to_dict() for i in items]


def test_dataset_rejects_unknown_format(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"format": "other/9"}\n')
    with pytest.raises(ValueError):
        load_dataset(str(path))
