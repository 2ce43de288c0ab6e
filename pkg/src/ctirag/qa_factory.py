"""Per-run evaluation-set generation and dataset-quality validation.

Answerable items are generated from the ingested Cypher and verified by
executing their derived read query against the graph: the rendered result
becomes the gold answer, so answerability is decided by the shared knowledge
base rather than by the generator. Unanswerable probes must come back empty.
Guided items are grounded in an external document but must still reference
at least one entity present in the graph.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .cypher import CypherRuntimeError, empty_result, execute, render_value
from .cypher.ast import Aggregate, MatchClause, ReturnClause
from .cypher.validate import validate_text
from .gateway import Gateway, PromptRole, schema_description
from .graph_store import PropertyGraph

DATASET_FORMAT = "ctirag-qa/1"

CATEGORIES = ("simple", "single_hop", "multi_hop", "guided", "unanswerable")
FACTOID_CATEGORIES = ("simple", "single_hop", "multi_hop", "unanswerable")
FACTOID_MAX_WORDS = 12

# Per-run composition: 15/15/15 answerable + 5 unanswerable from Cypher,
# 16 guided (8 of them multi-hop), 66 total.
CYPHER_QUOTAS = {"simple": 15, "single_hop": 15, "multi_hop": 15, "unanswerable": 5}
GUIDED_TOTAL = 16
GUIDED_MULTI_HOP = 8
MIN_AGGREGATE_MULTI_HOP = 5
REGENERATION_BUDGET = 3


class GenerationUnderflow(RuntimeError):
    pass


@dataclass
class QAItem:
    id: str
    question: str
    gold_answer: str
    category: str
    provenance: str  # the source read query, or "guided"
    is_aggregate: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "question": self.question,
            "gold_answer": self.gold_answer,
            "category": self.category,
            "provenance": self.provenance,
            "is_aggregate": self.is_aggregate,
        }

    @classmethod
    def from_dict(cls, rec: Dict[str, Any]) -> "QAItem":
        return cls(
            id=rec["id"],
            question=rec["question"],
            gold_answer=rec["gold_answer"],
            category=rec["category"],
            provenance=rec["provenance"],
            is_aggregate=bool(rec.get("is_aggregate", False)),
        )


@dataclass
class DatasetReport:
    counts: Dict[str, int]
    prefix_diversity: float
    factoid_within_12w: float
    answer_words_mean: Dict[str, float]
    answer_words_median: Dict[str, float]
    aggregate_multihop_count: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "counts": dict(self.counts),
            "prefix_diversity": self.prefix_diversity,
            "factoid_within_12w": self.factoid_within_12w,
            "answer_words_mean": dict(self.answer_words_mean),
            "answer_words_median": dict(self.answer_words_median),
            "aggregate_multihop_count": self.aggregate_multihop_count,
        }


# -- gold rendering ---------------------------------------------------------------

def render_gold(table) -> str:
    """Scalars joined by ', ' in output order; counts come out as digits."""
    parts: List[str] = []
    for row in table.rows:
        for cell in row:
            if cell is None:
                continue
            rendered = render_value(cell)
            if rendered:
                parts.append(rendered)
    return ", ".join(parts)


def _hop_count(ast) -> int:
    hops = 0
    for clause in ast.clauses:
        if isinstance(clause, MatchClause):
            for pattern in clause.patterns:
                for edge in pattern.edges:
                    hops += edge.max_hops
    return hops


def _has_aggregate(ast) -> bool:
    for clause in ast.clauses:
        if isinstance(clause, ReturnClause):
            return any(isinstance(item.expr, Aggregate) for item in clause.items)
    return False


def _category_matches_shape(category: str, hops: int) -> bool:
    if category == "simple":
        return hops == 0
    if category == "single_hop":
        return hops == 1
    if category in ("multi_hop", "unanswerable"):
        return True
    return False


# -- cypher-derived generation -------------------------------------------------------

def _verify_item(
    raw: Dict[str, Any],
    graph: PropertyGraph,
    index: int,
) -> Tuple[Optional[QAItem], Optional[str]]:
    """Validate one generated record; returns (item, None) or (None, reason)."""
    category = str(raw.get("category", "")).strip().lower()
    question = str(raw.get("question", "")).strip()
    query = str(raw.get("cypher", "")).strip()
    if category not in CYPHER_QUOTAS:
        return None, f"unknown category {category!r}"
    if not question or not query:
        return None, "missing question or cypher"

    ast, report = validate_text(query, graph.ontology, "READ")
    if category == "unanswerable":
        # The probe may reference out-of-schema names; it must simply not
        # produce rows against this graph.
        if report.syntactic_ok and report.readonly_ok and report.schema_ok:
            try:
                table = execute(ast, graph)
            except CypherRuntimeError:
                table = None
            if table is not None and not empty_result(table):
                return None, "unanswerable probe returned rows"
        elif not report.syntactic_ok or not report.readonly_ok:
            return None, f"probe rejected: {report.summary()}"
        return QAItem(
            id=f"q{index}",
            question=question,
            gold_answer="",
            category=category,
            provenance=query,
        ), None

    if not report.passed:
        return None, f"query rejected: {report.summary()}"
    hops = _hop_count(ast)
    if not _category_matches_shape(category, hops):
        return None, f"{category} item has {hops} hops"
    if category == "multi_hop" and hops < 2 and not _has_aggregate(ast):
        return None, "multi_hop item is neither >=2 hops nor aggregate"
    try:
        table = execute(ast, graph)
    except CypherRuntimeError as err:
        return None, f"execution failed: {err}"
    if empty_result(table):
        return None, "gold query returned no rows"
    gold = render_gold(table)
    if not gold:
        return None, "gold answer rendered empty"
    if len(gold.split()) > FACTOID_MAX_WORDS:
        return None, f"gold answer longer than {FACTOID_MAX_WORDS} words"
    return QAItem(
        id=f"q{index}",
        question=question,
        gold_answer=gold,
        category=category,
        provenance=query,
        is_aggregate=_has_aggregate(ast),
    ), None


def generate_from_cypher(
    cypher_statements: Sequence[str],
    graph: PropertyGraph,
    gateway: Gateway,
) -> List[QAItem]:
    """15 simple / 15 single-hop / 15 multi-hop verified items plus 5
    verified-unanswerable ones, regenerating per-category deficits up to
    3 times before giving up."""
    schema = schema_description(graph.ontology)
    statements = "\n".join(cypher_statements)
    accepted: Dict[str, List[QAItem]] = {cat: [] for cat in CYPHER_QUOTAS}
    seen_questions = set()
    next_index = 1

    def needs() -> Dict[str, int]:
        deficit = {}
        for category, quota in CYPHER_QUOTAS.items():
            missing = quota - len(accepted[category])
            if category == "multi_hop":
                aggregates = sum(1 for item in accepted[category] if item.is_aggregate)
                if aggregates < MIN_AGGREGATE_MULTI_HOP and missing <= 0:
                    missing = MIN_AGGREGATE_MULTI_HOP - aggregates
            if missing > 0:
                deficit[category] = missing
        return deficit

    def ingest(records: Any) -> None:
        nonlocal next_index
        if not isinstance(records, list):
            return
        for raw in records:
            if not isinstance(raw, dict):
                continue
            item, _reason = _verify_item(raw, graph, next_index)
            if item is None:
                continue
            if item.question.lower() in seen_questions:
                continue
            bucket = accepted[item.category]
            if len(bucket) >= CYPHER_QUOTAS[item.category]:
                if not (item.category == "multi_hop" and item.is_aggregate):
                    continue
                non_aggregate = next((x for x in bucket if not x.is_aggregate), None)
                aggregates = sum(1 for x in bucket if x.is_aggregate)
                if aggregates >= MIN_AGGREGATE_MULTI_HOP or non_aggregate is None:
                    continue
                bucket.remove(non_aggregate)
                seen_questions.discard(non_aggregate.question.lower())
            seen_questions.add(item.question.lower())
            item.id = f"q{next_index}"
            next_index += 1
            bucket.append(item)

    spec_line = ", ".join(f"{count} {category}" for category, count in CYPHER_QUOTAS.items())
    ingest(gateway.ask_json(PromptRole.QA_FROM_CYPHER, schema=schema, statements=statements, needs=spec_line))

    attempts = 0
    while needs() and attempts < REGENERATION_BUDGET:
        attempts += 1
        deficit_line = ", ".join(f"{count} {category}" for category, count in needs().items())
        ingest(
            gateway.ask_json(
                PromptRole.QA_FROM_CYPHER, schema=schema, statements=statements, needs=deficit_line
            )
        )
    if needs():
        raise GenerationUnderflow(f"still missing after {REGENERATION_BUDGET} re-asks: {needs()}")

    items: List[QAItem] = []
    for category in ("simple", "single_hop", "multi_hop", "unanswerable"):
        items.extend(accepted[category])
    return items


# -- guided generation ------------------------------------------------------------

def _is_near_trivial(gold_answer: str, graph: PropertyGraph) -> bool:
    """Stand-in triviality filter: the answer is exactly one node's stored
    name or summary, i.e. a single property lookup."""
    answer = gold_answer.strip().lower()
    if not answer:
        return False
    for node in graph.nodes:
        if answer == node.name.strip().lower():
            return True
        summary = str(node.properties.get("summary", "")).strip().lower()
        if summary and answer == summary:
            return True
    return False


def _mentions_graph_entity(question: str, graph: PropertyGraph) -> bool:
    text = question.lower()
    return any(node.name and node.name.lower() in text for node in graph.nodes)


def generate_guided(
    external_doc_text: str,
    graph: PropertyGraph,
    gateway: Gateway,
) -> List[QAItem]:
    """16 analyst-style items (8 multi-hop), each referencing a graph entity."""
    schema = schema_description(graph.ontology)
    multi: List[QAItem] = []
    other: List[QAItem] = []
    seen = set()
    counter = 1

    def ingest(records: Any) -> None:
        nonlocal counter
        if not isinstance(records, list):
            return
        for raw in records:
            if not isinstance(raw, dict):
                continue
            question = str(raw.get("question", "")).strip()
            answer = str(raw.get("answer", "")).strip()
            is_multi = bool(raw.get("multi_hop", False))
            if not question or not answer:
                continue
            if question.lower() in seen:
                continue
            if not _mentions_graph_entity(question, graph):
                continue
            if _is_near_trivial(answer, graph):
                continue
            bucket = multi if is_multi else other
            quota = GUIDED_MULTI_HOP if is_multi else GUIDED_TOTAL - GUIDED_MULTI_HOP
            if len(bucket) >= quota:
                continue
            seen.add(question.lower())
            bucket.append(
                QAItem(
                    id=f"g{counter}",
                    question=question,
                    gold_answer=answer,
                    category="guided",
                    provenance="guided",
                    is_aggregate=False,
                )
            )
            counter += 1

    def needs_line() -> str:
        return (
            f"{GUIDED_MULTI_HOP - len(multi)} multi-hop and "
            f"{GUIDED_TOTAL - GUIDED_MULTI_HOP - len(other)} other"
        )

    ingest(
        gateway.ask_json(
            PromptRole.GUIDED_QA, schema=schema, document=external_doc_text, needs=needs_line()
        )
    )
    attempts = 0
    while (len(multi) < GUIDED_MULTI_HOP or len(other) < GUIDED_TOTAL - GUIDED_MULTI_HOP) and attempts < REGENERATION_BUDGET:
        attempts += 1
        ingest(
            gateway.ask_json(
                PromptRole.GUIDED_QA, schema=schema, document=external_doc_text, needs=needs_line()
            )
        )
    if len(multi) < GUIDED_MULTI_HOP or len(other) < GUIDED_TOTAL - GUIDED_MULTI_HOP:
        raise GenerationUnderflow(
            f"guided generation got {len(multi)} multi-hop / {len(other)} other"
        )
    return multi + other


# -- dataset validation -----------------------------------------------------------

def validate_dataset(items: Sequence[QAItem]) -> DatasetReport:
    """Quality metrics; safe on empty input (all-zero report)."""
    counts = {category: 0 for category in CATEGORIES}
    for item in items:
        counts.setdefault(item.category, 0)
        counts[item.category] += 1

    if items:
        prefixes = set()
        for item in items:
            tokens = item.question.lower().split()
            prefixes.add(tuple(tokens[:4]))
        prefix_diversity = len(prefixes) / len(items)
    else:
        prefix_diversity = 0.0

    factoid = [item for item in items if item.category in FACTOID_CATEGORIES]
    if factoid:
        within = sum(1 for item in factoid if len(item.gold_answer.split()) <= FACTOID_MAX_WORDS)
        factoid_within_12w = within / len(factoid)
    else:
        factoid_within_12w = 0.0

    means: Dict[str, float] = {}
    medians: Dict[str, float] = {}
    for category in CATEGORIES:
        lengths = [len(item.gold_answer.split()) for item in items if item.category == category]
        if lengths:
            means[category] = sum(lengths) / len(lengths)
            medians[category] = float(statistics.median(lengths))
        else:
            means[category] = 0.0
            medians[category] = 0.0

    aggregate_multihop = sum(1 for item in items if item.category == "multi_hop" and item.is_aggregate)
    return DatasetReport(
        counts=counts,
        prefix_diversity=prefix_diversity,
        factoid_within_12w=factoid_within_12w,
        answer_words_mean=means,
        answer_words_median=medians,
        aggregate_multihop_count=aggregate_multihop,
    )


# -- dataset file io ---------------------------------------------------------------

def save_dataset(items: Sequence[QAItem], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": DATASET_FORMAT}, sort_keys=True) + "\n")
        for item in items:
            fh.write(json.dumps(item.to_dict(), sort_keys=True) + "\n")


def load_dataset(path: str) -> List[QAItem]:
    items: List[QAItem] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != DATASET_FORMAT:
            raise ValueError(f"unsupported dataset format {header.get('format')!r}")
        for line in fh:
            line = line.strip()
            if line:
                items.append(QAItem.from_dict(json.loads(line)))
    return items
