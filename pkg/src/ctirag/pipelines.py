"""The four retrieval architectures.

RAG   — top-3 chunk retrieval, one answer completion.
GRAG  — guardrail, few-shot text-to-Cypher with a generate/validate/execute/
        repair loop (syntax, schema, runtime and empty-result failures all
        retry) capped at 25 iterations; exhaustion yields an empty answer.
AGRAG — critique-and-refine over GRAG's final query, capped at 6 iterations;
        may conclude the graph cannot answer and refuse explicitly.
HRAG  — zero-shot graph branch (rule-based fixes, then one LLM repair; an
        empty result falls through instead of retrying) plus hybrid text
        branch, merged by a synthesis prompt that puts graph results first.
        Both branches empty means an explicit refusal.

Every pipeline observes a wall-clock budget and returns a full trace.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .cypher import (
    CypherRuntimeError,
    ResultTable,
    empty_result,
    execute,
    render_table,
)
from .cypher.validate import validate_text
from .gateway import Gateway, JsonParseError, PromptRole, ProviderError, schema_description
from .graph_store import Ontology, PropertyGraph
from .retrieval import RetrievalHit, SearchDoc, VectorIndex, cosine, hybrid_retrieve
from .scoring import REFUSAL_PHRASE, is_refusal_text

GRAG_MAX_ITERS = 25
AGRAG_MAX_ITERS = 6
DEFAULT_WALL_BUDGET_S = 120.0


@dataclass
class PipelineConfig:
    chunk_k: int = 3
    searchdoc_k: int = 3
    fewshot_k: int = 3
    grag_max_iters: int = GRAG_MAX_ITERS
    agrag_max_iters: int = AGRAG_MAX_ITERS
    wall_budget_s: float = DEFAULT_WALL_BUDGET_S
    hybrid_alpha: float = 0.5
    hrag_graph_branch: bool = True
    hrag_parallel: bool = False


@dataclass
class FewshotPair:
    question: str
    cypher: str
    embedding: Optional[np.ndarray] = None


@dataclass
class PipelineAnswer:
    system: str
    answer_text: str = ""
    is_refusal: bool = False
    latency_s: float = 0.0
    iterations: int = 0
    cypher_trace: List[Dict[str, Any]] = field(default_factory=list)
    retrieved_context: Dict[str, Any] = field(default_factory=dict)
    llm_calls: int = 0
    notes: List[str] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return not self.answer_text.strip() and not self.is_refusal

    def to_dict(self) -> Dict[str, Any]:
        return {
            "system": self.system,
            "answer_text": self.answer_text,
            "is_refusal": self.is_refusal,
            "latency_s": self.latency_s,
            "iterations": self.iterations,
            "cypher_trace": self.cypher_trace,
            "retrieved_context": self.retrieved_context,
            "llm_calls": self.llm_calls,
            "notes": list(self.notes),
        }


def extract_cypher(text: str) -> str:
    """Peel code fences / language tags off an LLM reply; keep the query."""
    cleaned = (text or "").strip()
    if cleaned.startswith("```"):
        cleaned = re.sub(r"^```[a-zA-Z]*\n?", "", cleaned)
        cleaned = re.sub(r"\n?```$", "", cleaned)
    cleaned = cleaned.strip()
    if cleaned.lower().startswith("cypher:"):
        cleaned = cleaned[len("cypher:"):].strip()
    return cleaned.rstrip(";").strip()


def _refusal(system: str, note: str = "") -> PipelineAnswer:
    answer = PipelineAnswer(system=system, answer_text=REFUSAL_PHRASE, is_refusal=True)
    if note:
        answer.notes.append(note)
    return answer


def select_fewshots(question_embedding: np.ndarray, pairs: Sequence[FewshotPair], k: int = 3) -> List[FewshotPair]:
    """k nearest (question, cypher) pairs by embedding cosine; stable ties."""
    scored = []
    for i, pair in enumerate(pairs):
        score = cosine(question_embedding, pair.embedding) if pair.embedding is not None else 0.0
        scored.append((-score, i))
    scored.sort()
    return [pairs[i] for _, i in scored[:k]]


def render_fewshots(pairs: Sequence[FewshotPair]) -> str:
    if not pairs:
        return "(none)"
    blocks = [f"Q: {p.question}\nCypher: {p.cypher}" for p in pairs]
    return "\n\n".join(blocks)


# -- RAG --------------------------------------------------------------------------

def run_rag(
    question: str,
    chunk_index: VectorIndex,
    gateway: Gateway,
    config: PipelineConfig = PipelineConfig(),
) -> PipelineAnswer:
    answer = PipelineAnswer(system="RAG")
    started = gateway.now()
    try:
        hits: List[RetrievalHit] = []
        if len(chunk_index) > 0:
            query_emb = gateway.embed_one(question)
            hits = chunk_index.top_k(query_emb, k=config.chunk_k)
        context = "\n\n".join(hit.ref.text for hit in hits)
        answer.retrieved_context = {
            "chunks": [
                {"doc_id": h.ref.doc_id, "start_offset": h.ref.start_offset, "score": h.score}
                for h in hits
            ]
        }
        answer.llm_calls += 1
        response = gateway.ask(PromptRole.ANSWER_RAG, question=question, context=context or "(no context)")
        answer.answer_text = response.text.strip()
        answer.is_refusal = is_refusal_text(answer.answer_text)
    except ProviderError as err:
        answer.notes.append(f"provider error: {err}")
    answer.iterations = 1
    answer.latency_s = gateway.now() - started
    return answer


# -- GRAG -------------------------------------------------------------------------

def run_grag(
    question: str,
    graph: PropertyGraph,
    fewshots: Sequence[FewshotPair],
    gateway: Gateway,
    config: PipelineConfig = PipelineConfig(),
) -> PipelineAnswer:
    answer = PipelineAnswer(system="GRAG")
    started = gateway.now()
    if gateway.guardrail_check(question) == "REJECT":
        refused = _refusal("GRAG", "guardrail rejected the question")
        refused.latency_s = gateway.now() - started
        return refused

    ontology = graph.ontology
    schema = schema_description(ontology)
    try:
        question_emb = gateway.embed_one(question)
        examples = render_fewshots(select_fewshots(question_emb, fewshots, config.fewshot_k))
    except ProviderError as err:
        answer.notes.append(f"provider error: {err}")
        answer.latency_s = gateway.now() - started
        return answer

    feedback = ""
    table: Optional[ResultTable] = None
    try:
        while answer.iterations < config.grag_max_iters:
            if gateway.now() - started > config.wall_budget_s:
                answer.notes.append("budget_exceeded")
                break
            answer.iterations += 1
            answer.llm_calls += 1
            response = gateway.ask(
                PromptRole.GEN_CYPHER,
                question=question,
                schema=schema,
                fewshots=examples,
                feedback=feedback,
            )
            query = extract_cypher(response.text)
            ast, report = validate_text(query, ontology, "READ")
            entry: Dict[str, Any] = {"query": query, "validation": report.to_dict(), "rows": None, "error": None}
            if not report.passed:
                entry["error"] = report.summary()
            else:
                try:
                    table = execute(ast, graph)
                    entry["rows"] = table.row_count
                    if empty_result(table):
                        entry["error"] = "query returned an empty result"
                        table = None
                except CypherRuntimeError as err:
                    entry["error"] = str(err)
            answer.cypher_trace.append(entry)
            if entry["error"] is None:
                break
            feedback = f"Previous query failed ({entry['error']}).\nPrevious query: {query}\n"
            table = None
        else:
            answer.notes.append("LoopExhausted")

        if table is not None:
            answer.llm_calls += 1
            final = gateway.ask(
                PromptRole.ANSWER_RAG,
                question=question,
                context=render_table(table),
            )
            answer.answer_text = final.text.strip()
            answer.is_refusal = is_refusal_text(answer.answer_text)
            answer.retrieved_context = {"result_table": {"columns": table.columns, "row_count": table.row_count}}
    except ProviderError as err:
        answer.notes.append(f"provider error: {err}")

    answer.latency_s = gateway.now() - started
    return answer


# -- AGRAG ------------------------------------------------------------------------

def run_agrag(
    question: str,
    graph: PropertyGraph,
    grag_output: PipelineAnswer,
    gateway: Gateway,
    config: PipelineConfig = PipelineConfig(),
) -> PipelineAnswer:
    answer = PipelineAnswer(system="AGRAG")
    started = gateway.now()
    if grag_output.is_refusal and not grag_output.cypher_trace:
        refused = _refusal("AGRAG", "guardrail rejected the question")
        refused.latency_s = gateway.now() - started
        return refused

    ontology = graph.ontology
    schema = schema_description(ontology)
    grag_succeeded = bool(grag_output.answer_text.strip()) and not grag_output.is_refusal
    current_query = grag_output.cypher_trace[-1]["query"] if grag_output.cypher_trace else "(no query produced)"
    if grag_output.cypher_trace and grag_output.cypher_trace[-1]["error"] is None:
        current_results = f"{grag_output.cypher_trace[-1]['rows']} rows"
    elif grag_output.cypher_trace:
        current_results = f"error: {grag_output.cypher_trace[-1]['error']}"
    else:
        current_results = "no execution"

    feedback = ""
    table: Optional[ResultTable] = None
    try:
        while answer.iterations < config.agrag_max_iters:
            if gateway.now() - started > config.wall_budget_s:
                answer.notes.append("budget_exceeded")
                break
            answer.iterations += 1
            answer.llm_calls += 1
            critique = gateway.ask_json(
                PromptRole.CRITIQUE_CYPHER,
                question=question,
                schema=schema,
                cypher=current_query,
                results=current_results,
                feedback=feedback,
            )
            if not isinstance(critique, dict):
                answer.notes.append("critique reply was not a JSON object")
                break
            verdict = str(critique.get("verdict", "")).lower()
            if verdict == "approve":
                if grag_succeeded:
                    answer.answer_text = grag_output.answer_text
                    answer.is_refusal = grag_output.is_refusal
                    answer.retrieved_context = dict(grag_output.retrieved_context)
                else:
                    answer.notes.append("critique approved a failing query")
                break
            if verdict == "cannot_answer":
                answer.answer_text = REFUSAL_PHRASE
                answer.is_refusal = True
                answer.notes.append("critique concluded the graph cannot answer")
                break
            if verdict != "refine":
                answer.notes.append(f"unknown critique verdict {verdict!r}")
                break

            refined = extract_cypher(str(critique.get("cypher", "")))
            ast, report = validate_text(refined, ontology, "READ")
            entry: Dict[str, Any] = {"query": refined, "validation": report.to_dict(), "rows": None, "error": None}
            if not report.passed:
                entry["error"] = report.summary()
            else:
                try:
                    table = execute(ast, graph)
                    entry["rows"] = table.row_count
                    if empty_result(table):
                        entry["error"] = "query returned an empty result"
                        table = None
                except CypherRuntimeError as err:
                    entry["error"] = str(err)
            answer.cypher_trace.append(entry)
            if entry["error"] is None:
                break
            current_query = refined
            current_results = f"error: {entry['error']}"
            feedback = f"The refined query failed ({entry['error']}). Refine again.\n"
            table = None
        else:
            answer.notes.append("LoopExhausted")

        if table is not None:
            answer.llm_calls += 1
            final = gateway.ask(PromptRole.ANSWER_RAG, question=question, context=render_table(table))
            answer.answer_text = final.text.strip()
            answer.is_refusal = is_refusal_text(answer.answer_text)
            answer.retrieved_context = {"result_table": {"columns": table.columns, "row_count": table.row_count}}
    except (ProviderError, JsonParseError) as err:
        answer.notes.append(f"provider error: {err}")

    answer.latency_s = gateway.now() - started
    return answer


# -- HRAG -------------------------------------------------------------------------

def rule_based_fix(query: str, ontology: Ontology) -> str:
    """Deterministic repairs: canonical label casing, missing AS aliases,
    and a LIMIT guard. Applied before spending the one LLM repair attempt."""
    fixed = query

    def fix_label(match: re.Match) -> str:
        word = match.group(1)
        canonical = ontology.canonical_entity(word) or ontology.canonical_relationship(word)
        return f":{canonical}" if canonical else match.group(0)

    fixed = re.sub(r":\s*([A-Za-z_][A-Za-z0-9_]*)", fix_label, fixed)

    match = re.search(r"\bRETURN\b(\s+DISTINCT\b)?(.*?)(\bORDER\s+BY\b|\bLIMIT\b|$)", fixed, re.IGNORECASE | re.DOTALL)
    if match:
        body = match.group(2)
        items = _split_top_level(body)
        rewritten = []
        changed = False
        for i, item in enumerate(items):
            text = item.strip()
            if text and not re.search(r"\bAS\s+\w+\s*$", text, re.IGNORECASE):
                alias = re.sub(r"\W+", "_", text).strip("_").lower() or f"col{i}"
                text = f"{text} AS {alias}"
                changed = True
            rewritten.append(text)
        if changed:
            fixed = fixed[: match.start(2)] + " " + ", ".join(rewritten) + " " + fixed[match.end(2):]

    if not re.search(r"\bLIMIT\b", fixed, re.IGNORECASE):
        fixed = fixed.rstrip() + " LIMIT 25"
    return fixed


def _split_top_level(text: str) -> List[str]:
    items, depth, current = [], 0, []
    for ch in text:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        if ch == "," and depth == 0:
            items.append("".join(current))
            current = []
        else:
            current.append(ch)
    if current:
        items.append("".join(current))
    return items


def _graph_branch(
    question: str,
    graph: PropertyGraph,
    gateway: Gateway,
    config: PipelineConfig,
    answer: PipelineAnswer,
) -> Optional[ResultTable]:
    """Zero-shot query, rule-based fixes, then at most one LLM repair.
    Returns a non-empty ResultTable or None; empty results do not retry."""
    ontology = graph.ontology
    schema = schema_description(ontology)

    def attempt(query: str) -> Optional[ResultTable]:
        ast, report = validate_text(query, ontology, "READ")
        entry: Dict[str, Any] = {"query": query, "validation": report.to_dict(), "rows": None, "error": None}
        result = None
        if not report.passed:
            entry["error"] = report.summary()
        else:
            try:
                result = execute(ast, graph)
                entry["rows"] = result.row_count
            except CypherRuntimeError as err:
                entry["error"] = str(err)
        answer.cypher_trace.append(entry)
        return result

    answer.llm_calls += 1
    response = gateway.ask(
        PromptRole.GEN_CYPHER, question=question, schema=schema, fewshots="(none)", feedback=""
    )
    query = extract_cypher(response.text)
    table = attempt(query)
    if table is None:
        fixed = rule_based_fix(query, ontology)
        if fixed != query:
            table = attempt(fixed)
    if table is None:
        last_error = answer.cypher_trace[-1]["error"] or "query failed"
        answer.llm_calls += 1
        repair = gateway.ask(
            PromptRole.GEN_CYPHER,
            question=question,
            schema=schema,
            fewshots="(none)",
            feedback=f"Previous query failed ({last_error}).\nPrevious query: {query}\n",
        )
        table = attempt(extract_cypher(repair.text))
    if table is not None and empty_result(table):
        return None
    return table


def run_hrag(
    question: str,
    graph: PropertyGraph,
    searchdocs: Sequence[SearchDoc],
    gateway: Gateway,
    config: PipelineConfig = PipelineConfig(),
) -> PipelineAnswer:
    answer = PipelineAnswer(system="HRAG")
    started = gateway.now()
    table: Optional[ResultTable] = None
    hits: List[RetrievalHit] = []
    try:
        def text_branch() -> List[RetrievalHit]:
            if not searchdocs:
                return []
            query_emb = gateway.embed_one(question)
            found = hybrid_retrieve(
                question, query_emb, searchdocs, k=config.searchdoc_k, alpha=config.hybrid_alpha
            )
            # a hit with zero keyword overlap and non-positive cosine is noise,
            # not evidence; dropping those is what lets HRAG refuse outright
            return [hit for hit in found if hit.has_evidence]

        if config.hrag_parallel and config.hrag_graph_branch:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=2) as pool:
                graph_future = pool.submit(_graph_branch, question, graph, gateway, config, answer)
                text_future = pool.submit(text_branch)
                table = graph_future.result()
                hits = text_future.result()
        else:
            if config.hrag_graph_branch:
                table = _graph_branch(question, graph, gateway, config, answer)
            hits = text_branch()

        answer.retrieved_context = {
            "graph_rows": None if table is None else table.row_count,
            "text_hits": [
                {"element_ref": h.ref.element_ref, "score": h.score} for h in hits
            ],
        }

        if table is None and not hits:
            answer.answer_text = REFUSAL_PHRASE
            answer.is_refusal = True
            answer.notes.append("both branches empty")
        else:
            graph_results = render_table(table) if table is not None else "(none)"
            snippets = "\n".join(hit.ref.text for hit in hits) if hits else "(none)"
            answer.llm_calls += 1
            synthesis = gateway.ask(
                PromptRole.SYNTHESIZE_HYBRID,
                question=question,
                graph_results=graph_results,
                text_snippets=snippets,
            )
            answer.answer_text = synthesis.text.strip()
            answer.is_refusal = is_refusal_text(answer.answer_text)
    except ProviderError as err:
        answer.notes.append(f"provider error: {err}")

    answer.iterations = max(1, len(answer.cypher_trace))
    answer.latency_s = gateway.now() - started
    return answer
