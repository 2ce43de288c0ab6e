"""Experiment orchestration: the 11-step per-run workflow and the staged
file formats the CLI subcommands share.

Per run: sample reports, reset the embedded stores, ingest via
text-to-Cypher with execute-or-repair retry, generate few-shot pairs and
the 66-question dataset, build the chunk and SearchDoc indexes, answer with
all four systems, judge and score, then aggregate an analysis report across
runs. Every artifact is written atomically so a failed run cannot corrupt
completed ones.
"""

from __future__ import annotations

import json
import logging
import os
import random
from dataclasses import dataclass, fields as dataclass_fields
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .cypher import execute
from .cypher.validate import validate_text
from .gateway import (
    Gateway,
    Guardrail,
    HttpProvider,
    PromptRole,
    ProviderError,
    ScriptedMockProvider,
    schema_description,
)
from .graph_store import PropertyGraph
from .pipelines import (
    FewshotPair,
    PipelineAnswer,
    PipelineConfig,
    run_agrag,
    run_grag,
    run_hrag,
    run_rag,
)
from .qa_factory import (
    QAItem,
    generate_from_cypher,
    generate_guided,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from .reporting import build_report, dump_report, seed_for
from .retrieval import VectorIndex, build_searchdocs, chunk_text
from .scoring import judge, score_answer

logger = logging.getLogger(__name__)

SYSTEMS = ("RAG", "GRAG", "AGRAG", "HRAG")
INGEST_MAX_RETRIES = 25  # reuses the GRAG repair cap; configurable below


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    corpus_dir: str
    out_dir: str
    guided_doc: Optional[str] = None
    reports_per_run: int = 15
    runs: int = 10
    seed: int = 0
    provider: str = "mock"  # "mock" | "http"
    mock_script: Optional[str] = None
    model: str = "mock"
    base_url_env: str = "CTIRAG_LLM_BASE_URL"
    api_key_env: str = "CTIRAG_LLM_API_KEY"
    grag_max_iters: int = 25
    agrag_max_iters: int = 6
    ingest_max_retries: int = INGEST_MAX_RETRIES
    chunk_size: int = 200
    chunk_overlap: int = 20
    chunk_k: int = 3
    searchdoc_k: int = 3
    wall_budget_s: float = 120.0
    bootstrap_resamples: int = 10_000
    fewshot_count: int = 6
    cost_table: Optional[str] = None
    # runs execute sequentially by default; each run owns its provider and
    # artifacts, so parallel execution is safe when the backend is stateless
    parallel_runs: bool = False

    def validate(self) -> None:
        if self.reports_per_run < 1:
            raise ConfigError("reports_per_run must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.grag_max_iters < 1 or self.agrag_max_iters < 1 or self.ingest_max_retries < 1:
            raise ConfigError("iteration caps must be >= 1")
        if not os.path.isdir(self.corpus_dir):
            raise ConfigError(f"corpus directory not found: {self.corpus_dir}")
        if self.provider not in ("mock", "http"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.provider == "mock":
            if not self.mock_script or not os.path.isfile(self.mock_script):
                raise ConfigError("mock provider needs an existing --mock-script file")
        if self.guided_doc and not os.path.isfile(self.guided_doc):
            raise ConfigError(f"guided document not found: {self.guided_doc}")
        if self.cost_table and not os.path.isfile(self.cost_table):
            raise ConfigError(f"cost table not found: {self.cost_table}")

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            chunk_k=self.chunk_k,
            searchdoc_k=self.searchdoc_k,
            grag_max_iters=self.grag_max_iters,
            agrag_max_iters=self.agrag_max_iters,
            wall_budget_s=self.wall_budget_s,
        )

    @classmethod
    def from_file(cls, path: str, **overrides) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in dataclass_fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**data)


def make_gateway(config: RunConfig, extra_guard_terms: Sequence[str] = ()) -> Gateway:
    if config.provider == "mock":
        provider = ScriptedMockProvider.from_file(config.mock_script)
    else:
        base_url = os.environ.get(config.base_url_env, "")
        if not base_url:
            raise ConfigError(f"environment variable {config.base_url_env} is not set")
        provider = HttpProvider(
            base_url=base_url,
            api_key=os.environ.get(config.api_key_env, ""),
            model=config.model,
        )
    return Gateway(provider, guardrail=Guardrail(extra_terms=extra_guard_terms), model=config.model)


# -- atomic json io ----------------------------------------------------------------

def write_json_atomic(obj: Any, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_jsonl_atomic(rows: Sequence[Dict[str, Any]], path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_jsonl(path: str) -> List[Dict[str, Any]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


# -- stages --------------------------------------------------------------------------

def list_corpus(corpus_dir: str) -> List[str]:
    names = sorted(
        name
        for name in os.listdir(corpus_dir)
        if name.endswith((".txt", ".md")) and os.path.isfile(os.path.join(corpus_dir, name))
    )
    if not names:
        raise ConfigError(f"no .txt/.md reports found in {corpus_dir}")
    return names


def ingest_corpus(
    report_texts: Dict[str, str],
    gateway: Gateway,
    max_retries: int = INGEST_MAX_RETRIES,
) -> Tuple[PropertyGraph, List[str]]:
    """Text-to-Cypher ingestion with execute-or-repair retry per report."""
    graph = PropertyGraph()
    schema = schema_description(graph.ontology)
    statements: List[str] = []
    for name, text in report_texts.items():
        feedback = ""
        for attempt in range(max_retries):
            response = gateway.ask(
                PromptRole.INGEST_TO_CYPHER, schema=schema, report=text, feedback=feedback
            )
            statement = response.text.strip()
            ast, report = validate_text(statement, graph.ontology, "WRITE")
            if report.passed:
                try:
                    execute(ast, graph)
                    statements.append(statement)
                    break
                except Exception as err:  # CypherRuntimeError or graph errors
                    feedback = f"Execution failed ({err}). Fix the statement.\n"
            else:
                feedback = f"Validation failed ({report.summary()}). Fix the statement.\n"
        else:
            raise ProviderError(f"ingestion for {name!r} failed after {max_retries} attempts")
    graph.freeze()
    return graph, statements


def generate_fewshots(
    statements: Sequence[str],
    graph: PropertyGraph,
    gateway: Gateway,
    count: int = 6,
) -> List[FewshotPair]:
    """LLM-proposed (question, cypher) pairs; only READ-valid ones survive."""
    parsed = gateway.ask_json(
        PromptRole.FEWSHOT_PAIRS,
        schema=schema_description(graph.ontology),
        statements="\n".join(statements),
        count=str(count),
    )
    pairs: List[FewshotPair] = []
    if isinstance(parsed, list):
        for raw in parsed:
            if not isinstance(raw, dict):
                continue
            question = str(raw.get("question", "")).strip()
            cypher = str(raw.get("cypher", "")).strip()
            if not question or not cypher:
                continue
            _, report = validate_text(cypher, graph.ontology, "READ")
            if report.passed:
                pairs.append(FewshotPair(question=question, cypher=cypher))
            else:
                logger.warning("dropping invalid few-shot pair: %s", report.summary())
    if pairs:
        embeddings = gateway.embed([p.question for p in pairs])
        for pair, emb in zip(pairs, embeddings):
            pair.embedding = emb
    return pairs


def build_chunk_index(
    report_texts: Dict[str, str],
    gateway: Gateway,
    chunk_size: int = 200,
    overlap: int = 20,
) -> VectorIndex:
    index = VectorIndex()
    chunks = []
    for name, text in report_texts.items():
        chunks.extend(chunk_text(name, text, chunk_size, overlap))
    if chunks:
        embeddings = gateway.embed([c.text for c in chunks])
        for chunk, emb in zip(chunks, embeddings):
            chunk.embedding = emb
            index.add(chunk, emb)
    return index


def build_searchdoc_index(graph: PropertyGraph, gateway: Gateway):
    docs = build_searchdocs(graph)
    if docs:
        embeddings = gateway.embed([d.text for d in docs])
        for doc, emb in zip(docs, embeddings):
            doc.embedding = emb
    return docs


def answer_item(
    item: QAItem,
    graph: PropertyGraph,
    chunk_index: VectorIndex,
    searchdocs,
    fewshots: Sequence[FewshotPair],
    gateway: Gateway,
    config: PipelineConfig,
    systems: Sequence[str] = SYSTEMS,
) -> Dict[str, PipelineAnswer]:
    """Run the requested systems for one question. AGRAG runs GRAG first when
    GRAG itself is not requested, since it builds on GRAG's trace."""
    answers: Dict[str, PipelineAnswer] = {}
    grag_answer: Optional[PipelineAnswer] = None
    if "RAG" in systems:
        answers["RAG"] = run_rag(item.question, chunk_index, gateway, config)
    if "GRAG" in systems or "AGRAG" in systems:
        grag_answer = run_grag(item.question, graph, fewshots, gateway, config)
        if "GRAG" in systems:
            answers["GRAG"] = grag_answer
    if "AGRAG" in systems:
        answers["AGRAG"] = run_agrag(item.question, graph, grag_answer, gateway, config)
    if "HRAG" in systems:
        answers["HRAG"] = run_hrag(item.question, graph, searchdocs, gateway, config)
    return answers


def score_item(
    item: QAItem,
    answers: Dict[str, PipelineAnswer],
    gateway: Gateway,
    run_id: int,
) -> List[Dict[str, Any]]:
    """Classical metrics plus one judge call across the item's systems."""
    judge_scores = judge(
        item.question,
        item.gold_answer,
        {system: answers[system].answer_text for system in answers},
        gateway,
    )
    rows = []
    for system, answer in answers.items():
        metrics = score_answer(answer.answer_text, item.gold_answer, gateway)
        rows.append(
            {
                "run": run_id,
                "question_id": item.id,
                "system": system,
                "category": item.category,
                "answer_text": answer.answer_text,
                "is_refusal": answer.is_refusal,
                "latency_s": answer.latency_s,
                "metrics": metrics.to_dict(),
                "judge": judge_scores[system].to_dict(),
            }
        )
    return rows


# -- per-run workflow --------------------------------------------------------------

def execute_run(config: RunConfig, run_id: int, run_dir: str) -> Dict[str, Any]:
    os.makedirs(run_dir, exist_ok=True)
    names = list_corpus(config.corpus_dir)
    rng = random.Random(seed_for(config.seed, "run", run_id, "sample"))
    k = min(config.reports_per_run, len(names))
    sampled = rng.sample(names, k)

    report_texts = {}
    for name in sampled:
        with open(os.path.join(config.corpus_dir, name), "r", encoding="utf-8") as fh:
            report_texts[name] = fh.read()

    gateway = make_gateway(config)

    # Steps 2-4: reset stores, ingest with repair retry.
    graph, statements = ingest_corpus(report_texts, gateway, config.ingest_max_retries)
    stats = graph.compute_stats(list(report_texts.values()))
    write_json_atomic(graph.to_snapshot(), os.path.join(run_dir, "graph.json"))
    write_json_atomic(statements, os.path.join(run_dir, "statements.json"))
    write_json_atomic(stats.to_dict(), os.path.join(run_dir, "stats.json"))

    # Grounded entity names sharpen the guardrail for this run.
    gateway.guardrail.extra_terms.extend(
        node.name.lower() for node in graph.nodes if node.name
    )

    # Step 5: few-shot pairs.
    fewshots = generate_fewshots(statements, graph, gateway, config.fewshot_count)
    write_json_atomic(
        [{"question": p.question, "cypher": p.cypher} for p in fewshots],
        os.path.join(run_dir, "fewshots.json"),
    )

    # Steps 6-7: dataset generation.
    items = generate_from_cypher(statements, graph, gateway)
    if config.guided_doc:
        with open(config.guided_doc, "r", encoding="utf-8") as fh:
            guided_text = fh.read()
    else:
        guided_text = "\n\n".join(report_texts.values())
    items.extend(generate_guided(guided_text, graph, gateway))
    save_dataset(items, os.path.join(run_dir, "dataset.jsonl"))
    dataset_report = validate_dataset(items)

    # Step 8: indexes.
    chunk_index = build_chunk_index(report_texts, gateway, config.chunk_size, config.chunk_overlap)
    searchdocs = build_searchdoc_index(graph, gateway)

    # Steps 9-11: answer, judge, score.
    pipeline_config = config.pipeline_config()
    answer_rows: List[Dict[str, Any]] = []
    score_rows: List[Dict[str, Any]] = []
    for item in items:
        answers = answer_item(item, graph, chunk_index, searchdocs, fewshots, gateway, pipeline_config)
        for system in SYSTEMS:
            answer_rows.append(
                {
                    "run": run_id,
                    "question_id": item.id,
                    "category": item.category,
                    "system": system,
                    "answer": answers[system].to_dict(),
                }
            )
        score_rows.extend(score_item(item, answers, gateway, run_id))

    write_jsonl_atomic(answer_rows, os.path.join(run_dir, "answers.jsonl"))
    write_jsonl_atomic(score_rows, os.path.join(run_dir, "scores.jsonl"))
    record = {
        "run": run_id,
        "sampled_reports": sampled,
        "question_count": len(items),
        "dataset_report": dataset_report.to_dict(),
        "usage": gateway.total_usage(),
        "status": "ok",
    }
    write_json_atomic(record, os.path.join(run_dir, "run.json"))
    return record


def analyze_run_dirs(
    run_dirs: Sequence[str],
    seed: int = 0,
    resamples: int = 10_000,
    cost_table_path: Optional[str] = None,
    meta: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Offline aggregation over run directories (scores required, rest optional)."""
    run_inputs = []
    for run_dir in run_dirs:
        scores_path = os.path.join(run_dir, "scores.jsonl")
        if not os.path.isfile(scores_path):
            continue
        scores = read_jsonl(scores_path)
        run_id = scores[0].get("run") if scores else os.path.basename(run_dir)
        items = None
        dataset_path = os.path.join(run_dir, "dataset.jsonl")
        if os.path.isfile(dataset_path):
            items = load_dataset(dataset_path)
        graph_stats = None
        stats_path = os.path.join(run_dir, "stats.json")
        if os.path.isfile(stats_path):
            with open(stats_path, "r", encoding="utf-8") as fh:
                graph_stats = json.load(fh)
        run_inputs.append({"run": run_id, "scores": scores, "items": items, "graph_stats": graph_stats})

    cost_config = None
    if cost_table_path:
        with open(cost_table_path, "r", encoding="utf-8") as fh:
            cost_config = json.load(fh)
    return build_report(run_inputs, seed=seed, resamples=resamples, cost_config=cost_config, meta=meta)


def run_experiment(config: RunConfig) -> Tuple[str, int]:
    """Execute all runs and aggregate the report.

    Returns (experiment directory, exit code): 0 every run succeeded,
    2 when some runs failed but the experiment completed.
    """
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)

    def attempt(run_id: int) -> Tuple[str, Optional[str]]:
        run_dir = os.path.join(config.out_dir, f"run-{run_id}")
        try:
            execute_run(config, run_id, run_dir)
            return "ok", run_dir
        except Exception as err:
            logger.error("run %d failed: %s", run_id, err)
            os.makedirs(run_dir, exist_ok=True)
            write_json_atomic(
                {"run": run_id, "status": "failed", "error": str(err)},
                os.path.join(run_dir, "run.json"),
            )
            return "failed", None

    run_ids = list(range(1, config.runs + 1))
    if config.parallel_runs and config.runs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=min(4, config.runs)) as pool:
            outcomes = list(pool.map(attempt, run_ids))
    else:
        outcomes = [attempt(run_id) for run_id in run_ids]
    statuses = [status for status, _ in outcomes]
    run_dirs = [run_dir for _, run_dir in outcomes if run_dir]

    report = analyze_run_dirs(
        run_dirs,
        seed=config.seed,
        resamples=config.bootstrap_resamples,
        cost_table_path=config.cost_table,
        meta={"provider": config.provider, "model": config.model, "judge_model": config.model},
    )
    dump_report(report, os.path.join(config.out_dir, "report.json"))
    exit_code = 0 if all(s == "ok" for s in statuses) else 2
    return config.out_dir, exit_code
