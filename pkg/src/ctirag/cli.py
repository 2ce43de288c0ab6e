"""Command line interface.

Subcommands map to workflow stages so each can re-run independently on the
documented file formats:

  run          full experiment (ingest .. report) across N runs
  ingest       corpus -> graph.json / statements.json / stats.json
  gen-qa       graph + statements -> fewshots.json + dataset.jsonl
  answer       graph + dataset -> answers.jsonl (one system or all)
  score        answers + dataset -> scores.jsonl
  analyze      run directories -> report.json (no LLM access)
  report       report.json -> per-table CSV exports
  demo-assets  materialize the bundled toy corpus and mock script

Exit codes: 0 success, 1 configuration/usage error, 2 partial run failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional

from . import harness, reporting, toydata
from .gateway import ProviderError
from .graph_store import PropertyGraph
from .harness import ConfigError, RunConfig, make_gateway, read_jsonl, write_json_atomic, write_jsonl_atomic
from .pipelines import FewshotPair
from .qa_factory import generate_from_cypher, generate_guided, load_dataset, save_dataset, validate_dataset

logger = logging.getLogger(__name__)

SYSTEM_CHOICES = ("all", "rag", "grag", "agrag", "hrag")


def _provider_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--provider", choices=("mock", "http"), default="mock")
    parser.add_argument("--mock-script", help="mock script JSON (required with --provider mock)")
    parser.add_argument("--model", default="mock")
    parser.add_argument("--base-url-env", default="CTIRAG_LLM_BASE_URL")
    parser.add_argument("--api-key-env", default="CTIRAG_LLM_API_KEY")


def _stage_config(args: argparse.Namespace, corpus_dir: Optional[str] = None) -> RunConfig:
    config = RunConfig(
        corpus_dir=corpus_dir or getattr(args, "corpus", None) or ".",
        out_dir=getattr(args, "out_dir", None) or ".",
        provider=args.provider,
        mock_script=args.mock_script,
        model=args.model,
        base_url_env=args.base_url_env,
        api_key_env=args.api_key_env,
    )
    if config.provider == "mock":
        if not config.mock_script or not os.path.isfile(config.mock_script):
            raise ConfigError("mock provider needs an existing --mock-script file")
    return config


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {
        "corpus_dir": args.corpus,
        "out_dir": args.out_dir,
        "guided_doc": args.guided_doc,
        "reports_per_run": args.reports_per_run,
        "runs": args.runs,
        "seed": args.seed,
        "provider": args.provider,
        "mock_script": args.mock_script,
        "model": args.model,
        "base_url_env": args.base_url_env,
        "api_key_env": args.api_key_env,
        "wall_budget_s": args.wall_budget,
        "bootstrap_resamples": args.resamples,
        "cost_table": args.cost_table,
    }
    if args.config:
        config = RunConfig.from_file(args.config, **overrides)
    else:
        missing = [k for k in ("corpus_dir", "out_dir") if not overrides.get(k)]
        if missing:
            raise ConfigError(f"missing required options: {missing}")
        config = RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    _, code = harness.run_experiment(config)
    print(f"experiment written to {config.out_dir}")
    return code


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _stage_config(args, corpus_dir=args.corpus)
    names = harness.list_corpus(args.corpus)
    report_texts = {}
    for name in names:
        with open(os.path.join(args.corpus, name), "r", encoding="utf-8") as fh:
            report_texts[name] = fh.read()
    gateway = make_gateway(config)
    graph, statements = harness.ingest_corpus(report_texts, gateway)
    stats = graph.compute_stats(list(report_texts.values()))
    os.makedirs(args.out_dir, exist_ok=True)
    write_json_atomic(graph.to_snapshot(), os.path.join(args.out_dir, "graph.json"))
    write_json_atomic(statements, os.path.join(args.out_dir, "statements.json"))
    write_json_atomic(stats.to_dict(), os.path.join(args.out_dir, "stats.json"))
    print(f"ingested {len(names)} reports: {graph.node_count()} nodes, {graph.edge_count()} edges")
    return 0


def cmd_gen_qa(args: argparse.Namespace) -> int:
    config = _stage_config(args)
    graph = PropertyGraph.load(os.path.join(args.run_dir, "graph.json"))
    with open(os.path.join(args.run_dir, "statements.json"), "r", encoding="utf-8") as fh:
        statements = json.load(fh)
    gateway = make_gateway(config)
    fewshots = harness.generate_fewshots(statements, graph, gateway)
    write_json_atomic(
        [{"question": p.question, "cypher": p.cypher} for p in fewshots],
        os.path.join(args.run_dir, "fewshots.json"),
    )
    items = generate_from_cypher(statements, graph, gateway)
    if args.guided_doc:
        with open(args.guided_doc, "r", encoding="utf-8") as fh:
            guided_text = fh.read()
    else:
        guided_text = "\n".join(statements)
    items.extend(generate_guided(guided_text, graph, gateway))
    save_dataset(items, os.path.join(args.run_dir, "dataset.jsonl"))
    report = validate_dataset(items)
    print(f"dataset written: {report.counts}")
    return 0


def cmd_answer(args: argparse.Namespace) -> int:
    config = _stage_config(args, corpus_dir=args.corpus)
    graph = PropertyGraph.load(os.path.join(args.run_dir, "graph.json"))
    items = load_dataset(os.path.join(args.run_dir, "dataset.jsonl"))
    gateway = make_gateway(
        config, extra_guard_terms=[n.name.lower() for n in graph.nodes if n.name]
    )

    fewshots: List[FewshotPair] = []
    fewshot_path = os.path.join(args.run_dir, "fewshots.json")
    if os.path.isfile(fewshot_path):
        with open(fewshot_path, "r", encoding="utf-8") as fh:
            raw_pairs = json.load(fh)
        fewshots = [FewshotPair(question=p["question"], cypher=p["cypher"]) for p in raw_pairs]
        if fewshots:
            for pair, emb in zip(fewshots, gateway.embed([p.question for p in fewshots])):
                pair.embedding = emb

    report_texts = {}
    for name in harness.list_corpus(args.corpus):
        with open(os.path.join(args.corpus, name), "r", encoding="utf-8") as fh:
            report_texts[name] = fh.read()
    chunk_index = harness.build_chunk_index(report_texts, gateway)
    searchdocs = harness.build_searchdoc_index(graph, gateway)

    systems = ("RAG", "GRAG", "AGRAG", "HRAG") if args.system == "all" else (args.system.upper(),)
    rows = []
    for item in items:
        answers = harness.answer_item(
            item, graph, chunk_index, searchdocs, fewshots, gateway, config.pipeline_config(), systems
        )
        for system, answer in answers.items():
            rows.append(
                {
                    "run": args.run_id,
                    "question_id": item.id,
                    "category": item.category,
                    "system": system,
                    "answer": answer.to_dict(),
                }
            )
    write_jsonl_atomic(rows, os.path.join(args.run_dir, "answers.jsonl"))
    print(f"answered {len(items)} questions with {', '.join(systems)}")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    config = _stage_config(args)
    items = {item.id: item for item in load_dataset(os.path.join(args.run_dir, "dataset.jsonl"))}
    answer_rows = read_jsonl(os.path.join(args.run_dir, "answers.jsonl"))
    gateway = make_gateway(config)

    from .pipelines import PipelineAnswer
    from .harness import score_item

    by_question: Dict[str, Dict[str, PipelineAnswer]] = {}
    run_ids: Dict[str, int] = {}
    order: List[str] = []
    for row in answer_rows:
        qid = row["question_id"]
        if qid not in by_question:
            by_question[qid] = {}
            order.append(qid)
        raw = row["answer"]
        by_question[qid][row["system"]] = PipelineAnswer(
            system=raw["system"],
            answer_text=raw["answer_text"],
            is_refusal=raw["is_refusal"],
            latency_s=raw["latency_s"],
            iterations=raw["iterations"],
            cypher_trace=raw["cypher_trace"],
            retrieved_context=raw["retrieved_context"],
            llm_calls=raw["llm_calls"],
            notes=raw["notes"],
        )
        run_ids[qid] = row.get("run", 0)

    rows = []
    for qid in order:
        item = items.get(qid)
        if item is None:
            logger.warning("answers reference unknown question id %s", qid)
            continue
        rows.extend(score_item(item, by_question[qid], gateway, run_ids[qid]))
    write_jsonl_atomic(rows, os.path.join(args.run_dir, "scores.jsonl"))
    print(f"scored {len(order)} questions")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    run_dirs = args.run_dirs
    if args.experiment:
        run_dirs = sorted(
            os.path.join(args.experiment, d)
            for d in os.listdir(args.experiment)
            if d.startswith("run-") and os.path.isdir(os.path.join(args.experiment, d))
        )
    if not run_dirs:
        raise ConfigError("analyze needs --experiment or at least one run directory")
    report = harness.analyze_run_dirs(
        run_dirs,
        seed=args.seed,
        resamples=args.resamples,
        cost_table_path=args.cost_table,
        meta={"provider": "offline", "model": args.model, "judge_model": args.model},
    )
    reporting.dump_report(report, args.out)
    print(f"report written to {args.out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    with open(args.report, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    written = reporting.write_csvs(report, args.out_dir)
    print(f"wrote {len(written)} CSV files to {args.out_dir}")
    return 0


def cmd_demo_assets(args: argparse.Namespace) -> int:
    paths = toydata.write_toy_assets(args.out_dir)
    for key, value in paths.items():
        print(f"{key}: {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctirag", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full experiment")
    p.add_argument("--config", help="JSON config file mirroring RunConfig")
    p.add_argument("--corpus")
    p.add_argument("--out-dir")
    p.add_argument("--guided-doc")
    p.add_argument("--reports-per-run", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--wall-budget", type=float)
    p.add_argument("--resamples", type=int)
    p.add_argument("--cost-table")
    _provider_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ingest", help="ingest a corpus into a graph snapshot")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    _provider_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen-qa", help="generate the evaluation dataset for a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--guided-doc")
    _provider_args(p)
    p.set_defaults(func=cmd_gen_qa)

    p = sub.add_parser("answer", help="answer dataset questions with one or all systems")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--system", choices=SYSTEM_CHOICES, default="all")
    p.add_argument("--run-id", type=int, default=1)
    _provider_args(p)
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("score", help="score answers with classical metrics and the judge")
    p.add_argument("--run-dir", required=True)
    _provider_args(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("analyze", help="aggregate run directories into report.json (offline)")
    p.add_argument("run_dirs", nargs="*")
    p.add_argument("--experiment", help="experiment directory containing run-* subdirectories")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resamples", type=int, default=10_000)
    p.add_argument("--cost-table")
    p.add_argument("--model", default="offline")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="export report.json tables as CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("demo-assets", help="write the bundled toy corpus and mock script")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_demo_assets)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("CTIRAG_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1
    except (ProviderError, FileNotFoundError, json.JSONDecodeError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
