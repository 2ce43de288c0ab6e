"""Assembles the cross-run analysis report and its CSV exports.

The report mirrors the analysis surface of the harness: paired deltas with
bootstrap CIs, bucket distributions, hallucination/abstention/collapse
rates, rank and stability summaries, the timing side channel, failure
decorrelation, ensemble-oracle bounds, attack-success rates, question
feature correlations, and the optional cost table. It is computed purely
from score/answer/dataset files, so the analyze stage needs no LLM access.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import analysis
from .analysis import (
    ATTACK_SUCCESS_MAX,
    CALL_MULTIPLIERS,
    COLLAPSE_MAX,
    ModelPrice,
    TokenBudget,
    classify_rates,
)
from .qa_factory import CATEGORIES, QAItem, validate_dataset

SYSTEMS = ("RAG", "GRAG", "AGRAG", "HRAG")
TIMING_THRESHOLDS = (30.0, 60.0, 120.0, 300.0, 500.0)
SEMSIM_NOTE = "semantic similarity is embedding cosine (token-overlap under the mock), substituted for a neural scorer"


def seed_for(base_seed: int, *names) -> int:
    """Stable named sub-seed derived from the experiment seed."""
    digest = hashlib.sha256(("/".join([str(base_seed), *map(str, names)])).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**31)


def _rows_for(scores: Sequence[Dict[str, Any]], system: str, category: Optional[str] = None) -> List[Dict[str, Any]]:
    out = []
    for row in scores:
        if row["system"] != system:
            continue
        if category is not None and row.get("category") != category:
            continue
        out.append(row)
    return out


def _judge_total(row: Dict[str, Any]) -> float:
    return float(row["judge"]["total"])


def _aligned(scores: Sequence[Dict[str, Any]], metric: str, category: Optional[str] = None):
    """Per-question aligned score lists keyed by system.

    metric: "judge" (weighted total) or "composite".
    """
    by_key: Dict[Any, Dict[str, float]] = {}
    for row in scores:
        if category is not None and row.get("category") != category:
            continue
        key = (row.get("run"), row["question_id"])
        value = _judge_total(row) if metric == "judge" else float(row["metrics"]["composite"])
        by_key.setdefault(key, {})[row["system"]] = value
    keys = [k for k, v in by_key.items() if all(s in v for s in SYSTEMS)]
    keys.sort(key=lambda k: (str(k[0]), str(k[1])))
    return {system: [by_key[k][system] for k in keys] for system in SYSTEMS}, keys


def build_report(
    run_inputs: Sequence[Dict[str, Any]],
    seed: int = 0,
    resamples: int = 10_000,
    cost_config: Optional[Dict[str, Any]] = None,
    meta: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """run_inputs: per run, {"run": k, "scores": [...], "items": [QAItem] | None,
    "graph_stats": dict | None}. Scores rows are the scores.jsonl schema."""
    scores: List[Dict[str, Any]] = []
    items_by_run: Dict[Any, List[QAItem]] = {}
    dataset_reports = []
    graph_stats = []
    for run in run_inputs:
        for row in run["scores"]:
            row = dict(row)
            row.setdefault("run", run.get("run"))
            scores.append(row)
        if run.get("items"):
            items_by_run[run.get("run")] = run["items"]
            dataset_reports.append({"run": run.get("run"), **validate_dataset(run["items"]).to_dict()})
        if run.get("graph_stats"):
            graph_stats.append({"run": run.get("run"), **run["graph_stats"]})

    report: Dict[str, Any] = {
        "meta": {
            "seed": seed,
            "resamples": resamples,
            "runs": len(run_inputs),
            "systems": list(SYSTEMS),
            "semsim_note": SEMSIM_NOTE,
            **(meta or {}),
        },
        "dataset_reports": dataset_reports,
        "graph_stats": graph_stats,
    }

    if not scores:
        return report

    # -- paired deltas vs RAG -------------------------------------------------
    for metric, section in (("judge", "judge_deltas_vs_rag"), ("composite", "composite_deltas_vs_rag")):
        aligned, _ = _aligned(scores, metric)
        block = {}
        for system in SYSTEMS[1:]:
            if aligned[system]:
                stat = analysis.paired_delta(
                    aligned[system],
                    aligned["RAG"],
                    resamples=resamples,
                    seed=seed_for(seed, "delta", metric, system),
                    pair=(system, "RAG"),
                )
                block[system] = stat.to_dict()
        report[section] = block

    by_category = {}
    for category in CATEGORIES:
        aligned, keys = _aligned(scores, "judge", category)
        if not keys:
            continue
        block = {}
        for system in SYSTEMS[1:]:
            stat = analysis.paired_delta(
                aligned[system],
                aligned["RAG"],
                resamples=resamples,
                seed=seed_for(seed, "delta", "judge", system, category),
                pair=(system, "RAG"),
            )
            block[system] = stat.to_dict()
        by_category[category] = block
    report["judge_deltas_by_category"] = by_category

    # -- outcome distributions --------------------------------------------------
    failure_modes = {}
    for system in SYSTEMS:
        rows = _rows_for(scores, system)
        judge_rows = [row["judge"] for row in rows]
        profile = classify_rates(judge_rows)
        perfect = sum(1 for row in rows if _judge_total(row) == 50) / len(rows) if rows else 0.0
        failure_modes[system] = {**profile.to_dict(), "perfect_rate": perfect}
    report["failure_modes"] = failure_modes

    hallucination = {}
    collapse = {}
    for category in CATEGORIES:
        hall_row = {}
        coll_row = {}
        for system in SYSTEMS:
            rows = _rows_for(scores, system, category)
            if not rows:
                continue
            hall_row[system] = sum(1 for r in rows if r["judge"]["c3"] <= 2) / len(rows)
            coll_row[system] = sum(1 for r in rows if _judge_total(r) <= COLLAPSE_MAX) / len(rows)
        if hall_row:
            hallucination[category] = hall_row
            collapse[category] = coll_row
    report["hallucination_by_category"] = hallucination
    report["collapse_by_category"] = collapse

    abstention = {}
    for system in SYSTEMS:
        rows = _rows_for(scores, system, "unanswerable")
        if not rows:
            continue
        refused = sum(1 for r in rows if r.get("is_refusal"))
        empty = sum(1 for r in rows if not r.get("is_refusal") and not str(r.get("answer_text", "x")).strip())
        abstention[system] = {
            "correct_refusal_rate": refused / len(rows),
            "empty_rate": empty / len(rows),
            "overconfident_rate": (len(rows) - refused - empty) / len(rows),
        }
    report["abstention"] = abstention

    # -- ranks -------------------------------------------------------------------
    aligned_all, keys = _aligned(scores, "judge")
    if keys:
        per_question = [
            {system: aligned_all[system][i] for system in SYSTEMS} for i in range(len(keys))
        ]
        ranks = analysis.mean_ranks(per_question)
        report["mean_ranks"] = {
            system: {
                "mean_rank": summary.mean_rank,
                "sole_best_rate": summary.sole_best_rate,
                "best_or_tied_rate": summary.best_or_tied_rate,
            }
            for system, summary in ranks.items()
        }

    # -- stability ------------------------------------------------------------------
    runs = sorted({row.get("run") for row in scores}, key=str)
    stability_block: Dict[str, Any] = {}
    for system in SYSTEMS:
        per_category: Dict[str, Any] = {}
        for category in CATEGORIES:
            run_means = []
            for run_id in runs:
                rows = [r for r in _rows_for(scores, system, category) if r.get("run") == run_id]
                if rows:
                    run_means.append(sum(map(_judge_total, rows)) / len(rows))
            if len(run_means) >= 2 and sum(run_means) != 0:
                per_category[category] = analysis.stability(run_means).cv_percent
            else:
                per_category[category] = None
        overall_means = []
        for run_id in runs:
            rows = [r for r in _rows_for(scores, system) if r.get("run") == run_id]
            if rows:
                overall_means.append(sum(map(_judge_total, rows)) / len(rows))
        overall_std = float(np.std(overall_means, ddof=1)) if len(overall_means) >= 2 else None
        stability_block[system] = {"by_category": per_category, "overall_std_of_run_means": overall_std}
    report["stability"] = stability_block

    # -- timing side channel -----------------------------------------------------------
    timing = {}
    timing_correlation = {}
    for system in SYSTEMS:
        rows = _rows_for(scores, system)
        if not rows:
            continue
        latencies = [float(r.get("latency_s", 0.0)) for r in rows]
        failures = [_judge_total(r) <= COLLAPSE_MAX for r in rows]
        timing[system] = [d.to_dict() for d in analysis.timing_detector(latencies, failures, TIMING_THRESHOLDS)]
        timing_correlation[system] = analysis.pearson_or_none(
            latencies, [1.0 if f else 0.0 for f in failures]
        )
    report["timing"] = timing
    report["timing_correlation"] = timing_correlation

    # -- decorrelation and ensemble ------------------------------------------------------
    if keys:
        failures_by_system = {
            system: [aligned_all[system][i] <= ATTACK_SUCCESS_MAX for i in range(len(keys))]
            for system in SYSTEMS
        }
        pearson_matrix, jaccard_table = analysis.failure_decorrelation(failures_by_system)
        report["failure_decorrelation"] = {"pearson": pearson_matrix, "jaccard": jaccard_table}

        subsets = [(s,) for s in SYSTEMS] + [("AGRAG", "HRAG"), ("RAG", "HRAG"), SYSTEMS]
        report["ensemble"] = [
            analysis.ensemble_oracle(aligned_all, subset).to_dict() for subset in subsets
        ]

    # -- attack strategies ------------------------------------------------------------
    items_index: Dict[Any, QAItem] = {}
    for run_id, items in items_by_run.items():
        for item in items:
            items_index[(run_id, item.id)] = item
    if items_index and keys:
        word_counts = {
            key: len(items_index[key].question.split()) for key in keys if key in items_index
        }
        if word_counts:
            pct75 = float(np.percentile(list(word_counts.values()), 75))
        else:
            pct75 = 0.0

        def strategy_keys(name: str) -> List[Any]:
            chosen = []
            for key in keys:
                item = items_index.get(key)
                if item is None:
                    continue
                features = analysis.question_features(item.question, item.gold_answer)
                if name == "A1_schema_evasion_guided" and item.category == "guided":
                    chosen.append(key)
                elif name == "A2_unanswerable_probing" and item.category == "unanswerable":
                    chosen.append(key)
                elif name == "A3_multi_hop_stress" and item.category == "multi_hop":
                    chosen.append(key)
                elif name == "A4_simple_fact" and item.category == "simple":
                    chosen.append(key)
                elif name == "A5_multi_entity_guided" and item.category == "guided" and features["multi_entity"]:
                    chosen.append(key)
                elif name == "A6_long_questions" and word_counts.get(key, 0) > pct75:
                    chosen.append(key)
                elif name == "A7_aggregate_multi_hop" and item.category == "multi_hop" and item.is_aggregate:
                    chosen.append(key)
                elif name == "random_any":
                    chosen.append(key)
            return chosen

        key_pos = {key: i for i, key in enumerate(keys)}
        attack = {}
        for strategy in (
            "A1_schema_evasion_guided",
            "A2_unanswerable_probing",
            "A3_multi_hop_stress",
            "A4_simple_fact",
            "A5_multi_entity_guided",
            "A6_long_questions",
            "A7_aggregate_multi_hop",
            "random_any",
        ):
            chosen = strategy_keys(strategy)
            if not chosen:
                continue
            attack[strategy] = {
                system: sum(
                    1 for key in chosen if aligned_all[system][key_pos[key]] <= ATTACK_SUCCESS_MAX
                )
                / len(chosen)
                for system in SYSTEMS
            }
        report["attack_success"] = attack

        # -- feature correlations -------------------------------------------------
        feature_items = [
            {"question": items_index[key].question, "gold_answer": items_index[key].gold_answer}
            for key in keys
            if key in items_index
        ]
        usable = [key for key in keys if key in items_index]
        fails = {
            system: [aligned_all[system][key_pos[key]] <= ATTACK_SUCCESS_MAX for key in usable]
            for system in SYSTEMS
        }
        report["feature_failure_correlation"] = analysis.feature_failure_correlation(feature_items, fails)

    # -- criterion correlations -----------------------------------------------------
    criteria = {"c1": [], "c2": [], "c3": [], "c4": []}
    for row in scores:
        for name in criteria:
            criteria[name].append(float(row["judge"][name]))
    matrix = [[None] * 4 for _ in range(4)]
    names = ["c1", "c2", "c3", "c4"]
    for i in range(4):
        for j in range(4):
            if i == j:
                matrix[i][j] = 1.0
            else:
                matrix[i][j] = analysis.pearson_or_none(criteria[names[i]], criteria[names[j]])
    report["criterion_correlations"] = {"criteria": names, "matrix": matrix}

    # -- cost model ----------------------------------------------------------------
    if cost_config:
        report["cost"] = cost_table(cost_config)

    return report


def cost_table(cost_config: Dict[str, Any]) -> Dict[str, Any]:
    """Per-query cost per (model, system, category) from a cost-config document."""
    prices = {
        name: ModelPrice(
            input_per_million=float(spec["input"]),
            output_per_million=float(spec["output"]),
            reasoning=bool(spec.get("reasoning", False)),
        )
        for name, spec in cost_config["models"].items()
    }
    budget_spec = cost_config.get("budget", {})
    budget = TokenBudget(
        input_tokens=float(budget_spec.get("input_tokens", 1000.0)),
        output_tokens=float(budget_spec.get("output_tokens", 300.0)),
        reasoning_tokens_by_category={
            str(k): float(v)
            for k, v in (budget_spec.get("reasoning_tokens_by_category") or {}).items()
        },
    )
    multipliers = {
        str(k): float(v)
        for k, v in (cost_config.get("multipliers") or CALL_MULTIPLIERS).items()
    }
    table: Dict[str, Any] = {"multipliers": multipliers, "per_query_usd": {}}
    for model in prices:
        table["per_query_usd"][model] = {}
        for system in multipliers:
            table["per_query_usd"][model][system] = {
                category: analysis.cost_estimate(prices, model, system, category, budget, multipliers)
                for category in CATEGORIES
            }
    return table


# -- serialization ------------------------------------------------------------------

def dump_report(report: Dict[str, Any], path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_csvs(report: Dict[str, Any], out_dir: str) -> List[str]:
    """One CSV per report table; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written: List[str] = []

    def emit(name: str, header: List[str], rows: List[List[Any]]) -> None:
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        written.append(path)

    for section in ("judge_deltas_vs_rag", "composite_deltas_vs_rag"):
        block = report.get(section)
        if block:
            emit(
                f"{section}.csv",
                ["system", "mean_delta", "ci_low", "ci_high", "median_delta", "cohens_d", "n"],
                [
                    [s, d["mean_delta"], d["ci_low"], d["ci_high"], d["median_delta"], d["cohens_d"], d["n"]]
                    for s, d in block.items()
                ],
            )

    block = report.get("judge_deltas_by_category")
    if block:
        rows = []
        for category, systems in block.items():
            for system, d in systems.items():
                rows.append([category, system, d["mean_delta"], d["ci_low"], d["ci_high"], d["median_delta"], d["cohens_d"]])
        emit(
            "judge_deltas_by_category.csv",
            ["category", "system", "mean_delta", "ci_low", "ci_high", "median_delta", "cohens_d"],
            rows,
        )

    block = report.get("failure_modes")
    if block:
        emit(
            "failure_modes.csv",
            ["system", "correct_rate", "partial_rate", "near_zero_rate", "hallucination_rate", "full_collapse_rate", "perfect_rate"],
            [
                [s, d["correct_rate"], d["partial_rate"], d["near_zero_rate"], d["hallucination_rate"], d["full_collapse_rate"], d["perfect_rate"]]
                for s, d in block.items()
            ],
        )

    for section in ("hallucination_by_category", "collapse_by_category", "attack_success"):
        block = report.get(section)
        if block:
            rows = [[cat] + [cells.get(s) for s in SYSTEMS] for cat, cells in block.items()]
            emit(f"{section}.csv", ["category"] + list(SYSTEMS), rows)

    block = report.get("abstention")
    if block:
        emit(
            "abstention.csv",
            ["system", "correct_refusal_rate", "overconfident_rate", "empty_rate"],
            [[s, d["correct_refusal_rate"], d["overconfident_rate"], d["empty_rate"]] for s, d in block.items()],
        )

    block = report.get("mean_ranks")
    if block:
        emit(
            "mean_ranks.csv",
            ["system", "mean_rank", "sole_best_rate", "best_or_tied_rate"],
            [[s, d["mean_rank"], d["sole_best_rate"], d["best_or_tied_rate"]] for s, d in block.items()],
        )

    block = report.get("stability")
    if block:
        rows = []
        for system, d in block.items():
            for category, cv in d["by_category"].items():
                rows.append([system, category, cv])
        emit("stability.csv", ["system", "category", "cv_percent"], rows)

    block = report.get("timing")
    if block:
        rows = []
        for system, detectors in block.items():
            for d in detectors:
                rows.append([system, d["threshold_s"], d["n_above"], d["precision"], d["recall"]])
        emit("timing.csv", ["system", "threshold_s", "n_above", "precision", "recall"], rows)

    block = report.get("failure_decorrelation")
    if block:
        emit(
            "failure_pearson.csv",
            ["system"] + list(SYSTEMS),
            [[s] + [block["pearson"][s].get(t) for t in SYSTEMS] for s in SYSTEMS if s in block["pearson"]],
        )
        emit("failure_jaccard.csv", ["pair", "jaccard"], [[pair, v] for pair, v in block["jaccard"].items()])

    block = report.get("ensemble")
    if block:
        emit(
            "ensemble.csv",
            ["subset", "mean_score", "fail_rate", "perfect_rate"],
            [["+".join(d["subset"]), d["mean_score"], d["fail_rate"], d["perfect_rate"]] for d in block],
        )

    block = report.get("feature_failure_correlation")
    if block:
        rows = [[feature] + [cells.get(s) for s in SYSTEMS] for feature, cells in block.items()]
        emit("feature_failure_correlation.csv", ["feature"] + list(SYSTEMS), rows)

    block = report.get("criterion_correlations")
    if block:
        rows = [
            [block["criteria"][i]] + block["matrix"][i] for i in range(len(block["criteria"]))
        ]
        emit("criterion_correlations.csv", ["criterion"] + block["criteria"], rows)

    block = report.get("cost")
    if block:
        rows = []
        for model, systems in block["per_query_usd"].items():
            for system, categories in systems.items():
                for category, value in categories.items():
                    rows.append([model, system, category, value])
        emit("cost.csv", ["model", "system", "category", "usd_per_query"], rows)

    return written
