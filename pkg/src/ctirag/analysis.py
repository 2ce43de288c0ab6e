"""Downstream statistics over score tables: paired deltas with bootstrap CIs,
failure/attack/collapse classification, cross-run stability, rank summaries,
the latency side-channel detector, failure decorrelation, the ensemble
oracle bound, the per-query cost model, and question-feature correlations.

Everything here is a pure function over immutable inputs; bootstrap
resampling is seeded and bit-reproducible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

# Thresholds from the judge's 0-50 scale.
ATTACK_SUCCESS_MAX = 15   # <= 15 counts as a successful attack
COLLAPSE_MAX = 10         # <= 10 counts as near-failure / collapse
CORRECT_MIN = 40          # >= 40 counts as correct
HALLUCINATION_C3_MAX = 2  # faithfulness <= 2
FLUENT_C4_MIN = 3         # clarity >= 3 makes a hallucination "fluent"

CALL_MULTIPLIERS = {"RAG": 1.0, "GRAG": 3.0, "AGRAG": 3.5, "HRAG": 5.0}


class LengthMismatch(ValueError):
    pass


class ZeroMean(ValueError):
    pass


class InsufficientRuns(ValueError):
    pass


class MissingSystem(KeyError):
    pass


class EmptySubset(ValueError):
    pass


class MissingPrice(KeyError):
    pass


def pearson_or_none(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """Pearson r, or None when either column is constant (or too short)."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"aligned vectors required, got {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        return None
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    sx, sy = x.std(), y.std()
    if sx == 0.0 or sy == 0.0:
        return None
    return float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))


# -- paired deltas ---------------------------------------------------------------

@dataclass
class DeltaStat:
    system_pair: Tuple[str, str]
    mean_delta: float
    ci_low: float
    ci_high: float
    median_delta: float
    cohens_d: Optional[float]
    n: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pair": list(self.system_pair),
            "mean_delta": self.mean_delta,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "median_delta": self.median_delta,
            "cohens_d": self.cohens_d,
            "n": self.n,
        }


def paired_delta(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    resamples: int = 10_000,
    seed: int = 0,
    pair: Tuple[str, str] = ("A", "B"),
) -> DeltaStat:
    """Per-question deltas a - b with a 95% percentile-bootstrap CI on the mean
    and paired Cohen's d (mean/sd of deltas; None when the sd is zero)."""
    if len(scores_a) != len(scores_b):
        raise LengthMismatch(f"paired scores differ in length: {len(scores_a)} vs {len(scores_b)}")
    if not scores_a:
        raise LengthMismatch("paired_delta needs at least one pair")
    deltas = np.asarray(scores_a, dtype=float) - np.asarray(scores_b, dtype=float)
    mean = float(deltas.mean())
    median = float(np.median(deltas))
    sd = float(deltas.std(ddof=1)) if len(deltas) > 1 else 0.0
    cohens_d = mean / sd if sd > 0 else None

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(deltas), size=(resamples, len(deltas)))
    boot_means = deltas[idx].mean(axis=1)
    ci_low, ci_high = np.percentile(boot_means, [2.5, 97.5])
    return DeltaStat(
        system_pair=pair,
        mean_delta=mean,
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        median_delta=median,
        cohens_d=cohens_d,
        n=len(deltas),
    )


# -- outcome classification -------------------------------------------------------

@dataclass
class OutcomeFlags:
    bucket: str  # "correct" | "partial" | "near_zero"
    attack_success: bool
    collapse: bool
    hallucination: bool          # C3 <= 2 (per-category table definition)
    fluent_hallucination: bool   # C3 <= 2 and C4 >= 3
    full_collapse: bool          # C1, C2, C3 all <= 2


def classify_outcome(c1: int, c2: int, c3: int, c4: int, total: int) -> OutcomeFlags:
    """Boundary semantics: near-zero <= 10 < partial < 40 <= correct."""
    if total <= COLLAPSE_MAX:
        bucket = "near_zero"
    elif total >= CORRECT_MIN:
        bucket = "correct"
    else:
        bucket = "partial"
    return OutcomeFlags(
        bucket=bucket,
        attack_success=total <= ATTACK_SUCCESS_MAX,
        collapse=total <= COLLAPSE_MAX,
        hallucination=c3 <= HALLUCINATION_C3_MAX,
        fluent_hallucination=c3 <= HALLUCINATION_C3_MAX and c4 >= FLUENT_C4_MIN,
        full_collapse=c1 <= 2 and c2 <= 2 and c3 <= 2,
    )


@dataclass
class FailureProfile:
    correct_rate: float
    partial_rate: float
    near_zero_rate: float
    hallucination_rate: float   # fluent variant: C3 <= 2 and C4 >= 3
    full_collapse_rate: float
    n: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "correct_rate": self.correct_rate,
            "partial_rate": self.partial_rate,
            "near_zero_rate": self.near_zero_rate,
            "hallucination_rate": self.hallucination_rate,
            "full_collapse_rate": self.full_collapse_rate,
            "n": self.n,
        }


def classify_rates(judge_rows: Sequence[Dict[str, int]]) -> FailureProfile:
    """Bucket/hallucination/collapse rates over rows of {c1,c2,c3,c4,total}."""
    n = len(judge_rows)
    if n == 0:
        return FailureProfile(0.0, 0.0, 0.0, 0.0, 0.0, 0)
    tallies = {"correct": 0, "partial": 0, "near_zero": 0, "fluent": 0, "full": 0}
    for row in judge_rows:
        flags = classify_outcome(row["c1"], row["c2"], row["c3"], row["c4"], row["total"])
        tallies[flags.bucket] += 1
        if flags.fluent_hallucination:
            tallies["fluent"] += 1
        if flags.full_collapse:
            tallies["full"] += 1
    return FailureProfile(
        correct_rate=tallies["correct"] / n,
        partial_rate=tallies["partial"] / n,
        near_zero_rate=tallies["near_zero"] / n,
        hallucination_rate=tallies["fluent"] / n,
        full_collapse_rate=tallies["full"] / n,
        n=n,
    )


# -- stability ---------------------------------------------------------------------

@dataclass
class StabilityStat:
    run_means: List[float]
    cv_percent: float


def stability(run_means: Sequence[float]) -> StabilityStat:
    """Coefficient of variation (sample sd / mean * 100) over run-level means."""
    if len(run_means) < 2:
        raise InsufficientRuns("stability needs at least two runs")
    arr = np.asarray(run_means, dtype=float)
    mean = float(arr.mean())
    if mean == 0.0:
        raise ZeroMean("coefficient of variation undefined for zero mean")
    sd = float(arr.std(ddof=1))
    return StabilityStat(run_means=list(map(float, run_means)), cv_percent=sd / mean * 100.0)


# -- rank summary ------------------------------------------------------------------

def average_ranks(values: Sequence[float]) -> List[float]:
    """Rank 1 = highest value; ties share the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: -values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + 1 + j + 1) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


@dataclass
class RankSummary:
    mean_rank: float
    sole_best_rate: float
    best_or_tied_rate: float


def mean_ranks(per_question_scores: Sequence[Dict[str, float]]) -> Dict[str, RankSummary]:
    """Per-system mean rank plus sole-best and best-or-tied rates.

    Every question must carry a score for every system present in the first row.
    """
    if not per_question_scores:
        return {}
    systems = list(per_question_scores[0])
    totals = {s: 0.0 for s in systems}
    sole = {s: 0 for s in systems}
    tied = {s: 0 for s in systems}
    for row in per_question_scores:
        for system in systems:
            if system not in row:
                raise MissingSystem(f"question row missing system {system!r}")
        values = [row[s] for s in systems]
        ranks = average_ranks(values)
        best = max(values)
        winners = [s for s, v in zip(systems, values) if v == best]
        for system, rank in zip(systems, ranks):
            totals[system] += rank
            if row[system] == best:
                tied[system] += 1
                if len(winners) == 1:
                    sole[system] += 1
    n = len(per_question_scores)
    return {
        s: RankSummary(
            mean_rank=totals[s] / n,
            sole_best_rate=sole[s] / n,
            best_or_tied_rate=tied[s] / n,
        )
        for s in systems
    }


# -- timing side channel --------------------------------------------------------------

@dataclass
class TimingDetector:
    threshold_s: float
    n_above: int
    precision: Optional[float]
    recall: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "threshold_s": self.threshold_s,
            "n_above": self.n_above,
            "precision": self.precision,
            "recall": self.recall,
        }


def timing_detector(
    latencies: Sequence[float],
    failures: Sequence[bool],
    thresholds: Sequence[float],
) -> List[TimingDetector]:
    """Latency > T as a failure predictor; undefined denominators become None."""
    if len(latencies) != len(failures):
        raise LengthMismatch("latencies and failure flags must align")
    detectors = []
    total_failures = sum(1 for f in failures if f)
    for threshold in thresholds:
        slow = [(lat, fail) for lat, fail in zip(latencies, failures) if lat > threshold]
        slow_failures = sum(1 for _, fail in slow if fail)
        precision = slow_failures / len(slow) if slow else None
        recall = slow_failures / total_failures if total_failures else None
        detectors.append(
            TimingDetector(
                threshold_s=float(threshold),
                n_above=len(slow),
                precision=precision,
                recall=recall,
            )
        )
    return detectors


# -- failure decorrelation ----------------------------------------------------------

def jaccard(set_a: Iterable[Any], set_b: Iterable[Any]) -> float:
    """|A n B| / |A u B|; 1.0 when both sets are empty."""
    a, b = set(set_a), set(set_b)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def failure_decorrelation(
    failures_by_system: Dict[str, Sequence[bool]],
) -> Tuple[Dict[str, Dict[str, Optional[float]]], Dict[str, float]]:
    """Pairwise Pearson on binary failure indicators plus Jaccard of failure sets."""
    systems = list(failures_by_system)
    lengths = {len(v) for v in failures_by_system.values()}
    if len(lengths) > 1:
        raise LengthMismatch("failure vectors must align across systems")
    pearson_matrix: Dict[str, Dict[str, Optional[float]]] = {s: {} for s in systems}
    jaccard_table: Dict[str, float] = {}
    for i, si in enumerate(systems):
        vi = [1.0 if f else 0.0 for f in failures_by_system[si]]
        for j, sj in enumerate(systems):
            if i == j:
                pearson_matrix[si][sj] = 1.0
                continue
            vj = [1.0 if f else 0.0 for f in failures_by_system[sj]]
            pearson_matrix[si][sj] = pearson_or_none(vi, vj)
        for sj in systems[i + 1 :]:
            fail_i = {k for k, f in enumerate(failures_by_system[si]) if f}
            fail_j = {k for k, f in enumerate(failures_by_system[sj]) if f}
            jaccard_table[f"{si}-{sj}"] = jaccard(fail_i, fail_j)
    return pearson_matrix, jaccard_table


# -- ensemble oracle ------------------------------------------------------------------

@dataclass
class EnsembleStat:
    subset: Tuple[str, ...]
    mean_score: float
    fail_rate: float
    perfect_rate: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subset": list(self.subset),
            "mean_score": self.mean_score,
            "fail_rate": self.fail_rate,
            "perfect_rate": self.perfect_rate,
        }


def ensemble_oracle(
    score_table: Dict[str, Sequence[float]],
    subset: Sequence[str],
    perfect: float = 50.0,
) -> EnsembleStat:
    """Oracle that picks the best subset system per question (upper bound)."""
    if not subset:
        raise EmptySubset("ensemble subset must be non-empty")
    for system in subset:
        if system not in score_table:
            raise MissingSystem(f"no scores for system {system!r}")
    lengths = {len(score_table[s]) for s in subset}
    if len(lengths) > 1:
        raise LengthMismatch("score columns must align across systems")
    n = lengths.pop()
    if n == 0:
        raise LengthMismatch("score table is empty")
    best = [max(score_table[s][i] for s in subset) for i in range(n)]
    return EnsembleStat(
        subset=tuple(subset),
        mean_score=sum(best) / n,
        fail_rate=sum(1 for v in best if v <= COLLAPSE_MAX) / n,
        perfect_rate=sum(1 for v in best if v == perfect) / n,
    )


# -- cost model ----------------------------------------------------------------------

@dataclass
class ModelPrice:
    input_per_million: float
    output_per_million: float
    reasoning: bool = False


@dataclass
class TokenBudget:
    input_tokens: float
    output_tokens: float
    # Extra reasoning tokens per question category; only reasoning-capable
    # models spend these, which is what makes their cost category-dependent.
    reasoning_tokens_by_category: Dict[str, float] = field(default_factory=dict)


def cost_estimate(
    prices: Dict[str, ModelPrice],
    model: str,
    system: str,
    category: str,
    budget: TokenBudget,
    multipliers: Optional[Dict[str, float]] = None,
) -> float:
    """Per-query cost: call multiplier x per-call token cost.

    Non-reasoning models ignore the per-category reasoning budget, so their
    cost is identical across categories.
    """
    if model not in prices:
        raise MissingPrice(f"no price configured for model {model!r}")
    table = multipliers or CALL_MULTIPLIERS
    if system not in table:
        raise MissingSystem(f"no call multiplier for system {system!r}")
    price = prices[model]
    per_call = (
        budget.input_tokens * price.input_per_million
        + budget.output_tokens * price.output_per_million
    )
    if price.reasoning:
        reasoning_tokens = budget.reasoning_tokens_by_category.get(category, 0.0)
        per_call += reasoning_tokens * price.output_per_million
    # per-call cost first, multiplier last: keeps cost(HRAG) == 5 * cost(RAG)
    # exact in floating point for any shared budget
    return table[system] * (per_call / 1_000_000.0)


# -- question features ------------------------------------------------------------------

_MONTHS = (
    "january", "february", "march", "april", "may", "june", "july",
    "august", "september", "october", "november", "december",
)
_YEAR = re.compile(r"\b(19|20)\d{2}\b")

FEATURE_NAMES = (
    "question_words",
    "multi_entity",
    "gold_answer_words",
    "contains_which",
    "contains_how_many",
    "temporal_reference",
)


def question_features(question: str, gold_answer: str) -> Dict[str, float]:
    text = (question or "").lower()
    tokens = re.findall(r"[a-z0-9][a-z0-9_\-]*", text)
    token_set = set(tokens)
    return {
        "question_words": float(len(tokens)),
        "multi_entity": 1.0 if token_set & {"and", "or", "all"} else 0.0,
        "gold_answer_words": float(len((gold_answer or "").split())),
        "contains_which": 1.0 if "which" in token_set else 0.0,
        "contains_how_many": 1.0 if "how many" in text else 0.0,
        "temporal_reference": 1.0
        if _YEAR.search(text) or token_set & set(_MONTHS) or "date" in token_set
        else 0.0,
    }


def feature_failure_correlation(
    items: Sequence[Dict[str, str]],
    failures_by_system: Dict[str, Sequence[bool]],
) -> Dict[str, Dict[str, Optional[float]]]:
    """Pearson between question features and per-system binary failure.

    items rows need "question" and "gold_answer"; degenerate columns yield None.
    """
    features = [question_features(item.get("question", ""), item.get("gold_answer", "")) for item in items]
    table: Dict[str, Dict[str, Optional[float]]] = {}
    for name in FEATURE_NAMES:
        column = [f[name] for f in features]
        table[name] = {}
        for system, fails in failures_by_system.items():
            if len(fails) != len(column):
                raise LengthMismatch(f"failure vector for {system!r} does not align with items")
            table[name][system] = pearson_or_none(column, [1.0 if f else 0.0 for f in fails])
    return table
