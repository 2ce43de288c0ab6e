import random

import numpy as np
import pytest

from ctirag.analysis import (
    EmptySubset,
    InsufficientRuns,
    LengthMismatch,
    MissingPrice,
    MissingSystem,
    ModelPrice,
    TokenBudget,
    ZeroMean,
    classify_outcome,
    classify_rates,
    cost_estimate,
    ensemble_oracle,
    failure_decorrelation,
    feature_failure_correlation,
    jaccard,
    mean_ranks,
    paired_delta,
    pearson_or_none,
    question_features,
    stability,
    timing_detector,
)

from oracles import cv_percent_textbook, jaccard_textbook, pearson_textbook


# -- paired deltas ----------------------------------------------------------------

def test_paired_delta_identical_lists():
    stat = paired_delta([3.0, 4.0, 5.0], [3.0, 4.0, 5.0], resamples=500, seed=1)
    assert stat.mean_delta == 0.0
    assert (stat.ci_low, stat.ci_high) == (0.0, 0.0)
    assert stat.cohens_d is None
    assert stat.median_delta == 0.0


def test_paired_delta_plus_minus_one():
    stat = paired_delta([1.0, 0.0], [0.0, 1.0], resamples=500, seed=1)
    assert stat.mean_delta == 0.0
    assert stat.cohens_d == 0.0  # sd = sqrt(2), mean = 0


def test_paired_delta_seed_reproducible():
    a = [float(x) for x in range(30)]
    b = [float(x) * 0.5 for x in range(30)]
    s1 = paired_delta(a, b, resamples=2000, seed=42)
    s2 = paired_delta(a, b, resamples=2000, seed=42)
    assert (s1.ci_low, s1.ci_high) == (s2.ci_low, s2.ci_high)
    s3 = paired_delta(a, b, resamples=2000, seed=43)
    assert (s1.ci_low, s1.ci_high) != (s3.ci_low, s3.ci_high)


def test_paired_delta_ci_brackets_mean_distribution():
    rng = random.Random(9)
    a = [rng.uniform(0, 50) for _ in range(40)]
    b = [rng.uniform(0, 50) for _ in range(40)]
    stat = paired_delta(a, b, resamples=4000, seed=5)
    assert stat.ci_low <= stat.mean_delta + 1.5  # CI contains the point estimate region
    assert stat.ci_low < stat.ci_high


def test_paired_delta_length_mismatch():
    with pytest.raises(LengthMismatch):
        paired_delta([1.0], [1.0, 2.0])
    with pytest.raises(LengthMismatch):
        paired_delta([], [])


# -- classification ------------------------------------------------------------------

def test_attack_success_boundary():
    low = classify_outcome(1, 1, 2, 4, 15)
    high = classify_outcome(1, 2, 2, 3, 16)
    assert low.attack_success and not high.attack_success


def test_collapse_boundary():
    assert classify_outcome(1, 1, 1, 1, 10).collapse
    assert not classify_outcome(1, 1, 1, 2, 11).collapse


def test_hallucination_boundaries():
    fluent = classify_outcome(3, 3, 2, 3, 27)
    assert fluent.hallucination and fluent.fluent_hallucination
    quiet = classify_outcome(3, 3, 2, 2, 26)
    assert quiet.hallucination and not quiet.fluent_hallucination
    faithful = classify_outcome(3, 3, 3, 3, 30)
    assert not faithful.hallucination


def test_bucket_boundaries():
    assert classify_outcome(0, 0, 5, 0, 10).bucket == "near_zero"
    assert classify_outcome(0, 0, 5, 1, 11).bucket == "partial"
    assert classify_outcome(5, 5, 1, 2, 39).bucket == "partial"
    assert classify_outcome(5, 5, 2, 1, 40).bucket == "correct"


def test_full_collapse_flag():
    assert classify_outcome(2, 2, 2, 5, 23).full_collapse
    assert not classify_outcome(3, 2, 2, 5, 27).full_collapse


def test_bucket_rates_partition():
    rng = random.Random(2)
    rows = []
    for _ in range(300):
        c = [rng.randint(0, 5) for _ in range(4)]
        rows.append({"c1": c[0], "c2": c[1], "c3": c[2], "c4": c[3],
                     "total": 4 * c[0] + 3 * c[1] + 2 * c[2] + c[3]})
    profile = classify_rates(rows)
    assert profile.correct_rate + profile.partial_rate + profile.near_zero_rate == pytest.approx(1.0, abs=1e-9)


def test_classify_rates_empty():
    profile = classify_rates([])
    assert profile.n == 0 and profile.correct_rate == 0.0


# -- stability ---------------------------------------------------------------------

def test_stability_constant_runs():
    assert stability([42.0, 42.0, 42.0]).cv_percent == 0.0


def test_stability_hand_case():
    stat = stability([40.0, 50.0])
    assert stat.cv_percent == pytest.approx(15.7135, abs=0.001)
    assert stat.cv_percent == pytest.approx(cv_percent_textbook([40.0, 50.0]))


def test_stability_errors():
    with pytest.raises(InsufficientRuns):
        stability([40.0])
    with pytest.raises(ZeroMean):
        stability([1.0, -1.0])


def test_stability_matches_textbook_oracle():
    rng = random.Random(8)
    for _ in range(20):
        values = [rng.uniform(10, 60) for _ in range(rng.randint(2, 10))]
        assert stability(values).cv_percent == pytest.approx(cv_percent_textbook(values))


# -- ranks ----------------------------------------------------------------------------

def test_mean_ranks_basic():
    rows = [{"A": 50, "B": 40, "C": 30, "D": 20}]
    ranks = mean_ranks(rows)
    assert [ranks[s].mean_rank for s in "ABCD"] == [1.0, 2.0, 3.0, 4.0]
    assert ranks["A"].sole_best_rate == 1.0
    assert ranks["B"].best_or_tied_rate == 0.0


def test_mean_ranks_tie_handling():
    rows = [{"A": 50, "B": 50, "C": 30, "D": 20}]
    ranks = mean_ranks(rows)
    assert ranks["A"].mean_rank == 1.5 and ranks["B"].mean_rank == 1.5
    assert ranks["A"].sole_best_rate == 0.0
    assert ranks["A"].best_or_tied_rate == 1.0


def test_mean_ranks_all_tied():
    rows = [{"A": 10, "B": 10, "C": 10, "D": 10}] * 3
    ranks = mean_ranks(rows)
    for system in "ABCD":
        assert ranks[system].mean_rank == 2.5
        assert ranks[system].best_or_tied_rate == 1.0
        assert ranks[system].sole_best_rate == 0.0


def test_mean_ranks_missing_system():
    with pytest.raises(MissingSystem):
        mean_ranks([{"A": 1, "B": 2}, {"A": 1}])


# -- timing ------------------------------------------------------------------------

def test_timing_detector_quadrants():
    latencies = [10.0, 100.0, 200.0, 400.0]
    failures = [False, True, False, True]
    detector = timing_detector(latencies, failures, [60.0])[0]
    assert detector.n_above == 3
    assert detector.precision == pytest.approx(2 / 3)
    assert detector.recall == pytest.approx(1.0)


def test_timing_detector_null_denominators():
    detectors = timing_detector([1.0, 2.0], [True, False], [100.0])
    assert detectors[0].precision is None
    assert detectors[0].recall == 0.0
    detectors = timing_detector([200.0], [False], [100.0])
    assert detectors[0].recall is None


def test_timing_detector_perfect_separation():
    latencies = [500.0, 600.0, 1.0, 2.0]
    failures = [True, True, False, False]
    detector = timing_detector(latencies, failures, [100.0])[0]
    assert detector.precision == 1.0 and detector.recall == 1.0


def test_timing_detector_threshold_strictness():
    # latency exactly equal to T is not "slower than T"
    detector = timing_detector([60.0, 61.0], [True, True], [60.0])[0]
    assert detector.n_above == 1


# -- decorrelation ----------------------------------------------------------------------

def test_jaccard_cases():
    assert jaccard({"a", "b"}, {"b", "c"}) == pytest.approx(1 / 3)
    assert jaccard({"a"}, {"b"}) == 0.0
    assert jaccard(set(), set()) == 1.0
    assert jaccard({"a"}, {"a"}) == 1.0


def test_failure_decorrelation_identical_sets():
    vectors = {"A": [True, False, True], "B": [True, False, True]}
    pearson_matrix, jaccard_table = failure_decorrelation(vectors)
    assert pearson_matrix["A"]["B"] == pytest.approx(1.0)
    assert jaccard_table["A-B"] == 1.0


def test_failure_decorrelation_constant_vector_null():
    vectors = {"A": [True, True, True], "B": [True, False, True]}
    pearson_matrix, _ = failure_decorrelation(vectors)
    assert pearson_matrix["A"]["B"] is None
    assert pearson_matrix["A"]["A"] == 1.0


def test_failure_decorrelation_matches_oracles():
    rng = random.Random(77)
    for _ in range(20):
        n = rng.randint(4, 12)
        vectors = {
            "A": [rng.random() < 0.5 for _ in range(n)],
            "B": [rng.random() < 0.5 for _ in range(n)],
        }
        pearson_matrix, jaccard_table = failure_decorrelation(vectors)
        expected_r = pearson_textbook(
            [1.0 if f else 0.0 for f in vectors["A"]],
            [1.0 if f else 0.0 for f in vectors["B"]],
        )
        if expected_r is None:
            assert pearson_matrix["A"]["B"] is None
        else:
            assert pearson_matrix["A"]["B"] == pytest.approx(expected_r)
        expected_j = jaccard_textbook(
            {i for i, f in enumerate(vectors["A"]) if f},
            {i for i, f in enumerate(vectors["B"]) if f},
        )
        assert jaccard_table["A-B"] == pytest.approx(expected_j)


# -- ensemble oracle ------------------------------------------------------------------

def test_ensemble_single_system_degenerate():
    table = {"A": [50.0, 5.0, 30.0]}
    stat = ensemble_oracle(table, ["A"])
    assert stat.mean_score == pytest.approx(85 / 3)
    assert stat.fail_rate == pytest.approx(1 / 3)
    assert stat.perfect_rate == pytest.approx(1 / 3)


def test_ensemble_crossing_failures():
    table = {"A": [50.0, 5.0], "B": [5.0, 50.0]}
    for system in ("A", "B"):
        assert ensemble_oracle(table, [system]).fail_rate == 0.5
    both = ensemble_oracle(table, ["A", "B"])
    assert both.fail_rate == 0.0
    assert both.perfect_rate == 1.0


def test_ensemble_errors():
    with pytest.raises(EmptySubset):
        ensemble_oracle({"A": [1.0]}, [])
    with pytest.raises(MissingSystem):
        ensemble_oracle({"A": [1.0]}, ["B"])


def test_ensemble_monotonicity_random():
    rng = random.Random(31)
    systems = ["A", "B", "C", "D"]
    for _ in range(100):
        n = rng.randint(1, 20)
        table = {s: [float(rng.randint(0, 50)) for _ in range(n)] for s in systems}
        full = ensemble_oracle(table, systems).fail_rate
        singles = [ensemble_oracle(table, [s]).fail_rate for s in systems]
        assert full <= min(singles) + 1e-12
        for i in range(4):
            for j in range(i + 1, 4):
                pair = ensemble_oracle(table, [systems[i], systems[j]]).fail_rate
                assert full <= pair + 1e-12


# -- cost model -------------------------------------------------------------------------

PRICES = {
    "big-reasoner": ModelPrice(input_per_million=1.75, output_per_million=14.0, reasoning=True),
    "small-instruct": ModelPrice(input_per_million=0.10, output_per_million=0.30, reasoning=False),
}


def test_cost_multiplier_ratios():
    budget = TokenBudget(input_tokens=1000, output_tokens=300)
    rag = cost_estimate(PRICES, "small-instruct", "RAG", "simple", budget)
    hrag = cost_estimate(PRICES, "small-instruct", "HRAG", "simple", budget)
    agrag = cost_estimate(PRICES, "small-instruct", "AGRAG", "simple", budget)
    assert hrag == 5.0 * rag
    assert agrag == 3.5 * rag


def test_cost_zero_budget():
    budget = TokenBudget(input_tokens=0, output_tokens=0)
    assert cost_estimate(PRICES, "big-reasoner", "HRAG", "simple", budget) == 0.0


def test_cost_non_reasoning_category_invariant():
    budget = TokenBudget(
        input_tokens=1000,
        output_tokens=300,
        reasoning_tokens_by_category={"simple": 100, "multi_hop": 4000},
    )
    costs = {
        cat: cost_estimate(PRICES, "small-instruct", "GRAG", cat, budget)
        for cat in ("simple", "single_hop", "multi_hop", "guided", "unanswerable")
    }
    assert len(set(costs.values())) == 1


def test_cost_reasoning_category_dependent():
    budget = TokenBudget(
        input_tokens=1000,
        output_tokens=300,
        reasoning_tokens_by_category={"simple": 100, "multi_hop": 4000},
    )
    simple = cost_estimate(PRICES, "big-reasoner", "GRAG", "simple", budget)
    multi = cost_estimate(PRICES, "big-reasoner", "GRAG", "multi_hop", budget)
    assert multi > simple


def test_cost_missing_price():
    budget = TokenBudget(input_tokens=1, output_tokens=1)
    with pytest.raises(MissingPrice):
        cost_estimate(PRICES, "unknown-model", "RAG", "simple", budget)
    with pytest.raises(MissingSystem):
        cost_estimate(PRICES, "big-reasoner", "XRAG", "simple", budget)


# -- question features -------------------------------------------------------------------

def test_question_features_flags():
    features = question_features("Which CVEs and tools appeared in January 2024?", "CVE-1 CVE-2")
    assert features["contains_which"] == 1.0
    assert features["multi_entity"] == 1.0
    assert features["temporal_reference"] == 1.0
    assert features["gold_answer_words"] == 2.0
    features = question_features("How many incidents happened?", "3")
    assert features["contains_how_many"] == 1.0
    assert features["contains_which"] == 0.0


def test_feature_correlation_identical_vector():
    items = [
        {"question": "which one?", "gold_answer": "a"},
        {"question": "name it", "gold_answer": "b"},
        {"question": "which two?", "gold_answer": "c"},
        {"question": "say it", "gold_answer": "d"},
    ]
    fails = {"SYS": [True, False, True, False]}  # equals contains_which
    table = feature_failure_correlation(items, fails)
    assert table["contains_which"]["SYS"] == pytest.approx(1.0)


def test_feature_correlation_constant_feature_null():
    items = [{"question": "alpha beta", "gold_answer": "x"}] * 4
    fails = {"SYS": [True, False, True, False]}
    table = feature_failure_correlation(items, fails)
    assert table["question_words"]["SYS"] is None


def test_feature_correlation_matches_textbook():
    rng = random.Random(13)
    items = []
    for _ in range(6):
        words = " ".join("w" * 1 for _ in range(rng.randint(3, 12)))
        items.append({"question": words, "gold_answer": "g " * rng.randint(1, 5)})
    fails = {"SYS": [rng.random() < 0.5 for _ in range(6)]}
    table = feature_failure_correlation(items, fails)
    xs = [float(len(item["question"].split())) for item in items]
    ys = [1.0 if f else 0.0 for f in fails["SYS"]]
    expected = pearson_textbook(xs, ys)
    if expected is None:
        assert table["question_words"]["SYS"] is None
    else:
        assert table["question_words"]["SYS"] == pytest.approx(expected)


def test_pearson_or_none_matches_numpy():
    rng = random.Random(4)
    xs = [rng.uniform(0, 1) for _ in range(25)]
    ys = [rng.uniform(0, 1) for _ in range(25)]
    assert pearson_or_none(xs, ys) == pytest.approx(float(np.corrcoef(xs, ys)[0, 1]))
