"""Classical answer metrics, the equal-weight composite, and judge aggregation.

Token metrics normalize by lowercasing, stripping punctuation and splitting
on whitespace. Degenerate cases follow one convention everywhere: two empty
strings score 1.0, exactly one empty scores 0.0. BLEU uses add-one smoothed
n-gram precisions (n up to 4) so short answers do not zero out.

Judge totals are always recomputed locally as 4*c1 + 3*c2 + 2*c3 + c4; the
LLM's own arithmetic is never trusted.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .gateway import Gateway, JsonParseError, PromptRole

_PUNCT = re.compile(r"[^\w\s-]")

JUDGE_WEIGHTS = (4, 3, 2, 1)
JUDGE_MAX_TOTAL = 50

REFUSAL_PHRASE = "insufficient information in the provided context"
_REFUSAL_MARKERS = (
    REFUSAL_PHRASE,
    "i don't know",
    "i do not know",
    "cannot be answered",
    "no information available",
)


def is_refusal_text(text: str) -> bool:
    lowered = (text or "").lower()
    return any(marker in lowered for marker in _REFUSAL_MARKERS)


def normalize_tokens(text: str) -> List[str]:
    cleaned = _PUNCT.sub(" ", (text or "").lower())
    return cleaned.split()


# -- classical metrics ---------------------------------------------------------

def token_f1(candidate: str, reference: str) -> float:
    """Harmonic mean of token precision/recall over normalized multisets."""
    cand = normalize_tokens(candidate)
    ref = normalize_tokens(reference)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    counts: Dict[str, int] = {}
    for tok in ref:
        counts[tok] = counts.get(tok, 0) + 1
    overlap = 0
    for tok in cand:
        if counts.get(tok, 0) > 0:
            counts[tok] -= 1
            overlap += 1
    if overlap == 0:
        return 0.0
    precision = overlap / len(cand)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def _ngrams(tokens: Sequence[str], n: int) -> Dict[Tuple[str, ...], int]:
    grams: Dict[Tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i : i + n])
        grams[gram] = grams.get(gram, 0) + 1
    return grams


def bleu(candidate: str, reference: str) -> float:
    """Sentence BLEU, up to 4-grams, add-one smoothing, brevity penalty.

    Pairs with no unigram overlap score 0; smoothing only rescues the
    higher-order n-grams of short answers.
    """
    cand = normalize_tokens(candidate)
    ref = normalize_tokens(reference)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        cand_grams = _ngrams(cand, n)
        ref_grams = _ngrams(ref, n)
        total = sum(cand_grams.values())
        matched = sum(min(count, ref_grams.get(gram, 0)) for gram, count in cand_grams.items())
        if n == 1 and matched == 0:
            return 0.0
        log_sum += math.log((matched + 1.0) / (total + 1.0))
    precision_term = math.exp(log_sum / 4.0)
    brevity = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return brevity * precision_term


def rouge1(candidate: str, reference: str) -> float:
    """Unigram overlap F-measure (same clipped-count F as token_f1)."""
    return token_f1(candidate, reference)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    rows = len(a) + 1
    prev = [0] * (len(b) + 1)
    for i in range(1, rows):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rougeL(candidate: str, reference: str) -> float:
    """Longest-common-subsequence F-measure."""
    cand = normalize_tokens(candidate)
    ref = normalize_tokens(reference)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


class OutOfRange(ValueError):
    pass


def composite(f1: float, bleu_score: float, r1: float, rl: float, semsim: float) -> float:
    """Equal-weight mean of the five components."""
    values = (f1, bleu_score, r1, rl, semsim)
    for value in values:
        if not 0.0 <= value <= 1.0:
            raise OutOfRange(f"metric component {value} outside [0, 1]")
    return sum(values) / 5.0


@dataclass
class MetricVector:
    f1: float
    bleu: float
    rouge1: float
    rougeL: float
    semsim: float
    composite: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "f1": self.f1,
            "bleu": self.bleu,
            "rouge1": self.rouge1,
            "rougeL": self.rougeL,
            "semsim": self.semsim,
            "composite": self.composite,
        }


def semantic_similarity(candidate: str, reference: str, gateway: Gateway) -> float:
    """Embedding-cosine stand-in for BERTScore, clipped to [0, 1].

    Under the mock provider's hashed bag-of-words embeddings this reduces to
    normalized token overlap.
    """
    cand = (candidate or "").strip()
    ref = (reference or "").strip()
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    vec_c, vec_r = gateway.embed([cand, ref])
    norm_c = float(np.linalg.norm(vec_c))
    norm_r = float(np.linalg.norm(vec_r))
    if norm_c == 0.0 or norm_r == 0.0:
        return 0.0
    value = float(np.dot(vec_c, vec_r) / (norm_c * norm_r))
    return min(1.0, max(0.0, value))


def score_answer(candidate: str, reference: str, gateway: Gateway) -> MetricVector:
    f1 = token_f1(candidate, reference)
    bl = bleu(candidate, reference)
    r1 = rouge1(candidate, reference)
    rl = rougeL(candidate, reference)
    ss = semantic_similarity(candidate, reference, gateway)
    return MetricVector(f1=f1, bleu=bl, rouge1=r1, rougeL=rl, semsim=ss, composite=composite(f1, bl, r1, rl, ss))


# -- LLM-as-a-judge -------------------------------------------------------------

class JudgeParseError(ValueError):
    pass


@dataclass
class JudgeScore:
    c1_agreement: int
    c2_adequacy: int
    c3_faithfulness: int
    c4_clarity: int
    weighted_total: int = field(init=False)
    comments: str = ""
    rank: float = 0.0

    def __post_init__(self):
        self.weighted_total = weighted_total(
            self.c1_agreement, self.c2_adequacy, self.c3_faithfulness, self.c4_clarity
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c1": self.c1_agreement,
            "c2": self.c2_adequacy,
            "c3": self.c3_faithfulness,
            "c4": self.c4_clarity,
            "total": self.weighted_total,
            "rank": self.rank,
            "comments": self.comments,
        }


def weighted_total(c1: int, c2: int, c3: int, c4: int) -> int:
    """4*C1 + 3*C2 + 2*C3 + C4, maximum 50 at (5,5,5,5)."""
    for value in (c1, c2, c3, c4):
        if not 0 <= value <= 5:
            raise OutOfRange(f"criterion score {value} outside 0..5")
    w1, w2, w3, w4 = JUDGE_WEIGHTS
    return w1 * c1 + w2 * c2 + w3 * c3 + w4 * c4


def average_ranks(totals: Sequence[float]) -> List[float]:
    """Rank 1 = highest total; tied values share the mean of their positions."""
    order = sorted(range(len(totals)), key=lambda i: -totals[i])
    ranks = [0.0] * len(totals)
    position = 0
    while position < len(order):
        end = position
        while end + 1 < len(order) and totals[order[end + 1]] == totals[order[position]]:
            end += 1
        shared = (position + 1 + end + 1) / 2.0
        for k in range(position, end + 1):
            ranks[order[k]] = shared
        position = end + 1
    return ranks


def _coerce_criterion(value: Any) -> int:
    try:
        number = int(round(float(value)))
    except (TypeError, ValueError):
        raise JudgeParseError(f"criterion score {value!r} is not numeric")
    return min(5, max(0, number))


def judge(
    question: str,
    gold: str,
    answers_by_system: Dict[str, str],
    gateway: Gateway,
) -> Dict[str, JudgeScore]:
    """One judge call scoring all systems; totals and ranks computed locally.

    Refusal rule: when the gold answer is empty (unanswerable) a candidate
    that clearly abstains gets full agreement, adequacy and faithfulness.
    """
    rendered = "\n".join(f"[{system}] {answer}" for system, answer in answers_by_system.items())
    try:
        parsed = gateway.ask_json(
            PromptRole.JUDGE,
            question=question,
            gold=gold if gold.strip() else "(no answer exists; candidates should abstain)",
            answers=rendered,
        )
    except JsonParseError as err:
        raise JudgeParseError(str(err)) from err
    if not isinstance(parsed, dict):
        raise JudgeParseError("judge reply must be a JSON object keyed by system")

    unanswerable = not gold.strip()
    scores: Dict[str, JudgeScore] = {}
    for system, answer in answers_by_system.items():
        cell = parsed.get(system)
        if not isinstance(cell, dict):
            raise JudgeParseError(f"judge reply missing system {system!r}")
        c1 = _coerce_criterion(cell.get("c1"))
        c2 = _coerce_criterion(cell.get("c2"))
        c3 = _coerce_criterion(cell.get("c3"))
        c4 = _coerce_criterion(cell.get("c4"))
        if unanswerable and is_refusal_text(answer):
            c1, c2, c3 = 5, 5, 5
        scores[system] = JudgeScore(c1, c2, c3, c4, comments=str(cell.get("comment", "")))

    systems = list(answers_by_system)
    ranks = average_ranks([scores[s].weighted_total for s in systems])
    for system, rank in zip(systems, ranks):
        scores[system].rank = rank
    return scores


# -- rubric validation -----------------------------------------------------------

class DegenerateVariance(ValueError):
    pass


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys) or len(xs) < 2:
        raise DegenerateVariance("need two aligned samples of length >= 2")
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    sx = x.std()
    sy = y.std()
    if sx == 0.0 or sy == 0.0:
        raise DegenerateVariance("constant input has no correlation")
    return float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))


def criterion_correlations(scores: Sequence[JudgeScore]) -> List[List[float]]:
    """4x4 Pearson matrix over (c1, c2, c3, c4) columns."""
    columns = [
        [s.c1_agreement for s in scores],
        [s.c2_adequacy for s in scores],
        [s.c3_faithfulness for s in scores],
        [s.c4_clarity for s in scores],
    ]
    matrix = [[1.0] * 4 for _ in range(4)]
    for i in range(4):
        for j in range(i + 1, 4):
            value = pearson(columns[i], columns[j])
            matrix[i][j] = value
            matrix[j][i] = value
    return matrix
