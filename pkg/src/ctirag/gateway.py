"""Uniform LLM access for every prompt role, with two providers: an
OpenAI-compatible HTTP backend and a deterministic scripted mock.

The mock replays scripted responses keyed by (role, match substring) in
order; running past the end of a list raises MockExhausted rather than
silently repeating, so tests pin the exact number of calls a pipeline makes.
Mock time is simulated: each scripted response can carry a latency that
advances the provider clock, which makes latency analytics reproducible
offline.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .graph_store import Ontology


class ProviderError(Exception):
    pass


class MockExhausted(ProviderError):
    pass


class MissingSlot(KeyError):
    pass


class JsonParseError(ValueError):
    pass


class PromptRole(str, Enum):
    INGEST_TO_CYPHER = "INGEST_TO_CYPHER"
    FEWSHOT_PAIRS = "FEWSHOT_PAIRS"
    QA_FROM_CYPHER = "QA_FROM_CYPHER"
    GUIDED_QA = "GUIDED_QA"
    ANSWER_RAG = "ANSWER_RAG"
    GEN_CYPHER = "GEN_CYPHER"
    CRITIQUE_CYPHER = "CRITIQUE_CYPHER"
    SYNTHESIZE_HYBRID = "SYNTHESIZE_HYBRID"
    JUDGE = "JUDGE"
    GUARDRAIL = "GUARDRAIL"


TEMPLATES: Dict[PromptRole, str] = {
    PromptRole.INGEST_TO_CYPHER: (
        "You convert cyber-threat-intelligence reports into Cypher MERGE statements.\n"
        "Use only these entity labels, relationship types and properties:\n{schema}\n"
        "Every node needs a name property. Output one Cypher statement, nothing else.\n"
        "{feedback}Report:\n{report}"
    ),
    PromptRole.FEWSHOT_PAIRS: (
        "Produce {count} (question, cypher) example pairs as a strict JSON list of\n"
        "objects with keys \"question\" and \"cypher\". Queries must be read-only,\n"
        "use only this schema:\n{schema}\n"
        "and stay answerable from these ingested statements:\n{statements}"
    ),
    PromptRole.QA_FROM_CYPHER: (
        "Generate evaluation questions from these ingested Cypher statements:\n{statements}\n"
        "Schema:\n{schema}\n"
        "Needed: {needs}. Answer with a strict JSON list of objects with keys\n"
        "\"category\", \"question\", \"cypher\" where cypher is a read-only query\n"
        "producing the gold answer (for unanswerable items it must return no rows)."
    ),
    PromptRole.GUIDED_QA: (
        "Generate {needs} analyst-style questions guided by this external report:\n{document}\n"
        "Questions must reference entities present in the knowledge graph (schema:\n{schema}).\n"
        "Answer with a strict JSON list of objects with keys \"question\", \"answer\",\n"
        "\"multi_hop\" (boolean)."
    ),
    PromptRole.ANSWER_RAG: (
        "Answer the question using only the provided context. If the context does\n"
        "not contain the answer, reply exactly: insufficient information in the\n"
        "provided context.\nContext:\n{context}\nQuestion: {question}"
    ),
    PromptRole.GEN_CYPHER: (
        "Translate the question into a single read-only Cypher query.\n"
        "Schema:\n{schema}\nExamples:\n{fewshots}\n{feedback}Question: {question}\n"
        "Return only the Cypher query."
    ),
    PromptRole.CRITIQUE_CYPHER: (
        "Critically assess this Cypher query for the question below.\n"
        "Schema:\n{schema}\nQuestion: {question}\nQuery:\n{cypher}\nObserved result:\n{results}\n"
        "{feedback}Reply with strict JSON: {{\"verdict\": \"approve\"|\"refine\"|\"cannot_answer\","
        " \"cypher\": \"...\", \"comment\": \"...\"}}."
    ),
    PromptRole.SYNTHESIZE_HYBRID: (
        "Combine the evidence into one concise answer. Prefer the graph results\n"
        "for exact facts; use the text snippets to fill gaps. If neither source\n"
        "supports an answer, reply exactly: insufficient information in the\n"
        "provided context.\nGraph results:\n{graph_results}\nText snippets:\n{text_snippets}\n"
        "Question: {question}"
    ),
    PromptRole.JUDGE: (
        "Score each candidate answer against the reference on four criteria\n"
        "(0-5 integers): c1 agreement, c2 adequacy, c3 faithfulness, c4 clarity.\n"
        "Reply with strict JSON mapping system name to {{\"c1\":..,\"c2\":..,\"c3\":..,\"c4\":..,"
        "\"comment\":\"...\"}}.\nQuestion: {question}\nReference: {gold}\nCandidates:\n{answers}"
    ),
    PromptRole.GUARDRAIL: (
        "Is the following question about cyber threat intelligence? Reply ACCEPT\n"
        "or REJECT.\nQuestion: {question}"
    ),
}


def render_prompt(role: PromptRole, **slots: str) -> str:
    template = TEMPLATES[role]
    wanted = set(re.findall(r"(?<!\{)\{([a-z_]+)\}", template))
    missing = wanted - set(slots)
    if missing:
        raise MissingSlot(f"{role.value} prompt missing slots: {sorted(missing)}")
    safe = template.replace("{{", "\x00").replace("}}", "\x01")
    for name in wanted:
        safe = safe.replace("{" + name + "}", str(slots[name]))
    return safe.replace("\x00", "{").replace("\x01", "}")


@dataclass
class LlmRequest:
    role: PromptRole
    prompt: str
    model: str = "mock"
    temperature: float = 0.0
    max_tokens: int = 1024


@dataclass
class LlmResponse:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0
    reasoning_tokens: int = 0
    latency_s: float = 0.0


@dataclass
class CallRecord:
    request: LlmRequest
    response: LlmResponse


# -- providers --------------------------------------------------------------------

EMBED_DIM = 128


def hashed_bow_embedding(text: str, dim: int = EMBED_DIM) -> np.ndarray:
    """Deterministic bag-of-words embedding: md5-hashed token counts, L2-normalized."""
    vec = np.zeros(dim, dtype=float)
    for token in re.findall(r"[a-z0-9][a-z0-9_\-\.]*", text.lower()):
        slot = int(hashlib.md5(token.encode("utf-8")).hexdigest(), 16) % dim
        vec[slot] += 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


class ScriptedMockProvider:
    """Replays scripted responses; never invents output.

    Script entries: {"role": str, "match": str, "responses": [str | object]}
    where an object response may set text, latency_s and token usage. The
    entry whose match string is the longest substring of the rendered prompt
    wins ("*" matches anything).
    """

    def __init__(self, script: Iterable[Dict[str, Any]], embed_dim: int = EMBED_DIM):
        self._entries: List[Dict[str, Any]] = []
        for entry in script:
            self._entries.append(
                {
                    "role": str(entry["role"]),
                    "match": str(entry.get("match", "*")),
                    "responses": list(entry["responses"]),
                    "cursor": 0,
                }
            )
        self._embed_dim = embed_dim
        self._clock = 0.0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str) -> "ScriptedMockProvider":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def now(self) -> float:
        with self._lock:
            return self._clock

    def complete(self, request: LlmRequest) -> LlmResponse:
        with self._lock:
            best = None
            best_len = -1
            for entry in self._entries:
                if entry["role"] != request.role.value:
                    continue
                match = entry["match"]
                if match == "*":
                    length = 0
                elif match in request.prompt:
                    length = len(match)
                else:
                    continue
                if length > best_len:
                    best = entry
                    best_len = length
            if best is None:
                raise ProviderError(
                    f"no mock script entry for role {request.role.value} matches this prompt"
                )
            if best["cursor"] >= len(best["responses"]):
                raise MockExhausted(
                    f"mock script for ({request.role.value}, {best['match']!r}) is exhausted "
                    f"after {best['cursor']} responses"
                )
            raw = best["responses"][best["cursor"]]
            best["cursor"] += 1
            if isinstance(raw, str):
                raw = {"text": raw}
            text = str(raw.get("text", ""))
            latency = float(raw.get("latency_s", 0.0))
            usage = raw.get("usage", {})
            self._clock += latency
            return LlmResponse(
                text=text,
                input_tokens=int(usage.get("input", len(request.prompt) // 4)),
                output_tokens=int(usage.get("output", len(text) // 4)),
                reasoning_tokens=int(usage.get("reasoning", 0)),
                latency_s=latency,
            )

    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        return [hashed_bow_embedding(text, self._embed_dim) for text in texts]


class HttpProvider:
    """OpenAI-compatible chat/embeddings client (stdlib urllib, no streaming)."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        model: str = "gpt-4.1-mini",
        embed_model: str = "text-embedding-3-large",
        timeout_s: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.embed_model = embed_model
        self.timeout_s = timeout_s

    def now(self) -> float:
        return time.monotonic()

    def _post(self, path: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        req = urllib.request.Request(
            self.base_url + path,
            data=json.dumps(payload).encode("utf-8"),
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {self.api_key}",
            },
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as err:
            detail = err.read().decode("utf-8", errors="replace")[:500]
            raise ProviderError(f"HTTP {err.code} from provider: {detail}") from err
        except (urllib.error.URLError, TimeoutError, OSError) as err:
            raise ProviderError(f"provider unreachable: {err}") from err

    def complete(self, request: LlmRequest) -> LlmResponse:
        started = time.monotonic()
        data = self._post(
            "/chat/completions",
            {
                "model": request.model if request.model != "mock" else self.model,
                "messages": [{"role": "user", "content": request.prompt}],
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            },
        )
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as err:
            raise ProviderError(f"malformed completion response: {err}") from err
        usage = data.get("usage", {})
        details = usage.get("completion_tokens_details", {}) or {}
        return LlmResponse(
            text=text,
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            reasoning_tokens=int(details.get("reasoning_tokens", 0)),
            latency_s=time.monotonic() - started,
        )

    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        if not texts:
            return []
        data = self._post("/embeddings", {"model": self.embed_model, "input": list(texts)})
        try:
            rows = sorted(data["data"], key=lambda row: row["index"])
            return [np.asarray(row["embedding"], dtype=float) for row in rows]
        except (KeyError, TypeError) as err:
            raise ProviderError(f"malformed embeddings response: {err}") from err


# -- guardrail --------------------------------------------------------------------

DEFAULT_CTI_KEYWORDS = (
    "cve", "cvss", "malware", "ransomware", "trojan", "worm", "spyware", "botnet",
    "backdoor", "rootkit", "phishing", "exploit", "exploited", "vulnerability",
    "vulnerable", "threat", "actor", "apt", "attack", "attacked", "attacker",
    "campaign", "incident", "breach", "compromise", "compromised", "intrusion",
    "c2", "command-and-control", "ioc", "ttp", "mitre", "sector", "mitigation",
    "patch", "zero-day", "payload", "lateral", "exfiltration",
)

CVE_ID_PATTERN = re.compile(r"cve-\d{4}-\d{4,7}", re.IGNORECASE)


class Guardrail:
    """Keyword/entity-name domain check; extra terms usually come from graph names."""

    def __init__(self, keywords: Sequence[str] = DEFAULT_CTI_KEYWORDS, extra_terms: Sequence[str] = ()):
        self.keywords = {kw.lower() for kw in keywords}
        self.extra_terms = [term.lower() for term in extra_terms if term.strip()]

    def check(self, question: str) -> str:
        text = (question or "").lower()
        if not text.strip():
            return "REJECT"
        if CVE_ID_PATTERN.search(text):
            return "ACCEPT"
        tokens = set(re.findall(r"[a-z0-9][a-z0-9_\-]*", text))
        if tokens & self.keywords:
            return "ACCEPT"
        for term in self.extra_terms:
            if term in text:
                return "ACCEPT"
        return "REJECT"


class LlmGuardrail(Guardrail):
    """Optional classifier-backed variant: asks the provider through the
    GUARDRAIL role and falls back to the keyword matcher on provider errors
    or unparseable replies."""

    def __init__(self, provider, model: str = "mock", **kwargs):
        super().__init__(**kwargs)
        self.provider = provider
        self.model = model

    def check(self, question: str) -> str:
        if not (question or "").strip():
            return "REJECT"
        request = LlmRequest(
            role=PromptRole.GUARDRAIL,
            prompt=render_prompt(PromptRole.GUARDRAIL, question=question),
            model=self.model,
        )
        try:
            verdict = self.provider.complete(request).text.strip().upper()
        except ProviderError:
            return super().check(question)
        if verdict.startswith("ACCEPT"):
            return "ACCEPT"
        if verdict.startswith("REJECT"):
            return "REJECT"
        return super().check(question)


# -- gateway ------------------------------------------------------------------------

class Gateway:
    """Front door for every prompt role; records a call log for cost accounting."""

    def __init__(self, provider, guardrail: Optional[Guardrail] = None, model: str = "mock"):
        self.provider = provider
        self.guardrail = guardrail or Guardrail()
        self.model = model
        self.call_log: List[CallRecord] = []
        self._log_lock = threading.Lock()

    def now(self) -> float:
        return self.provider.now()

    def complete(self, request: LlmRequest) -> LlmResponse:
        response = self.provider.complete(request)
        with self._log_lock:
            self.call_log.append(CallRecord(request, response))
        return response

    def ask(self, role: PromptRole, temperature: float = 0.0, max_tokens: int = 1024, **slots) -> LlmResponse:
        request = LlmRequest(
            role=role,
            prompt=render_prompt(role, **slots),
            model=self.model,
            temperature=temperature,
            max_tokens=max_tokens,
        )
        return self.complete(request)

    def ask_json(self, role: PromptRole, **slots) -> Any:
        """Structured-output call: one re-ask on malformed JSON, then error."""
        response = self.ask(role, **slots)
        parsed = try_parse_json(response.text)
        if parsed is not None:
            return parsed
        retry_slots = dict(slots)
        if "feedback" in _template_slots(role):
            retry_slots["feedback"] = (
                "Previous reply was not valid JSON. Output only strict JSON.\n"
            )
        response = self.ask(role, **retry_slots)
        parsed = try_parse_json(response.text)
        if parsed is None:
            raise JsonParseError(f"{role.value} did not return valid JSON after one re-ask")
        return parsed

    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        return self.provider.embed(texts)

    def embed_one(self, text: str) -> np.ndarray:
        return self.embed([text])[0]

    def guardrail_check(self, question: str) -> str:
        return self.guardrail.check(question)

    def total_usage(self) -> Dict[str, int]:
        totals = {"input": 0, "output": 0, "reasoning": 0, "calls": 0}
        with self._log_lock:
            for record in self.call_log:
                totals["input"] += record.response.input_tokens
                totals["output"] += record.response.output_tokens
                totals["reasoning"] += record.response.reasoning_tokens
                totals["calls"] += 1
        return totals

    def calls_for_role(self, role: PromptRole) -> List[CallRecord]:
        with self._log_lock:
            return [r for r in self.call_log if r.request.role == role]


def _template_slots(role: PromptRole) -> set:
    return set(re.findall(r"(?<!\{)\{([a-z_]+)\}", TEMPLATES[role]))


def try_parse_json(text: str) -> Optional[Any]:
    """Parse JSON possibly wrapped in code fences or prose; None on failure."""
    candidate = (text or "").strip()
    if not candidate:
        return None
    if candidate.startswith("```"):
        candidate = re.sub(r"^```[a-zA-Z]*\n?", "", candidate)
        candidate = re.sub(r"\n?```$", "", candidate).strip()
    try:
        return json.loads(candidate)
    except json.JSONDecodeError:
        pass
    for opener, closer in (("{", "}"), ("[", "]")):
        start = candidate.find(opener)
        end = candidate.rfind(closer)
        if start != -1 and end > start:
            try:
                return json.loads(candidate[start : end + 1])
            except json.JSONDecodeError:
                continue
    return None


def schema_description(ontology: Ontology) -> str:
    """Plain-text schema block injected into prompts."""
    lines = [
        "Entity labels: " + ", ".join(ontology.entity_types),
        "Relationship types: " + ", ".join(ontology.relationship_types),
        "Node properties: name, summary (Country also: code)",
        "Relationship properties: date, evidence, source_id, page",
    ]
    return "\n".join(lines)
