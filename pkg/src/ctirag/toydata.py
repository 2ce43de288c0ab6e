"""Bundled 3-report toy corpus plus a deterministic mock script covering the
whole workflow: ingestion, few-shot pairs, QA generation, 66 questions
answered by all four systems, and judging.

The script is generated from the corpus definitions below, so the gold
answers the QA factory derives by executing each item's query always agree
with the scripted pipeline answers.
"""

from __future__ import annotations

import json
import os
from typing import Any, Dict, List, Tuple

from .cypher import execute, parse
from .cypher.validate import validate_text
from .graph_store import DEFAULT_ONTOLOGY, PropertyGraph
from .qa_factory import render_gold
from .scoring import REFUSAL_PHRASE

TOY_REPORTS: Dict[str, str] = {
    "report-apt37.txt": (
        "APT37, a North Korean espionage group, exploited CVE-2022-41128 in the "
        "Internet Explorer JScript9 engine during the APT37 Internet Explorer "
        "incident of November 2022. The group deployed the RokRAT remote access "
        "trojan against media organizations, and the intrusion occurred in South "
        "Korea. RokRAT abuses cloud storage services for command and control."
    ),
    "report-lockbit.txt": (
        "The LockBit ransomware group attacked Prestige Hospital, a regional "
        "healthcare provider in the United States, in January 2024. LockBit "
        "exploited CVE-2023-4966, the Citrix Bleed session hijack flaw, for "
        "initial access and relied on the StealBit data exfiltration tool. The "
        "campaign, tracked as Operation Bleed, deployed the LockBit 3.0 payload "
        "against the healthcare sector and was motivated by financial gain."
    ),
    "report-lazarus.txt": (
        "Lazarus Group, also tracked as Hidden Cobra, exploited CVE-2024-0204 in "
        "Fortra GoAnywhere MFT during the GoAnywhere MFT intrusions of February "
        "2024. The group used the MagicRAT malware and spearphishing against "
        "financial institutions, with activity observed in Japan. Applying the "
        "GoAnywhere patch mitigates CVE-2024-0204."
    ),
}

GUIDED_DOC = (
    "Annual threat review. Ransomware crews such as LockBit continued to attack "
    "healthcare providers, while state-aligned actors like APT37 and Lazarus "
    "Group exploited browser and file-transfer flaws including CVE-2022-41128 "
    "and CVE-2024-0204. Analysts should track exploited CVEs, abused tools such "
    "as StealBit and GoAnywhere MFT, and the sectors each malware family "
    "targets, and should patch aggressively when mitigations are published."
)

REPORT_CYPHER: Dict[str, str] = {
    "report-apt37.txt": (
        'MERGE (a:ThreatActor {name: "APT37", summary: "North Korean espionage group"}) '
        'MERGE (m:Malware {name: "RokRAT", summary: "remote access trojan"}) '
        'MERGE (c:CVE {name: "CVE-2022-41128", summary: "Internet Explorer JScript9 flaw"}) '
        'MERGE (i:Incident {name: "APT37 Internet Explorer incident"}) '
        'MERGE (s:Sector {name: "Media"}) '
        'MERGE (k:Country {name: "South Korea", code: "KR"}) '
        'MERGE (d:Date {name: "2022-11"}) '
        'MERGE (a)-[:uses {evidence: "deployed the RokRAT remote access trojan"}]->(m) '
        'MERGE (c)-[:exploited_in {date: "2022-11"}]->(i) '
        'MERGE (i)-[:attributed_to]->(a) '
        'MERGE (m)-[:targets_sector]->(s) '
        'MERGE (i)-[:occurred_on]->(d) '
        'MERGE (i)-[:occurred_in]->(k)'
    ),
    "report-lockbit.txt": (
        'MERGE (a:ThreatActor {name: "LockBit", summary: "ransomware operators"}) '
        'MERGE (m:Malware {name: "LockBit 3.0", summary: "ransomware payload"}) '
        'MERGE (c:CVE {name: "CVE-2023-4966", summary: "Citrix Bleed session hijack flaw"}) '
        'MERGE (v:Victim {name: "Prestige Hospital", summary: "regional healthcare provider"}) '
        'MERGE (t:Tool {name: "StealBit", summary: "data exfiltration tool"}) '
        'MERGE (s:Sector {name: "Healthcare"}) '
        'MERGE (k:Country {name: "United States", code: "US"}) '
        'MERGE (g:Campaign {name: "Operation Bleed"}) '
        'MERGE (mo:Motivation {name: "financial gain"}) '
        'MERGE (d:Date {name: "2024-01"}) '
        'MERGE (a)-[:attacked {evidence: "attacked Prestige Hospital", source_id: "report-lockbit", page: 1}]->(v) '
        'MERGE (a)-[:exploits]->(c) '
        'MERGE (a)-[:motivated_by]->(mo) '
        'MERGE (g)-[:involved_tool]->(t) '
        'MERGE (g)-[:involved_malware]->(m) '
        'MERGE (g)-[:attributed_to]->(a) '
        'MERGE (g)-[:occurred_on]->(d) '
        'MERGE (m)-[:targets_sector]->(s) '
        'MERGE (v)-[:located_in]->(k)'
    ),
    "report-lazarus.txt": (
        'MERGE (a:ThreatActor {name: "Lazarus Group", summary: "North Korean state-sponsored group"}) '
        'MERGE (h:ThreatActor {name: "Hidden Cobra", summary: "alias of Lazarus Group"}) '
        'MERGE (m:Malware {name: "MagicRAT", summary: "remote access tool"}) '
        'MERGE (c:CVE {name: "CVE-2024-0204", summary: "GoAnywhere MFT authentication bypass"}) '
        'MERGE (t:Tool {name: "GoAnywhere MFT", summary: "managed file transfer software"}) '
        'MERGE (i:Incident {name: "GoAnywhere MFT intrusions"}) '
        'MERGE (q:Technique {name: "Spearphishing", summary: "targeted phishing lure"}) '
        'MERGE (s:Sector {name: "Financial"}) '
        'MERGE (k:Country {name: "Japan", code: "JP"}) '
        'MERGE (d:Date {name: "2024-02"}) '
        'MERGE (p:Mitigation {name: "GoAnywhere patch", summary: "vendor fix for CVE-2024-0204"}) '
        'MERGE (a)-[:has_alias]->(h) '
        'MERGE (a)-[:exploits]->(c) '
        'MERGE (a)-[:uses {evidence: "used the MagicRAT malware"}]->(m) '
        'MERGE (a)-[:used_technique]->(q) '
        'MERGE (c)-[:exploited_in {date: "2024-02"}]->(i) '
        'MERGE (i)-[:attributed_to]->(a) '
        'MERGE (i)-[:occurred_on]->(d) '
        'MERGE (i)-[:occurred_in]->(k) '
        'MERGE (i)-[:involved_tool]->(t) '
        'MERGE (m)-[:targets_sector]->(s) '
        'MERGE (p)-[:mitigates]->(c)'
    ),
}

FEWSHOT_PAIRS: List[Dict[str, str]] = [
    {
        "question": "Name the malware deployed by the actor called APT37.",
        "cypher": 'MATCH (a:ThreatActor {name: "APT37"})-[:uses]->(m:Malware) RETURN m.name AS name',
    },
    {
        "question": "List every CVE recorded in the graph.",
        "cypher": "MATCH (c:CVE) RETURN c.name AS name",
    },
    {
        "question": "Count the malware families present in the graph.",
        "cypher": "MATCH (m:Malware) RETURN COUNT(m) AS n",
    },
    {
        "question": "Find the sector attacked through the payload of Operation Bleed.",
        "cypher": (
            'MATCH (g:Campaign {name: "Operation Bleed"})-[:involved_malware]->(m:Malware)'
            "-[:targets_sector]->(s:Sector) RETURN s.name AS sector"
        ),
    },
    {
        "question": "Show the country where the GoAnywhere MFT intrusions happened.",
        "cypher": 'MATCH (i:Incident {name: "GoAnywhere MFT intrusions"})-[:occurred_in]->(k:Country) RETURN k.name AS country',
    },
    {
        "question": "Give the date on which Operation Bleed took place.",
        "cypher": 'MATCH (g:Campaign {name: "Operation Bleed"})-[:occurred_on]->(d:Date) RETURN d.name AS date',
    },
]

# category, question, derived read query (gold verified against the graph)
CYPHER_QA: List[Tuple[str, str, str]] = [
    # simple: direct property lookups
    ("simple", "What summary is recorded for the malware RokRAT?",
     'MATCH (m:Malware {name: "RokRAT"}) RETURN m.summary AS summary'),
    ("simple", "What summary is recorded for the threat actor APT37?",
     'MATCH (a:ThreatActor {name: "APT37"}) RETURN a.summary AS summary'),
    ("simple", "What country code is stored for South Korea?",
     'MATCH (k:Country {name: "South Korea"}) RETURN k.code AS code'),
    ("simple", "What country code is stored for the United States?",
     'MATCH (k:Country {name: "United States"}) RETURN k.code AS code'),
    ("simple", "What country code is stored for Japan?",
     'MATCH (k:Country {name: "Japan"}) RETURN k.code AS code'),
    ("simple", "What summary is recorded for the malware MagicRAT?",
     'MATCH (m:Malware {name: "MagicRAT"}) RETURN m.summary AS summary'),
    ("simple", "What summary is recorded for the tool StealBit?",
     'MATCH (t:Tool {name: "StealBit"}) RETURN t.summary AS summary'),
    ("simple", "What summary describes the payload LockBit 3.0?",
     'MATCH (m:Malware {name: "LockBit 3.0"}) RETURN m.summary AS summary'),
    ("simple", "What summary is recorded for CVE-2023-4966?",
     'MATCH (c:CVE {name: "CVE-2023-4966"}) RETURN c.summary AS summary'),
    ("simple", "What summary is recorded for CVE-2024-0204?",
     'MATCH (c:CVE {name: "CVE-2024-0204"}) RETURN c.summary AS summary'),
    ("simple", "What summary is recorded for the technique Spearphishing?",
     'MATCH (q:Technique {name: "Spearphishing"}) RETURN q.summary AS summary'),
    ("simple", "What summary describes the tool GoAnywhere MFT?",
     'MATCH (t:Tool {name: "GoAnywhere MFT"}) RETURN t.summary AS summary'),
    ("simple", "What summary is recorded for the GoAnywhere patch?",
     'MATCH (p:Mitigation {name: "GoAnywhere patch"}) RETURN p.summary AS summary'),
    ("simple", "What summary is recorded for the victim Prestige Hospital?",
     'MATCH (v:Victim {name: "Prestige Hospital"}) RETURN v.summary AS summary'),
    ("simple", "What summary is recorded for the threat actor Lazarus Group?",
     'MATCH (a:ThreatActor {name: "Lazarus Group"}) RETURN a.summary AS summary'),
    # single-hop: one relationship traversal
    ("single_hop", "Which malware family does APT37 deploy?",
     'MATCH (a:ThreatActor {name: "APT37"})-[:uses]->(m:Malware) RETURN m.name AS name'),
    ("single_hop", "Which CVE was exploited in the APT37 Internet Explorer incident?",
     'MATCH (c:CVE)-[:exploited_in]->(i:Incident {name: "APT37 Internet Explorer incident"}) RETURN c.name AS cve'),
    ("single_hop", "Which sector does RokRAT target?",
     'MATCH (m:Malware {name: "RokRAT"})-[:targets_sector]->(s:Sector) RETURN s.name AS sector'),
    ("single_hop", "Which threat actor is the APT37 Internet Explorer incident attributed to?",
     'MATCH (i:Incident {name: "APT37 Internet Explorer incident"})-[:attributed_to]->(a:ThreatActor) RETURN a.name AS actor'),
    ("single_hop", "Which victim did LockBit attack?",
     'MATCH (a:ThreatActor {name: "LockBit"})-[:attacked]->(v:Victim) RETURN v.name AS victim'),
    ("single_hop", "Which CVE does LockBit exploit?",
     'MATCH (a:ThreatActor {name: "LockBit"})-[:exploits]->(c:CVE) RETURN c.name AS cve'),
    ("single_hop", "Which motivation is recorded for LockBit?",
     'MATCH (a:ThreatActor {name: "LockBit"})-[:motivated_by]->(mo:Motivation) RETURN mo.name AS motivation'),
    ("single_hop", "Which tool was involved in Operation Bleed?",
     'MATCH (g:Campaign {name: "Operation Bleed"})-[:involved_tool]->(t:Tool) RETURN t.name AS tool'),
    ("single_hop", "Which malware was involved in Operation Bleed?",
     'MATCH (g:Campaign {name: "Operation Bleed"})-[:involved_malware]->(m:Malware) RETURN m.name AS name'),
    ("single_hop", "Which country is Prestige Hospital located in?",
     'MATCH (v:Victim {name: "Prestige Hospital"})-[:located_in]->(k:Country) RETURN k.name AS country'),
    ("single_hop", "Which CVE does Lazarus Group exploit?",
     'MATCH (a:ThreatActor {name: "Lazarus Group"})-[:exploits]->(c:CVE) RETURN c.name AS cve'),
    ("single_hop", "Which technique does Lazarus Group employ?",
     'MATCH (a:ThreatActor {name: "Lazarus Group"})-[:used_technique]->(q:Technique) RETURN q.name AS technique'),
    ("single_hop", "Which alias is recorded for Lazarus Group?",
     'MATCH (a:ThreatActor {name: "Lazarus Group"})-[:has_alias]->(h:ThreatActor) RETURN h.name AS alias'),
    ("single_hop", "Which mitigation addresses CVE-2024-0204?",
     'MATCH (p:Mitigation)-[:mitigates]->(c:CVE {name: "CVE-2024-0204"}) RETURN p.name AS mitigation'),
    ("single_hop", "Which sector does MagicRAT target?",
     'MATCH (m:Malware {name: "MagicRAT"})-[:targets_sector]->(s:Sector) RETURN s.name AS sector'),
    # multi-hop: chained relations, including the aggregate ones
    ("multi_hop", "Which sector is targeted by the malware that APT37 deploys?",
     'MATCH (a:ThreatActor {name: "APT37"})-[:uses]->(m:Malware)-[:targets_sector]->(s:Sector) RETURN s.name AS sector'),
    ("multi_hop", "Which threat actor is blamed for the incident that CVE-2022-41128 was exploited in?",
     'MATCH (c:CVE {name: "CVE-2022-41128"})-[:exploited_in]->(i:Incident)-[:attributed_to]->(a:ThreatActor) RETURN a.name AS actor'),
    ("multi_hop", "Which country hosts the victim that LockBit attacked?",
     'MATCH (a:ThreatActor {name: "LockBit"})-[:attacked]->(v:Victim)-[:located_in]->(k:Country) RETURN k.name AS country'),
    ("multi_hop", "Which sector was hit by the malware involved in Operation Bleed?",
     'MATCH (g:Campaign {name: "Operation Bleed"})-[:involved_malware]->(m:Malware)-[:targets_sector]->(s:Sector) RETURN s.name AS sector'),
    ("multi_hop", "On which date did the incident linked to CVE-2024-0204 occur?",
     'MATCH (c:CVE {name: "CVE-2024-0204"})-[:exploited_in]->(i:Incident)-[:occurred_on]->(d:Date) RETURN d.name AS date'),
    ("multi_hop", "In which country did the incident linked to CVE-2024-0204 occur?",
     'MATCH (c:CVE {name: "CVE-2024-0204"})-[:exploited_in]->(i:Incident)-[:occurred_in]->(k:Country) RETURN k.name AS country'),
    ("multi_hop", "Which sector is targeted by the malware that Lazarus Group deploys?",
     'MATCH (a:ThreatActor {name: "Lazarus Group"})-[:uses]->(m:Malware)-[:targets_sector]->(s:Sector) RETURN s.name AS sector'),
    ("multi_hop", "On which date did the incident attributed to APT37 occur?",
     'MATCH (i:Incident)-[:attributed_to]->(a:ThreatActor {name: "APT37"}) MATCH (i)-[:occurred_on]->(d:Date) RETURN d.name AS date'),
    ("multi_hop", "Which threat actor deploys malware aimed at the Media sector?",
     'MATCH (a:ThreatActor)-[:uses]->(m:Malware)-[:targets_sector]->(s:Sector {name: "Media"}) RETURN a.name AS actor'),
    ("multi_hop", "Which incident involved the CVE fixed by the GoAnywhere patch?",
     'MATCH (p:Mitigation {name: "GoAnywhere patch"})-[:mitigates]->(c:CVE)-[:exploited_in]->(i:Incident) RETURN i.name AS incident'),
    ("multi_hop", "How many malware families does Lazarus Group deploy?",
     'MATCH (a:ThreatActor {name: "Lazarus Group"})-[:uses]->(m:Malware) RETURN COUNT(m) AS n'),
    ("multi_hop", "How many CVE entries exist in the knowledge graph?",
     "MATCH (c:CVE) RETURN COUNT(c) AS n"),
    ("multi_hop", "How many threat actors are recorded in the knowledge graph?",
     "MATCH (a:ThreatActor) RETURN COUNT(a) AS n"),
    ("multi_hop", "Which sectors appear as malware targets across the graph?",
     "MATCH (m:Malware)-[:targets_sector]->(s:Sector) RETURN COLLECT(s.name) AS sectors"),
    ("multi_hop", "How many incidents are attributed to a threat actor?",
     "MATCH (i:Incident)-[:attributed_to]->(a:ThreatActor) RETURN COUNT(i) AS n"),
    # unanswerable: probes that must come back empty on this graph
    ("unanswerable", "What CVSS score is recorded for CVE-2024-21338?",
     'MATCH (c:CVE {name: "CVE-2024-21338"}) RETURN c.name AS name'),
    ("unanswerable", "What exact GoAnywhere MFT version is vulnerable to CVE-2024-0204?",
     'MATCH (t:Tool {name: "GoAnywhere MFT"})-[:has_alias]->(x:Tool) RETURN x.name AS name'),
    ("unanswerable", "Which mitigation addresses CVE-2022-41128?",
     'MATCH (p:Mitigation)-[:mitigates]->(c:CVE {name: "CVE-2022-41128"}) RETURN p.name AS mitigation'),
    ("unanswerable", "Which standalone tool does APT37 rely on?",
     'MATCH (a:ThreatActor {name: "APT37"})-[:uses]->(t:Tool) RETURN t.name AS tool'),
    ("unanswerable", "Which campaign is attributed to APT37?",
     'MATCH (g:Campaign)-[:attributed_to]->(a:ThreatActor {name: "APT37"}) RETURN g.name AS campaign'),
]

GUIDED_QA: List[Dict[str, Any]] = [
    {
        "question": "How does the Operation Bleed campaign illustrate ransomware pressure on healthcare, and which CVE enabled it?",
        "answer": "Operation Bleed shows LockBit extorting the healthcare sector: the crew breached Prestige Hospital after exploiting CVE-2023-4966, the Citrix Bleed flaw, and deployed the LockBit 3.0 payload with the StealBit exfiltration tool.",
        "multi_hop": True,
    },
    {
        "question": "Trace how CVE-2022-41128 connects APT37 to the media sector.",
        "answer": "APT37 exploited CVE-2022-41128 in Internet Explorer during its 2022 incident and then deployed RokRAT, a remote access trojan whose targeting centres on media organizations in South Korea.",
        "multi_hop": True,
    },
    {
        "question": "Why should defenders prioritize the GoAnywhere patch when tracking Lazarus Group activity?",
        "answer": "Because Lazarus Group exploited CVE-2024-0204 in GoAnywhere MFT during the February 2024 intrusions, and the vendor's GoAnywhere patch is the recorded mitigation that closes that authentication bypass.",
        "multi_hop": True,
    },
    {
        "question": "Compare the initial-access flaws used by LockBit and Lazarus Group in the reporting period.",
        "answer": "LockBit leaned on CVE-2023-4966, the Citrix Bleed session hijack, while Lazarus Group abused CVE-2024-0204, an authentication bypass in GoAnywhere MFT; both gave direct access to exposed services.",
        "multi_hop": True,
    },
    {
        "question": "Which sectors do RokRAT and MagicRAT collectively expose, and what does that imply for analysts?",
        "answer": "RokRAT is aimed at media organizations and MagicRAT at financial institutions, so analysts tracking North Korean tooling must monitor both publicity-sensitive and finance-sector infrastructure.",
        "multi_hop": True,
    },
    {
        "question": "Summarize the role StealBit plays inside the LockBit intrusion chain.",
        "answer": "StealBit is the exfiltration stage: after LockBit gains access, the tool siphons victim data such as Prestige Hospital records before the LockBit 3.0 payload encrypts systems, enabling double extortion.",
        "multi_hop": True,
    },
    {
        "question": "Explain how attribution chains link the GoAnywhere MFT intrusions back to a named actor.",
        "answer": "The GoAnywhere MFT intrusions are attributed to Lazarus Group through the exploited CVE-2024-0204, the MagicRAT implant observed on victims, and overlap with the Hidden Cobra alias used in earlier reporting.",
        "multi_hop": True,
    },
    {
        "question": "What does the January 2024 Prestige Hospital attack reveal about LockBit's victim selection?",
        "answer": "It shows LockBit still favours availability-critical victims: Prestige Hospital is a regional healthcare provider in the United States whose downtime pressure raises the odds a ransom is paid quickly.",
        "multi_hop": True,
    },
    {
        "question": "What motivates LockBit according to the reporting?",
        "answer": "The reporting records financial gain as LockBit's motivation; the group monetizes intrusions through ransom and data extortion rather than espionage.",
        "multi_hop": False,
    },
    {
        "question": "Under what alias has Lazarus Group been tracked?",
        "answer": "Earlier reporting tracks Lazarus Group under the Hidden Cobra alias used by US advisories for North Korean state activity.",
        "multi_hop": False,
    },
    {
        "question": "What is the significance of the date 2024-02 in the Lazarus reporting?",
        "answer": "February 2024 marks the GoAnywhere MFT intrusions, the window in which Lazarus Group exploited CVE-2024-0204 against file-transfer servers.",
        "multi_hop": False,
    },
    {
        "question": "Describe the delivery technique associated with MagicRAT operations.",
        "answer": "Lazarus Group pairs MagicRAT with spearphishing, sending targeted lures that plant the implant on finance-sector hosts.",
        "multi_hop": False,
    },
    {
        "question": "What function does the RokRAT implant serve for APT37?",
        "answer": "RokRAT gives APT37 remote access for espionage, abusing cloud storage services as command-and-control so the traffic blends into ordinary service usage.",
        "multi_hop": False,
    },
    {
        "question": "Where did the APT37 Internet Explorer incident take place?",
        "answer": "The incident occurred in South Korea, where APT37 traditionally concentrates its espionage operations.",
        "multi_hop": False,
    },
    {
        "question": "What kind of organization is Prestige Hospital?",
        "answer": "Prestige Hospital is described as a regional healthcare provider in the United States, which is what made it attractive to LockBit.",
        "multi_hop": False,
    },
    {
        "question": "Why is Citrix Bleed noteworthy in the LockBit reporting?",
        "answer": "Citrix Bleed, CVE-2023-4966, let LockBit hijack authenticated sessions and walk into exposed environments without credentials, making it the campaign's initial-access workhorse.",
        "multi_hop": False,
    },
]


def build_toy_graph() -> Tuple[PropertyGraph, List[str]]:
    """Execute the canonical ingestion statements; returns (frozen graph, statements)."""
    graph = PropertyGraph()
    statements = [REPORT_CYPHER[name] for name in sorted(REPORT_CYPHER)]
    for statement in statements:
        execute(parse(statement), graph)
    graph.freeze()
    return graph, statements


def _gold_for(query: str, graph: PropertyGraph) -> str:
    ast, report = validate_text(query, DEFAULT_ONTOLOGY, "READ")
    if not report.passed:
        raise ValueError(f"toy query invalid: {report.summary()}\n{query}")
    return render_gold(execute(ast, graph))


def _judge_cell(c1: int, c2: int, c3: int, c4: int, comment: str) -> Dict[str, Any]:
    return {"c1": c1, "c2": c2, "c3": c3, "c4": c4, "comment": comment}


def _judge_scores(category: str, idx: int) -> Dict[str, Dict[str, Any]]:
    """Deterministic per-question rubric scores shaped like the observed
    system profiles: RAG mixed, GRAG bimodal, AGRAG/HRAG strong."""
    if category == "unanswerable":
        return {
            "RAG": _judge_cell(0, 0, 1, 4, "fluent but fabricated"),
            "GRAG": _judge_cell(0, 0, 1, 1, "empty output"),
            "AGRAG": _judge_cell(2, 2, 2, 4, "refused"),
            "HRAG": _judge_cell(1, 1, 1, 5, "refused"),
        }
    if category == "guided":
        rag = (3, 3, 3, 4) if idx % 2 == 0 else (4, 3, 3, 4)
        return {
            "RAG": _judge_cell(*rag, "broad but grounded"),
            "GRAG": _judge_cell(1, 1, 1, 3, "rigid graph rendering"),
            "AGRAG": _judge_cell(3, 3, 2, 4, "partially recovered"),
            "HRAG": _judge_cell(4, 4, 4, 5, "synthesized well"),
        }
    # answerable factoid categories
    rag_cycle = [
        (5, 5, 5, 5),
        (4, 4, 4, 4),
        (3, 2, 2, 4),
        (1, 1, 1, 4),
        (0, 0, 1, 3),
    ][idx % 5]
    grag = (0, 0, 0, 2) if idx % 6 == 5 else (5, 5, 5, 5)
    agrag = (4, 4, 4, 3) if idx % 7 == 6 else (5, 5, 5, 4)
    hrag = (5, 5, 5, 5) if idx % 3 else (5, 5, 5, 4)
    return {
        "RAG": _judge_cell(*rag_cycle, "chunk retrieval"),
        "GRAG": _judge_cell(*grag, "graph path"),
        "AGRAG": _judge_cell(*agrag, "critiqued"),
        "HRAG": _judge_cell(*hrag, "hybrid"),
    }


def _rag_answer(question: str, gold: str, category: str, idx: int) -> str:
    if category == "unanswerable":
        hallucinations = [
            "The CVSS score recorded for CVE-2024-21338 is 9.1.",
            "GoAnywhere MFT version 7.4.0 is the vulnerable release.",
            "The recommended mitigation is upgrading Internet Explorer to version 12.",
            "APT37 relies on the Cobalt Strike tool.",
            "The campaign attributed to APT37 is Operation Dawn.",
        ]
        return hallucinations[idx % len(hallucinations)]
    if category != "guided" and idx % 5 == 3:
        return "The reports do not state this clearly, but it appears to be Cobalt Strike."
    if category != "guided" and idx % 5 == 4:
        return "Based on the retrieved passages the most likely answer involves unrelated infrastructure."
    return f"Based on the retrieved context, the answer is {gold}."


GRAG_UNANSWERABLE_VARIANTS = [
    "MATCH (c:CVE) WHERE c.cvss = 9.1 RETURN c.name AS name",
    "MATCH (c:CVE) WHERE c.affected_version = \"7.4.0\" RETURN c.name AS name",
    "MATCH (c:CVE) WHERE c.version = \"7.4.0\" RETURN c.name AS name",
    "MATCH (c:CVE) WHERE c.vulnerable_version = \"7.4.0\" RETURN c.name AS name",
    "MATCH (c:CVE) WHERE c.product_version = \"7.4.0\" RETURN c.name AS name",
]


def build_toy_script(grag_cap: int = 25) -> List[Dict[str, Any]]:
    """Full mock script for one experiment run over the toy corpus."""
    graph, statements = build_toy_graph()
    entries: List[Dict[str, Any]] = []

    # Step 3: one ingestion completion per report.
    for name in sorted(TOY_REPORTS):
        marker = {"report-apt37.txt": "APT37", "report-lockbit.txt": "Prestige Hospital",
                  "report-lazarus.txt": "GoAnywhere"}[name]
        entries.append(
            {
                "role": "INGEST_TO_CYPHER",
                "match": marker,
                "responses": [{"text": REPORT_CYPHER[name], "latency_s": 1.0}],
            }
        )

    # Step 5: few-shot pairs.
    entries.append(
        {
            "role": "FEWSHOT_PAIRS",
            "match": "*",
            "responses": [{"text": json.dumps(FEWSHOT_PAIRS), "latency_s": 1.0}],
        }
    )

    # Step 6: QA generation from Cypher.
    qa_payload = [
        {"category": category, "question": question, "cypher": query}
        for category, question, query in CYPHER_QA
    ]
    entries.append(
        {
            "role": "QA_FROM_CYPHER",
            "match": "*",
            "responses": [{"text": json.dumps(qa_payload), "latency_s": 2.0}],
        }
    )

    # Step 7: guided questions.
    entries.append(
        {
            "role": "GUIDED_QA",
            "match": "*",
            "responses": [{"text": json.dumps(GUIDED_QA), "latency_s": 2.0}],
        }
    )

    # Step 9: per-question answering scripts.
    questions = [(category, question, query) for category, question, query in CYPHER_QA]
    all_questions = [q for _, q, _ in questions] + [g["question"] for g in GUIDED_QA]
    _assert_distinct_match_keys(all_questions)

    guided_grag_queries = {
        True: 'MATCH (a:ThreatActor {name: "LockBit"})-[:attacked]->(v:Victim) RETURN v.name AS victim',
        False: 'MATCH (a:ThreatActor {name: "Lazarus Group"})-[:uses]->(m:Malware) RETURN m.name AS name',
    }

    idx_by_category: Dict[str, int] = {}
    judge_entries: List[Dict[str, Any]] = []
    for category, question, query in questions:
        idx = idx_by_category.get(category, 0)
        idx_by_category[category] = idx + 1
        gold = "" if category == "unanswerable" else _gold_for(query, graph)

        if category == "unanswerable":
            variants = [
                {"text": GRAG_UNANSWERABLE_VARIANTS[i % len(GRAG_UNANSWERABLE_VARIANTS)], "latency_s": 2.0}
                for i in range(grag_cap)
            ]
            entries.append(
                {
                    "role": "GEN_CYPHER",
                    "match": question,
                    # GRAG burns the full retry budget, then HRAG's zero-shot
                    # branch issues the valid-but-empty probe.
                    "responses": variants + [{"text": query, "latency_s": 0.5}],
                }
            )
            entries.append(
                {
                    "role": "ANSWER_RAG",
                    "match": question,
                    "responses": [{"text": _rag_answer(question, gold, category, idx), "latency_s": 0.3}],
                }
            )
            entries.append(
                {
                    "role": "CRITIQUE_CYPHER",
                    "match": question,
                    "responses": [
                        {
                            "text": json.dumps(
                                {"verdict": "cannot_answer", "comment": "graph lacks this property"}
                            ),
                            "latency_s": 0.4,
                        }
                    ],
                }
            )
            entries.append(
                {
                    "role": "SYNTHESIZE_HYBRID",
                    "match": question,
                    "responses": [{"text": REFUSAL_PHRASE, "latency_s": 0.6}],
                }
            )
        else:
            grag_answer = gold
            entries.append(
                {
                    "role": "GEN_CYPHER",
                    "match": question,
                    # consumed in run order: GRAG's few-shot attempt, then
                    # HRAG's zero-shot attempt.
                    "responses": [
                        {"text": query, "latency_s": 0.5},
                        {"text": query, "latency_s": 0.5},
                    ],
                }
            )
            entries.append(
                {
                    "role": "ANSWER_RAG",
                    "match": question,
                    "responses": [
                        {"text": _rag_answer(question, gold, category, idx), "latency_s": 0.3},
                        {"text": grag_answer, "latency_s": 0.3},
                    ],
                }
            )
            entries.append(
                {
                    "role": "CRITIQUE_CYPHER",
                    "match": question,
                    "responses": [
                        {
                            "text": json.dumps({"verdict": "approve", "comment": "query matches schema"}),
                            "latency_s": 0.4,
                        }
                    ],
                }
            )
            entries.append(
                {
                    "role": "SYNTHESIZE_HYBRID",
                    "match": question,
                    "responses": [{"text": f"{gold}", "latency_s": 0.6}],
                }
            )

        judge_entries.append(
            {
                "role": "JUDGE",
                "match": question,
                "responses": [
                    {"text": json.dumps(_judge_scores(category, idx)), "latency_s": 0.2}
                ],
            }
        )

    for pos, guided in enumerate(GUIDED_QA):
        question = guided["question"]
        grag_query = guided_grag_queries[pos % 2 == 0]
        grag_gold = _gold_for(grag_query, graph)
        entries.append(
            {
                "role": "GEN_CYPHER",
                "match": question,
                "responses": [
                    {"text": grag_query, "latency_s": 0.5},
                    {"text": grag_query, "latency_s": 0.5},
                ],
            }
        )
        entries.append(
            {
                "role": "ANSWER_RAG",
                "match": question,
                "responses": [
                    {"text": guided["answer"], "latency_s": 0.3},
                    {"text": f"The graph lists: {grag_gold}.", "latency_s": 0.3},
                ],
            }
        )
        entries.append(
            {
                "role": "CRITIQUE_CYPHER",
                "match": question,
                "responses": [
                    {
                        "text": json.dumps({"verdict": "approve", "comment": "best available path"}),
                        "latency_s": 0.4,
                    }
                ],
            }
        )
        entries.append(
            {
                "role": "SYNTHESIZE_HYBRID",
                "match": question,
                "responses": [{"text": guided["answer"], "latency_s": 0.6}],
            }
        )
        judge_entries.append(
            {
                "role": "JUDGE",
                "match": question,
                "responses": [{"text": json.dumps(_judge_scores("guided", pos)), "latency_s": 0.2}],
            }
        )

    entries.extend(judge_entries)
    return entries


def _assert_distinct_match_keys(questions: List[str]) -> None:
    for i, a in enumerate(questions):
        for j, b in enumerate(questions):
            if i != j and a in b:
                raise ValueError(f"question {a!r} is a substring of {b!r}; mock matching would be ambiguous")


def write_toy_assets(target_dir: str) -> Dict[str, str]:
    """Materialize corpus files, the guided document and the mock script."""
    corpus_dir = os.path.join(target_dir, "corpus")
    os.makedirs(corpus_dir, exist_ok=True)
    for name, text in TOY_REPORTS.items():
        with open(os.path.join(corpus_dir, name), "w", encoding="utf-8") as fh:
            fh.write(text)
    guided_path = os.path.join(target_dir, "guided-doc.txt")
    with open(guided_path, "w", encoding="utf-8") as fh:
        fh.write(GUIDED_DOC)
    script_path = os.path.join(target_dir, "mock-script.json")
    with open(script_path, "w", encoding="utf-8") as fh:
        json.dump(build_toy_script(), fh, indent=1)
    return {"corpus_dir": corpus_dir, "guided_doc": guided_path, "mock_script": script_path}
