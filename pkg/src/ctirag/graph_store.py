"""In-memory property graph with MERGE-based ingestion and schema statistics.

The store enforces a closed CTI ontology (17 entity types, 20 relationship
types). Node identity is (label, lowercase-trimmed name), so repeated MERGE
of the same entity accumulates properties instead of duplicating nodes.
After ``freeze()`` the graph is immutable and safe for concurrent reads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

ENTITY_TYPES: Tuple[str, ...] = (
    "ThreatActor",
    "Malware",
    "Tool",
    "Victim",
    "C2_Infrastructure",
    "Campaign",
    "Incident",
    "Date",
    "Sector",
    "Region",
    "Country",
    "Technique",
    "CVE",
    "Motivation",
    "Mitigation",
    "Capability",
    "Source",
)

RELATIONSHIP_TYPES: Tuple[str, ...] = (
    "attacked",
    "uses",
    "exploits",
    "abuses",
    "targets",
    "includes",
    "occurred_on",
    "has_alias",
    "attributed_to",
    "involved_malware",
    "involved_tool",
    "used_technique",
    "occurred_in",
    "targets_sector",
    "located_in",
    "motivated_by",
    "exploited_in",
    "mitigates",
    "leverages",
    "supported_by",
)

# Properties the query layer may reference. Every entity carries name/summary;
# Country additionally carries an ISO 3166-1 alpha-2 code.
BASE_NODE_PROPERTIES = frozenset({"name", "summary"})
EDGE_PROPERTIES = frozenset({"date", "evidence", "source_id", "page"})

CVE_PATTERN = re.compile(r"CVE-\d{4}-\d{4,7}", re.IGNORECASE)
ISO_ALPHA2_PATTERN = re.compile(r"^[A-Z]{2}$")


class GraphError(Exception):
    """Base class for property-graph errors."""


class UnknownLabel(GraphError):
    pass


class UnknownRelationship(GraphError):
    pass


class MissingName(GraphError):
    pass


class FrozenGraph(GraphError):
    pass


class DanglingEndpoint(GraphError):
    pass


@dataclass(frozen=True)
class Ontology:
    """Closed schema: allowed entity labels, edge labels, and property names."""

    entity_types: Tuple[str, ...] = ENTITY_TYPES
    relationship_types: Tuple[str, ...] = RELATIONSHIP_TYPES
    property_rules: Dict[str, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        for name, values in (("entity", self.entity_types), ("relationship", self.relationship_types)):
            lowered = [v.lower() for v in values]
            if len(set(lowered)) != len(lowered):
                raise ValueError(f"duplicate {name} types after case normalization")
        if not self.property_rules:
            rules = {label: BASE_NODE_PROPERTIES for label in self.entity_types}
            rules["Country"] = BASE_NODE_PROPERTIES | {"code"}
            object.__setattr__(self, "property_rules", rules)

    def canonical_entity(self, label: str) -> Optional[str]:
        """Resolve a label case-insensitively to its canonical form, or None."""
        wanted = label.strip().lower()
        for known in self.entity_types:
            if known.lower() == wanted:
                return known
        return None

    def canonical_relationship(self, label: str) -> Optional[str]:
        wanted = label.strip().lower()
        for known in self.relationship_types:
            if known.lower() == wanted:
                return known
        return None

    def node_properties(self, label: Optional[str] = None) -> frozenset:
        """Allowed node property names for a label (union of all when unknown)."""
        if label is not None and label in self.property_rules:
            return self.property_rules[label]
        merged = set()
        for props in self.property_rules.values():
            merged |= props
        return frozenset(merged)

    @property
    def edge_properties(self) -> frozenset:
        return EDGE_PROPERTIES


DEFAULT_ONTOLOGY = Ontology()


@dataclass
class Node:
    id: str
    label: str
    properties: Dict[str, Any]

    @property
    def name(self) -> str:
        return str(self.properties.get("name", ""))


@dataclass
class Edge:
    id: str
    source: str
    target: str
    label: str
    properties: Dict[str, Any]


@dataclass
class GraphStats:
    node_counts_by_type: Dict[str, int]
    edge_counts_by_type: Dict[str, int]
    evidence_coverage: float
    source_id_coverage: float
    page_coverage: float
    cve_recall: float
    iso_compliance: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "node_counts_by_type": dict(self.node_counts_by_type),
            "edge_counts_by_type": dict(self.edge_counts_by_type),
            "evidence_coverage": self.evidence_coverage,
            "source_id_coverage": self.source_id_coverage,
            "page_coverage": self.page_coverage,
            "cve_recall": self.cve_recall,
            "iso_compliance": self.iso_compliance,
        }


def _node_key(label: str, name: Any) -> Tuple[str, str]:
    return (label, str(name).strip().lower())


class PropertyGraph:
    """Typed property graph with non-duplicative (MERGE) ingestion.

    Single-writer while unfrozen; immutable and concurrency-safe once frozen.
    """

    def __init__(self, ontology: Ontology = DEFAULT_ONTOLOGY):
        self.ontology = ontology
        self.frozen = False
        self._nodes: Dict[str, Node] = {}
        self._edges: Dict[str, Edge] = {}
        self._node_index: Dict[Tuple[str, str], str] = {}
        self._edge_index: Dict[Tuple[str, str, str], str] = {}
        self._next_node = 0
        self._next_edge = 0

    # -- ingestion -----------------------------------------------------------

    def merge_node(self, label: str, properties: Dict[str, Any]) -> str:
        """Create or match a node keyed by (label, lowercased name).

        On a match the incoming properties are unioned in, new values winning
        on conflict. Returns the node id either way.
        """
        if self.frozen:
            raise FrozenGraph("graph is frozen; ingestion is complete")
        canonical = self.ontology.canonical_entity(label)
        if canonical is None:
            raise UnknownLabel(f"entity type {label!r} is not in the ontology")
        name = properties.get("name")
        if name is None or not str(name).strip():
            raise MissingName(f"node of type {canonical} requires a non-empty 'name'")

        key = _node_key(canonical, name)
        node_id = self._node_index.get(key)
        if node_id is not None:
            self._nodes[node_id].properties.update(properties)
            return node_id

        self._next_node += 1
        node_id = f"n{self._next_node}"
        self._nodes[node_id] = Node(id=node_id, label=canonical, properties=dict(properties))
        self._node_index[key] = node_id
        return node_id

    def merge_edge(self, source_id: str, target_id: str, label: str, properties: Optional[Dict[str, Any]] = None) -> str:
        """Create or match an edge keyed by (source, target, label)."""
        if self.frozen:
            raise FrozenGraph("graph is frozen; ingestion is complete")
        canonical = self.ontology.canonical_relationship(label)
        if canonical is None:
            raise UnknownRelationship(f"relationship type {label!r} is not in the ontology")
        for endpoint in (source_id, target_id):
            if endpoint not in self._nodes:
                raise DanglingEndpoint(f"edge endpoint {endpoint!r} does not exist")

        key = (source_id, target_id, canonical)
        edge_id = self._edge_index.get(key)
        props = dict(properties or {})
        if edge_id is not None:
            self._edges[edge_id].properties.update(props)
            return edge_id

        self._next_edge += 1
        edge_id = f"e{self._next_edge}"
        self._edges[edge_id] = Edge(id=edge_id, source=source_id, target=target_id, label=canonical, properties=props)
        self._edge_index[key] = edge_id
        return edge_id

    def set_node_property(self, node_id: str, key: str, value: Any) -> None:
        if self.frozen:
            raise FrozenGraph("graph is frozen; ingestion is complete")
        if node_id not in self._nodes:
            raise DanglingEndpoint(f"node {node_id!r} does not exist")
        self._nodes[node_id].properties[key] = value

    def set_edge_property(self, edge_id: str, key: str, value: Any) -> None:
        if self.frozen:
            raise FrozenGraph("graph is frozen; ingestion is complete")
        if edge_id not in self._edges:
            raise DanglingEndpoint(f"edge {edge_id!r} does not exist")
        self._edges[edge_id].properties[key] = value

    def freeze(self) -> None:
        """Make the graph read-only. Idempotent."""
        self.frozen = True

    # -- access --------------------------------------------------------------

    @property
    def nodes(self) -> List[Node]:
        return list(self._nodes.values())

    @property
    def edges(self) -> List[Edge]:
        return list(self._edges.values())

    def node(self, node_id: str) -> Node:
        return self._nodes[node_id]

    def edge(self, edge_id: str) -> Edge:
        return self._edges[edge_id]

    def nodes_by_label(self, label: str) -> List[Node]:
        return [n for n in self._nodes.values() if n.label == label]

    def find_node(self, label: str, name: str) -> Optional[Node]:
        node_id = self._node_index.get(_node_key(label, name))
        return self._nodes.get(node_id) if node_id else None

    def edges_from(self, node_id: str) -> List[Edge]:
        return [e for e in self._edges.values() if e.source == node_id]

    def edges_to(self, node_id: str) -> List[Edge]:
        return [e for e in self._edges.values() if e.target == node_id]

    def node_count(self) -> int:
        return len(self._nodes)

    def edge_count(self) -> int:
        return len(self._edges)

    # -- statistics ----------------------------------------------------------

    def compute_stats(self, source_texts: Iterable[str]) -> GraphStats:
        """Schema/evidence statistics over the frozen graph.

        cve_recall is the fraction of CVE ids found in the source texts (by
        the canonical CVE-YYYY-NNNNN regex) that exist as CVE nodes; 1.0 when
        the texts mention no CVEs. All coverage fractions are 1.0 on an empty
        denominator.
        """
        if not self.frozen:
            raise FrozenGraph("compute_stats requires a frozen graph")

        node_counts: Dict[str, int] = {}
        for node in self._nodes.values():
            node_counts[node.label] = node_counts.get(node.label, 0) + 1
        edge_counts: Dict[str, int] = {}
        for edge in self._edges.values():
            edge_counts[edge.label] = edge_counts.get(edge.label, 0) + 1

        total_edges = len(self._edges)

        def coverage(prop: str) -> float:
            if total_edges == 0:
                return 1.0
            return sum(1 for e in self._edges.values() if prop in e.properties) / total_edges

        mentioned = set()
        for text in source_texts:
            for match in CVE_PATTERN.finditer(text):
                mentioned.add(match.group(0).upper())
        if mentioned:
            present = {n.name.upper() for n in self.nodes_by_label("CVE")}
            cve_recall = len(mentioned & present) / len(mentioned)
        else:
            cve_recall = 1.0

        codes = [str(n.properties["code"]) for n in self.nodes_by_label("Country") if "code" in n.properties]
        if codes:
            iso_compliance = sum(1 for c in codes if ISO_ALPHA2_PATTERN.match(c)) / len(codes)
        else:
            iso_compliance = 1.0

        return GraphStats(
            node_counts_by_type=node_counts,
            edge_counts_by_type=edge_counts,
            evidence_coverage=coverage("evidence"),
            source_id_coverage=coverage("source_id"),
            page_coverage=coverage("page"),
            cve_recall=cve_recall,
            iso_compliance=iso_compliance,
        )

    # -- snapshot ------------------------------------------------------------

    def to_snapshot(self) -> Dict[str, Any]:
        """JSON-ready snapshot; stable across runs for the same ingestion order."""
        return {
            "nodes": [
                {"id": n.id, "label": n.label, "properties": dict(n.properties)}
                for n in self._nodes.values()
            ],
            "edges": [
                {
                    "id": e.id,
                    "source": e.source,
                    "target": e.target,
                    "label": e.label,
                    "properties": dict(e.properties),
                }
                for e in self._edges.values()
            ],
        }

    @classmethod
    def from_snapshot(cls, snapshot: Dict[str, Any], ontology: Ontology = DEFAULT_ONTOLOGY, frozen: bool = True) -> "PropertyGraph":
        graph = cls(ontology)
        max_node = 0
        for rec in snapshot.get("nodes", []):
            node = Node(id=rec["id"], label=rec["label"], properties=dict(rec["properties"]))
            graph._nodes[node.id] = node
            graph._node_index[_node_key(node.label, node.name)] = node.id
            digits = rec["id"].lstrip("n")
            if digits.isdigit():
                max_node = max(max_node, int(digits))
        max_edge = 0
        for rec in snapshot.get("edges", []):
            edge = Edge(
                id=rec["id"],
                source=rec["source"],
                target=rec["target"],
                label=rec["label"],
                properties=dict(rec["properties"]),
            )
            graph._edges[edge.id] = edge
            graph._edge_index[(edge.source, edge.target, edge.label)] = edge.id
            digits = rec["id"].lstrip("e")
            if digits.isdigit():
                max_edge = max(max_edge, int(digits))
        graph._next_node = max_node
        graph._next_edge = max_edge
        graph.frozen = frozen
        return graph

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_snapshot(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str, ontology: Ontology = DEFAULT_ONTOLOGY, frozen: bool = True) -> "PropertyGraph":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_snapshot(json.load(fh), ontology=ontology, frozen=frozen)
