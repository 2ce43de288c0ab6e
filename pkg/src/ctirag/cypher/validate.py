"""Static validation of parsed statements against the ontology.

Produces a ValidationReport instead of raising: repair loops feed the
violation messages back to the query generator, so messages name the
offending symbol and suggest the canonical spelling where one exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from ..graph_store import Ontology
from .ast import (
    Aggregate,
    BoolOp,
    Comparison,
    CypherAst,
    MatchClause,
    MergeClause,
    NotOp,
    OrderByClause,
    PathPattern,
    PropertyRef,
    ReturnClause,
    SetClause,
    VariableRef,
)
from .parser import CypherSyntaxError, parse

READ = "READ"
WRITE = "WRITE"


@dataclass
class ValidationReport:
    syntactic_ok: bool = True
    readonly_ok: bool = True
    schema_ok: bool = True
    violations: List[Tuple[str, str, Optional[str]]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.syntactic_ok and self.readonly_ok and self.schema_ok

    def summary(self) -> str:
        if self.passed:
            return "valid"
        return "; ".join(message for _, message, _ in self.violations)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "syntactic_ok": self.syntactic_ok,
            "readonly_ok": self.readonly_ok,
            "schema_ok": self.schema_ok,
            "violations": [list(v) for v in self.violations],
        }


class _Validator:
    def __init__(self, ontology: Ontology):
        self.ontology = ontology
        self.report = ValidationReport()
        # variable -> ("node", label | None) or ("edge", label | None)
        self.bindings: Dict[str, Tuple[str, Optional[str]]] = {}

    def violation(self, kind: str, message: str, span: Optional[str] = None) -> None:
        self.report.violations.append((kind, message, span))
        if kind == "readonly":
            self.report.readonly_ok = False
        else:
            self.report.schema_ok = False

    # -- pattern checks --------------------------------------------------------

    def bind(self, variable: Optional[str], kind: str, label: Optional[str]) -> None:
        if not variable:
            return
        seen = self.bindings.get(variable)
        if seen is None:
            self.bindings[variable] = (kind, label)
        elif seen[0] != kind:
            self.violation("semantic", f"variable {variable!r} is bound as both {seen[0]} and {kind}", variable)
        elif seen[1] is None and label is not None:
            self.bindings[variable] = (kind, label)

    def check_node_label(self, label: str) -> None:
        if label in self.ontology.entity_types:
            return
        canonical = self.ontology.canonical_entity(label)
        hint = f" (did you mean {canonical!r}?)" if canonical else ""
        self.violation("schema", f"unknown node label {label!r}{hint}", label)

    def check_edge_label(self, label: str) -> None:
        if label in self.ontology.relationship_types:
            return
        canonical = self.ontology.canonical_relationship(label)
        hint = f" (did you mean {canonical!r}?)" if canonical else ""
        self.violation("schema", f"unknown relationship type {label!r}{hint}", label)

    def check_node_property(self, key: str, label: Optional[str]) -> None:
        if key not in self.ontology.node_properties(label):
            where = f" for {label}" if label else ""
            self.violation("schema", f"unknown node property {key!r}{where}", key)

    def check_edge_property(self, key: str) -> None:
        if key not in self.ontology.edge_properties:
            self.violation("schema", f"unknown relationship property {key!r}", key)

    def check_pattern(self, pattern: PathPattern) -> None:
        for node in pattern.nodes:
            label = node.label
            if label is not None:
                self.check_node_label(label)
                if label not in self.ontology.entity_types:
                    label = self.ontology.canonical_entity(label)
            self.bind(node.variable, "node", label)
            for key, _ in node.properties:
                self.check_node_property(key, label if label in self.ontology.entity_types else None)
        for edge in pattern.edges:
            if edge.label is not None:
                self.check_edge_label(edge.label)
            self.bind(edge.variable, "edge", edge.label)
            for key, _ in edge.properties:
                self.check_edge_property(key)

    # -- expression checks -----------------------------------------------------

    def check_value(self, expr: Any) -> None:
        if isinstance(expr, PropertyRef):
            binding = self.bindings.get(expr.variable)
            if binding is None:
                self.violation("semantic", f"unbound variable {expr.variable!r}", expr.variable)
                return
            kind, label = binding
            if kind == "node":
                self.check_node_property(expr.key, label)
            else:
                self.check_edge_property(expr.key)
        elif isinstance(expr, VariableRef):
            if expr.name not in self.bindings:
                self.violation("semantic", f"unbound variable {expr.name!r}", expr.name)
        elif isinstance(expr, Aggregate):
            if expr.expr is not None:
                self.check_value(expr.expr)

    def check_predicate(self, pred: Any) -> None:
        if isinstance(pred, Comparison):
            self.check_value(pred.left)
            self.check_value(pred.right)
        elif isinstance(pred, BoolOp):
            for operand in pred.operands:
                self.check_predicate(operand)
        elif isinstance(pred, NotOp):
            self.check_predicate(pred.operand)

    # -- statement walk ----------------------------------------------------------

    def run(self, ast: CypherAst, mode: str) -> ValidationReport:
        if mode == READ and ast.kind == WRITE:
            self.violation("readonly", "write clauses are forbidden in read-only mode")
        for clause in ast.clauses:
            if isinstance(clause, MatchClause):
                for pattern in clause.patterns:
                    self.check_pattern(pattern)
                if clause.where is not None:
                    self.check_predicate(clause.where)
            elif isinstance(clause, MergeClause):
                self.check_pattern(clause.pattern)
                for node in clause.pattern.nodes:
                    if node.label is None and node.variable not in self.bindings:
                        self.violation("semantic", "MERGE node requires a label or a bound variable")
            elif isinstance(clause, SetClause):
                for item in clause.items:
                    binding = self.bindings.get(item.variable)
                    if binding is None:
                        self.violation("semantic", f"unbound variable {item.variable!r} in SET", item.variable)
                    elif binding[0] == "node":
                        self.check_node_property(item.key, binding[1])
                    else:
                        self.check_edge_property(item.key)
            elif isinstance(clause, ReturnClause):
                for item in clause.items:
                    self.check_value(item.expr)
            elif isinstance(clause, OrderByClause):
                for item in clause.items:
                    # Order keys may name a return alias; those resolve later.
                    if isinstance(item.expr, VariableRef):
                        continue
                    self.check_value(item.expr)
        return self.report


def validate(ast: CypherAst, ontology: Ontology, mode: str = READ) -> ValidationReport:
    """Check schema conformity and the read-only restriction. Never raises."""
    return _Validator(ontology).run(ast, mode)


def validate_text(text: str, ontology: Ontology, mode: str = READ):
    """Parse then validate; parse failures yield a syntactic_ok=False report."""
    try:
        ast = parse(text)
    except CypherSyntaxError as err:
        report = ValidationReport(syntactic_ok=False)
        report.violations.append(("syntax", str(err), None))
        return None, report
    return ast, validate(ast, ontology, mode)
