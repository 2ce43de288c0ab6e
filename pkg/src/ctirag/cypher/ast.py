"""AST node types and the canonical renderer.

All nodes are frozen dataclasses so parsed trees compare by value; rendering
an AST and reparsing the text yields an equal tree (round-trip contract).
Same-operator boolean chains are flattened at construction, which keeps the
round-trip canonical regardless of redundant parentheses in the source.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Optional, Tuple, Union


class ExprError(Exception):
    """Malformed AST construction (wrong operator, bad arity)."""


# -- value expressions --------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: Any  # str | int | float | bool | None


@dataclass(frozen=True)
class ListLiteral:
    items: Tuple[Literal, ...]


@dataclass(frozen=True)
class VariableRef:
    name: str


@dataclass(frozen=True)
class PropertyRef:
    variable: str
    key: str


ValueExpr = Union[Literal, ListLiteral, VariableRef, PropertyRef]

COMPARISON_OPS = ("=", "<>", "<", ">", "<=", ">=", "CONTAINS", "IN")


@dataclass(frozen=True)
class Comparison:
    op: str
    left: ValueExpr
    right: ValueExpr

    def __post_init__(self):
        if self.op not in COMPARISON_OPS:
            raise ExprError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True)
class BoolOp:
    op: str  # "AND" | "OR"
    operands: Tuple[Any, ...]

    def __post_init__(self):
        if self.op not in ("AND", "OR"):
            raise ExprError(f"unknown boolean operator {self.op!r}")
        if len(self.operands) < 2:
            raise ExprError("boolean operator needs at least two operands")


@dataclass(frozen=True)
class NotOp:
    operand: Any


def bool_chain(op: str, operands) -> Any:
    """Build an AND/OR node, flattening nested same-op children."""
    flat = []
    for operand in operands:
        if isinstance(operand, BoolOp) and operand.op == op:
            flat.extend(operand.operands)
        else:
            flat.append(operand)
    if len(flat) == 1:
        return flat[0]
    return BoolOp(op, tuple(flat))


# -- return / order -----------------------------------------------------------

@dataclass(frozen=True)
class Aggregate:
    func: str  # "COUNT" | "COLLECT"
    expr: Optional[ValueExpr]  # None means COUNT(*)
    distinct: bool = False

    def __post_init__(self):
        if self.func not in ("COUNT", "COLLECT"):
            raise ExprError(f"unknown aggregate {self.func!r}")
        if self.expr is None and self.func != "COUNT":
            raise ExprError("only COUNT supports '*'")


@dataclass(frozen=True)
class ReturnItem:
    expr: Union[ValueExpr, Aggregate]
    alias: str


@dataclass(frozen=True)
class OrderItem:
    expr: Union[ValueExpr, Aggregate]
    descending: bool = False


# -- patterns -----------------------------------------------------------------

@dataclass(frozen=True)
class NodePattern:
    variable: Optional[str] = None
    label: Optional[str] = None
    properties: Tuple[Tuple[str, Literal], ...] = ()


@dataclass(frozen=True)
class EdgePattern:
    variable: Optional[str] = None
    label: Optional[str] = None
    direction: str = "out"  # "out" | "in" | "any"
    properties: Tuple[Tuple[str, Literal], ...] = ()
    min_hops: int = 1
    max_hops: int = 1

    @property
    def is_variable_length(self) -> bool:
        return (self.min_hops, self.max_hops) != (1, 1)


@dataclass(frozen=True)
class PathPattern:
    # Alternating NodePattern / EdgePattern, starting and ending with a node.
    elements: Tuple[Any, ...]

    def __post_init__(self):
        if not self.elements or len(self.elements) % 2 == 0:
            raise ExprError("path must alternate node, edge, node, ...")

    @property
    def nodes(self) -> Tuple[NodePattern, ...]:
        return self.elements[0::2]

    @property
    def edges(self) -> Tuple[EdgePattern, ...]:
        return self.elements[1::2]


# -- clauses ------------------------------------------------------------------

@dataclass(frozen=True)
class MatchClause:
    patterns: Tuple[PathPattern, ...]
    optional: bool = False
    where: Optional[Any] = None


@dataclass(frozen=True)
class ReturnClause:
    items: Tuple[ReturnItem, ...]
    distinct: bool = False


@dataclass(frozen=True)
class OrderByClause:
    items: Tuple[OrderItem, ...]


@dataclass(frozen=True)
class LimitClause:
    count: int


@dataclass(frozen=True)
class MergeClause:
    pattern: PathPattern
    create: bool = False  # True when spelled CREATE


@dataclass(frozen=True)
class SetItem:
    variable: str
    key: str
    value: Literal


@dataclass(frozen=True)
class SetClause:
    items: Tuple[SetItem, ...]


@dataclass(frozen=True)
class CypherAst:
    kind: str  # "READ" | "WRITE"
    clauses: Tuple[Any, ...]


# -- rendering ----------------------------------------------------------------

def _render_literal(lit: Literal) -> str:
    v = lit.value
    if v is None:
        return "NULL"
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, str):
        return json.dumps(v)
    return repr(v)


def render_expr(expr: Any) -> str:
    if isinstance(expr, Literal):
        return _render_literal(expr)
    if isinstance(expr, ListLiteral):
        return "[" + ", ".join(_render_literal(i) for i in expr.items) + "]"
    if isinstance(expr, VariableRef):
        return expr.name
    if isinstance(expr, PropertyRef):
        return f"{expr.variable}.{expr.key}"
    if isinstance(expr, Aggregate):
        inner = "*" if expr.expr is None else render_expr(expr.expr)
        if expr.distinct:
            inner = "DISTINCT " + inner
        return f"{expr.func}({inner})"
    raise ExprError(f"cannot render {type(expr).__name__}")


def render_predicate(pred: Any) -> str:
    if isinstance(pred, Comparison):
        return f"{render_expr(pred.left)} {pred.op} {render_expr(pred.right)}"
    if isinstance(pred, NotOp):
        inner = render_predicate(pred.operand)
        if isinstance(pred.operand, (BoolOp, NotOp)):
            inner = f"({inner})"
        return f"NOT {inner}"
    if isinstance(pred, BoolOp):
        parts = []
        for operand in pred.operands:
            text = render_predicate(operand)
            # ORs nested under AND need parentheses to survive reparsing.
            if pred.op == "AND" and isinstance(operand, BoolOp):
                text = f"({text})"
            parts.append(text)
        return f" {pred.op} ".join(parts)
    raise ExprError(f"cannot render predicate {type(pred).__name__}")


def _render_props(props: Tuple[Tuple[str, Literal], ...]) -> str:
    if not props:
        return ""
    inner = ", ".join(f"{k}: {_render_literal(v)}" for k, v in props)
    return " {" + inner + "}"


def _render_node(node: NodePattern) -> str:
    text = node.variable or ""
    if node.label:
        text += f":{node.label}"
    return "(" + text + _render_props(node.properties) + ")"


def _render_edge(edge: EdgePattern) -> str:
    body = edge.variable or ""
    if edge.label:
        body += f":{edge.label}"
    if edge.is_variable_length:
        body += f"*{edge.min_hops}..{edge.max_hops}"
    body += _render_props(edge.properties)
    bracket = f"[{body}]" if body else "[]"
    if edge.direction == "out":
        return f"-{bracket}->"
    if edge.direction == "in":
        return f"<-{bracket}-"
    return f"-{bracket}-"


def render_pattern(path: PathPattern) -> str:
    parts = []
    for i, element in enumerate(path.elements):
        parts.append(_render_node(element) if i % 2 == 0 else _render_edge(element))
    return "".join(parts)


def render(ast: CypherAst) -> str:
    """Canonical text form; parse(render(ast)) == ast."""
    chunks = []
    for clause in ast.clauses:
        if isinstance(clause, MatchClause):
            kw = "OPTIONAL MATCH" if clause.optional else "MATCH"
            chunks.append(f"{kw} " + ", ".join(render_pattern(p) for p in clause.patterns))
            if clause.where is not None:
                chunks.append("WHERE " + render_predicate(clause.where))
        elif isinstance(clause, ReturnClause):
            items = ", ".join(f"{render_expr(i.expr)} AS {i.alias}" for i in clause.items)
            chunks.append(("RETURN DISTINCT " if clause.distinct else "RETURN ") + items)
        elif isinstance(clause, OrderByClause):
            items = ", ".join(
                render_expr(i.expr) + (" DESC" if i.descending else "") for i in clause.items
            )
            chunks.append("ORDER BY " + items)
        elif isinstance(clause, LimitClause):
            chunks.append(f"LIMIT {clause.count}")
        elif isinstance(clause, MergeClause):
            chunks.append(("CREATE " if clause.create else "MERGE ") + render_pattern(clause.pattern))
        elif isinstance(clause, SetClause):
            items = ", ".join(
                f"{i.variable}.{i.key} = {_render_literal(i.value)}" for i in clause.items
            )
            chunks.append("SET " + items)
        else:
            raise ExprError(f"cannot render clause {type(clause).__name__}")
    return " ".join(chunks)
