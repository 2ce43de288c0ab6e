"""Pattern-matching executor for the Cypher subset.

READ statements evaluate clause by clause over a table of variable bindings
(MATCH joins, OPTIONAL MATCH left-joins, WHERE filters) and project RETURN
items with optional COUNT/COLLECT aggregation grouped by the non-aggregated
items. WRITE statements apply merge semantics to an unfrozen graph.

Null handling is two-valued: a comparison touching a missing property is
false. Equality on the `name` property is case-insensitive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

from ..graph_store import Edge, GraphError, Node, PropertyGraph
from .ast import (
    Aggregate,
    BoolOp,
    Comparison,
    CypherAst,
    EdgePattern,
    LimitClause,
    ListLiteral,
    Literal,
    MatchClause,
    MergeClause,
    NodePattern,
    NotOp,
    OrderByClause,
    PathPattern,
    PropertyRef,
    ReturnClause,
    SetClause,
    VariableRef,
)


class CypherRuntimeError(Exception):
    """Execution failure (state precondition, unbound reference, bad merge)."""


@dataclass(frozen=True)
class NodeRef:
    id: str
    label: str
    name: str


@dataclass(frozen=True)
class EdgeRef:
    id: str
    label: str


@dataclass
class ResultTable:
    columns: List[str]
    rows: List[Tuple[Any, ...]]

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise CypherRuntimeError("row arity does not match column count")

    @property
    def row_count(self) -> int:
        return len(self.rows)


@dataclass
class WriteSummary:
    nodes_created: int = 0
    nodes_matched: int = 0
    edges_created: int = 0
    edges_matched: int = 0
    properties_set: int = 0


def empty_result(table: ResultTable) -> bool:
    """True for zero rows, or when every cell of every row is null."""
    if not table.rows:
        return True
    return all(all(cell is None for cell in row) for row in table.rows)


# -- value helpers -------------------------------------------------------------

def _prop_equal(key: str, have: Any, want: Any) -> bool:
    if key == "name" and isinstance(have, str) and isinstance(want, str):
        return have.strip().lower() == want.strip().lower()
    return have == want


def _node_matches(node: Node, pattern: NodePattern) -> bool:
    if pattern.label is not None and node.label != pattern.label:
        return False
    for key, lit in pattern.properties:
        if key not in node.properties:
            return False
        if not _prop_equal(key, node.properties[key], lit.value):
            return False
    return True


def _edge_matches(edge: Edge, pattern: EdgePattern) -> bool:
    if pattern.label is not None and edge.label != pattern.label:
        return False
    for key, lit in pattern.properties:
        if key not in edge.properties:
            return False
        if edge.properties[key] != lit.value:
            return False
    return True


def _hops(graph: PropertyGraph, node_id: str, pattern: EdgePattern) -> List[Tuple[Edge, str]]:
    """Candidate (edge, next-node-id) steps from node_id honoring direction."""
    steps: List[Tuple[Edge, str]] = []
    if pattern.direction in ("out", "any"):
        for edge in graph.edges_from(node_id):
            if _edge_matches(edge, pattern):
                steps.append((edge, edge.target))
    if pattern.direction in ("in", "any"):
        for edge in graph.edges_to(node_id):
            if pattern.direction == "any" and edge.source == edge.target:
                continue  # self-loop already covered by the outgoing scan
            if _edge_matches(edge, pattern):
                steps.append((edge, edge.source))
    return steps


# -- READ evaluation -------------------------------------------------------------

class _Reader:
    def __init__(self, graph: PropertyGraph):
        self.graph = graph

    def candidates(self, pattern: NodePattern, env: Dict[str, Any]) -> List[Node]:
        if pattern.variable and pattern.variable in env:
            bound = env[pattern.variable]
            if bound is None or not isinstance(bound, Node):
                return []
            return [bound] if _node_matches(bound, pattern) else []
        if pattern.label is not None:
            pool = self.graph.nodes_by_label(pattern.label)
        else:
            pool = self.graph.nodes
        return [n for n in pool if _node_matches(n, pattern)]

    def match_path(self, path: PathPattern, env: Dict[str, Any]) -> List[Dict[str, Any]]:
        results: List[Dict[str, Any]] = []

        def extend(idx: int, current: Node, partial: Dict[str, Any]) -> None:
            if idx >= len(path.elements) - 1:
                results.append(partial)
                return
            epat: EdgePattern = path.elements[idx + 1]
            npat: NodePattern = path.elements[idx + 2]
            if not epat.is_variable_length:
                for edge, next_id in _hops(self.graph, current.id, epat):
                    next_node = self.graph.node(next_id)
                    new_env = self._try_bind(partial, epat, [edge], npat, next_node)
                    if new_env is not None:
                        extend(idx + 2, next_node, new_env)
            else:
                for edges, end_id in self._walks(current.id, epat):
                    end_node = self.graph.node(end_id)
                    new_env = self._try_bind(partial, epat, edges, npat, end_node)
                    if new_env is not None:
                        extend(idx + 2, end_node, new_env)

        first: NodePattern = path.elements[0]
        for node in self.candidates(first, env):
            partial = dict(env)
            if first.variable:
                partial[first.variable] = node
            extend(0, node, partial)
        return results

    def _try_bind(
        self,
        env: Dict[str, Any],
        epat: EdgePattern,
        edges: List[Edge],
        npat: NodePattern,
        node: Node,
    ) -> Optional[Dict[str, Any]]:
        if npat.variable and npat.variable in env:
            bound = env[npat.variable]
            if not isinstance(bound, Node) or bound.id != node.id:
                return None
            if not _node_matches(node, npat):
                return None
        elif not _node_matches(node, npat):
            return None
        new_env = dict(env)
        if npat.variable:
            new_env[npat.variable] = node
        if epat.variable:
            new_env[epat.variable] = edges[0] if not epat.is_variable_length else list(edges)
        return new_env

    def _walks(self, start_id: str, pattern: EdgePattern) -> List[Tuple[List[Edge], str]]:
        found: List[Tuple[List[Edge], str]] = []

        def walk(current: str, used: List[Edge], depth: int) -> None:
            if pattern.min_hops <= depth <= pattern.max_hops:
                found.append((list(used), current))
            if depth >= pattern.max_hops:
                return
            used_ids = {e.id for e in used}
            for edge, next_id in _hops(self.graph, current, pattern):
                if edge.id in used_ids:
                    continue
                used.append(edge)
                walk(next_id, used, depth + 1)
                used.pop()

        walk(start_id, [], 0)
        return found

    # -- expressions ---------------------------------------------------------

    def eval_value(self, expr: Any, env: Dict[str, Any]) -> Any:
        if isinstance(expr, Literal):
            return expr.value
        if isinstance(expr, ListLiteral):
            return [item.value for item in expr.items]
        if isinstance(expr, VariableRef):
            if expr.name not in env:
                raise CypherRuntimeError(f"unbound variable {expr.name!r}")
            return env[expr.name]
        if isinstance(expr, PropertyRef):
            if expr.variable not in env:
                raise CypherRuntimeError(f"unbound variable {expr.variable!r}")
            target = env[expr.variable]
            if target is None:
                return None
            if isinstance(target, (Node, Edge)):
                return target.properties.get(expr.key)
            raise CypherRuntimeError(f"{expr.variable!r} has no properties")
        raise CypherRuntimeError(f"cannot evaluate {type(expr).__name__}")

    def eval_predicate(self, pred: Any, env: Dict[str, Any]) -> bool:
        if isinstance(pred, Comparison):
            return self._compare(pred, env)
        if isinstance(pred, BoolOp):
            if pred.op == "AND":
                return all(self.eval_predicate(p, env) for p in pred.operands)
            return any(self.eval_predicate(p, env) for p in pred.operands)
        if isinstance(pred, NotOp):
            return not self.eval_predicate(pred.operand, env)
        raise CypherRuntimeError(f"cannot evaluate predicate {type(pred).__name__}")

    def _compare(self, pred: Comparison, env: Dict[str, Any]) -> bool:
        left = self.eval_value(pred.left, env)
        right = self.eval_value(pred.right, env)
        if left is None or right is None:
            return False
        op = pred.op
        if op == "CONTAINS":
            if not (isinstance(left, str) and isinstance(right, str)):
                return False
            return right.lower() in left.lower()
        if op == "IN":
            if not isinstance(right, (list, tuple)):
                return False
            return any(_values_equal(pred, left, item) for item in right)
        if op in ("=", "<>"):
            equal = _values_equal(pred, left, right)
            return equal if op == "=" else not equal
        if isinstance(left, bool) or isinstance(right, bool):
            return False
        if isinstance(left, (int, float)) and isinstance(right, (int, float)):
            pass
        elif isinstance(left, str) and isinstance(right, str):
            pass
        else:
            return False
        if op == "<":
            return left < right
        if op == ">":
            return left > right
        if op == "<=":
            return left <= right
        return left >= right

    # -- projection ----------------------------------------------------------

    def project(self, clauses: List[Any], envs: List[Dict[str, Any]]) -> ResultTable:
        ret: ReturnClause = next(c for c in clauses if isinstance(c, ReturnClause))
        order: Optional[OrderByClause] = next((c for c in clauses if isinstance(c, OrderByClause)), None)
        limit: Optional[LimitClause] = next((c for c in clauses if isinstance(c, LimitClause)), None)

        columns = [item.alias for item in ret.items]
        has_aggregate = any(isinstance(item.expr, Aggregate) for item in ret.items)

        if not has_aggregate:
            rows = [
                tuple(_externalize(self.eval_value(item.expr, env)) for item in ret.items)
                for env in envs
            ]
        else:
            rows = self._aggregate_rows(ret, envs)

        if ret.distinct:
            seen = set()
            unique = []
            for row in rows:
                key = _hashable(row)
                if key not in seen:
                    seen.add(key)
                    unique.append(row)
            rows = unique

        if order is not None:
            rows = self._order_rows(rows, ret, order)
        if limit is not None:
            rows = rows[: limit.count]
        return ResultTable(columns=columns, rows=rows)

    def _aggregate_rows(self, ret: ReturnClause, envs: List[Dict[str, Any]]) -> List[Tuple[Any, ...]]:
        key_items = [(i, item) for i, item in enumerate(ret.items) if not isinstance(item.expr, Aggregate)]
        agg_items = [(i, item) for i, item in enumerate(ret.items) if isinstance(item.expr, Aggregate)]

        groups: Dict[Any, Dict[str, Any]] = {}
        for env in envs:
            key_values = tuple(_externalize(self.eval_value(item.expr, env)) for _, item in key_items)
            bucket = groups.setdefault(_hashable(key_values), {"keys": key_values, "envs": []})
            bucket["envs"].append(env)

        rows: List[Tuple[Any, ...]] = []
        for bucket in groups.values():
            row: List[Any] = [None] * len(ret.items)
            for (idx, _), value in zip(key_items, bucket["keys"]):
                row[idx] = value
            for idx, item in agg_items:
                row[idx] = self._aggregate(item.expr, bucket["envs"])
            rows.append(tuple(row))
        return rows

    def _aggregate(self, agg: Aggregate, envs: List[Dict[str, Any]]) -> Any:
        if agg.func == "COUNT" and agg.expr is None:
            return len(envs)
        values = []
        for env in envs:
            value = _externalize(self.eval_value(agg.expr, env))
            if value is not None:
                values.append(value)
        if agg.distinct:
            seen = set()
            deduped = []
            for value in values:
                key = _hashable(value)
                if key not in seen:
                    seen.add(key)
                    deduped.append(value)
            values = deduped
        if agg.func == "COUNT":
            return len(values)
        return values

    def _order_rows(self, rows: List[Tuple[Any, ...]], ret: ReturnClause, order: OrderByClause) -> List[Tuple[Any, ...]]:
        indices: List[Tuple[int, bool]] = []
        aliases = [item.alias for item in ret.items]
        for item in order.items:
            idx = None
            if isinstance(item.expr, VariableRef) and item.expr.name in aliases:
                idx = aliases.index(item.expr.name)
            else:
                for j, rit in enumerate(ret.items):
                    if rit.expr == item.expr:
                        idx = j
                        break
            if idx is None:
                raise CypherRuntimeError("ORDER BY must reference a returned column")
            indices.append((idx, item.descending))

        ordered = list(rows)
        for idx, descending in reversed(indices):
            ordered.sort(key=lambda row: _sort_key(row[idx]), reverse=descending)
        return ordered


def _values_equal(pred: Comparison, left: Any, right: Any) -> bool:
    name_sided = any(
        isinstance(side, PropertyRef) and side.key == "name" for side in (pred.left, pred.right)
    )
    if name_sided and isinstance(left, str) and isinstance(right, str):
        return left.strip().lower() == right.strip().lower()
    if isinstance(left, bool) != isinstance(right, bool):
        return False
    return left == right


def _externalize(value: Any) -> Any:
    if isinstance(value, Node):
        return NodeRef(id=value.id, label=value.label, name=value.name)
    if isinstance(value, Edge):
        return EdgeRef(id=value.id, label=value.label)
    if isinstance(value, list):
        return [_externalize(v) for v in value]
    return value


def _hashable(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_hashable(v) for v in value)
    if isinstance(value, tuple):
        return tuple(_hashable(v) for v in value)
    return value


def _sort_key(value: Any) -> Tuple[int, Any]:
    # Nulls sort after everything; mixed types sort by type family.
    if value is None:
        return (3, 0)
    if isinstance(value, bool):
        return (1, int(value))
    if isinstance(value, (int, float)):
        return (0, value)
    if isinstance(value, str):
        return (1, value)
    return (2, str(value))


# -- WRITE evaluation -------------------------------------------------------------

class _Writer:
    def __init__(self, graph: PropertyGraph):
        self.graph = graph
        self.env: Dict[str, Tuple[str, str]] = {}  # var -> ("node"|"edge", id)
        self.summary = WriteSummary()

    def run(self, ast: CypherAst) -> WriteSummary:
        for clause in ast.clauses:
            if isinstance(clause, MergeClause):
                self.merge_path(clause.pattern)
            elif isinstance(clause, SetClause):
                self.apply_set(clause)
            else:
                raise CypherRuntimeError(f"unsupported write clause {type(clause).__name__}")
        return self.summary

    def merge_path(self, path: PathPattern) -> None:
        node_ids: List[str] = []
        for pattern in path.nodes:
            node_ids.append(self.resolve_node(pattern))
        for i, epat in enumerate(path.edges):
            if epat.is_variable_length:
                raise CypherRuntimeError("variable-length patterns cannot be merged")
            left, right = node_ids[i], node_ids[i + 1]
            if epat.direction == "out":
                source, target = left, right
            elif epat.direction == "in":
                source, target = right, left
            else:
                raise CypherRuntimeError("MERGE requires a directed relationship")
            if epat.label is None:
                raise CypherRuntimeError("MERGE relationship requires a type")
            props = {key: lit.value for key, lit in epat.properties}
            before = self.graph.edge_count()
            try:
                edge_id = self.graph.merge_edge(source, target, epat.label, props)
            except GraphError as err:
                raise CypherRuntimeError(str(err)) from err
            if self.graph.edge_count() > before:
                self.summary.edges_created += 1
            else:
                self.summary.edges_matched += 1
            if epat.variable:
                self.env[epat.variable] = ("edge", edge_id)

    def resolve_node(self, pattern: NodePattern) -> str:
        if pattern.variable and pattern.variable in self.env:
            kind, node_id = self.env[pattern.variable]
            if kind != "node":
                raise CypherRuntimeError(f"variable {pattern.variable!r} is not a node")
            return node_id
        if pattern.label is None:
            raise CypherRuntimeError("MERGE node requires a label or a bound variable")
        props = {key: lit.value for key, lit in pattern.properties}
        before = self.graph.node_count()
        try:
            node_id = self.graph.merge_node(pattern.label, props)
        except GraphError as err:
            raise CypherRuntimeError(str(err)) from err
        if self.graph.node_count() > before:
            self.summary.nodes_created += 1
        else:
            self.summary.nodes_matched += 1
        if pattern.variable:
            self.env[pattern.variable] = ("node", node_id)
        return node_id

    def apply_set(self, clause: SetClause) -> None:
        for item in clause.items:
            binding = self.env.get(item.variable)
            if binding is None:
                raise CypherRuntimeError(f"unbound variable {item.variable!r} in SET")
            kind, element_id = binding
            try:
                if kind == "node":
                    self.graph.set_node_property(element_id, item.key, item.value.value)
                else:
                    self.graph.set_edge_property(element_id, item.key, item.value.value)
            except GraphError as err:
                raise CypherRuntimeError(str(err)) from err
            self.summary.properties_set += 1


# -- entry points -------------------------------------------------------------

def execute(ast: CypherAst, graph: PropertyGraph):
    """Run a validated statement. READ needs a frozen graph and returns a
    ResultTable; WRITE needs an unfrozen graph and returns a WriteSummary."""
    if ast.kind == "READ":
        if not graph.frozen:
            raise CypherRuntimeError("read queries require a frozen graph")
        reader = _Reader(graph)
        envs: List[Dict[str, Any]] = [{}]
        for clause in ast.clauses:
            if not isinstance(clause, MatchClause):
                continue
            next_envs: List[Dict[str, Any]] = []
            for env in envs:
                matched = [env]
                failed = False
                for pattern in clause.patterns:
                    layered: List[Dict[str, Any]] = []
                    for partial in matched:
                        layered.extend(reader.match_path(pattern, partial))
                    matched = layered
                    if not matched:
                        failed = True
                        break
                if clause.where is not None and not failed:
                    matched = [m for m in matched if reader.eval_predicate(clause.where, m)]
                    failed = not matched
                if failed:
                    if clause.optional:
                        padded = dict(env)
                        for variable in _pattern_variables(clause):
                            padded.setdefault(variable, None)
                        next_envs.append(padded)
                else:
                    next_envs.extend(matched)
            envs = next_envs
        return reader.project(list(ast.clauses), envs)

    if graph.frozen:
        raise CypherRuntimeError("write statements require an unfrozen graph")
    return _Writer(graph).run(ast)


def _pattern_variables(clause: MatchClause) -> List[str]:
    variables: List[str] = []
    for pattern in clause.patterns:
        for node in pattern.nodes:
            if node.variable:
                variables.append(node.variable)
        for edge in pattern.edges:
            if edge.variable:
                variables.append(edge.variable)
    return variables


# -- rendering ----------------------------------------------------------------

def render_value(value: Any) -> str:
    """Human-readable scalar rendering used in prompts and gold answers."""
    if value is None:
        return ""
    if isinstance(value, NodeRef):
        return value.name
    if isinstance(value, EdgeRef):
        return value.label
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    if isinstance(value, list):
        return ", ".join(render_value(v) for v in value)
    return str(value)


def render_table(table: ResultTable, max_rows: int = 25) -> str:
    """Compact textual table for LLM prompts."""
    if not table.rows:
        return "(no rows)"
    lines = [" | ".join(table.columns)]
    for row in table.rows[:max_rows]:
        lines.append(" | ".join(render_value(cell) for cell in row))
    if len(table.rows) > max_rows:
        lines.append(f"... ({len(table.rows) - max_rows} more rows)")
    return "\n".join(lines)
