"""Read-only Cypher subset (plus MERGE/CREATE/SET ingestion) over the embedded graph."""

from .ast import (
    Aggregate,
    BoolOp,
    Comparison,
    CypherAst,
    EdgePattern,
    ExprError,
    ListLiteral,
    Literal,
    MatchClause,
    MergeClause,
    NodePattern,
    NotOp,
    OrderByClause,
    OrderItem,
    PathPattern,
    PropertyRef,
    ReturnClause,
    ReturnItem,
    SetClause,
    SetItem,
    VariableRef,
    render,
)
from .parser import CypherSyntaxError, parse
from .validate import ValidationReport, validate
from .execute import (
    CypherRuntimeError,
    EdgeRef,
    NodeRef,
    ResultTable,
    WriteSummary,
    empty_result,
    execute,
    render_table,
    render_value,
)

__all__ = [
    "Aggregate",
    "BoolOp",
    "Comparison",
    "CypherAst",
    "CypherRuntimeError",
    "CypherSyntaxError",
    "EdgePattern",
    "EdgeRef",
    "ExprError",
    "ListLiteral",
    "Literal",
    "MatchClause",
    "MergeClause",
    "NodePattern",
    "NodeRef",
    "NotOp",
    "OrderByClause",
    "OrderItem",
    "PathPattern",
    "PropertyRef",
    "ResultTable",
    "ReturnClause",
    "ReturnItem",
    "SetClause",
    "SetItem",
    "ValidationReport",
    "VariableRef",
    "WriteSummary",
    "empty_result",
    "execute",
    "parse",
    "render",
    "render_table",
    "render_value",
    "validate",
]
