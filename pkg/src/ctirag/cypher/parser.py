"""Tokenizer and recursive-descent parser for the Cypher subset.

READ statements: MATCH / OPTIONAL MATCH (each with an optional WHERE),
RETURN with mandatory AS aliases, ORDER BY, LIMIT; aggregates COUNT and
COLLECT; variable-length paths *min..max with max <= 4.

WRITE statements: MERGE / CREATE path patterns and SET assignments only.
Anything else (DELETE, REMOVE, CALL, ...) is unparseable by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, List, Optional, Tuple

from .ast import (
    Aggregate,
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
    OrderItem,
    PathPattern,
    PropertyRef,
    ReturnClause,
    ReturnItem,
    SetClause,
    SetItem,
    VariableRef,
    bool_chain,
)

MAX_VAR_HOPS = 4

KEYWORDS = {
    "MATCH", "OPTIONAL", "WHERE", "RETURN", "ORDER", "BY", "LIMIT", "AS",
    "AND", "OR", "NOT", "IN", "CONTAINS", "DISTINCT", "COUNT", "COLLECT",
    "MERGE", "CREATE", "SET", "ASC", "DESC", "TRUE", "FALSE", "NULL",
}

_PUNCT = ("<=", ">=", "<>", "..", "(", ")", "[", "]", "{", "}", ":", ",",
          ".", "-", ">", "<", "=", "*", "+")


class CypherSyntaxError(Exception):
    """Parse failure with character position and the expected token set."""

    def __init__(self, message: str, position: int, expected: Tuple[str, ...] = ()):
        self.position = position
        self.expected = tuple(expected)
        super().__init__(f"syntax error at position {position}: {message}")


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "keyword" | "string" | "int" | "float" | punct literal | "eof"
    text: str
    value: Any
    pos: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "/" and text[i : i + 2] == "//":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            word = text[start:i]
            upper = word.upper()
            if upper in KEYWORDS:
                tokens.append(Token("keyword", upper, upper, start))
            else:
                tokens.append(Token("ident", word, word, start))
            continue
        if ch.isdigit():
            start = i
            while i < n and text[i].isdigit():
                i += 1
            # A '.' starts a float only when followed by a digit ('1..3' is a range).
            if i < n and text[i] == "." and i + 1 < n and text[i + 1].isdigit():
                i += 1
                while i < n and text[i].isdigit():
                    i += 1
                tokens.append(Token("float", text[start:i], float(text[start:i]), start))
            else:
                tokens.append(Token("int", text[start:i], int(text[start:i]), start))
            continue
        if ch in "'\"":
            start = i
            quote = ch
            i += 1
            chars = []
            while i < n and text[i] != quote:
                if text[i] == "\\" and i + 1 < n:
                    nxt = text[i + 1]
                    chars.append({"n": "\n", "t": "\t"}.get(nxt, nxt))
                    i += 2
                else:
                    chars.append(text[i])
                    i += 1
            if i >= n:
                raise CypherSyntaxError("unterminated string literal", start)
            i += 1
            tokens.append(Token("string", text[start:i], "".join(chars), start))
            continue
        for punct in _PUNCT:
            if text.startswith(punct, i):
                tokens.append(Token(punct, punct, punct, i))
                i += len(punct)
                break
        else:
            raise CypherSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(Token("eof", "", None, n))
    return tokens


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.i = 0

    # -- token plumbing ------------------------------------------------------

    @property
    def cur(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at(self, kind: str) -> bool:
        return self.cur.kind == kind

    def at_keyword(self, *words: str) -> bool:
        return self.cur.kind == "keyword" and self.cur.value in words

    def accept(self, kind: str) -> Optional[Token]:
        if self.at(kind):
            return self.advance()
        return None

    def accept_keyword(self, *words: str) -> Optional[Token]:
        if self.at_keyword(*words):
            return self.advance()
        return None

    def expect(self, kind: str, what: str = "") -> Token:
        if self.at(kind):
            return self.advance()
        raise self.error(what or f"expected {kind!r}", (kind,))

    def expect_keyword(self, *words: str) -> Token:
        if self.at_keyword(*words):
            return self.advance()
        raise self.error("expected " + " or ".join(words), words)

    def error(self, message: str, expected: Tuple[str, ...] = ()) -> CypherSyntaxError:
        found = self.cur.text or "end of input"
        return CypherSyntaxError(f"{message}, found {found!r}", self.cur.pos, expected)

    # -- entry ---------------------------------------------------------------

    def parse_statement(self) -> CypherAst:
        if self.at_keyword("MATCH", "OPTIONAL"):
            return self.parse_read()
        if self.at_keyword("MERGE", "CREATE", "SET"):
            return self.parse_write()
        raise self.error(
            "expected a statement clause",
            ("MATCH", "OPTIONAL MATCH", "MERGE", "CREATE", "SET"),
        )

    def parse_read(self) -> CypherAst:
        clauses: List[Any] = []
        while self.at_keyword("MATCH", "OPTIONAL"):
            optional = self.accept_keyword("OPTIONAL") is not None
            self.expect_keyword("MATCH")
            patterns = [self.parse_path()]
            while self.accept(","):
                patterns.append(self.parse_path())
            where = None
            if self.accept_keyword("WHERE"):
                where = self.parse_or_expr()
            clauses.append(MatchClause(tuple(patterns), optional=optional, where=where))
        self.expect_keyword("RETURN")
        distinct = self.accept_keyword("DISTINCT") is not None
        items = [self.parse_return_item()]
        while self.accept(","):
            items.append(self.parse_return_item())
        clauses.append(ReturnClause(tuple(items), distinct=distinct))
        if self.accept_keyword("ORDER"):
            self.expect_keyword("BY")
            order_items = [self.parse_order_item()]
            while self.accept(","):
                order_items.append(self.parse_order_item())
            clauses.append(OrderByClause(tuple(order_items)))
        if self.accept_keyword("LIMIT"):
            count = self.expect("int", "LIMIT expects an integer")
            clauses.append(LimitClause(int(count.value)))
        self.expect("eof", "unexpected trailing input")
        return CypherAst("READ", tuple(clauses))

    def parse_write(self) -> CypherAst:
        clauses: List[Any] = []
        while not self.at("eof"):
            if self.at_keyword("MERGE", "CREATE"):
                create = self.advance().value == "CREATE"
                clauses.append(MergeClause(self.parse_path(), create=create))
            elif self.accept_keyword("SET"):
                items = [self.parse_set_item()]
                while self.accept(","):
                    items.append(self.parse_set_item())
                clauses.append(SetClause(tuple(items)))
            else:
                raise self.error("expected MERGE, CREATE or SET", ("MERGE", "CREATE", "SET"))
        self.advance()
        return CypherAst("WRITE", tuple(clauses))

    # -- patterns ------------------------------------------------------------

    def parse_path(self) -> PathPattern:
        elements: List[Any] = [self.parse_node_pattern()]
        while self.at("-") or self.at("<"):
            elements.append(self.parse_edge_pattern())
            elements.append(self.parse_node_pattern())
        return PathPattern(tuple(elements))

    def parse_node_pattern(self) -> NodePattern:
        self.expect("(", "expected node pattern")
        variable = None
        if self.at("ident"):
            variable = self.advance().value
        label = None
        if self.accept(":"):
            label = self.expect("ident", "expected node label").value
        props = self.parse_prop_map() if self.at("{") else ()
        self.expect(")", "expected ')' closing node pattern")
        return NodePattern(variable=variable, label=label, properties=props)

    def parse_edge_pattern(self) -> EdgePattern:
        direction = "any"
        if self.accept("<"):
            direction = "in"
            self.expect("-", "expected '-' after '<'")
        else:
            self.expect("-", "expected edge pattern")
        variable = None
        label = None
        props: Tuple = ()
        min_hops = max_hops = 1
        if self.accept("["):
            if self.at("ident"):
                variable = self.advance().value
            if self.accept(":"):
                label = self.expect("ident", "expected relationship type").value
            if self.accept("*"):
                lo = self.expect("int", "expected lower hop bound")
                self.expect("..", "expected '..' in hop range")
                hi = self.expect("int", "expected upper hop bound")
                min_hops, max_hops = int(lo.value), int(hi.value)
                if min_hops < 1 or max_hops < min_hops:
                    raise CypherSyntaxError("invalid hop range", lo.pos)
                if max_hops > MAX_VAR_HOPS:
                    raise CypherSyntaxError(
                        f"hop bound {max_hops} exceeds maximum {MAX_VAR_HOPS}", hi.pos
                    )
            if self.at("{"):
                props = self.parse_prop_map()
            self.expect("]", "expected ']' closing edge pattern")
        self.expect("-", "expected '-' after edge body")
        if self.accept(">"):
            if direction == "in":
                raise self.error("edge cannot point both ways")
            direction = "out"
        return EdgePattern(
            variable=variable,
            label=label,
            direction=direction,
            properties=props,
            min_hops=min_hops,
            max_hops=max_hops,
        )

    def parse_prop_map(self) -> Tuple[Tuple[str, Literal], ...]:
        self.expect("{")
        pairs: List[Tuple[str, Literal]] = []
        if not self.at("}"):
            while True:
                key = self.expect("ident", "expected property name").value
                self.expect(":", "expected ':' in property map")
                pairs.append((key, self.parse_literal()))
                if not self.accept(","):
                    break
        self.expect("}", "expected '}' closing property map")
        return tuple(pairs)

    # -- expressions ---------------------------------------------------------

    def parse_literal(self) -> Literal:
        if self.at("string"):
            return Literal(self.advance().value)
        if self.at("int") or self.at("float"):
            return Literal(self.advance().value)
        if self.accept("-"):
            tok = self.cur
            if self.at("int") or self.at("float"):
                return Literal(-self.advance().value)
            raise CypherSyntaxError("expected number after '-'", tok.pos)
        if self.at_keyword("TRUE"):
            self.advance()
            return Literal(True)
        if self.at_keyword("FALSE"):
            self.advance()
            return Literal(False)
        if self.at_keyword("NULL"):
            self.advance()
            return Literal(None)
        raise self.error("expected literal value", ("string", "number", "TRUE", "FALSE", "NULL"))

    def parse_value(self) -> Any:
        if self.at("["):
            self.advance()
            items: List[Literal] = []
            if not self.at("]"):
                while True:
                    items.append(self.parse_literal())
                    if not self.accept(","):
                        break
            self.expect("]", "expected ']' closing list")
            return ListLiteral(tuple(items))
        if self.at("ident"):
            name = self.advance().value
            if self.accept("."):
                key_tok = self.accept("ident") or self.accept("keyword")
                if key_tok is None:
                    raise self.error("expected property name after '.'")
                return PropertyRef(name, str(key_tok.value).lower() if key_tok.kind == "keyword" else key_tok.value)
            return VariableRef(name)
        return self.parse_literal()

    def parse_comparison(self) -> Any:
        if self.accept("("):
            inner = self.parse_or_expr()
            self.expect(")", "expected ')' closing group")
            return inner
        left = self.parse_value()
        for op in ("<=", ">=", "<>", "=", "<", ">"):
            if self.at(op):
                self.advance()
                return Comparison(op, left, self.parse_value())
        if self.accept_keyword("CONTAINS"):
            return Comparison("CONTAINS", left, self.parse_value())
        if self.accept_keyword("IN"):
            return Comparison("IN", left, self.parse_value())
        raise self.error("expected comparison operator", tuple(c for c in ("=", "<>", "<", ">", "<=", ">=", "CONTAINS", "IN")))

    def parse_not_expr(self) -> Any:
        if self.accept_keyword("NOT"):
            return NotOp(self.parse_not_expr())
        return self.parse_comparison()

    def parse_and_expr(self) -> Any:
        operands = [self.parse_not_expr()]
        while self.accept_keyword("AND"):
            operands.append(self.parse_not_expr())
        return bool_chain("AND", operands)

    def parse_or_expr(self) -> Any:
        operands = [self.parse_and_expr()]
        while self.accept_keyword("OR"):
            operands.append(self.parse_and_expr())
        return bool_chain("OR", operands)

    # -- return / order / set --------------------------------------------------

    def parse_return_expr(self) -> Any:
        if self.at_keyword("COUNT", "COLLECT"):
            func = self.advance().value
            self.expect("(", f"expected '(' after {func}")
            if func == "COUNT" and self.accept("*"):
                agg = Aggregate(func, None)
            else:
                distinct = self.accept_keyword("DISTINCT") is not None
                agg = Aggregate(func, self.parse_value(), distinct=distinct)
            self.expect(")", f"expected ')' closing {func}")
            return agg
        return self.parse_value()

    def parse_return_item(self) -> ReturnItem:
        expr = self.parse_return_expr()
        self.expect_keyword("AS")
        alias = self.expect("ident", "expected alias name").value
        return ReturnItem(expr, alias)

    def parse_order_item(self) -> OrderItem:
        expr = self.parse_return_expr()
        descending = False
        if self.accept_keyword("DESC"):
            descending = True
        else:
            self.accept_keyword("ASC")
        return OrderItem(expr, descending=descending)

    def parse_set_item(self) -> SetItem:
        variable = self.expect("ident", "expected variable in SET").value
        self.expect(".", "expected '.' in SET target")
        key_tok = self.accept("ident") or self.accept("keyword")
        if key_tok is None:
            raise self.error("expected property name in SET")
        key = str(key_tok.value).lower() if key_tok.kind == "keyword" else key_tok.value
        self.expect("=", "expected '=' in SET")
        return SetItem(variable, key, self.parse_literal())


def parse(text: str) -> CypherAst:
    """Parse one statement; raises CypherSyntaxError with position on failure."""
    return _Parser(tokenize(text)).parse_statement()
