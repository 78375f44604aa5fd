"""
Minimal SQL parser backing the attack oracle.

Covers the subset a mock web application renders: SELECT / INSERT /
UPDATE / DELETE, WHERE expressions with AND/OR (also && and ||),
comparison, BETWEEN, IN and LIKE predicates, arithmetic, function calls,
subqueries, UNION chains, string/number literals, comments (--, #, /* */)
and ;-separated statement lists.

The oracle compares statement *shapes*: two parses are shape-equal when
they differ only in literal values. It also needs to know whether a
variable-free always-true disjunct appears anywhere in a WHERE clause,
how many UNION arms a statement has, and whether the input carried a
comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


class SqlSyntaxError(ValueError):
    pass


# ----------------------------------------------------------------------
# lexer
# ----------------------------------------------------------------------

class T(Enum):
    KW = "kw"
    IDENT = "ident"
    NUM = "num"
    STR = "str"
    OP = "op"
    END = "end"


_KEYWORDS = frozenset(
    """
    select from where and or not union all insert into values update set
    delete drop table between in like is null order by group having limit
    as distinct create alter exists
    """.split()
)

_NUM_RE = re.compile(r"\d+(\.\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")
_MULTI_OPS = ("<=", ">=", "<>", "!=", "||", "&&")
_SINGLE_OPS = set("<>=+-*/%(),;.")


@dataclass(frozen=True)
class Tok:
    kind: T
    text: str
    pos: int


@dataclass
class LexResult:
    tokens: list[Tok]
    had_comment: bool


def lex(sql: str) -> LexResult:
    tokens: list[Tok] = []
    had_comment = False
    i = 0
    n = len(sql)
    while i < n:
        c = sql[i]
        if c.isspace():
            i += 1
            continue
        if sql.startswith("--", i):
            had_comment = True
            nl = sql.find("\n", i)
            i = n if nl == -1 else nl + 1
            continue
        if c == "#":
            had_comment = True
            nl = sql.find("\n", i)
            i = n if nl == -1 else nl + 1
            continue
        if sql.startswith("/*", i):
            had_comment = True
            end = sql.find("*/", i + 2)
            i = n if end == -1 else end + 2
            continue
        if c in ("'", '"'):
            j = i + 1
            content: list[str] = []
            while True:
                if j >= n:
                    raise SqlSyntaxError(f"unterminated string at {i}")
                if sql[j] == c:
                    if j + 1 < n and sql[j + 1] == c:  # doubled-quote escape
                        content.append(c)
                        j += 2
                        continue
                    break
                content.append(sql[j])
                j += 1
            tokens.append(Tok(T.STR, "".join(content), i))
            i = j + 1
            continue
        m = _NUM_RE.match(sql, i)
        if m:
            tokens.append(Tok(T.NUM, m.group(0), i))
            i = m.end()
            continue
        m = _IDENT_RE.match(sql, i)
        if m:
            word = m.group(0)
            kind = T.KW if word.lower() in _KEYWORDS else T.IDENT
            tokens.append(Tok(kind, word, i))
            i = m.end()
            continue
        two = sql[i : i + 2]
        if two in _MULTI_OPS:
            tokens.append(Tok(T.OP, two, i))
            i += 2
            continue
        if c in _SINGLE_OPS:
            tokens.append(Tok(T.OP, c, i))
            i += 1
            continue
        raise SqlSyntaxError(f"unexpected character {c!r} at {i}")
    tokens.append(Tok(T.END, "", n))
    return LexResult(tokens, had_comment)


# ----------------------------------------------------------------------
# ast
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Lit:
    value: str
    quoted: bool


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class Star:
    pass


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    operand: object


@dataclass(frozen=True)
class Between:
    value: object
    low: object
    high: object
    negated: bool


@dataclass(frozen=True)
class InList:
    value: object
    items: tuple
    negated: bool


@dataclass(frozen=True)
class Like:
    value: object
    pattern: object
    negated: bool


@dataclass(frozen=True)
class IsNull:
    value: object
    negated: bool


@dataclass(frozen=True)
class SubQuery:
    select: "Select"


@dataclass(frozen=True)
class Select:
    items: tuple
    tables: tuple
    where: object | None
    group_by: tuple = ()
    having: object | None = None
    order_by: tuple = ()
    limit: object | None = None
    unions: tuple = ()  # (all_flag, Select) pairs


@dataclass(frozen=True)
class Insert:
    table: str
    columns: tuple
    rows: tuple


@dataclass(frozen=True)
class Update:
    table: str
    assignments: tuple  # (column, expr)
    where: object | None


@dataclass(frozen=True)
class Delete:
    table: str
    where: object | None


@dataclass
class ParsedSql:
    statements: list
    had_comment: bool


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[Tok]):
        self.toks = tokens
        self.i = 0

    def peek(self) -> Tok:
        return self.toks[self.i]

    def advance(self) -> Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def at_kw(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind is T.KW and tok.text.lower() in words

    def take_kw(self, *words: str) -> str:
        if not self.at_kw(*words):
            raise SqlSyntaxError(
                f"expected {'/'.join(words).upper()} near {self.peek().text!r}"
            )
        return self.advance().text.lower()

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind is T.OP and tok.text in ops

    def take_op(self, op: str) -> None:
        if not self.at_op(op):
            raise SqlSyntaxError(f"expected {op!r} near {self.peek().text!r}")
        self.advance()

    # -- statements ------------------------------------------------

    def statements(self) -> list:
        stmts = []
        while True:
            while self.at_op(";"):
                self.advance()
            if self.peek().kind is T.END:
                break
            stmts.append(self.statement())
        return stmts

    def statement(self):
        if self.at_kw("select"):
            return self.select()
        if self.at_kw("insert"):
            return self.insert()
        if self.at_kw("update"):
            return self.update()
        if self.at_kw("delete"):
            return self.delete()
        if self.at_kw("drop"):
            return self.drop()
        raise SqlSyntaxError(f"expected a statement near {self.peek().text!r}")

    def select(self) -> Select:
        self.take_kw("select")
        if self.at_kw("distinct"):
            self.advance()
        items = [self.expr()]
        while self.at_op(","):
            self.advance()
            items.append(self.expr())
        tables: list = []
        where = None
        group_by: list = []
        having = None
        order_by: list = []
        limit = None
        if self.at_kw("from"):
            self.advance()
            tables.append(self.qualified_name())
            while self.at_op(","):
                self.advance()
                tables.append(self.qualified_name())
        if self.at_kw("where"):
            self.advance()
            where = self.expr()
        if self.at_kw("group"):
            self.advance()
            self.take_kw("by")
            group_by.append(self.expr())
            while self.at_op(","):
                self.advance()
                group_by.append(self.expr())
        if self.at_kw("having"):
            self.advance()
            having = self.expr()
        if self.at_kw("order"):
            self.advance()
            self.take_kw("by")
            order_by.append(self.expr())
            while self.at_op(","):
                self.advance()
                order_by.append(self.expr())
        if self.at_kw("limit"):
            self.advance()
            limit = self.expr()
        unions: list = []
        while self.at_kw("union"):
            self.advance()
            all_flag = False
            if self.at_kw("all"):
                self.advance()
                all_flag = True
            unions.append((all_flag, self.select()))
        return Select(
            tuple(items), tuple(tables), where, tuple(group_by), having,
            tuple(order_by), limit, tuple(unions),
        )

    def insert(self) -> Insert:
        self.take_kw("insert")
        self.take_kw("into")
        table = self.qualified_name()
        columns: list = []
        if self.at_op("("):
            self.advance()
            columns.append(self.qualified_name())
            while self.at_op(","):
                self.advance()
                columns.append(self.qualified_name())
            self.take_op(")")
        self.take_kw("values")
        rows = [self.value_tuple()]
        while self.at_op(","):
            self.advance()
            rows.append(self.value_tuple())
        return Insert(table, tuple(columns), tuple(rows))

    def value_tuple(self) -> tuple:
        self.take_op("(")
        values = [self.expr()]
        while self.at_op(","):
            self.advance()
            values.append(self.expr())
        self.take_op(")")
        return tuple(values)

    def update(self) -> Update:
        self.take_kw("update")
        table = self.qualified_name()
        self.take_kw("set")
        assignments = [self.assignment()]
        while self.at_op(","):
            self.advance()
            assignments.append(self.assignment())
        where = None
        if self.at_kw("where"):
            self.advance()
            where = self.expr()
        return Update(table, tuple(assignments), where)

    def assignment(self) -> tuple:
        column = self.qualified_name()
        self.take_op("=")
        return (column, self.expr())

    def delete(self) -> Delete:
        self.take_kw("delete")
        self.take_kw("from")
        table = self.qualified_name()
        where = None
        if self.at_kw("where"):
            self.advance()
            where = self.expr()
        return Delete(table, where)

    def drop(self) -> Delete:
        # DROP TABLE x is modeled as a table-wide delete for shape purposes
        self.take_kw("drop")
        self.take_kw("table")
        return Delete(self.qualified_name(), None)

    def qualified_name(self) -> str:
        tok = self.peek()
        if tok.kind not in (T.IDENT, T.KW):
            raise SqlSyntaxError(f"expected a name near {tok.text!r}")
        name = self.advance().text
        while self.at_op("."):
            self.advance()
            nxt = self.peek()
            if nxt.kind not in (T.IDENT, T.KW):
                raise SqlSyntaxError(f"expected a name after '.' near {nxt.text!r}")
            name += "." + self.advance().text
        return name

    # -- expressions -----------------------------------------------

    def expr(self):
        return self.or_expr()

    def or_expr(self):
        left = self.and_expr()
        while self.at_kw("or") or self.at_op("||"):
            self.advance()
            left = BinOp("or", left, self.and_expr())
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.at_kw("and") or self.at_op("&&"):
            self.advance()
            left = BinOp("and", left, self.not_expr())
        return left

    def not_expr(self):
        if self.at_kw("not"):
            self.advance()
            return Not(self.not_expr())
        return self.predicate()

    def predicate(self):
        left = self.additive()
        if self.at_op("=", "<", ">", "<=", ">=", "<>", "!="):
            op = self.advance().text
            return BinOp(op, left, self.additive())
        negated = False
        if self.at_kw("not"):
            save = self.i
            self.advance()
            if self.at_kw("between", "in", "like"):
                negated = True
            else:
                self.i = save
                return left
        if self.at_kw("between"):
            self.advance()
            low = self.additive()
            self.take_kw("and")
            return Between(left, low, self.additive(), negated)
        if self.at_kw("in"):
            self.advance()
            self.take_op("(")
            items = [self.expr()]
            while self.at_op(","):
                self.advance()
                items.append(self.expr())
            self.take_op(")")
            return InList(left, tuple(items), negated)
        if self.at_kw("like"):
            self.advance()
            return Like(left, self.additive(), negated)
        if self.at_kw("is"):
            self.advance()
            neg = False
            if self.at_kw("not"):
                self.advance()
                neg = True
            self.take_kw("null")
            return IsNull(left, neg)
        return left

    def additive(self):
        left = self.term()
        while self.at_op("+", "-"):
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.at_op("*", "/", "%"):
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        if self.at_op("-"):
            self.advance()
            return BinOp("-", Lit("0", False), self.unary())
        return self.primary()

    def primary(self):
        tok = self.peek()
        if tok.kind is T.NUM:
            self.advance()
            return Lit(tok.text, False)
        if tok.kind is T.STR:
            self.advance()
            return Lit(tok.text, True)
        if self.at_op("*"):
            self.advance()
            return Star()
        if self.at_op("("):
            self.advance()
            if self.at_kw("select"):
                inner = self.select()
                self.take_op(")")
                return SubQuery(inner)
            inner = self.expr()
            self.take_op(")")
            return inner
        if self.at_kw("null", "true", "false"):
            word = self.advance().text.lower()
            return Ident(word)
        if tok.kind is T.IDENT:
            name = self.qualified_name()
            if self.at_op("("):
                self.advance()
                args: list = []
                if not self.at_op(")"):
                    args.append(self.expr())
                    while self.at_op(","):
                        self.advance()
                        args.append(self.expr())
                self.take_op(")")
                return Func(name.lower(), tuple(args))
            return Ident(name)
        raise SqlSyntaxError(f"unexpected token {tok.text!r} in expression")


def parse(sql: str) -> ParsedSql:
    lexed = lex(sql)
    parser = _Parser(lexed.tokens)
    statements = parser.statements()
    if not statements:
        raise SqlSyntaxError("no statement found")
    return ParsedSql(statements, lexed.had_comment)


# ----------------------------------------------------------------------
# structure helpers for the oracle
# ----------------------------------------------------------------------

def shape(node) -> object:
    """Canonical structure with literal values wildcarded."""
    if isinstance(node, Lit):
        return ("lit",)
    if isinstance(node, Ident):
        return ("ident", node.name.lower())
    if isinstance(node, Star):
        return ("star",)
    if isinstance(node, Func):
        return ("func", node.name, tuple(shape(a) for a in node.args))
    if isinstance(node, BinOp):
        return ("binop", node.op, shape(node.left), shape(node.right))
    if isinstance(node, Not):
        return ("not", shape(node.operand))
    if isinstance(node, Between):
        return ("between", node.negated, shape(node.value), shape(node.low),
                shape(node.high))
    if isinstance(node, InList):
        return ("in", node.negated, shape(node.value),
                tuple(shape(i) for i in node.items))
    if isinstance(node, Like):
        return ("like", node.negated, shape(node.value), shape(node.pattern))
    if isinstance(node, IsNull):
        return ("isnull", node.negated, shape(node.value))
    if isinstance(node, SubQuery):
        return ("subquery", shape(node.select))
    if isinstance(node, Select):
        return (
            "select",
            tuple(shape(i) for i in node.items),
            tuple(t.lower() for t in node.tables),
            shape(node.where) if node.where is not None else None,
            tuple(shape(g) for g in node.group_by),
            shape(node.having) if node.having is not None else None,
            tuple(shape(o) for o in node.order_by),
            shape(node.limit) if node.limit is not None else None,
            tuple(("union_all" if a else "union", shape(s)) for a, s in node.unions),
        )
    if isinstance(node, Insert):
        return (
            "insert", node.table.lower(),
            tuple(c.lower() for c in node.columns),
            tuple(tuple(shape(v) for v in row) for row in node.rows),
        )
    if isinstance(node, Update):
        return (
            "update", node.table.lower(),
            tuple((c.lower(), shape(e)) for c, e in node.assignments),
            shape(node.where) if node.where is not None else None,
        )
    if isinstance(node, Delete):
        return ("delete", node.table.lower(),
                shape(node.where) if node.where is not None else None)
    raise TypeError(f"no shape rule for {type(node).__name__}")


def _numeric(text: str) -> float | None:
    try:
        return float(text)
    except ValueError:
        return None


def eval_const(node):
    """Value of a variable-free expression, or None when not evaluable."""
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Not):
        inner = eval_const(node.operand)
        return None if inner is None else not _truthy(inner)
    if isinstance(node, BinOp):
        left = eval_const(node.left)
        right = eval_const(node.right)
        if left is None or right is None:
            return None
        if node.op in ("and", "or"):
            a, b = _truthy(left), _truthy(right)
            return (a and b) if node.op == "and" else (a or b)
        if node.op in ("=", "<", ">", "<=", ">=", "<>", "!="):
            return _compare(node.op, left, right)
        ln, rn = _as_number(left), _as_number(right)
        if ln is None or rn is None:
            return None
        if node.op == "+":
            return ln + rn
        if node.op == "-":
            return ln - rn
        if node.op == "*":
            return ln * rn
        if node.op == "/":
            return None if rn == 0 else ln / rn
        if node.op == "%":
            return None if rn == 0 else ln % rn
        return None
    if isinstance(node, Between):
        value, low, high = (eval_const(n) for n in (node.value, node.low, node.high))
        if value is None or low is None or high is None:
            return None
        result = _compare("<=", low, value) and _compare("<=", value, high)
        return not result if node.negated else result
    if isinstance(node, InList):
        value = eval_const(node.value)
        if value is None:
            return None
        members = [eval_const(i) for i in node.items]
        if any(m is None for m in members):
            return None
        result = any(_compare("=", value, m) for m in members)
        return not result if node.negated else result
    if isinstance(node, Like):
        value, pattern = eval_const(node.value), eval_const(node.pattern)
        if value is None or pattern is None:
            return None
        regex = re.escape(str(pattern)).replace("%", ".*").replace("_", ".")
        result = re.fullmatch(regex, str(value)) is not None
        return not result if node.negated else result
    return None  # Ident, Func, Star, SubQuery: not variable-free


def _as_number(value) -> float | None:
    if isinstance(value, bool):
        return float(value)
    if isinstance(value, (int, float)):
        return float(value)
    return _numeric(str(value))


def _compare(op: str, left, right) -> bool:
    ln, rn = _as_number(left), _as_number(right)
    if ln is not None and rn is not None:
        a, b = ln, rn
    else:
        a, b = str(left), str(right)
    return {
        "=": a == b, "<": a < b, ">": a > b,
        "<=": a <= b, ">=": a >= b, "<>": a != b, "!=": a != b,
    }[op]


def _truthy(value) -> bool:
    if isinstance(value, bool):
        return value
    number = _as_number(value)
    return number is not None and number != 0


def _boolean_leaves(expr):
    """Nodes in boolean positions of an and/or tree: the conditions the
    clause actually conjoins and disjoins (a NOT is one such condition)."""
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, BinOp) and node.op in ("and", "or"):
            stack.append(node.left)
            stack.append(node.right)
        else:
            yield node


def _clause_roots(stmt):
    """WHERE/HAVING expression roots, including those of union arms."""
    if isinstance(stmt, Select):
        if stmt.where is not None:
            yield stmt.where
        if stmt.having is not None:
            yield stmt.having
        for _, arm in stmt.unions:
            yield from _clause_roots(arm)
    elif isinstance(stmt, (Update, Delete)):
        if stmt.where is not None:
            yield stmt.where


def has_true_disjunct(stmt) -> bool:
    """True when a WHERE/HAVING clause conjoins or disjoins a variable-free
    condition that evaluates to true.

    Benign renders never contain variable-free conditions (templates
    compare columns against values), so any always-true constant in a
    boolean position is injected.
    """
    for root in _clause_roots(stmt):
        for leaf in _boolean_leaves(root):
            value = eval_const(leaf)
            if value is not None and _truthy(value):
                return True
    return False


def count_unions(stmt) -> int:
    if isinstance(stmt, Select):
        total = len(stmt.unions)
        for _, arm in stmt.unions:
            total += count_unions(arm)
        for item in stmt.items:
            if isinstance(item, SubQuery):
                total += count_unions(item.select)
        return total
    return 0
