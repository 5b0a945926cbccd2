"""Lexer, parser and lossless syntax tree for the pthread-flavored C subset.

The tree keeps every character of the input: each token stores the
whitespace and comments that precede it, so emitting the tree reproduces
the source exactly.  Rewrites are expressed as span-anchored text edits
applied to the original text, and the patched text is re-parsed from
scratch (parse, edit, re-parse).

Grammar accepted (top level):

    int NAME;                  int NAME = expr;
    pthread_mutex_t NAME = PTHREAD_MUTEX_INITIALIZER;
    void *NAME(void *ARG) { ... }
    int NAME() { ... }

Statements: expression statements, ``int``/``pthread_t`` declarations,
compound blocks, ``if``/``else``, ``while``, ``return``.  Expressions:
integer literals, identifiers, ``&x``, unary ``-``/``!``, the usual
binary operators, ``=`` and ``+=``.  ``//`` and ``/* */`` comments are
preserved as trivia.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .reports import SourceCoord

# Node kinds
TRANSLATION_UNIT = "TranslationUnit"
VAR_DECL = "VarDecl"
MUTEX_DECL = "MutexDecl"
FUNC_DEF = "FuncDef"
COMPOUND_STMT = "CompoundStmt"
EXPR_STMT = "ExprStmt"
IF_STMT = "IfStmt"
WHILE_STMT = "WhileStmt"
RETURN_STMT = "ReturnStmt"
DECL_STMT = "DeclStmt"
CALL_EXPR = "CallExpr"
BINARY_EXPR = "BinaryExpr"
UNARY_EXPR = "UnaryExpr"
ASSIGN_EXPR = "AssignExpr"
IDENTIFIER = "Identifier"
INT_LITERAL = "IntLiteral"
ADDR_OF = "AddrOf"

STATEMENT_KINDS = frozenset(
    {EXPR_STMT, DECL_STMT, COMPOUND_STMT, IF_STMT, WHILE_STMT, RETURN_STMT}
)

# Roles a located statement can play
ROLE_PLAIN = "PlainStatement"
ROLE_IF_CONDITION = "IfCondition"
ROLE_ELSE_IF_CONDITION = "ElseIfCondition"
ROLE_WHILE_CONDITION = "WhileCondition"
ROLE_UNSUPPORTED = "Unsupported"

KEYWORDS = frozenset(
    {"int", "void", "return", "if", "else", "while", "pthread_mutex_t", "pthread_t"}
)

_PUNCT2 = ("&&", "||", "==", "!=", "<=", ">=", "+=")
_PUNCT1 = "(){};,=<>+-*/%!&"


class ParseError(Exception):
    """Syntax error with the offending position; parsing stops here."""

    def __init__(self, message: str, line: int, column: int, offset: int):
        super().__init__(f"{line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column
        self.offset = offset


class NotFoundError(Exception):
    """No identifier matching a reported coordinate exists in the tree."""


class OverlapError(Exception):
    """Two text edits in one batch cover intersecting spans."""


@dataclass(frozen=True)
class Span:
    """Half-open offset range plus the 1-based coordinates of its ends."""

    start_offset: int
    end_offset: int
    start: SourceCoord
    end: SourceCoord

    def covers(self, coord: SourceCoord) -> bool:
        if coord.line != self.start.line:
            return False
        return self.start.column <= coord.column < max(self.end.column, self.start.column + 1)


@dataclass(eq=False)
class Token:
    kind: str  # "ident" | "number" | "punct" | "eof"
    text: str
    leading: str  # whitespace/comments preceding the token, verbatim
    offset: int  # offset of the token text (leading trivia comes before)
    line: int
    column: int

    @property
    def end(self) -> int:
        return self.offset + len(self.text)

    def __repr__(self) -> str:  # keep failure output short
        return f"Token({self.kind}, {self.text!r}, @{self.line}:{self.column})"


@dataclass(eq=False)
class CstNode:
    kind: str
    children: list = field(default_factory=list)
    parent: "CstNode | None" = field(default=None, repr=False)
    span: Span | None = field(default=None, repr=False)

    def __repr__(self) -> str:
        at = f"@{self.span.start}" if self.span else ""
        return f"<{self.kind}{at}>"

    def tokens(self):
        for child in self.children:
            if isinstance(child, Token):
                yield child
            else:
                yield from child.tokens()

    def walk(self):
        yield self
        for child in self.children:
            if isinstance(child, CstNode):
                yield from child.walk()

    def child_nodes(self):
        return [c for c in self.children if isinstance(c, CstNode)]

    def root(self) -> "CstNode":
        node = self
        while node.parent is not None:
            node = node.parent
        return node


@dataclass
class StatementHandle:
    """A located statement (or condition-owning construct) plus its role."""

    node: CstNode
    parent_kind: str
    role: str
    identifier: CstNode
    reason: str | None = None


@dataclass(frozen=True)
class TextEdit:
    """Span-anchored replacement; zero-width span means insertion.

    ``kind``/``mutex``/``anchor``/``order_col`` are bookkeeping the
    transform engine uses to order and coalesce patches; they do not
    affect how a single edit applies.  ``anchor`` is the source position
    the insertion conceptually attaches to (insertions at one text
    offset are ordered by it), and ``order_col`` breaks remaining ties
    by the column of the access that motivated the edit.
    """

    start: int
    end: int
    replacement: str
    kind: str | None = None
    mutex: str | None = None
    anchor: int = -1
    order_col: int = 0

    @property
    def sort_anchor(self) -> int:
        return self.anchor if self.anchor >= 0 else self.start


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def advance_over(segment: str) -> None:
        nonlocal line, col
        newlines = segment.count("\n")
        if newlines:
            line += newlines
            col = len(segment) - segment.rfind("\n")
        else:
            col += len(segment)

    while True:
        lead_start = i
        while i < n:
            c = text[i]
            if c in " \t\r\n":
                i += 1
            elif c == "/" and text[i : i + 2] == "//":
                j = text.find("\n", i)
                i = n if j < 0 else j
            elif c == "/" and text[i : i + 2] == "/*":
                j = text.find("*/", i + 2)
                if j < 0:
                    advance_over(text[lead_start:i])
                    raise ParseError("unterminated block comment", line, col, i)
                i = j + 2
            else:
                break
        leading = text[lead_start:i]
        advance_over(leading)

        if i >= n:
            tokens.append(Token("eof", "", leading, i, line, col))
            return tokens

        start, start_line, start_col = i, line, col
        c = text[i]
        if c.isalpha() or c == "_":
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            tok = Token("ident", text[start:i], leading, start, start_line, start_col)
        elif c.isdigit():
            while i < n and text[i].isdigit():
                i += 1
            tok = Token("number", text[start:i], leading, start, start_line, start_col)
        elif text[i : i + 2] in _PUNCT2:
            i += 2
            tok = Token("punct", text[start:i], leading, start, start_line, start_col)
        elif c in _PUNCT1:
            i += 1
            tok = Token("punct", c, leading, start, start_line, start_col)
        else:
            raise ParseError(f"unexpected character {c!r}", line, col, i)
        advance_over(tok.text)
        tokens.append(tok)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def take(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.column, tok.offset)

    def at_punct(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "punct" and tok.text == text

    def at_word(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text == word

    def expect_punct(self, text: str) -> Token:
        if not self.at_punct(text):
            self.fail(f"expected '{text}'")
        return self.take()

    def expect_word(self, word: str) -> Token:
        if not self.at_word(word):
            self.fail(f"expected '{word}'")
        return self.take()

    def expect_name(self) -> Token:
        tok = self.peek()
        if tok.kind != "ident":
            self.fail("expected an identifier")
        if tok.text in KEYWORDS:
            self.fail(f"'{tok.text}' is a reserved word")
        return self.take()

    # --- top level ---

    def translation_unit(self) -> CstNode:
        tu = CstNode(TRANSLATION_UNIT)
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                tu.children.append(self.tokens[self.i])
                return tu
            if self.at_word("int"):
                if self.peek(1).kind == "ident" and self.peek(2).kind == "punct" \
                        and self.peek(2).text == "(":
                    tu.children.append(self.int_function())
                else:
                    tu.children.append(self.var_decl())
            elif self.at_word("void"):
                tu.children.append(self.ptr_function())
            elif self.at_word("pthread_mutex_t"):
                tu.children.append(self.mutex_decl())
            else:
                self.fail("expected a declaration or function definition")

    def var_decl(self) -> CstNode:
        node = CstNode(VAR_DECL)
        node.children.append(self.expect_word("int"))
        name = self.expect_name()
        node.children.append(name)
        node.name = name.text
        node.name_token = name
        node.init = None
        if self.at_punct("="):
            node.children.append(self.take())
            init = self.expression()
            node.children.append(init)
            node.init = init
        node.children.append(self.expect_punct(";"))
        return node

    def mutex_decl(self) -> CstNode:
        node = CstNode(MUTEX_DECL)
        node.children.append(self.expect_word("pthread_mutex_t"))
        name = self.expect_name()
        node.children.append(name)
        node.name = name.text
        node.name_token = name
        node.children.append(self.expect_punct("="))
        init = self.peek()
        if init.kind != "ident" or init.text != "PTHREAD_MUTEX_INITIALIZER":
            self.fail("expected PTHREAD_MUTEX_INITIALIZER")
        node.children.append(self.take())
        node.children.append(self.expect_punct(";"))
        return node

    def int_function(self) -> CstNode:
        node = CstNode(FUNC_DEF)
        node.children.append(self.expect_word("int"))
        name = self.expect_name()
        node.children.append(name)
        node.name = name.text
        node.name_token = name
        node.children.append(self.expect_punct("("))
        node.children.append(self.expect_punct(")"))
        node.param = None
        body = self.compound()
        node.children.append(body)
        node.body = body
        return node

    def ptr_function(self) -> CstNode:
        node = CstNode(FUNC_DEF)
        node.children.append(self.expect_word("void"))
        node.children.append(self.expect_punct("*"))
        name = self.expect_name()
        node.children.append(name)
        node.name = name.text
        node.name_token = name
        node.children.append(self.expect_punct("("))
        node.children.append(self.expect_word("void"))
        node.children.append(self.expect_punct("*"))
        node.param = None
        if self.peek().kind == "ident":
            param = self.expect_name()
            node.children.append(param)
            node.param = param.text
        node.children.append(self.expect_punct(")"))
        body = self.compound()
        node.children.append(body)
        node.body = body
        return node

    # --- statements ---

    def compound(self) -> CstNode:
        node = CstNode(COMPOUND_STMT)
        node.lbrace = self.expect_punct("{")
        node.children.append(node.lbrace)
        node.statements = []
        while not self.at_punct("}"):
            if self.peek().kind == "eof":
                self.fail("unterminated block; expected '}'")
            stmt = self.statement()
            node.children.append(stmt)
            node.statements.append(stmt)
        node.rbrace = self.take()
        node.children.append(node.rbrace)
        return node

    def statement(self) -> CstNode:
        if self.at_punct("{"):
            return self.compound()
        if self.at_word("if"):
            return self.if_stmt()
        if self.at_word("while"):
            return self.while_stmt()
        if self.at_word("return"):
            return self.return_stmt()
        if self.at_word("int") or self.at_word("pthread_t"):
            return self.decl_stmt()
        if self.at_word("else"):
            self.fail("'else' without a matching 'if'")
        tok = self.peek()
        if tok.kind == "punct" and tok.text not in ("(", "!", "-", "&"):
            self.fail("expected a statement")
        node = CstNode(EXPR_STMT)
        expr = self.expression()
        node.children.append(expr)
        node.expr = expr
        node.children.append(self.expect_punct(";"))
        return node

    def if_stmt(self) -> CstNode:
        node = CstNode(IF_STMT)
        node.if_token = self.expect_word("if")
        node.children.append(node.if_token)
        node.children.append(self.expect_punct("("))
        cond = self.expression()
        node.children.append(cond)
        node.cond = cond
        node.children.append(self.expect_punct(")"))
        then = self.statement()
        node.children.append(then)
        node.then = then
        node.else_token = None
        node.els = None
        if self.at_word("else"):
            node.else_token = self.take()
            node.children.append(node.else_token)
            els = self.statement()
            node.children.append(els)
            node.els = els
        return node

    def while_stmt(self) -> CstNode:
        node = CstNode(WHILE_STMT)
        node.while_token = self.expect_word("while")
        node.children.append(node.while_token)
        node.children.append(self.expect_punct("("))
        cond = self.expression()
        node.children.append(cond)
        node.cond = cond
        node.children.append(self.expect_punct(")"))
        body = self.statement()
        node.children.append(body)
        node.body = body
        return node

    def return_stmt(self) -> CstNode:
        node = CstNode(RETURN_STMT)
        node.children.append(self.expect_word("return"))
        node.expr = None
        if not self.at_punct(";"):
            expr = self.expression()
            node.children.append(expr)
            node.expr = expr
        node.children.append(self.expect_punct(";"))
        return node

    def decl_stmt(self) -> CstNode:
        node = CstNode(DECL_STMT)
        type_tok = self.take()  # "int" or "pthread_t"
        node.children.append(type_tok)
        node.type_name = type_tok.text
        name = self.expect_name()
        node.children.append(name)
        node.name = name.text
        node.name_token = name
        node.init = None
        if self.at_punct("="):
            node.children.append(self.take())
            init = self.expression()
            node.children.append(init)
            node.init = init
        node.children.append(self.expect_punct(";"))
        return node

    # --- expressions (precedence climbing) ---

    def expression(self) -> CstNode:
        return self.assignment()

    def assignment(self) -> CstNode:
        target = self.logical_or()
        if self.at_punct("=") or self.at_punct("+="):
            if target.kind != IDENTIFIER:
                self.fail("assignment target must be an identifier")
            node = CstNode(ASSIGN_EXPR)
            op = self.take()
            value = self.assignment()
            node.children = [target, op, value]
            node.target = target
            node.op = op.text
            node.value = value
            return node
        return target

    def _binary_chain(self, operand, ops: tuple[str, ...]) -> CstNode:
        left = operand()
        while self.peek().kind == "punct" and self.peek().text in ops:
            node = CstNode(BINARY_EXPR)
            op = self.take()
            right = operand()
            node.children = [left, op, right]
            node.lhs = left
            node.op = op.text
            node.rhs = right
            left = node
        return left

    def logical_or(self) -> CstNode:
        return self._binary_chain(self.logical_and, ("||",))

    def logical_and(self) -> CstNode:
        return self._binary_chain(self.equality, ("&&",))

    def equality(self) -> CstNode:
        return self._binary_chain(self.relational, ("==", "!="))

    def relational(self) -> CstNode:
        return self._binary_chain(self.additive, ("<", "<=", ">", ">="))

    def additive(self) -> CstNode:
        return self._binary_chain(self.multiplicative, ("+", "-"))

    def multiplicative(self) -> CstNode:
        return self._binary_chain(self.unary, ("*", "/", "%"))

    def unary(self) -> CstNode:
        if self.at_punct("-") or self.at_punct("!"):
            node = CstNode(UNARY_EXPR)
            op = self.take()
            operand = self.unary()
            node.children = [op, operand]
            node.op = op.text
            node.operand = operand
            return node
        if self.at_punct("&"):
            node = CstNode(ADDR_OF)
            amp = self.take()
            ident = self.identifier()
            node.children = [amp, ident]
            node.operand = ident
            return node
        return self.primary()

    def identifier(self) -> CstNode:
        tok = self.expect_name()
        node = CstNode(IDENTIFIER, [tok])
        node.token = tok
        node.name = tok.text
        return node

    def primary(self) -> CstNode:
        tok = self.peek()
        if tok.kind == "number":
            self.take()
            node = CstNode(INT_LITERAL, [tok])
            node.token = tok
            node.value = int(tok.text)
            return node
        if tok.kind == "ident":
            if tok.text in KEYWORDS:
                self.fail(f"'{tok.text}' is a reserved word")
            if self.peek(1).kind == "punct" and self.peek(1).text == "(":
                return self.call()
            return self.identifier()
        self.fail("expected an expression")

    def call(self) -> CstNode:
        node = CstNode(CALL_EXPR)
        callee = self.identifier()
        node.children.append(callee)
        node.callee = callee
        node.children.append(self.expect_punct("("))
        node.args = []
        if not self.at_punct(")"):
            while True:
                arg = self.expression()
                node.children.append(arg)
                node.args.append(arg)
                if self.at_punct(","):
                    node.children.append(self.take())
                else:
                    break
        node.children.append(self.expect_punct(")"))
        return node


def _annotate(root: CstNode, text: str) -> None:
    """Set parent links, compute spans, and stash the source on the root."""

    def visit(node: CstNode, parent: CstNode | None):
        node.parent = parent
        first = last = None
        for child in node.children:
            if isinstance(child, Token):
                lo, hi = child, child
            else:
                lo, hi = visit(child, node)
            if first is None:
                first = lo
            last = hi
        node.span = Span(
            first.offset,
            last.end,
            SourceCoord(first.line, first.column),
            SourceCoord(last.line, last.column + len(last.text)),
        )
        return first, last

    visit(root, None)
    root.text = text


def parse_source(text: str) -> CstNode:
    """Parse one translation unit; raises ParseError on the first error."""
    parser = _Parser(_tokenize(text))
    tu = parser.translation_unit()
    _annotate(tu, text)
    return tu


def emit(tree: CstNode) -> str:
    """Concatenate all trivia and token text; inverse of parse_source."""
    return "".join(tok.leading + tok.text for tok in tree.tokens())


# ---------------------------------------------------------------------------
# Locating reported coordinates
# ---------------------------------------------------------------------------


def _classify(identifier: CstNode) -> StatementHandle:
    node: CstNode = identifier
    while node.parent is not None:
        child, node = node, node.parent
        if node.kind == IF_STMT and child is node.cond:
            parent = node.parent
            if parent.kind == COMPOUND_STMT:
                return StatementHandle(node, COMPOUND_STMT, ROLE_IF_CONDITION, identifier)
            if parent.kind == IF_STMT and node is parent.els:
                return StatementHandle(node, IF_STMT, ROLE_ELSE_IF_CONDITION, identifier)
            return StatementHandle(
                node, parent.kind, ROLE_UNSUPPORTED, identifier,
                reason="if condition inside an unbraced branch",
            )
        if node.kind == WHILE_STMT and child is node.cond:
            parent = node.parent
            if parent.kind == COMPOUND_STMT:
                return StatementHandle(node, COMPOUND_STMT, ROLE_WHILE_CONDITION, identifier)
            return StatementHandle(
                node, parent.kind, ROLE_UNSUPPORTED, identifier,
                reason="while condition inside an unbraced branch",
            )
        if child.kind in STATEMENT_KINDS and node.kind == COMPOUND_STMT:
            return StatementHandle(child, COMPOUND_STMT, ROLE_PLAIN, identifier)
    # Ran out of parents: the reference sits outside any function body,
    # which in this grammar means a global initializer.
    return StatementHandle(
        identifier, TRANSLATION_UNIT, ROLE_UNSUPPORTED, identifier,
        reason="reference in a global initializer cannot be locked",
    )


def locate(tree: CstNode, variable: str, at: SourceCoord) -> StatementHandle:
    """Find the statement owning the reference to `variable` at `at`.

    Exact span matches win; otherwise the nearest same-named identifier
    on the same line is used (detector and compiler column conventions
    can drift by a few columns).  Raises NotFoundError when the line has
    no reference to the variable at all.
    """
    candidates = [
        node
        for node in tree.walk()
        if node.kind == IDENTIFIER and node.name == variable
    ]
    exact = [n for n in candidates if n.span.covers(at)]
    if exact:
        return _classify(exact[0])
    same_line = [n for n in candidates if n.span.start.line == at.line]
    if not same_line:
        raise NotFoundError(f"no reference to '{variable}' near {at}")
    best = min(same_line, key=lambda n: (abs(n.span.start.column - at.column), n.span.start.column))
    return _classify(best)


# ---------------------------------------------------------------------------
# Text edits
# ---------------------------------------------------------------------------


def _apply_order(edits: list[TextEdit]) -> list[int]:
    # Zero-width edits sort before wider ones at the same offset so that
    # an insertion at the boundary of a replacement stays outside it.
    return sorted(range(len(edits)), key=lambda i: (edits[i].start, edits[i].end, i))


def check_overlaps(edits: list[TextEdit]) -> TextEdit | None:
    """Return one offending edit if any two spans truly intersect.

    Spans are half-open; zero-width insertions at another edit's
    boundary do not count as overlap.
    """
    max_end = -1
    for i in _apply_order(edits):
        edit = edits[i]
        if edit.start < max_end:
            return edit
        max_end = max(max_end, edit.end)
    return None


def apply_edits(text: str, edits: list[TextEdit]) -> str:
    """Apply non-overlapping edits; insertion ties keep list order."""
    bad = check_overlaps(edits)
    if bad is not None:
        raise OverlapError(f"overlapping edit at offsets {bad.start}..{bad.end}")
    result = text
    for i in reversed(_apply_order(edits)):
        edit = edits[i]
        result = result[: edit.start] + edit.replacement + result[edit.end :]
    return result
