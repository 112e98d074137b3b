"""Lexer and recursive-descent parser for ``.fml`` article sources.

Grammar:

    article := { "import" pathref ";" } { item } ;
    item    := "def" IDENT ":=" expr ";"
             | "thm" IDENT ":" expr "=" expr "proof" just ";" ;
    just    := "eval" | "by" itemref { "," itemref } ;
    expr    := term { "+" term } ;
    term    := factor { "*" factor } ;
    factor  := INT | itemref | "(" expr ")" ;
    itemref := [ pathref "." ] IDENT ;
    pathref := IDENT { "." IDENT } ;

``--`` starts a line comment; whitespace is insignificant.  INT is
``-?[0-9]+`` (a ``-`` is only ever the sign of a literal).  In a dotted
itemref the longest prefix matching a declared import is the article path
and the remainder must be a single item name; if no prefix matches an
import, everything before the last segment is taken as the article path and
analysis later reports the missing import.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import (
    KEYWORDS,
    Article,
    ArticlePath,
    By,
    Eval,
    Expr,
    Item,
    ItemRef,
    Justification,
    Lit,
    ModelError,
    Product,
    Ref,
    Span,
    Sum,
)


class ParseError(Exception):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT INT PUNCT KEYWORD EOF
    value: str
    start: int
    end: int
    line: int
    column: int


_PUNCT = {":=", ":", ";", "+", "*", "(", ")", ",", "=", "."}


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def err(msg: str) -> ParseError:
        return ParseError(msg, line, col)

    while i < n:
        c = source[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("--", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        start, sline, scol = i, line, col
        if c.isdigit() or (c == "-" and i + 1 < n and source[i + 1].isdigit()):
            j = i + 1
            while j < n and source[j].isdigit():
                j += 1
            tokens.append(Token("INT", source[i:j], start, j, sline, scol))
            col += j - i
            i = j
            continue
        if c.isalpha():
            if not c.islower():
                raise err(f"unexpected character {c!r}")
            j = i + 1
            while j < n and (source[j].islower() or source[j].isdigit() or source[j] == "_"):
                j += 1
            word = source[i:j]
            kind = "KEYWORD" if word in KEYWORDS else "IDENT"
            tokens.append(Token(kind, word, start, j, sline, scol))
            col += j - i
            i = j
            continue
        if source.startswith(":=", i):
            tokens.append(Token("PUNCT", ":=", start, i + 2, sline, scol))
            i += 2
            col += 2
            continue
        if c in _PUNCT:
            tokens.append(Token("PUNCT", c, start, i + 1, sline, scol))
            i += 1
            col += 1
            continue
        raise err(f"unexpected character {c!r}")
    tokens.append(Token("EOF", "", n, n, line, col))
    return tokens


class _Parser:
    def __init__(self, source: str, path: ArticlePath):
        self.source = source
        self.path = path
        self.tokens = tokenize(source)
        self.pos = 0
        self.imports: list[ArticlePath] = []

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, msg: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(msg, tok.line, tok.column)

    def expect_punct(self, value: str) -> Token:
        tok = self.next()
        if tok.kind != "PUNCT" or tok.value != value:
            raise self.error(f"expected {value!r}, got {tok.value!r}", tok)
        return tok

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.next()
        if tok.kind == "KEYWORD":
            raise self.error(f"keyword {tok.value!r} cannot be used as {what}", tok)
        if tok.kind != "IDENT":
            raise self.error(f"expected {what}, got {tok.value!r}", tok)
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "KEYWORD" and tok.value == word

    # --- article -----------------------------------------------------

    def parse_article(self) -> Article:
        while self.at_keyword("import"):
            tok = self.next()
            path = self.parse_pathref()
            self.expect_punct(";")
            if path == self.path:
                raise self.error("article cannot import itself", tok)
            if path in self.imports:
                raise self.error(f"duplicate import {path}", tok)
            self.imports.append(path)
        items: list[Item] = []
        names: set[str] = set()
        while self.peek().kind != "EOF":
            item = self.parse_item()
            if item.name in names:
                raise self.error(f"duplicate item name {item.name!r}")
            names.add(item.name)
            items.append(item)
        return Article(self.path, tuple(self.imports), tuple(items), self.source)

    def parse_pathref(self) -> ArticlePath:
        segs = [self.expect_ident("path segment").value]
        while self.peek().kind == "PUNCT" and self.peek().value == ".":
            self.next()
            segs.append(self.expect_ident("path segment").value)
        return ArticlePath(tuple(segs))

    def parse_item(self) -> Item:
        tok = self.next()
        if tok.kind != "KEYWORD" or tok.value not in ("def", "thm"):
            raise self.error("expected 'def' or 'thm'", tok)
        name = self.expect_ident("item name").value
        if tok.value == "def":
            self.expect_punct(":=")
            body, stmt_span = self.parse_expr_spanned()
            semi = self.expect_punct(";")
            return Item(
                name=name,
                kind="def",
                span=Span(tok.start, semi.end),
                statement_span=stmt_span,
                proof_span=None,
                body=body,
            )
        self.expect_punct(":")
        lhs, lhs_span = self.parse_expr_spanned()
        self.expect_punct("=")
        rhs, rhs_span = self.parse_expr_spanned()
        proof_tok = self.next()
        if proof_tok.kind != "KEYWORD" or proof_tok.value != "proof":
            raise self.error("expected 'proof'", proof_tok)
        just, proof_span = self.parse_justification()
        semi = self.expect_punct(";")
        return Item(
            name=name,
            kind="thm",
            span=Span(tok.start, semi.end),
            statement_span=Span(lhs_span.start, rhs_span.end),
            proof_span=proof_span,
            lhs=lhs,
            rhs=rhs,
            justification=just,
        )

    def parse_justification(self) -> tuple[Justification, Span]:
        tok = self.next()
        if tok.kind == "KEYWORD" and tok.value == "eval":
            return Eval(), Span(tok.start, tok.end)
        if tok.kind == "KEYWORD" and tok.value == "by":
            refs = [self.parse_itemref()]
            while self.peek().kind == "PUNCT" and self.peek().value == ",":
                self.next()
                refs.append(self.parse_itemref())
            return By(tuple(refs)), Span(tok.start, refs[-1].end)
        raise self.error("expected 'eval' or 'by'", tok)

    # --- expressions --------------------------------------------------

    def parse_expr_spanned(self) -> tuple[Expr, Span]:
        start = self.peek().start
        expr = self.parse_expr()
        end = self.tokens[self.pos - 1].end
        return expr, Span(start, end)

    def parse_expr(self) -> Expr:
        terms = [self.parse_term()]
        while self.peek().kind == "PUNCT" and self.peek().value == "+":
            self.next()
            terms.append(self.parse_term())
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def parse_term(self) -> Expr:
        factors = [self.parse_factor()]
        while self.peek().kind == "PUNCT" and self.peek().value == "*":
            self.next()
            factors.append(self.parse_factor())
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def parse_factor(self) -> Expr:
        tok = self.peek()
        if tok.kind == "INT":
            self.next()
            return Lit(int(tok.value))
        if tok.kind == "PUNCT" and tok.value == "(":
            self.next()
            expr = self.parse_expr()
            self.expect_punct(")")
            return expr
        if tok.kind == "IDENT":
            return self.parse_itemref()
        raise self.error(f"expected integer, reference or '(', got {tok.value!r}", tok)

    def parse_itemref(self) -> Ref:
        first = self.expect_ident("item reference")
        segs = [first.value]
        end = first.end
        while self.peek().kind == "PUNCT" and self.peek().value == ".":
            self.next()
            seg = self.expect_ident("item reference segment")
            segs.append(seg.value)
            end = seg.end
        ref = self.resolve_ref_segments(segs, first)
        return Ref(ref, first.start, end)

    def resolve_ref_segments(self, segs: list[str], tok: Token) -> ItemRef:
        if len(segs) == 1:
            return ItemRef(None, segs[0])
        # Longest declared-import prefix wins; the remainder must be a
        # single item name.  With no matching import, split before the last
        # segment and let analysis flag the missing import.
        for plen in range(len(segs) - 1, 0, -1):
            prefix = ArticlePath(tuple(segs[:plen]))
            if prefix in self.imports:
                if plen != len(segs) - 1:
                    raise self.error(
                        f"reference {'.'.join(segs)}: after import {prefix} the "
                        "remainder must be a single item name",
                        tok,
                    )
                return ItemRef(prefix, segs[-1])
        return ItemRef(ArticlePath(tuple(segs[:-1])), segs[-1])


def parse_article(source: str, path: ArticlePath) -> Article:
    """Parse an article; raises ParseError with line/column on violations."""
    try:
        return _Parser(source, path).parse_article()
    except ModelError as exc:  # path/span invariant violations
        raise ParseError(str(exc), 1, 1) from exc
