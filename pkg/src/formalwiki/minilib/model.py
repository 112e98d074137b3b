"""Core data model for the bundled formal language.

Articles are files of items (definitions and theorems).  Items are the unit
of dependency tracking, editing and re-verification; every item records the
byte spans of its full text, its statement and its proof so that callers can
splice edits back into the source without touching neighbouring items.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

SEGMENT_RE = re.compile(r"[a-z][a-z0-9_]*\Z")

KEYWORDS = frozenset({"def", "thm", "import", "proof", "eval", "by"})

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ArticlePath:
    """Dotted article location, e.g. ``algebra.groups``.

    Segments are lowercase identifiers; they never contain ``.`` or ``/``,
    which keeps the flat HTML naming scheme bijective.
    """

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ModelError("article path needs at least one segment")
        for seg in self.segments:
            if not SEGMENT_RE.match(seg):
                raise ModelError(f"bad path segment {seg!r}")

    @classmethod
    def parse(cls, dotted: str) -> "ArticlePath":
        return cls(tuple(dotted.split(".")))

    @property
    def name(self) -> str:
        return self.segments[-1]

    def __str__(self) -> str:
        return ".".join(self.segments)


@dataclass(frozen=True)
class Span:
    """Half-open byte range [start, end) into an article's source text."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < self.start:
            raise ModelError(f"bad span ({self.start}, {self.end})")

    def slice(self, source: str) -> str:
        return source[self.start : self.end]

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ItemRef:
    """Reference to an item, optionally qualified with its article path."""

    article: Optional[ArticlePath]
    item: str

    def qualified(self, home: ArticlePath) -> str:
        return item_id(self.article or home, self.item)

    def __str__(self) -> str:
        if self.article is None:
            return self.item
        return f"{self.article}.{self.item}"


def item_id(path: ArticlePath, name: str) -> str:
    """Canonical item id, ``path.to.article#item``."""
    return f"{path}#{name}"


def split_item_id(iid: str) -> tuple[ArticlePath, str]:
    dotted, _, name = iid.partition("#")
    if not name:
        raise ModelError(f"bad item id {iid!r}")
    return ArticlePath.parse(dotted), name


# Expression AST.  Sums and products are n-ary to mirror the grammar; Ref
# nodes keep their byte offsets so rendering can linkify them in place.


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class Ref:
    ref: ItemRef
    start: int
    end: int


@dataclass(frozen=True)
class Sum:
    terms: tuple["Expr", ...]


@dataclass(frozen=True)
class Product:
    factors: tuple["Expr", ...]


Expr = Union[Lit, Ref, Sum, Product]


def expr_refs(expr: Expr) -> Iterator[Ref]:
    if isinstance(expr, Ref):
        yield expr
    elif isinstance(expr, Sum):
        for t in expr.terms:
            yield from expr_refs(t)
    elif isinstance(expr, Product):
        for f in expr.factors:
            yield from expr_refs(f)


@dataclass(frozen=True)
class Eval:
    pass


@dataclass(frozen=True)
class By:
    refs: tuple[Ref, ...]


Justification = Union[Eval, By]


@dataclass(frozen=True)
class Item:
    """One definition or theorem.

    ``span`` covers the full item text; ``statement_span`` the expression
    part (a Def body, or a theorem's ``lhs = rhs``); ``proof_span`` the
    justification text.  Defs have no proof, so their ``proof_span`` is None.
    """

    name: str
    kind: str  # "def" | "thm"
    span: Span
    statement_span: Span
    proof_span: Optional[Span]
    body: Optional[Expr] = None  # def only
    lhs: Optional[Expr] = None  # thm only
    rhs: Optional[Expr] = None  # thm only
    justification: Optional[Justification] = None  # thm only

    def statement_exprs(self) -> tuple[Expr, ...]:
        if self.kind == "def":
            assert self.body is not None
            return (self.body,)
        assert self.lhs is not None and self.rhs is not None
        return (self.lhs, self.rhs)

    def statement_refs(self) -> list[Ref]:
        out: list[Ref] = []
        for e in self.statement_exprs():
            out.extend(expr_refs(e))
        return out

    def cited_refs(self) -> list[Ref]:
        if isinstance(self.justification, By):
            return list(self.justification.refs)
        return []

    def all_refs(self) -> list[Ref]:
        return self.statement_refs() + self.cited_refs()

    def statement_text(self, source: str) -> str:
        return self.statement_span.slice(source)

    def proof_text(self, source: str) -> str:
        if self.proof_span is None:
            return ""
        return self.proof_span.slice(source)

    def text(self, source: str) -> str:
        return self.span.slice(source)


@dataclass(frozen=True)
class Article:
    path: ArticlePath
    imports: tuple[ArticlePath, ...]
    items: tuple[Item, ...]
    source_text: str
    _by_name: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_name = {}
        for idx, item in enumerate(self.items):
            if item.name in by_name:
                raise ModelError(f"duplicate item {item.name!r} in {self.path}")
            by_name[item.name] = (idx, item)
        seen = set()
        for imp in self.imports:
            if imp == self.path:
                raise ModelError(f"{self.path} imports itself")
            if imp in seen:
                raise ModelError(f"duplicate import {imp} in {self.path}")
            seen.add(imp)
        object.__setattr__(self, "_by_name", by_name)

    def item(self, name: str) -> Optional[Item]:
        entry = self._by_name.get(name)
        return entry[1] if entry else None

    def item_index(self, name: str) -> Optional[int]:
        entry = self._by_name.get(name)
        return entry[0] if entry else None

    def item_ids(self) -> list[str]:
        return [item_id(self.path, it.name) for it in self.items]


class Library:
    """A set of parsed articles with item resolution.

    Resolution of a qualified reference goes through the *declared imports*
    of the referencing article; local references resolve within the article.
    """

    def __init__(self, articles: "list[Article] | dict[str, Article] | None" = None):
        self.articles: dict[str, Article] = {}
        if isinstance(articles, dict):
            for art in articles.values():
                self.add(art)
        elif articles:
            for art in articles:
                self.add(art)

    def add(self, article: Article) -> None:
        self.articles[str(article.path)] = article

    def article(self, path: "ArticlePath | str") -> Optional[Article]:
        return self.articles.get(str(path))

    def get_item(self, iid: str) -> Optional[Item]:
        path, name = split_item_id(iid)
        art = self.article(path)
        return art.item(name) if art else None

    def home_article(self, iid: str) -> Optional[Article]:
        path, _ = split_item_id(iid)
        return self.article(path)

    def resolve(self, home: Article, ref: ItemRef) -> Optional[Item]:
        if ref.article is None:
            return home.item(ref.item)
        target = self.article(ref.article)
        return target.item(ref.item) if target else None

    def item_ids(self) -> list[str]:
        out: list[str] = []
        for key in sorted(self.articles):
            out.extend(self.articles[key].item_ids())
        return out

    def __len__(self) -> int:
        return len(self.articles)

    def __iter__(self) -> Iterator[Article]:
        for key in sorted(self.articles):
            yield self.articles[key]
