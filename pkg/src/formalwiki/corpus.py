"""Corpus builders: the two-article reference fixture plus random and
layered library generators used by experiments and property tests.

All generated libraries parse, analyze and fully verify by construction
(values are tracked during generation and kept far from the 64-bit range),
so tests can introduce failures deliberately rather than by accident.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from .minilib import ArticlePath, By, Library, parse_article

NAT_SOURCE = """\
def two := 2;
def three := 3;
thm add_comm : two + three = three + two proof eval;
"""

CALC_SOURCE = """\
import nat;
def six := nat.two * nat.three;
thm six_is_six : six = 6 proof eval;
thm use : six = nat.two * 3 proof by nat.add_comm;
"""


def reference_sources() -> dict[str, str]:
    """The bundled two-article fixture: nat and calc (calc imports nat)."""
    return {"nat": NAT_SOURCE, "calc": CALC_SOURCE}


def build_library(sources: dict[str, str]) -> Library:
    lib = Library()
    for dotted, source in sources.items():
        path = ArticlePath.parse(dotted)
        lib.add(parse_article(source, path))
    return lib


def reference_library() -> Library:
    return build_library(reference_sources())


_VALUE_CAP = 10**12


class _ArticleBuilder:
    """Accumulates lines for one article while tracking every Def's value."""

    def __init__(self, path: ArticlePath):
        self.path = path
        self.lines: list[str] = []
        self.defs: list[tuple[str, int]] = []  # local (name, value)
        self.thms: list[str] = []  # local thm names
        self.imports: list[ArticlePath] = []

    def add_import(self, path: ArticlePath) -> None:
        self.imports.append(path)
        self.lines.append(f"import {path};")

    def source(self) -> str:
        return "\n".join(self.lines) + "\n"


@dataclass
class _GenParams:
    n_articles: int = 8
    items_low: int = 3
    items_high: int = 10
    thm_rate: float = 0.4
    cross_rate: float = 0.3
    import_rate: float = 0.5
    nested_path_rate: float = 0.25


def _pick_operands(
    rng: random.Random, builder: _ArticleBuilder, by_path: dict[str, _ArticleBuilder]
) -> list[tuple[str, int]]:
    """Referencable Defs as (reference text, value) pairs."""
    pool: list[tuple[str, int]] = [(name, val) for name, val in builder.defs]
    if builder.imports and rng.random() < 0.9:
        cross: list[tuple[str, int]] = []
        for imp in builder.imports:
            other = by_path[str(imp)]
            cross.extend((f"{imp}.{name}", val) for name, val in other.defs)
        if cross:
            # cross_rate steers how often a cross-article operand is offered
            return cross if rng.random() < _CROSS_BIAS[0] else pool + cross
    return pool


_CROSS_BIAS = [0.3]  # mutated by generators to honor their cross_rate


def _gen_expr(
    rng: random.Random, builder: _ArticleBuilder, by_path: dict[str, _ArticleBuilder]
) -> tuple[str, int]:
    """A small expression over literals and in-scope Defs, plus its value."""
    operands = _pick_operands(rng, builder, by_path)
    shape = rng.random()
    if not operands or shape < 0.25:
        v = rng.randint(-9, 99)
        return (str(v), v)
    if shape < 0.55:
        name, val = rng.choice(operands)
        return (name, val)
    if shape < 0.8:
        parts = [rng.choice(operands) for _ in range(rng.randint(2, 3))]
        text = " + ".join(p[0] for p in parts)
        value = sum(p[1] for p in parts)
        if abs(value) > _VALUE_CAP:
            v = rng.randint(0, 9)
            return (str(v), v)
        return (text, value)
    name, val = rng.choice(operands)
    k = rng.randint(2, 5)
    value = val * k
    if abs(value) > _VALUE_CAP:
        return (name, val)
    return (f"{name} * {k}", value)


def random_sources(
    rng: random.Random,
    n_articles: int = 8,
    items_low: int = 3,
    items_high: int = 10,
    thm_rate: float = 0.4,
    cross_rate: float = 0.3,
    import_rate: float = 0.5,
    nested_path_rate: float = 0.25,
) -> dict[str, str]:
    """A random, fully verifiable library as {dotted path: source text}."""
    _CROSS_BIAS[0] = cross_rate
    builders: list[_ArticleBuilder] = []
    by_path: dict[str, _ArticleBuilder] = {}
    for i in range(n_articles):
        if rng.random() < nested_path_rate:
            path = ArticlePath(("pkg%d" % rng.randint(0, 2), "mod%03d" % i))
        else:
            path = ArticlePath(("art%03d" % i,))
        builder = _ArticleBuilder(path)
        candidates = [b for b in builders if b.defs]
        rng.shuffle(candidates)
        for other in candidates[:4]:
            if rng.random() < import_rate:
                builder.add_import(other.path)
        n_items = rng.randint(items_low, items_high)
        for j in range(n_items):
            name_base = "d%03d" % j
            if builder.defs and rng.random() < thm_rate:
                text, value = _gen_expr(rng, builder, by_path)
                tname = "t%03d" % j
                form = rng.random()
                if form < 0.5:
                    stmt = f"{text} = {value}"
                else:
                    stmt = f"{text} + 1 = 1 + {text}" if abs(value) < _VALUE_CAP else f"{text} = {value}"
                cited: list[str] = []
                if rng.random() < 0.5:
                    local_thms = [f"{t}" for t in builder.thms]
                    imported_thms = [
                        f"{b.path}.{t}"
                        for b in builders
                        if b.path in builder.imports
                        for t in b.thms
                    ]
                    pool = local_thms + imported_thms
                    if pool:
                        cited = rng.sample(pool, k=min(len(pool), rng.randint(1, 2)))
                proof = "by " + ", ".join(cited) if cited else "eval"
                builder.lines.append(f"thm {tname} : {stmt} proof {proof};")
                builder.thms.append(tname)
            else:
                text, value = _gen_expr(rng, builder, by_path)
                builder.lines.append(f"def {name_base} := {text};")
                builder.defs.append((name_base, value))
        builders.append(builder)
        by_path[str(builder.path)] = builder
    return {str(b.path): b.source() for b in builders}


def random_library(rng: random.Random, **kwargs) -> Library:
    return build_library(random_sources(rng, **kwargs))


def layered_sources(
    rng: random.Random,
    n_articles: int = 100,
    items_per_article: int = 20,
    cross_rate: float = 0.10,
    max_imports: int = 3,
) -> dict[str, str]:
    """Layered corpus for granularity experiments.

    Every article after the first imports up to max_imports earlier ones;
    each item after the first in an article references exactly one earlier
    Def, crossing into an imported article with probability cross_rate.
    """
    builders: list[_ArticleBuilder] = []
    by_path: dict[str, _ArticleBuilder] = {}
    for i in range(n_articles):
        builder = _ArticleBuilder(ArticlePath(("lay%03d" % i,)))
        if builders:
            k = min(len(builders), rng.randint(1, max_imports))
            for other in rng.sample(builders, k=k):
                builder.add_import(other.path)
        for j in range(items_per_article):
            name = "d%03d" % j
            target: Optional[tuple[str, int]] = None
            if builder.imports and rng.random() < cross_rate:
                imp = rng.choice(builder.imports)
                other = by_path[str(imp)]
                tname, tval = rng.choice(other.defs)
                target = (f"{imp}.{tname}", tval)
            elif builder.defs:
                target = rng.choice(builder.defs)
            if target is None:
                value = rng.randint(0, 9)
                builder.lines.append(f"def {name} := {value};")
            else:
                text, tval = target
                add = rng.randint(0, 3)
                value = tval + add
                if abs(value) > _VALUE_CAP:
                    value = rng.randint(0, 9)
                    builder.lines.append(f"def {name} := {value};")
                else:
                    builder.lines.append(f"def {name} := {text} + {add};")
            builder.defs.append((name, value))
        builders.append(builder)
        by_path[str(builder.path)] = builder
    return {str(b.path): b.source() for b in builders}


@dataclass(frozen=True)
class Edit:
    """A single-article source replacement plus what it did."""

    path: str
    new_source: str
    kind: str
    item: Optional[str] = None  # item name the edit targeted, if any


def random_edit(rng: random.Random, library: Library) -> Edit:
    """A random single-item edit, spliced through recorded item spans.

    Kinds cover the classification matrix: passing and failing proof-only
    edits, statement changes that keep or break verification, renames,
    deletions and appends.
    """
    articles = [a for a in library if a.items]
    article = rng.choice(articles)
    src = article.source_text
    item = rng.choice(article.items)
    kinds = ["stmt_false", "stmt_true", "rename", "delete", "append"]
    if item.kind == "thm":
        kinds += ["proof_reorder", "proof_break"]
    kind = rng.choice(kinds)

    def splice(span, new_text: str) -> str:
        return src[: span.start] + new_text + src[span.end :]

    if kind == "proof_reorder" and item.proof_span is not None:
        just = item.justification
        if isinstance(just, By) and len(just.refs) > 1:
            refs = [src[r.start : r.end] for r in just.refs]
            rotated = refs[1:] + refs[:1]
            return Edit(str(article.path), splice(item.proof_span, "by " + ", ".join(rotated)), kind, item.name)
        return Edit(str(article.path), splice(item.proof_span, "eval"), "proof_noop", item.name)
    if kind == "proof_break" and item.proof_span is not None:
        return Edit(str(article.path), splice(item.proof_span, "by ghost_thm"), kind, item.name)
    if kind == "stmt_false":
        if item.kind == "def":
            # overflow: far outside the 64-bit range
            return Edit(str(article.path), splice(item.statement_span, "9223372036854775807 * 9"), kind, item.name)
        return Edit(str(article.path), splice(item.statement_span, "0 = 1"), kind, item.name)
    if kind == "stmt_true":
        old = item.statement_text(src)
        if item.kind == "def":
            return Edit(str(article.path), splice(item.statement_span, f"({old}) * 1"), kind, item.name)
        return Edit(str(article.path), splice(item.statement_span, f"0 + {old}"), kind, item.name)
    if kind == "rename":
        new_name = item.name + "_r"
        text = item.text(src)
        renamed = text.replace(f" {item.name} ", f" {new_name} ", 1)
        return Edit(str(article.path), splice(item.span, renamed), kind, item.name)
    if kind == "delete":
        return Edit(str(article.path), splice(item.span, "-- removed"), kind, item.name)
    new_item = f"def appended_{rng.randint(0, 999)} := 7;"
    return Edit(str(article.path), src + new_item + "\n", "append", None)
