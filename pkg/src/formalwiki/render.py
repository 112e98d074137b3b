"""Static HTML generation: article pages, indexes, dependency summaries.

Output is a flat directory: every article becomes one file whose name is
the dotted path plus ``.html`` (segments never contain dots, so the naming
is bijective).  Items get stable anchors; every reference in the source
is linkified using the byte offsets recorded at parse time, so rendering
never re-tokenizes.  Rendering is a pure function of (library, graph): two
runs over equal inputs produce identical bytes.

Layout written by build_site:

    <outdir>/<article>.html      one page per article
    <outdir>/index.html          table of contents
    <outdir>/names.html          global item index
    <outdir>/deps/<article>.html per-article dependency summary
"""

from __future__ import annotations

from dataclasses import dataclass
from html import escape
from pathlib import Path
from typing import Optional

from .depgraph import DepGraph
from .minilib import Article, ArticlePath, Item, Library, ModelError, Ref

PAGE_TEMPLATE = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>{title}</title>
</head>
<body>
{body}
</body>
</html>
"""


class MalformedName(ValueError):
    pass


def html_name(path: ArticlePath) -> str:
    return str(path) + ".html"


def source_path(name: str) -> ArticlePath:
    if not name.endswith(".html"):
        raise MalformedName(f"{name!r} does not end in .html")
    dotted = name[: -len(".html")]
    if not dotted:
        raise MalformedName("empty article name")
    try:
        return ArticlePath(tuple(dotted.split(".")))
    except ModelError as exc:
        raise MalformedName(str(exc)) from exc


@dataclass(frozen=True)
class RenderedArticle:
    path: ArticlePath
    html: str
    anchors: dict[str, str]  # item name -> fragment id
    edit_targets: dict[str, tuple[tuple[int, int], Optional[tuple[int, int]]]]


def _ref_href(ref: Ref, home: ArticlePath, prefix: str = "") -> str:
    target_article = ref.ref.article if ref.ref.article is not None else home
    return f"{prefix}{html_name(target_article)}#{ref.ref.item}"


def _linkify(source: str, start: int, end: int, refs: list[Ref], home: ArticlePath) -> str:
    """Escape source[start:end], replacing each ref with a hyperlink."""
    parts: list[str] = []
    pos = start
    for ref in refs:
        if ref.start < start or ref.end > end:
            continue
        parts.append(escape(source[pos : ref.start]))
        parts.append(
            f'<a href="{_ref_href(ref, home)}">{escape(source[ref.start:ref.end])}</a>'
        )
        pos = ref.end
    parts.append(escape(source[pos:end]))
    return "".join(parts)


def _item_html(article: Article, item: Item) -> str:
    source = article.source_text
    refs = sorted(item.all_refs(), key=lambda r: r.start)
    stmt = item.statement_span
    proof = item.proof_span
    pieces: list[str] = []
    pieces.append(escape(source[item.span.start : stmt.start]))
    pieces.append('<span class="stmt">')
    pieces.append(_linkify(source, stmt.start, stmt.end, refs, article.path))
    pieces.append("</span>")
    if proof is not None:
        pieces.append(escape(source[stmt.end : proof.start]))
        pieces.append('<span class="proof">')
        pieces.append(_linkify(source, proof.start, proof.end, refs, article.path))
        pieces.append("</span>")
        pieces.append(escape(source[proof.end : item.span.end]))
    else:
        pieces.append(escape(source[stmt.end : item.span.end]))
    body = "".join(pieces)
    edit_attrs = (
        f'data-item="{escape(item.name)}"'
        f' data-stmt-start="{stmt.start}" data-stmt-end="{stmt.end}"'
    )
    if proof is not None:
        edit_attrs += f' data-proof-start="{proof.start}" data-proof-end="{proof.end}"'
    return (
        f'<div class="item" id="{escape(item.name)}">\n'
        f'<pre>{body}</pre>\n'
        f'<a class="edit-link" href="#{escape(item.name)}" {edit_attrs}>edit {escape(item.name)}</a>\n'
        f"</div>"
    )


def render_article(
    article: Article, graph: Optional[DepGraph] = None, library: Optional[Library] = None
) -> RenderedArticle:
    """One article page: imports, items with anchors, linkified references."""
    del graph, library  # layout depends only on the article itself
    sections: list[str] = [f"<h1>{escape(str(article.path))}</h1>"]
    if article.imports:
        links = ", ".join(
            f'<a href="{html_name(imp)}">{escape(str(imp))}</a>'
            for imp in article.imports
        )
        sections.append(f'<p class="imports">imports: {links}</p>')
    anchors: dict[str, str] = {}
    edit_targets: dict[str, tuple[tuple[int, int], Optional[tuple[int, int]]]] = {}
    for item in article.items:
        anchors[item.name] = item.name
        stmt = (item.statement_span.start, item.statement_span.end)
        proof = (
            (item.proof_span.start, item.proof_span.end)
            if item.proof_span is not None
            else None
        )
        edit_targets[item.name] = (stmt, proof)
        sections.append(_item_html(article, item))
    html = PAGE_TEMPLATE.format(title=escape(str(article.path)), body="\n".join(sections))
    return RenderedArticle(article.path, html, anchors, edit_targets)


# --- indexes -------------------------------------------------------------------


@dataclass(frozen=True)
class SiteIndexes:
    contents_page: str
    name_index: str
    dep_pages: dict[str, str]  # dotted article path -> page html


def _group_counts(pairs: list[tuple[str, str]]) -> list[tuple[str, int]]:
    """(article, own item) pairs -> per-article distinct own-item counts."""
    by_article: dict[str, set[str]] = {}
    for article, item in pairs:
        by_article.setdefault(article, set()).add(item)
    return sorted((article, len(items)) for article, items in by_article.items())


def _dep_page(article: Article, graph: DepGraph) -> str:
    home = str(article.path)
    own = set(article.item_ids())
    # Counts are over this article's own items: how many of them reference
    # (or are referenced from) each other article.
    outgoing: list[tuple[str, str]] = []  # (target article, own item)
    incoming: list[tuple[str, str]] = []  # (source article, own item)
    for src, dst in graph.edges:
        src_article, src_item = src.rsplit("#", 1)
        dst_article, dst_item = dst.rsplit("#", 1)
        if src in own:
            outgoing.append((dst_article, src_item))
        if dst in own:
            incoming.append((src_article, dst_item))

    def section(title: str, pairs: list[tuple[str, str]]) -> str:
        rows = "".join(
            f'<li><a href="../{html_name(ArticlePath.parse(art))}">{escape(art)}</a>:'
            f' {count} item{"s" if count != 1 else ""}</li>\n'
            for art, count in _group_counts(pairs)
        )
        return f"<h2>{title}</h2>\n<ul>\n{rows}</ul>"

    body = "\n".join(
        [
            f'<h1>dependencies of <a href="../{html_name(article.path)}">{escape(home)}</a></h1>',
            section("Dependencies", outgoing),
            section("Dependents", incoming),
        ]
    )
    return PAGE_TEMPLATE.format(title=f"deps: {escape(home)}", body=body)


def build_indexes(library: Library, graph: DepGraph) -> SiteIndexes:
    """Contents page, alphabetical item index, per-article dependency pages."""
    entries = "".join(
        f'<li><a href="{html_name(a.path)}">{escape(str(a.path))}</a>'
        f' (<a href="deps/{html_name(a.path)}">deps</a>)</li>\n'
        for a in library
    )
    contents = PAGE_TEMPLATE.format(
        title="contents", body=f"<h1>Contents</h1>\n<ul>\n{entries}</ul>"
    )

    items: list[tuple[str, str, str, str]] = []  # (name, path, kind, anchor)
    for article in library:
        for item in article.items:
            items.append((item.name, str(article.path), item.kind, item.name))
    rows = "".join(
        f'<li>{escape(kind)} <a href="{html_name(ArticlePath.parse(path))}#{escape(anchor)}">'
        f"{escape(name)}</a> ({escape(path)})</li>\n"
        for name, path, kind, anchor in sorted(items)
    )
    names = PAGE_TEMPLATE.format(
        title="item index", body=f"<h1>All items</h1>\n<ul>\n{rows}</ul>"
    )

    dep_pages = {str(a.path): _dep_page(a, graph) for a in library}
    return SiteIndexes(contents, names, dep_pages)


def build_site(library: Library, graph: DepGraph, outdir: "str | Path") -> list[str]:
    """Write the whole site; returns the written paths relative to outdir."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "deps").mkdir(exist_ok=True)
    written: list[str] = []
    for article in library:
        name = html_name(article.path)
        (out / name).write_text(render_article(article).html)
        written.append(name)
    indexes = build_indexes(library, graph)
    (out / "index.html").write_text(indexes.contents_page)
    written.append("index.html")
    (out / "names.html").write_text(indexes.name_index)
    written.append("names.html")
    for dotted, page in sorted(indexes.dep_pages.items()):
        name = f"deps/{html_name(ArticlePath.parse(dotted))}"
        (out / name).write_text(page)
        written.append(name)
    return written
