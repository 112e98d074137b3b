"""HTML rendering: naming bijection, linkified pages, site link closure."""

import random
import re
import string
from html.parser import HTMLParser
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formalwiki import corpus
from formalwiki.depgraph import extract_item_graph
from formalwiki.minilib import ArticlePath
from formalwiki.render import (
    MalformedName,
    build_site,
    html_name,
    render_article,
    source_path,
)

SEGMENT = st.builds(
    lambda head, tail: head + tail,
    st.text(alphabet=string.ascii_lowercase, min_size=1, max_size=1),
    st.text(alphabet=string.ascii_lowercase + string.digits + "_", max_size=7),
)
PATHS = st.lists(SEGMENT, min_size=1, max_size=4).map(lambda parts: ArticlePath(tuple(parts)))


# --- naming -------------------------------------------------------------------


@given(PATHS)
def test_name_roundtrip(path):
    assert source_path(html_name(path)) == path


@given(PATHS, PATHS)
def test_name_injective(a, b):
    if a != b:
        assert html_name(a) != html_name(b)


@pytest.mark.parametrize(
    "bad",
    ["", "plain", "x.htm", ".html", "a..b.html", ".a.html", "1bad.html", "sp ace.html"],
)
def test_malformed_names_rejected(bad):
    with pytest.raises(MalformedName):
        source_path(bad)


def test_names_are_flat_files():
    path = ArticlePath(("deep", "nested", "topic"))
    assert html_name(path) == "deep.nested.topic.html"
    assert "/" not in html_name(path)


# --- single article pages --------------------------------------------------------


@pytest.fixture
def rendered(ref_library):
    calc = ref_library.article(ArticlePath.parse("calc"))
    return calc, render_article(calc)


def test_page_has_anchor_per_item(rendered):
    calc, page = rendered
    assert set(page.anchors) == {"six", "six_is_six", "use"}
    for name, fragment in page.anchors.items():
        assert f'id="{fragment}"' in page.html


def test_refs_become_links(rendered):
    calc, page = rendered
    assert '<a href="nat.html#two">nat.two</a>' in page.html
    assert '<a href="nat.html#add_comm">nat.add_comm</a>' in page.html
    assert '<a href="calc.html#six">six</a>' in page.html


def test_imports_line_links_to_article(rendered):
    calc, page = rendered
    assert '<a href="nat.html">nat</a>' in page.html


def test_edit_targets_match_item_spans(rendered):
    calc, page = rendered
    for item in calc.items:
        stmt, proof = page.edit_targets[item.name]
        assert stmt == (item.statement_span.start, item.statement_span.end)
        if item.proof_span is None:
            assert proof is None
        else:
            assert proof == (item.proof_span.start, item.proof_span.end)
        text = calc.source_text[stmt[0] : stmt[1]]
        assert text.strip() == text and text


def test_rendering_is_deterministic(ref_library):
    calc = ref_library.article(ArticlePath.parse("calc"))
    assert render_article(calc).html == render_article(calc).html


def test_source_text_is_escaped():
    # comments may carry markup-significant characters; spans include them
    lib = corpus.build_library({"esc": "def x := 1 + -- a <b> & tag\n  2;\n"})
    page = render_article(lib.article(ArticlePath.parse("esc")))
    assert "&lt;b&gt; &amp; tag" in page.html
    assert "<b>" not in page.html


# --- whole-site output -----------------------------------------------------


class LinkCollector(HTMLParser):
    def __init__(self):
        super().__init__()
        self.hrefs: list[str] = []
        self.ids: set[str] = set()

    def handle_starttag(self, tag, attrs):
        for key, value in attrs:
            if key == "href" and value:
                self.hrefs.append(value)
            elif key == "id" and value:
                self.ids.add(value)


def check_no_dangling_links(outdir: Path) -> int:
    """Every internal href resolves to a written file (and fragment). Returns link count."""
    pages: dict[str, LinkCollector] = {}
    for file in outdir.rglob("*.html"):
        collector = LinkCollector()
        collector.feed(file.read_text())
        pages[str(file.relative_to(outdir))] = collector
    assert pages
    checked = 0
    for page_name, collector in pages.items():
        base = Path(page_name).parent
        for href in collector.hrefs:
            if re.match(r"^[a-z]+:", href):
                continue  # external scheme, out of scope
            target, _, fragment = href.partition("#")
            if target:
                resolved = (base / target).as_posix()
                normalized = []
                for part in resolved.split("/"):
                    if part == "..":
                        normalized.pop()
                    elif part != ".":
                        normalized.append(part)
                resolved = "/".join(normalized)
                assert resolved in pages, f"{page_name}: dangling href {href!r}"
            else:
                resolved = page_name
            if fragment:
                assert fragment in pages[resolved].ids, (
                    f"{page_name}: missing anchor {href!r}"
                )
            checked += 1
    return checked


def test_site_fixture_link_closure(ref_library, tmp_path):
    graph = extract_item_graph(ref_library)
    written = build_site(ref_library, graph, tmp_path)
    assert set(written) == {
        "nat.html",
        "calc.html",
        "index.html",
        "names.html",
        "deps/nat.html",
        "deps/calc.html",
    }
    assert check_no_dangling_links(tmp_path) > 10


def test_site_random_corpus_link_closure(tmp_path):
    lib = corpus.random_library(random.Random(20240817), n_articles=12)
    graph = extract_item_graph(lib)
    build_site(lib, graph, tmp_path)
    check_no_dangling_links(tmp_path)


def test_dep_pages_summarize_both_directions(ref_library, tmp_path):
    graph = extract_item_graph(ref_library)
    build_site(ref_library, graph, tmp_path)
    nat_deps = (tmp_path / "deps" / "nat.html").read_text()
    calc_deps = (tmp_path / "deps" / "calc.html").read_text()
    # counts are distinct own items per neighbor article: calc touches all
    # three of nat's items, nat's own theorem touches two of them
    assert "calc</a>: 3 items" in nat_deps
    assert "nat</a>: 2 items" in nat_deps
    # two calc items (six, use) reach into nat
    assert "nat</a>: 2 items" in calc_deps
    assert "Dependencies" in calc_deps and "Dependents" in calc_deps


def test_site_bytes_stable_across_runs(ref_library, tmp_path):
    graph = extract_item_graph(ref_library)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    build_site(ref_library, graph, out_a)
    build_site(ref_library, graph, out_b)
    for file in sorted(out_a.rglob("*.html")):
        twin = out_b / file.relative_to(out_a)
        assert file.read_bytes() == twin.read_bytes()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6))
def test_random_paths_roundtrip(seed):
    rng = random.Random(seed)
    for _ in range(20):
        parts = tuple(
            "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 6)))
            for _ in range(rng.randint(1, 4))
        )
        path = ArticlePath(parts)
        assert source_path(html_name(path)) == path
