"""Language core: parsing, spans, evaluation, analysis, staged pipeline."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formalwiki.corpus import build_library, random_sources
from formalwiki.minilib import (
    INT64_MAX,
    INT64_MIN,
    ArticlePath,
    By,
    EvalFailure,
    Library,
    Mode,
    ModelError,
    ParseError,
    StageCache,
    analyze,
    eval_expr,
    item_id,
    parse_article,
)
from formalwiki.minilib.stages import (
    STAGE_ANALYZE,
    STAGE_PARSE,
    STAGE_VERIFY,
    LibraryVerifier,
    analyze_fingerprint,
    parse_fingerprint,
    run_stages,
    verify_item,
)

NAT = ArticlePath.parse("nat")
CALC = ArticlePath.parse("calc")


def lib_of(**sources: str) -> Library:
    return build_library({k.replace("_", "."): v for k, v in sources.items()})


# --- parsing ------------------------------------------------------------------


def test_parse_reference_fixture(ref_library):
    nat = ref_library.article("nat")
    calc = ref_library.article("calc")
    assert [it.name for it in nat.items] == ["two", "three", "add_comm"]
    assert [it.kind for it in nat.items] == ["def", "def", "thm"]
    assert calc.imports == (NAT,)
    assert len(ref_library.item_ids()) == 6


def test_item_spans_slice_back_to_exact_text(ref_library):
    for article in ref_library:
        src = article.source_text
        for item in article.items:
            text = item.text(src)
            assert text.startswith(("def ", "thm "))
            assert text.endswith(";")
            # the span is the single source of truth for edit splicing
            assert src[item.span.start : item.span.end] == text


def test_statement_and_proof_spans(ref_library):
    calc = ref_library.article("calc")
    use = calc.item("use")
    assert use.statement_text(calc.source_text) == "six = nat.two * 3"
    assert use.proof_text(calc.source_text) == "by nat.add_comm"
    six = calc.item("six")
    assert six.statement_text(calc.source_text) == "nat.two * nat.three"
    assert six.proof_span is None


def test_spans_are_disjoint_and_ordered(ref_library):
    for article in ref_library:
        spans = [it.span for it in article.items]
        for before, after in zip(spans, spans[1:]):
            assert before.end <= after.start


def test_comments_and_whitespace_are_ignored():
    article = parse_article(
        "-- leading comment\ndef a := 1;  -- trailing\n\n\ndef b :=\n  a + 1;\n",
        ArticlePath.parse("c"),
    )
    assert [it.name for it in article.items] == ["a", "b"]


def test_parse_errors_carry_position():
    with pytest.raises(ParseError) as err:
        parse_article("def a := ;\n", ArticlePath.parse("c"))
    assert "1:" in str(err.value)
    with pytest.raises(ParseError):
        parse_article("def a := 1\ndef b := 2;\n", ArticlePath.parse("c"))
    with pytest.raises(ParseError):
        parse_article("thm t : 1 = 1;\n", ArticlePath.parse("c"))  # missing proof


def test_duplicate_item_names_rejected():
    with pytest.raises(ParseError):
        parse_article("def a := 1;\ndef a := 2;\n", ArticlePath.parse("c"))


def test_self_import_rejected():
    with pytest.raises(ParseError):
        parse_article("import c;\ndef a := 1;\n", ArticlePath.parse("c"))


def test_duplicate_import_rejected():
    with pytest.raises(ParseError):
        parse_article("import d;\nimport d;\ndef a := 1;\n", ArticlePath.parse("c"))


def test_imports_must_precede_items():
    with pytest.raises(ParseError):
        parse_article("def a := 1;\nimport d;\n", ArticlePath.parse("c"))


def test_article_path_validation():
    assert str(ArticlePath.parse("alg.group.basic")) == "alg.group.basic"
    for bad in ("", "Alg", "a..b", "1abc", "a.b-", "a b"):
        with pytest.raises(ModelError):
            ArticlePath.parse(bad)


def test_integer_literal_bounds():
    lib = lib_of(c=f"def big := {INT64_MAX};\ndef over := {INT64_MAX + 1};\n")
    assert value_of(lib, "c#big") == INT64_MAX
    with pytest.raises(EvalFailure) as err:
        value_of(lib, "c#over")
    assert err.value.code == "eval_overflow"


# --- evaluation -------------------------------------------------------------------


def value_of(lib: Library, iid: str) -> int:
    path, name = iid.split("#")
    article = lib.article(path)
    return eval_expr(article.item(name).body, article, lib, {})


def test_eval_substitutes_defs_transitively(ref_library):
    assert value_of(ref_library, "nat#two") == 2
    assert value_of(ref_library, "calc#six") == 6


def test_eval_precedence():
    lib = lib_of(c="def x := 2 + 3 * 4;\ndef y := (2 + 3) * 4;\n")
    assert value_of(lib, "c#x") == 14
    assert value_of(lib, "c#y") == 20


def test_eval_negative_literals():
    lib = lib_of(c="def x := -7;\ndef y := x * -2 + 1;\n")
    assert value_of(lib, "c#x") == -7
    assert value_of(lib, "c#y") == 15


def test_overflow_is_failure_not_wraparound():
    lib = lib_of(c=f"def edge := {INT64_MAX};\ndef boom := edge + 1;\n")
    assert value_of(lib, "c#edge") == INT64_MAX
    with pytest.raises(EvalFailure) as err:
        value_of(lib, "c#boom")
    assert err.value.code == "eval_overflow"


def test_overflow_in_intermediate_value():
    # the final value would fit, but an intermediate product does not
    lib = lib_of(c=f"def a := {INT64_MAX};\ndef boom := a * 2 * 0;\n")
    with pytest.raises(EvalFailure):
        value_of(lib, "c#boom")


def test_negative_overflow():
    lib = lib_of(c=f"def edge := -{INT64_MAX} + -1;\ndef boom := edge + -1;\n")
    assert value_of(lib, "c#edge") == INT64_MIN
    with pytest.raises(EvalFailure):
        value_of(lib, "c#boom")


def test_eval_def_cycle_detected():
    lib = lib_of(c="def a := b + 0;\ndef b := a + 0;\n")
    with pytest.raises(EvalFailure) as err:
        value_of(lib, "c#a")
    assert err.value.code in ("def_cycle", "unresolved_ref")


# --- analysis ------------------------------------------------------------------


def diag_codes(lib: Library, path: str) -> list[str]:
    return [d.code for d in analyze(lib.article(path), lib).diagnostics]


def test_analyze_clean_fixture(ref_library):
    for article in ref_library:
        assert analyze(article, ref_library).ok


def test_forward_local_reference_is_unresolved():
    lib = lib_of(c="def a := b + 1;\ndef b := 2;\n")
    assert "unresolved_ref" in diag_codes(lib, "c")


def test_qualified_reference_requires_import():
    lib = build_library({"base": "def x := 1;\n", "uses": "def y := base.x;\n"})
    assert "import_missing" in diag_codes(lib, "uses")


def test_import_of_missing_article():
    lib = lib_of(c="import ghost;\ndef a := 1;\n")
    # the import itself is fine; referencing into it is not
    assert analyze(lib.article("c"), lib).ok
    lib2 = lib_of(c="import ghost;\ndef a := ghost.x;\n")
    assert "unresolved_ref" in diag_codes(lib2, "c")


def test_expression_ref_must_be_def(ref_library):
    lib = lib_of(c="thm t : 1 = 1 proof eval;\ndef a := t + 1;\n")
    assert "illegal_ref_kind" in diag_codes(lib, "c")


def test_citation_must_be_thm():
    lib = lib_of(c="def a := 1;\nthm t : a = 1 proof by a;\n")
    assert "illegal_ref_kind" in diag_codes(lib, "c")


def test_def_cycle_reported_once_per_cycle():
    lib = lib_of(c="def a := b;\ndef b := a;\n")
    codes = diag_codes(lib, "c")
    assert codes.count("def_cycle") == 1


def test_item_deps_deduplicated_in_order(ref_library):
    rep = analyze(ref_library.article("calc"), ref_library)
    assert rep.item_deps["six"] == ("nat#two", "nat#three")
    assert rep.item_deps["use"] == ("calc#six", "nat#two", "nat#add_comm")


# --- verification and citations ----------------------------------------------


def test_thm_sides_must_agree():
    lib = lib_of(c="thm t : 1 + 1 = 3 proof eval;\n")
    res = verify_item(lib.article("c").items[0], lib, ArticlePath.parse("c"))
    assert not res.ok
    assert res.diagnostics[0].code == "not_equal"


def test_citation_of_failed_thm_blocks_dependent():
    lib = lib_of(c="thm bad : 0 = 1 proof eval;\nthm t : 2 = 2 proof by bad;\n")
    verifier = LibraryVerifier(lib)
    assert not verifier.result("c#bad").ok
    res = verifier.result("c#t")
    assert not res.ok
    assert res.diagnostics[0].code == "cited_unverified"


def test_failed_def_blocks_dependent_with_dep_failed():
    lib = lib_of(c=f"def big := {INT64_MAX} * 2;\ndef user := big + 1;\n")
    verifier = LibraryVerifier(lib)
    assert not verifier.result("c#big").ok
    res = verifier.result("c#user")
    assert [d.code for d in res.diagnostics] == ["dep_failed"]


def test_item_with_bad_sibling_still_verifies():
    # per-item isolation: a broken neighbor must not poison the whole article
    lib = lib_of(c="def good := 1;\ndef bad := ghost + 1;\nthm t : good = 1 proof eval;\n")
    verifier = LibraryVerifier(lib)
    assert verifier.result("c#good").ok
    assert not verifier.result("c#bad").ok
    assert verifier.result("c#t").ok


def test_citations_are_not_evaluated():
    # by-citations carry semantic weight (must verify) but no value flows
    lib = lib_of(
        c="def x := 4;\nthm lemma : x = 4 proof eval;\nthm t : x + 1 = 5 proof by lemma;\n"
    )
    verifier = LibraryVerifier(lib)
    assert verifier.result("c#t").ok
    article = lib.article("c")
    assert isinstance(article.item("t").justification, By)


# --- staged pipeline and caching ---------------------------------------------------


def test_modes_gate_stages(ref_library):
    calc = ref_library.article("calc")
    assert run_stages(calc, ref_library, Mode.NONE) == []
    quick = run_stages(calc, ref_library, Mode.QUICK)
    assert [r.stage for r in quick] == [STAGE_PARSE]
    medium = run_stages(calc, ref_library, Mode.MEDIUM)
    assert [r.stage for r in medium] == [STAGE_PARSE, STAGE_ANALYZE]
    full = run_stages(calc, ref_library, Mode.FULL)
    assert [r.stage for r in full] == [STAGE_PARSE, STAGE_ANALYZE] + [STAGE_VERIFY] * 3
    assert all(r.ok for r in full)


def test_mode_ordering():
    assert Mode.NONE < Mode.QUICK < Mode.MEDIUM < Mode.FULL
    assert Mode.parse("full") is Mode.FULL
    with pytest.raises(ValueError):
        Mode.parse("turbo")


def test_failed_analyze_stops_pipeline():
    lib = lib_of(c="def a := ghost;\n")
    results = run_stages(lib.article("c"), lib, Mode.FULL)
    assert [r.stage for r in results] == [STAGE_PARSE, STAGE_ANALYZE]
    assert not results[-1].ok


def test_cache_reuses_identical_inputs(ref_library):
    cache = StageCache()
    calc = ref_library.article("calc")
    first = run_stages(calc, ref_library, Mode.FULL, cache=cache)
    assert not any(r.cached for r in first)
    second = run_stages(calc, ref_library, Mode.FULL, cache=cache)
    assert all(r.cached for r in second)
    assert cache.hits >= len(second)


def test_cache_ignores_stale_fingerprints():
    cache = StageCache()
    lib1 = lib_of(c="def a := 1;\n")
    lib2 = lib_of(c="def a := 2;\n")
    run_stages(lib1.article("c"), lib1, Mode.FULL, cache=cache)
    results = run_stages(lib2.article("c"), lib2, Mode.FULL, cache=cache)
    assert not any(r.cached for r in results)


def test_proof_edit_keeps_interface_but_changes_fingerprint():
    before = lib_of(
        c="def x := 4;\nthm l1 : x = 4 proof eval;\nthm l2 : x = 4 proof eval;\nthm t : x + 0 = 4 proof by l1;\n"
    )
    after = lib_of(
        c="def x := 4;\nthm l1 : x = 4 proof eval;\nthm l2 : x = 4 proof eval;\nthm t : x + 0 = 4 proof by l2;\n"
    )
    vb, va = LibraryVerifier(before), LibraryVerifier(after)
    assert vb.interface("c#t") == va.interface("c#t")
    assert vb.fingerprint("c#t") != va.fingerprint("c#t")


def test_statement_edit_changes_interface():
    before = lib_of(c="def x := 4;\nthm t : x = 4 proof eval;\n")
    after = lib_of(c="def x := 4;\nthm t : x + 0 = 4 proof eval;\n")
    assert LibraryVerifier(before).interface("c#t") != LibraryVerifier(after).interface("c#t")


def test_def_interface_includes_dependency_interfaces():
    # changing a def's value ripples through interfaces of dependents
    before = lib_of(c="def a := 1;\ndef b := a + 1;\n")
    after = lib_of(c="def a := 2;\ndef b := a + 1;\n")
    assert LibraryVerifier(before).interface("c#b") != LibraryVerifier(after).interface("c#b")


def test_fingerprints_are_deterministic(ref_library):
    assert parse_fingerprint("def a := 1;\n") == parse_fingerprint("def a := 1;\n")
    calc = ref_library.article("calc")
    assert analyze_fingerprint(calc, ref_library) == analyze_fingerprint(calc, ref_library)
    v1, v2 = LibraryVerifier(ref_library), LibraryVerifier(ref_library)
    for iid in ref_library.item_ids():
        assert v1.fingerprint(iid) == v2.fingerprint(iid)
        assert v1.content_fingerprint(iid) == v2.content_fingerprint(iid)


# --- generated library properties ------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_generated_libraries_fully_verify(seed):
    lib = build_library(random_sources(random.Random(seed), n_articles=4, items_high=6))
    verifier = LibraryVerifier(lib)
    for iid in lib.item_ids():
        res = verifier.result(iid)
        assert res.ok, (iid, res.diagnostics)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_generated_sources_reparse_identically(seed):
    sources = random_sources(random.Random(seed), n_articles=3, items_high=5)
    for dotted, source in sources.items():
        a1 = parse_article(source, ArticlePath.parse(dotted))
        a2 = parse_article(source, ArticlePath.parse(dotted))
        assert [it.name for it in a1.items] == [it.name for it in a2.items]
        for i1, i2 in zip(a1.items, a2.items):
            assert i1.span == i2.span
            assert i1.text(source) == i2.text(source)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_item_text_reparses_as_single_item(seed):
    lib = build_library(random_sources(random.Random(seed), n_articles=3, items_high=5))
    for article in lib:
        for item in article.items:
            snippet = parse_article(item.text(article.source_text), article.path)
            assert len(snippet.items) == 1
            reparsed = snippet.items[0]
            assert reparsed.name == item.name
            assert reparsed.kind == item.kind
