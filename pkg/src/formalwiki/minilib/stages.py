"""Staged verification (parse / analyze / verify) with fingerprint caching.

Stages build on each other: Quick runs Parse only, Medium adds Analyze,
Full adds per-item Verify.  Every stage result carries an input fingerprint
covering the subject and the parts of the environment that can change its
outcome; a cached result is reused exactly when its fingerprint matches.

Fingerprint scheme (Merkle-style):

* parse: hash of the article source.
* analyze: hash of the source plus, per declared import, the imported
  article's interface (its item names and kinds).
* verify, per item: hash of the item's full text plus, per direct
  dependency, its id, its interface and its current verify status.  A Def's
  interface folds in its body text and the interfaces of the Defs it
  references (evaluation substitutes transitively); a Thm's interface is its
  statement text alone, so proof-only edits never invalidate dependents.
"""

from __future__ import annotations

import hashlib
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Callable, Iterable, Optional

from .analysis import AnalyzeReport, Diagnostic, Environment, analyze
from .model import Article, ArticlePath, Item, item_id, split_item_id
from .parser import ParseError, parse_article
from .verify import EvalFailure, eval_expr


class Mode(IntEnum):
    """How much verification a change must pass."""

    NONE = 0
    QUICK = 1  # parse
    MEDIUM = 2  # parse + analyze
    FULL = 3  # parse + analyze + verify

    @classmethod
    def parse(cls, text: str) -> "Mode":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown verification mode {text!r}") from None


STAGE_PARSE = "parse"
STAGE_ANALYZE = "analyze"
STAGE_VERIFY = "verify"


@dataclass(frozen=True)
class StageResult:
    stage: str  # parse | analyze | verify
    subject: str  # article path, or item id for verify
    ok: bool
    diagnostics: tuple[Diagnostic, ...]
    fingerprint: str
    cached: bool = False

    @property
    def status(self) -> str:
        return "ok" if self.ok else "failed"


class StageCache:
    """Shared stage-result cache with atomic get-or-insert.

    Keyed by (stage, subject); an entry is only served when its stored
    fingerprint equals the caller's current fingerprint.
    """

    def __init__(self) -> None:
        self._entries: dict[tuple[str, str], StageResult] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def lookup(self, stage: str, subject: str, fingerprint: str) -> Optional[StageResult]:
        with self._lock:
            entry = self._entries.get((stage, subject))
            if entry is not None and entry.fingerprint == fingerprint:
                self.hits += 1
                return replace(entry, cached=True)
            self.misses += 1
            return None

    def store(self, result: StageResult) -> None:
        with self._lock:
            self._entries[(result.stage, result.subject)] = replace(result, cached=False)

    def get_or_insert(
        self, stage: str, subject: str, fingerprint: str, compute: Callable[[], StageResult]
    ) -> StageResult:
        cached = self.lookup(stage, subject, fingerprint)
        if cached is not None:
            return cached
        result = compute()
        self.store(result)
        return result

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def _h(*parts: str) -> str:
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part.encode("utf-8"))
        digest.update(b"\x1f")
    return digest.hexdigest()


def article_interface(article: Article) -> str:
    """Hash of what an importer can observe: item names and kinds, in order."""
    return _h("article-iface", *(f"{it.kind} {it.name}" for it in article.items))


class PatchedEnv:
    """An environment with one article shadowed by a newer version."""

    def __init__(self, env: Environment, article: Article):
        self._env = env
        self._article = article
        self._key = str(article.path)

    def article(self, path: "ArticlePath | str") -> Optional[Article]:
        if str(path) == self._key:
            return self._article
        return self._env.article(path)


def parse_fingerprint(source: str) -> str:
    return _h("parse", source)


def analyze_fingerprint(article: Article, env: Environment) -> str:
    parts = ["analyze", article.source_text]
    for imp in article.imports:
        imported = env.article(imp)
        parts.append(f"{imp}={article_interface(imported) if imported else 'absent'}")
    return _h(*parts)


class LibraryVerifier:
    """Verifies items on demand against an article environment.

    Results, Def values, analysis reports and interface hashes are memoized;
    a shared StageCache (if given) carries verify results across verifier
    instances as long as fingerprints match.  Thread-safe; a worker pool can
    call result() on independent items concurrently.
    """

    def __init__(
        self,
        env: Environment,
        cache: Optional[StageCache] = None,
        delay: float = 0.0,
    ) -> None:
        self.env = env
        self.cache = cache
        self.delay = delay
        self._lock = threading.RLock()
        self._reports: dict[str, AnalyzeReport] = {}
        self._ifaces: dict[str, str] = {}
        self._results: dict[str, StageResult] = {}
        self._values: dict[str, int] = {}

    # --- per-article analysis ------------------------------------------

    def report(self, path: ArticlePath) -> Optional[AnalyzeReport]:
        key = str(path)
        with self._lock:
            if key in self._reports:
                return self._reports[key]
        article = self.env.article(path)
        if article is None:
            return None
        rep = analyze(article, self.env)
        with self._lock:
            self._reports.setdefault(key, rep)
            return self._reports[key]

    def deps(self, iid: str) -> tuple[str, ...]:
        """Direct dependency ids of an item.

        Complete when the item has no analysis diagnostics; an item with
        unresolvable references lists only what did resolve (it fails on
        its own diagnostics anyway).
        """
        path, name = split_item_id(iid)
        rep = self.report(path)
        if rep is None:
            return ()
        return rep.item_deps.get(name, ())

    # --- interface hashes ----------------------------------------------

    def interface(self, iid: str, _active: Optional[set[str]] = None) -> str:
        with self._lock:
            if iid in self._ifaces:
                return self._ifaces[iid]
        path, name = split_item_id(iid)
        article = self.env.article(path)
        item = article.item(name) if article else None
        if article is None or item is None:
            return _h("iface-missing", iid)
        if item.kind == "thm":
            iface = _h("thm-iface", iid, item.statement_text(article.source_text))
        else:
            active = _active if _active is not None else set()
            if iid in active:
                return _h("iface-cycle", iid)
            active.add(iid)
            dep_ifaces = [
                self.interface(dep, active)
                for dep in self.deps(iid)
                if split_item_id(dep)[1] and self._kind(dep) == "def"
            ]
            active.discard(iid)
            iface = _h(
                "def-iface", iid, item.statement_text(article.source_text), *dep_ifaces
            )
        with self._lock:
            self._ifaces.setdefault(iid, iface)
            return self._ifaces[iid]

    def _kind(self, iid: str) -> Optional[str]:
        path, name = split_item_id(iid)
        article = self.env.article(path)
        item = article.item(name) if article else None
        return item.kind if item else None

    # --- verification ---------------------------------------------------

    def fingerprint(self, iid: str) -> str:
        """Verify-stage fingerprint: item text + dep ids, interfaces, statuses."""
        path, name = split_item_id(iid)
        article = self.env.article(path)
        item = article.item(name) if article else None
        if article is None or item is None:
            return _h("verify", iid, "missing")
        rep = self.report(path)
        assert rep is not None
        parts = ["verify", iid, item.text(article.source_text)]
        for diag in rep.diagnostics:
            if diag.item == iid:
                parts.append(f"analyze|{diag.code}|{diag.message}")
        for dep in self.deps(iid):
            parts.append(f"{dep}|{self.interface(dep)}|{self.result(dep).status}")
        return _h(*parts)

    def result(self, iid: str, _active: Optional[list[str]] = None) -> StageResult:
        with self._lock:
            if iid in self._results:
                return self._results[iid]
        active = _active if _active is not None else []
        if iid in active:
            cycle = " -> ".join(active[active.index(iid):] + [iid])
            return self._finish(
                StageResult(
                    STAGE_VERIFY,
                    iid,
                    False,
                    (Diagnostic("def_cycle", iid, cycle),),
                    _h("verify", iid, "cycle"),
                )
            )
        active.append(iid)
        try:
            result = self._verify_uncached(iid, active)
        finally:
            active.pop()
        return self._finish(result)

    def _finish(self, result: StageResult) -> StageResult:
        with self._lock:
            self._results.setdefault(result.subject, result)
            return self._results[result.subject]

    def _verify_uncached(self, iid: str, active: list[str]) -> StageResult:
        path, name = split_item_id(iid)
        article = self.env.article(path)
        item = article.item(name) if article else None
        if article is None or item is None:
            return StageResult(
                STAGE_VERIFY,
                iid,
                False,
                (Diagnostic("unresolved_ref", iid, "item not found"),),
                _h("verify", iid, "missing"),
            )
        rep = self.report(path)
        assert rep is not None
        own_diags = tuple(d for d in rep.diagnostics if d.item == iid)
        if own_diags:
            return StageResult(
                STAGE_VERIFY, iid, False, own_diags, self.fingerprint(iid)
            )
        # Dependencies first (depth-first), so dep statuses and the
        # fingerprint below are well-defined.
        for dep in self.deps(iid):
            self.result(dep, active)
        fp = self.fingerprint(iid)
        if self.cache is not None:
            return self.cache.get_or_insert(
                STAGE_VERIFY, iid, fp, lambda: self._check(article, item, iid, fp)
            )
        return self._check(article, item, iid, fp)

    def _check(self, article: Article, item: Item, iid: str, fp: str) -> StageResult:
        if self.delay > 0:
            time.sleep(self.delay)
        diags: list[Diagnostic] = []
        for dep in self.deps(iid):
            if not self.result(dep).ok:
                code = "cited_unverified" if self._kind(dep) == "thm" else "dep_failed"
                diags.append(Diagnostic(code, iid, f"dependency {dep} failed"))
        if not diags:
            try:
                if item.kind == "def":
                    assert item.body is not None
                    with self._lock:
                        values = dict(self._values)
                    value = eval_expr(item.body, article, self.env, values)
                    with self._lock:
                        self._values.update(values)
                        self._values[iid] = value
                else:
                    assert item.lhs is not None and item.rhs is not None
                    with self._lock:
                        values = dict(self._values)
                    lhs = eval_expr(item.lhs, article, self.env, values)
                    rhs = eval_expr(item.rhs, article, self.env, values)
                    with self._lock:
                        self._values.update(values)
                    if lhs != rhs:
                        diags.append(
                            Diagnostic("not_equal", iid, f"lhs={lhs} rhs={rhs}")
                        )
            except EvalFailure as exc:
                diags.append(Diagnostic(exc.code, iid, exc.message))
        return StageResult(STAGE_VERIFY, iid, not diags, tuple(diags), fp)

    def content_fingerprint(self, iid: str) -> str:
        """Status-free fingerprint: item text plus dep ids and interfaces.

        Suitable for change detection before any verification has run.
        """
        path, name = split_item_id(iid)
        article = self.env.article(path)
        item = article.item(name) if article else None
        if article is None or item is None:
            return _h("content", iid, "missing")
        rep = self.report(path)
        assert rep is not None
        parts = ["content", iid, item.text(article.source_text)]
        for diag in rep.diagnostics:
            if diag.item == iid:
                parts.append(f"analyze|{diag.code}|{diag.message}")
        for dep in self.deps(iid):
            parts.append(f"{dep}|{self.interface(dep)}")
        return _h(*parts)

    def value(self, iid: str) -> Optional[int]:
        with self._lock:
            return self._values.get(iid)

    def results_for(
        self, iids: Iterable[str], workers: Optional[int] = None
    ) -> dict[str, StageResult]:
        ids = list(iids)
        if workers and workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                out = list(pool.map(self.result, ids))
            return {r.subject: r for r in out}
        return {iid: self.result(iid) for iid in ids}


def verify_item(
    item: Item,
    env: Environment,
    home: ArticlePath,
    cache: Optional[StageCache] = None,
    delay: float = 0.0,
) -> StageResult:
    """Verify one item against env; the result carries its input fingerprint."""
    home_article = env.article(home)
    if home_article is None or home_article.item(item.name) != item:
        raise ValueError(f"item {item.name!r} is not the item at {home} in env")
    return LibraryVerifier(env, cache=cache, delay=delay).result(item_id(home, item.name))


def run_stages(
    article: Article,
    env: Environment,
    mode: Mode,
    cache: Optional[StageCache] = None,
    delay: float = 0.0,
    workers: Optional[int] = None,
) -> list[StageResult]:
    """Run the staged pipeline on one article.

    Quick runs Parse; Medium adds Analyze; Full adds one Verify result per
    item.  Stages whose fingerprints match a cached entry are skipped and
    reported with cached=True.  Later stages are not attempted once a stage
    fails.
    """
    results: list[StageResult] = []
    subject = str(article.path)
    if mode < Mode.QUICK:
        return results
    env = PatchedEnv(env, article)

    parse_fp = parse_fingerprint(article.source_text)

    def do_parse() -> StageResult:
        try:
            parse_article(article.source_text, article.path)
            return StageResult(STAGE_PARSE, subject, True, (), parse_fp)
        except ParseError as exc:
            diag = Diagnostic("parse_error", subject, str(exc))
            return StageResult(STAGE_PARSE, subject, False, (diag,), parse_fp)

    parse_res = (
        cache.get_or_insert(STAGE_PARSE, subject, parse_fp, do_parse)
        if cache is not None
        else do_parse()
    )
    results.append(parse_res)
    if not parse_res.ok or mode < Mode.MEDIUM:
        return results

    analyze_fp = analyze_fingerprint(article, env)

    def do_analyze() -> StageResult:
        rep = analyze(article, env)
        return StageResult(STAGE_ANALYZE, subject, rep.ok, rep.diagnostics, analyze_fp)

    analyze_res = (
        cache.get_or_insert(STAGE_ANALYZE, subject, analyze_fp, do_analyze)
        if cache is not None
        else do_analyze()
    )
    results.append(analyze_res)
    if not analyze_res.ok or mode < Mode.FULL:
        return results

    verifier = LibraryVerifier(env, cache=cache, delay=delay)
    per_item = verifier.results_for(
        [item_id(article.path, it.name) for it in article.items], workers=workers
    )
    results.extend(per_item.values())
    return results
