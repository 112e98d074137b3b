"""Reference analysis: resolution, kind checking, and Def-cycle detection.

Resolution rules:

* A local (unqualified) reference resolves to an item *earlier in the same
  article*.  Forward local references are unresolved; this keeps item-level
  dependency edges a subset of file-level edges on every analyzable library.
* A qualified reference must name an article in the declared import list,
  and that article must exist in the environment and contain the item.
* Expression references must land on Defs; ``by`` citations on Thms.
* Cycles among Defs (through local references, by name) are reported as
  ``def_cycle`` before positional resolution, so ``def a := b; def b := a;``
  is a cycle, not a pair of forward references.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol

from .model import Article, ArticlePath, Item, ItemRef, Ref, item_id


class Environment(Protocol):
    """What analysis and verification need from a library."""

    def article(self, path: "ArticlePath | str") -> Optional[Article]: ...


@dataclass(frozen=True)
class Diagnostic:
    """One analysis or verification finding, attached to an item."""

    code: str
    item: str  # fully qualified item id of the offending item
    message: str

    def __str__(self) -> str:
        return f"{self.item}: {self.code}: {self.message}"


@dataclass(frozen=True)
class AnalyzeReport:
    path: ArticlePath
    diagnostics: tuple[Diagnostic, ...]
    # item name -> qualified ids of all directly referenced items, in
    # first-occurrence order (statement refs, then citations), deduplicated.
    # Only meaningful when ok.
    item_deps: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.diagnostics


def _local_def_cycles(article: Article) -> list[list[str]]:
    """Name-level cycles among this article's Defs, ignoring item order."""
    defs = {it.name: it for it in article.items if it.kind == "def"}
    graph: dict[str, list[str]] = {}
    for name, it in defs.items():
        graph[name] = [
            r.ref.item
            for r in it.statement_refs()
            if r.ref.article is None and r.ref.item in defs
        ]
    cycles: list[list[str]] = []
    color: dict[str, int] = {}  # 0 absent, 1 on stack, 2 done
    stack: list[str] = []

    def visit(node: str) -> None:
        color[node] = 1
        stack.append(node)
        for nxt in graph[node]:
            c = color.get(nxt, 0)
            if c == 1:
                cycles.append(stack[stack.index(nxt):] + [nxt])
            elif c == 0:
                visit(nxt)
        stack.pop()
        color[node] = 2

    for name in defs:
        if color.get(name, 0) == 0:
            visit(name)
    return cycles


def analyze(article: Article, env: Environment) -> AnalyzeReport:
    """Resolve every reference in the article against env; report violations."""
    diagnostics: list[Diagnostic] = []
    home = article.path
    index = {it.name: i for i, it in enumerate(article.items)}

    cycles = _local_def_cycles(article)
    cycle_members: set[str] = set()
    for cyc in cycles:
        cycle_members.update(cyc)
        diagnostics.append(
            Diagnostic("def_cycle", item_id(home, cyc[0]), " -> ".join(cyc))
        )

    def check_ref(owner: Item, ref: Ref, want_kind: str) -> Optional[str]:
        """Returns the qualified id of the target, or None plus a diagnostic."""
        r: ItemRef = ref.ref
        oid = item_id(home, owner.name)
        if r.article is None:
            target_idx = index.get(r.item)
            if target_idx is None or target_idx >= index[owner.name]:
                if owner.name in cycle_members and r.item in cycle_members:
                    return None  # already reported as part of a Def cycle
                diagnostics.append(
                    Diagnostic("unresolved_ref", oid, f"no earlier item {r.item!r}")
                )
                return None
            target = article.items[target_idx]
            tid = item_id(home, r.item)
        else:
            if r.article not in article.imports:
                diagnostics.append(
                    Diagnostic("import_missing", oid, f"{r} needs import {r.article}")
                )
                return None
            target_article = env.article(r.article)
            if target_article is None:
                diagnostics.append(
                    Diagnostic("unresolved_ref", oid, f"article {r.article} not found")
                )
                return None
            maybe = target_article.item(r.item)
            if maybe is None:
                diagnostics.append(
                    Diagnostic(
                        "unresolved_ref", oid, f"no item {r.item!r} in {r.article}"
                    )
                )
                return None
            target = maybe
            tid = item_id(r.article, r.item)
        if target.kind != want_kind:
            diagnostics.append(
                Diagnostic(
                    "illegal_ref_kind",
                    oid,
                    f"{r} is a {target.kind}, expected {want_kind}",
                )
            )
            return None
        return tid

    item_deps: dict[str, tuple[str, ...]] = {}
    for it in article.items:
        deps: list[str] = []
        for ref in it.statement_refs():
            tid = check_ref(it, ref, "def")
            if tid is not None and tid not in deps:
                deps.append(tid)
        for ref in it.cited_refs():
            tid = check_ref(it, ref, "thm")
            if tid is not None and tid not in deps:
                deps.append(tid)
        item_deps[it.name] = tuple(deps)

    return AnalyzeReport(home, tuple(diagnostics), item_deps)
