"""Item- and file-level dependency graphs with closure statistics.

Edges point dependent -> dependee.  Item-level edges come from syntactic
references (statement refs and citations); file-level edges treat whole
articles as the unit: an item depends on every item of every directly
imported article and on every preceding item of its own article.

Also provides recompilation planning (changed items plus transitive
dependents, scheduled in parallel batches) and brute-force minimization of
a single item's environment, with the syntactic closure as its oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from statistics import median
from typing import Iterable, Optional

from .minilib import INT64_MAX, INT64_MIN, Library, analyze, item_id, split_item_id
from .minilib.model import Article, Item, Lit, Product, Ref, Sum
from .minilib.verify import EvalFailure


class CycleDetected(Exception):
    """A dependency cycle, with one witness cycle attached."""

    def __init__(self, cycle: list[str]):
        super().__init__(" -> ".join(cycle))
        self.cycle = cycle


class UnknownItem(Exception):
    pass


class NotVerifiable(Exception):
    """The item fails verification even with its full environment."""


ITEM_LEVEL = "item"
FILE_LEVEL = "file"


@dataclass(frozen=True)
class DepGraph:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]
    granularity: str = ITEM_LEVEL
    _adj: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        for a, b in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge endpoint not in nodes: {(a, b)}")
        adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            adj[a].append(b)
        for outs in adj.values():
            outs.sort()
        self._adj.update(adj)
        cycle = _find_cycle(adj)
        if cycle is not None:
            raise CycleDetected(cycle)

    def dependees(self, node: str) -> list[str]:
        return list(self._adj[node])

    def topo_order(self) -> list[str]:
        """Dependents first: every edge goes from earlier to later."""
        indeg = {n: 0 for n in self.nodes}
        for _, b in self.edges:
            indeg[b] += 1
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order: list[str] = []
        while ready:
            node = ready.pop(0)
            order.append(node)
            inserted = False
            for nxt in self._adj[node]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    ready.append(nxt)
                    inserted = True
            if inserted:
                ready.sort()
        return order

    def _closure_bits(self) -> tuple[list[str], dict[str, int], list[int]]:
        """Reachability bitsets, computed dependees-first."""
        order = self.topo_order()
        index = {n: i for i, n in enumerate(order)}
        reach: list[int] = [0] * len(order)
        for node in reversed(order):
            bits = 0
            for dep in self._adj[node]:
                j = index[dep]
                bits |= (1 << j) | reach[j]
            reach[index[node]] = bits
        return order, index, reach

    def closure_counts(self) -> tuple[int, dict[str, int]]:
        """(total transitive edges, per-node transitive-dependent count)."""
        order, _, reach = self._closure_bits()
        tdeps = 0
        dependents = {n: 0 for n in order}
        for i, node in enumerate(order):
            bits = reach[i]
            tdeps += bits.bit_count()
            while bits:
                low = bits & -bits
                dependents[order[low.bit_length() - 1]] += 1
                bits ^= low
        return tdeps, dependents


def _find_cycle(adj: dict[str, list[str]]) -> Optional[list[str]]:
    color: dict[str, int] = {}
    stack: list[str] = []
    found: list[list[str]] = []

    def visit(root: str) -> bool:
        work = [(root, iter(adj[root]))]
        color[root] = 1
        stack.append(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                c = color.get(nxt, 0)
                if c == 1:
                    found.append(stack[stack.index(nxt):] + [nxt])
                    return True
                if c == 0:
                    color[nxt] = 1
                    stack.append(nxt)
                    work.append((nxt, iter(adj[nxt])))
                    advanced = True
                    break
            if not advanced:
                work.pop()
                stack.pop()
                color[node] = 2
        return False

    for node in sorted(adj):
        if color.get(node, 0) == 0 and visit(node):
            return found[0]
    return None


@dataclass(frozen=True)
class StatsReport:
    items: int
    deps: Optional[int]
    tdeps: int
    p: float
    arl: float
    mrl: Optional[float]

    @classmethod
    def from_counts(
        cls, items: int, tdeps: int, deps: Optional[int] = None, mrl: Optional[float] = None
    ) -> "StatsReport":
        if items < 2:
            raise ValueError("need at least two items")
        pairs = items * (items - 1) // 2
        return cls(
            items=items,
            deps=deps,
            tdeps=tdeps,
            p=100.0 * tdeps / pairs,
            arl=tdeps / items,
            mrl=mrl,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "items": self.items,
                "deps": self.deps,
                "tdeps": self.tdeps,
                "p": self.p,
                "arl": self.arl,
                "mrl": self.mrl,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "StatsReport":
        data = json.loads(text)
        return cls(
            items=data["items"],
            deps=data["deps"],
            tdeps=data["tdeps"],
            p=data["p"],
            arl=data["arl"],
            mrl=data["mrl"],
        )


@dataclass(frozen=True)
class RecompPlan:
    changed: frozenset[str]
    affected: frozenset[str]
    schedule: tuple[tuple[str, ...], ...]


def _require_analyzed(library: Library) -> dict[str, tuple[str, ...]]:
    """Per-item direct dependency ids; raises on analysis failures."""
    deps: dict[str, tuple[str, ...]] = {}
    for article in library:
        report = analyze(article, library)
        if not report.ok:
            first = report.diagnostics[0]
            raise NotVerifiable(f"library does not analyze: {first}")
        for name, ids in report.item_deps.items():
            deps[item_id(article.path, name)] = ids
    return deps


def extract_item_graph(library: Library) -> DepGraph:
    """Syntactic reference edges between items."""
    deps = _require_analyzed(library)
    nodes = frozenset(deps)
    edges = frozenset((src, dst) for src, ids in deps.items() for dst in ids)
    return DepGraph(nodes, edges, ITEM_LEVEL)


def extract_file_graph(library: Library) -> DepGraph:
    """Whole-article dependency edges, projected onto items.

    An item depends on every item of each directly imported article and on
    every preceding item in its own article.
    """
    _require_analyzed(library)
    nodes: set[str] = set()
    edges: set[tuple[str, str]] = set()
    for article in library:
        ids = article.item_ids()
        nodes.update(ids)
        for i, src in enumerate(ids):
            for dst in ids[:i]:
                edges.add((src, dst))
        for imp in article.imports:
            imported = library.article(imp)
            if imported is None:
                continue
            for src in ids:
                for dst in imported.item_ids():
                    edges.add((src, dst))
    return DepGraph(frozenset(nodes), frozenset(edges), FILE_LEVEL)


def transitive_closure(g: DepGraph) -> DepGraph:
    """Irreflexive transitive closure, same granularity."""
    order, _, reach = g._closure_bits()
    edges: set[tuple[str, str]] = set()
    for i, node in enumerate(order):
        bits = reach[i]
        while bits:
            low = bits & -bits
            edges.add((node, order[low.bit_length() - 1]))
            bits ^= low
    return DepGraph(g.nodes, frozenset(edges), g.granularity)


def compute_stats(g: DepGraph) -> StatsReport:
    n = len(g.nodes)
    if n < 2:
        raise ValueError("need at least two items")
    tdeps, dependents = g.closure_counts()
    return StatsReport(
        items=n,
        deps=len(g.edges),
        tdeps=tdeps,
        p=100.0 * tdeps / (n * (n - 1) // 2),
        arl=tdeps / n,
        mrl=float(median(sorted(dependents.values()))),
    )


def recompilation_plan(g: DepGraph, changed: Iterable[str]) -> RecompPlan:
    """Changed items plus transitive dependents, in parallel-safe batches.

    Each batch only depends (within the affected set) on strictly earlier
    batches, and every item is scheduled as early as its dependencies allow.
    """
    changed_set = frozenset(changed)
    unknown = changed_set - g.nodes
    if unknown:
        raise UnknownItem(", ".join(sorted(unknown)))
    rdeps: dict[str, list[str]] = {n: [] for n in g.nodes}
    for a, b in g.edges:
        rdeps[b].append(a)
    affected: set[str] = set()
    frontier = list(changed_set)
    while frontier:
        node = frontier.pop()
        if node in affected:
            continue
        affected.add(node)
        frontier.extend(rdeps[node])
    # Longest-path layering within the affected subgraph: dependees first,
    # so each item lands one past its latest affected dependee.
    layer: dict[str, int] = {}
    for node in reversed(g.topo_order()):
        if node not in affected:
            continue
        ds = [layer[d] + 1 for d in g.dependees(node) if d in affected]
        layer[node] = max(ds, default=0)
    batches: dict[int, list[str]] = {}
    for node, d in layer.items():
        batches.setdefault(d, []).append(node)
    schedule = tuple(
        tuple(sorted(batches[d])) for d in sorted(batches)
    )
    return RecompPlan(changed_set, frozenset(affected), schedule)


# --- environment minimization ------------------------------------------


def _import_closure(library: Library, article: Article) -> list[Article]:
    seen: dict[str, Article] = {}
    frontier = list(article.imports)
    while frontier:
        path = frontier.pop()
        key = str(path)
        if key in seen:
            continue
        target = library.article(path)
        if target is None:
            continue
        seen[key] = target
        frontier.extend(target.imports)
    return list(seen.values())


def _micro_check(target: str, env_ids: set[str], library: Library) -> bool:
    """Would a micro-article of target plus env_ids pass Full verification?

    Environment items are premises: their statements are available, Def
    bodies evaluate (recursively, within the environment), and cited Thms
    only need to exist.  The target item itself is fully checked.
    """
    path, name = split_item_id(target)
    article = library.article(path)
    item = article.item(name) if article else None
    if article is None or item is None:
        return False
    allowed = set(env_ids) | {target}
    values: dict[str, int] = {}

    def resolve(home: Article, ref) -> Optional[tuple[str, Article, Item]]:
        if ref.article is None:
            target_article: Optional[Article] = home
        else:
            target_article = library.article(ref.article)
        if target_article is None:
            return None
        it = target_article.item(ref.item)
        if it is None:
            return None
        iid = item_id(target_article.path, it.name)
        return (iid, target_article, it) if iid in allowed else None

    def eval_restricted(expr, home: Article, active: list[str]) -> int:
        if isinstance(expr, Lit):
            if not (INT64_MIN <= expr.value <= INT64_MAX):
                raise EvalFailure("eval_overflow", "literal out of range")
            return expr.value
        if isinstance(expr, Sum):
            total = 0
            for term in expr.terms:
                total += eval_restricted(term, home, active)
                if not (INT64_MIN <= total <= INT64_MAX):
                    raise EvalFailure("eval_overflow", "sum out of range")
            return total
        if isinstance(expr, Product):
            product = 1
            for factor in expr.factors:
                product *= eval_restricted(factor, home, active)
                if not (INT64_MIN <= product <= INT64_MAX):
                    raise EvalFailure("eval_overflow", "product out of range")
            return product
        assert isinstance(expr, Ref)
        resolved = resolve(home, expr.ref)
        if resolved is None or resolved[2].kind != "def":
            raise EvalFailure("unresolved_ref", str(expr.ref))
        iid, owner, it = resolved
        if iid in values:
            return values[iid]
        if iid in active:
            raise EvalFailure("def_cycle", iid)
        active.append(iid)
        try:
            assert it.body is not None
            value = eval_restricted(it.body, owner, active)
        finally:
            active.pop()
        values[iid] = value
        return value

    try:
        if item.kind == "def":
            assert item.body is not None
            eval_restricted(item.body, article, [])
        else:
            assert item.lhs is not None and item.rhs is not None
            if eval_restricted(item.lhs, article, []) != eval_restricted(
                item.rhs, article, []
            ):
                return False
            for ref in item.cited_refs():
                resolved = resolve(article, ref.ref)
                if resolved is None or resolved[2].kind != "thm":
                    return False
    except EvalFailure:
        return False
    return True


def minimize_environment(target: str, library: Library) -> set[str]:
    """Smallest premise set that lets the target item verify on its own.

    Starts from every item visible to the target (import closure plus local
    predecessors) and greedily drops items in a fixed reverse-topological
    order (dependents first), keeping a drop only if the micro-article
    still verifies.
    """
    path, name = split_item_id(target)
    article = library.article(path)
    if article is None or article.item(name) is None:
        raise UnknownItem(target)
    idx = article.item_index(name)
    assert idx is not None
    env: set[str] = {item_id(article.path, it.name) for it in article.items[:idx]}
    for imported in _import_closure(library, article):
        env.update(imported.item_ids())
    if not _micro_check(target, env, library):
        raise NotVerifiable(target)
    graph = extract_item_graph(library)
    order = [n for n in graph.topo_order() if n in env]
    for candidate in order:
        trial = env - {candidate}
        if _micro_check(target, trial, library):
            env = trial
    return env


def syntactic_environment(target: str, library: Library) -> set[str]:
    """Oracle: direct references plus the Def-evaluation closure thereof."""
    path, name = split_item_id(target)
    article = library.article(path)
    item = article.item(name) if article else None
    if article is None or item is None:
        raise UnknownItem(target)
    report = analyze(article, library)
    direct = set(report.item_deps.get(name, ()))
    out = set(direct)
    frontier = [d for d in direct]
    while frontier:
        iid = frontier.pop()
        dpath, dname = split_item_id(iid)
        darticle = library.article(dpath)
        ditem = darticle.item(dname) if darticle else None
        if darticle is None or ditem is None or ditem.kind != "def":
            continue
        drep = analyze(darticle, library)
        for nxt in drep.item_deps.get(dname, ()):
            if nxt not in out:
                out.add(nxt)
                frontier.append(nxt)
    return out


# --- text export / import ------------------------------------------------


def export_graph(g: DepGraph) -> str:
    """One dependent<TAB>dependee line per edge, sorted.

    Isolated nodes do not appear; importing an export only restores nodes
    that participate in at least one edge.
    """
    return "".join(f"{a}\t{b}\n" for a, b in sorted(g.edges))


def import_graph(text: str, granularity: str = ITEM_LEVEL) -> DepGraph:
    edges: set[tuple[str, str]] = set()
    nodes: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected dependent<TAB>dependee")
        a, b = parts
        edges.add((a, b))
        nodes.update((a, b))
    return DepGraph(frozenset(nodes), frozenset(edges), granularity)
