"""Independent reference computations used to cross-check the real pipeline.

Everything here recomputes results from scratch with the dumbest correct
method available, so agreement with the incremental machinery is evidence,
not tautology.
"""

from formalwiki.minilib import ArticlePath, Library, LibraryVerifier, parse_article
from formalwiki.orchestrator import _own_of, effective_statuses, library_dep_map


def scratch_statuses(lib: Library) -> dict[str, str]:
    """Effective ok/failed per item from a cold, full verification."""
    verifier = LibraryVerifier(lib)
    own = {}
    for iid in lib.item_ids():
        res = verifier.result(iid)
        own[iid] = _own_of(res.ok, res.diagnostics)
    return effective_statuses(own, library_dep_map(lib))


def replace_article(lib: Library, dotted: str, new_source: str) -> Library:
    """A fresh library with one article's source swapped out."""
    out = Library()
    for article in lib:
        if str(article.path) == dotted:
            out.add(parse_article(new_source, article.path))
        else:
            out.add(article)
    return out


def remove_article(lib: Library, dotted: str) -> Library:
    out = Library()
    for article in lib:
        if str(article.path) != dotted:
            out.add(article)
    return out


def syntactic_closure(lib: Library, iid: str) -> set[str]:
    """Everything one must load to check an item, walked naively.

    Def references recurse (a def's value needs its whole reference
    closure), while cited theorems are leaves: a citation needs the
    theorem to exist, not to re-derive it.
    """
    from formalwiki.minilib import analyze, item_id

    deps = {}
    kinds = {}
    for article in lib:
        report = analyze(article, lib)
        for name, ids in report.item_deps.items():
            deps[item_id(article.path, name)] = ids
        for item in article.items:
            kinds[item_id(article.path, item.name)] = item.kind
    seen: set[str] = set()
    frontier = [iid]
    while frontier:
        node = frontier.pop()
        for dep in deps.get(node, ()):
            if dep not in seen:
                seen.add(dep)
                if kinds.get(dep) == "def":
                    frontier.append(dep)
    return seen


def path_of(dotted: str) -> ArticlePath:
    return ArticlePath.parse(dotted)
