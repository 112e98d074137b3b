"""Expression evaluation with 64-bit signed overflow checking.

Evaluation substitutes referenced Defs transitively (lazily, memoized by
qualified item id).  Any intermediate value outside the signed 64-bit range
is a verification failure, never a wraparound.  Citations (``by``) never
participate in evaluation; they are checked separately.
"""

from __future__ import annotations

from typing import Optional

from .analysis import Environment
from .model import (
    INT64_MAX,
    INT64_MIN,
    Article,
    Expr,
    Item,
    Lit,
    Product,
    Ref,
    Sum,
    item_id,
)


class EvalFailure(Exception):
    """Raised when an expression cannot be reduced to an in-range integer."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


def _checked(value: int, op: str) -> int:
    if value < INT64_MIN or value > INT64_MAX:
        raise EvalFailure("eval_overflow", f"{op} leaves 64-bit signed range")
    return value


def eval_expr(
    expr: Expr,
    home: Article,
    env: Environment,
    values: dict[str, int],
    active: Optional[list[str]] = None,
) -> int:
    """Evaluate expr in the context of its home article.

    values memoizes Def values by qualified item id and may be shared across
    calls; active tracks in-progress Defs to flag reference cycles.
    """
    if active is None:
        active = []
    if isinstance(expr, Lit):
        return _checked(expr.value, f"literal {expr.value}")
    if isinstance(expr, Sum):
        total = 0
        for term in expr.terms:
            total = _checked(total + eval_expr(term, home, env, values, active), "sum")
        return total
    if isinstance(expr, Product):
        product = 1
        for factor in expr.factors:
            product = _checked(
                product * eval_expr(factor, home, env, values, active), "product"
            )
        return product
    assert isinstance(expr, Ref)
    return _eval_ref(expr, home, env, values, active)


def _eval_ref(
    ref: Ref, home: Article, env: Environment, values: dict[str, int], active: list[str]
) -> int:
    r = ref.ref
    if r.article is None:
        target_article: Optional[Article] = home
    else:
        target_article = env.article(r.article)
    target: Optional[Item] = target_article.item(r.item) if target_article else None
    if target_article is None or target is None:
        raise EvalFailure("unresolved_ref", f"{r} not found")
    if target.kind != "def":
        raise EvalFailure("illegal_ref_kind", f"{r} is a {target.kind}, not a def")
    iid = item_id(target_article.path, target.name)
    if iid in values:
        return values[iid]
    if iid in active:
        raise EvalFailure("def_cycle", " -> ".join(active[active.index(iid):] + [iid]))
    active.append(iid)
    try:
        assert target.body is not None
        value = eval_expr(target.body, target_article, env, values, active)
    finally:
        active.pop()
    values[iid] = value
    return value
