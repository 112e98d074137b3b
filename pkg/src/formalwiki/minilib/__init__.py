"""Toy formal language with a staged, cacheable batch verifier.

Articles hold Defs (named integer expressions) and Thms (equalities with an
``eval`` or ``by``-citation proof).  Items are the unit of dependency
tracking, editing and re-verification for the rest of the engine.
"""

from .analysis import AnalyzeReport, Diagnostic, Environment, analyze
from .model import (
    INT64_MAX,
    INT64_MIN,
    Article,
    ArticlePath,
    By,
    Eval,
    Expr,
    Item,
    ItemRef,
    Library,
    Lit,
    ModelError,
    Product,
    Ref,
    Span,
    Sum,
    expr_refs,
    item_id,
    split_item_id,
)
from .parser import ParseError, tokenize, parse_article
from .stages import (
    LibraryVerifier,
    Mode,
    PatchedEnv,
    STAGE_ANALYZE,
    STAGE_PARSE,
    STAGE_VERIFY,
    StageCache,
    StageResult,
    analyze_fingerprint,
    article_interface,
    parse_fingerprint,
    run_stages,
    verify_item,
)
from .verify import EvalFailure, eval_expr

__all__ = [
    "AnalyzeReport",
    "Article",
    "ArticlePath",
    "By",
    "Diagnostic",
    "Environment",
    "Eval",
    "EvalFailure",
    "Expr",
    "INT64_MAX",
    "INT64_MIN",
    "Item",
    "ItemRef",
    "Library",
    "LibraryVerifier",
    "Lit",
    "Mode",
    "ModelError",
    "ParseError",
    "PatchedEnv",
    "Product",
    "Ref",
    "STAGE_ANALYZE",
    "STAGE_PARSE",
    "STAGE_VERIFY",
    "Span",
    "StageCache",
    "StageResult",
    "Sum",
    "analyze",
    "analyze_fingerprint",
    "article_interface",
    "eval_expr",
    "expr_refs",
    "item_id",
    "parse_article",
    "parse_fingerprint",
    "run_stages",
    "split_item_id",
    "tokenize",
    "verify_item",
]
