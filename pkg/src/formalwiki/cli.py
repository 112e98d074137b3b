"""Command line front end.

Local administration commands (init, verify, stats, mindeps, clone-bench)
operate on a storage directory directly and skip access policy: whoever can
read the files already owns them.  `serve` starts the HTTP node described by
a JSON config, and `policy-check` answers what the access rules would say
for a given principal without touching any repository state.

Exit codes: 0 success, 1 domain failure (bad input data, failed
verification, denied access), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .depgraph import (
    NotVerifiable,
    UnknownItem,
    compute_stats,
    extract_file_graph,
    extract_item_graph,
    minimize_environment,
)
from .minilib import ArticlePath, Library, Mode, ParseError, analyze, parse_article
from .mirror import Peer, PeerConfig
from .node import ANONYMOUS, NodeError, WikiNode
from .orchestrator import (
    OrchestratorError,
    effective_statuses,
    library_dep_map,
)
from .policy import (
    ACTIONS,
    AccessQuery,
    BUILTIN_POLICY_TEXT,
    PolicyError,
    VerifyPolicy,
    evaluate,
    parse_policy,
)
from .vcstore import DEFAULT_BRANCH, VcError


class CliError(Exception):
    """Domain failure surfaced to the user with exit code 1."""


def _load_articles(source_dir: Path) -> Library:
    """Read every .fml file under source_dir; a/b/c.fml becomes article a.b.c."""
    if not source_dir.is_dir():
        raise CliError(f"{source_dir} is not a directory")
    files = sorted(source_dir.rglob("*.fml"))
    if not files:
        raise CliError(f"no .fml files under {source_dir}")
    library = Library({})
    for file in files:
        dotted = ".".join(file.relative_to(source_dir).with_suffix("").parts)
        try:
            library.add(parse_article(file.read_text(), ArticlePath.parse(dotted)))
        except ParseError as exc:
            raise CliError(f"{file}: {exc}")
    return library


def _open_node(storage: str) -> WikiNode:
    root = Path(storage)
    if not (root / "state.json").exists():
        raise CliError(f"no wiki state under {storage} (run 'init' first)")
    node = WikiNode()
    node.load(root)
    return node


def _mode_arg(name: str) -> Mode:
    try:
        return Mode[name.upper()]
    except KeyError:
        raise CliError(f"unknown mode {name!r} (expected quick, medium or full)")


def cmd_init(args: argparse.Namespace) -> int:
    library = _load_articles(Path(args.source_dir))
    node = WikiNode(admins=tuple(args.admin))
    commit = node.init_from_library(library, repo=args.repo)
    storage = Path(args.storage)
    storage.mkdir(parents=True, exist_ok=True)
    node.save(storage)
    items = sum(len(a.items) for a in library)
    print(f"initialized {args.repo} at {storage}: "
          f"{len(library.articles)} articles, {items} items, head {commit[:12]}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    node = _open_node(args.storage)
    mode = _mode_arg(args.mode)
    library = node.orch.library(args.repo)
    total = len(library.item_ids())
    if mode <= Mode.QUICK:
        print(f"parsed {len(library.articles)} articles, {total} items")
        return 0
    if mode == Mode.MEDIUM:
        bad = 0
        for article in library:
            for diag in analyze(article, library).diagnostics:
                print(f"analyze {diag.item}: {diag.code}: {diag.message}")
                bad += 1
        print(f"{total - bad}/{total} items analyzed clean")
        return 0 if bad == 0 else 1
    own = node.orch.seed_status(args.repo)
    effective = effective_statuses(own, library_dep_map(library))
    failed = sorted(iid for iid, status in effective.items() if status != "ok")
    for iid in failed:
        print(f"failed {iid} (own: {own[iid]})")
    print(f"{total - len(failed)}/{total} items ok")
    return 0 if not failed else 1


def cmd_stats(args: argparse.Namespace) -> int:
    node = _open_node(args.storage)
    library = node.orch.library(args.repo)
    extract = extract_item_graph if args.granularity == "item" else extract_file_graph
    print(compute_stats(extract(library)).to_json())
    return 0


def cmd_mindeps(args: argparse.Namespace) -> int:
    node = _open_node(args.storage)
    library = node.orch.library(args.repo)
    print(json.dumps(sorted(minimize_environment(args.item, library))))
    return 0


def cmd_clone_bench(args: argparse.Namespace) -> int:
    node = _open_node(args.storage)
    source = "def bench_base := 40 + 2;\nthm bench_ok : bench_base = 42 proof eval;\n"
    report = node.orch.run_clone_bench(
        args.repo, args.n, ArticlePath.parse("bench.clone"), source
    )
    print(report.to_json())
    return 0


def _node_from_config(config: dict, config_dir: Path) -> WikiNode:
    def resolve(value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else config_dir / path

    policy = None
    if config.get("policy_path"):
        policy = parse_policy(resolve(config["policy_path"]).read_text())
    verify_policy = None
    if config.get("verify_policy"):
        entries = tuple(
            (pattern, _mode_arg(mode)) for pattern, mode in config["verify_policy"].items()
        )
        verify_policy = VerifyPolicy(entries)
    peer_config = None
    transport = None
    if config.get("peers"):
        if not config.get("self_id"):
            raise CliError("config with peers needs self_id")
        peers = tuple(Peer(p["peer_id"], p["address"]) for p in config["peers"])
        peer_config = PeerConfig(config["self_id"], peers)
        from .mirror import HttpTransport

        transport = HttpTransport()
    node = WikiNode(
        policy=policy,
        verify_policy=verify_policy,
        peer_config=peer_config,
        transport=transport,
        trust_mirrors=bool(config.get("trust_mirrors", False)),
        workers=int(config.get("workers", 2)),
        admins=tuple(config.get("admins", ())),
    )
    storage = resolve(config["storage_root"])
    if (storage / "state.json").exists():
        node.load(storage)
    return node


def cmd_serve(args: argparse.Namespace) -> int:
    config_path = Path(args.config)
    try:
        config = json.loads(config_path.read_text())
    except FileNotFoundError:
        raise CliError(f"config file {config_path} not found")
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {config_path}: {exc}")
    if "storage_root" not in config:
        raise CliError("config needs storage_root")
    node = _node_from_config(config, config_path.resolve().parent)

    import uvicorn

    from .server import create_app

    host = args.host or config.get("host", "127.0.0.1")
    port = args.port if args.port is not None else int(config.get("port", 8000))
    uvicorn.run(create_app(node), host=host, port=port, log_level="warning")
    return 0


def cmd_policy_check(args: argparse.Namespace) -> int:
    if args.policy:
        config = parse_policy(Path(args.policy).read_text())
    else:
        config = parse_policy(BUILTIN_POLICY_TEXT)
    action = args.action.lower()
    if action not in ACTIONS:
        raise CliError(f"unknown action {args.action!r} (expected one of {sorted(ACTIONS)})")

    if args.classes is not None:
        classes = frozenset(c if c.startswith("@") else f"@{c}" for c in args.classes.split(",") if c)
        member_of = lambda user: classes if user == args.user else frozenset()
    else:
        registry: dict[str, frozenset[str]] = {}
        storage = Path(args.storage)
        if (storage / "state.json").exists():
            state = json.loads((storage / "state.json").read_text())
            registry = {
                entry["username"]: frozenset(entry["classes"]) for entry in state["users"]
            }

        def member_of(user: str) -> frozenset[str]:
            if user in registry:
                return registry[user]
            # Unknown principals get the anonymous tier so the answer
            # reflects what an unauthenticated visitor could do.
            return frozenset({"@anonymous"})

    query = AccessQuery(args.user, args.repo, action, creator=args.creator)
    decision = evaluate(config, query, member_of)
    print("allow" if decision else "deny")
    return 0 if decision else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="formalwiki", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_storage(p: argparse.ArgumentParser) -> None:
        p.add_argument("--storage", default="wiki-data", help="storage directory")

    p = sub.add_parser("init", help="create a wiki from a directory of .fml files")
    p.add_argument("source_dir")
    p.add_argument("--repo", default="main")
    p.add_argument("--admin", action="append", default=[], help="admin username (repeatable)")
    add_storage(p)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("verify", help="run the pipeline over a repo and report status")
    p.add_argument("repo")
    p.add_argument("--mode", default="full", help="quick, medium or full")
    add_storage(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", help="dependency statistics for a repo")
    p.add_argument("repo")
    p.add_argument("--granularity", choices=("item", "file"), default="item")
    add_storage(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("mindeps", help="minimal environment for one item")
    p.add_argument("repo")
    p.add_argument("item", help="item id, e.g. calc#six")
    add_storage(p)
    p.set_defaults(func=cmd_mindeps)

    p = sub.add_parser("clone-bench", help="measure per-clone cost of n snapshots")
    p.add_argument("n", type=int)
    p.add_argument("--repo", default="main")
    add_storage(p)
    p.set_defaults(func=cmd_clone_bench)

    p = sub.add_parser("serve", help="run the HTTP node from a JSON config")
    p.add_argument("config")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("policy-check", help="ask the access rules about one action")
    p.add_argument("user")
    p.add_argument("repo")
    p.add_argument("action", help="create, read, write or rewind")
    p.add_argument("--policy", default=None, help="policy file (default: built-in rules)")
    p.add_argument("--creator", default=None, help="repo creator for CREATOR rules")
    p.add_argument("--classes", default=None, help="comma separated classes for the user")
    add_storage(p)
    p.set_defaults(func=cmd_policy_check)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        NodeError,
        OrchestratorError,
        VcError,
        PolicyError,
        ParseError,
        UnknownItem,
        NotVerifiable,
    ) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except KeyError as exc:
        print(f"error: missing key {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
