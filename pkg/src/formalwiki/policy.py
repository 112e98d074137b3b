"""Access-control configuration: groups, repo rules, and branch policies.

The config format is gitolite-flavored:

    @all = @superusers @maintainers @developers @users @anonymous

    repo    main
            RW+     =   @superusers @maintainers
            R       =   @developers @users @anonymous

`#` starts a comment.  Repo patterns are anchored regexes and may contain
the literal token CREATOR, which binds to the acting user for Create
queries and to the repo's recorded creator otherwise.  Permissions form a
small lattice: C grants Create only; R grants Read; RW adds Write; RW+
adds Rewind (non-fast-forward pushes).  There are no deny rules: the
answer is the union of all matching grants, and absent any grant the
answer is Deny.

Group membership has two sources: member lists written in the config and
dynamic class membership supplied by the caller (user records carry class
names like "@users").  Expansion is transitive and reference-time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Union

from .minilib import Mode

PERMS = ("C", "R", "RW", "RW+")

CREATE, READ, WRITE, REWIND = "create", "read", "write", "rewind"
ACTIONS = (CREATE, READ, WRITE, REWIND)

# which actions each permission token grants
_PERM_ACTIONS = {
    "C": frozenset({CREATE}),
    "R": frozenset({READ}),
    "RW": frozenset({READ, WRITE}),
    "RW+": frozenset({READ, WRITE, REWIND}),
}


class PolicyError(Exception):
    pass


class PolicySyntaxError(PolicyError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownPermToken(PolicyError):
    def __init__(self, token: str, line: int):
        super().__init__(f"line {line}: unknown permission {token!r}")
        self.token = token
        self.line = line


class GroupCycle(PolicyError):
    def __init__(self, cycle: list[str]):
        super().__init__(" -> ".join(cycle))
        self.cycle = cycle


@dataclass(frozen=True)
class RepoRule:
    pattern: str  # anchored regex; may contain the literal token CREATOR
    grants: tuple[tuple[str, tuple[str, ...]], ...]  # (perm, members)


@dataclass(frozen=True)
class PolicyConfig:
    groups: dict[str, tuple[str, ...]]  # @name -> members (users or @groups)
    rules: tuple[RepoRule, ...]

    def referenced_groups(self) -> set[str]:
        """Group names used inside group definitions (implicit classes)."""
        return {m for members in self.groups.values() for m in members if m.startswith("@")}


@dataclass(frozen=True)
class AccessQuery:
    user: str
    repo: str
    action: str  # create | read | write | rewind
    creator: Optional[str] = None  # repo's recorded creator, when known


def parse_policy(text: str) -> PolicyConfig:
    groups: dict[str, tuple[str, ...]] = {}
    rules: list[RepoRule] = []
    current: Optional[tuple[str, list[tuple[str, tuple[str, ...]]]]] = None

    def flush() -> None:
        nonlocal current
        if current is not None:
            rules.append(RepoRule(current[0], tuple(current[1])))
            current = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("@"):
            flush()
            name, eq, members = stripped.partition("=")
            if not eq:
                raise PolicySyntaxError("expected '=' in group definition", lineno)
            gname = name.strip()
            if not re.fullmatch(r"@[A-Za-z0-9_]+", gname):
                raise PolicySyntaxError(f"bad group name {gname!r}", lineno)
            if gname in groups:
                raise PolicySyntaxError(f"duplicate group {gname}", lineno)
            groups[gname] = tuple(members.split())
        elif stripped.startswith("repo") and (
            stripped == "repo" or stripped[4].isspace()
        ):
            flush()
            pattern = stripped[4:].strip()
            if not pattern:
                raise PolicySyntaxError("repo header needs a pattern", lineno)
            try:
                re.compile(pattern.replace("CREATOR", "CREATORTOKEN"))
            except re.error as exc:
                raise PolicySyntaxError(f"bad repo pattern: {exc}", lineno) from exc
            current = (pattern, [])
        else:
            if current is None:
                raise PolicySyntaxError("grant line outside a repo block", lineno)
            perm, eq, members = stripped.partition("=")
            if not eq:
                raise PolicySyntaxError("expected '=' in grant", lineno)
            token = perm.strip()
            if token not in _PERM_ACTIONS:
                raise UnknownPermToken(token, lineno)
            current[1].append((token, tuple(members.split())))
    flush()
    _check_group_cycles(groups)
    return PolicyConfig(groups, tuple(rules))


def _check_group_cycles(groups: Mapping[str, tuple[str, ...]]) -> None:
    color: dict[str, int] = {}
    stack: list[str] = []

    def visit(name: str) -> None:
        color[name] = 1
        stack.append(name)
        for member in groups.get(name, ()):
            if not member.startswith("@"):
                continue
            c = color.get(member, 0)
            if c == 1:
                raise GroupCycle(stack[stack.index(member):] + [member])
            if c == 0:
                visit(member)
        stack.pop()
        color[name] = 2

    for name in groups:
        if color.get(name, 0) == 0:
            visit(name)


def print_policy(cfg: PolicyConfig) -> str:
    """Render a config back to text; parse(print(cfg)) == cfg."""
    lines: list[str] = []
    for name, members in cfg.groups.items():
        lines.append(f"{name} = {' '.join(members)}")
    for rule in cfg.rules:
        lines.append("")
        lines.append(f"repo    {rule.pattern}")
        for perm, members in rule.grants:
            lines.append(f"        {perm:<7} =   {' '.join(members)}")
    return "\n".join(lines) + "\n"


MemberOf = Union[Mapping[str, Iterable[str]], Callable[[str], Iterable[str]]]


def _classes_of(member_of: Optional[MemberOf], user: str) -> frozenset[str]:
    if member_of is None:
        return frozenset()
    if callable(member_of):
        return frozenset(member_of(user))
    return frozenset(member_of.get(user, ()))


def evaluate(
    cfg: PolicyConfig, query: AccessQuery, member_of: Optional[MemberOf] = None
) -> bool:
    """Allow/Deny for one access query; deny-by-default, grants union.

    member_of supplies dynamic class membership (user -> group names, e.g.
    {"alice": {"@users"}}); config group definitions expand transitively on
    top of it.
    """
    if query.action not in ACTIONS:
        raise ValueError(f"unknown action {query.action!r}")
    classes = _classes_of(member_of, query.user)

    def user_in(member: str, seen: frozenset[str]) -> bool:
        if member == "CREATOR":
            return query.creator is not None and query.user == query.creator
        if not member.startswith("@"):
            return member == query.user
        if member in seen:
            return False
        if member in classes:
            return True
        return any(
            user_in(m, seen | {member}) for m in cfg.groups.get(member, ())
        )

    binding = query.user if query.action == CREATE else query.creator
    for rule in cfg.rules:
        pattern = rule.pattern
        if "CREATOR" in pattern:
            if binding is None:
                continue
            pattern = pattern.replace("CREATOR", re.escape(binding))
        if not re.fullmatch(pattern, query.repo):
            continue
        for perm, members in rule.grants:
            if query.action not in _PERM_ACTIONS[perm]:
                continue
            if any(user_in(m, frozenset()) for m in members):
                return True
    return False


def user_in_group(
    cfg: PolicyConfig, user: str, group: str, member_of: Optional[MemberOf] = None
) -> bool:
    """Transitive membership test: dynamic classes plus config definitions."""
    classes = _classes_of(member_of, user)

    def walk(name: str, seen: frozenset[str]) -> bool:
        if not name.startswith("@"):
            return name == user
        if name in seen:
            return False
        if name in classes:
            return True
        return any(walk(m, seen | {name}) for m in cfg.groups.get(name, ()))

    return walk(group, frozenset())


# --- per-branch verification requirements ---------------------------------


@dataclass(frozen=True)
class VerifyPolicy:
    """First-match map from repo-name pattern to required verification mode.

    Unmatched repos default to Quick.  main and devel must require Full.
    """

    entries: tuple[tuple[str, Mode], ...]

    def __post_init__(self) -> None:
        for name in ("main", "devel"):
            if self.required_mode(name) != Mode.FULL:
                raise ValueError(f"{name} must require Full verification")

    def required_mode(self, repo: str) -> Mode:
        for pattern, mode in self.entries:
            if re.fullmatch(pattern, repo):
                return mode
        return Mode.QUICK


def default_verify_policy() -> VerifyPolicy:
    return VerifyPolicy(
        (
            ("main", Mode.FULL),
            ("devel", Mode.FULL),
            (r"(release|hotfix)/.*", Mode.FULL),
            (r"feature/.*", Mode.QUICK),
            (r"user/.*", Mode.QUICK),
        )
    )


BUILTIN_POLICY_TEXT = """\
@all = @superusers @maintainers @developers @users @anonymous

repo    main
        RW+     =   @superusers @maintainers
        R       =   @developers @users @anonymous

repo    devel
        RW+     =   @superusers @maintainers @developers
        R       =   @users @anonymous

repo    feature/[a-zA-Z0-9].*
        C       =   @superusers @maintainers @developers
        RW+     =   @superusers @maintainers @developers
        R       =   @users @anonymous

repo    (release|hotfix)/[a-zA-Z0-9].*
        C       =   @superusers @maintainers
        RW+     =   @superusers @maintainers
        R       =   @developers @users @anonymous

repo   user/CREATOR/[a-zA-Z0-9].*
       C       =   @superusers @maintainers @developers @users
       RW+     =   CREATOR
       R       =   @all
"""


def default_policy() -> PolicyConfig:
    return parse_policy(BUILTIN_POLICY_TEXT)
