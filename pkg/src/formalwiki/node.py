"""One wiki node assembled from the storage, policy and job machinery.

The node owns a copy-on-write store, a version store, an orchestrator and
optionally a mirror, and enforces access policy at every entry point:
edits and pushes check the write gate, repository creation checks the
create gate, and admins (a deployment-level list, not a policy class)
bypass evaluation entirely.  Registration is self-service; new users land
in the @users class and everything else about their rights comes from the
policy file's group definitions.

State persists as the content-addressed object closure of every ref plus
a small JSON snapshot of users and repositories; working volumes are
rebuilt by checkout on load.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .cowstore import CowStore
from .depgraph import (
    DepGraph,
    StatsReport,
    compute_stats,
    extract_file_graph,
    extract_item_graph,
    minimize_environment,
)
from .minilib import ArticlePath, Library, Mode, StageCache, item_id, parse_article
from .mirror import Mirror, PeerConfig, Transport
from .orchestrator import (
    BenchReport,
    DelimitedEdit,
    Job,
    Orchestrator,
    classify_edit,
    effective_statuses,
    library_dep_map,
    load_library,
    parse_item_snippet,
    plan_impact,
    store_library,
    OWN_OK,
    _own_of,
)
from .minilib.stages import LibraryVerifier
from .policy import (
    CREATE,
    READ,
    REWIND,
    WRITE,
    AccessQuery,
    PolicyConfig,
    VerifyPolicy,
    default_policy,
    default_verify_policy,
    evaluate,
    user_in_group,
)
from .render import RenderedArticle, render_article
from .vcstore import (
    DEFAULT_BRANCH,
    RefUpdate,
    VcStore,
    decode_push_message,
    envelope_update,
)

ANONYMOUS = "anonymous"

_USERNAME_RE = re.compile(r"[a-z][a-z0-9_.-]*\Z")


class NodeError(Exception):
    pass


class UserExists(NodeError):
    pass


class BadUsername(NodeError):
    pass


class RepoExists(NodeError):
    pass


class UnknownArticle(NodeError):
    pass


class UnknownItemName(NodeError):
    pass


class PolicyDenied(NodeError):
    def __init__(self, user: str, repo: str, action: str) -> None:
        super().__init__(f"{user} may not {action} {repo}")
        self.user = user
        self.repo = repo
        self.action = action


@dataclass(frozen=True)
class UserRecord:
    username: str
    public_key: str
    classes: frozenset[str] = frozenset({"@users"})

    def to_json(self) -> dict:
        return {
            "username": self.username,
            "public_key": self.public_key,
            "classes": sorted(self.classes),
        }


class WikiNode:
    """Everything one deployment needs behind the HTTP and CLI layers."""

    def __init__(
        self,
        *,
        policy: Optional[PolicyConfig] = None,
        verify_policy: Optional[VerifyPolicy] = None,
        peer_config: Optional[PeerConfig] = None,
        transport: Optional[Transport] = None,
        trust_mirrors: bool = False,
        workers: int = 2,
        admins: Iterable[str] = (),
        mirror_backoff: float = 0.5,
    ) -> None:
        self.store = CowStore()
        self.vc = VcStore()
        self.cache = StageCache()
        self.policy = policy or default_policy()
        self.verify_policy = verify_policy or default_verify_policy()
        self.users: dict[str, UserRecord] = {}
        self.admins = frozenset(admins)
        self.mirror: Optional[Mirror] = None
        if peer_config is not None:
            if transport is None:
                raise NodeError("peer config requires a transport")
            self.mirror = Mirror(
                peer_config,
                self.vc,
                transport,
                verify_policy=self.verify_policy,
                verify_gate=self._mirror_verify,
                trust_mirrors=trust_mirrors,
                backoff_base=mirror_backoff,
                on_applied=(self._mirror_applied,),
            )
        self.orch = Orchestrator(
            self.store,
            self.vc,
            workers=workers,
            verify_policy=self.verify_policy,
            cache=self.cache,
            policy_gate=self._push_policy_gate,
            post_update=(self._after_update,),
        )
        self._volume_seq = 0

    # --- users and access -------------------------------------------------

    def member_of(self, user: str) -> frozenset[str]:
        record = self.users.get(user)
        if record is not None:
            return record.classes
        if user == ANONYMOUS:
            return frozenset({"@anonymous"})
        return frozenset()

    def is_admin(self, user: str) -> bool:
        return user in self.admins

    def is_superuser(self, user: str) -> bool:
        return self.is_admin(user) or user_in_group(
            self.policy, user, "@superusers", self.member_of
        )

    def allowed(
        self, user: str, repo: str, action: str, creator: Optional[str] = None
    ) -> bool:
        if self.is_admin(user):
            return True
        if creator is None and action != CREATE and self.vc.has_repo(repo):
            creator = self.vc.repo(repo).creator
        query = AccessQuery(user, repo, action, creator=creator)
        return evaluate(self.policy, query, self.member_of)

    def require(self, user: str, repo: str, action: str) -> None:
        if not self.allowed(user, repo, action):
            raise PolicyDenied(user, repo, action)

    def register(self, username: str, public_key: str) -> UserRecord:
        if not _USERNAME_RE.match(username) or username == ANONYMOUS:
            raise BadUsername(username)
        if username in self.users:
            raise UserExists(username)
        record = UserRecord(username, public_key)
        self.users[username] = record
        return record

    def add_user(
        self, username: str, public_key: str = "", classes: Iterable[str] = ("@users",)
    ) -> UserRecord:
        """Direct insertion for provisioning; bypasses self-registration rules."""
        record = UserRecord(username, public_key, frozenset(classes))
        self.users[username] = record
        return record

    # --- repositories -----------------------------------------------------

    def _next_volume(self, prefix: str) -> str:
        self._volume_seq += 1
        return f"{prefix}/{self._volume_seq:06d}"

    def init_from_library(
        self, library: Library, repo: str = "main", creator: str = "root"
    ) -> str:
        """Create a repo whose first commit holds the given library."""
        if self.vc.has_repo(repo):
            raise RepoExists(repo)
        self.vc.add_repo(repo, creator)
        volume = self.store.create_volume(f"backend/{repo}")
        store_library(self.store, volume, library)
        commit = self.vc.commit_tree(repo, None, self.store, volume, creator, "init")
        self.vc.repo(repo).refs[DEFAULT_BRANCH] = commit
        self.orch.attach_repo(repo, volume, verify=True)
        return commit

    def create_repo(self, name: str, user: str, clone_from: str = "main") -> dict:
        """Policy-gated creation; clones the source repo when it exists.

        A clone shares the source's head commit and a snapshot of its
        working volume, so it costs O(1) space until edited.
        """
        if not self.allowed(user, name, CREATE):
            raise PolicyDenied(user, name, CREATE)
        if self.vc.has_repo(name):
            raise RepoExists(name)
        repo = self.vc.add_repo(name, user)
        source_attached = clone_from in self.orch.attached_repos()
        if source_attached and self.vc.repo(clone_from).refs.get(DEFAULT_BRANCH):
            head = self.vc.repo(clone_from).refs[DEFAULT_BRANCH]
            repo.refs[DEFAULT_BRANCH] = head
            volume = self.store.snapshot(
                self.orch.backend_volume(clone_from), f"backend/{name}"
            )
            self.orch.attach_repo(name, volume, verify=True)
        else:
            volume = self.store.create_volume(f"backend/{name}")
            self.orch.attach_repo(name, volume, verify=False)
        return {"name": name, "creator": user, "head": repo.refs.get(DEFAULT_BRANCH)}

    # --- editing and pushing ------------------------------------------------

    def submit_edit(
        self,
        user: str,
        repo: str,
        article: str,
        item: str,
        new_text: str,
        mode: Optional[Mode] = None,
    ) -> Job:
        self.require(user, repo, WRITE)
        edit = DelimitedEdit(repo, ArticlePath.parse(article), item, new_text)
        return self.orch.enqueue_edit(user, edit, mode)

    def predict_edit(
        self, user: str, repo: str, article: str, item: str, new_text: str
    ) -> dict:
        """Dry run: what an edit would re-verify, without enqueueing."""
        self.require(user, repo, WRITE)
        library = self.orch.library(repo)
        art = library.article(ArticlePath.parse(article))
        if art is None:
            raise UnknownArticle(article)
        old = art.item(item)
        if old is None:
            raise UnknownItemName(item)
        snippet, new_item = parse_item_snippet(new_text)
        edit_class = classify_edit(old, art.source_text, new_item, snippet.source_text)
        iid = item_id(art.path, item)
        plan = plan_impact(edit_class, iid, self.orch.graph(repo))
        return {
            "edit_class": edit_class,
            "changed": sorted(plan.changed),
            "affected": sorted(plan.affected),
        }

    def receive_push(self, payload: bytes, as_user: Optional[str] = None) -> Job:
        """Queue a wire-format push; the job runs the full pipeline."""
        envelope, bundle = decode_push_message(payload)
        update = envelope_update(envelope)
        if as_user is not None and as_user != update.pusher:
            raise PolicyDenied(as_user, update.repo, WRITE)
        if bundle:
            self.vc.apply_bundle(bundle)
        return self.orch.enqueue_push(update.pusher, update)

    def cancel_job(self, user: str, job_id: str) -> Job:
        return self.orch.cancel(user, job_id, superuser=self.is_superuser(user))

    # --- browsing -----------------------------------------------------------

    def article_page(self, user: str, repo: str, article: str) -> RenderedArticle:
        self.require(user, repo, READ)
        library = self.orch.library(repo)
        art = library.article(ArticlePath.parse(article))
        if art is None:
            raise UnknownArticle(article)
        return render_article(art, library=library)

    def item_info(self, user: str, repo: str, article: str, item: str) -> dict:
        self.require(user, repo, READ)
        library = self.orch.library(repo)
        art = library.article(ArticlePath.parse(article))
        if art is None:
            raise UnknownArticle(article)
        it = art.item(item)
        if it is None:
            raise UnknownItemName(item)
        iid = item_id(art.path, item)
        statuses = self.orch.status_map(repo) or {}
        deps = library_dep_map(library).get(iid, ())
        return {
            "item": iid,
            "name": it.name,
            "kind": it.kind,
            "text": it.text(art.source_text),
            "statement": it.statement_text(art.source_text),
            "proof": it.proof_text(art.source_text),
            "status": statuses.get(iid, "unknown"),
            "deps": sorted(deps),
            "span": {"start": it.span.start, "end": it.span.end},
        }

    def stats(self, user: str, repo: str, granularity: str = "item") -> StatsReport:
        self.require(user, repo, READ)
        library = self.orch.library(repo)
        if granularity == "item":
            graph = extract_item_graph(library)
        elif granularity == "file":
            graph = extract_file_graph(library)
        else:
            raise NodeError(f"unknown granularity {granularity!r}")
        return compute_stats(graph)

    def min_deps(self, user: str, repo: str, iid: str) -> list[str]:
        self.require(user, repo, READ)
        return sorted(minimize_environment(iid, self.orch.library(repo)))

    def clone_bench(
        self,
        user: str,
        n: int,
        repo: str = "main",
        article: str = "bench.clone",
        source: Optional[str] = None,
    ) -> BenchReport:
        if not self.is_superuser(user):
            raise PolicyDenied(user, repo, "benchmark")
        if source is None:
            source = "def bench_base := 40 + 2;\nthm bench_ok : bench_base = 42 proof eval;"
        return self.orch.run_clone_bench(repo, n, ArticlePath.parse(article), source)

    # --- policy gates and hooks ------------------------------------------------

    def _push_policy_gate(self, update: RefUpdate, action: str) -> bool:
        creator = (
            self.vc.repo(update.repo).creator if self.vc.has_repo(update.repo) else None
        )
        if self.is_admin(update.pusher):
            return True
        query = AccessQuery(update.pusher, update.repo, action, creator=creator)
        return evaluate(self.policy, query, self.member_of)

    def _after_update(self, update: RefUpdate) -> None:
        if self.mirror is not None:
            self.mirror.on_post_update(update)

    def _mirror_verify(self, update: RefUpdate) -> tuple[bool, str]:
        """Receiver-side re-verification of a mirrored commit."""
        volume = self.store.create_volume(self._next_volume("mirrorck"))
        try:
            self.vc.checkout_commit(update.new, self.store, volume)
            try:
                library = load_library(self.store, volume)
            except Exception as exc:  # ParseError and path errors alike
                return False, f"parse failed: {exc}"
            verifier = LibraryVerifier(library, cache=self.cache)
            own = {}
            for iid in library.item_ids():
                res = verifier.result(iid)
                own[iid] = _own_of(res.ok, res.diagnostics)
            effective = effective_statuses(own, library_dep_map(library))
            bad = sorted(i for i, st in effective.items() if st != OWN_OK)
            if bad:
                return False, f"items failed: {', '.join(bad[:5])}"
            return True, ""
        finally:
            self.store.discard(volume)

    def _mirror_applied(self, update: RefUpdate) -> None:
        """Bring the working volume in line with a mirrored ref update."""
        if update.branch != DEFAULT_BRANCH:
            return
        if update.repo in self.orch.attached_repos():
            volume = self.store.snapshot(
                self.orch.backend_volume(update.repo),
                self._next_volume(f"mirror/{update.repo}"),
            )
        else:
            volume = self.store.create_volume(
                self._next_volume(f"mirror/{update.repo}")
            )
        self.vc.checkout_commit(update.new, self.store, volume)
        trusted = self.mirror is not None and self.mirror.trust_mirrors
        self.orch.attach_repo(update.repo, volume, verify=not trusted)

    # --- persistence ---------------------------------------------------------

    def save(self, root: "str | Path") -> None:
        """Write users, repos and the object closure of every ref."""
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        ids: list[str] = []
        seen: set[str] = set()
        repos = []
        for name in self.vc.repo_names():
            repo = self.vc.repo(name)
            repos.append(
                {"name": name, "creator": repo.creator, "refs": dict(repo.refs)}
            )
            for head in repo.refs.values():
                for oid in self.vc.objects.closure(head, stop=seen):
                    ids.append(oid)
                    seen.add(oid)
        state = {
            "users": [self.users[u].to_json() for u in sorted(self.users)],
            "repos": repos,
            "admins": sorted(self.admins),
        }
        (root / "state.json").write_text(json.dumps(state, indent=2, sort_keys=True))
        (root / "objects.bin").write_bytes(self.vc.encode_bundle(ids))

    def load(self, root: "str | Path") -> None:
        """Restore a saved node; working volumes are rebuilt by checkout."""
        root = Path(root)
        state = json.loads((root / "state.json").read_text())
        self.vc.apply_bundle((root / "objects.bin").read_bytes())
        for entry in state["users"]:
            self.users[entry["username"]] = UserRecord(
                entry["username"], entry["public_key"], frozenset(entry["classes"])
            )
        self.admins = self.admins | frozenset(state.get("admins", ()))
        for spec_entry in state["repos"]:
            repo = self.vc.add_repo(spec_entry["name"], spec_entry["creator"])
            repo.refs.update(spec_entry["refs"])
            head = repo.refs.get(DEFAULT_BRANCH)
            if head is None:
                continue
            volume = self.store.create_volume(f"backend/{repo.name}")
            self.vc.checkout_commit(head, self.store, volume)
            self.orch.attach_repo(repo.name, volume, verify=False)

    # --- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        self.orch.start()
        if self.mirror is not None:
            self.mirror.start()

    def stop(self) -> None:
        self.orch.stop()
        if self.mirror is not None:
            self.mirror.stop()
