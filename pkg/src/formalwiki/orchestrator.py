"""Verification gatekeeping: job queues, sandboxed re-verification, rollback.

Every state-changing operation on a repository (a delimited edit or a push)
becomes a Job.  Jobs are queued FIFO per owner and executed one at a time
per repository against a copy-on-write sandbox:

    snapshot backend -> apply change -> diff -> plan -> staged verify
        -> promote sandbox (success) | discard sandbox (failure)

A failed job leaves the backend volume byte-identical to before.  On
success the sandbox becomes the new backend volume; the previous backend
stays behind as its immutable copy-on-write parent.

Verification statuses are tracked per item as the item's *own* outcome
(ok / failed / blocked-by-dependency).  An item's effective status is
failed when its own check failed or any transitive dependency's did; this
lets a run restricted to the planned impact set reproduce exactly the
status map a from-scratch full verification would produce.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

from .cowstore import CowStore
from .depgraph import (
    CycleDetected,
    DepGraph,
    ITEM_LEVEL,
    RecompPlan,
    UnknownItem,
    recompilation_plan,
)
from .minilib import (
    Article,
    ArticlePath,
    Diagnostic,
    Item,
    Library,
    LibraryVerifier,
    Mode,
    ParseError,
    StageCache,
    analyze,
    item_id,
    parse_article,
    split_item_id,
)
from .policy import VerifyPolicy, default_verify_policy
from .render import build_indexes
from .vcstore import DEFAULT_BRANCH, PushResult, RefUpdate, VcStore

# job states
QUEUED = "queued"
RUNNING = "running"
SUCCEEDED = "succeeded"
FAILED = "failed"
CANCELLED = "cancelled"

_TRANSITIONS = {
    QUEUED: {RUNNING, CANCELLED},
    RUNNING: {SUCCEEDED, FAILED, CANCELLED},
}

# edit classes
PROOF_ONLY = "proof_only"
STATEMENT_CHANGE = "statement_change"
KIND_CHANGE = "kind_change"
NAME_CHANGE = "name_change"

# own-status values (per item, per repo)
OWN_OK = "ok"
OWN_FAIL = "failed"
OWN_BLOCKED = "blocked"  # own check skipped because a dependency failed

_PROPAGATION_CODES = {"dep_failed", "cited_unverified"}


class OrchestratorError(Exception):
    pass


class NotOwner(OrchestratorError):
    pass


class UnknownJob(OrchestratorError):
    pass


class SandboxBusy(OrchestratorError):
    pass


class RepoNotAttached(OrchestratorError):
    pass


class _Cancelled(Exception):
    pass


class _JobFailed(Exception):
    def __init__(self, detail: str, diagnostics: tuple[dict, ...] = ()):
        super().__init__(detail)
        self.detail = detail
        self.diagnostics = diagnostics


def source_file(path: ArticlePath) -> str:
    """Volume file path holding an article's source."""
    return "/".join(path.segments) + ".fml"


def article_path_of(file_path: str) -> ArticlePath:
    if not file_path.endswith(".fml"):
        raise ValueError(f"not an article file: {file_path}")
    return ArticlePath(tuple(file_path[: -len(".fml")].split("/")))


def load_library(store: CowStore, vol_id: str) -> Library:
    """Parse every article file in a volume; raises ParseError on failures."""
    lib = Library()
    for file_path in store.list_files(vol_id):
        if not file_path.endswith(".fml"):
            continue
        path = article_path_of(file_path)
        text = store.read_file(vol_id, file_path).decode()
        lib.add(parse_article(text, path))
    return lib


def store_library(store: CowStore, vol_id: str, lib: Library) -> None:
    for article in lib:
        store.write_file(vol_id, source_file(article.path), article.source_text.encode())


# --- edits ------------------------------------------------------------------


@dataclass(frozen=True)
class DelimitedEdit:
    """Replace one item's text inside an article, leaving the rest alone."""

    repo: str
    article: ArticlePath
    item: str
    new_text: str
    base: Optional[str] = None  # expected head commit; None accepts current
    allow_rename: bool = False


def classify_edit(old: Item, old_source: str, new: Item, new_source: str) -> str:
    """How far an item edit can reach: proof-only edits cannot affect users."""
    if old.kind != new.kind:
        return KIND_CHANGE
    if old.name != new.name:
        return NAME_CHANGE
    if old.statement_text(old_source) == new.statement_text(new_source):
        return PROOF_ONLY
    return STATEMENT_CHANGE


def parse_item_snippet(text: str) -> tuple[Article, Item]:
    """Parse a delimited-edit payload: exactly one item, no imports."""
    snippet = parse_article(text, ArticlePath(("edit",)))
    if snippet.imports:
        raise ParseError("imports are not allowed in a delimited edit", 1, 1)
    if len(snippet.items) != 1:
        raise ParseError(
            f"expected exactly one item, got {len(snippet.items)}", 1, 1
        )
    return snippet, snippet.items[0]


def plan_impact(edit_class: str, iid: str, graph: DepGraph) -> RecompPlan:
    """Items to re-verify for one classified item edit."""
    if iid not in graph.nodes:
        raise UnknownItem(iid)
    if edit_class == PROOF_ONLY:
        one = frozenset({iid})
        return RecompPlan(one, one, ((iid,),))
    return recompilation_plan(graph, [iid])


# --- jobs ---------------------------------------------------------------------


@dataclass
class Job:
    id: str
    owner: str
    kind: str  # "edit" | "push"
    mode: Mode
    repo: str
    edit: Optional[DelimitedEdit] = None
    update: Optional[RefUpdate] = None
    bundle: bytes = b""
    skip_verify: bool = False  # trusted mirror deliveries
    state: str = QUEUED
    detail: str = ""
    diagnostics: tuple[dict, ...] = ()
    plan_changed: tuple[str, ...] = ()
    plan_affected: tuple[str, ...] = ()
    verified_items: tuple[str, ...] = ()
    recomputed: int = 0
    commit: Optional[str] = None
    result_status: dict = field(default_factory=dict)
    cancel_event: threading.Event = field(default_factory=threading.Event, repr=False)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "owner": self.owner,
            "kind": self.kind,
            "mode": self.mode.name.lower(),
            "repo": self.repo,
            "state": self.state,
            "detail": self.detail,
            "diagnostics": list(self.diagnostics),
            "plan_changed": list(self.plan_changed),
            "plan_affected": list(self.plan_affected),
            "verified_items": list(self.verified_items),
            "recomputed": self.recomputed,
            "commit": self.commit,
        }


def _diag_dict(diag: Diagnostic, stage: str) -> dict:
    return {"item": diag.item, "stage": stage, "message": f"{diag.code}: {diag.message}"}


@dataclass
class _RepoState:
    volume: str
    own_status: Optional[dict[str, str]] = None  # None until verified at Full
    library: Optional[Library] = None
    sandbox_lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass(frozen=True)
class VerifyOutcome:
    ok: bool
    diagnostics: tuple[dict, ...]
    changed: tuple[str, ...]
    affected: tuple[str, ...]
    verified: tuple[str, ...]
    recomputed: int
    own_status: Optional[dict[str, str]]
    effective: dict[str, str]  # item id -> "ok" | "failed"


@dataclass(frozen=True)
class BenchReport:
    n: int
    avg_seconds: float
    data_bytes: int
    metadata_bytes: int

    @property
    def total_bytes(self) -> int:
        return self.data_bytes + self.metadata_bytes

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "avg_seconds": self.avg_seconds,
                "data_bytes": self.data_bytes,
                "metadata_bytes": self.metadata_bytes,
                "total_bytes": self.total_bytes,
            }
        )


# --- dependency bookkeeping over possibly-broken libraries --------------------


def library_dep_map(lib: Library) -> dict[str, tuple[str, ...]]:
    """Direct dependency ids per item, tolerating analysis diagnostics."""
    deps: dict[str, tuple[str, ...]] = {}
    for article in lib:
        report = analyze(article, lib)
        for name, ids in report.item_deps.items():
            deps[item_id(article.path, name)] = ids
    return deps


def _dependents_index(dep_map: dict[str, tuple[str, ...]]) -> dict[str, list[str]]:
    rdeps: dict[str, list[str]] = {iid: [] for iid in dep_map}
    for src, targets in dep_map.items():
        for dst in targets:
            rdeps.setdefault(dst, []).append(src)
    return rdeps


def _reach(seeds: Iterable[str], rdeps: dict[str, list[str]]) -> set[str]:
    """seeds plus everything that transitively depends on them."""
    out: set[str] = set()
    frontier = [s for s in seeds]
    while frontier:
        node = frontier.pop()
        if node in out:
            continue
        out.add(node)
        frontier.extend(rdeps.get(node, ()))
    return out


def effective_statuses(
    own: dict[str, str], dep_map: dict[str, tuple[str, ...]]
) -> dict[str, str]:
    """Collapse own statuses to ok/failed using transitive dependency failures."""
    rdeps = _dependents_index(dep_map)
    failed = _reach([iid for iid, st in own.items() if st == OWN_FAIL], rdeps)
    failed.update(iid for iid, st in own.items() if st == OWN_BLOCKED)
    return {iid: OWN_FAIL if iid in failed else OWN_OK for iid in own}


def _own_of(ok: bool, diags: tuple[Diagnostic, ...]) -> str:
    if ok:
        return OWN_OK
    if diags and all(d.code in _PROPAGATION_CODES for d in diags):
        return OWN_BLOCKED
    return OWN_FAIL


# --- the orchestrator itself ---------------------------------------------------


class Orchestrator:
    """One scheduler, per-owner FIFO queues, per-repo exclusive sandboxes."""

    def __init__(
        self,
        store: CowStore,
        vc: VcStore,
        *,
        workers: int = 4,
        verify_policy: Optional[VerifyPolicy] = None,
        cache: Optional[StageCache] = None,
        policy_gate: Optional[Callable[[RefUpdate, str], bool]] = None,
        post_update: Iterable[Callable[[RefUpdate], None]] = (),
        direct_impact_only: bool = False,
        delay: float = 0.0,
    ) -> None:
        self.store = store
        self.vc = vc
        self.workers = workers
        self.verify_policy = verify_policy or default_verify_policy()
        self.cache = cache if cache is not None else StageCache()
        self.policy_gate = policy_gate
        self.post_update = list(post_update)
        # Unsafe fast path: plan only direct dependents of a statement
        # change instead of the transitive closure.
        self.direct_impact_only = direct_impact_only
        self.delay = delay
        self._repos: dict[str, _RepoState] = {}
        self._jobs: dict[str, Job] = {}
        self._queues: dict[str, deque[str]] = {}
        self._owner_ring: deque[str] = deque()
        self._counter = 0
        self._lock = threading.RLock()
        self._cv = threading.Condition(self._lock)
        self._scheduler: Optional[threading.Thread] = None
        self._stopping = False

    # --- repo registry -----------------------------------------------------

    def attach_repo(self, repo: str, volume_id: str, *, verify: bool = False) -> None:
        with self._lock:
            self._repos[repo] = _RepoState(volume_id)
        if verify:
            self.seed_status(repo)

    def _repo_state(self, repo: str) -> _RepoState:
        with self._lock:
            state = self._repos.get(repo)
        if state is None:
            raise RepoNotAttached(repo)
        return state

    def backend_volume(self, repo: str) -> str:
        return self._repo_state(repo).volume

    def attached_repos(self) -> list[str]:
        with self._lock:
            return sorted(self._repos)

    def library(self, repo: str) -> Library:
        state = self._repo_state(repo)
        with self._lock:
            if state.library is None:
                state.library = load_library(self.store, state.volume)
            return state.library

    def seed_status(self, repo: str) -> dict[str, str]:
        """Full verification sweep of the backend; seeds the status map."""
        state = self._repo_state(repo)
        lib = self.library(repo)
        verifier = LibraryVerifier(lib, cache=self.cache, delay=self.delay)
        own: dict[str, str] = {}
        for iid in lib.item_ids():
            res = verifier.result(iid)
            own[iid] = _own_of(res.ok, res.diagnostics)
        with self._lock:
            state.own_status = own
        return own

    def status_map(self, repo: str) -> Optional[dict[str, str]]:
        """Effective ok/failed per item; None when never verified at Full."""
        state = self._repo_state(repo)
        with self._lock:
            own = dict(state.own_status) if state.own_status is not None else None
        if own is None:
            return None
        return effective_statuses(own, library_dep_map(self.library(repo)))

    def graph(self, repo: str) -> DepGraph:
        dep_map = library_dep_map(self.library(repo))
        edges = frozenset(
            (src, dst) for src, targets in dep_map.items() for dst in targets
        )
        return DepGraph(frozenset(dep_map), edges, ITEM_LEVEL)

    # --- queue operations -----------------------------------------------------

    def _new_job(self, **kwargs) -> Job:
        with self._lock:
            self._counter += 1
            job = Job(id=f"job-{self._counter:06d}", **kwargs)
            self._jobs[job.id] = job
            queue = self._queues.setdefault(job.owner, deque())
            queue.append(job.id)
            if job.owner not in self._owner_ring:
                self._owner_ring.append(job.owner)
            self._cv.notify_all()
            return job

    def enqueue_edit(
        self, owner: str, edit: DelimitedEdit, mode: Optional[Mode] = None
    ) -> Job:
        self._repo_state(edit.repo)
        effective = self._effective_mode(edit.repo, mode)
        return self._new_job(
            owner=owner, kind="edit", mode=effective, repo=edit.repo, edit=edit
        )

    def enqueue_push(
        self,
        owner: str,
        update: RefUpdate,
        bundle: bytes = b"",
        mode: Optional[Mode] = None,
        skip_verify: bool = False,
    ) -> Job:
        effective = self._effective_mode(update.repo, mode)
        return self._new_job(
            owner=owner,
            kind="push",
            mode=effective,
            repo=update.repo,
            update=update,
            bundle=bundle,
            skip_verify=skip_verify,
        )

    def _effective_mode(self, repo: str, requested: Optional[Mode]) -> Mode:
        required = self.verify_policy.required_mode(repo)
        if requested is None:
            return required
        return max(requested, required)

    def job(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise UnknownJob(job_id)
        return job

    def list_queue(self, owner: Optional[str] = None) -> list[Job]:
        with self._lock:
            jobs = [
                self._jobs[jid]
                for jid in sorted(self._jobs)
                if owner is None or self._jobs[jid].owner == owner
            ]
        return jobs

    def cancel(self, acting_user: str, job_id: str, *, superuser: bool = False) -> Job:
        job = self.job(job_id)
        if job.owner != acting_user and not superuser:
            raise NotOwner(f"{acting_user} does not own {job_id}")
        with self._lock:
            if job.state == QUEUED:
                self._set_state(job, CANCELLED)
                queue = self._queues.get(job.owner)
                if queue and job.id in queue:
                    queue.remove(job.id)
            elif job.state == RUNNING:
                job.cancel_event.set()
        return job

    def _set_state(self, job: Job, state: str) -> None:
        with self._lock:
            allowed = _TRANSITIONS.get(job.state, set())
            if state not in allowed:
                raise OrchestratorError(
                    f"bad transition {job.state} -> {state} for {job.id}"
                )
            job.state = state

    # --- scheduler ---------------------------------------------------------------

    def start(self) -> None:
        with self._lock:
            if self._scheduler is not None:
                return
            self._stopping = False
            self._scheduler = threading.Thread(
                target=self._scheduler_loop, name="orchestrator", daemon=True
            )
            self._scheduler.start()

    def stop(self) -> None:
        with self._lock:
            self._stopping = True
            thread = self._scheduler
            self._scheduler = None
            self._cv.notify_all()
        if thread is not None:
            thread.join()

    def _next_job(self) -> Optional[Job]:
        with self._lock:
            for _ in range(len(self._owner_ring)):
                owner = self._owner_ring[0]
                self._owner_ring.rotate(-1)
                queue = self._queues.get(owner)
                while queue:
                    job = self._jobs[queue.popleft()]
                    if job.state == QUEUED:
                        return job
            return None

    def _scheduler_loop(self) -> None:
        while True:
            with self._lock:
                while not self._stopping and not any(self._queues.values()):
                    self._cv.wait(timeout=0.2)
                if self._stopping:
                    return
            job = self._next_job()
            if job is not None:
                try:
                    self.run_job(job)
                except OrchestratorError:
                    pass

    def run_pending(self) -> list[Job]:
        """Synchronously drain the queue; returns jobs in execution order."""
        done: list[Job] = []
        while True:
            job = self._next_job()
            if job is None:
                return done
            done.append(self.run_job(job))

    # --- job execution --------------------------------------------------------------

    def run_job(self, job: Job) -> Job:
        state = self._repo_state(job.repo)
        if not state.sandbox_lock.acquire(blocking=False):
            raise SandboxBusy(job.repo)
        try:
            with self._lock:
                if job.state != QUEUED:
                    return job
                self._set_state(job, RUNNING)
                queue = self._queues.get(job.owner)
                if queue and job.id in queue:
                    queue.remove(job.id)
            try:
                self._execute(job, state)
            except _JobFailed as failure:
                with self._lock:
                    job.detail = failure.detail
                    job.diagnostics = failure.diagnostics
                    self._set_state(job, FAILED)
            except _Cancelled:
                with self._lock:
                    self._set_state(job, CANCELLED)
            return job
        finally:
            state.sandbox_lock.release()

    def _check_cancel(self, job: Job) -> None:
        if job.cancel_event.is_set():
            raise _Cancelled()

    def _execute(self, job: Job, state: _RepoState) -> None:
        base_volume = state.volume
        sandbox = self.store.snapshot(base_volume, f"sandbox/{job.repo}/{job.id}")
        promoted = False
        try:
            head_before = self._head(job.repo)
            if job.kind == "edit":
                assert job.edit is not None
                if job.edit.base is not None and job.edit.base != head_before:
                    raise _JobFailed(
                        f"stale base: expected {job.edit.base}, head is {head_before}"
                    )
                self._apply_edit(job.edit, sandbox)
            else:
                assert job.update is not None
                if job.bundle:
                    self.vc.apply_bundle(job.bundle)
                if job.update.new not in self.vc.objects:
                    raise _JobFailed(f"missing objects: {job.update.new}")
                self.vc.checkout_commit(job.update.new, self.store, sandbox)

            old_library = self.library(job.repo)
            outcome: Optional[VerifyOutcome] = None

            def verify_now() -> VerifyOutcome:
                nonlocal outcome
                outcome = self._verify_sandbox(job, state, old_library, sandbox)
                return outcome

            if job.kind == "push":
                self._land_push(job, verify_now)
            else:
                self._land_edit(job, head_before, sandbox, verify_now)
            assert outcome is not None

            with self._lock:
                state.volume = sandbox
                state.library = None
                state.own_status = outcome.own_status
                job.result_status = dict(outcome.effective)
                self._set_state(job, SUCCEEDED)
            promoted = True
        finally:
            if not promoted:
                self.store.discard(sandbox)

    def _head(self, repo: str) -> Optional[str]:
        r = self.vc.repo(repo)
        with r.lock:
            return r.refs.get(DEFAULT_BRANCH)

    def _apply_edit(self, edit: DelimitedEdit, sandbox: str) -> None:
        file_path = source_file(edit.article)
        try:
            source = self.store.read_file(sandbox, file_path).decode()
        except Exception as exc:
            raise _JobFailed(f"article {edit.article} not found: {exc}")
        try:
            article = parse_article(source, edit.article)
        except ParseError as exc:
            raise _JobFailed(
                "article does not parse before edit",
                (_diag_dict(Diagnostic("parse_error", str(edit.article), str(exc)), "parse"),),
            )
        old_item = article.item(edit.item)
        if old_item is None:
            raise _JobFailed(f"no item {edit.item!r} in {edit.article}")
        try:
            _, new_item = parse_item_snippet(edit.new_text)
        except ParseError as exc:
            iid = item_id(edit.article, edit.item)
            raise _JobFailed(
                "replacement text does not parse",
                (_diag_dict(Diagnostic("parse_error", iid, str(exc)), "parse"),),
            )
        if new_item.name != old_item.name and not edit.allow_rename:
            raise _JobFailed(
                f"edit renames {old_item.name!r} to {new_item.name!r} without allow_rename"
            )
        start, end = old_item.span.start, old_item.span.end
        patched = source[:start] + edit.new_text.strip() + source[end:]
        self.store.write_file(sandbox, file_path, patched.encode())

    def _land_push(self, job: Job, verify_now: Callable[[], VerifyOutcome]) -> None:
        assert job.update is not None

        def gate(update: RefUpdate) -> PushResult:
            try:
                outcome = verify_now()
            except _JobFailed as failure:
                return PushResult.rejected(
                    "verification_failed", failure.detail, failure.diagnostics
                )
            if not outcome.ok:
                return PushResult.rejected(
                    "verification_failed", "items failed", outcome.diagnostics
                )
            return PushResult.ok()

        result = self.vc.push(
            job.update,
            policy_gate=self.policy_gate,
            verify_gate=gate,
            post_update=self.post_update,
        )
        if not result.accepted:
            raise _JobFailed(
                f"{result.reason}: {result.detail}", tuple(result.diagnostics)
            )
        job.commit = job.update.new

    def _land_edit(
        self,
        job: Job,
        head_before: Optional[str],
        sandbox: str,
        verify_now: Callable[[], VerifyOutcome],
    ) -> None:
        outcome = verify_now()
        if not outcome.ok:
            raise _JobFailed("verification failed", outcome.diagnostics)
        repo = self.vc.repo(job.repo)
        commit = self.vc.commit_tree(
            job.repo,
            head_before,
            self.store,
            sandbox,
            job.owner,
            f"edit {job.edit.article}#{job.edit.item}" if job.edit else "edit",
        )
        with repo.lock:
            now = repo.refs.get(DEFAULT_BRANCH)
            if now != head_before:
                raise _JobFailed(f"head moved during job: {head_before} -> {now}")
            repo.refs[DEFAULT_BRANCH] = commit
        job.commit = commit
        update = RefUpdate(job.repo, DEFAULT_BRANCH, head_before, commit, job.owner)
        for hook in self.post_update:
            hook(update)

    # --- incremental verification ---------------------------------------------

    def _verify_sandbox(
        self, job: Job, state: _RepoState, old_library: Library, sandbox: str
    ) -> VerifyOutcome:
        try:
            new_library = load_library(self.store, sandbox)
        except ParseError as exc:
            raise _JobFailed(
                "parse failed",
                (_diag_dict(Diagnostic("parse_error", "?", str(exc)), "parse"),),
            )
        with self._lock:
            prev_own = dict(state.own_status) if state.own_status is not None else None

        if job.skip_verify or job.mode < Mode.MEDIUM:
            # Parse-only gate; the status map (if any) no longer describes
            # this tree, so drop it rather than let it go stale.
            return VerifyOutcome(True, (), (), (), (), 0, None, {})

        seeds, proof_only, removed, changed_articles = _diff_libraries(
            old_library, new_library
        )

        dep_map = library_dep_map(new_library)
        old_dep_map = library_dep_map(old_library)
        rdeps = _dependents_index(dep_map)
        old_rdeps = _dependents_index(old_dep_map)
        # Items that depended on anything changed or removed must re-check:
        # a kind change or removal can break their reference resolution,
        # which also deletes the very edge the new graph would propagate
        # along, so the old graph decides who gets seeded.
        for origin in list(seeds) + sorted(removed):
            for dependent in old_rdeps.get(origin, ()):
                if dependent in dep_map:
                    seeds.add(dependent)

        analyze_diags: list[dict] = []
        for article in new_library:
            report = analyze(article, new_library)
            if str(article.path) in changed_articles:
                analyze_diags.extend(
                    _diag_dict(d, "analyze") for d in report.diagnostics
                )
        if job.mode < Mode.FULL:
            if analyze_diags:
                raise _JobFailed("analysis failed", tuple(analyze_diags))
            return VerifyOutcome(
                True, (), tuple(sorted(seeds | proof_only)),
                tuple(sorted(seeds | proof_only)), (), 0, None, {},
            )

        if prev_own is None:
            # Never verified at Full before: sweep everything.
            seeds = set(dep_map)
            prev_own = {}

        if self.direct_impact_only:
            affected = set(seeds)
            for seed in seeds:
                affected.update(rdeps.get(seed, ()))
        else:
            affected = _reach(seeds, rdeps)
        plan_items = affected | proof_only
        schedule = self._schedule(dep_map, seeds, plan_items)

        verifier = LibraryVerifier(new_library, cache=self.cache, delay=self.delay)
        results = {}
        for batch in schedule:
            self._check_cancel(job)
            results.update(verifier.results_for(batch, workers=self.workers))

        # An item whose own check was skipped because a dependency had
        # failed gets re-checked once that dependency verifies again.
        newly_ok = {
            iid for iid, res in results.items() if res.ok and prev_own.get(iid) != OWN_OK
        }
        while newly_ok:
            extras = {
                dependent
                for iid in newly_ok
                for dependent in rdeps.get(iid, ())
                if prev_own.get(dependent) == OWN_BLOCKED and dependent not in results
            }
            if not extras:
                break
            self._check_cancel(job)
            fresh = verifier.results_for(sorted(extras), workers=self.workers)
            results.update(fresh)
            plan_items |= extras
            newly_ok = {iid for iid, res in fresh.items() if res.ok}

        own: dict[str, str] = {
            iid: prev_own[iid] for iid in dep_map if iid in prev_own
        }
        for iid, res in results.items():
            own[iid] = _own_of(res.ok, res.diagnostics)
        for iid in dep_map:
            own.setdefault(iid, OWN_OK)

        effective = effective_statuses(own, dep_map)
        diagnostics = list(analyze_diags)
        for iid in sorted(plan_items):
            res = results.get(iid)
            if res is not None and not res.ok:
                diagnostics.extend(_diag_dict(d, "verify") for d in res.diagnostics)
        failed_in_plan = [i for i in plan_items if effective.get(i) == OWN_FAIL]
        ok = not failed_in_plan and not analyze_diags

        with self._lock:
            job.plan_changed = tuple(sorted(seeds))
            job.plan_affected = tuple(sorted(plan_items))
            job.verified_items = tuple(sorted(results))
            job.recomputed = sum(1 for r in results.values() if not r.cached)
            job.result_status = dict(effective)
        return VerifyOutcome(
            ok,
            tuple(diagnostics),
            tuple(sorted(seeds)),
            tuple(sorted(plan_items)),
            tuple(sorted(results)),
            sum(1 for r in results.values() if not r.cached),
            own if ok else prev_own,
            effective,
        )

    def _schedule(
        self,
        dep_map: dict[str, tuple[str, ...]],
        seeds: set[str],
        plan_items: set[str],
    ) -> tuple[tuple[str, ...], ...]:
        extra = tuple(sorted(plan_items - _reach(seeds, _dependents_index(dep_map))))
        try:
            graph = DepGraph(
                frozenset(dep_map),
                frozenset((s, d) for s, ds in dep_map.items() for d in ds),
                ITEM_LEVEL,
            )
            batches = (
                recompilation_plan(graph, sorted(seeds)).schedule if seeds else ()
            )
        except CycleDetected:
            # Cyclic libraries cannot be scheduled in parallel batches;
            # verify one item at a time and let the verifier report cycles.
            batches = tuple((iid,) for iid in sorted(plan_items - set(extra)))
        if extra:
            batches = (extra,) + tuple(batches)
        return tuple(batches)

    # --- clone benchmarking -------------------------------------------------------

    def run_clone_bench(
        self, repo: str, n: int, article: ArticlePath, source: str
    ) -> BenchReport:
        """Snapshot the backend n times, add one article, verify, measure."""
        state = self._repo_state(repo)
        base_lib = self.library(repo)
        base_dep_map = library_dep_map(base_lib)
        # Warm the verify cache so per-clone cost is the clone's own work.
        self.seed_status(repo)
        file_path = source_file(article)

        total_seconds = 0.0
        data_delta = 0
        meta_delta = 0
        with self._lock:
            self._counter += 1
            tag = self._counter
        for i in range(n):
            before = self.store.usage()
            start = time.perf_counter()
            clone = self.store.snapshot(state.volume, f"clone/{repo}/{tag}/{i:06d}")
            text = f"{source}\ndef clone_tag := {i} + {tag % 97};\n"
            self.store.write_file(clone, file_path, text.encode())
            clone_lib = Library(dict(base_lib.articles))
            clone_lib.add(parse_article(text, article))
            verifier = LibraryVerifier(clone_lib, cache=self.cache, delay=self.delay)
            new_ids = [item_id(article, it.name) for it in clone_lib.article(article).items]
            for iid in new_ids:
                verifier.result(iid)
            dep_map = dict(base_dep_map)
            report = analyze(clone_lib.article(article), clone_lib)
            for name, ids in report.item_deps.items():
                dep_map[item_id(article, name)] = ids
            graph = DepGraph(
                frozenset(dep_map),
                frozenset((s, d) for s, ds in dep_map.items() for d in ds),
                ITEM_LEVEL,
            )
            build_indexes(clone_lib, graph)
            total_seconds += time.perf_counter() - start
            after = self.store.usage()
            data_delta += after.referenced_bytes - before.referenced_bytes
            meta_delta += after.metadata_bytes - before.metadata_bytes

        return BenchReport(
            n=n,
            avg_seconds=total_seconds / max(n, 1),
            data_bytes=data_delta // max(n, 1),
            metadata_bytes=meta_delta // max(n, 1),
        )


def _diff_libraries(
    old: Library, new: Library
) -> tuple[set[str], set[str], set[str], set[str]]:
    """(statement-change seeds, proof-only changes, removed ids, changed articles)."""
    seeds: set[str] = set()
    proof_only: set[str] = set()
    removed: set[str] = set()
    changed_articles: set[str] = set()
    old_paths = {str(a.path) for a in old.articles.values()}
    new_paths = {str(a.path) for a in new.articles.values()}

    for path in old_paths - new_paths:
        article = old.article(path)
        assert article is not None
        removed.update(article.item_ids())
        changed_articles.add(path)
    for path in new_paths:
        new_article = new.article(path)
        assert new_article is not None
        old_article = old.article(path)
        if old_article is None:
            seeds.update(new_article.item_ids())
            changed_articles.add(path)
            continue
        if old_article.source_text == new_article.source_text:
            continue
        changed_articles.add(path)
        if old_article.imports != new_article.imports:
            # Import changes can silently re-bind qualified references.
            seeds.update(new_article.item_ids())
            removed.update(
                item_id(old_article.path, it.name)
                for it in old_article.items
                if new_article.item(it.name) is None
            )
            continue
        old_names = {it.name for it in old_article.items}
        for it in new_article.items:
            iid = item_id(new_article.path, it.name)
            old_it = old_article.item(it.name)
            if old_it is None:
                seeds.add(iid)
                continue
            if old_it.text(old_article.source_text) == it.text(new_article.source_text):
                continue
            cls = classify_edit(
                old_it, old_article.source_text, it, new_article.source_text
            )
            if cls == PROOF_ONLY:
                proof_only.add(iid)
            else:
                seeds.add(iid)
        for it in old_article.items:
            if new_article.item(it.name) is None:
                removed.add(item_id(old_article.path, it.name))
    return seeds, proof_only, removed, changed_articles
