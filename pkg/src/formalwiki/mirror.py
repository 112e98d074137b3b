"""Replication of accepted ref updates between peer wiki nodes.

Every accepted update on a public repository fans out to a fixed set of
peers over the version-control push wire format, extended with a header
naming the originating node.  A receiving node applies fast-forward
updates, ignores stale ones, and flags genuine divergence for a human
instead of overwriting either side.  Unreachable peers get their delivery
queued and retried with exponential backoff; a queued delivery is dropped
once the local ref has moved past it, because the newer delivery carries
everything the older one did.

Updates travel exactly one hop: a node never forwards what it received
from another mirror, so a fully meshed peer set converges without echo
storms.
"""

from __future__ import annotations

import json
import re
import threading
import time
import urllib.error
import urllib.request
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Protocol

from .minilib import Mode
from .policy import VerifyPolicy, default_verify_policy
from .vcstore import (
    CorruptObject,
    RefUpdate,
    VcStore,
    decode_push_message,
    encode_push_message,
    envelope_update,
    update_envelope,
)


class MirrorError(Exception):
    pass


class PeerUnreachable(MirrorError):
    """Transport-level delivery failure; the delivery stays queued."""

    def __init__(self, peer: str, detail: str = "") -> None:
        super().__init__(f"peer {peer} unreachable" + (f": {detail}" if detail else ""))
        self.peer = peer


class Diverged(MirrorError):
    """Local and incoming refs share no fast-forward relation.

    Stored as a flag on the receiving node; neither ref is overwritten.
    """

    def __init__(self, repo: str, branch: str, local: str, incoming: str) -> None:
        super().__init__(
            f"{repo}:{branch} diverged (local {local[:12]}, incoming {incoming[:12]})"
        )
        self.repo = repo
        self.branch = branch
        self.local = local
        self.incoming = incoming


DEFAULT_MIRROR_PATTERNS = ("main", "devel", r"release/.*", r"hotfix/.*")

# delivery / receive statuses
APPLIED = "applied"
NOOP = "noop"
SKIPPED = "skipped"
QUEUED = "queued"
UNREACHABLE = "unreachable"
SUPERSEDED = "superseded"
DIVERGED = "diverged"
REJECTED = "rejected"

_MAX_ATTEMPTS = 16


@dataclass(frozen=True)
class Peer:
    peer_id: str
    address: str


@dataclass(frozen=True)
class PeerConfig:
    """This node's identity, its peers, and which repos replicate.

    Repo names matching any of mirror_patterns (full match) fan out to
    every peer; everything else stays local.  A node never peers with
    itself.
    """

    self_id: str
    peers: tuple[Peer, ...]
    mirror_patterns: tuple[str, ...] = DEFAULT_MIRROR_PATTERNS

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for peer in self.peers:
            if peer.peer_id == self.self_id:
                raise MirrorError(f"node {self.self_id} cannot peer with itself")
            if peer.peer_id in seen:
                raise MirrorError(f"duplicate peer id {peer.peer_id}")
            seen.add(peer.peer_id)
        for pattern in self.mirror_patterns:
            try:
                re.compile(pattern)
            except re.error as exc:
                raise MirrorError(f"bad mirror pattern {pattern!r}: {exc}") from exc

    def mirrored(self, repo: str) -> bool:
        return any(re.fullmatch(p, repo) for p in self.mirror_patterns)

    def peer(self, peer_id: str) -> Optional[Peer]:
        for peer in self.peers:
            if peer.peer_id == peer_id:
                return peer
        return None


@dataclass(frozen=True)
class MirrorEvent:
    """One update travelling the mirror network; at most one hop."""

    origin: str
    update: RefUpdate
    hop: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.hop <= 1:
            raise MirrorError(f"relay forbidden: hop {self.hop} for {self.update.repo}")


@dataclass(frozen=True)
class DeliveryResult:
    peer: str
    status: str
    detail: str = ""


@dataclass(frozen=True)
class ReceiveResult:
    status: str
    detail: str = ""

    def to_json(self) -> dict:
        return {"status": self.status, "detail": self.detail}


@dataclass
class _Pending:
    peer: Peer
    event: MirrorEvent
    attempts: int = 0
    next_due: float = 0.0
    force_full: bool = False


class Transport(Protocol):
    def deliver(self, peer: Peer, payload: bytes) -> ReceiveResult: ...


class InProcessTransport:
    """Direct function-call delivery between mirrors in one process.

    fail_check, when set, is consulted with the target peer id before each
    delivery; returning True simulates an unreachable peer.
    """

    def __init__(self) -> None:
        self._nodes: dict[str, Mirror] = {}
        self.fail_check: Optional[Callable[[str], bool]] = None

    def register(self, peer_id: str, mirror: "Mirror") -> None:
        self._nodes[peer_id] = mirror

    def deliver(self, peer: Peer, payload: bytes) -> ReceiveResult:
        if self.fail_check is not None and self.fail_check(peer.peer_id):
            raise PeerUnreachable(peer.peer_id, "injected failure")
        node = self._nodes.get(peer.peer_id)
        if node is None:
            raise PeerUnreachable(peer.peer_id, "no such node")
        return node.receive(payload)


class HttpTransport:
    """POSTs each delivery to {peer address}/mirror/push."""

    def __init__(self, timeout: float = 10.0) -> None:
        self.timeout = timeout

    def deliver(self, peer: Peer, payload: bytes) -> ReceiveResult:
        request = urllib.request.Request(
            peer.address.rstrip("/") + "/mirror/push",
            data=payload,
            headers={"Content-Type": "application/octet-stream"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = json.loads(response.read().decode())
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise PeerUnreachable(peer.peer_id, str(exc)) from exc
        return ReceiveResult(body.get("status", REJECTED), body.get("detail", ""))


class Mirror:
    """Fan-out sender and receive endpoint for one wiki node.

    Wire a Mirror's on_post_update into the version store's post-update
    hooks; its receive() is the body of the node's mirror-push endpoint.
    The receiving side re-verifies through verify_gate unless the node
    trusts mirrors and the sender verified at Full.  on_applied hooks run
    after an update lands locally (for render or cache refresh); they must
    not fan out again, and receive() enforces that by remembering which
    updates arrived over the mirror network.
    """

    def __init__(
        self,
        config: PeerConfig,
        vc: VcStore,
        transport: Transport,
        *,
        verify_policy: Optional[VerifyPolicy] = None,
        verify_gate: Optional[Callable[[RefUpdate], tuple[bool, str]]] = None,
        trust_mirrors: bool = False,
        backoff_base: float = 0.5,
        on_applied: Iterable[Callable[[RefUpdate], None]] = (),
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.config = config
        self.vc = vc
        self.transport = transport
        self.verify_policy = verify_policy or default_verify_policy()
        self.verify_gate = verify_gate
        self.trust_mirrors = trust_mirrors
        self.backoff_base = backoff_base
        self.on_applied = tuple(on_applied)
        self.clock = clock
        self.divergences: dict[tuple[str, str], Diverged] = {}
        self._pending: dict[str, deque[_Pending]] = {
            peer.peer_id: deque() for peer in config.peers
        }
        self._peer_refs: dict[tuple[str, str, str], str] = {}
        self._received: set[tuple[str, str, str]] = set()
        self._lock = threading.RLock()
        self._flush_locks = {peer.peer_id: threading.Lock() for peer in config.peers}
        self._timer: Optional[threading.Thread] = None
        self._stop = threading.Event()

    # --- sending ------------------------------------------------------------

    def on_post_update(self, update: RefUpdate) -> list[DeliveryResult]:
        """Fan an accepted local update out to every peer.

        Returns one result per peer: applied/noop when the immediate
        attempt landed, skipped when the peer is known to have the commit
        already, unreachable/queued when it stays in the retry queue, and
        superseded/diverged/rejected as the receiving side reports.
        Non-mirrored repos and updates that themselves arrived over the
        mirror network produce no deliveries.
        """
        if not self.config.mirrored(update.repo):
            return []
        with self._lock:
            if (update.repo, update.branch, update.new) in self._received:
                return []  # one hop only: never relay a mirrored update
        event = MirrorEvent(self.config.self_id, update, hop=0)
        results: list[DeliveryResult] = []
        now = self.clock()
        for peer in self.config.peers:
            key = (peer.peer_id, update.repo, update.branch)
            with self._lock:
                if self._peer_refs.get(key) == update.new:
                    results.append(
                        DeliveryResult(peer.peer_id, SKIPPED, "peer already at target")
                    )
                    continue
                pending = self._enqueue_locked(peer, event, now)
            flushed = self._flush_peer(peer, now)
            mine = [r for p, r in flushed if p is pending]
            if mine:
                results.append(mine[0])
            else:
                results.append(
                    DeliveryResult(peer.peer_id, QUEUED, "behind earlier deliveries")
                )
        return results

    def _enqueue_locked(self, peer: Peer, event: MirrorEvent, now: float) -> _Pending:
        queue = self._pending[peer.peer_id]
        update = event.update
        stale = [
            p
            for p in queue
            if p.event.update.repo == update.repo
            and p.event.update.branch == update.branch
        ]
        for item in stale:
            queue.remove(item)  # superseded before ever leaving the queue
        pending = _Pending(peer, event, next_due=now)
        queue.append(pending)
        return pending

    def _flush_peer(
        self, peer: Peer, now: float, force: bool = False
    ) -> list[tuple[_Pending, DeliveryResult]]:
        """Deliver the peer's due queue head-first; stop at the first failure."""
        done: list[tuple[_Pending, DeliveryResult]] = []
        with self._flush_locks[peer.peer_id]:
            while True:
                with self._lock:
                    queue = self._pending[peer.peer_id]
                    if not queue:
                        return done
                    pending = queue[0]
                    if not force and pending.next_due > now:
                        return done
                result = self._attempt(pending, now)
                done.append((pending, result))
                with self._lock:
                    if result.status == UNREACHABLE:
                        return done  # keep order: later deliveries wait
                    if queue and queue[0] is pending:
                        queue.popleft()

    def _attempt(self, pending: _Pending, now: float) -> DeliveryResult:
        peer, update = pending.peer, pending.event.update
        key = (peer.peer_id, update.repo, update.branch)
        local = self.vc.repo(update.repo).refs.get(update.branch)
        if (
            local != update.new
            and local is not None
            and update.new in self.vc.objects
            and self.vc.objects.is_ancestor(update.new, local)
        ):
            return DeliveryResult(peer.peer_id, SUPERSEDED, "local ref moved past")
        with self._lock:
            have = None if pending.force_full else self._peer_refs.get(key, update.old)
        bundle = self.vc.bundle_for(update.new, have=have)
        trusted = self.verify_policy.required_mode(update.repo) >= Mode.FULL
        envelope = update_envelope(
            update, origin_peer=self.config.self_id, trusted=trusted, hop=1
        )
        payload = encode_push_message(envelope, bundle)
        try:
            received = self.transport.deliver(peer, payload)
        except PeerUnreachable as exc:
            pending.attempts += 1
            pending.next_due = now + self.backoff_base * 2 ** (pending.attempts - 1)
            return DeliveryResult(peer.peer_id, UNREACHABLE, str(exc))
        if received.status in (APPLIED, NOOP):
            with self._lock:
                self._peer_refs[key] = update.new
            return DeliveryResult(peer.peer_id, received.status, received.detail)
        if received.status == REJECTED and "missing_objects" in received.detail:
            if not pending.force_full and pending.attempts < _MAX_ATTEMPTS:
                pending.force_full = True  # resend with a self-contained bundle
                return self._attempt(pending, now)
        if received.status in (SUPERSEDED, DIVERGED):
            with self._lock:
                self._peer_refs.pop(key, None)
        return DeliveryResult(peer.peer_id, received.status, received.detail)

    def retry_pending(self, force: bool = False) -> int:
        """Retry queued deliveries in order; returns how many landed."""
        now = self.clock()
        delivered = 0
        for peer in self.config.peers:
            for _, result in self._flush_peer(peer, now, force=force):
                if result.status in (APPLIED, NOOP):
                    delivered += 1
        return delivered

    def pending_count(self) -> int:
        with self._lock:
            return sum(len(q) for q in self._pending.values())

    # --- receiving ------------------------------------------------------------

    def receive(self, payload: bytes) -> ReceiveResult:
        """Apply one mirror delivery: the node's mirror-push endpoint body."""
        try:
            envelope, bundle = decode_push_message(payload)
        except CorruptObject as exc:
            return ReceiveResult(REJECTED, f"corrupt delivery: {exc}")
        origin = envelope.get("origin_peer")
        if origin is None or self.config.peer(origin) is None:
            return ReceiveResult(REJECTED, f"unknown peer {origin!r}")
        hop = int(envelope.get("hop", 1))
        if hop > 1:
            return ReceiveResult(REJECTED, f"relay forbidden: hop {hop}")
        update = envelope_update(envelope)
        if not self.config.mirrored(update.repo):
            return ReceiveResult(REJECTED, f"{update.repo} is not mirrored here")
        if bundle:
            try:
                self.vc.apply_bundle(bundle)
            except CorruptObject as exc:
                return ReceiveResult(REJECTED, f"corrupt bundle: {exc}")
        if update.new not in self.vc.objects:
            return ReceiveResult(REJECTED, "missing_objects")
        if not self.vc.has_repo(update.repo):
            self.vc.add_repo(update.repo, creator=origin)
        repo = self.vc.repo(update.repo)
        with repo.lock:
            current = repo.refs.get(update.branch)
            if current == update.new:
                self._mark_received(update)
                return ReceiveResult(NOOP, "already at target")
            if current is not None:
                if self.vc.objects.is_ancestor(update.new, current):
                    return ReceiveResult(SUPERSEDED, "local ref is ahead")
                fast_forward = current == update.old or self.vc.objects.is_ancestor(
                    current, update.new
                )
                if not fast_forward:
                    flag = Diverged(update.repo, update.branch, current, update.new)
                    with self._lock:
                        self.divergences[(update.repo, update.branch)] = flag
                    return ReceiveResult(DIVERGED, str(flag))
            must_verify = not (self.trust_mirrors and bool(envelope.get("trusted")))
            if must_verify and self.verify_gate is not None:
                ok, detail = self.verify_gate(update)
                if not ok:
                    return ReceiveResult(REJECTED, f"verification_failed: {detail}")
            repo.refs[update.branch] = update.new
            self._mark_received(update)
        for hook in self.on_applied:
            hook(update)
        return ReceiveResult(APPLIED, "")

    def _mark_received(self, update: RefUpdate) -> None:
        with self._lock:
            self._received.add((update.repo, update.branch, update.new))

    # --- retry timer ------------------------------------------------------------

    def start(self, interval: float = 1.0) -> None:
        if self._timer is not None:
            return
        self._stop.clear()

        def loop() -> None:
            while not self._stop.wait(interval):
                self.retry_pending()

        self._timer = threading.Thread(target=loop, daemon=True, name="mirror-retry")
        self._timer.start()

    def stop(self) -> None:
        if self._timer is None:
            return
        self._stop.set()
        self._timer.join()
        self._timer = None
