"""Content-addressed version control: blobs, trees, commits, refs.

Object ids are SHA-256 over a canonical length-prefixed encoding, so equal
content means equal ids on every implementation.  Repositories map branch
names to commit ids; updates go through a fixed push pipeline (policy gate,
fast-forward check, verification gate, atomic compare-and-set, post-update
hooks) and a rejected push is observationally invisible.

Wire format: a JSON envelope {repo, branch, old, new, pusher, ...} plus a
bundle of length-prefixed encoded objects.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

from .cowstore import CowStore, PathMissing


class VcError(Exception):
    pass


class RepoNotFound(VcError):
    pass


class ParentUnknown(VcError):
    pass


class RefNotFound(VcError):
    pass


class CorruptObject(VcError):
    pass


DEFAULT_BRANCH = "master"


# --- canonical object encoding -------------------------------------------


def _frame(kind: str, payload: bytes) -> bytes:
    return f"{kind} {len(payload)}".encode() + b"\x00" + payload


def _unframe(data: bytes) -> tuple[str, bytes]:
    header, _, payload = data.partition(b"\x00")
    try:
        kind, size = header.decode().split(" ")
    except ValueError as exc:
        raise CorruptObject("bad object header") from exc
    if int(size) != len(payload):
        raise CorruptObject("length mismatch")
    return kind, payload


def encode_blob(data: bytes) -> bytes:
    return _frame("blob", data)


def encode_tree(entries: dict[str, tuple[str, str]]) -> bytes:
    """entries: name -> (kind 'blob'|'tree', object id); sorted by name."""
    payload = b"".join(
        f"{kind} {name}".encode() + b"\x00" + oid.encode()
        for name, (kind, oid) in sorted(entries.items())
    )
    return _frame("tree", payload)


def encode_commit(
    tree: str,
    parents: tuple[str, ...],
    author: str,
    message: str,
    logical_time: int,
) -> bytes:
    lines = [f"tree {tree}"]
    lines.extend(f"parent {p}" for p in parents)
    lines.append(f"author {author}")
    lines.append(f"time {logical_time}")
    lines.append("")
    lines.append(message)
    return _frame("commit", "\n".join(lines).encode())


def object_id(encoded: bytes) -> str:
    return hashlib.sha256(encoded).hexdigest()


def decode_tree(payload: bytes) -> dict[str, tuple[str, str]]:
    entries: dict[str, tuple[str, str]] = {}
    rest = payload
    while rest:
        head, _, rest = rest.partition(b"\x00")
        kind, name = head.decode().split(" ", 1)
        oid, rest = rest[:64].decode(), rest[64:]
        entries[name] = (kind, oid)
    return entries


@dataclass(frozen=True)
class Commit:
    tree: str
    parents: tuple[str, ...]
    author: str
    message: str
    logical_time: int


def decode_commit(payload: bytes) -> Commit:
    text = payload.decode()
    headers, _, message = text.partition("\n\n")
    tree = ""
    parents: list[str] = []
    author = ""
    logical_time = 0
    for line in headers.splitlines():
        key, _, value = line.partition(" ")
        if key == "tree":
            tree = value
        elif key == "parent":
            parents.append(value)
        elif key == "author":
            author = value
        elif key == "time":
            logical_time = int(value)
    return Commit(tree, tuple(parents), author, message, logical_time)


# --- object store ----------------------------------------------------------


class ObjectStore:
    """Append-only content-addressed map; ids verify on read."""

    def __init__(self) -> None:
        self._objects: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def put(self, encoded: bytes) -> str:
        oid = object_id(encoded)
        with self._lock:
            self._objects.setdefault(oid, encoded)
        return oid

    def get(self, oid: str) -> tuple[str, bytes]:
        with self._lock:
            encoded = self._objects.get(oid)
        if encoded is None:
            raise CorruptObject(f"missing object {oid}")
        if object_id(encoded) != oid:
            raise CorruptObject(f"object {oid} fails hash check")
        return _unframe(encoded)

    def raw(self, oid: str) -> bytes:
        with self._lock:
            encoded = self._objects.get(oid)
        if encoded is None:
            raise CorruptObject(f"missing object {oid}")
        return encoded

    def __contains__(self, oid: str) -> bool:
        with self._lock:
            return oid in self._objects

    def __len__(self) -> int:
        with self._lock:
            return len(self._objects)

    def ids(self) -> list[str]:
        with self._lock:
            return sorted(self._objects)

    def commit(self, oid: str) -> Commit:
        kind, payload = self.get(oid)
        if kind != "commit":
            raise CorruptObject(f"{oid} is a {kind}, not a commit")
        return decode_commit(payload)

    def tree(self, oid: str) -> dict[str, tuple[str, str]]:
        kind, payload = self.get(oid)
        if kind != "tree":
            raise CorruptObject(f"{oid} is a {kind}, not a tree")
        return decode_tree(payload)

    def blob(self, oid: str) -> bytes:
        kind, payload = self.get(oid)
        if kind != "blob":
            raise CorruptObject(f"{oid} is a {kind}, not a blob")
        return payload

    def is_ancestor(self, old: str, new: str) -> bool:
        """True iff old is reachable from new by parent traversal."""
        seen: set[str] = set()
        frontier = [new]
        while frontier:
            oid = frontier.pop()
            if oid == old:
                return True
            if oid in seen or oid not in self:
                continue
            seen.add(oid)
            frontier.extend(self.commit(oid).parents)
        return False

    def closure(self, commit_id: str, stop: Optional[set[str]] = None) -> list[str]:
        """Ids of everything reachable from commit_id (commits, trees, blobs)."""
        stop = stop or set()
        out: list[str] = []
        seen: set[str] = set()
        frontier = [commit_id]
        while frontier:
            oid = frontier.pop()
            if oid in seen or oid in stop:
                continue
            seen.add(oid)
            kind, payload = self.get(oid)
            out.append(oid)
            if kind == "commit":
                commit = decode_commit(payload)
                frontier.append(commit.tree)
                frontier.extend(commit.parents)
            elif kind == "tree":
                frontier.extend(oid2 for _, oid2 in decode_tree(payload).values())
        return out

    def flat_tree(self, tree_id: str, prefix: str = "") -> dict[str, str]:
        """path -> blob id for every file under a tree."""
        out: dict[str, str] = {}
        for name, (kind, oid) in self.tree(tree_id).items():
            path = f"{prefix}{name}"
            if kind == "tree":
                out.update(self.flat_tree(oid, path + "/"))
            else:
                out[path] = oid
        return out


# --- repositories -----------------------------------------------------------


@dataclass
class Repo:
    name: str
    creator: str
    refs: dict[str, str] = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False)


@dataclass(frozen=True)
class RefUpdate:
    repo: str
    branch: str
    old: Optional[str]
    new: str
    pusher: str


@dataclass(frozen=True)
class PushResult:
    accepted: bool
    reason: Optional[str] = None  # policy_denied | non_fast_forward |
    #                               verification_failed | stale_old
    detail: str = ""
    diagnostics: tuple = ()

    @classmethod
    def ok(cls) -> "PushResult":
        return cls(True)

    @classmethod
    def rejected(cls, reason: str, detail: str = "", diagnostics: tuple = ()) -> "PushResult":
        return cls(False, reason, detail, diagnostics)


class VcStore:
    """Object store plus named repositories and the push pipeline."""

    def __init__(self) -> None:
        self.objects = ObjectStore()
        self._repos: dict[str, Repo] = {}
        self._lock = threading.RLock()
        self._clock = 0

    # --- repo management --------------------------------------------------

    def add_repo(self, name: str, creator: str) -> Repo:
        with self._lock:
            if name in self._repos:
                raise VcError(f"repo {name} already exists")
            repo = Repo(name, creator)
            self._repos[name] = repo
            return repo

    def repo(self, name: str) -> Repo:
        with self._lock:
            repo = self._repos.get(name)
        if repo is None:
            raise RepoNotFound(name)
        return repo

    def has_repo(self, name: str) -> bool:
        with self._lock:
            return name in self._repos

    def repo_names(self) -> list[str]:
        with self._lock:
            return sorted(self._repos)

    def next_time(self) -> int:
        with self._lock:
            self._clock += 1
            return self._clock

    # --- building objects ---------------------------------------------------

    def put_tree_from_volume(self, store: CowStore, vol_id: str) -> str:
        """Store the volume's visible tree as nested tree objects."""
        files = store.list_files(vol_id)
        root: dict = {}
        for path in files:
            parts = path.split("/")
            node = root
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = store.read_file(vol_id, path)

        def build(node: dict) -> str:
            entries: dict[str, tuple[str, str]] = {}
            for name, child in node.items():
                if isinstance(child, dict):
                    entries[name] = ("tree", build(child))
                else:
                    entries[name] = ("blob", self.objects.put(encode_blob(child)))
            return self.objects.put(encode_tree(entries))

        return build(root)

    def commit_tree(
        self,
        repo_name: str,
        parent: Optional[str],
        store: CowStore,
        vol_id: str,
        author: str,
        message: str,
        logical_time: Optional[int] = None,
    ) -> str:
        """Commit a working volume's tree; identical trees share tree ids."""
        self.repo(repo_name)
        if parent is not None and parent not in self.objects:
            raise ParentUnknown(parent)
        tree_id = self.put_tree_from_volume(store, vol_id)
        if logical_time is None:
            logical_time = self.next_time()
        parents = (parent,) if parent else ()
        encoded = encode_commit(tree_id, tuple(p for p in parents if p), author, message, logical_time)
        return self.objects.put(encoded)

    def checkout(self, repo_name: str, branch: str, store: CowStore, vol_id: str) -> None:
        """Make the volume's tree equal the branch head's tree, byte-exactly.

        Diff-aware: unchanged paths are left untouched, so a checkout into
        a snapshot of the previous checkout allocates extents only for
        changed paths.
        """
        repo = self.repo(repo_name)
        with repo.lock:
            head = repo.refs.get(branch)
        if head is None:
            raise RefNotFound(f"{repo_name}:{branch}")
        self.checkout_commit(head, store, vol_id)

    def checkout_commit(self, commit_id: str, store: CowStore, vol_id: str) -> None:
        commit = self.objects.commit(commit_id)
        target = self.objects.flat_tree(commit.tree)
        current = set(store.list_files(vol_id))
        for path in sorted(current - set(target)):
            store.delete_file(vol_id, path)
        for path, blob_id in sorted(target.items()):
            data = self.objects.blob(blob_id)
            try:
                if store.read_file(vol_id, path) == data:
                    continue
            except PathMissing:
                pass
            store.write_file(vol_id, path, data)

    # --- wire format ----------------------------------------------------------

    def encode_bundle(self, ids: Iterable[str]) -> bytes:
        parts: list[bytes] = []
        for oid in ids:
            raw = self.objects.raw(oid)
            parts.append(struct.pack(">I", len(raw)))
            parts.append(raw)
        return b"".join(parts)

    def bundle_for(self, new: str, have: Optional[str] = None) -> bytes:
        stop: set[str] = set()
        if have is not None and have in self.objects:
            stop = set(self.objects.closure(have))
        return self.encode_bundle(self.objects.closure(new, stop=stop))

    def apply_bundle(self, data: bytes) -> list[str]:
        """Store every object in the bundle; returns ids in bundle order."""
        ids: list[str] = []
        view = memoryview(data)
        while view:
            if len(view) < 4:
                raise CorruptObject("truncated bundle")
            (size,) = struct.unpack(">I", view[:4])
            raw = bytes(view[4 : 4 + size])
            if len(raw) != size:
                raise CorruptObject("truncated bundle")
            _unframe(raw)  # validates framing
            ids.append(self.objects.put(raw))
            view = view[4 + size :]
        return ids

    # --- push pipeline ----------------------------------------------------------

    def push(
        self,
        update: RefUpdate,
        bundle: bytes = b"",
        *,
        policy_gate: Optional[Callable[[RefUpdate, str], bool]] = None,
        verify_gate: Optional[Callable[[RefUpdate], PushResult]] = None,
        post_update: Iterable[Callable[[RefUpdate], None]] = (),
    ) -> PushResult:
        """Fixed pipeline: policy, fast-forward, verification, CAS, hooks.

        policy_gate(update, action) answers Write/Rewind queries; the
        verification gate runs outside the ref critical section; the final
        compare-and-set revalidates update.old.  Any rejection leaves refs
        unchanged (stored bundle objects stay unreachable).
        """
        try:
            repo = self.repo(update.repo)
        except RepoNotFound:
            return PushResult.rejected("repo_not_found", update.repo)
        if bundle:
            self.apply_bundle(bundle)
        if update.new not in self.objects:
            return PushResult.rejected("missing_objects", update.new)

        # (1) policy: pushing at all requires Write.
        if policy_gate is not None and not policy_gate(update, "write"):
            return PushResult.rejected("policy_denied", "write denied")

        # (2) fast-forward check against the currently visible ref.
        with repo.lock:
            current = repo.refs.get(update.branch)
        if update.old is not None and current != update.old:
            return PushResult.rejected("stale_old", f"expected {update.old}, at {current}")
        base = update.old if update.old is not None else current
        fast_forward = base is None or self.objects.is_ancestor(base, update.new)
        if not fast_forward:
            if policy_gate is not None and not policy_gate(update, "rewind"):
                return PushResult.rejected("non_fast_forward", "rewind denied")

        # (3) verification gate, outside the critical section.
        if verify_gate is not None:
            verdict = verify_gate(update)
            if not verdict.accepted:
                return verdict

        # (4) atomic compare-and-set.
        with repo.lock:
            now = repo.refs.get(update.branch)
            if update.old is not None:
                if now != update.old:
                    return PushResult.rejected("stale_old", f"expected {update.old}, at {now}")
            elif now is not None and now != current:
                return PushResult.rejected("stale_old", f"ref moved to {now}")
            repo.refs[update.branch] = update.new

        # (5) post-update hooks (mirror fan-out, render rebuild, ...).
        for hook in post_update:
            hook(update)
        return PushResult.ok()


# --- push message framing ----------------------------------------------------


def encode_push_message(envelope: dict, bundle: bytes) -> bytes:
    header = json.dumps(envelope, sort_keys=True).encode()
    return struct.pack(">I", len(header)) + header + bundle


def decode_push_message(data: bytes) -> tuple[dict, bytes]:
    if len(data) < 4:
        raise CorruptObject("truncated push message")
    (size,) = struct.unpack(">I", data[:4])
    header = data[4 : 4 + size]
    if len(header) != size:
        raise CorruptObject("truncated push message")
    return json.loads(header.decode()), data[4 + size :]


def update_envelope(update: RefUpdate, **extra) -> dict:
    env = {
        "repo": update.repo,
        "branch": update.branch,
        "old": update.old,
        "new": update.new,
        "pusher": update.pusher,
    }
    env.update(extra)
    return env


def envelope_update(env: dict) -> RefUpdate:
    return RefUpdate(env["repo"], env["branch"], env.get("old"), env["new"], env["pusher"])
