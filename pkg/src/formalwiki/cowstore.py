"""Copy-on-write volume store with content-addressed extents.

Volumes are overlays: each holds only a delta (path -> entry or tombstone)
plus a parent pointer, so snapshots are O(1) regardless of data size.  File
data lives in immutable extents addressed by content hash, which dedups
identical writes across volumes.  Accounting is exact: the store total is
the sum of unique live extent lengths plus per-volume metadata, where
metadata is a per-volume constant plus fixed per-file and per-write costs.

mtimes are logical (a store-wide monotonic counter), never wall clock.
"""

from __future__ import annotations

import hashlib
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Iterator, Optional

EXTENT_SIZE = 1 << 20  # 1 MiB
PER_FILE_META = 256  # bytes charged per path present in a volume's delta
PER_WRITE_META = 512  # bytes charged per delta-mutating operation
PER_VOLUME_META = 4096  # bytes charged per live volume


class CowStoreError(Exception):
    pass


class VolumeNotFound(CowStoreError):
    pass


class NameCollision(CowStoreError):
    pass


class HasChildren(CowStoreError):
    pass


class PathIsDirectory(CowStoreError):
    """The path names a directory, or a path component is a file."""


class PathMissing(CowStoreError):
    pass


@dataclass(frozen=True)
class ExtentRef:
    extent: str  # content hash
    offset: int
    length: int


@dataclass(frozen=True)
class FileEntry:
    extents: tuple[ExtentRef, ...]
    mtime: int
    size: int


_TOMBSTONE = None  # a delta value of None marks a deleted path


@dataclass
class Volume:
    id: str
    name: str
    parent: Optional[str]
    delta: dict = field(default_factory=dict)  # path -> FileEntry | None
    write_ops: int = 0
    live: bool = True

    def metadata_bytes(self) -> int:
        return (
            PER_VOLUME_META
            + PER_FILE_META * len(self.delta)
            + PER_WRITE_META * self.write_ops
        )


@dataclass(frozen=True)
class UsageReport:
    referenced_bytes: int
    exclusive_bytes: int
    metadata_bytes: int

    @property
    def total_bytes(self) -> int:
        return self.referenced_bytes + self.metadata_bytes


def _check_path(path: str) -> str:
    if not path or path.startswith("/") or path.endswith("/"):
        raise PathMissing(f"invalid path {path!r}")
    parts = path.split("/")
    if any(p in ("", ".", "..") for p in parts):
        raise PathMissing(f"invalid path {path!r}")
    return path


class CowStore:
    """In-process copy-on-write store; safe to share across threads."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._volumes: dict[str, Volume] = {}
        self._extents: dict[str, bytes] = {}
        self._refcounts: dict[str, int] = {}
        self._next_volume = 0
        self._clock = 0

    # --- volume lifecycle -------------------------------------------------

    def _new_id(self) -> str:
        vid = f"vol{self._next_volume:06d}"
        self._next_volume += 1
        return vid

    def _live(self, vol_id: str) -> Volume:
        vol = self._volumes.get(vol_id)
        if vol is None or not vol.live:
            raise VolumeNotFound(vol_id)
        return vol

    def _check_name(self, name: str) -> None:
        for vol in self._volumes.values():
            if vol.live and vol.name == name:
                raise NameCollision(name)

    def create_volume(self, name: str) -> str:
        with self._lock:
            self._check_name(name)
            vid = self._new_id()
            self._volumes[vid] = Volume(vid, name, None)
            return vid

    def snapshot(self, vol_id: str, name: str) -> str:
        """Writable clone sharing everything with vol_id; O(1)."""
        with self._lock:
            self._live(vol_id)
            self._check_name(name)
            vid = self._new_id()
            self._volumes[vid] = Volume(vid, name, vol_id)
            return vid

    def children(self, vol_id: str) -> list[str]:
        with self._lock:
            self._live(vol_id)
            return [
                v.id for v in self._volumes.values() if v.live and v.parent == vol_id
            ]

    def discard(self, vol_id: str) -> UsageReport:
        """Drop a leaf volume; returns what was freed (data + metadata)."""
        with self._lock:
            vol = self._live(vol_id)
            if self.children(vol_id):
                raise HasChildren(vol_id)
            freed_meta = vol.metadata_bytes()
            before = self._unique_extent_bytes()
            for entry in vol.delta.values():
                if entry is not _TOMBSTONE:
                    self._decref(entry)
            vol.live = False
            vol.delta = {}
            freed_data = before - self._unique_extent_bytes()
            return UsageReport(freed_data, freed_data, freed_meta)

    def find_volume(self, name: str) -> Optional[str]:
        with self._lock:
            for vol in self._volumes.values():
                if vol.live and vol.name == name:
                    return vol.id
            return None

    def volume_name(self, vol_id: str) -> str:
        with self._lock:
            return self._live(vol_id).name

    def rename_volume(self, vol_id: str, name: str) -> None:
        with self._lock:
            vol = self._live(vol_id)
            if vol.name != name:
                self._check_name(name)
                vol.name = name

    def live_volumes(self) -> list[str]:
        with self._lock:
            return sorted(v.id for v in self._volumes.values() if v.live)

    # --- extents ----------------------------------------------------------

    def _incref_data(self, data: bytes) -> ExtentRef:
        eid = hashlib.sha256(data).hexdigest()
        if eid not in self._extents:
            self._extents[eid] = data
        self._refcounts[eid] = self._refcounts.get(eid, 0) + 1
        return ExtentRef(eid, 0, len(data))

    def _incref_entry(self, entry: FileEntry) -> None:
        for ref in entry.extents:
            self._refcounts[ref.extent] += 1

    def _decref(self, entry: FileEntry) -> None:
        for ref in entry.extents:
            n = self._refcounts[ref.extent] - 1
            if n:
                self._refcounts[ref.extent] = n
            else:
                del self._refcounts[ref.extent]
                del self._extents[ref.extent]

    def _unique_extent_bytes(self) -> int:
        return sum(len(self._extents[eid]) for eid in self._refcounts)

    # --- file tree --------------------------------------------------------

    def _lookup(self, vol: Volume, path: str) -> Optional[FileEntry]:
        cur: Optional[Volume] = vol
        while cur is not None:
            if path in cur.delta:
                return cur.delta[path]
            cur = self._volumes.get(cur.parent) if cur.parent else None
        return None

    def _visible(self, vol: Volume) -> dict[str, FileEntry]:
        chain: list[Volume] = []
        cur: Optional[Volume] = vol
        while cur is not None:
            chain.append(cur)
            cur = self._volumes.get(cur.parent) if cur.parent else None
        tree: dict[str, FileEntry] = {}
        for layer in reversed(chain):
            for path, entry in layer.delta.items():
                if entry is _TOMBSTONE:
                    tree.pop(path, None)
                else:
                    tree[path] = entry
        return tree

    def _check_dir_conflicts(self, vol: Volume, path: str) -> None:
        tree = self._visible(vol)
        prefix = path + "/"
        if any(p.startswith(prefix) for p in tree):
            raise PathIsDirectory(f"{path} is a directory")
        parts = path.split("/")
        for i in range(1, len(parts)):
            ancestor = "/".join(parts[:i])
            if ancestor in tree:
                raise PathIsDirectory(f"{ancestor} is a file, not a directory")

    def write_file(self, vol_id: str, path: str, data: bytes) -> None:
        """Store data at path; never mutates extents shared with others."""
        _check_path(path)
        with self._lock:
            vol = self._live(vol_id)
            self._check_dir_conflicts(vol, path)
            refs = tuple(
                self._incref_data(data[i : i + EXTENT_SIZE])
                for i in range(0, len(data), EXTENT_SIZE)
            )
            self._clock += 1
            entry = FileEntry(refs, self._clock, len(data))
            old = vol.delta.get(path)
            if old is not None:
                self._decref(old)
            vol.delta[path] = entry
            vol.write_ops += 1

    def read_file(self, vol_id: str, path: str) -> bytes:
        _check_path(path)
        with self._lock:
            vol = self._live(vol_id)
            entry = self._lookup(vol, path)
            if entry is _TOMBSTONE or entry is None:
                tree = self._visible(vol)
                prefix = path + "/"
                if any(p.startswith(prefix) for p in tree):
                    raise PathIsDirectory(f"{path} is a directory")
                raise PathMissing(path)
            return b"".join(
                self._extents[r.extent][r.offset : r.offset + r.length]
                for r in entry.extents
            )

    def delete_file(self, vol_id: str, path: str) -> None:
        _check_path(path)
        with self._lock:
            vol = self._live(vol_id)
            entry = self._lookup(vol, path)
            if entry is _TOMBSTONE or entry is None:
                raise PathMissing(path)
            old = vol.delta.get(path)
            if old is not None:
                self._decref(old)
            if self._lookup_parent(vol, path) is None:
                vol.delta.pop(path, None)  # nothing underneath to mask
            else:
                vol.delta[path] = _TOMBSTONE
            vol.write_ops += 1

    def _lookup_parent(self, vol: Volume, path: str) -> Optional[FileEntry]:
        if vol.parent is None:
            return None
        parent = self._volumes.get(vol.parent)
        return self._lookup(parent, path) if parent else None

    def set_mtime(self, vol_id: str, path: str, t: Optional[int] = None) -> int:
        """Metadata-only touch: shares all extents, bumps the logical time."""
        _check_path(path)
        with self._lock:
            vol = self._live(vol_id)
            entry = self._lookup(vol, path)
            if entry is _TOMBSTONE or entry is None:
                raise PathMissing(path)
            if t is None:
                self._clock += 1
                t = self._clock
            else:
                self._clock = max(self._clock, t)
            if path not in vol.delta:
                self._incref_entry(entry)
            new_entry = FileEntry(entry.extents, t, entry.size)
            vol.delta[path] = new_entry
            vol.write_ops += 1
            return t

    def mtime(self, vol_id: str, path: str) -> int:
        _check_path(path)
        with self._lock:
            entry = self._lookup(self._live(vol_id), path)
            if entry is _TOMBSTONE or entry is None:
                raise PathMissing(path)
            return entry.mtime

    def list_files(self, vol_id: str) -> list[str]:
        with self._lock:
            return sorted(self._visible(self._live(vol_id)))

    def tree_digest(self, vol_id: str) -> str:
        """Deterministic hash of the visible tree: paths, bytes and mtimes."""
        with self._lock:
            tree = self._visible(self._live(vol_id))
            digest = hashlib.sha256()
            for path in sorted(tree):
                entry = tree[path]
                digest.update(path.encode())
                digest.update(b"\x00")
                digest.update(str(entry.mtime).encode())
                digest.update(b"\x00")
                for ref in entry.extents:
                    digest.update(ref.extent.encode())
                digest.update(b"\x01")
            return digest.hexdigest()

    def content_digest(self, vol_id: str) -> str:
        """Like tree_digest but ignoring mtimes (content identity only)."""
        with self._lock:
            tree = self._visible(self._live(vol_id))
            digest = hashlib.sha256()
            for path in sorted(tree):
                digest.update(path.encode())
                digest.update(b"\x00")
                for ref in tree[path].extents:
                    digest.update(ref.extent.encode())
                digest.update(b"\x01")
            return digest.hexdigest()

    # --- accounting -------------------------------------------------------

    def _view_extents(self, vol: Volume) -> set[str]:
        return {
            ref.extent
            for entry in self._visible(vol).values()
            for ref in entry.extents
        }

    def usage(self, vol_id: Optional[str] = None) -> UsageReport:
        """Space accounting for one volume, or the whole store.

        referenced: unique data bytes visible (store: all live extents);
        exclusive: data visible from this volume and no other live volume;
        metadata: this volume's (store: every volume's) metadata charge.
        """
        with self._lock:
            if vol_id is None:
                data = self._unique_extent_bytes()
                meta = sum(
                    v.metadata_bytes() for v in self._volumes.values() if v.live
                )
                return UsageReport(data, data, meta)
            vol = self._live(vol_id)
            mine = self._view_extents(vol)
            others: set[str] = set()
            for other in self._volumes.values():
                if other.live and other.id != vol_id:
                    others |= self._view_extents(other)
            exclusive = mine - others
            return UsageReport(
                sum(len(self._extents[e]) for e in mine),
                sum(len(self._extents[e]) for e in exclusive),
                vol.metadata_bytes(),
            )

    def recount(self) -> UsageReport:
        """Recompute refcounts from scratch and assert they match."""
        with self._lock:
            fresh: dict[str, int] = {}
            for vol in self._volumes.values():
                if not vol.live:
                    continue
                for entry in vol.delta.values():
                    if entry is _TOMBSTONE:
                        continue
                    for ref in entry.extents:
                        fresh[ref.extent] = fresh.get(ref.extent, 0) + 1
            if fresh != self._refcounts:
                raise CowStoreError("refcount drift detected")
            if set(fresh) != set(self._extents):
                raise CowStoreError("orphaned or missing extents")
            return self.usage()

    def copy_tree(self, src_id: str, dst_id: str) -> None:
        """Make dst's visible tree equal src's (used by promote-by-copy)."""
        with self._lock:
            src = self._live(src_id)
            self._live(dst_id)
            src_tree = self._visible(src)
            for path in self.list_files(dst_id):
                if path not in src_tree:
                    self.delete_file(dst_id, path)
            for path, entry in sorted(src_tree.items()):
                self.write_file(dst_id, path, self.read_file(src_id, path))
                self.set_mtime(dst_id, path, entry.mtime)


class PassthroughBackend:
    """Optional adapter driving a real snapshotting filesystem.

    Commands receive `snapshot <src> <dst>` / `discard <vol>` argv suffixes
    and must exit 0 on success.  This adapter is an interface contract; the
    in-process CowStore is the default backend everywhere.
    """

    def __init__(self, command: list[str]):
        self.command = list(command)

    def snapshot(self, src: str, dst: str) -> None:
        self._run("snapshot", src, dst)

    def discard(self, vol: str) -> None:
        self._run("discard", vol)

    def _run(self, *args: str) -> None:
        proc = subprocess.run(self.command + list(args), capture_output=True)
        if proc.returncode != 0:
            raise CowStoreError(
                f"passthrough {' '.join(args)} failed: {proc.stderr.decode(errors='replace')}"
            )
