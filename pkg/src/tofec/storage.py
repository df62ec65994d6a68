"""Range-addressable object stores: in-memory and local-directory backends.

Both expose whole-object put/get, byte-range reads and multipart writes, the
API shape needed to store one coded file per key and read chunks by range.
Concurrent writes to the same key are last-writer-wins.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import tempfile
import threading
import uuid
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Sequence

META_SUFFIX = ".meta.json"
_KEY_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class StorageError(Exception):
    pass


class ObjectNotFound(StorageError, KeyError):
    pass


class RangeError(StorageError, ValueError):
    pass


class MultipartError(StorageError, ValueError):
    pass


def _check_range(key: str, size: int, offset: int, length: int) -> None:
    if offset < 0 or length < 0 or offset + length > size:
        raise RangeError(f"range [{offset}, {offset + length}) outside object {key!r} of {size} bytes")


def _ordered_parts(upload_id: str, parts: dict[int, bytes], order: Sequence[int] | None) -> list[bytes]:
    numbers = sorted(parts) if order is None else list(order)
    if not numbers:
        raise MultipartError(f"upload {upload_id} has no parts")
    if sorted(numbers) != list(range(1, len(numbers) + 1)):
        missing = sorted(set(range(1, max(numbers) + 1)) - set(numbers))
        raise MultipartError(f"part numbers must run 1..{len(numbers)} without gaps; missing {missing}")
    absent = [n for n in numbers if n not in parts]
    if absent:
        raise MultipartError(f"parts {absent} were never uploaded to {upload_id}")
    # concatenation follows part numbers, whatever order they are listed in
    return [parts[n] for n in sorted(numbers)]


class ObjectStore(ABC):
    """Interface shared by the backends."""

    def __init__(self):
        self._lock = threading.Lock()
        self._uploads: dict[str, tuple[str, dict[int, bytes]]] = {}

    @abstractmethod
    def put(self, key: str, data: bytes) -> None: ...

    @abstractmethod
    def get(self, key: str) -> bytes: ...

    @abstractmethod
    def get_range(self, key: str, offset: int, length: int) -> bytes: ...

    @abstractmethod
    def delete(self, key: str) -> None: ...

    @abstractmethod
    def exists(self, key: str) -> bool: ...

    @abstractmethod
    def put_meta(self, key: str, meta: dict) -> None: ...

    @abstractmethod
    def get_meta(self, key: str) -> dict: ...

    def start_multipart(self, key: str) -> str:
        _check_key(key)
        upload_id = uuid.uuid4().hex
        with self._lock:
            self._uploads[upload_id] = (key, {})
        return upload_id

    def upload_part(self, upload_id: str, part_number: int, data: bytes) -> None:
        if part_number < 1:
            raise MultipartError("part numbers start at 1")
        with self._lock:
            if upload_id not in self._uploads:
                raise MultipartError(f"unknown upload {upload_id}")
            self._uploads[upload_id][1][part_number] = bytes(data)

    def complete_multipart(self, upload_id: str, part_numbers: Sequence[int] | None = None) -> None:
        """Store the concatenation of the parts; completing again is idempotent."""
        with self._lock:
            if upload_id not in self._uploads:
                raise MultipartError(f"unknown upload {upload_id}")
            key, parts = self._uploads[upload_id]
            data = b"".join(_ordered_parts(upload_id, parts, part_numbers))
        self.put(key, data)

    def abort_multipart(self, upload_id: str) -> None:
        with self._lock:
            self._uploads.pop(upload_id, None)


def multipart_write(store: ObjectStore, key: str, parts: Sequence[bytes]) -> None:
    """Upload `parts` as parts 1..P and merge them into one object."""
    if not parts:
        raise MultipartError("need at least one part")
    upload_id = store.start_multipart(key)
    for i, part in enumerate(parts, start=1):
        store.upload_part(upload_id, i, part)
    store.complete_multipart(upload_id)
    store.abort_multipart(upload_id)


def _check_key(key: str) -> None:
    if not _KEY_RE.match(key) or key.endswith(META_SUFFIX) or ".." in key:
        raise StorageError(f"invalid key {key!r}")


class MemoryStore(ObjectStore):
    def __init__(self):
        super().__init__()
        self._objects: dict[str, bytes] = {}
        self._meta: dict[str, dict] = {}

    def put(self, key: str, data: bytes) -> None:
        _check_key(key)
        with self._lock:
            self._objects[key] = bytes(data)

    def get(self, key: str) -> bytes:
        with self._lock:
            try:
                return self._objects[key]
            except KeyError:
                raise ObjectNotFound(key) from None

    def get_range(self, key: str, offset: int, length: int) -> bytes:
        data = self.get(key)
        _check_range(key, len(data), offset, length)
        return data[offset : offset + length]

    def delete(self, key: str) -> None:
        with self._lock:
            if key not in self._objects:
                raise ObjectNotFound(key)
            del self._objects[key]
            self._meta.pop(key, None)

    def exists(self, key: str) -> bool:
        with self._lock:
            return key in self._objects

    def put_meta(self, key: str, meta: dict) -> None:
        _check_key(key)
        with self._lock:
            self._meta[key] = json.loads(json.dumps(meta))

    def get_meta(self, key: str) -> dict:
        with self._lock:
            try:
                return json.loads(json.dumps(self._meta[key]))
            except KeyError:
                raise ObjectNotFound(f"{key}{META_SUFFIX}") from None


class DirectoryStore(ObjectStore):
    """One file per key under `root`, plus a ``<key>.meta.json`` sidecar."""

    def __init__(self, root: str | os.PathLike):
        super().__init__()
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        _check_key(key)
        return self.root / key

    def _write_atomic(self, path: Path, data: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def put(self, key: str, data: bytes) -> None:
        self._write_atomic(self._path(key), bytes(data))

    def get(self, key: str) -> bytes:
        try:
            return self._path(key).read_bytes()
        except FileNotFoundError:
            raise ObjectNotFound(key) from None

    def get_range(self, key: str, offset: int, length: int) -> bytes:
        path = self._path(key)
        try:
            with open(path, "rb") as fh:
                size = os.fstat(fh.fileno()).st_size
                _check_range(key, size, offset, length)
                fh.seek(offset)
                return fh.read(length)
        except FileNotFoundError:
            raise ObjectNotFound(key) from None

    def delete(self, key: str) -> None:
        path = self._path(key)
        try:
            path.unlink()
        except FileNotFoundError:
            raise ObjectNotFound(key) from None
        meta = self.root / f"{key}{META_SUFFIX}"
        if meta.exists():
            meta.unlink()

    def exists(self, key: str) -> bool:
        return self._path(key).is_file()

    def put_meta(self, key: str, meta: dict) -> None:
        self._path(key)
        payload = json.dumps(meta, indent=2, sort_keys=True).encode() + b"\n"
        self._write_atomic(self.root / f"{key}{META_SUFFIX}", payload)

    def get_meta(self, key: str) -> dict:
        self._path(key)
        try:
            return json.loads((self.root / f"{key}{META_SUFFIX}").read_text())
        except FileNotFoundError:
            raise ObjectNotFound(f"{key}{META_SUFFIX}") from None

    def clear(self) -> None:
        shutil.rmtree(self.root)
        self.root.mkdir(parents=True)
