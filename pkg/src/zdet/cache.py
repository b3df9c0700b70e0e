"""On-disk result cache with checksummed, atomically replaced entries.

Entry layout: one header line ``zdet-cache/1 <sha256 of payload>`` followed
by the raw payload bytes.  A failed checksum counts as a miss and the entry
is removed so that the next ``put`` rewrites it.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .specio import canonical_json

__all__ = ["Cache", "cache_key"]

_MAGIC = b"zdet-cache/1"


def cache_key(*parts) -> str:
    """Content hash of (operator fingerprint, n, computation tag, ...)."""
    return hashlib.sha256(canonical_json(list(parts)).encode()).hexdigest()


class Cache:
    """Directory-backed cache; ``root=None`` disables it."""

    def __init__(self, root: str | os.PathLike | None):
        self.root: Path | None = None
        self.hits = 0
        self.misses = 0
        if root is None:
            return
        root = Path(root)
        try:
            root.mkdir(parents=True, exist_ok=True)
            probe = tempfile.NamedTemporaryFile(dir=root, prefix=".probe-", delete=True)
            probe.close()
        except OSError as e:
            warnings.warn(f"cache directory {root} is not writable ({e}); running uncached", RuntimeWarning,
                          stacklevel=2)
            return
        self.root = root

    @property
    def enabled(self) -> bool:
        return self.root is not None

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.bin"

    def get(self, key: str) -> bytes | None:
        if self.root is None:
            return None
        path = self._path(key)
        try:
            raw = path.read_bytes()
        except OSError:
            self.misses += 1
            return None
        head, sep, payload = raw.partition(b"\n")
        parts = head.split(b" ")
        ok = (sep and len(parts) == 2 and parts[0] == _MAGIC
              and parts[1].decode(errors="replace") == hashlib.sha256(payload).hexdigest())
        if not ok:
            try:
                path.unlink()
            except OSError:
                pass
            self.misses += 1
            return None
        self.hits += 1
        return payload

    def put(self, key: str, payload: bytes) -> None:
        if self.root is None:
            return
        path = self._path(key)
        data = _MAGIC + b" " + hashlib.sha256(payload).hexdigest().encode() + b"\n" + payload
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{key[:8]}-")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, path)
            except BaseException:
                try:
                    os.unlink(tmp)
                except OSError:
                    pass
                raise
        except OSError as e:
            warnings.warn(f"cache write failed ({e}); result not cached", RuntimeWarning, stacklevel=2)

    # typed helpers ---------------------------------------------------------

    def get_json(self, key: str):
        raw = self.get(key)
        return None if raw is None else json.loads(raw)

    def put_json(self, key: str, obj) -> None:
        self.put(key, canonical_json(obj).encode())

    def get_array(self, key: str) -> np.ndarray | None:
        raw = self.get(key)
        return None if raw is None else np.load(io.BytesIO(raw), allow_pickle=False)

    def put_array(self, key: str, arr: np.ndarray) -> None:
        buf = io.BytesIO()
        np.save(buf, np.asarray(arr), allow_pickle=False)
        self.put(key, buf.getvalue())

    def get_complex(self, key: str) -> complex | None:
        v = self.get_json(key)
        return None if v is None else complex(v[0], v[1])

    def put_complex(self, key: str, v: complex) -> None:
        self.put_json(key, [complex(v).real, complex(v).imag])
