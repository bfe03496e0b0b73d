"""
Content-addressed on-disk cache for volume results.

Keys are tuples of primitives (formula canonical text, prime, depth, ...);
records are JSON objects.  One file per key, written atomically.
"""

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

logger = logging.getLogger(__name__)

CACHE_ENV_VAR = 'PADIC_CACHE_DIR'
CACHE_VERSION = 1


def cache_key(key: Sequence[Any]) -> str:
    payload = json.dumps([CACHE_VERSION, list(key)], sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


class PointCache:
    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self._memory: Dict[str, Dict[str, Any]] = {}

    @classmethod
    def from_environment(cls, directory: Optional[str] = None) -> Optional['PointCache']:
        """Explicit directory, else $PADIC_CACHE_DIR, else no cache."""
        directory = directory or os.environ.get(CACHE_ENV_VAR)
        if not directory:
            return None
        logger.info(f"Using point cache at {directory}")
        return cls(directory)

    def _path(self, digest: str) -> Path:
        return self.directory / digest[:2] / f"{digest}.json"

    def get(self, key: Sequence[Any]) -> Optional[Dict[str, Any]]:
        digest = cache_key(key)
        record = self._memory.get(digest)
        if record is None:
            path = self._path(digest)
            if path.exists():
                try:
                    with open(path, 'r', encoding='utf-8') as f:
                        record = json.load(f)
                except (OSError, json.JSONDecodeError) as e:
                    logger.warning(f"Ignoring unreadable cache entry {path.name}: {e}")
                    record = None
            if record is not None:
                self._memory[digest] = record
        if record is None:
            self.misses += 1
        else:
            self.hits += 1
        return record

    def put(self, key: Sequence[Any], record: Dict[str, Any]) -> None:
        digest = cache_key(key)
        path = self._path(digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix='.tmp')
        try:
            with os.fdopen(fd, 'w', encoding='utf-8') as f:
                json.dump(record, f, sort_keys=True, indent=2)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self._memory[digest] = record
        logger.debug(f"cached {digest[:12]}")

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob('*/*.json'))
