"""Program cache keyed on (kind, query, scene signature).

The scene signature is the sorted tuple of object names, not poses, so
replans within a sub-task keep hitting the cache while objects move.
"""

from __future__ import annotations

import threading


def scene_names_signature(state) -> tuple[str, ...]:
    return tuple(sorted(o.name for o in state.objects))


class ProgramCache:
    def __init__(self):
        self._data: dict[tuple, str] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def key(self, kind, query: str, state) -> tuple:
        return (kind.value, query, scene_names_signature(state))

    def get(self, key) -> str | None:
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
            self.misses += 1
            return None

    def put(self, key, text: str) -> None:
        with self._lock:
            self._data[key] = text

    def __len__(self) -> int:
        return len(self._data)
