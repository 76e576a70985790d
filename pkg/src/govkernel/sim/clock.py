"""Discrete-event clock: the only time source in a simulation."""

from __future__ import annotations

import heapq
from typing import Any, Callable


class SimClock:
    """Priority queue of callbacks keyed by (fire_at_ms, sequence_no).

    Ties fire in scheduling order, so a run is fully determined by the order of
    ``schedule`` calls.
    """

    def __init__(self, start_ms: int = 0):
        self.now_ms = start_ms
        self._seq = 0
        self._pending: list[tuple[int, int, Callable[..., Any], tuple]] = []

    @property
    def now(self) -> int:
        return self.now_ms

    def schedule(self, at_ms: int, fn: Callable[..., Any], *args: Any) -> int:
        if at_ms < self.now_ms:
            raise ValueError(f"cannot schedule in the past ({at_ms} < {self.now_ms})")
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._pending, (int(at_ms), seq, fn, args))
        return seq

    def after(self, delay_ms: int, fn: Callable[..., Any], *args: Any) -> int:
        return self.schedule(self.now_ms + delay_ms, fn, *args)

    def __len__(self) -> int:
        return len(self._pending)

    def peek(self) -> int | None:
        return self._pending[0][0] if self._pending else None

    def step(self) -> bool:
        if not self._pending:
            return False
        at, _seq, fn, args = heapq.heappop(self._pending)
        self.now_ms = at
        fn(*args)
        return True

    def run_until(self, end_ms: int) -> None:
        """Dispatch everything due at or before ``end_ms``, then park at ``end_ms``."""
        while self._pending and self._pending[0][0] <= end_ms:
            self.step()
        self.now_ms = max(self.now_ms, end_ms)

    def run(self, max_steps: int | None = None) -> int:
        n = 0
        while self._pending and (max_steps is None or n < max_steps):
            self.step()
            n += 1
        return n
