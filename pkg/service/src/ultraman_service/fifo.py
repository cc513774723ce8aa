"""Strict first-in-first-out admission for single-slot inference.

A plain lock makes no ordering promise under contention; this gate
hands out tickets and wakes waiters in arrival order, so concurrent
requests reach the model exactly as they arrived.
"""

from __future__ import annotations

import threading
from collections import deque
from contextlib import contextmanager


class FifoGate:
    def __init__(self) -> None:
        self._mutex = threading.Lock()
        self._queue: deque[threading.Event] = deque()
        self._busy = False

    def acquire(self) -> None:
        with self._mutex:
            if not self._busy and not self._queue:
                self._busy = True
                return
            ticket = threading.Event()
            self._queue.append(ticket)
        ticket.wait()

    def release(self) -> None:
        with self._mutex:
            if self._queue:
                self._queue.popleft().set()
            else:
                self._busy = False

    @contextmanager
    def turn(self):
        self.acquire()
        try:
            yield
        finally:
            self.release()
