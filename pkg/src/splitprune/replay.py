"""Proportional prioritized replay over whole episodes.

A flat binary sum tree gives O(log n) priority updates and prefix-sum
sampling; the buffer itself evicts FIFO once full.  Stored priorities are
sampled from directly (the caller applies any exponentiation before
storing), so sampling frequency is exactly proportional to priority.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError


class SumTree:
    def __init__(self, capacity: int):
        if capacity <= 0:
            raise DomainError("capacity must be positive")
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity - 1)

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def value(self, idx: int) -> float:
        return float(self.nodes[idx + self.capacity - 1])

    def update(self, idx: int, value: float) -> None:
        if value < 0:
            raise DomainError(f"priority {value} must be non-negative")
        node = idx + self.capacity - 1
        change = value - self.nodes[node]
        self.nodes[node] = value
        while node > 0:
            node = (node - 1) // 2
            self.nodes[node] += change

    def find(self, prefix: float) -> int:
        """Index of the leaf where the running prefix sum first exceeds ``prefix``."""
        node = 0
        while 2 * node + 1 < len(self.nodes):
            left = 2 * node + 1
            if prefix <= self.nodes[left] or self.nodes[left + 1] == 0.0:
                node = left
            else:
                prefix -= self.nodes[left]
                node = left + 1
        return node - (self.capacity - 1)


class ReplayBuffer:
    def __init__(self, capacity: int):
        self.tree = SumTree(capacity)
        self.items: list = [None] * capacity
        self._write = 0
        self._size = 0
        self.max_priority = 1.0

    @property
    def capacity(self) -> int:
        return self.tree.capacity

    def __len__(self) -> int:
        return self._size

    def add(self, item, priority: float | None = None) -> int:
        """Insert at the FIFO write position; defaults to the running max priority."""
        if priority is None:
            priority = self.max_priority
        idx = self._write
        self.items[idx] = item
        self.tree.update(idx, priority)
        self.max_priority = max(self.max_priority, priority)
        self._write = (self._write + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        return idx

    def update_priority(self, idx: int, priority: float) -> None:
        if not 0 <= idx < self._size:
            raise DomainError(f"index {idx} outside buffer of size {self._size}")
        self.tree.update(idx, priority)
        self.max_priority = max(self.max_priority, priority)

    def sample(self, n: int, rng: np.random.Generator):
        """Draw ``n`` items with probability proportional to stored priority."""
        if self._size == 0:
            raise DomainError("cannot sample from an empty buffer")
        if self.tree.total <= 0:
            raise DomainError("all priorities are zero")
        indices = []
        for u in rng.uniform(0.0, self.tree.total, size=n):
            indices.append(self.tree.find(u))
        return indices, [self.items[i] for i in indices]
