"""Prioritized experience replay: sum tree + transition ring buffer.

Priorities are keyed by |TD error| + epsilon; the tree stores key**alpha so
a single descent samples proportionally to priority**alpha. New transitions
enter at the largest key seen so far, guaranteeing at least one replay.
"""

from __future__ import annotations

import numpy as np

from . import kernels as K


class SumTree:
    """Array-backed binary tree whose internal nodes hold partial sums."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity - 1)

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def set(self, data_idx: int, value: float) -> None:
        if value < 0 or not np.isfinite(value):
            raise ValueError(f"priority must be finite and >= 0, got {value}")
        K.sumtree_update(self.nodes, self.capacity, data_idx, value)

    def get(self, data_idx: int) -> float:
        return float(self.nodes[self.capacity - 1 + data_idx])

    def query(self, r: float) -> int:
        """Leaf index holding cumulative mass r, for r in [0, total)."""
        return int(K.sumtree_query(self.nodes, self.capacity, r))

    def query_batch(self, rs: np.ndarray) -> np.ndarray:
        out = np.empty(rs.shape[0], dtype=np.int64)
        K.sumtree_query_batch(self.nodes, self.capacity,
                              np.ascontiguousarray(rs, dtype=np.float64), out)
        return out

    def leaf_values(self, idx: np.ndarray) -> np.ndarray:
        return self.nodes[self.capacity - 1 + np.asarray(idx)]


class PrioritizedReplayBuffer:
    """Fixed-capacity ring of (s, a, r, s', done) with proportional sampling."""

    def __init__(self, capacity: int, state_dim: int, alpha: float = 0.6,
                 epsilon: float = 1e-6):
        self.capacity = capacity
        self.alpha = alpha
        self.epsilon = epsilon
        self.tree = SumTree(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity)
        self.pos = 0
        self.size = 0
        self.max_key = 1.0

    def __len__(self) -> int:
        return self.size

    def push(self, state, action, reward, next_state, done) -> None:
        i = self.pos
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = 1.0 if done else 0.0
        self.tree.set(i, self.max_key ** self.alpha)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator, beta: float):
        """Draw batch_size transitions proportionally to priority**alpha.

        Returns (indices, (s, a, r, s', done), importance weights); weights
        are (N * P(i))**-beta normalized by their maximum.
        """
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        total = self.tree.total
        rs = rng.random(batch_size) * total
        idx = self.tree.query_batch(rs)
        probs = self.tree.leaf_values(idx) / total
        weights = (self.size * probs) ** (-beta)
        weights /= weights.max()
        batch = (self.states[idx], self.actions[idx], self.rewards[idx],
                 self.next_states[idx], self.dones[idx])
        return idx, batch, weights

    def update_priorities(self, idx, td_errors) -> None:
        idx = np.ascontiguousarray(idx, dtype=np.int64)
        keys = np.abs(np.asarray(td_errors, dtype=np.float64)) + self.epsilon
        if not np.isfinite(keys).all():
            raise ValueError("priorities must be finite")
        K.sumtree_update_batch(self.tree.nodes, self.capacity, idx,
                               np.ascontiguousarray(keys ** self.alpha))
        self.max_key = max(self.max_key, float(keys.max()))
