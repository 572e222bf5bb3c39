"""Fixed-capacity experience replay with uniform sampling."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .domain import Transition, ValidationError

__all__ = ["ReplayBuffer", "TransitionBatch"]


@dataclass(frozen=True, eq=False)
class TransitionBatch:
    """Column-stacked minibatch; rows align across all five arrays."""

    states: np.ndarray        # (B, state_dim)
    actions: np.ndarray       # (B, action_dim), domain units
    rewards: np.ndarray       # (B,)
    next_states: np.ndarray   # (B, state_dim)
    dones: np.ndarray         # (B,) float 0/1

    def __len__(self) -> int:
        return self.states.shape[0]


class ReplayBuffer:
    """FIFO ring of transitions; sampling is uniform with replacement.

    With-replacement keeps every minibatch i.i.d. from the current buffer
    contents and stays well defined when len(buffer) is close to the batch
    size right after warmup.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValidationError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._store: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._store)

    def add(self, transition: Transition) -> None:
        self._store.append(transition)

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        if not self._store:
            raise ValidationError("cannot sample from an empty buffer")
        if batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
        idx = rng.integers(0, len(self._store), size=batch_size)
        rows = [self._store[i] for i in idx]
        return TransitionBatch(
            states=np.stack([t.state.vec for t in rows]),
            actions=np.stack([t.action.vec for t in rows]),
            rewards=np.array([t.reward for t in rows], dtype=np.float64),
            next_states=np.stack([t.next_state.vec for t in rows]),
            dones=np.array([1.0 if t.done else 0.0 for t in rows]),
        )
