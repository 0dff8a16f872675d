"""Dynamic framed slotted ALOHA with the per-slot Q adjustment rule.

As in EPC Gen2, once the rounded accumulator differs from the frame's Q the
reader cuts the frame short and re-issues it with the new Q (QueryAdjust).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

Q_MAX = 15


class SlotKind(str, Enum):
    IDLE = "idle"
    SUCCESS = "success"
    COLLISION = "collision"


@dataclass(frozen=True)
class SlotOutcome:
    kind: SlotKind
    responders: int


def classify_slot(responders: int) -> SlotOutcome:
    if responders < 0:
        raise ValueError("responders must be non-negative")
    if responders == 0:
        return SlotOutcome(SlotKind.IDLE, 0)
    if responders == 1:
        return SlotOutcome(SlotKind.SUCCESS, 1)
    return SlotOutcome(SlotKind.COLLISION, responders)


def adjust_q(q_fp: float, outcome: SlotOutcome, c: float = 0.3) -> float:
    if not 0.1 <= c <= 0.5:
        raise ValueError("step parameter must lie in [0.1, 0.5]")
    if outcome.kind is SlotKind.COLLISION:
        q_fp += c
    elif outcome.kind is SlotKind.IDLE:
        q_fp -= c
    return min(float(Q_MAX), max(0.0, q_fp))


def expected_success_fraction(n_tags: int, frame_size: int) -> float:
    """Probability that a given slot holds exactly one of ``n_tags`` uniform picks."""
    if frame_size < 1:
        raise ValueError("frame_size must be >= 1")
    if n_tags <= 0:
        return 0.0
    p = 1.0 / frame_size
    return n_tags * p * (1.0 - p) ** (n_tags - 1)


@dataclass
class FrameState:
    q_fp: float = 4.0
    q: int = 4
    slot_index: int = 0
    outcomes: list = field(default_factory=list)
    c: float = 0.3
    round_heard: bool = False  # any reply since the last fresh Query

    @property
    def frame_size(self) -> int:
        return 1 << self.q

    def start_frame(self, adjust: bool = False) -> int:
        """Fix Q for the next frame from the accumulator; returns the frame size.

        ``adjust`` marks a QueryAdjust, which continues the current inventory round.
        """
        self.q = min(Q_MAX, max(0, int(self.q_fp + 0.5)))
        self.slot_index = 0
        self.outcomes = []
        if not adjust:
            self.round_heard = False
        return self.frame_size

    def record(self, outcome: SlotOutcome) -> None:
        self.outcomes.append(outcome)
        self.q_fp = adjust_q(self.q_fp, outcome, self.c)
        self.slot_index += 1
        if outcome.kind is not SlotKind.IDLE:
            self.round_heard = True

    @property
    def adjust_due(self) -> bool:
        return min(Q_MAX, max(0, int(self.q_fp + 0.5))) != self.q

    @property
    def frame_done(self) -> bool:
        return self.slot_index >= self.frame_size or self.adjust_due

    @property
    def heard_any(self) -> bool:
        return any(o.kind is not SlotKind.IDLE for o in self.outcomes)


def simulate_frames(n_tags: int, q0: int, n_frames: int, rng, c: float = 0.3, remove_identified: bool = False):
    """Run a fixed tag population through ``n_frames`` adaptive frames.

    Returns ``(frame_sizes, first_identified)`` where ``first_identified[i]`` is
    the 1-based frame in which tag ``i`` was first a sole responder (0 if never).
    With ``remove_identified`` the identified tags stop answering.
    """
    state = FrameState(q_fp=float(q0), c=c)
    first = np.zeros(n_tags, dtype=int)
    sizes = []
    for frame in range(1, n_frames + 1):
        size = state.start_frame(adjust=frame > 1)
        sizes.append(size)
        active = np.flatnonzero(first == 0) if remove_identified else np.arange(n_tags)
        picks = rng.integers(0, size, active.size)
        counts = np.bincount(picks, minlength=size)
        for slot in range(size):
            if state.frame_done:
                break
            outcome = classify_slot(int(counts[slot]))
            state.record(outcome)
            if outcome.kind is SlotKind.SUCCESS:
                tag = active[picks == slot][0]
                if first[tag] == 0:
                    first[tag] = frame
    return sizes, first
