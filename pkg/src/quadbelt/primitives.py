"""Contact primitives and the hand-designed high-level controllers.

A primitive assigns each foot (LF, RF, LR, RR) a stance (0) or swing (1)
role for one 0.4 s execution window.  Nine of the sixteen possible
configurations are used; the fixed gaits cycle through subsets of them and
the heuristic controller scores all nine against the current state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STANCE = 0
SWING = 1


@dataclass(frozen=True)
class Primitive:
    """One row of the contact-configuration table."""

    id: int
    name: str
    feet: tuple[bool, bool, bool, bool]  # True = swing

    @property
    def stance_mask(self) -> np.ndarray:
        return ~np.array(self.feet, dtype=bool)

    @property
    def swing_mask(self) -> np.ndarray:
        return np.array(self.feet, dtype=bool)

    def num_stance(self) -> int:
        return 4 - sum(self.feet)


_TABLE = (
    Primitive(0, "Stand", (False, False, False, False)),
    Primitive(1, "Trot1", (True, False, False, True)),
    Primitive(2, "Trot2", (False, True, True, False)),
    Primitive(3, "Pace1", (False, True, False, True)),
    Primitive(4, "Pace2", (True, False, True, False)),
    Primitive(5, "Step1", (True, False, False, False)),
    Primitive(6, "Step2", (False, True, False, False)),
    Primitive(7, "Step3", (False, False, True, False)),
    Primitive(8, "Step4", (False, False, False, True)),
)

STAND, TROT1, TROT2, PACE1, PACE2, STEP1, STEP2, STEP3, STEP4 = range(9)


def primitive_table() -> tuple[Primitive, ...]:
    """The canonical 9-primitive table, indexed by id."""
    return _TABLE


def primitive_by_id(pid: int) -> Primitive:
    if not 0 <= pid < len(_TABLE):
        raise ValueError(f"primitive id out of range: {pid}")
    return _TABLE[pid]


def primitive_by_name(name: str) -> Primitive:
    for p in _TABLE:
        if p.name.lower() == name.lower():
            return p
    raise ValueError(f"unknown primitive: {name}")


@dataclass
class GaitSchedule:
    """Cyclic sequence of primitive ids with a phase cursor."""

    sequence: list[int]
    phase: int = 0

    def __post_init__(self):
        if not self.sequence:
            raise ValueError("gait sequence must be non-empty")
        if not 0 <= self.phase < len(self.sequence):
            raise ValueError("phase out of range")


GAIT_SEQUENCES = {
    "standing": [STAND],
    "trotting": [TROT1, TROT2],
    "pacing": [PACE1, PACE2],
    "walking": [STEP1, STEP4, STEP2, STEP3],
}


def fixed_gait_next(schedule: GaitSchedule) -> Primitive:
    """Return the current primitive and advance the cursor cyclically."""
    p = _TABLE[schedule.sequence[schedule.phase]]
    schedule.phase = (schedule.phase + 1) % len(schedule.sequence)
    return p


def heuristic_q(qp_cost: float, foot_errors: np.ndarray, k_q: float) -> float:
    """Score one primitive: QP cost plus weighted residual foot error.

    ``foot_errors`` holds per-foot distances to the placement targets; the
    caller zeroes the entries for feet the candidate primitive would swing
    (those get corrected during execution).
    """
    return float(qp_cost) + float(k_q) * float(np.sum(foot_errors))


def heuristic_select(scores: np.ndarray, mode: str = "min") -> int:
    """Pick the extremal primitive id; ties break toward the lowest id."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (9,):
        raise ValueError("expected one score per primitive")
    if mode == "min":
        return int(np.argmin(scores))
    if mode == "max":
        return int(np.argmax(scores))
    raise ValueError(f"unknown selection mode: {mode}")
