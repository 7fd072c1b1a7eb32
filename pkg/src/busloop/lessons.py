"""Lesson parameters: action-space catalog, travel perturbations, bunched bus starts.

A lesson is the triple (S, alpha, beta) that a curriculum hands to the
environment for one training stage:

* ``S``       indexes a catalog of 15 legal-action combinations,
* ``alpha``   scales random travel-time perturbations (0 disables them),
* ``beta``    controls how bunched the buses start out (1 = one cluster,
              10 = spread over up to ten clusters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Discrete actions 0..13: 0-11 hold for 10*a seconds, 12 skip next stop,
# 13 turn around across the loop.
NUM_ACTIONS = 14
HOLD_ACTIONS = 12
SKIP_ACTION = 12
TURN_ACTION = 13

# Seconds per holding step; also the unit of one perturbation strength step.
HOLD_QUANTUM_S = 10

NUM_ACTION_SPACES = 15
PERTURBATION_LEVELS = 5      # alpha in 0..4
BUNCHING_LEVELS = 10         # beta in 1..10

# Probability per tick that some driving bus is perturbed.
PERTURBATION_PROB = 0.01


class LessonRangeError(ValueError):
    """A lesson component is outside its discrete range."""


@dataclass(frozen=True)
class Lesson:
    """One curriculum stage: action-space index, perturbation and bunching strength."""

    action_space: int       # S, 0..14
    perturbation: int       # alpha, 0..4
    bunching: int           # beta, 1..10

    def validate(self) -> "Lesson":
        if not 0 <= self.action_space < NUM_ACTION_SPACES:
            raise LessonRangeError(f"action_space {self.action_space} not in [0, 14]")
        if not 0 <= self.perturbation < PERTURBATION_LEVELS:
            raise LessonRangeError(f"perturbation {self.perturbation} not in [0, 4]")
        if not 1 <= self.bunching <= BUNCHING_LEVELS:
            raise LessonRangeError(f"bunching {self.bunching} not in [1, 10]")
        return self


# The 15 catalog entries: (max holding seconds, skipping allowed, turning allowed).
# Row order is part of the public contract; tests pin every row.
ACTION_SPACE_CATALOG: tuple[tuple[int, bool, bool], ...] = (
    (0, True, True),      # 0
    (0, True, False),     # 1
    (0, False, True),     # 2
    (40, True, False),    # 3
    (40, True, True),     # 4
    (40, False, False),   # 5
    (40, False, True),    # 6
    (80, True, False),    # 7
    (80, True, True),     # 8
    (80, False, False),   # 9
    (80, False, True),    # 10
    (120, True, False),   # 11
    (120, True, True),    # 12
    (120, False, False),  # 13
    (120, False, True),   # 14
)


def mask_for(action_space: int) -> np.ndarray:
    """Legal-action mask (14 bools) for catalog entry ``action_space``.

    Holding range 0 enables only action 0; 0-40 enables 0-4; 0-80 enables
    0-8; 0-120 enables 0-11. Bits 12/13 mirror the skip/turn flags.
    """
    if not 0 <= action_space < NUM_ACTION_SPACES:
        raise LessonRangeError(f"action_space {action_space} not in [0, 14]")
    hold_max, skip, turn = ACTION_SPACE_CATALOG[action_space]
    mask = np.zeros(NUM_ACTIONS, dtype=bool)
    mask[: hold_max // HOLD_QUANTUM_S + 1] = True
    mask[SKIP_ACTION] = skip
    mask[TURN_ACTION] = turn
    return mask


def mask_for_lesson(lesson: Lesson) -> np.ndarray:
    return mask_for(lesson.action_space)


def catalog_table() -> list[dict]:
    """Catalog as row dicts, for documentation exports and golden tests."""
    rows = []
    for idx, (hold_max, skip, turn) in enumerate(ACTION_SPACE_CATALOG):
        rows.append(
            {
                "index": idx,
                "holding": f"0-{hold_max}" if hold_max else "0",
                "skipping": skip,
                "turning": turn,
                "legal_actions": [int(a) for a in np.flatnonzero(mask_for(idx))],
            }
        )
    return rows


def maybe_perturb(state, alpha: int, rng: np.random.Generator) -> bool:
    """Roll the per-tick travel perturbation against ``state``; return trigger flag.

    With probability 0.01 one uniformly random driving bus has its remaining
    travel time extended by ``alpha`` holding quanta, i.e. alpha*10 seconds.
    The trigger roll happens regardless of alpha so that trigger statistics
    do not depend on it; alpha=0 turns a trigger into a no-op. Perturbations
    may stack on a bus that was already hit.

    ``state`` only needs ``buses`` (each with ``is_driving()`` and
    ``remaining_ticks``) and a ``perturb_events`` counter, so the sim-state
    class stays out of this module. The caller owns a dedicated rng stream
    for this so that alpha=0 runs are tick-identical to runs with
    perturbations disabled.
    """
    if rng.random() >= PERTURBATION_PROB:
        return False
    driving = [bus for bus in state.buses if bus.is_driving()]
    if not driving:
        return False
    state.perturb_events += 1
    bus = driving[int(rng.integers(len(driving)))]
    bus.remaining_ticks += alpha * HOLD_QUANTUM_S
    return True


# Dispersion of each start-station Gaussian, in station index units.
BUNCHING_GAUSSIAN_STD = 2.5


def initialize_buses(beta: int, num_stations: int, num_buses: int, rng: np.random.Generator) -> np.ndarray:
    """Draw bunched start stations for every bus.

    beta center stations are sampled uniformly with replacement; each gets a
    Gaussian with std 2.5 centered on its index. Every bus picks one of the
    beta Gaussians uniformly, samples a real position, rounds to the nearest
    integer and wraps modulo the loop. Low beta concentrates the fleet (one
    cluster at beta=1), high beta spreads it out in expectation.
    """
    if not 1 <= beta <= BUNCHING_LEVELS:
        raise LessonRangeError(f"bunching {beta} not in [1, 10]")
    centers = rng.integers(0, num_stations, size=beta)
    choices = rng.integers(0, beta, size=num_buses)
    draws = rng.normal(loc=centers[choices], scale=BUNCHING_GAUSSIAN_STD)
    return np.mod(np.rint(draws).astype(int), num_stations)


def circular_spread(stations: np.ndarray, num_stations: int) -> float:
    """1 - resultant length of the station angles; 0 = all buses co-located."""
    angles = 2.0 * np.pi * np.asarray(stations, dtype=float) / num_stations
    resultant = np.hypot(np.cos(angles).mean(), np.sin(angles).mean())
    return float(1.0 - resultant)
