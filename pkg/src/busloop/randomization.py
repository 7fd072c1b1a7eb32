"""Episode-level domain randomization: demand multipliers and departure delays.

Each episode draws one demand multiplier (a noisy pick from a small set of
demand levels, clipped back into their range) that scales every station's
passenger arrival rate, plus a fresh stream of per-departure delays. The
whole module can be switched off for ablations, in which case it behaves
exactly like it was never there: multiplier 1.0, zero delays, no rng use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_DEMAND_LEVELS = (1.25, 1.0, 0.75)


class RandomizationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DRConfig:
    """Randomization knobs; ``enabled=False`` yields identity draws."""

    enabled: bool = True
    demand_levels: tuple[float, ...] = DEFAULT_DEMAND_LEVELS
    demand_noise_sigma: float = 0.1   # Gaussian noise on the chosen level, multiplier units
    min_delay: int = 0                # departure delay bounds, whole seconds
    max_delay: int = 30

    def validate(self) -> "DRConfig":
        if not self.demand_levels:
            raise RandomizationConfigError("demand_levels must be non-empty")
        if any(not 0.0 <= l <= 2.0 for l in self.demand_levels):
            raise RandomizationConfigError("demand levels must lie in [0, 2]")
        if self.demand_noise_sigma < 0:
            raise RandomizationConfigError("demand_noise_sigma must be >= 0")
        if not 0 <= self.min_delay <= self.max_delay:
            raise RandomizationConfigError("need 0 <= min_delay <= max_delay")
        return self


@dataclass(frozen=True)
class DRDraw:
    """One episode's randomization: clipped demand multiplier + delay bounds."""

    demand_multiplier: float = 1.0
    min_delay: int = 0
    max_delay: int = 0
    enabled: bool = False


IDENTITY_DRAW = DRDraw()


def draw_episode(cfg: DRConfig, rng: np.random.Generator) -> DRDraw:
    """Draw one episode's demand multiplier; identity draw when disabled.

    A level is picked uniformly from ``cfg.demand_levels``, Gaussian noise
    with ``demand_noise_sigma`` is added, and the result is clipped back into
    [min(levels), max(levels)].
    """
    if not cfg.enabled:
        return IDENTITY_DRAW
    cfg.validate()
    level = cfg.demand_levels[int(rng.integers(len(cfg.demand_levels)))]
    if cfg.demand_noise_sigma > 0:
        level += rng.normal(0.0, cfg.demand_noise_sigma)
    level = float(np.clip(level, min(cfg.demand_levels), max(cfg.demand_levels)))
    return DRDraw(
        demand_multiplier=level,
        min_delay=cfg.min_delay,
        max_delay=cfg.max_delay,
        enabled=True,
    )


def departure_delay(draw: DRDraw, rng: np.random.Generator) -> int:
    """Uniform integer-second delay appended to a bus departure.

    Disabled draws return 0 without consuming randomness, which keeps
    DR-off trajectories bit-identical to a build without this module.
    """
    if not draw.enabled:
        return 0
    if draw.max_delay == 0:
        return 0
    return int(rng.integers(draw.min_delay, draw.max_delay + 1))
