"""Discrete-event simulation of a loop bus corridor.

The world is a simple loop of evenly spaced stations served by a fleet of
buses. Time advances in one-second ticks. Passengers arrive at stations as
Poisson processes, ride to destinations a few stops ahead, and accrue
waiting / on-bus seconds that feed the reward. Whenever a bus finishes its
dwell at a station it freezes the world and asks for a discrete action:
hold 0-110 s in 10 s steps, skip the next stop, or turn around across the
loop.

Conventions that keep runs reproducible:

* all randomness flows through named ``numpy`` Generator streams spawned
  from the episode seed (arrivals, boarding choice, long-wait leaving,
  perturbations, departure delays, bus placement), so switching one feature
  off never shifts the draws of another;
* within a tick, buses are processed in id order and simultaneous
  ready-to-depart buses are handed to the policy lowest id first;
* the sim halts (no time passes) while a decision is outstanding.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import yaml

from .lessons import (
    HOLD_QUANTUM_S,
    NUM_ACTIONS,
    SKIP_ACTION,
    TURN_ACTION,
    Lesson,
    initialize_buses,
    mask_for,
    maybe_perturb,
)
from .randomization import IDENTITY_DRAW, DRConfig, DRDraw, departure_delay

# Passenger statuses.
WAITING = 0
ON_BUS = 1
ALIGHTED_WAITING = 2
ARRIVED = 3
LEFT_LONG_WAIT = 4

# Transitions the simulation is ever allowed to produce.
ALLOWED_TRANSITIONS = {
    (WAITING, ON_BUS),
    (ON_BUS, ALIGHTED_WAITING),
    (ON_BUS, ARRIVED),
    (ALIGHTED_WAITING, ON_BUS),
    (WAITING, LEFT_LONG_WAIT),
}

# Bus phases.
UNRELEASED = "unreleased"
DRIVING = "driving"
DWELLING = "dwelling"
HOLDING = "holding"
AWAITING_DECISION = "awaiting_decision"


class EnvConfigError(ValueError):
    """Bad environment configuration value or file."""


class ContractViolation(RuntimeError):
    """The sim API was used outside its contract (illegal action, stale event...)."""


class InvariantViolation(AssertionError):
    """A per-tick world invariant failed (only raised with validate_invariants)."""


@dataclass(frozen=True)
class EnvConfig:
    """Static parameters of the corridor.

    Defaults describe a 10-station loop with 1 km spacing (60 s inter-station
    travel), 14 buses of capacity 60, and an arrival rate calibrated so the
    busiest buses peak around three quarters of capacity under the highest
    demand multiplier.
    """

    num_stations: int = 10
    num_buses: int = 14
    bus_capacity: int = 60
    station_spacing: float = 1000.0       # meters
    bus_speed: float = 1000.0 / 60.0      # meters/second
    base_arrival_rate: float = 0.2        # passengers/second/station
    board_time: float = 3.0               # seconds/passenger
    alight_time: float = 1.8              # seconds/passenger
    headway: int | None = None            # seconds; None = travel_time * m / n
    episode_length: int = 3600            # ticks
    reward_weight_wait: float = -1.0
    reward_weight_onbus: float = -1.0
    long_wait_leave_prob: float = 0.5
    seed: int = 0
    validate_invariants: bool = False     # per-tick conservation/capacity checks

    def validate(self) -> "EnvConfig":
        if self.num_stations < 2:
            raise EnvConfigError("num_stations must be >= 2")
        if self.num_buses < 1:
            raise EnvConfigError("num_buses must be >= 1")
        if self.bus_capacity < 1:
            raise EnvConfigError("bus_capacity must be >= 1")
        for name in ("station_spacing", "bus_speed", "board_time", "alight_time"):
            if getattr(self, name) <= 0:
                raise EnvConfigError(f"{name} must be > 0")
        if self.base_arrival_rate < 0:
            raise EnvConfigError("base_arrival_rate must be >= 0")
        if self.episode_length < 1:
            raise EnvConfigError("episode_length must be >= 1")
        if self.headway is not None and self.headway <= 0:
            raise EnvConfigError("headway must be > 0")
        if not 0.0 <= self.long_wait_leave_prob <= 1.0:
            raise EnvConfigError("long_wait_leave_prob must be in [0, 1]")
        if self.reward_weight_wait > 0 or self.reward_weight_onbus > 0:
            raise EnvConfigError("reward weights must be <= 0")
        return self

    @property
    def travel_ticks(self) -> int:
        """Whole seconds to drive between adjacent stations."""
        return max(1, round(self.station_spacing / self.bus_speed))

    @property
    def headway_s(self) -> int:
        if self.headway is not None:
            return self.headway
        return max(1, round(self.travel_ticks * self.num_stations / self.num_buses))

    @property
    def loop_length(self) -> float:
        return self.num_stations * self.station_spacing

    def destination_span(self, station: int) -> int:
        """How many stops ahead passengers from ``station`` may be headed.

        Passengers at station j (0-based) pick uniformly among the next
        floor((m - 1 - j) / 2) stops; the trailing stations of the loop
        therefore generate no passengers.
        """
        return (self.num_stations - 1 - station) // 2


@dataclass(slots=True)
class Passenger:
    id: int
    origin: int
    destination: int
    arrival_tick: int
    board_tick: int | None
    alight_tick: int | None
    status: int
    long_wait_checked: bool

    def set_status(self, new: int) -> None:
        if (self.status, new) not in ALLOWED_TRANSITIONS:
            raise InvariantViolation(f"illegal status transition {self.status} -> {new}")
        self.status = new


@dataclass
class Bus:
    id: int
    station: int                   # station it is at, or will arrive at next
    position: float                # meters along the loop
    phase: str = UNRELEASED
    remaining_ticks: int = 0       # countdown of the current phase
    position_step: float = 0.0     # meters moved per driving tick
    onboard: list = field(default_factory=list)
    pending_skip: bool = False     # skip decided at the previous station
    pending_turn: bool = False
    release_tick: int = 0

    def is_driving(self) -> bool:
        return self.phase == DRIVING

    @property
    def load(self) -> int:
        return len(self.onboard)


@dataclass(frozen=True)
class EpisodeSetup:
    """Normalized per-episode control parameters.

    Lessons, curriculum difficulty levels and the plain baseline all reduce
    to this: a legal-action mask, a perturbation strength (with a flag so
    alpha=0 lessons still roll their dedicated rng stream), and an optional
    bunching strength for the initial bus placement (None = everyone starts
    at station 0, released one headway apart).
    """

    mask: tuple[bool, ...]
    perturbation: int = 0
    perturb_active: bool = False
    bunching: int | None = None

    @classmethod
    def from_lesson(cls, lesson: Lesson) -> "EpisodeSetup":
        lesson.validate()
        return cls(
            mask=tuple(bool(b) for b in mask_for(lesson.action_space)),
            perturbation=lesson.perturbation,
            perturb_active=True,
            bunching=lesson.bunching,
        )

    @classmethod
    def baseline(cls) -> "EpisodeSetup":
        """Full action set, no perturbations, staggered same-station start."""
        return cls(mask=(True,) * NUM_ACTIONS)

    @classmethod
    def from_actions(cls, actions, perturbation: int = 0, bunching: int | None = None) -> "EpisodeSetup":
        mask = np.zeros(NUM_ACTIONS, dtype=bool)
        for a in actions:
            if not 0 <= int(a) < NUM_ACTIONS:
                raise EnvConfigError(f"action id {a} not in [0, 13]")
            mask[int(a)] = True
        if not mask.any():
            raise EnvConfigError("empty action set")
        return cls(
            mask=tuple(bool(b) for b in mask),
            perturbation=perturbation,
            perturb_active=True,
            bunching=bunching,
        )


def _normalize_setup(lesson) -> EpisodeSetup:
    if lesson is None:
        return EpisodeSetup.baseline()
    if isinstance(lesson, EpisodeSetup):
        return lesson
    if isinstance(lesson, Lesson):
        return EpisodeSetup.from_lesson(lesson)
    raise EnvConfigError(f"cannot interpret lesson of type {type(lesson).__name__}")


@dataclass(frozen=True)
class CounterSnapshot:
    """Cumulative counters plus instantaneous occupancy, taken at a decision."""

    wait_seconds: int
    onbus_seconds: int
    wait_entries: int
    board_events: int
    waiting_count: int
    onboard_count: int


@dataclass(frozen=True)
class DecisionEvent:
    bus_id: int
    station: int
    tick: int
    mask: np.ndarray
    observation: np.ndarray


@dataclass(frozen=True)
class EpisodeEnd:
    tick: int


class SimState:
    """Complete world state; mutated in place by the stepping functions."""

    def __init__(self, config: EnvConfig, setup: EpisodeSetup, dr: DRDraw, seed: int):
        self.config = config
        self.setup = setup
        self.dr = dr
        self.seed = seed
        self.tick = 0
        self.finished = False

        streams = np.random.SeedSequence(seed).spawn(6)
        self.rng_arrivals = np.random.Generator(np.random.PCG64(streams[0]))
        self.rng_board = np.random.Generator(np.random.PCG64(streams[1]))
        self.rng_leave = np.random.Generator(np.random.PCG64(streams[2]))
        self.rng_perturb = np.random.Generator(np.random.PCG64(streams[3]))
        self.rng_delay = np.random.Generator(np.random.PCG64(streams[4]))
        self.rng_init = np.random.Generator(np.random.PCG64(streams[5]))

        m = config.num_stations
        mult = dr.demand_multiplier
        self.arrival_rates = np.array(
            [config.base_arrival_rate * mult if config.destination_span(j) >= 1 else 0.0
             for j in range(m)]
        )

        self.queues: list[list[Passenger]] = [[] for _ in range(m)]
        self.leave_checks: list[deque] = [deque() for _ in range(m)]
        self.waiting_by_station = [0] * m
        self.headway = config.headway_s

        # Cumulative counters (all non-decreasing within an episode).
        self.wait_seconds = 0       # passenger-seconds spent waiting
        self.onbus_seconds = 0      # passenger-seconds spent riding
        self.wait_entries = 0       # queue entries: arrivals + forced re-entries
        self.board_events = 0       # boardings, re-boardings included
        self.generated = 0
        self.arrived = 0
        self.left = 0
        self.perturb_events = 0

        self.waiting_count = 0
        self.onboard_count = 0

        self.next_passenger_id = 0
        self.pending_decisions: list[int] = []
        self.open_decision: int | None = None

        if setup.bunching is None:
            headway = config.headway_s
            self.buses = [
                Bus(id=i, station=0, position=0.0, release_tick=i * headway)
                for i in range(config.num_buses)
            ]
        else:
            starts = initialize_buses(setup.bunching, m, config.num_buses, self.rng_init)
            self.buses = [
                Bus(id=i, station=int(s), position=float(s) * config.station_spacing)
                for i, s in enumerate(starts)
            ]

    def counters(self) -> CounterSnapshot:
        return CounterSnapshot(
            wait_seconds=self.wait_seconds,
            onbus_seconds=self.onbus_seconds,
            wait_entries=self.wait_entries,
            board_events=self.board_events,
            waiting_count=self.waiting_count,
            onboard_count=self.onboard_count,
        )

    def fingerprint(self) -> tuple:
        """Cheap digest of the dynamic state, for determinism tests."""
        return (
            self.tick,
            self.wait_seconds,
            self.onbus_seconds,
            self.wait_entries,
            self.board_events,
            self.generated,
            self.arrived,
            self.left,
            tuple(round(b.position, 6) for b in self.buses),
            tuple(b.load for b in self.buses),
            tuple(self.waiting_by_station),
        )


def reset(config: EnvConfig, lesson=None, dr: DRDraw = IDENTITY_DRAW, seed: int = 0) -> SimState:
    """Fresh episode state.

    ``lesson`` may be a :class:`Lesson`, an :class:`EpisodeSetup`, or None
    for the plain baseline (all actions legal, no perturbations, all buses
    starting at station 0 released one headway apart). With a bunching
    strength set, start stations come from the bunched-placement sampler on
    a stream derived from ``seed``.
    """
    config.validate()
    setup = _normalize_setup(lesson)
    return SimState(config, setup, dr, seed)


def _decision_mask(state: SimState, station: int) -> np.ndarray:
    """Lesson mask restricted by station legality; never empty.

    Turning is only allowed in the first half of the loop. If a curriculum
    mask ends up with no legal action at this station, action 0 (depart
    immediately) is re-enabled as the fallback no-op.
    """
    mask = np.array(state.setup.mask, dtype=bool)
    if station >= state.config.num_stations // 2:
        mask[TURN_ACTION] = False
    if not mask.any():
        mask[0] = True
    return mask


def observation_size(config: EnvConfig) -> int:
    return 4 * config.num_buses + config.num_stations + 1


def build_observation(state: SimState, bus_id: int) -> np.ndarray:
    """Global feature vector from the deciding bus's frame.

    Per bus (deciding bus first, the rest ordered by loop distance ahead of
    it): forward headway, backward headway, load and position, all
    normalized. Then per-station queue lengths rotated so the deciding
    bus's station comes first, and the episode clock.
    """
    cfg = state.config
    loop = cfg.loop_length
    buses = state.buses
    n = len(buses)
    positions = np.array([b.position for b in buses])

    order = np.argsort((positions - positions[bus_id]) % loop, kind="stable")
    order = np.concatenate(([bus_id], order[order != bus_id]))

    by_pos = np.argsort(positions, kind="stable")
    fwd = np.empty(n)
    bwd = np.empty(n)
    for rank, i in enumerate(by_pos):
        ahead = by_pos[(rank + 1) % n]
        behind = by_pos[(rank - 1) % n]
        fwd[i] = (positions[ahead] - positions[i]) % loop
        bwd[i] = (positions[i] - positions[behind]) % loop

    feats = np.empty(observation_size(cfg))
    k = 0
    for i in order:
        feats[k] = fwd[i] / loop
        feats[k + 1] = bwd[i] / loop
        feats[k + 2] = buses[i].load / cfg.bus_capacity
        feats[k + 3] = ((positions[i] - positions[bus_id]) % loop) / loop
        k += 4

    home = state.buses[bus_id].station
    for j in range(cfg.num_stations):
        feats[k] = state.waiting_by_station[(home + j) % cfg.num_stations] / cfg.bus_capacity
        k += 1
    feats[k] = state.tick / cfg.episode_length
    return feats


def _spawn_passengers(state: SimState) -> None:
    counts = state.rng_arrivals.poisson(state.arrival_rates)
    for j in np.flatnonzero(counts):
        k = int(counts[j])
        span = state.config.destination_span(j)
        dests = (j + 1 + state.rng_arrivals.integers(0, span, size=k)) % state.config.num_stations
        for d in dests:
            pax = Passenger(
                id=state.next_passenger_id,
                origin=int(j),
                destination=int(d),
                arrival_tick=state.tick,
                board_tick=None,
                alight_tick=None,
                status=WAITING,
                long_wait_checked=False,
            )
            state.next_passenger_id += 1
            state.queues[j].append(pax)
            state.leave_checks[j].append(pax)
        state.generated += k
        state.wait_entries += k
        state.waiting_count += k
        state.waiting_by_station[j] += k


def _long_wait_leaving(state: SimState) -> None:
    # A passenger gets exactly one leave roll, at the first tick their wait
    # exceeds the headway. Only never-boarded passengers may give up.
    threshold = state.tick - state.headway
    prob = state.config.long_wait_leave_prob
    for j, checks in enumerate(state.leave_checks):
        while checks and checks[0].arrival_tick < threshold:
            pax = checks.popleft()
            if pax.status != WAITING or pax.long_wait_checked:
                continue
            pax.long_wait_checked = True
            if state.rng_leave.random() < prob:
                pax.set_status(LEFT_LONG_WAIT)
                state.left += 1
                state.waiting_count -= 1
                state.waiting_by_station[j] -= 1


def _dwell_seconds(boarded: int, alighted: int, config: EnvConfig) -> float:
    """Boarding and alighting run concurrently; the longer one sets the dwell."""
    return max(boarded * config.board_time, alighted * config.alight_time)


def _alight_arrivals(state: SimState, bus: Bus, station: int) -> int:
    """Drop everyone whose destination is this station; returns the count."""
    staying = []
    alighted = 0
    for pax in bus.onboard:
        if pax.destination == station:
            pax.set_status(ARRIVED)
            pax.alight_tick = state.tick
            state.arrived += 1
            state.onboard_count -= 1
            alighted += 1
        else:
            staying.append(pax)
    bus.onboard[:] = staying
    return alighted


def _board_from_queue(state: SimState, station: int, buses: list[Bus]) -> dict[int, int]:
    """FIFO boarding of every waiting passenger, capacity permitting.

    When several buses arrive at the same tick each passenger picks
    uniformly among those with space left; single-bus arrivals never touch
    the rng. Stale queue entries (already boarded, arrived, or departed
    after a long wait) are dropped in passing.
    """
    cfg = state.config
    boarded = {bus.id: 0 for bus in buses}
    remaining: list[Passenger] = []
    open_buses = [b for b in buses if b.load < cfg.bus_capacity]
    for pax in state.queues[station]:
        if pax.status not in (WAITING, ALIGHTED_WAITING):
            continue
        if not open_buses:
            remaining.append(pax)
            continue
        if len(open_buses) == 1:
            bus = open_buses[0]
        else:
            bus = open_buses[int(state.rng_board.integers(len(open_buses)))]
        pax.set_status(ON_BUS)
        pax.board_tick = state.tick
        bus.onboard.append(pax)
        boarded[bus.id] += 1
        state.board_events += 1
        state.onboard_count += 1
        state.waiting_count -= 1
        state.waiting_by_station[station] -= 1
        if bus.load >= cfg.bus_capacity:
            open_buses = [b for b in open_buses if b.load < cfg.bus_capacity]
    state.queues[station][:] = remaining
    return boarded


def boarding_alighting(state: SimState, bus: Bus, station: int) -> float:
    """Resolve one bus's stop at ``station``; returns the dwell in seconds.

    Alights every onboard passenger destined here, then boards the waiting
    queue FIFO up to capacity. The dwell is the longer of the two concurrent
    processes, boarded*board_time vs alighted*alight_time.
    """
    alighted = _alight_arrivals(state, bus, station)
    boarded = _board_from_queue(state, station, [bus])[bus.id]
    return _dwell_seconds(boarded, alighted, state.config)


def _process_station_arrivals(state: SimState, station: int, buses: list[Bus]) -> None:
    buses = sorted(buses, key=lambda b: b.id)
    alighted = {bus.id: _alight_arrivals(state, bus, station) for bus in buses}
    boarded = _board_from_queue(state, station, buses)
    for bus in buses:
        dwell = math.ceil(_dwell_seconds(boarded[bus.id], alighted[bus.id], state.config))
        bus.station = station
        bus.position = station * state.config.station_spacing
        if dwell > 0:
            bus.phase = DWELLING
            bus.remaining_ticks = dwell
        else:
            bus.phase = AWAITING_DECISION
            state.pending_decisions.append(bus.id)


def _force_alight(state: SimState, bus: Bus, station: int, doomed_destinations: set[int]) -> int:
    """Push affected riders back into this station's queue as re-waiters.

    They keep their original arrival tick (their wait clock never reset) and
    destination, and rejoin the back of the queue.
    """
    staying = []
    dropped = 0
    for pax in bus.onboard:
        if pax.destination in doomed_destinations:
            pax.set_status(ALIGHTED_WAITING)
            state.queues[station].append(pax)
            state.onboard_count -= 1
            state.waiting_count += 1
            state.waiting_by_station[station] += 1
            state.wait_entries += 1
            dropped += 1
        else:
            staying.append(pax)
    bus.onboard[:] = staying
    return dropped


def _depart(state: SimState, bus: Bus) -> None:
    """Send the bus on its way; where to depends on pending skip/turn flags."""
    cfg = state.config
    origin = bus.station
    if bus.pending_turn:
        bus.pending_turn = False
        target = (origin + cfg.num_stations // 2) % cfg.num_stations
        hops = cfg.num_stations // 2
        ticks = cfg.travel_ticks
    elif bus.pending_skip:
        bus.pending_skip = False
        target = (origin + 2) % cfg.num_stations
        hops = 2
        ticks = 2 * cfg.travel_ticks
    else:
        target = (origin + 1) % cfg.num_stations
        hops = 1
        ticks = cfg.travel_ticks
    bus.station = target
    bus.phase = DRIVING
    bus.remaining_ticks = ticks
    bus.position_step = hops * cfg.station_spacing / ticks


def _validate_tick(state: SimState) -> None:
    cfg = state.config
    in_world = state.waiting_count + state.onboard_count + state.arrived + state.left
    if in_world != state.generated:
        raise InvariantViolation(
            f"conservation broken at tick {state.tick}: {in_world} != {state.generated}"
        )
    for bus in state.buses:
        if bus.load > cfg.bus_capacity:
            raise InvariantViolation(f"bus {bus.id} over capacity at tick {state.tick}")
        if not 0.0 <= bus.position < cfg.loop_length + 1e-9:
            raise InvariantViolation(f"bus {bus.id} position {bus.position} off the loop")


def _advance_tick(state: SimState) -> None:
    cfg = state.config
    _spawn_passengers(state)
    _long_wait_leaving(state)
    if state.setup.perturb_active:
        maybe_perturb(state, state.setup.perturbation, state.rng_perturb)

    arrivals: dict[int, list[Bus]] = {}
    for bus in state.buses:
        if bus.phase == DRIVING:
            bus.remaining_ticks -= 1
            if bus.remaining_ticks <= 0:
                arrivals.setdefault(bus.station, []).append(bus)
            else:
                bus.position = (bus.position + bus.position_step) % cfg.loop_length
        elif bus.phase == DWELLING or bus.phase == HOLDING:
            bus.remaining_ticks -= 1
            if bus.remaining_ticks <= 0:
                if bus.phase == DWELLING:
                    bus.phase = AWAITING_DECISION
                    state.pending_decisions.append(bus.id)
                else:
                    _depart(state, bus)
        elif bus.phase == UNRELEASED:
            if state.tick >= bus.release_tick:
                arrivals.setdefault(bus.station, []).append(bus)

    for station in sorted(arrivals):
        _process_station_arrivals(state, station, arrivals[station])

    state.wait_seconds += state.waiting_count
    state.onbus_seconds += state.onboard_count
    state.tick += 1
    if cfg.validate_invariants:
        _validate_tick(state)


def step_until_decision(state: SimState):
    """Advance time until a bus is ready to depart; returns (state, event).

    The event is a :class:`DecisionEvent` for the lowest-id ready bus, or
    :class:`EpisodeEnd` once the episode clock runs out. Time never advances
    while a decision is outstanding.
    """
    if state.finished:
        raise ContractViolation("episode already ended")
    if state.open_decision is not None:
        raise ContractViolation(
            f"decision for bus {state.open_decision} has not been applied"
        )
    while True:
        if state.pending_decisions:
            state.pending_decisions.sort()
            bus_id = state.pending_decisions.pop(0)
            state.open_decision = bus_id
            event = DecisionEvent(
                bus_id=bus_id,
                station=state.buses[bus_id].station,
                tick=state.tick,
                mask=_decision_mask(state, state.buses[bus_id].station),
                observation=build_observation(state, bus_id),
            )
            return state, event
        if state.tick >= state.config.episode_length:
            state.finished = True
            return state, EpisodeEnd(tick=state.tick)
        _advance_tick(state)


def apply_action(state: SimState, event: DecisionEvent, action: int) -> SimState:
    """Commit the policy's choice for an outstanding decision event.

    Actions 0-11 hold the bus action*10 seconds past its dwell; 12 skips the
    next station after force-alighting the passengers bound for it; 13
    force-alights everyone bound for the next half loop and relocates the
    bus to the diametrically opposite station in one inter-station travel
    time. Every departure additionally picks up the episode's random
    departure delay, when domain randomization is on.
    """
    if state.finished:
        raise ContractViolation("episode already ended")
    if state.open_decision != event.bus_id:
        raise ContractViolation("event does not match the outstanding decision")
    if not 0 <= action < NUM_ACTIONS or not event.mask[action]:
        raise ContractViolation(f"action {action} is masked at this decision")

    bus = state.buses[event.bus_id]
    if bus.phase != AWAITING_DECISION:
        raise ContractViolation(f"bus {bus.id} is not awaiting a decision")
    state.open_decision = None

    cfg = state.config
    station = bus.station
    delay = departure_delay(state.dr, state.rng_delay)

    if action == SKIP_ACTION:
        _force_alight(state, bus, station, {(station + 1) % cfg.num_stations})
        bus.pending_skip = True
        hold = delay
    elif action == TURN_ACTION:
        arc = {(station + k) % cfg.num_stations for k in range(1, cfg.num_stations // 2 + 1)}
        _force_alight(state, bus, station, arc)
        bus.pending_turn = True
        hold = delay
    else:
        hold = action * HOLD_QUANTUM_S + delay

    if hold > 0:
        bus.phase = HOLDING
        bus.remaining_ticks = hold
    else:
        _depart(state, bus)
    return state


def compute_reward(before, after) -> float:
    """Average delay accrued between two decision snapshots, negatively weighted.

    Wait and on-bus seconds accrued over the interval are divided by the
    distinct passengers who waited / rode during it (floored at 1), then
    weighted by the configured non-positive weights, so less delay means a
    larger (less negative) reward. ``before`` may be a counter snapshot or a
    copied state; ``after`` must be the live state.
    """
    cfg = after.config
    d_wait = after.wait_seconds - before.wait_seconds
    d_onbus = after.onbus_seconds - before.onbus_seconds
    n_wait = before.waiting_count + (after.wait_entries - before.wait_entries)
    n_onbus = before.onboard_count + (after.board_events - before.board_events)
    return (
        cfg.reward_weight_wait * d_wait / max(n_wait, 1)
        + cfg.reward_weight_onbus * d_onbus / max(n_onbus, 1)
    )


# --- config file handling ----------------------------------------------

ENV_SECTION = "environment"
DR_SECTION = "domain_randomization"

_ENV_FIELDS = {f for f in EnvConfig.__dataclass_fields__}
_DR_FIELDS = {f for f in DRConfig.__dataclass_fields__}


def load_env_file(path) -> tuple[EnvConfig, DRConfig]:
    """Read EnvConfig + DRConfig from one YAML file.

    Schema: top-level mappings ``environment:`` and ``domain_randomization:``,
    each holding that dataclass's fields as plain key/value pairs. Both
    sections are optional; missing keys fall back to the defaults. Unknown
    keys are rejected by name.
    """
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise EnvConfigError(f"{path}: expected a mapping at the top level")
    unknown = set(raw) - {ENV_SECTION, DR_SECTION}
    if unknown:
        raise EnvConfigError(f"{path}: unknown sections {sorted(unknown)}")

    env_raw = raw.get(ENV_SECTION) or {}
    dr_raw = raw.get(DR_SECTION) or {}
    bad = set(env_raw) - _ENV_FIELDS
    if bad:
        raise EnvConfigError(f"{path}: unknown {ENV_SECTION} keys {sorted(bad)}")
    bad = set(dr_raw) - _DR_FIELDS
    if bad:
        raise EnvConfigError(f"{path}: unknown {DR_SECTION} keys {sorted(bad)}")
    if "demand_levels" in dr_raw:
        dr_raw = dict(dr_raw, demand_levels=tuple(dr_raw["demand_levels"]))
    try:
        env_cfg = EnvConfig(**env_raw).validate()
        dr_cfg = DRConfig(**dr_raw).validate()
    except TypeError as exc:
        raise EnvConfigError(f"{path}: {exc}") from exc
    return env_cfg, dr_cfg


def save_env_file(path, env_cfg: EnvConfig, dr_cfg: DRConfig) -> None:
    payload = {
        ENV_SECTION: {k: getattr(env_cfg, k) for k in _ENV_FIELDS},
        DR_SECTION: {
            k: (list(v) if isinstance(v := getattr(dr_cfg, k), tuple) else v)
            for k in _DR_FIELDS
        },
    }
    with open(path, "w") as fh:
        yaml.safe_dump(payload, fh, sort_keys=True)
