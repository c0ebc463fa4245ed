"""Measurement tours and mission time accounting.

Each epoch's sampling points are grouped by fidelity level and visited along
one open tour per level (nearest-neighbor construction, then 2-opt).  The
vehicle moves at unit speed in 3D, changes altitude vertically between
fidelity groups, and spends a fixed sampling time at each waypoint.
"""

import math
from dataclasses import dataclass, field

from .field_model import FidelityModel, GroundTruth, measure
from .inference import SampleLog
from .planner import EpochPlan

_IMPROVE_EPS = 1e-12  # minimum 2-opt gain; guards against float cycling


def _dist3(a, b) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


@dataclass(frozen=True)
class Tour:
    """Open tour from the vehicle position through every planned point once."""

    start: tuple[float, float, float]
    waypoints: tuple[tuple[float, float, float], ...]
    length: float

    @property
    def end(self) -> tuple[float, float, float]:
        return self.waypoints[-1] if self.waypoints else self.start


def _path_length(start, order, pts3) -> float:
    total = 0.0
    prev = start
    for i in order:
        total += _dist3(prev, pts3[i])
        prev = pts3[i]
    return total


def _nearest_neighbor(start, pts3) -> list[int]:
    remaining = list(range(len(pts3)))
    order = []
    cur = start
    while remaining:
        best = min(remaining, key=lambda i: (_dist3(cur, pts3[i]), i))
        order.append(best)
        remaining.remove(best)
        cur = pts3[best]
    return order


def _two_opt(start, order, pts3) -> list[int]:
    """First-improvement 2-opt on an open path with a fixed start.

    Reversing order[i..j] swaps the edges entering i and leaving j; the scan
    order (i ascending, then j) is fixed so the result is deterministic.
    """
    n = len(order)
    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            before = start if i == 0 else pts3[order[i - 1]]
            for j in range(i + 1, n):
                delta = _dist3(before, pts3[order[j]]) - _dist3(before, pts3[order[i]])
                if j < n - 1:
                    after = pts3[order[j + 1]]
                    delta += _dist3(pts3[order[i]], after) - _dist3(pts3[order[j]], after)
                if delta < -_IMPROVE_EPS:
                    order[i : j + 1] = reversed(order[i : j + 1])
                    improved = True
                    break
            if improved:
                break
    return order


def build_tour(points, altitude: float, start: tuple[float, float, float]) -> Tour:
    """Order 2D points into an open tour at the given altitude.

    Nearest-neighbor from the start position, then 2-opt until no improving
    swap remains.  The 2-opt result is never longer than the NN tour.
    """
    if len(points) == 0:
        raise ValueError("build_tour needs at least one point")
    pts3 = [(float(p[0]), float(p[1]), float(altitude)) for p in points]
    start = (float(start[0]), float(start[1]), float(start[2]))
    order = _nearest_neighbor(start, pts3)
    order = _two_opt(start, order, pts3)
    return Tour(
        start=start,
        waypoints=tuple(pts3[i] for i in order),
        length=_path_length(start, order, pts3),
    )


@dataclass
class Clock:
    """Mission time: unit-speed travel plus fixed per-sample dwell."""

    time: float = 0.0

    def advance_travel(self, distance: float):
        if distance < 0:
            raise ValueError("travel distance must be non-negative")
        self.time += distance

    def advance_sampling(self, sample_time: float):
        self.time += sample_time


def plan_tours(
    plan: EpochPlan, model: FidelityModel, position: tuple[float, float, float]
) -> list[Tour]:
    """One tour per fidelity group, chained in ascending fidelity order.

    Each tour starts above the end of the previous one at its own altitude;
    the vertical altitude move itself is charged at execution time.
    """
    tours = []
    pos = position
    for level, group in plan.by_fidelity().items():
        z = model.z[level - 1]
        tour = build_tour([s.location for s in group], z, (pos[0], pos[1], z))
        tours.append(tour)
        pos = tour.end
    return tours


@dataclass
class ExecutionTrace:
    """What one executed epoch did to the clock and where it ended."""

    waypoint_rows: list[tuple[int, int, float, float, float, float]] = field(default_factory=list)
    increments: list[tuple[str, float]] = field(default_factory=list)
    altitude_changes: int = 0
    travel: float = 0.0
    end_position: tuple[float, float, float] = (0.0, 0.0, 0.0)


def execute_epoch(
    plan: EpochPlan,
    tours: list[Tour],
    truth: GroundTruth,
    model: FidelityModel,
    log: SampleLog,
    clock: Clock,
    rng,
    position: tuple[float, float, float],
    sample_time: float = 1.0,
) -> ExecutionTrace:
    """Fly the epoch's tours, measure at every waypoint, and advance the clock.

    Fidelity groups run lowest level first; between groups the vehicle first
    climbs or descends vertically (|dz| at unit speed), then follows the
    tour.  Observations are appended to the log in visit order.
    """
    groups = plan.by_fidelity()
    if len(tours) != len(groups):
        raise ValueError("tours do not match the plan's fidelity groups")
    for tour, (level, group) in zip(tours, groups.items()):
        if sorted(w[:2] for w in tour.waypoints) != sorted(s.location for s in group):
            raise ValueError(f"tour waypoints do not cover the level-{level} plan points")

    trace = ExecutionTrace()
    pos = (float(position[0]), float(position[1]), float(position[2]))
    order = 0
    for tour, (level, _) in zip(tours, groups.items()):
        if pos[2] != tour.start[2]:
            dz = abs(tour.start[2] - pos[2])
            clock.advance_travel(dz)
            trace.increments.append(("travel", dz))
            trace.travel += dz
            trace.altitude_changes += 1
            pos = (pos[0], pos[1], tour.start[2])
        for wp in tour.waypoints:
            seg = _dist3(pos, wp)
            clock.advance_travel(seg)
            trace.increments.append(("travel", seg))
            trace.travel += seg
            pos = wp
            order += 1
            trace.waypoint_rows.append((plan.epoch, order, wp[0], wp[1], wp[2], clock.time))
            value = measure(truth, wp[0], wp[1], level, model, rng)
            log.append((wp[0], wp[1]), value, level)
            clock.advance_sampling(sample_time)
            trace.increments.append(("sample", sample_time))
    trace.end_position = pos
    return trace
