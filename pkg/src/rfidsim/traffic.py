"""Vehicle streams for the light / medium / heavy traffic models."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

MIN_HEADWAY = 0.1  # s; keeps a zero-headway draw from stacking vehicles


@dataclass(frozen=True)
class TrafficModel:
    name: str
    speed_range: tuple[float, float]  # m/s
    headway_range: tuple[float, float]  # s
    lanes: int

    def validate(self) -> None:
        lo, hi = self.speed_range
        if lo <= 0 or hi < lo:
            raise ValueError(f"bad speed_range {self.speed_range}")
        lo, hi = self.headway_range
        if lo < 0 or hi < lo or hi <= 0:
            raise ValueError(f"bad headway_range {self.headway_range}")
        if self.lanes < 1:
            raise ValueError("lanes must be >= 1")


MODELS = {
    "light": TrafficModel("light", (22.0, 42.0), (0.0, 10.0), 5),
    "medium": TrafficModel("medium", (11.0, 14.0), (0.25, 0.5), 5),
    "heavy": TrafficModel("heavy", (1.5, 1.5), (3.0, 3.0), 6),
}


def get_model(name: str) -> TrafficModel:
    try:
        return MODELS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown traffic model {name!r}; expected one of {sorted(MODELS)}") from None


@dataclass
class Vehicle:
    id: int
    lane: int
    speed: float
    entry_time: float
    lateral: float = 0.0
    approach_offset: float = 11.0
    tag: object = None


def lane_offsets(lanes: int, lane_width: float = 3.5) -> list[float]:
    if lanes < 1:
        raise ValueError("lanes must be >= 1")
    return [(i - (lanes - 1) / 2.0) * lane_width for i in range(lanes)]


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return lo if hi == lo else float(rng.uniform(lo, hi))


def spawn_stream(
    model: TrafficModel,
    duration: float,
    rng: np.random.Generator,
    lane_width: float = 3.5,
    approach_offset: float = 11.0,
) -> list[Vehicle]:
    """Spawn vehicles lane by lane over ``[0, duration]``, sorted by entry time.

    Every lane starts with a vehicle at t = 0; later arrivals follow uniform
    headways. Speeds are drawn once per vehicle.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    offsets = lane_offsets(model.lanes, lane_width)
    vehicles = []
    for lane, lateral in enumerate(offsets):
        t = 0.0
        while t <= duration:
            speed = _uniform(rng, *model.speed_range)
            vehicles.append(Vehicle(0, lane, speed, t, lateral, approach_offset))
            t += max(MIN_HEADWAY, _uniform(rng, *model.headway_range))
    vehicles.sort(key=lambda v: (v.entry_time, v.lane))
    for i, v in enumerate(vehicles):
        v.id = i
    return vehicles


def position_at(vehicle: Vehicle, t: float) -> tuple[float, float]:
    if t < vehicle.entry_time:
        raise ValueError("vehicle has not entered the road yet")
    return vehicle.speed * (t - vehicle.entry_time) - vehicle.approach_offset, vehicle.lateral


def range_interval(vehicle: Vehicle, radius: float) -> tuple[float, float] | None:
    """Times at which the vehicle enters and leaves the coverage disc, if it crosses it."""
    if abs(vehicle.lateral) >= radius:
        return None
    half = math.sqrt(radius**2 - vehicle.lateral**2)
    t_in = vehicle.entry_time + (vehicle.approach_offset - half) / vehicle.speed
    t_out = vehicle.entry_time + (vehicle.approach_offset + half) / vehicle.speed
    return t_in, t_out


def dwell_time(vehicle: Vehicle, radius: float) -> float:
    span = range_interval(vehicle, radius)
    return 0.0 if span is None else span[1] - span[0]


def with_overrides(model: TrafficModel, **fields) -> TrafficModel:
    return replace(model, **{k: v for k, v in fields.items() if v is not None})
