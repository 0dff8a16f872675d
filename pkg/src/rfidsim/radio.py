"""Link timing and coverage for a single roadside reader."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass
class RadioParams:
    tag_power: float = 0.040  # W
    reader_power: float = 10.0  # W
    tag_tx: float = -10.0  # dBm
    reader_tx: float = 0.0  # dBm
    tag_sensitivity: float = -70.0  # dBm
    reader_sensitivity: float = -82.0  # dBm
    tag_antenna_height: float = 1.0  # m
    reader_antenna_height: float = 5.0  # m
    frequency: float = 900e6  # Hz
    coverage_radius: float = 10.0  # m
    path_loss_exponent: float = 4.0
    shadowing_sigma: float = 2.0  # dB
    bandwidth: float = 256_000.0  # bit/s
    shadowing: bool = False
    reference_distance: float = 1.0  # m

    def validate(self) -> None:
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.coverage_radius <= 0:
            raise ValueError("coverage_radius must be positive")
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if self.shadowing_sigma < 0:
            raise ValueError("shadowing_sigma must be non-negative")


def tx_duration(bits: int, bandwidth: float) -> float:
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return bits / bandwidth


def ground_distance(position) -> float:
    x, y = position
    return math.hypot(x, y)


def in_range(tag_position, params: RadioParams) -> bool:
    """Ground-disc coverage centred on the point below the reader (boundary inclusive)."""
    return ground_distance(tag_position) <= params.coverage_radius


def reference_path_loss(params: RadioParams) -> float:
    """Free-space loss at the reference distance, in dB."""
    wavelength = SPEED_OF_LIGHT / params.frequency
    return 20.0 * math.log10(4.0 * math.pi * params.reference_distance / wavelength)


def mean_path_loss(distance: float, params: RadioParams) -> float:
    d = max(distance, params.reference_distance)
    return reference_path_loss(params) + 10.0 * params.path_loss_exponent * math.log10(d / params.reference_distance)


def link_margin(distance: float, params: RadioParams, uplink: bool = True) -> float:
    """Mean received power minus receiver sensitivity (dB).

    ``uplink`` is tag -> reader; otherwise reader -> tag.
    """
    if uplink:
        tx, sens = params.tag_tx, params.reader_sensitivity
    else:
        tx, sens = params.reader_tx, params.tag_sensitivity
    return tx - mean_path_loss(distance, params) - sens


def distance_for_margin(margin_db: float, params: RadioParams, uplink: bool = True) -> float:
    """Inverse of :func:`link_margin` on the log-distance branch."""
    base = link_margin(params.reference_distance, params, uplink)
    exponent = (base - margin_db) / (10.0 * params.path_loss_exponent)
    return params.reference_distance * 10.0**exponent


def link_success(distance: float, params: RadioParams, rng: np.random.Generator | None = None, uplink: bool = True) -> bool:
    if not params.shadowing:
        return distance <= params.coverage_radius
    return link_margin(distance, params, uplink) + rng.normal(0.0, params.shadowing_sigma) >= 0.0
