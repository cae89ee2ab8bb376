"""Standard problem geometries used by tests, the CLI fixtures and scripts."""

from __future__ import annotations

import numpy as np

from .geometry import Polygon, polygon_area


def unit_square() -> Polygon:
    return Polygon([(0, 0), (1, 0), (1, 1), (0, 1)])


def square_for(target: Polygon) -> Polygon:
    """Square source with the same area as the target, centered on it."""
    area = polygon_area(target)
    s = float(np.sqrt(area))
    cx, cy = target.coords.mean(axis=0)
    return Polygon(
        [
            (cx - s / 2, cy - s / 2),
            (cx + s / 2, cy - s / 2),
            (cx + s / 2, cy + s / 2),
            (cx - s / 2, cy + s / 2),
        ]
    )


def lshape() -> Polygon:
    """Unit-thickness L: three unit squares, one reflex vertex at (1, 1)."""
    return Polygon([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)])


def dumbbell() -> Polygon:
    """Two unit squares joined by a 0.1-thick neck along the bottom; 8 vertices,
    two reflex corners, area 2.05."""
    return Polygon(
        [
            (0, 0),
            (2.5, 0),
            (2.5, 1),
            (1.5, 1),
            (1.5, 0.1),
            (1, 0.1),
            (1, 1),
            (0, 1),
        ]
    )


def hexagon(radius: float = 1.0) -> Polygon:
    ang = np.arange(6) * np.pi / 3.0
    return Polygon(np.c_[radius * np.cos(ang), radius * np.sin(ang)])


def separated_squares() -> tuple[Polygon, Polygon]:
    """Unit squares left and right of the line {x1 = 0}."""
    src = Polygon([(-2, 0), (-1, 0), (-1, 1), (-2, 1)])
    tgt = Polygon([(1, 0), (2, 0), (2, 1), (1, 1)])
    return src, tgt


def square_to_dumbbell() -> tuple[Polygon, Polygon]:
    """Unit square source facing a dumbbell target across {x1 = 0}."""
    src = Polygon([(-2, 0), (-1, 0), (-1, 1), (-2, 1)])
    d = dumbbell().coords + (1.0, 0.0)
    return src, Polygon(d)
