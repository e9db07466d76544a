"""Resolution ladders shared by every module.

Each level fixes the mesh parameters used when a caller asks for
``"coarse"``, ``"medium"`` or ``"fine"`` instead of explicit node counts.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Resolution:
    name: str
    # graded plane carrier for the half-space complement
    plane_h0: float
    plane_grading: float
    # layered volume carrier for complements when alpha < 2
    volume_h0: float
    volume_grading: float
    # default plate node counts
    disc_nodes: int
    ball_nodes: int
    sphere_nodes: int
    # weak-energy quadrature: refinement ratio and leaf floor (in units of h)
    weak_eta: float
    weak_floor: float


RESOLUTIONS = {
    "coarse": Resolution("coarse", 0.12, 0.25, 0.22, 0.45, 500, 600, 800, 1.0, 1.4),
    "medium": Resolution("medium", 0.08, 0.15, 0.16, 0.35, 1200, 1500, 1600, 0.8, 1.0),
    "fine": Resolution("fine", 0.05, 0.12, 0.12, 0.3, 2400, 3000, 3200, 0.6, 0.7),
}


def get_resolution(res: "str | Resolution") -> Resolution:
    if isinstance(res, Resolution):
        return res
    try:
        return RESOLUTIONS[res]
    except KeyError:
        raise ValueError(f"unknown resolution {res!r}; expected one of {sorted(RESOLUTIONS)}") from None
