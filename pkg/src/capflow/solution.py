"""Flow solution container shared by the full-order solvers and the surrogate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np


@dataclass(frozen=True)
class FlowSolution:
    """Solver output on a vascular graph.

    ``pressures`` are nodal (mmHg); ``flows`` (um^3/s) and ``velocities``
    (um/s, physical axial velocity) are signed along the stored edge
    orientation. ``hematocrits``/``node_potentials`` are present only for
    nonlinear solves. ``residuals`` carries the verification metrics
    computed at the returned state.
    """

    pressures: np.ndarray
    flows: np.ndarray
    velocities: np.ndarray
    hematocrits: Optional[np.ndarray] = None
    node_potentials: Optional[np.ndarray] = None
    residuals: Dict[str, float] = field(default_factory=dict)
    iterations: int = 1
    converged: bool = True
    clamp_count: int = 0

    @property
    def is_nonlinear(self) -> bool:
        return self.hematocrits is not None
