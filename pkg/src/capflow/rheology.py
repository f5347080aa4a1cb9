"""Vessel-level rheology: Poiseuille resistance, empirical in-vitro blood
viscosity, and flow/velocity conversions.

Canonical units are um (length), mmHg (pressure), cP (viscosity) and
um^3/s (flow). The raw Poiseuille resistance 128*mu*L/(pi*D^4) comes out
in cP/um^3; a single conversion constant turns it into mmHg*s/um^3 so
that pressure = resistance * flow holds in canonical units:

    1 cP/s = 1e-3 Pa, and 1 mmHg = 133.322387415 Pa
    => CP_PER_S_TO_MMHG = 1e-3 / 133.322387415
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

PA_PER_MMHG = 133.322387415
CP_PER_S_TO_MMHG = 1e-3 / PA_PER_MMHG


@dataclass(frozen=True)
class RheologyParams:
    """Physical constants of the flow models.

    ``mu``: constant whole-blood viscosity of the linear model (cP).
    ``mu_plasma``: plasma viscosity used by the hematocrit-dependent law (cP).
    ``drift``: plasma-skimming drift exponent M_d.
    """

    mu: float = 3.0
    mu_plasma: float = 1.0
    drift: float = 5.25

    def __post_init__(self):
        if self.mu <= 0 or self.mu_plasma <= 0 or self.drift <= 0:
            raise ValueError("rheology parameters must be strictly positive")


def edge_resistance(diameter, length, mu):
    """Hydraulic resistance of a cylindrical vessel in mmHg*s/um^3.

    Accepts scalars or arrays (um, um, cP). Scales linearly in length and
    viscosity and as diameter^-4.
    """
    diameter = np.asarray(diameter, dtype=np.float64)
    length = np.asarray(length, dtype=np.float64)
    if np.any(diameter <= 0) or np.any(length <= 0) or np.any(np.asarray(mu) <= 0):
        raise ValueError("diameter, length and viscosity must be positive")
    raw = 128.0 * mu * length / (np.pi * diameter ** 4)
    return raw * CP_PER_S_TO_MMHG


def relative_apparent_viscosity(diameter):
    """In-vitro relative apparent viscosity at discharge hematocrit 0.45,
    as a function of diameter in um."""
    d = np.asarray(diameter, dtype=np.float64)
    return 220.0 * np.exp(-1.3 * d) + 3.2 - 2.44 * np.exp(-0.06 * d ** 0.645)


def viscosity_shape_exponent(diameter):
    """Diameter-dependent exponent shaping the hematocrit dependence of the
    in-vitro viscosity law."""
    d = np.asarray(diameter, dtype=np.float64)
    w = 1.0 / (1.0 + 1e-11 * d ** 12)
    return (0.8 + np.exp(-0.075 * d)) * (-1.0 + w) + w


def blood_viscosity(diameter, hematocrit, mu_plasma: float = 1.0):
    """Apparent blood viscosity (cP) for vessel diameter (um) and discharge
    hematocrit, via the empirical in-vitro law.

    Identities: H = 0 gives exactly ``mu_plasma``; H = 0.45 gives exactly
    ``mu_plasma`` times the relative apparent viscosity.
    """
    d = np.asarray(diameter, dtype=np.float64)
    h = np.asarray(hematocrit, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("diameter must be positive")
    if np.any(h < 0) or np.any(h >= 1):
        raise DomainError("hematocrit must lie in [0, 1)")
    mu45 = relative_apparent_viscosity(d)
    gamma = viscosity_shape_exponent(d)
    frac = ((1.0 - h) ** gamma - 1.0) / ((1.0 - 0.45) ** gamma - 1.0)
    return mu_plasma * (1.0 + (mu45 - 1.0) * frac)


def velocity_from_flow(flow, diameter):
    """Axial blood velocity v = Q / (pi D^2 / 4), um/s."""
    d = np.asarray(diameter, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("diameter must be positive")
    return np.asarray(flow, dtype=np.float64) / (np.pi * d ** 2 / 4.0)


def flow_from_velocity(velocity, diameter):
    d = np.asarray(diameter, dtype=np.float64)
    return np.asarray(velocity, dtype=np.float64) * (np.pi * d ** 2 / 4.0)
