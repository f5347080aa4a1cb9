"""Signed logarithmic velocity transform.

Flow rates in a capillary bed span orders of magnitude; the surrogate
learns a compressed velocity representation instead:

    T(Q)      = sign(Q)/k_v * log(1 + 4|Q| / (pi D^2))
    T^-1(w)   = sign(w) * pi D^2 / 4 * (exp(k_v |w|) - 1)

T is odd and strictly increasing in Q, and T^-1 is its exact inverse.
The argument of the log is 1 + |v_axial|, so the transformed value is the
log-compressed axial velocity magnitude, sign-tagged.
"""

from __future__ import annotations

import numpy as np


def velocity_transform(flow, diameter, k_v: float):
    """Transformed velocity from flow (um^3/s) and diameter (um)."""
    if k_v <= 0:
        raise ValueError("k_v must be positive")
    q = np.asarray(flow, dtype=np.float64)
    d = np.asarray(diameter, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("diameter must be positive")
    return np.sign(q) / k_v * np.log1p(4.0 * np.abs(q) / (np.pi * d * d))


def velocity_transform_inv(value, diameter, k_v: float):
    """Flow (um^3/s) from a transformed velocity."""
    if k_v <= 0:
        raise ValueError("k_v must be positive")
    w = np.asarray(value, dtype=np.float64)
    d = np.asarray(diameter, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("diameter must be positive")
    return np.sign(w) * np.pi * d * d / 4.0 * np.expm1(k_v * np.abs(w))
