"""Maps between physical time and the computational interval [-1, 1]."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateHorizon, InfinityRequested


class HorizonKind(str, enum.Enum):
    FINITE_FIXED = "FiniteFixed"
    FINITE_FREE_FINAL = "FiniteFreeFinal"
    FINITE_FREE_BOTH = "FiniteFreeBoth"
    INFINITE = "Infinite"


@dataclass(frozen=True)
class HorizonSpec:
    """Time horizon. For free horizons t0/tf are initial guesses."""

    kind: HorizonKind = HorizonKind.FINITE_FIXED
    t0: float = 0.0
    tf: Optional[float] = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", HorizonKind(self.kind))
        if self.kind is HorizonKind.INFINITE:
            object.__setattr__(self, "tf", None)
        elif self.tf is None or not self.tf > self.t0:
            raise DegenerateHorizon(f"need tf > t0, got t0={self.t0}, tf={self.tf}")

    @property
    def infinite(self):
        return self.kind is HorizonKind.INFINITE

    @property
    def free_t0(self):
        return self.kind is HorizonKind.FINITE_FREE_BOTH

    @property
    def free_tf(self):
        return self.kind in (HorizonKind.FINITE_FREE_FINAL, HorizonKind.FINITE_FREE_BOTH)


def affine_map(t0, tf, tau):
    if not tf > t0:
        raise DegenerateHorizon(f"need tf > t0, got t0={t0}, tf={tf}")
    return 0.5 * (tf + t0) + 0.5 * (tf - t0) * np.asarray(tau, dtype=float)


def affine_inverse(t0, tf, t):
    if not tf > t0:
        raise DegenerateHorizon(f"need tf > t0, got t0={t0}, tf={tf}")
    return (2.0 * np.asarray(t, dtype=float) - (tf + t0)) / (tf - t0)


def bilinear_map(t0, tau):
    """t = t0 + (1 + tau)/(1 - tau), sending [-1, 1) onto [t0, inf)."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau >= 1.0):
        raise InfinityRequested("tau = 1 maps to t = infinity")
    return t0 + (1.0 + tau) / (1.0 - tau)


def bilinear_inverse(t0, t):
    s = np.asarray(t, dtype=float) - t0
    return (s - 1.0) / (s + 1.0)


def to_physical(spec: HorizonSpec, tau, t0=None, tf=None):
    """Physical time of computational points, with optional t0/tf overrides."""
    t0 = spec.t0 if t0 is None else t0
    if spec.infinite:
        return bilinear_map(t0, tau)
    tf = spec.tf if tf is None else tf
    return affine_map(t0, tf, tau)


def dynamics_scale(spec: HorizonSpec, tau, t0=None, tf=None):
    """dt/dtau: (tf - t0)/2 for the affine map, 2/(1 - tau)^2 for the bilinear one."""
    tau = np.asarray(tau, dtype=float)
    if spec.infinite:
        if np.any(tau >= 1.0):
            raise InfinityRequested("dt/dtau is unbounded at tau = 1")
        out = 2.0 / (1.0 - tau) ** 2
    else:
        t0 = spec.t0 if t0 is None else t0
        tf = spec.tf if tf is None else tf
        out = np.full_like(tau, 0.5 * (tf - t0))
    return float(out) if out.ndim == 0 else out
