"""Smoothed step functions for penalized obstacle problems.

A penalty profile is a nondecreasing Lipschitz theta : R -> [0, 1] with
theta(t) = 0 for t <= 0 and theta(t) -> 1 as t -> inf.  The constant

    C_theta = sup_{t > 0} t * (1 - theta(t))

controls how far a penalized solution can overshoot the constraint: the
energy-error bound for penalization scales like eps * C_theta.  Profiles
that reach 1 exactly at a finite argument ("saturating") pin the
over/undershoot of the penalized solution to at most eps nodally.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError

__all__ = ["PenaltyFunction", "get_penalty", "PENALTY_NAMES"]


@dataclass(frozen=True)
class PenaltyFunction:
    """theta with its (right-)derivative and the sharp constants."""

    name: str
    theta: Callable[[np.ndarray], np.ndarray]
    dtheta: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    c_theta: float
    saturation: Optional[float]  # smallest t with theta(t) = 1, or None


def _ramp_theta(t):
    return np.clip(t, 0.0, 1.0)


def _ramp_dtheta(t):
    t = np.asarray(t, dtype=float)
    return np.where((t >= 0.0) & (t < 1.0), 1.0, 0.0)[()]


def _rational_theta(t):
    t = np.asarray(t, dtype=float)
    return np.where(t > 0.0, t / (1.0 + np.abs(t)), 0.0)[()]


def _rational_dtheta(t):
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0.0, 1.0 / (1.0 + np.abs(t)) ** 2, 0.0)[()]


def _arctan_theta(t):
    t = np.asarray(t, dtype=float)
    return np.where(t > 0.0, (2.0 / np.pi) * np.arctan(np.maximum(t, 0.0)), 0.0)[()]


def _arctan_dtheta(t):
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0.0, (2.0 / np.pi) / (1.0 + t * t), 0.0)[()]


_CATALOG = {
    # sup t(1-theta) = t(1-t) at t=1/2
    "ramp": PenaltyFunction("ramp", _ramp_theta, _ramp_dtheta, 1.0, 0.25, 1.0),
    # t(1-theta) = t/(1+t) -> 1; steepest slope 1 at 0+
    "rational": PenaltyFunction("rational", _rational_theta, _rational_dtheta,
                                1.0, 1.0, None),
    # t(1-theta) -> 2/pi
    "arctan": PenaltyFunction("arctan", _arctan_theta, _arctan_dtheta,
                              2.0 / np.pi, 2.0 / np.pi, None),
}

PENALTY_NAMES = tuple(sorted(_CATALOG))


def get_penalty(name) -> PenaltyFunction:
    """Look up a penalty profile by name ('ramp', 'rational', 'arctan')."""
    if isinstance(name, PenaltyFunction):
        return name
    try:
        return _CATALOG[name]
    except KeyError:
        raise ValidationError(
            f"unknown penalty {name!r}; choose one of {', '.join(PENALTY_NAMES)}"
        ) from None
