"""Poisson kernel, Herglotz integrals and radial boundary values."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .cmv import AtomicCircleMeasure
from .ergodic import TWO_PI

LADDER_CAP_FACTOR = 8.0


class BoundaryError(ValueError):
    pass


def poisson_kernel(R, tau):
    """P_R(tau) = Re((1 + R tau) / (1 - R tau)) for 0 <= R < 1."""
    R = np.asarray(R, dtype=float)
    if np.any(R < 0) or np.any(R >= 1):
        raise BoundaryError("Poisson kernel needs 0 <= R < 1")
    tau = np.asarray(tau, dtype=complex)
    out = ((1 + R * tau) / (1 - R * tau)).real
    return float(out) if out.ndim == 0 else out


def herglotz_eval(measure: AtomicCircleMeasure, z):
    """K(z) = sum_k w_k (tau_k + z) / (tau_k - z), |z| < 1."""
    z_arr = np.asarray(z, dtype=complex)
    if np.any(np.abs(z_arr) >= 1):
        raise BoundaryError("Herglotz integral evaluated only inside the unit disk")
    tau = measure.points
    w = measure.weights
    flat = z_arr.reshape(-1)
    out = np.empty(flat.shape, complex)
    # chunks keep the (atoms x points) temporary small
    step = max(1, 4_000_000 // max(tau.size, 1))
    for i in range(0, flat.size, step):
        zz = flat[i:i + step]
        out[i:i + step] = ((tau[:, None] + zz) / (tau[:, None] - zz) * w[:, None]).sum(axis=0)
    return complex(out[0]) if z_arr.ndim == 0 else out.reshape(z_arr.shape)


class CaratheodoryEvaluator:
    """An analytic map from the disk to the right half-plane.

    Backed either by an atomic measure (Herglotz sum) or by an arbitrary
    callable such as a Schur-function composition.
    """

    def __init__(self, func: Callable | None = None, measure: AtomicCircleMeasure | None = None):
        if (func is None) == (measure is None):
            raise BoundaryError("give exactly one of func or measure")
        self.measure = measure
        self._func = func

    @classmethod
    def from_measure(cls, measure: AtomicCircleMeasure) -> CaratheodoryEvaluator:
        return cls(measure=measure)

    @property
    def atomic(self) -> bool:
        return self.measure is not None

    def __call__(self, z):
        if self.measure is not None:
            return herglotz_eval(self.measure, z)
        return self._func(z)


def as_evaluator(obj) -> CaratheodoryEvaluator:
    if isinstance(obj, CaratheodoryEvaluator):
        return obj
    if isinstance(obj, AtomicCircleMeasure):
        return CaratheodoryEvaluator.from_measure(obj)
    return CaratheodoryEvaluator(func=obj)


@dataclass(frozen=True)
class RadialLadder:
    """Radii r_m = 1 - 2^-m for m = m_lo..m_hi."""

    m_lo: int = 4
    m_hi: int = 14
    tol: float = 1e-3

    def __post_init__(self):
        if not 1 <= self.m_lo <= self.m_hi:
            raise BoundaryError(f"bad ladder bounds {self.m_lo}..{self.m_hi}")

    @property
    def ms(self) -> np.ndarray:
        return np.arange(self.m_lo, self.m_hi + 1)

    @property
    def radii(self) -> np.ndarray:
        return 1.0 - 2.0 ** -self.ms.astype(float)

    def capped(self, spacing: float, factor: float = LADDER_CAP_FACTOR) -> RadialLadder:
        """Stop at the largest m with 1 - r_m >= factor * spacing."""
        m_cap = int(math.floor(-math.log2(factor * spacing) + 1e-12))
        m_hi = max(1, min(self.m_hi, m_cap))
        return replace(self, m_lo=min(self.m_lo, max(1, m_hi - 1)), m_hi=m_hi)

    def to_dict(self):
        return {"m_lo": self.m_lo, "m_hi": self.m_hi, "tol": self.tol}


def effective_ladder(evaluator: CaratheodoryEvaluator, ladder: RadialLadder) -> RadialLadder:
    if evaluator.atomic:
        return ladder.capped(evaluator.measure.mean_spacing())
    return ladder


def ladder_values(evaluator, theta, ladder: RadialLadder) -> np.ndarray:
    """Re F(r_m e^{i theta}) for every rung; shape (rungs,) + theta.shape."""
    theta = np.asarray(theta, dtype=float)
    z = ladder.radii.reshape((-1,) + (1,) * theta.ndim) * np.exp(1j * theta)
    return np.asarray(evaluator(z)).real


def ac_density(evaluator, theta, ladder: RadialLadder | None = None):
    """(1 / 2 pi) lim Re F(r e^{i theta}) along the ladder.

    Returns ``(density, converged)``; converged means the last two rungs
    agree to ``ladder.tol`` relative to the last value.
    """
    evaluator = as_evaluator(evaluator)
    ladder = effective_ladder(evaluator, ladder or RadialLadder())
    vals = ladder_values(evaluator, theta, ladder) / TWO_PI
    last = vals[-1]
    if vals.shape[0] < 2:
        conv = np.zeros(np.shape(last), bool)
    else:
        conv = np.abs(vals[-1] - vals[-2]) <= ladder.tol * np.maximum(np.abs(last), 1e-300)
    if np.ndim(last) == 0:
        return float(last), bool(conv)
    return last, conv


def atom_mass(evaluator, theta, ladder: RadialLadder | None = None):
    """Mass at e^{i theta} from (1 - r)/(1 + r) Re F(r e^{i theta}).

    The last two rungs are combined by Richardson extrapolation, which
    removes the term linear in (1 - r) contributed by a continuous density.
    """
    evaluator = as_evaluator(evaluator)
    ladder = effective_ladder(evaluator, ladder or RadialLadder())
    r = ladder.radii.reshape((-1,) + (1,) * np.ndim(theta))
    vals = (1 - r) / (1 + r) * ladder_values(evaluator, theta, ladder)
    est = vals[-1] if vals.shape[0] < 2 else 2 * vals[-1] - vals[-2]
    est = np.maximum(est, 0.0)
    return float(est) if np.ndim(est) == 0 else est
