"""Density of states, rho_infinity, the Thouless potential Gamma and the DOS
Caratheodory function K."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .boundary import RadialLadder, ac_density, as_evaluator, herglotz_eval
from .cmv import (AtomicCircleMeasure, counting_measure, finite_cmv, kolmogorov_distance,
                  truncated_green)
from .ergodic import ErgodicFamily, SamplingPlan

ROUTE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DOSApproximation:
    """Counting measures pooled over the plan's samples at volume n.

    ``self_distance`` is the Kolmogorov distance to the pooled measure at
    volume n // 2 (None when the diagnostic was skipped).
    """

    measure: AtomicCircleMeasure
    n: int
    samples: int
    self_distance: float | None = None


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def pooled_counting_measure(family: ErgodicFamily, plan: SamplingPlan, n: int,
                            boundary=(-1.0, -1.0), threads: int = 1) -> AtomicCircleMeasure:
    states = plan.states(family)
    measures = _map(lambda s: counting_measure(finite_cmv(family, s, n, *boundary)), states, threads)
    return AtomicCircleMeasure(
        np.concatenate([m.angles for m in measures]),
        np.concatenate([m.weights for m in measures]) / len(measures),
    ).merged()


def density_of_states(family: ErgodicFamily, plan: SamplingPlan, n: int,
                      boundary=(-1.0, -1.0), diagnostic: bool = True,
                      threads: int = 1) -> DOSApproximation:
    """Normalized eigenvalue counting measure dk_n averaged over the plan."""
    if n < 1:
        raise ValueError("volume n must be at least 1")
    measure = pooled_counting_measure(family, plan, n, boundary, threads)
    dist = None
    if diagnostic and n >= 2:
        half = pooled_counting_measure(family, plan, n // 2, boundary, threads)
        dist = kolmogorov_distance(measure, half)
    return DOSApproximation(measure, n, len(plan.states(family)), dist)


def dos_average_check(family: ErgodicFamily, plan: SamplingPlan, n: int, z,
                      boundary=(-1.0, -1.0), dos: DOSApproximation | None = None):
    """Both sides of E(G_omega(z)) = int dk(tau) / (tau - z) at volume n.

    Returns ``(lhs, rhs)``: the plan average of the truncated site-0 Green
    function and the Stieltjes sum over the pooled counting measure (scalars
    for scalar ``z``, arrays otherwise).
    """
    z_arr = np.asarray(z, dtype=complex)
    greens = [truncated_green(finite_cmv(family, s, n, *boundary), z_arr)
              for s in plan.states(family)]
    lhs = np.mean(greens, axis=0)
    if dos is None:
        dos = density_of_states(family, plan, n, boundary, diagnostic=False)
    m = dos.measure
    flat = z_arr.reshape(-1)
    rhs = (m.weights[:, None] / (m.points[:, None] - flat[None, :])).sum(axis=0)
    if z_arr.ndim == 0:
        return complex(lhs), complex(rhs[0])
    return lhs, rhs.reshape(z_arr.shape)


def rho_infinity(family: ErgodicFamily, plan: SamplingPlan, length: int = 10_000) -> float:
    """exp of the plan average of (1/2N) sum_{j<N} log(1 - |alpha_j|^2)."""
    if length < 1:
        raise ValueError("length must be at least 1")
    logs = [np.sum(np.log1p(-np.abs(family.window(s, 0, length)) ** 2)) / (2 * length)
            for s in plan.states(family)]
    return math.exp(float(np.mean(logs)))


@dataclass(frozen=True, eq=False)
class ThoulessPotential:
    dos: DOSApproximation
    rho_inf: float

    @property
    def measure(self) -> AtomicCircleMeasure:
        return self.dos.measure


def thouless_potential(family, plan, n: int, length: int = 10_000,
                       dos: DOSApproximation | None = None, threads: int = 1) -> ThoulessPotential:
    if dos is None:
        dos = density_of_states(family, plan, n, diagnostic=False, threads=threads)
    return ThoulessPotential(dos, rho_infinity(family, plan, length))


def thouless_gamma(pot: ThoulessPotential, z, return_excluded: bool = False):
    """Re Gamma(z) = sum_k w_k log|1 - z conj(tau_k)| - log rho_inf.

    Atoms exactly at tau = z are left out of the sum; their number is returned
    when ``return_excluded`` is set (and a warning is issued).
    """
    m = pot.measure
    z_arr = np.asarray(z, dtype=complex)
    flat = z_arr.reshape(-1)
    terms = np.abs(1 - flat[None, :] * np.conj(m.points)[:, None])
    hit = terms == 0
    excluded = hit.sum(axis=0)
    with np.errstate(divide="ignore"):
        logs = np.where(hit, 0.0, np.log(np.where(hit, 1.0, terms)))
    values = (m.weights[:, None] * logs).sum(axis=0) - math.log(pot.rho_inf)
    if excluded.any():
        warnings.warn(f"{int(excluded.sum())} atoms at tau = z excluded from Re Gamma",
                      RuntimeWarning, stacklevel=2)
    if z_arr.ndim == 0:
        out, exc = float(values[0]), int(excluded[0])
    else:
        out, exc = values.reshape(z_arr.shape), excluded.reshape(z_arr.shape)
    return (out, exc) if return_excluded else out


def dos_caratheodory_routes(pot: ThoulessPotential, z):
    """K(z) by the Herglotz sum and by 1 - 2 z Gamma'(z) (analytic derivative)."""
    m = pot.measure
    z = np.asarray(z, dtype=complex)
    herglotz = herglotz_eval(m, z)
    tb = np.conj(m.points).reshape((-1,) + (1,) * z.ndim)
    w = m.weights.reshape(tb.shape)
    derivative = 1 + (w * 2 * z * tb / (1 - z * tb)).sum(axis=0)
    return herglotz, (complex(derivative) if z.ndim == 0 else derivative)


def dos_caratheodory(pot: ThoulessPotential, z):
    """K(z); warns if the two evaluation routes disagree beyond 1e-10."""
    a, b = dos_caratheodory_routes(pot, z)
    gap = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
    if gap > ROUTE_TOL:
        warnings.warn(f"K routes disagree by {gap:.3g}", RuntimeWarning, stacklevel=2)
    return a


def k_ac(pot: ThoulessPotential, theta, ladder: RadialLadder | None = None):
    """a.c. density of the DOS from radial limits of Re K (atomic ladder cap)."""
    return ac_density(as_evaluator(pot.measure), theta, ladder or RadialLadder())
