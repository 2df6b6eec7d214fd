"""Szego transfer matrices, Lyapunov exponents and the zero set Z.

Products are accumulated in batches (one row per spectral parameter and
omega sample) and renormalized every ``rescale_every`` steps; the logs of
the factored-out norms are summed separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ergodic import TWO_PI, ErgodicFamily, FamilyError, SamplingPlan, rho

DEFAULT_N = 10_000
DEFAULT_EPS = 5e-3
DEFAULT_MARGIN = 2


class CocycleOverflowError(ArithmeticError):
    """A renormalized product still overflowed; shorten the rescaling period."""


def szego_step(alpha: complex, z: complex, normalized: bool = True) -> np.ndarray:
    """One Szego step [[z, -conj(a)], [-a z, 1]], divided by rho when
    ``normalized``."""
    if abs(alpha) >= 1:
        raise FamilyError(f"|alpha| = {abs(alpha)} >= 1")
    step = np.array([[z, -np.conj(alpha)], [-alpha * z, 1.0]], dtype=complex)
    if normalized:
        step /= math.sqrt(1.0 - abs(alpha) ** 2)
    return step


def cocycle_product(alphas, z, normalized: bool = True, rescale_every: int = 32):
    """Product T(alpha_{N-1}) ... T(alpha_0) for a batch.

    Parameters
    ----------
    alphas : array, shape (B, N) or (N,)
        Coefficient rows, applied left to right in time.
    z : complex or array broadcastable to (B,)
    normalized : divide every step by rho.
    rescale_every : steps between renormalizations.

    Returns
    -------
    (matrix, log_scale)
        ``matrix`` has shape (B, 2, 2) and the true product is
        ``matrix * exp(log_scale)``.
    """
    alphas = np.atleast_2d(np.asarray(alphas, dtype=complex))
    batch, length = alphas.shape
    z = np.broadcast_to(np.asarray(z, dtype=complex), (batch,))
    if rescale_every < 1:
        raise ValueError("rescale_every must be positive")
    abar = alphas.conj()
    inv_rho = 1.0 / rho(alphas) if normalized else np.ones(alphas.shape)
    m00 = np.ones(batch, complex)
    m01 = np.zeros(batch, complex)
    m10 = np.zeros(batch, complex)
    m11 = np.ones(batch, complex)
    log_scale = np.zeros(batch)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(length):
            a, ab, s = alphas[:, j], abar[:, j], inv_rho[:, j]
            az = a * z
            m00, m01, m10, m11 = (
                (z * m00 - ab * m10) * s,
                (z * m01 - ab * m11) * s,
                (m10 - az * m00) * s,
                (m11 - az * m01) * s,
            )
            if (j + 1) % rescale_every == 0 or j == length - 1:
                scale = np.maximum.reduce([abs(m00), abs(m01), abs(m10), abs(m11)])
                if not np.all(np.isfinite(scale)) or np.any(scale == 0):
                    raise CocycleOverflowError(
                        f"product overflowed within {rescale_every} steps (step {j})")
                m00, m01, m10, m11 = m00 / scale, m01 / scale, m10 / scale, m11 / scale
                log_scale += np.log(scale)
    matrix = np.stack([np.stack([m00, m01], -1), np.stack([m10, m11], -1)], -2)
    return matrix, log_scale


def log_det_product(alphas, z, normalized: bool = True) -> np.ndarray:
    """Complex log of det(T(alpha_{N-1}) ... T(alpha_0)), phase unwrapped.

    The determinant of a long product is useless when formed from its
    entries: away from the spectrum the product is numerically rank one.
    Here the product is carried in QR form, P_j = Q_j R_j.  The factor
    T_j Q_j has the conditioning of a single step, so its determinant is
    accurate, and it equals r11 * r22 of the next triangular factor.
    """
    alphas = np.atleast_2d(np.asarray(alphas, dtype=complex))
    batch, length = alphas.shape
    z = np.broadcast_to(np.asarray(z, dtype=complex), (batch,))
    inv_rho = 1.0 / rho(alphas) if normalized else np.ones(alphas.shape)
    q00 = np.ones(batch, complex)
    q10 = np.zeros(batch, complex)
    log_det = np.zeros(batch, complex)
    for j in range(length):
        a, s = alphas[:, j], inv_rho[:, j]
        # M = T Q with Q = [[q00, -conj(q10)], [q10, conj(q00)]]
        q01, q11 = -np.conj(q10), np.conj(q00)
        m00 = (z * q00 - np.conj(a) * q10) * s
        m10 = (q10 - a * z * q00) * s
        m01 = (z * q01 - np.conj(a) * q11) * s
        m11 = (q11 - a * z * q01) * s
        log_det += np.log(m00 * m11 - m01 * m10)
        nrm = np.sqrt(abs(m00) ** 2 + abs(m10) ** 2)
        q00, q10 = m00 / nrm, m10 / nrm
    # the principal logs above are summed step by step, so the phase is unwrapped
    return log_det


def log_norm(matrix, log_scale) -> np.ndarray:
    """log of the operator 2-norm of ``matrix * exp(log_scale)``."""
    return np.log(np.linalg.norm(matrix, ord=2, axis=(-2, -1))) + log_scale


@dataclass(frozen=True)
class LyapunovEstimate:
    z: complex
    value: float
    length: int
    samples: int
    stderr: float


def lyapunov_grid(family: ErgodicFamily, plan: SamplingPlan, zs, length: int = DEFAULT_N,
                  normalized: bool = True, rescale_every: int = 32):
    """Finite-length Lyapunov estimates (1/N) E log||T_z^N|| at many z.

    Returns ``(values, stderrs)`` with the shape of ``zs``.
    """
    if length < 1:
        raise ValueError("cocycle length must be at least 1")
    zs = np.asarray(zs, dtype=complex)
    flat = zs.reshape(-1)
    states = plan.states(family)
    rows = np.stack([family.window(s, 0, length) for s in states])  # (S, N)
    n_s, n_z = len(states), flat.size
    alphas = np.repeat(rows, n_z, axis=0)  # sample-major
    z_batch = np.tile(flat, n_s)
    matrix, scale = cocycle_product(alphas, z_batch, normalized, rescale_every)
    per = (log_norm(matrix, scale) / length).reshape(n_s, n_z)
    values = per.mean(axis=0)
    if plan.mode == "exact" or n_s < 2:
        errs = np.zeros(n_z)
    else:
        errs = per.std(axis=0, ddof=1) / math.sqrt(n_s)
    return values.reshape(zs.shape), errs.reshape(zs.shape)


def lyapunov(family: ErgodicFamily, plan: SamplingPlan, z: complex, length: int = DEFAULT_N,
             normalized: bool = True, rescale_every: int = 32) -> LyapunovEstimate:
    """Estimate gamma(z) with the rho-normalized Szego cocycle."""
    values, errs = lyapunov_grid(family, plan, [z], length, normalized, rescale_every)
    return LyapunovEstimate(complex(z), float(values[0]), length,
                            len(plan.states(family)), float(errs[0]))


# ---------------------------------------------------------------------------
# zero set


@dataclass
class ZeroSetArcs:
    """Arcs of the circle where the estimated Lyapunov exponent is below eps.

    Arcs are ``(lo, hi)`` angle pairs with ``lo`` in [0, 2 pi) and
    ``lo <= hi < lo + 2 pi`` (``hi`` exceeds 2 pi for an arc through angle 0).

    ``raw_runs`` are the grid-index runs of points below threshold (stop
    inclusive, possibly past the grid size when wrapping) and ``raw_arcs``
    their extent, with end points refined by bisection when requested.
    ``index_runs`` and ``arcs`` are the same runs shrunk by ``margin`` cells.
    """

    arcs: list[tuple[float, float]]
    eps: float
    grid_size: int
    margin: int
    thetas: np.ndarray = field(repr=False)
    gammas: np.ndarray = field(repr=False)
    stderrs: np.ndarray = field(repr=False)
    index_runs: list[tuple[int, int]] = field(default_factory=list)
    raw_runs: list[tuple[int, int]] = field(default_factory=list)
    raw_arcs: list[tuple[float, float]] = field(default_factory=list)

    @property
    def step(self) -> float:
        return TWO_PI / self.grid_size

    @property
    def empty(self) -> bool:
        return not self.arcs

    @property
    def full_circle(self) -> bool:
        return len(self.raw_runs) == 1 and self.raw_runs[0][1] - self.raw_runs[0][0] + 1 >= self.grid_size

    def contains(self, theta) -> np.ndarray:
        return _in_arcs(theta, self.arcs)

    def grid_indices(self, raw: bool = False) -> np.ndarray:
        """Sorted grid indices covered by the (raw or shrunk) runs."""
        runs = self.raw_runs if raw else self.index_runs
        idx = [np.arange(a, b + 1) % self.grid_size for a, b in runs]
        return np.unique(np.concatenate(idx)) if idx else np.zeros(0, int)

    def edge_ring(self, width: int | None = None) -> np.ndarray:
        """Grid indices within ``width`` cells (default: the margin) of a
        raw-arc end point, on either side."""
        width = self.margin if width is None else width
        out = []
        if not self.full_circle:
            for a, b in self.raw_runs:
                out.append(np.arange(a - width, a + width) % self.grid_size)
                out.append(np.arange(b - width + 1, b + width + 1) % self.grid_size)
        return np.unique(np.concatenate(out)) if out else np.zeros(0, int)

    def shrunk_arcs(self, margin_cells: float) -> list[tuple[float, float]]:
        """Raw arcs with ``margin_cells`` grid cells removed at both ends."""
        if self.full_circle:
            return list(self.raw_arcs)
        d = margin_cells * self.step
        return [(lo + d, hi - d) for lo, hi in self.raw_arcs if hi - lo > 2 * d]

    def lebesgue_fraction(self, raw: bool = True) -> float:
        arcs = self.raw_arcs if raw else self.arcs
        return sum(hi - lo for lo, hi in arcs) / TWO_PI


def _in_arcs(theta, arcs) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape, bool)
    for lo, hi in arcs:
        out |= np.mod(theta - lo, TWO_PI) <= hi - lo + 1e-12
    return out


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True in a cyclic boolean array, as (start, stop)."""
    size = mask.size
    if mask.all():
        return [(0, size - 1)]
    if not mask.any():
        return []
    first_false = int(np.argmin(mask))
    rolled = np.roll(mask, -first_false)
    runs = []
    i = 0
    while i < size:
        if rolled[i]:
            j = i
            while j + 1 < size and rolled[j + 1]:
                j += 1
            runs.append((i + first_false, j + first_false))
            i = j + 1
        else:
            i += 1
    runs = [(a % size, a % size + (b - a)) for a, b in runs]
    return sorted(runs)


def _bisect_edges(family, plan, inside, outside, length, eps, steps):
    """Move each (inside, outside) angle pair together until they bracket
    the eps-crossing of the Lyapunov estimate to within 2^-steps of the gap."""
    inside = np.array(inside, dtype=float)
    outside = np.array(outside, dtype=float)
    for _ in range(steps):
        mid = 0.5 * (inside + outside)
        g, _ = lyapunov_grid(family, plan, np.exp(1j * mid), length)
        below = g < eps
        inside = np.where(below, mid, inside)
        outside = np.where(below, outside, mid)
    return 0.5 * (inside + outside)


def zero_set(family: ErgodicFamily, plan: SamplingPlan, grid_size: int = 256,
             length: int = DEFAULT_N, eps: float = DEFAULT_EPS,
             margin: int = DEFAULT_MARGIN, refine_steps: int = 16) -> ZeroSetArcs:
    """Detect Z on the circle from Lyapunov estimates on an equispaced grid.

    Grid points with estimate below ``eps`` are merged into runs, and each run
    is shrunk by ``margin`` cells at both ends (a run covering the whole circle
    has no ends and is kept intact).  With ``refine_steps > 0`` the raw arc
    end points are located between grid points by bisection.
    """
    if grid_size < 16:
        raise ValueError("grid size must be at least 16")
    if eps <= 0:
        raise ValueError("eps must be positive")
    h = TWO_PI / grid_size
    thetas = h * np.arange(grid_size)
    gammas, errs = lyapunov_grid(family, plan, np.exp(1j * thetas), length)
    raw = _runs(gammas < eps)
    if len(raw) == 1 and raw[0][1] - raw[0][0] + 1 == grid_size:
        full = [(0.0, TWO_PI)]
        return ZeroSetArcs(full, eps, grid_size, margin, thetas, gammas, errs,
                           list(raw), list(raw), full)
    if raw and refine_steps > 0:
        ins = [a * h for a, _ in raw] + [b * h for _, b in raw]
        outs = [(a - 1) * h for a, _ in raw] + [(b + 1) * h for _, b in raw]
        edges = _bisect_edges(family, plan, ins, outs, length, eps, refine_steps)
        k = len(raw)
        raw_arcs = [(float(lo), float(hi)) for lo, hi in zip(edges[:k], edges[k:])]
    else:
        raw_arcs = [((a - 0.5) * h, (b + 0.5) * h) for a, b in raw]
    raw_arcs = [(lo % TWO_PI, lo % TWO_PI + (hi - lo)) for lo, hi in raw_arcs]
    shrunk = [(a + margin, b - margin) for a, b in raw if b - a >= 2 * margin]
    arcs = [(a * h % TWO_PI, a * h % TWO_PI + (b - a) * h) for a, b in shrunk]
    return ZeroSetArcs(arcs, eps, grid_size, margin, thetas, gammas, errs,
                       shrunk, raw, raw_arcs)
