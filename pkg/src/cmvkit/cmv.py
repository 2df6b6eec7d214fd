"""Finite unitary truncations of extended CMV matrices.

The window of sites -n..n is cut out of the two-sided operator by replacing
the coefficients at the two cuts with unimodular values; the Theta blocks at
the cuts become diagonal, so the window is an exact invariant subspace and the
truncation stays unitary.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .ergodic import TWO_PI, ErgodicFamily, OmegaState, rho

UNIT_TOL = 1e-10
MERGE_TOL = 1e-10


class CMVError(ValueError):
    pass


class EigenSolverError(RuntimeError):
    """The eigensolver failed or returned a non-normal Schur factor."""


@dataclass(frozen=True)
class AtomicCircleMeasure:
    """Finite positive measure on the circle: atoms at angles in [0, 2 pi)."""

    angles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        angles = np.mod(np.asarray(self.angles, dtype=float), TWO_PI)
        weights = np.asarray(self.weights, dtype=float)
        if angles.shape != weights.shape:
            raise ValueError("angles and weights must have the same shape")
        if np.any(weights < 0):
            raise ValueError("atom weights must be non-negative")
        order = np.argsort(angles, kind="stable")
        object.__setattr__(self, "angles", angles[order])
        object.__setattr__(self, "weights", weights[order])

    @classmethod
    def from_points(cls, points, weights) -> AtomicCircleMeasure:
        return cls(np.angle(np.asarray(points)), weights)

    @classmethod
    def uniform(cls, count: int, offset: float = 0.0) -> AtomicCircleMeasure:
        """Equispaced discretization of normalized arc length."""
        return cls(offset + TWO_PI * np.arange(count) / count, np.full(count, 1.0 / count))

    @property
    def points(self) -> np.ndarray:
        return np.exp(1j * self.angles)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return self.angles.size

    def moment(self, k: int) -> complex:
        """Integral of tau^k."""
        return complex(np.sum(self.weights * np.exp(1j * k * self.angles)))

    def cdf(self, theta) -> np.ndarray:
        """Mass of the atoms with angle <= theta (theta in [0, 2 pi))."""
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cum[np.searchsorted(self.angles, theta, side="right")]

    def mass_in(self, lo: float, hi: float) -> float:
        """Mass of the closed arc from angle lo counterclockwise to hi."""
        width = hi - lo
        if width >= TWO_PI:
            return self.total_mass
        rel = np.mod(self.angles - lo, TWO_PI)
        return float(np.sum(self.weights[rel <= width]))

    def merged(self, tol: float = MERGE_TOL) -> AtomicCircleMeasure:
        """Merge atoms whose angles differ by less than ``tol``."""
        if len(self) < 2:
            return self
        gaps = np.diff(self.angles) >= tol
        group = np.concatenate([[0], np.cumsum(gaps)])
        # atoms at 2 pi - eps and 0 are the same point
        if TWO_PI - self.angles[-1] + self.angles[0] < tol and group[-1] > 0:
            group[group == group[-1]] = 0
        weights = np.bincount(group, weights=self.weights)
        angles = self.angles[np.unique(group, return_index=True)[1]]
        return AtomicCircleMeasure(angles, weights[: angles.size])

    def pooled(self, other: AtomicCircleMeasure, self_weight: float = 0.5) -> AtomicCircleMeasure:
        return AtomicCircleMeasure(
            np.concatenate([self.angles, other.angles]),
            np.concatenate([self_weight * self.weights, (1 - self_weight) * other.weights]),
        )

    def mean_spacing(self) -> float:
        """Mean gap between atoms as a fraction of the circle."""
        return 1.0 / max(len(self), 1)


def kolmogorov_distance(a: AtomicCircleMeasure, b) -> float:
    """sup over theta of |A(theta) - B(theta)| with CDFs based at angle 0.

    ``b`` is another atomic measure or the string ``"uniform"`` for
    normalized arc length.
    """
    if isinstance(b, str):
        if b != "uniform":
            raise ValueError(b)
        # the sup is attained at an atom, just before or just after its jump
        ca = np.cumsum(a.weights)
        u = a.angles / TWO_PI
        return float(max(np.max(np.abs(ca - u)), np.max(np.abs(ca - a.weights - u)), 0.0))
    grid = np.union1d(a.angles, b.angles)
    return float(np.max(np.abs(a.cdf(grid) - b.cdf(grid))))


# ---------------------------------------------------------------------------
# the matrix


@dataclass(frozen=True, eq=False)
class FiniteCMV:
    """Unitary truncation of an extended CMV matrix to sites -n..n.

    ``alphas`` holds alpha_{-n-1}, ..., alpha_n; the two ends are the
    unimodular boundary values.  Row i of :attr:`matrix` is lattice site
    i - n.
    """

    n: int
    alphas: np.ndarray

    @property
    def size(self) -> int:
        return 2 * self.n + 1

    @property
    def origin(self) -> int:
        """Matrix row of lattice site 0."""
        return self.n

    def row(self, site: int) -> int:
        if not -self.n <= site <= self.n:
            raise CMVError(f"site {site} outside window [-{self.n}, {self.n}]")
        return site + self.n

    def alpha(self, j: int) -> complex:
        return complex(self.alphas[j + self.n + 1])

    @cached_property
    def factors(self) -> tuple[np.ndarray, np.ndarray]:
        """(L, M): direct sums of the even- and odd-indexed Theta blocks."""
        size = self.size
        L = np.zeros((size, size), dtype=complex)
        M = np.zeros((size, size), dtype=complex)
        for j in range(-self.n - 1, self.n + 1):
            a = self.alpha(j)
            r = float(rho(a))
            theta = ((a.conjugate(), r), (r, -a))
            target = L if j % 2 == 0 else M
            for p in range(2):
                for q in range(2):
                    i1, i2 = j + p + self.n, j + q + self.n
                    if 0 <= i1 < size and 0 <= i2 < size:
                        target[i1, i2] = theta[p][q]
        return L, M

    @cached_property
    def matrix(self) -> np.ndarray:
        L, M = self.factors
        return L @ M

    @cached_property
    def eig(self) -> Eigensystem:
        return eigen(self)

    def to_csv(self) -> str:
        """Debug dump: one matrix row per line, re,im pairs."""
        lines = []
        for row in self.matrix:
            lines.append(",".join(f"{v.real:.17g},{v.imag:.17g}" for v in row))
        return "\n".join(lines) + "\n"


def finite_cmv(family: ErgodicFamily, state: OmegaState, n: int,
               beta_left: complex = -1.0, beta_right: complex = -1.0) -> FiniteCMV:
    """Truncate E_omega to sites -n..n with alpha_{-n-1} := beta_left and
    alpha_n := beta_right."""
    if int(n) != n or n <= 0:
        raise CMVError(f"window half-width must be a positive integer, got {n}")
    for name, b in (("beta_left", beta_left), ("beta_right", beta_right)):
        if abs(abs(b) - 1.0) > 1e-12:
            raise CMVError(f"{name} must be unimodular, |{name}| = {abs(b)}")
    n = int(n)
    alphas = np.empty(2 * n + 2, dtype=complex)
    alphas[0] = beta_left
    alphas[1:-1] = family.window(state, -n, n)
    alphas[-1] = beta_right
    return FiniteCMV(n, alphas)


@dataclass(frozen=True, eq=False)
class Eigensystem:
    values: np.ndarray  # unimodular eigenvalues
    vectors: np.ndarray  # columns are orthonormal eigenvectors

    def __iter__(self):
        return iter(zip(self.values, self.vectors.T))


def eigen(finite: FiniteCMV) -> Eigensystem:
    """Complete eigendecomposition from the complex Schur form.

    For a unitary matrix the Schur factor is diagonal and the Schur vectors
    are orthonormal eigenvectors, even across near-degenerate clusters.
    """
    U = finite.matrix
    try:
        T, Z = scipy.linalg.schur(U, output="complex")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"Schur decomposition failed: {exc}") from exc
    off = np.max(np.abs(np.triu(T, 1))) if T.shape[0] > 1 else 0.0
    if not np.isfinite(off) or off > 1e-8:
        raise EigenSolverError(f"Schur factor not diagonal (off-diagonal {off:.3g})")
    values = np.diag(T).copy()
    mod = np.abs(values)
    if np.any(np.abs(mod - 1.0) > UNIT_TOL):
        raise EigenSolverError(f"eigenvalue off the unit circle by {np.max(np.abs(mod - 1)):.3g}")
    values /= mod
    return Eigensystem(values, Z)


def counting_measure(finite: FiniteCMV) -> AtomicCircleMeasure:
    """Normalized eigenvalue counting measure: weight m/(2n+1) per eigenvalue
    of multiplicity m."""
    vals = finite.eig.values
    measure = AtomicCircleMeasure.from_points(vals, np.full(vals.size, 1.0 / finite.size))
    return measure.merged()


def site_spectral_measure(finite: FiniteCMV, site: int = 0) -> AtomicCircleMeasure:
    """Spectral measure of delta_site: atoms (zeta_k, |v_k(site)|^2)."""
    row = finite.row(site)
    eig = finite.eig
    return AtomicCircleMeasure.from_points(eig.values, np.abs(eig.vectors[row]) ** 2)


def truncated_green(finite: FiniteCMV, z, site: int = 0, min_distance: float = 1e-8):
    """<delta_site, (U - z)^{-1} delta_site> from the eigendecomposition.

    Accepts scalar or array ``z``.
    """
    eig = finite.eig
    weights = np.abs(eig.vectors[finite.row(site)]) ** 2
    z_arr = np.asarray(z, dtype=complex)
    diff = eig.values[:, None] - z_arr.reshape(-1)[None, :]
    if np.min(np.abs(diff)) < min_distance:
        raise CMVError("z is within 1e-8 of an eigenvalue of the truncation")
    out = (weights[:, None] / diff).sum(axis=0)
    return complex(out[0]) if z_arr.ndim == 0 else out.reshape(z_arr.shape)


def unitarity_defect(finite: FiniteCMV) -> float:
    U = finite.matrix
    return float(np.max(np.abs(U.conj().T @ U - np.eye(finite.size))))


def phase_gaps(measure: AtomicCircleMeasure, min_gap: float) -> list[tuple[float, float]]:
    """Arcs (lo, hi) free of atoms and wider than ``min_gap`` radians.

    ``hi`` may exceed 2 pi for the gap that wraps past angle zero.
    """
    ang = measure.angles
    if ang.size == 0:
        return [(0.0, TWO_PI)]
    nxt = np.concatenate([ang[1:], [ang[0] + TWO_PI]])
    return [(float(a), float(b)) for a, b in zip(ang, nxt) if b - a > min_gap]


def det_phase_check(finite: FiniteCMV) -> float:
    """|prod(eigenvalues) - det U|; both unimodular."""
    return float(abs(np.prod(finite.eig.values) - np.linalg.det(finite.matrix)))

