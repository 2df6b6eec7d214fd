"""Half-line Schur functions f_+ and f_- and the whole-line functions built
from them.

The Schur parameters of the half-line spectral measure are its Verblunsky
coefficients, so f is the continued fraction

    f_j(z) = (g_j + z f_{j+1}(z)) / (1 + conj(g_j) z f_{j+1}(z)),   f_N = 0,

with g_j = alpha_j for f_+ and g_j = -conj(alpha_{-1-j}) for f_-.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import RadialLadder, ac_density
from .ergodic import TWO_PI, ErgodicFamily, OmegaState

TAIL_TOL = 1e-10
GEOMETRIC_TOL = 1e-14
MAX_DEPTH = 1 << 22


class SchurError(ValueError):
    pass


@dataclass(frozen=True)
class SchurEvaluator:
    """Schur function of the half-line operator to the right (``"+"``) or
    left (``"-"``) of site 0.

    ``depth=None`` selects the adaptive policy: the depth doubles until two
    successive values agree to ``TAIL_TOL`` or ``|z|^depth < GEOMETRIC_TOL``.
    """

    family: ErgodicFamily
    state: OmegaState
    direction: str = "+"
    depth: int | None = None

    def __post_init__(self):
        if self.direction not in ("+", "-"):
            raise SchurError(f"direction must be '+' or '-', not {self.direction!r}")
        if self.depth is not None and self.depth < 1:
            raise SchurError("depth must be at least 1")

    def parameters(self, count: int) -> np.ndarray:
        """Schur parameters g_0, ..., g_{count-1}."""
        if self.direction == "+":
            return self.family.window(self.state, 0, count)
        return -np.conj(self.family.window(self.state, -count, 0)[::-1])

    def __call__(self, z):
        return schur_eval(self, z)


def continued_fraction(params, z) -> np.ndarray:
    """Backward Schur recursion with zero tail, vectorized over ``z``."""
    z = np.asarray(z, dtype=complex)
    f = np.zeros(z.shape, complex)
    for g in params[::-1]:
        zf = z * f
        f = (g + zf) / (1.0 + np.conj(g) * zf)
    return f


def _mobius_product(params, z, start=None):
    """Accumulate P <- P @ [[z, g], [conj(g) z, 1]] over ``params``.

    P applied to w = 0 is the depth-len(params) continued fraction; the
    product is rescaled each step so only ratios are meaningful.
    """
    if start is None:
        p00 = np.ones(z.shape, complex)
        p01 = np.zeros(z.shape, complex)
        p10 = np.zeros(z.shape, complex)
        p11 = np.ones(z.shape, complex)
    else:
        p00, p01, p10, p11 = start
    for g in params:
        gb = np.conj(g)
        p00, p01, p10, p11 = (
            p00 * z + p01 * gb * z, p00 * g + p01,
            p10 * z + p11 * gb * z, p10 * g + p11,
        )
        s = np.maximum(np.abs(p00) + np.abs(p01), np.abs(p10) + np.abs(p11))
        p00, p01, p10, p11 = p00 / s, p01 / s, p10 / s, p11 / s
    return p00, p01, p10, p11


def _matmul(a, b):
    a00, a01, a10, a11 = a
    b00, b01, b10, b11 = b
    c = (a00 * b00 + a01 * b10, a00 * b01 + a01 * b11,
         a10 * b00 + a11 * b10, a10 * b01 + a11 * b11)
    s = np.maximum(np.abs(c[0]) + np.abs(c[1]), np.abs(c[2]) + np.abs(c[3]))
    return tuple(x / s for x in c)


def _adaptive_periodic(ev: SchurEvaluator, z: np.ndarray):
    """Depth p * 2^k by repeated squaring of the period's Mobius product."""
    period = ev.family.period
    block = _mobius_product(ev.parameters(period), z)
    prev = block[1] / block[3]
    depth = period
    done = np.abs(z) ** depth < GEOMETRIC_TOL
    value = prev.copy()
    while not done.all() and depth < MAX_DEPTH:
        block = _matmul(block, block)
        depth *= 2
        cur = block[1] / block[3]
        newly = ~done & ((np.abs(cur - prev) < TAIL_TOL) | (np.abs(z) ** depth < GEOMETRIC_TOL))
        value = np.where(~done, cur, value)
        done |= newly
        prev = cur
    return value, done


def _adaptive_general(ev: SchurEvaluator, z: np.ndarray, start_depth: int = 64):
    depth = start_depth
    prod = _mobius_product(ev.parameters(depth), z)
    prev = prod[1] / prod[3]
    value = prev.copy()
    done = np.abs(z) ** depth < GEOMETRIC_TOL
    while not done.all() and depth < MAX_DEPTH:
        params = ev.parameters(2 * depth)[depth:]
        prod = _mobius_product(params, z, prod)
        depth *= 2
        cur = prod[1] / prod[3]
        newly = ~done & ((np.abs(cur - prev) < TAIL_TOL) | (np.abs(z) ** depth < GEOMETRIC_TOL))
        value = np.where(~done, cur, value)
        done |= newly
        prev = cur
    return value, done


def schur_eval(ev: SchurEvaluator, z, return_converged: bool = False):
    """Evaluate the Schur function at ``z`` in the open disk (scalar or array)."""
    z_arr = np.asarray(z, dtype=complex)
    if np.any(np.abs(z_arr) >= 1):
        raise SchurError("Schur functions are evaluated only inside the unit disk")
    flat = z_arr.reshape(-1)
    if ev.depth is not None:
        value = continued_fraction(ev.parameters(ev.depth), flat)
        done = np.ones(flat.shape, bool)
    elif ev.family.period is not None:
        value, done = _adaptive_periodic(ev, flat)
    else:
        value, done = _adaptive_general(ev, flat)
    value = complex(value[0]) if z_arr.ndim == 0 else value.reshape(z_arr.shape)
    if return_converged:
        return value, (bool(done[0]) if z_arr.ndim == 0 else done.reshape(z_arr.shape))
    return value


def _pair(family, state, z, depth):
    fp = schur_eval(SchurEvaluator(family, state, "+", depth), z)
    fm = schur_eval(SchurEvaluator(family, state, "-", depth), z)
    return fp, fm


def caratheodory_F(family: ErgodicFamily, state: OmegaState, z, depth: int | None = None):
    """F(z) = (1 + z f_+ f_-) / (1 - z f_+ f_-)."""
    z = np.asarray(z, dtype=complex)
    fp, fm = _pair(family, state, z, depth)
    w = z * fp * fm
    out = (1 + w) / (1 - w)
    return complex(out) if out.ndim == 0 else out


def green_from_schur(family: ErgodicFamily, state: OmegaState, z, depth: int | None = None):
    """G(z) = f_+ f_- / (1 - z f_+ f_-)."""
    z = np.asarray(z, dtype=complex)
    fp, fm = _pair(family, state, z, depth)
    out = fp * fm / (1 - z * fp * fm)
    return complex(out) if out.ndim == 0 else out


def schur_caratheodory(family: ErgodicFamily, state: OmegaState, depth: int | None = None):
    """F_omega as a callable, for the boundary-value machinery."""
    return lambda z: caratheodory_F(family, state, z, depth)


def nu_ac(family: ErgodicFamily, state: OmegaState, theta, ladder: RadialLadder | None = None):
    """Density of the a.c. part of the site-0 spectral measure from radial
    limits of Re F; returns ``(density, converged)``."""
    return ac_density(schur_caratheodory(family, state), theta, ladder or RadialLadder())


def reflectionless_nu(family: ErgodicFamily, state: OmegaState, theta, r: float):
    """(1/2 pi) (1 + |f_+|^2) / (1 - |f_+|^2) at r e^{i theta}."""
    z = r * np.exp(1j * np.asarray(theta, dtype=float))
    a2 = np.abs(schur_eval(SchurEvaluator(family, state, "+"), z)) ** 2
    return (1 + a2) / (1 - a2) / TWO_PI


def reflectionless_defect(family: ErgodicFamily, state: OmegaState, theta, r: float):
    """|f_+(z) - conj(z f_-(z))| at z = r e^{i theta}."""
    if not 0 < r < 1:
        raise SchurError("r must lie in (0, 1)")
    z = r * np.exp(1j * np.asarray(theta, dtype=float))
    fp, fm = _pair(family, state, z, None)
    out = np.abs(fp - np.conj(z * fm))
    return float(out) if np.ndim(out) == 0 else out


def half_line_schur_from_measure(measure, z: complex) -> complex:
    """(1/z)(K - 1)/(K + 1) from a half-line spectral measure (check route)."""
    from .boundary import herglotz_eval

    K = herglotz_eval(measure, z)
    return complex((K - 1) / (K + 1) / z)
