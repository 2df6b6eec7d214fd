"""Verification suites for the averaging formula, its corollary and the
functional identities linking the DOS, the Lyapunov exponent and the Schur
functions.

Every check compares two independent numerical routes and returns a
:class:`CheckReport`; discrepancies are computed over converged points only.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .boundary import RadialLadder, as_evaluator, atom_mass, effective_ladder
from .cocycle import DEFAULT_EPS, DEFAULT_MARGIN, DEFAULT_N, ZeroSetArcs, lyapunov_grid, zero_set
from .dos import (DOSApproximation, ThoulessPotential, density_of_states, dos_average_check, k_ac,
                  rho_infinity, thouless_gamma)
from .ergodic import TWO_PI, ErgodicFamily, SamplingPlan
from .schur import SchurEvaluator, nu_ac, schur_eval


@dataclass
class CheckReport:
    """Per-point comparison of two routes plus summary statistics.

    ``sup`` and ``l1`` (mean absolute discrepancy) use converged points only;
    the ``*_inner`` variants additionally drop the outermost grid point at
    each end of every arc.  ``vacuous`` marks a check whose hypothesis set was
    empty; ``evidence`` then says why.
    """

    name: str
    grid: str
    x: list = field(default_factory=list)
    lhs: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    inner: list = field(default_factory=list)
    sup: float | None = None
    l1: float | None = None
    sup_inner: float | None = None
    l1_inner: float | None = None
    mean_signed: float | None = None
    converged_fraction: float = 0.0
    tolerance: float | None = None
    passed: bool = False
    vacuous: bool = False
    params: dict = field(default_factory=dict)
    evidence: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def summarize(self, tolerance: float | None = None) -> CheckReport:
        self.tolerance = tolerance
        if self.vacuous:
            self.passed = True
            return self
        lhs = np.asarray(self.lhs)
        rhs = np.asarray(self.rhs)
        conv = np.asarray(self.converged, bool) if self.converged else np.ones(lhs.shape, bool)
        inner = np.asarray(self.inner, bool) if self.inner else np.ones(lhs.shape, bool)
        self.converged = conv.tolist()
        self.inner = inner.tolist()
        self.converged_fraction = float(conv.mean()) if conv.size else 0.0
        diff = lhs - rhs
        if conv.any():
            self.sup = float(np.max(np.abs(diff[conv])))
            self.l1 = float(np.mean(np.abs(diff[conv])))
            if np.isrealobj(diff):
                self.mean_signed = float(np.mean(diff[conv]))
        if (conv & inner).any():
            self.sup_inner = float(np.max(np.abs(diff[conv & inner])))
            self.l1_inner = float(np.mean(np.abs(diff[conv & inner])))
        self.passed = self.sup is not None and (tolerance is None or self.sup <= tolerance)
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("x", "lhs", "rhs"):
            d[key] = [_jsonable(v) for v in d[key]]
        return _jsonable(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x_re", "x_im", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "converged", "inner"])
        for i, x in enumerate(self.x):
            row = []
            for v in (x, self.lhs[i], self.rhs[i]):
                c = complex(v)
                row += [f"{c.real:.17g}", f"{c.imag:.17g}"]
            conv = self.converged[i] if self.converged else True
            inner = self.inner[i] if self.inner else True
            w.writerow(row + [int(conv), int(inner)])
        return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


@dataclass(frozen=True)
class CheckParams:
    """Numerical parameters shared by the checks.

    ``n`` truncation half-width, ``length`` cocycle length, ``grid`` circle
    grid size for the zero set, ``eps``/``margin`` zero-set threshold and
    band-edge margin in cells, ``ladder`` radial ladder for boundary values.
    """

    n: int = 400
    length: int = DEFAULT_N
    grid: int = 512
    eps: float = DEFAULT_EPS
    margin: int = DEFAULT_MARGIN
    ladder: RadialLadder = RadialLadder()
    boundary: tuple = (-1.0, -1.0)
    threads: int = 1

    def to_dict(self):
        # the thread count never changes results, so it stays out of reports
        d = asdict(self)
        del d["threads"]
        d["ladder"] = self.ladder.to_dict()
        d["boundary"] = [[complex(b).real, complex(b).imag] for b in self.boundary]
        return d


def _inner_mask(zs: ZeroSetArcs, idx: np.ndarray) -> np.ndarray:
    ends = set()
    for a, b in zs.index_runs:
        ends.add(a % zs.grid_size)
        ends.add(b % zs.grid_size)
    return np.array([i not in ends for i in idx], bool)


def _vacuous(name: str, zs: ZeroSetArcs, params: CheckParams) -> CheckReport:
    rep = CheckReport(name, f"circle grid of {zs.grid_size}: zero set empty", vacuous=True,
                      params=params.to_dict())
    rep.evidence = {"gamma_min": float(np.min(zs.gammas)),
                    "gamma_max": float(np.max(zs.gammas)),
                    "gamma_stderr_max": float(np.max(zs.stderrs)), "eps": zs.eps}
    return rep.summarize()


def _mean_nu_ac(family, plan, theta, ladder):
    vals, flags = [], []
    for s in plan.states(family):
        v, c = nu_ac(family, s, theta, ladder)
        vals.append(v)
        flags.append(c)
    return np.mean(vals, axis=0), np.all(flags, axis=0)


def theorem1_check(family: ErgodicFamily, plan: SamplingPlan, params: CheckParams = CheckParams(),
                   tolerance: float = 5e-2, dos: DOSApproximation | None = None,
                   zs: ZeroSetArcs | None = None) -> CheckReport:
    """k_ac(theta) from the DOS versus E(nu_ac(theta)) from Schur functions,
    on the grid points of the margin-shrunk zero set."""
    if zs is None:
        zs = zero_set(family, plan, params.grid, params.length, params.eps, params.margin,
                      refine_steps=0)
    if zs.empty:
        return _vacuous("theorem1", zs, params)
    idx = zs.grid_indices()
    theta = zs.thetas[idx]
    if dos is None:
        dos = density_of_states(family, plan, params.n, params.boundary, diagnostic=False,
                                threads=params.threads)
    pot = ThoulessPotential(dos, 1.0)
    lhs, lconv = k_ac(pot, theta, params.ladder)
    rhs, rconv = _mean_nu_ac(family, plan, theta, params.ladder)
    rep = CheckReport("theorem1", f"{idx.size} of {zs.grid_size} circle grid points in shrunk Z",
                      x=theta.tolist(), lhs=np.asarray(lhs).tolist(), rhs=np.asarray(rhs).tolist(),
                      converged=(lconv & rconv).tolist(), inner=_inner_mask(zs, idx).tolist(),
                      params=params.to_dict())
    rep.extra = {"arcs": zs.arcs, "lhs_converged_fraction": float(np.mean(lconv)),
                 "rhs_converged_fraction": float(np.mean(rconv))}
    rep.summarize(tolerance)
    # signed discrepancies should straddle zero rather than lean to one side
    rep.extra["centered"] = rep.mean_signed is not None and abs(rep.mean_signed) <= 0.1 * tolerance
    rep.passed = rep.passed and rep.extra["centered"]
    return rep


def find_plateau(values, width: int = 3, spread: float = 1e-2):
    """Window of ``width`` consecutive rungs with the smallest spread.

    Returns ``(start, value, spread, found)``; ``value`` is the window median
    and ``found`` tells whether the spread is within ``spread``.
    """
    values = np.asarray(values, dtype=float)
    best = None
    for i in range(values.size - width + 1):
        win = values[i:i + width]
        s = float(win.max() - win.min())
        if best is None or s < best[2]:
            best = (i, float(np.median(win)), s)
    if best is None:
        return None, float("nan"), float("inf"), False
    return best[0], best[1], best[2], best[2] <= spread


def interior_points(zs: ZeroSetArcs, count: int, core: float = 0.5) -> np.ndarray:
    """``count`` grid angles from the central ``core`` fraction of the arcs.

    Near an edge the ladder cannot settle until 1 - r is below the distance
    to the edge, so the off-circle route is sampled away from the edges.
    """
    idx = zs.grid_indices()
    theta = zs.thetas[idx]
    keep = np.zeros(idx.size, bool)
    for lo, hi in zs.arcs:
        rel = np.mod(theta - lo, TWO_PI) / max(hi - lo, 1e-300)
        keep |= (rel >= 0.5 - core / 2) & (rel <= 0.5 + core / 2)
    theta = theta[keep]
    if theta.size == 0:
        return theta
    pick = np.linspace(0, theta.size - 1, min(count, theta.size)).round().astype(int)
    return theta[pick]


def bigcalc_check(family: ErgodicFamily, plan: SamplingPlan, params: CheckParams = CheckParams(),
                  theta=None, points: int = 8, tolerance: float = 1e-1,
                  plateau_spread: float = 1e-2, dos: DOSApproximation | None = None,
                  zs: ZeroSetArcs | None = None) -> CheckReport:
    """k_ac(theta) versus the ladder 1/(2 pi) + gamma(r e^{i theta}) / (pi (1 - r)).

    The right side is read off at its most stable window of three rungs; a
    point counts as converged when that window is within ``plateau_spread``.
    Whether the left side's own ladder settled is kept in
    ``extra["lhs_converged"]``.
    """
    if zs is None:
        zs = zero_set(family, plan, params.grid, params.length, params.eps, params.margin,
                      refine_steps=0)
    if zs.empty:
        return _vacuous("bigcalc", zs, params)
    if theta is None:
        theta = interior_points(zs, points)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if dos is None:
        dos = density_of_states(family, plan, params.n, params.boundary, diagnostic=False,
                                threads=params.threads)
    lhs, lconv = k_ac(ThoulessPotential(dos, 1.0), theta, params.ladder)
    r = params.ladder.radii
    z = r[:, None] * np.exp(1j * theta)[None, :]
    gam, _ = lyapunov_grid(family, plan, z, params.length)
    ladder_rhs = 1 / TWO_PI + gam / (math.pi * (1 - r[:, None]))
    rhs, conv, windows = [], [], []
    for j in range(theta.size):
        start, value, spread, found = find_plateau(ladder_rhs[:, j], 3, plateau_spread)
        rhs.append(value)
        conv.append(bool(found))
        windows.append({"start_m": int(params.ladder.ms[start]), "spread": spread})
    rep = CheckReport("bigcalc", f"{theta.size} interior points of Z, ladder m={params.ladder.m_lo}"
                      f"..{params.ladder.m_hi}", x=theta.tolist(), lhs=np.asarray(lhs).tolist(),
                      rhs=rhs, converged=conv, params=params.to_dict())
    rep.extra = {"ladder_rhs": ladder_rhs.T.tolist(), "plateaus": windows,
                 "lhs_converged": np.asarray(lconv).tolist(),
                 "ladder_m": params.ladder.ms.tolist()}
    return rep.summarize(tolerance)


def default_disk_grid(radii=(0.3, 0.6, 0.9), angles: int = 8) -> np.ndarray:
    phi = TWO_PI * np.arange(angles) / angles
    pts = [0j] + [r * np.exp(1j * p) for r in radii for p in phi]
    return np.array(pts)


def gamma_from_schur(family: ErgodicFamily, plan: SamplingPlan, z) -> np.ndarray:
    """(1/2) E log((1 - |z f_+|^2) / (1 - |f_+|^2))."""
    z = np.asarray(z, dtype=complex)
    vals = []
    for s in plan.states(family):
        fp = schur_eval(SchurEvaluator(family, s, "+"), z)
        vals.append(0.5 * np.log((1 - np.abs(z * fp) ** 2) / (1 - np.abs(fp) ** 2)))
    return np.mean(vals, axis=0)


def gamma_schur_check(family: ErgodicFamily, plan: SamplingPlan, zs=None,
                      params: CheckParams = CheckParams(), tolerance: float = 1e-2) -> CheckReport:
    """Cocycle Lyapunov exponent versus its Schur-function expression."""
    zs = default_disk_grid() if zs is None else np.atleast_1d(np.asarray(zs, dtype=complex))
    if np.any(np.abs(zs) > 0.95):
        raise ValueError("gamma/Schur check uses |z| <= 0.95")
    lhs, _ = lyapunov_grid(family, plan, zs, params.length)
    rhs = gamma_from_schur(family, plan, zs)
    rep = CheckReport("gamma_schur", f"{zs.size} disk points", x=zs.tolist(), lhs=lhs.tolist(),
                      rhs=rhs.tolist(), params=params.to_dict())
    return rep.summarize(tolerance)


def thouless_check(family: ErgodicFamily, plan: SamplingPlan, zs=None,
                   params: CheckParams = CheckParams(n=200), tolerance: float = 5e-2,
                   average_tolerance: float | None = 1e-3,
                   dos: DOSApproximation | None = None) -> CheckReport:
    """Cocycle gamma(z) versus Re Gamma(z) from the DOS; the averaged Green
    identity is evaluated at the grid points inside the disk."""
    if zs is None:
        zs = np.r_[0j, 0.9 * np.exp(1j * TWO_PI * np.arange(16) / 16)]
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    if dos is None:
        dos = density_of_states(family, plan, params.n, params.boundary, diagnostic=False,
                                threads=params.threads)
    pot = ThoulessPotential(dos, rho_infinity(family, plan, params.length))
    lhs, errs = lyapunov_grid(family, plan, zs, params.length)
    rhs = thouless_gamma(pot, zs)
    rep = CheckReport("thouless", f"{zs.size} spectral parameters", x=zs.tolist(),
                      lhs=lhs.tolist(), rhs=np.asarray(rhs).tolist(), params=params.to_dict())
    rep.summarize(tolerance)
    inside = zs[np.abs(zs) < 1]
    lhs_g, rhs_g = dos_average_check(family, plan, params.n, inside, params.boundary, dos)
    pairs = [{"z": z, "lhs": a, "rhs": b, "gap": float(abs(a - b))}
             for z, a, b in zip(inside, lhs_g, rhs_g)]
    gap = max((p["gap"] for p in pairs), default=None)
    rep.extra = {"lyapunov_stderr": errs.tolist(), "rho_inf": pot.rho_inf,
                 "average_green": pairs, "average_green_sup": gap,
                 "average_green_tolerance": average_tolerance}
    return rep


# ---------------------------------------------------------------------------
# corollary


@dataclass(frozen=True)
class CorollaryTolerances:
    atom: float = 1e-2
    z_mass: float = 0.98
    chain: float = 0.95


def _arc_quadrature(lo: float, hi: float, nodes: int):
    """Nodes and weights on [lo, hi] from Gauss-Legendre under the cosine map,
    which absorbs inverse square-root end-point singularities."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * math.pi * (t + 1)
    theta = lo + 0.5 * (hi - lo) * (1 - np.cos(u))
    weight = w * 0.25 * math.pi * (hi - lo) * np.sin(u)
    return theta, weight


def z_integral(family, plan, arcs, ladder: RadialLadder, nodes: int = 256) -> float:
    """Integral over the arcs of E(nu_ac) d theta (total mass 1 for a
    purely a.c. measure supported on the arcs)."""
    total = 0.0
    for lo, hi in arcs:
        theta, weight = _arc_quadrature(lo, hi, nodes)
        vals, _ = _mean_nu_ac(family, plan, theta, ladder)
        total += float(np.sum(vals * weight))
    return total


def _near_edges(theta, arcs, width: float) -> np.ndarray:
    out = np.zeros(np.shape(theta), bool)
    for lo, hi in arcs:
        for edge in (lo, hi):
            d = np.abs(np.mod(theta - edge + np.pi, TWO_PI) - np.pi)
            out |= d < width
    return out


def corollary_check(family: ErgodicFamily, plan: SamplingPlan,
                    params: CheckParams = CheckParams(grid=4096),
                    tolerances: CorollaryTolerances = CorollaryTolerances(),
                    nodes: int = 256, guard_factor: float = 2.0,
                    dos: DOSApproximation | None = None) -> CheckReport:
    """The corollary's three numbers.

    (i) the largest DOS atom-mass probe on the circle grid, leaving out points
    within ``guard_factor * (1 - r)`` of an arc end (the unguarded value is
    reported too), (ii) the DOS mass of the
    detected zero set, (iii) the integral of E(nu_ac) over the margin-shrunk
    zero set, also reported for every smaller margin.
    """
    zs = zero_set(family, plan, params.grid, params.length, params.eps, params.margin)
    if dos is None:
        dos = density_of_states(family, plan, params.n, params.boundary, diagnostic=False,
                                threads=params.threads)
    ev = as_evaluator(dos.measure)
    probe = np.asarray(atom_mass(ev, zs.thetas, params.ladder))
    # the probe resolves angles down to 1 - r on its last rung; closer to a
    # band edge the inverse square-root density is indistinguishable from mass
    guard_width = float(guard_factor * (1 - effective_ladder(ev, params.ladder).radii[-1]))
    guard = ~_near_edges(zs.thetas, zs.raw_arcs, guard_width)
    atom_all = float(probe.max())
    atom_guarded = float(probe[guard].max())
    z_mass = sum(dos.measure.mass_in(lo, hi) for lo, hi in zs.raw_arcs)
    chain_by_margin = {}
    for m in range(params.margin, -1, -1):
        arcs = zs.shrunk_arcs(m)
        chain_by_margin[m] = z_integral(family, plan, arcs, params.ladder, nodes) if arcs else 0.0
    chain = chain_by_margin[params.margin]
    hyp = atom_guarded <= tolerances.atom and z_mass >= tolerances.z_mass
    rep = CheckReport("corollary", f"circle grid of {zs.grid_size}, {len(zs.raw_arcs)} arcs",
                      x=["atom_probe", "z_mass", "chain"], lhs=[atom_guarded, z_mass, chain],
                      rhs=[tolerances.atom, tolerances.z_mass, tolerances.chain],
                      params=params.to_dict())
    rep.extra = {
        "atom_probe": atom_guarded,
        "atom_probe_unguarded": atom_all,
        "atom_guard_width": guard_width,
        "z_mass": z_mass,
        "chain": chain,
        "chain_by_margin": chain_by_margin,
        "raw_arcs": zs.raw_arcs,
        "lebesgue_fraction": zs.lebesgue_fraction(),
        "gamma_min": float(np.min(zs.gammas)),
        "hypotheses_hold": bool(hyp),
        "branch": "hypotheses hold" if hyp else "hypotheses fail",
    }
    rep.tolerance = None
    rep.converged = [True, True, True]
    rep.converged_fraction = 1.0
    # the chain is asserted only when the hypotheses hold
    rep.passed = bool(hyp and chain >= tolerances.chain) or not hyp
    return rep
