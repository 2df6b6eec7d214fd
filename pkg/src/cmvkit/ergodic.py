"""Ergodic families of Verblunsky coefficients.

Each family produces a two-sided sequence ``alpha_n(omega) = f(S^n omega)``
for a concrete dynamical system.  The ergodic measure is never represented
abstractly; a :class:`SamplingPlan` turns it into a finite list of
:class:`OmegaState` samples over which expectations are taken.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Philox counter offset: keeps n + offset positive for every practical n, so
# windows that straddle n = 0 never wrap the 64-bit counter word.
_COUNTER_OFFSET = 1 << 62
_U53 = 1.0 / (1 << 53)


class FamilyError(ValueError):
    """Invalid family parameters or an unsupported plan/family combination."""


@dataclass(frozen=True)
class OmegaState:
    """A point omega of the underlying dynamical system.

    ``shift`` counts applications of S for Periodic and RandomIID families,
    ``phase`` is the rotation angle (in turns) for Quasiperiodic, and
    ``stream`` selects an independent coefficient stream for RandomIID.
    Constant families ignore all three.
    """

    shift: int = 0
    phase: float = 0.0
    stream: int = 0


class ErgodicFamily:
    """Base class; subclasses implement :meth:`window` and :meth:`shift`."""

    kind: str = ""

    @property
    def cap(self) -> float:
        raise NotImplementedError

    @property
    def period(self) -> int | None:
        """Period of the coefficient sequence, or None when aperiodic."""
        return None

    def initial_state(self) -> OmegaState:
        return OmegaState()

    def window(self, state: OmegaState, lo: int, hi: int) -> np.ndarray:
        """Coefficients alpha_lo, ..., alpha_{hi-1} for the given state."""
        raise NotImplementedError

    def shift(self, state: OmegaState) -> OmegaState:
        """Apply the transformation S once."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _check_cap(self) -> None:
        if not (0.0 <= self.cap < 1.0):
            raise FamilyError(f"{self.kind}: |alpha| bound {self.cap} not in [0, 1)")


@dataclass(frozen=True)
class Periodic(ErgodicFamily):
    values: tuple[complex, ...]
    kind = "periodic"

    def __post_init__(self):
        vals = tuple(complex(v) for v in self.values)
        if not vals:
            raise FamilyError("periodic: empty coefficient list")
        object.__setattr__(self, "values", vals)
        self._check_cap()

    @property
    def cap(self) -> float:
        return max(abs(v) for v in self.values)

    @property
    def period(self) -> int:
        return len(self.values)

    def window(self, state, lo, hi):
        idx = (np.arange(lo, hi) + state.shift) % self.period
        return np.asarray(self.values, dtype=complex)[idx]

    def shift(self, state):
        return replace(state, shift=(state.shift + 1) % self.period)

    def to_dict(self):
        return {"kind": self.kind, "values": [[v.real, v.imag] for v in self.values]}


@dataclass(frozen=True)
class Constant(Periodic):
    """Constant sequence alpha_n = alpha; a Periodic family of period one."""

    values: tuple[complex, ...] = field(init=False)
    alpha: complex = 0.0
    kind = "constant"

    def __init__(self, alpha: complex = 0.0):
        object.__setattr__(self, "alpha", complex(alpha))
        object.__setattr__(self, "values", (complex(alpha),))
        self._check_cap()

    def to_dict(self):
        return {"kind": self.kind, "alpha": [self.alpha.real, self.alpha.imag]}


@dataclass(frozen=True)
class Quasiperiodic(ErgodicFamily):
    """alpha_n = coupling * exp(2 pi i (n * frequency + phase)).

    The state's phase is the rotation angle; ``base_phase`` is the phase of
    :meth:`initial_state`.
    """

    coupling: float
    frequency: float
    base_phase: float = 0.0
    kind = "quasiperiodic"

    def __post_init__(self):
        if not (0.0 < self.frequency < 1.0):
            raise FamilyError("quasiperiodic: frequency must lie in (0, 1)")
        self._check_cap()

    @property
    def cap(self) -> float:
        return abs(self.coupling)

    def initial_state(self):
        return OmegaState(phase=self.base_phase % 1.0)

    def window(self, state, lo, hi):
        turns = np.mod(np.arange(lo, hi) * self.frequency + state.phase, 1.0)
        return self.coupling * np.exp(1j * TWO_PI * turns)

    def shift(self, state):
        return replace(state, phase=(state.phase + self.frequency) % 1.0)

    def to_dict(self):
        return {"kind": self.kind, "coupling": self.coupling,
                "frequency": self.frequency, "base_phase": self.base_phase}


@dataclass(frozen=True)
class RandomIID(ErgodicFamily):
    """I.i.d. coefficients, uniform on the disk ``|alpha| <= radius``.

    Coefficient n of stream j depends only on (seed, j, n): it is read from
    the Philox block with key (seed, j) and counter n, so any window can be
    generated without producing its prefix.
    """

    radius: float
    seed: int = 0
    kind = "random_iid"

    def __post_init__(self):
        if self.radius < 0:
            raise FamilyError("random_iid: radius must be non-negative")
        if not (0 <= self.seed < 1 << 64):
            raise FamilyError("random_iid: seed must be an unsigned 64-bit integer")
        self._check_cap()

    @property
    def cap(self) -> float:
        return self.radius

    def window(self, state, lo, hi):
        count = hi - lo
        if count <= 0:
            return np.zeros(0, dtype=complex)
        position = lo + state.shift
        counter = np.array([position + _COUNTER_OFFSET, 0, 0, 0], dtype=np.uint64)
        key = np.array([self.seed, state.stream], dtype=np.uint64)
        raw = np.random.Philox(key=key, counter=counter).random_raw(4 * count)
        words = raw.reshape(count, 4)
        u_rad = (words[:, 0] >> np.uint64(11)).astype(np.float64) * _U53
        u_ang = (words[:, 1] >> np.uint64(11)).astype(np.float64) * _U53
        return self.radius * np.sqrt(u_rad) * np.exp(1j * TWO_PI * u_ang)

    def shift(self, state):
        return replace(state, shift=state.shift + 1)

    def to_dict(self):
        return {"kind": self.kind, "radius": self.radius, "seed": self.seed}


def alpha_at(family: ErgodicFamily, state: OmegaState, n: int) -> complex:
    """alpha_n(omega) for a single integer n."""
    return complex(family.window(state, n, n + 1)[0])


def rho(alpha):
    """rho = sqrt(1 - |alpha|^2), elementwise; zero for unimodular alpha."""
    return np.sqrt(np.maximum(0.0, 1.0 - np.abs(alpha) ** 2))


def family_from_dict(spec: dict) -> ErgodicFamily:
    """Build a family from its JSON form (complex numbers as [re, im])."""
    kind = spec.get("kind")
    try:
        if kind == "constant":
            return Constant(_complex(spec["alpha"]))
        if kind == "periodic":
            return Periodic(tuple(_complex(v) for v in spec["values"]))
        if kind == "quasiperiodic":
            return Quasiperiodic(float(spec["coupling"]), float(spec["frequency"]),
                                 float(spec.get("base_phase", 0.0)))
        if kind == "random_iid":
            return RandomIID(float(spec["radius"]), int(spec.get("seed", 0)))
    except KeyError as exc:
        raise FamilyError(f"{kind}: missing field {exc.args[0]!r}") from None
    raise FamilyError(f"unknown family kind {kind!r}")


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise FamilyError(f"complex value must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


# ---------------------------------------------------------------------------
# Sampling plans and expectations


@dataclass(frozen=True)
class SamplingPlan:
    """How E(.) is realized: ``exact`` (uniform over the shifts of a periodic
    family) or ``montecarlo`` (``count`` seeded samples)."""

    mode: str = "exact"
    count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact", "montecarlo"):
            raise FamilyError(f"unknown sampling mode {self.mode!r}")
        if self.count < 1:
            raise FamilyError("sample count must be at least 1")

    @classmethod
    def exact(cls) -> SamplingPlan:
        return cls("exact")

    @classmethod
    def monte_carlo(cls, count: int, seed: int = 0) -> SamplingPlan:
        return cls("montecarlo", count, seed)

    def states(self, family: ErgodicFamily) -> list[OmegaState]:
        if self.mode == "exact":
            if family.period is None:
                raise FamilyError(f"exact averaging needs a periodic family, not {family.kind}")
            return [OmegaState(shift=s) for s in range(family.period)]
        if isinstance(family, RandomIID):
            # the family seed fixes the coefficient law; samples are streams 0..count-1
            return [OmegaState(stream=j) for j in range(self.count)]
        rng = np.random.Generator(np.random.Philox(key=self.seed))
        if isinstance(family, Quasiperiodic):
            return [OmegaState(phase=float(u)) for u in rng.random(self.count)]
        return [OmegaState(shift=int(s)) for s in rng.integers(0, family.period, self.count)]

    def to_dict(self):
        return {"mode": self.mode, "count": self.count, "seed": self.seed}


def plan_from_dict(spec: dict) -> SamplingPlan:
    return SamplingPlan(spec.get("mode", "exact"), int(spec.get("count", 1)),
                        int(spec.get("seed", 0)))


@dataclass(frozen=True)
class Expectation:
    mean: complex
    stderr: float
    count: int


def expectation(family: ErgodicFamily, plan: SamplingPlan,
                observable: Callable[[OmegaState], complex]) -> Expectation:
    """Average ``observable`` over the plan's states.

    Exact plans return the arithmetic mean over the period with zero error;
    Monte Carlo plans also report the standard error of the mean.
    """
    values = np.array([observable(s) for s in plan.states(family)], dtype=complex)
    return summarize(values, exact=plan.mode == "exact")


def summarize(values: Sequence[complex], exact: bool = False) -> Expectation:
    """Mean and standard error of per-sample values, in sample order."""
    values = np.asarray(values, dtype=complex)
    mean = complex(np.mean(values))
    if exact or values.size < 2:
        return Expectation(mean, 0.0, values.size)
    var = np.var(values.real, ddof=1) + np.var(values.imag, ddof=1)
    return Expectation(mean, float(math.sqrt(var / values.size)), values.size)
