"""One-step laws of a zero-drift random walk.

A step ``X`` is represented as a mixture of two halves: with probability
``p_pos`` it is ``+P`` for a positive law ``P``, otherwise ``-M`` for a
nonnegative law ``M``. Every concrete variant below reduces to that form
(see :func:`encode`), which is what the simulation kernels consume.

Laws on a lattice ``d * Z`` are simulated in integer units of ``d`` so that
ties against levels are decided exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import reduce
from typing import Tuple, Union

import numpy as np
from numba import njit

from . import _rng
from .errors import BadProbabilities, DegenerateSupport, InvalidDistribution, NonzeroMean

PROB_TOL = 1e-12
MEAN_TOL = 1e-9

Number = Union[int, float, Fraction]

# kernel codes for a half law
FINITE, EXPONENTIAL, UNIFORM, GEOMETRIC = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# positive laws (halves and queue weights)


@dataclass(frozen=True)
class FiniteLaw:
    """Finite law on nonnegative values, atoms given as ``(value, prob)``."""

    atoms: Tuple[Tuple[Number, Number], ...]

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((v, p) for v, p in self.atoms))

    @property
    def mean(self):
        return sum(v * p for v, p in self.atoms)


@dataclass(frozen=True)
class ExponentialLaw:
    mean: float

    def __post_init__(self):
        if not self.mean > 0:
            raise InvalidDistribution("exponential mean must be positive")


@dataclass(frozen=True)
class UniformLaw:
    low: float
    high: float

    def __post_init__(self):
        if not 0 <= self.low < self.high:
            raise InvalidDistribution("uniform law needs 0 <= low < high")

    @property
    def mean(self):
        return (self.low + self.high) / 2


@dataclass(frozen=True)
class GeometricLaw:
    """Geometric law on ``{1, 2, ...}`` with the given mean (``>= 1``)."""

    mean: float

    def __post_init__(self):
        if not self.mean >= 1:
            raise InvalidDistribution("geometric law on {1,2,...} needs mean >= 1")

    def pmf(self, k):
        if self.mean == 1:
            return 1.0 if k == 1 else 0.0
        s = 1.0 / self.mean
        return s * (1.0 - s) ** (k - 1)


PositiveLaw = Union[FiniteLaw, ExponentialLaw, UniformLaw, GeometricLaw]


def point(value) -> FiniteLaw:
    return FiniteLaw(((value, 1),))


# ---------------------------------------------------------------------------
# step distributions


@dataclass(frozen=True)
class FiniteDiscrete:
    atoms: Tuple[Tuple[Number, Number], ...]

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((v, p) for v, p in self.atoms))


@dataclass(frozen=True)
class PointPosGeometricNeg:
    """``+pos_value`` or ``-pos_value * G`` with ``G`` geometric on {1,2,...}.

    ``P{X > 0} = m / (1 + m)`` for ``m = geo_mean``, which is the unique
    choice giving zero mean.
    """

    pos_value: float
    geo_mean: float


@dataclass(frozen=True)
class PointPosExponentialNeg:
    """``+pos_value`` or ``-E`` with ``E`` exponential of mean ``exp_mean``."""

    pos_value: float
    exp_mean: float


@dataclass(frozen=True)
class Scaled:
    base: "StepDistribution"
    factor: float


@dataclass(frozen=True)
class QueueMixture:
    """Embedded-chain step of a batch queue: ``+X`` w.p. ``p`` else ``-Y``."""

    p_arrival: float
    x_law: PositiveLaw
    y_law: PositiveLaw


StepDistribution = Union[
    FiniteDiscrete, PointPosGeometricNeg, PointPosExponentialNeg, Scaled, QueueMixture
]


class SymmetryClass(str, Enum):
    E_SYMMETRIC = "ESymmetric"
    P_SYMMETRIC = "PSymmetric"
    PURELY_SYMMETRIC = "PurelySymmetric"


@dataclass(frozen=True)
class Moments:
    p_pos: Number
    p_nonzero: Number
    a: Number  # E{X | X > 0}
    neg_mean: Number  # E{X | X <= 0}
    p_nonpos: Number


def finite(*atoms) -> FiniteDiscrete:
    """Shorthand: ``finite((1, .5), (-1, .5))``."""
    return FiniteDiscrete(tuple(atoms))


# ---------------------------------------------------------------------------
# helpers


def _law_has_two_values(law: PositiveLaw) -> bool:
    if isinstance(law, FiniteLaw):
        return sum(1 for _, p in law.atoms if p > 0) >= 2
    if isinstance(law, GeometricLaw):
        return law.mean > 1
    return True


def _check_probs(probs):
    for p in probs:
        if p < 0 or (isinstance(p, float) and math.isnan(p)):
            raise BadProbabilities(f"negative or NaN probability {p!r}")
    total = sum(probs)
    if abs(total - 1) > PROB_TOL:
        raise BadProbabilities(f"probabilities sum to {float(total)!r}, not 1")


def as_fraction(x, max_den=10**6) -> Fraction | None:
    """Exact rational for ``x`` if it is (close to) one with a small denominator."""
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    f = Fraction(x).limit_denominator(max_den)
    if abs(float(f) - x) <= 1e-12 * max(1.0, abs(x)):
        return f
    return None


def lattice_pitch(values) -> Fraction | None:
    """Largest ``d`` with every value an integer multiple of ``d``, or ``None``."""
    fracs = []
    for v in values:
        f = as_fraction(v)
        if f is None:
            return None
        if f != 0:
            fracs.append(abs(f))
    if not fracs:
        return None
    den = reduce(lambda x, y: x * y // math.gcd(x, y), (f.denominator for f in fracs))
    num = reduce(math.gcd, (int(f * den) for f in fracs))
    return Fraction(num, den)


# ---------------------------------------------------------------------------
# validation, classification, moments


def validate(dist: StepDistribution) -> StepDistribution:
    """Check a step law; raise the matching error or return ``dist`` unchanged."""
    if isinstance(dist, Scaled):
        if not dist.factor > 0:
            raise InvalidDistribution("scale factor must be positive")
        validate(dist.base)
        return dist
    if isinstance(dist, FiniteDiscrete):
        if not dist.atoms:
            raise BadProbabilities("no atoms")
        values = [v for v, _ in dist.atoms]
        if len(set(values)) != len(values):
            raise InvalidDistribution("atom values must be distinct")
        _check_probs([p for _, p in dist.atoms])
        if not any(v > 0 and p > 0 for v, p in dist.atoms):
            raise DegenerateSupport("no positive atom: every excursion stops at t = 1")
    elif isinstance(dist, PointPosGeometricNeg):
        if not dist.pos_value > 0:
            raise InvalidDistribution("pos_value must be positive")
        GeometricLaw(dist.geo_mean)
    elif isinstance(dist, PointPosExponentialNeg):
        if not dist.pos_value > 0:
            raise InvalidDistribution("pos_value must be positive")
        ExponentialLaw(dist.exp_mean)
    elif isinstance(dist, QueueMixture):
        if not 0 < dist.p_arrival < 1:
            raise BadProbabilities("arrival probability must lie in (0, 1)")
        for law in (dist.x_law, dist.y_law):
            if isinstance(law, FiniteLaw):
                _check_probs([p for _, p in law.atoms])
                if any(v <= 0 for v, p in law.atoms if p > 0):
                    raise InvalidDistribution("queue weights must be positive")
    else:
        raise InvalidDistribution(f"unknown distribution type {type(dist).__name__}")
    m = moments(dist)
    mean = m.a * m.p_pos + m.neg_mean * m.p_nonpos
    if abs(mean) > MEAN_TOL:
        raise NonzeroMean(f"E X = {float(mean):.6g}, must be 0")
    return dist


def moments(dist: StepDistribution) -> Moments:
    """Closed-form ``P{X>0}``, ``P{X!=0}``, ``E{X|X>0}`` and the negative-part mean."""
    if isinstance(dist, Scaled):
        m = moments(dist.base)
        c = dist.factor
        return Moments(m.p_pos, m.p_nonzero, m.a * c, m.neg_mean * c, m.p_nonpos)
    if isinstance(dist, FiniteDiscrete):
        pos = [(v, p) for v, p in dist.atoms if v > 0]
        neg = [(v, p) for v, p in dist.atoms if v <= 0]
        p_pos = sum(p for _, p in pos)
        p_nonpos = sum(p for _, p in neg)
        p_zero = sum(p for v, p in dist.atoms if v == 0)
        a = sum(v * p for v, p in pos) / p_pos if p_pos else 0
        neg_mean = sum(v * p for v, p in neg) / p_nonpos if p_nonpos else 0
        return Moments(p_pos, 1 - p_zero, a, neg_mean, p_nonpos)
    if isinstance(dist, PointPosGeometricNeg):
        m = dist.geo_mean
        p_pos = m / (1 + m)
        return Moments(p_pos, 1, dist.pos_value, -dist.pos_value * m, 1 - p_pos)
    if isinstance(dist, PointPosExponentialNeg):
        p_pos = dist.exp_mean / (dist.pos_value + dist.exp_mean)
        return Moments(p_pos, 1, dist.pos_value, -dist.exp_mean, 1 - p_pos)
    if isinstance(dist, QueueMixture):
        p = dist.p_arrival
        return Moments(p, 1, dist.x_law.mean, -dist.y_law.mean, 1 - p)
    raise InvalidDistribution(f"unknown distribution type {type(dist).__name__}")


def classify(dist: StepDistribution) -> SymmetryClass:
    """Strongest symmetry class the (validated) law belongs to."""
    validate(dist)
    while isinstance(dist, Scaled):
        dist = dist.base
    if isinstance(dist, FiniteDiscrete):
        mass = {}
        for v, p in dist.atoms:
            if p > 0:
                mass[v] = p
        if all(abs(mass.get(-v, 0) - p) <= PROB_TOL for v, p in mass.items()):
            return SymmetryClass.PURELY_SYMMETRIC
        p_pos = sum(p for v, p in mass.items() if v > 0)
        p_neg = sum(p for v, p in mass.items() if v < 0)
        if abs(p_pos - p_neg) <= PROB_TOL:
            return SymmetryClass.P_SYMMETRIC
        return SymmetryClass.E_SYMMETRIC
    if isinstance(dist, PointPosGeometricNeg):
        # m = 1 degenerates to the symmetric +-d walk
        if dist.geo_mean == 1:
            return SymmetryClass.PURELY_SYMMETRIC
        return SymmetryClass.E_SYMMETRIC
    m = moments(dist)
    p_neg = 1 - m.p_pos  # both remaining variants have no zero atom
    if isinstance(dist, QueueMixture):
        x, y = dist.x_law, dist.y_law
        if abs(m.p_pos - p_neg) <= PROB_TOL and x == y:
            return SymmetryClass.PURELY_SYMMETRIC
    if abs(m.p_pos - p_neg) <= PROB_TOL:
        return SymmetryClass.P_SYMMETRIC
    return SymmetryClass.E_SYMMETRIC


def sd(dist: StepDistribution) -> float:
    """Standard deviation of one step (closed form)."""
    if isinstance(dist, Scaled):
        return sd(dist.base) * dist.factor
    if isinstance(dist, FiniteDiscrete):
        return math.sqrt(sum(float(v) ** 2 * float(p) for v, p in dist.atoms))
    m = moments(dist)
    if isinstance(dist, PointPosGeometricNeg):
        pos2 = dist.pos_value**2
        neg2 = _second_moment(GeometricLaw(dist.geo_mean)) * pos2
    elif isinstance(dist, PointPosExponentialNeg):
        pos2 = dist.pos_value**2
        neg2 = 2 * dist.exp_mean**2
    else:
        pos2 = _second_moment(dist.x_law)
        neg2 = _second_moment(dist.y_law)
    return math.sqrt(m.p_pos * pos2 + m.p_nonpos * neg2)


def _second_moment(law: PositiveLaw) -> float:
    if isinstance(law, FiniteLaw):
        return sum(float(v) ** 2 * float(p) for v, p in law.atoms)
    if isinstance(law, ExponentialLaw):
        return 2 * law.mean**2
    if isinstance(law, UniformLaw):
        return (law.low**2 + law.low * law.high + law.high**2) / 3
    return 2 * law.mean**2 - law.mean


# ---------------------------------------------------------------------------
# kernel encoding


@dataclass(frozen=True)
class HalfCode:
    kind: int
    vals: np.ndarray
    cum: np.ndarray
    a: float = 0.0
    b: float = 0.0

    def args(self):
        return (self.kind, self.vals, self.cum, self.a, self.b)


@dataclass(frozen=True)
class StepCode:
    """Kernel-ready form of a step law, values in units of ``unit``."""

    p_pos: float
    pos: HalfCode
    neg: HalfCode
    unit: float
    lattice: bool

    def args(self):
        return (self.p_pos,) + self.pos.args() + self.neg.args()


_EMPTY = np.zeros(0)


def _finite_code(atoms, unit, lattice) -> HalfCode:
    atoms = [(v, p) for v, p in atoms if p > 0]
    total = float(sum(p for _, p in atoms))
    vals = []
    for v, _ in atoms:
        vals.append(round(as_fraction(v) / unit) if lattice else float(v) / unit)
    cum = np.cumsum([float(p) / total for _, p in atoms])
    cum[-1] = 1.0
    return HalfCode(FINITE, np.asarray(vals, dtype=np.float64), cum)


def _law_code(law: PositiveLaw, unit, lattice) -> HalfCode:
    if isinstance(law, FiniteLaw):
        return _finite_code(law.atoms, unit, lattice)
    if isinstance(law, ExponentialLaw):
        return HalfCode(EXPONENTIAL, _EMPTY, _EMPTY, law.mean / unit)
    if isinstance(law, UniformLaw):
        return HalfCode(UNIFORM, _EMPTY, _EMPTY, law.low / unit, law.high / unit)
    return HalfCode(GEOMETRIC, _EMPTY, _EMPTY, law.mean)


def encode(dist: StepDistribution) -> StepCode:
    """Reduce any variant to the two-half kernel form."""
    if isinstance(dist, Scaled):
        base = encode(dist.base)
        return StepCode(base.p_pos, base.pos, base.neg, base.unit * dist.factor, base.lattice)
    if isinstance(dist, FiniteDiscrete):
        pitch = lattice_pitch([v for v, p in dist.atoms if p > 0])
        lattice = pitch is not None
        unit = pitch if lattice else 1.0
        pos = [(v, p) for v, p in dist.atoms if v > 0]
        neg = [(-v, p) for v, p in dist.atoms if v <= 0]
        p_pos = float(sum(p for _, p in pos))
        neg_code = _finite_code(neg, unit, lattice) if neg else HalfCode(FINITE, np.zeros(1), np.ones(1))
        return StepCode(p_pos, _finite_code(pos, unit, lattice), neg_code, float(unit), lattice)
    if isinstance(dist, PointPosGeometricNeg):
        m = dist.geo_mean
        return StepCode(
            m / (1 + m),
            HalfCode(FINITE, np.ones(1), np.ones(1)),
            HalfCode(GEOMETRIC, _EMPTY, _EMPTY, float(m)),
            float(dist.pos_value),
            True,
        )
    if isinstance(dist, PointPosExponentialNeg):
        mom = moments(dist)
        return StepCode(
            float(mom.p_pos),
            HalfCode(FINITE, np.array([float(dist.pos_value)]), np.ones(1)),
            HalfCode(EXPONENTIAL, _EMPTY, _EMPTY, float(dist.exp_mean)),
            1.0,
            False,
        )
    if isinstance(dist, QueueMixture):
        x, y = dist.x_law, dist.y_law
        pitch = None
        if isinstance(x, FiniteLaw) and isinstance(y, FiniteLaw):
            pitch = lattice_pitch([v for v, p in x.atoms + y.atoms if p > 0])
        lattice = pitch is not None
        unit = pitch if lattice else 1.0
        return StepCode(
            float(dist.p_arrival),
            _law_code(x, unit, lattice),
            _law_code(y, unit, lattice),
            float(unit),
            lattice,
        )
    raise InvalidDistribution(f"unknown distribution type {type(dist).__name__}")


def to_units(code: StepCode, x: float) -> float:
    """Express a real-valued threshold in kernel units, snapping lattice rounding noise."""
    u = x / code.unit
    if code.lattice:
        r = round(u)
        if abs(u - r) <= 1e-9 * max(1.0, abs(u)):
            return float(r)
    return u


@njit(cache=True, inline="always")
def draw_half(kind, vals, cum, a, b, state):
    u = _rng.uniform(state)
    if kind == 0:
        # branch-free inverse CDF; supports are tiny
        i = 0
        for j in range(vals.shape[0] - 1):
            i += u > cum[j]
        return vals[i]
    if kind == 1:
        return -a * math.log(u)
    if kind == 2:
        return a + (b - a) * (1.0 - u)
    if a == 1.0:
        return 1.0
    return 1.0 + math.floor(math.log(u) / math.log1p(-1.0 / a))


@njit(cache=True, inline="always")
def draw_step(p_pos, pk, pv, pc, pa, pb, nk, nv, nc, na, nb, state):
    """One step in kernel units: a sign coin, then one draw from the chosen half."""
    if _rng.uniform(state) <= p_pos:
        return draw_half(pk, pv, pc, pa, pb, state)
    return -draw_half(nk, nv, nc, na, nb, state)


def new_state(seed: int, replication: int = 0) -> np.ndarray:
    """Independent generator state for ``(seed, replication)``."""
    return _rng.seed_state(np.uint64(_rng.master_seed_int(seed)), np.uint64(replication))


def sample(dist: StepDistribution, rng_state: np.ndarray) -> float:
    """Draw one step; advances ``rng_state`` in place."""
    code = encode(dist)
    return draw_step(*code.args(), rng_state) * code.unit


@njit(cache=True)
def _fill(p_pos, pk, pv, pc, pa, pb, nk, nv, nc, na, nb, state, out):
    for i in range(out.shape[0]):
        if _rng.uniform(state) <= p_pos:
            out[i] = draw_half(pk, pv, pc, pa, pb, state)
        else:
            out[i] = -draw_half(nk, nv, nc, na, nb, state)


def sample_n(dist: StepDistribution, rng_state: np.ndarray, n: int) -> np.ndarray:
    """``n`` consecutive draws; same values as ``n`` calls of :func:`sample`."""
    code = encode(dist)
    out = np.empty(int(n))
    _fill(*code.args(), rng_state, out)
    return out * code.unit
