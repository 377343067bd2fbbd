"""Exact excursion statistics for walks on a lattice ``d * Z``.

The walk observed while strictly positive is a transient Markov chain on
``{1, ..., C}`` (lattice units). Upward overshoot beyond the ceiling ``C`` is
clipped to ``C``; the bias this introduces only affects paths that reach
``C`` and vanishes as ``C`` grows, so every solve is repeated on a growing
ceiling until two successive rounds agree to ``tol``.

Three kinds of quantity are computed from the fundamental matrix
``(I - Q)^-1``:

* expected traversals of the crossing edges ``s < alpha <= s'``,
* the law of the absorption point ``S_tau`` given ``X_1 > 0``,
* the laws of ``S_{t_i - 1}`` and ``S_{tau_i}`` for the first two crossing
  episodes, via three stages: below ``alpha`` until a crossing (stage A),
  above ``alpha`` until the first drop below it (stage B), and again below
  ``alpha`` until a second crossing.

When the step probabilities are rational and the chain is small, the
solves run in exact :class:`fractions.Fraction` arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import steps as _steps
from .formulas import FormulaInputs
from .errors import InvalidDistribution, NoConvergence, SecondCrossingImpossible

RATIONAL_MAX_STATES = 2000
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class LatticeSpec:
    """Step law ``X = k * d`` with ``P{X = k d} = pmf[k]``."""

    d: object
    pmf: Dict[int, object]

    def __post_init__(self):
        pmf = {int(k): p for k, p in self.pmf.items() if p != 0}
        if not any(k > 0 for k in pmf) or not any(k < 0 for k in pmf):
            raise InvalidDistribution("lattice law needs a positive and a negative atom")
        if any(p < 0 for p in pmf.values()):
            raise InvalidDistribution("negative probability")
        if abs(sum(pmf.values()) - 1) > _steps.PROB_TOL:
            raise InvalidDistribution("probabilities must sum to 1")
        if abs(sum(k * p for k, p in pmf.items())) > _steps.MEAN_TOL:
            raise InvalidDistribution("lattice law must have zero mean")
        g = reduce(math.gcd, (abs(k) for k in pmf))
        if g > 1:
            pmf = {k // g: p for k, p in pmf.items()}
        object.__setattr__(self, "pmf", dict(sorted(pmf.items())))
        object.__setattr__(self, "d", self.d * g)

    @property
    def max_up(self) -> int:
        return max(self.pmf)

    @property
    def max_down(self) -> int:
        return -min(self.pmf)

    @property
    def p_pos(self):
        return sum(p for k, p in self.pmf.items() if k > 0)

    @property
    def is_rational(self) -> bool:
        return all(isinstance(p, (int, Fraction)) for p in self.pmf.values())

    def units(self, x) -> int:
        """Smallest lattice index ``k`` with ``k d >= x``."""
        u = x / self.d
        r = round(u)
        if abs(u - r) <= 1e-9 * max(1.0, abs(float(u))):
            return int(r)
        return int(math.ceil(u))


@dataclass(frozen=True)
class OracleConfig:
    ceiling_init: int = 64
    growth: float = 2.0
    tol: float = 1e-10
    max_rounds: int = 12
    rational: Optional[bool] = None  # None: exact whenever the law and chain allow it

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.growth > 1:
            raise ValueError("growth must exceed 1")
        if self.ceiling_init < 2 or self.max_rounds < 2:
            raise ValueError("need ceiling_init >= 2 and max_rounds >= 2")


@dataclass
class EpisodeProfile:
    """Joint mass of one crossing episode (not yet conditioned on it occurring)."""

    prob: object
    before: Dict[object, object]
    after: Dict[object, object]

    def law_before(self):
        return {v: p / self.prob for v, p in self.before.items()}

    def law_after(self):
        return {v: p / self.prob for v, p in self.after.items()}

    @property
    def mean_before(self):
        return sum(v * p for v, p in self.before.items()) / self.prob

    @property
    def mean_after(self):
        return sum(v * p for v, p in self.after.items()) / self.prob


@dataclass
class ChainSolve:
    expected_crossings: object = None
    absorption_law: Optional[Dict[object, object]] = None
    episode1_profile: Optional[EpisodeProfile] = None
    episode2_profile: Optional[EpisodeProfile] = None
    ceiling_used: int = 0
    est_truncation_error: float = math.inf
    exact: bool = False
    trace: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def mean_S_tau(self):
        return sum(v * p for v, p in self.absorption_law.items())

    @property
    def b(self):
        """Expected drop across the first episode."""
        e = self.episode1_profile
        return e.mean_before - e.mean_after


# ---------------------------------------------------------------------------
# construction from step distributions


def truncated_geometric_spec(geo_mean, mass: float = 1 - 1e-12) -> LatticeSpec:
    """Lattice law of ``+1`` / ``-G`` (G geometric on {1,2,...}) with a finite tail.

    Atoms ``-1..-J`` keep their exact mass, where ``J`` is the first depth whose
    cumulative negative mass reaches ``mass``. The leftover tail is moved to the
    two integers bracketing its conditional mean ``J + m`` so that total mass is
    1 and the mean stays exactly 0.
    """
    m = float(geo_mean)
    p = m / (1 + m)
    q = 1 - p
    pmf = {1: p}
    if m == 1:
        pmf[-1] = q
        return LatticeSpec(1, pmf)
    s = 1 / m
    cum = 0.0
    j = 0
    while cum < mass:
        j += 1
        w = s * (1 - s) ** (j - 1)
        pmf[-j] = q * w
        cum += w
    tail = q * (1 - s) ** j
    tail_mean = j + m
    lo, hi = math.floor(tail_mean), math.ceil(tail_mean)
    if lo == hi:
        pmf[-lo] = pmf.get(-lo, 0.0) + tail
    else:
        w_hi = tail_mean - lo
        pmf[-lo] = pmf.get(-lo, 0.0) + tail * (1 - w_hi)
        pmf[-hi] = pmf.get(-hi, 0.0) + tail * w_hi
    # restore exact zero mean against float drift in the head
    drift = sum(k * v for k, v in pmf.items())
    pmf[1] -= drift
    return LatticeSpec(1, pmf)


def spec_from_distribution(dist: _steps.StepDistribution, geo_mass: float = 1 - 1e-12) -> LatticeSpec:
    """Lattice form of a step law; raises for non-lattice laws."""
    _steps.validate(dist)
    factor = 1
    while isinstance(dist, _steps.Scaled):
        factor = factor * dist.factor
        dist = dist.base
    if isinstance(dist, _steps.PointPosGeometricNeg):
        spec = truncated_geometric_spec(dist.geo_mean, geo_mass)
        return LatticeSpec(spec.d * dist.pos_value * factor, spec.pmf)
    if isinstance(dist, _steps.FiniteDiscrete):
        atoms = [(v, p) for v, p in dist.atoms if p > 0]
        pitch = _steps.lattice_pitch([v for v, _ in atoms])
        if pitch is None:
            raise InvalidDistribution("atoms are not on a common lattice")
        pmf = {}
        for v, p in atoms:
            fp = _steps.as_fraction(p)
            pmf[int(_steps.as_fraction(v) / pitch)] = fp if fp is not None else p
        if any(not isinstance(p, Fraction) for p in pmf.values()):
            pmf = {k: float(p) for k, p in pmf.items()}
        d = pitch if pitch.denominator != 1 else int(pitch)
        if factor != 1:
            d = float(d) * factor
        return LatticeSpec(d, pmf)
    raise InvalidDistribution(f"{type(dist).__name__} has no finite lattice form")


# ---------------------------------------------------------------------------
# linear algebra on the clipped chain


class _Chain:
    """Transient chain on ``{1..C}`` for one lattice law and ceiling."""

    def __init__(self, spec: LatticeSpec, ceiling: int, exact: bool):
        self.spec = spec
        self.C = ceiling
        self.exact = exact
        self.one = Fraction(1) if exact else 1.0
        self.zero = Fraction(0) if exact else 0.0
        self.pmf = {k: (Fraction(p) if exact else float(p)) for k, p in spec.pmf.items()}

    def step(self, s):
        """``(target, prob)`` pairs from ``s``; targets ``<= 0`` are absorbing."""
        for k, p in self.pmf.items():
            yield min(s + k, self.C), p

    def solve(self, lo, hi, rhs, transpose=False):
        """Solve ``(I - Q_B) X = rhs`` on the block ``B = {lo..hi}``.

        Transitions leaving the block are dropped (killed). ``rhs`` is a list of
        columns, each indexed by ``s - lo``. With ``transpose`` the system is
        ``(I - Q_B)^T X = rhs``, i.e. a row-vector (occupation) solve.
        """
        n = hi - lo + 1
        if n <= 0:
            return [[] for _ in rhs]
        if self.exact:
            return self._solve_exact(lo, hi, rhs, transpose)
        rows, cols, vals = [], [], []
        for s in range(lo, hi + 1):
            rows.append(s - lo)
            cols.append(s - lo)
            vals.append(1.0)
            for t, p in self.step(s):
                if lo <= t <= hi:
                    rows.append(s - lo)
                    cols.append(t - lo)
                    vals.append(-p)
        A = sps.csc_matrix((vals, (rows, cols)), shape=(n, n))
        if transpose:
            A = A.T.tocsc()
        B = np.column_stack([np.asarray(c, dtype=float) for c in rhs])
        lu = spla.splu(A)
        X = lu.solve(B)
        X += lu.solve(B - A @ X)  # one refinement step
        resid = np.max(np.abs(A @ X - B)) if X.size else 0.0
        if resid > RESIDUAL_TOL:
            raise ArithmeticError(f"linear solve residual {resid:.3g} exceeds {RESIDUAL_TOL}")
        return [X[:, i] for i in range(X.shape[1])]

    def _solve_exact(self, lo, hi, rhs, transpose):
        n = hi - lo + 1
        A = [dict() for _ in range(n)]
        for s in range(lo, hi + 1):
            i = s - lo
            A[i][i] = A[i].get(i, 0) + 1
            for t, p in self.step(s):
                if lo <= t <= hi:
                    A[i][t - lo] = A[i].get(t - lo, 0) - p
        if transpose:
            T = [dict() for _ in range(n)]
            for i, row in enumerate(A):
                for j, v in row.items():
                    T[j][i] = v
            A = T
        B = [[Fraction(c[i]) for c in rhs] for i in range(n)]
        return _banded_solve(A, B, len(rhs))


def _banded_solve(A, B, m):
    """Gaussian elimination without pivoting; fill-in stays inside the band.

    Safe here because ``I - Q`` of a transient substochastic block is a
    nonsingular M-matrix.
    """
    n = len(A)
    lower = max((i - min(row) for i, row in enumerate(A) if row), default=0)
    for j in range(n):
        piv = A[j][j]
        row_j = A[j]
        bj = B[j]
        for i in range(j + 1, min(n, j + lower + 1)):
            a_ij = A[i].pop(j, 0)
            if not a_ij:
                continue
            f = a_ij / piv
            row_i = A[i]
            for c, v in row_j.items():
                if c > j:
                    row_i[c] = row_i.get(c, 0) - f * v
            bi = B[i]
            for k in range(m):
                if bj[k]:
                    bi[k] -= f * bj[k]
    X = [[Fraction(0)] * m for _ in range(n)]
    for i in range(n - 1, -1, -1):
        row = A[i]
        for k in range(m):
            acc = B[i][k]
            for c, v in row.items():
                if c > i:
                    acc -= v * X[c][k]
            X[i][k] = acc / row[i]
    return [[X[i][k] for i in range(n)] for k in range(m)]


# ---------------------------------------------------------------------------
# fixed-ceiling computations (lattice units)


def _expected_crossings(ch: _Chain, a_u: int):
    C = ch.C
    flow = []
    for s in range(1, C + 1):
        acc = ch.zero
        if s < a_u:
            for t, p in ch.step(s):
                if t >= a_u:
                    acc += p
        flow.append(acc)
    visits = ch.solve(1, C, [flow])[0]
    total = ch.zero
    for k, p in ch.pmf.items():
        if k > 0:
            total += p * ((1 if k >= a_u else 0) + visits[min(k, C) - 1])
    return total


def _absorption(ch: _Chain):
    C = ch.C
    zs = list(range(1 - ch.spec.max_down, 1))
    cols = []
    for z in zs:
        col = []
        for s in range(1, C + 1):
            col.append(sum((p for t, p in ch.step(s) if t == z), ch.zero))
        cols.append(col)
    H = ch.solve(1, C, cols)
    p_pos = sum((p for k, p in ch.pmf.items() if k > 0), ch.zero)
    law = {}
    for z, h in zip(zs, H):
        mass = sum((p * h[min(k, C) - 1] for k, p in ch.pmf.items() if k > 0), ch.zero)
        if mass:
            law[z] = mass / p_pos
    return law


def _episode_from_occupation(ch, a_u, occ, immediate, exit_law):
    """Joint episode mass given an occupation measure ``occ`` on ``{1..a_u-1}``."""
    before, entry = {}, dict(immediate)
    if immediate:
        before[0] = sum(immediate.values(), ch.zero)
    for s in range(1, a_u):
        w = occ[s - 1]
        if not w:
            continue
        for t, p in ch.step(s):
            if t >= a_u:
                before[s] = before.get(s, ch.zero) + w * p
                entry[t] = entry.get(t, ch.zero) + w * p
    prob = sum(entry.values(), ch.zero)
    after = {}
    for t, m in entry.items():
        for z, h in exit_law(t).items():
            after[z] = after.get(z, ch.zero) + m * h
    return prob, before, after


def _profiles(ch: _Chain, a_u: int):
    C = ch.C
    spec = ch.spec
    # stage B: exit law below a_u from every state >= a_u
    zs = list(range(a_u - spec.max_down, a_u))
    cols = []
    for z in zs:
        cols.append([sum((p for t, p in ch.step(s) if t == z), ch.zero) for s in range(a_u, C + 1)])
    HB = ch.solve(a_u, C, cols)

    def exit_law(t):
        return {z: h[t - a_u] for z, h in zip(zs, HB) if h[t - a_u]}

    immediate = {}
    start = [ch.zero] * (a_u - 1)
    for k, p in ch.pmf.items():
        if k >= a_u:
            immediate[min(k, C)] = immediate.get(min(k, C), ch.zero) + p
        elif k > 0:
            start[k - 1] += p
    occ1 = ch.solve(1, a_u - 1, [start], transpose=True)[0] if a_u > 1 else []
    ep1 = _episode_from_occupation(ch, a_u, occ1, immediate, exit_law)
    restart = [ch.zero] * (a_u - 1)
    for z, m in ep1[2].items():
        if 0 < z < a_u:
            restart[z - 1] += m
    if any(restart):
        occ2 = ch.solve(1, a_u - 1, [restart], transpose=True)[0]
        ep2 = _episode_from_occupation(ch, a_u, occ2, {}, exit_law)
    else:
        ep2 = (ch.zero, {}, {})
    return ep1, ep2


# ---------------------------------------------------------------------------
# public operations


def _use_exact(spec: LatticeSpec, cfg: OracleConfig, C: int) -> bool:
    if cfg.rational is False:
        return False
    if cfg.rational and not spec.is_rational:
        raise InvalidDistribution("rational mode needs rational probabilities")
    return spec.is_rational and C < RATIONAL_MAX_STATES


# rational recognition: a truncated-chain Fraction is replaced by the simplest
# nearby rational only when the ceiling iterates have converged below float
# resolution and that rational is a million times closer than the last step
SNAP_MAX_DEN = 10**6
SNAP_MAX_GAP = Fraction(1, 10**15)


def _snap(x, prev):
    if isinstance(x, dict):
        return {k: _snap(v, prev.get(k, 0)) for k, v in x.items()}
    if isinstance(x, (tuple, list)):
        return type(x)(_snap(a, b) for a, b in zip(x, prev))
    if not isinstance(x, Fraction):
        return x
    step = abs(x - prev)
    if step > SNAP_MAX_GAP:
        return x
    r = x.limit_denominator(SNAP_MAX_DEN)
    return r if abs(x - r) * 10**6 <= step else x


def _converge(spec, cfg, c_min, compute, key):
    C = max(cfg.ceiling_init, c_min)
    prev = prev_res = None
    trace = []
    for _ in range(cfg.max_rounds):
        exact = _use_exact(spec, cfg, C)
        res = compute(_Chain(spec, C, exact))
        val = key(res)
        if prev is not None:
            gap = max(abs(float(x) - float(y)) for x, y in zip(val, prev))
            trace.append((C, gap))
            if gap < cfg.tol:
                if exact and prev_exact:
                    res = _snap(res, prev_res)
                return res, C, gap, exact, trace
        prev, prev_res, prev_exact = val, res, exact
        C = int(math.ceil(C * cfg.growth))
    raise NoConvergence(cfg.max_rounds, (prev, val))


def _scale_keys(law, d):
    return {z * d: p for z, p in law.items()}


def _c_min(spec, a_u):
    return 2 * (a_u + spec.max_up) + 2


def exact_EL(spec: LatticeSpec, alpha, cfg: OracleConfig = OracleConfig()) -> ChainSolve:
    """Expected number of up-crossings of ``alpha`` over one excursion.

    Includes excursions with ``X_1 <= 0``, which contribute zero.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    a_u = spec.units(alpha)
    res, C, gap, exact, trace = _converge(
        spec, cfg, _c_min(spec, a_u),
        lambda ch: _expected_crossings(ch, a_u), lambda v: (v,),
    )
    return ChainSolve(expected_crossings=res, ceiling_used=C, est_truncation_error=gap,
                      exact=exact, trace=trace)


def exact_S_tau(spec: LatticeSpec, cfg: OracleConfig = OracleConfig()) -> ChainSolve:
    """Law of the absorption point ``S_tau`` given ``X_1 > 0``."""
    res, C, gap, exact, trace = _converge(
        spec, cfg, _c_min(spec, 1), _absorption,
        lambda law: tuple(law.get(z, 0) for z in range(1 - spec.max_down, 1)),
    )
    return ChainSolve(absorption_law=_scale_keys(res, spec.d), ceiling_used=C,
                      est_truncation_error=gap, exact=exact, trace=trace)


def _profile_key(res):
    (p1, b1, a1), (p2, b2, a2) = res
    out = [p1, p2]
    for prob, law in ((p1, b1), (p1, a1), (p2, b2), (p2, a2)):
        out.append(sum(z * m for z, m in law.items()) / prob if prob else 0)
    return tuple(out)


def crossing_profiles(spec: LatticeSpec, alpha, cfg: OracleConfig = OracleConfig(),
                      require_second: bool = True) -> ChainSolve:
    """Exact laws of ``S_{t_i-1}`` and ``S_{tau_i}`` for the first two episodes.

    Raises :class:`SecondCrossingImpossible` when a second crossing has
    probability exactly zero, unless ``require_second`` is false; the
    exception carries the episode-1 solve as ``.solve``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    a_u = spec.units(alpha)
    res, C, gap, exact, trace = _converge(
        spec, cfg, _c_min(spec, a_u), lambda ch: _profiles(ch, a_u), _profile_key,
    )
    (p1, b1, a1), (p2, b2, a2) = res
    d = spec.d
    ep1 = EpisodeProfile(p1, _scale_keys(b1, d), _scale_keys(a1, d))
    ep2 = EpisodeProfile(p2, _scale_keys(b2, d), _scale_keys(a2, d)) if p2 else None
    solve = ChainSolve(episode1_profile=ep1, episode2_profile=ep2, ceiling_used=C,
                       est_truncation_error=gap, exact=exact, trace=trace)
    if ep2 is None and require_second:
        err = SecondCrossingImpossible(
            f"a second crossing of level {alpha} has probability zero"
        )
        err.solve = solve
        raise err
    return solve


@dataclass(frozen=True)
class Assumption1Check:
    positivity: bool
    os1: bool
    os2: bool
    b: object

    @property
    def holds(self) -> bool:
        return self.positivity and self.os1 and self.os2


def certify_assumption1(solve: ChainSolve, tol: float = 1e-9) -> Assumption1Check:
    """Decide positivity and the episode-1/episode-2 mean equalities from exact profiles."""
    e1, e2 = solve.episode1_profile, solve.episode2_profile
    if e2 is None:
        raise SecondCrossingImpossible("no second episode to compare against")
    return Assumption1Check(
        positivity=bool(e1.mean_before > 0 and e1.mean_after > 0),
        os1=bool(abs(e2.mean_before - e1.mean_before) <= tol),
        os2=bool(abs(e2.mean_after - e1.mean_after) <= tol),
        b=solve.b,
    )


def format_exact(x) -> str:
    """``num/den`` for exact rationals, ``repr`` of the float otherwise."""
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def formula_inputs(spec: LatticeSpec, alpha, cfg: OracleConfig = OracleConfig()) -> FormulaInputs:
    """Exact ``a``, ``b``, ``E{S_tau|X_1>0}`` and probabilities for the closed forms."""
    p_pos = spec.p_pos
    a = sum(k * p for k, p in spec.pmf.items() if k > 0) / p_pos * spec.d
    es = exact_S_tau(spec, cfg).mean_S_tau
    prof = crossing_profiles(spec, alpha, cfg, require_second=False)
    p_nonzero = 1 - spec.pmf.get(0, 0)
    return FormulaInputs(a=a, b=prof.b, es_tau=min(es, 0), p_pos=p_pos, p_nonzero=p_nonzero,
                         d=spec.max_up * spec.d if sum(1 for k in spec.pmf if k > 0) == 1 else None)
