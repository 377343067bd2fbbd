"""Monte Carlo estimation over replicated excursions.

Replication ``r`` always draws from the generator stream derived from
``(master_seed, r)``, and every statistic is a reduction over per-replication
arrays in index order, so results are bit-identical for any worker count.

Censored excursions (no return to ``<= 0`` within ``max_steps``) keep the
crossings seen so far. That biases ``E L`` slightly downward; the
``censor_limit`` gate (default 0.5%) keeps the bias below CI resolution.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from scipy import stats

from . import _rng
from . import excursion as _exc
from . import steps as _steps
from .errors import (
    AssumptionViolated,
    CensoredFractionTooHigh,
    InvalidDistribution,
    NoCrossings,
    NoSecondCrossings,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MCConfig:
    replications: int
    master_seed: int = 0
    max_steps: int = _exc.DEFAULT_MAX_STEPS
    workers: int = 1
    censor_limit: float = 0.005

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_effective: int
    ci95: Tuple[float, float]
    censored_fraction: float = 0.0

    @classmethod
    def from_samples(cls, x, censored_fraction: float = 0.0) -> "Estimate":
        x = np.asarray(x, dtype=np.float64)
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        mean = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, se, n, (mean - 1.96 * se, mean + 1.96 * se), float(censored_fraction))

    def contains(self, value, k: float = 4.0, floor: float = 0.0) -> bool:
        """``|mean - value| <= max(floor, k * stderr)``."""
        return abs(self.mean - float(value)) <= max(floor, k * self.stderr)

    def interval(self, confidence: float) -> Tuple[float, float]:
        z = stats.norm.ppf(0.5 + confidence / 2)
        return (self.mean - z * self.stderr, self.mean + z * self.stderr)

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "n_effective": self.n_effective,
            "ci95": list(self.ci95),
            "censored_fraction": self.censored_fraction,
        }


class Verdict(str, Enum):
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"


# ---------------------------------------------------------------------------
# batch simulation


@njit(cache=True, nogil=True)
def _run_range(p_pos, pk, pv, pc, pa, pb, nk, nv, nc, na, nb,
               levels, max_steps, master, lo, hi,
               first_pos, censored, steps_out, s_tau, L, ep_t, ep_tau, ep_before, ep_after):
    forced = np.zeros(0)
    path = np.zeros(0)
    for r in range(lo, hi):
        state = _rng.seed_state(master, np.uint64(r))
        n, s, cens, fp, _ = _exc.walk_core(
            p_pos, pk, pv, pc, pa, pb, nk, nv, nc, na, nb,
            levels, max_steps, forced, state,
            path, L[r], ep_t[r], ep_tau[r], ep_before[r], ep_after[r],
        )
        first_pos[r] = fp
        censored[r] = cens
        steps_out[r] = n
        s_tau[r] = s


def _chunks(n, workers):
    bounds = np.linspace(0, n, workers + 1).astype(np.int64)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(workers) if bounds[i + 1] > bounds[i]]


@dataclass
class ExcursionBatch:
    """Per-replication outcomes of ``n`` excursions at a fixed set of levels."""

    levels: Tuple[float, ...]
    unit: float
    first_pos: np.ndarray
    censored: np.ndarray
    steps: np.ndarray
    s_tau: np.ndarray
    L: np.ndarray  # (n, levels)
    ep_t: np.ndarray  # (n, levels, 2)
    ep_tau: np.ndarray
    ep_before: np.ndarray
    ep_after: np.ndarray

    @property
    def n(self) -> int:
        return self.first_pos.size

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    def level_index(self, alpha) -> int:
        for j, a in enumerate(self.levels):
            if math.isclose(a, float(alpha), rel_tol=1e-12, abs_tol=1e-12):
                return j
        raise KeyError(f"level {alpha} was not simulated")

    def el(self, alpha) -> Estimate:
        return Estimate.from_samples(self.L[:, self.level_index(alpha)], self.censored_fraction)

    def el_given_positive(self, alpha) -> Estimate:
        mask = self.first_pos
        return Estimate.from_samples(self.L[mask, self.level_index(alpha)], self.censored[mask].mean())

    def p_positive(self) -> Estimate:
        return Estimate.from_samples(self.first_pos, self.censored_fraction)

    def s_tau_positive(self) -> Estimate:
        """Mean of ``S_tau`` over uncensored excursions with ``X_1 > 0``."""
        mask = self.first_pos & ~self.censored
        if not mask.any():
            raise NoCrossings("no completed excursion with a positive first step")
        frac = self.censored[self.first_pos].mean()
        return Estimate.from_samples(self.s_tau[mask] * self.unit, frac)

    def episode(self, alpha, i: int):
        """``(s_before, s_after)`` samples of closed episode ``i`` (1 or 2)."""
        j = self.level_index(alpha)
        k = i - 1
        mask = (self.L[:, j] >= i) & (self.ep_tau[:, j, k] >= 0)
        return self.ep_before[mask, j, k] * self.unit, self.ep_after[mask, j, k] * self.unit

    def p_episode(self, alpha, i: int) -> Estimate:
        return Estimate.from_samples(self.L[:, self.level_index(alpha)] >= i, self.censored_fraction)


def simulate_excursions(dist: _steps.StepDistribution, levels: Sequence[float], cfg: MCConfig) -> ExcursionBatch:
    """Run ``cfg.replications`` independent excursions sharing one pass per path."""
    _steps.validate(dist)
    code = _steps.encode(dist)
    levels = tuple(sorted(set(float(a) for a in levels)))
    if not levels or any(not a > 0 for a in levels):
        raise ValueError("levels must be positive")
    levels_u = _exc.levels_in_units(code, levels)
    n = cfg.replications
    nl = len(levels)
    out = dict(
        first_pos=np.zeros(n, dtype=np.bool_),
        censored=np.zeros(n, dtype=np.bool_),
        steps=np.zeros(n, dtype=np.int64),
        s_tau=np.zeros(n),
        L=np.zeros((n, nl), dtype=np.int64),
        ep_t=np.zeros((n, nl, 2), dtype=np.int64),
        ep_tau=np.full((n, nl, 2), -1, dtype=np.int64),
        ep_before=np.full((n, nl, 2), np.nan),
        ep_after=np.full((n, nl, 2), np.nan),
    )
    master = np.uint64(_rng.master_seed_int(cfg.master_seed))
    args = code.args() + (levels_u, cfg.max_steps, master)
    arrays = (out["first_pos"], out["censored"], out["steps"], out["s_tau"], out["L"],
              out["ep_t"], out["ep_tau"], out["ep_before"], out["ep_after"])

    def work(bounds):
        lo, hi = bounds
        _run_range(*args, lo, hi, *arrays)

    chunks = _chunks(n, cfg.workers)
    if len(chunks) == 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(work, chunks))
    return ExcursionBatch(levels=levels, unit=code.unit, **out)


def _gate(batch: ExcursionBatch, cfg: MCConfig):
    frac = batch.censored_fraction
    if frac > cfg.censor_limit:
        raise CensoredFractionTooHigh(frac, cfg.censor_limit)
    if frac > 0:
        logger.info("censored fraction %.3g (partial counts kept)", frac)


# ---------------------------------------------------------------------------
# estimators


def estimate_EL(dist, alpha, cfg: MCConfig) -> Estimate:
    """Unconditional ``E L_alpha``; excursions with ``X_1 <= 0`` count as zero."""
    batch = simulate_excursions(dist, [alpha], cfg)
    _gate(batch, cfg)
    return batch.el(alpha)


def estimate_S_tau_pos(dist, cfg: MCConfig) -> Estimate:
    """``E{S_tau | X_1 > 0}`` over completed excursions."""
    lvl = 1.0
    batch = simulate_excursions(dist, [lvl], cfg)
    _gate(batch, cfg)
    return batch.s_tau_positive()


def _b_from_batch(batch, alpha) -> Estimate:
    before, after = batch.episode(alpha, 1)
    if before.size == 0:
        raise NoCrossings(f"level {alpha} was never crossed")
    # paired per-excursion differences
    return Estimate.from_samples(before - after, batch.censored_fraction)


def estimate_b(dist, alpha, cfg: MCConfig) -> Estimate:
    """Expected drop ``S_{t_1-1} - S_{tau_1}`` across the first episode."""
    batch = simulate_excursions(dist, [alpha], cfg)
    _gate(batch, cfg)
    return _b_from_batch(batch, alpha)


def welch_interval(x, y, confidence: float) -> Tuple[float, float]:
    """Two-sided Welch interval for ``mean(y) - mean(x)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = float(y.mean() - x.mean())
    vx = x.var(ddof=1) / x.size if x.size > 1 else 0.0
    vy = y.var(ddof=1) / y.size if y.size > 1 else 0.0
    se = math.sqrt(vx + vy)
    if se == 0.0:
        return diff, diff
    num = (vx + vy) ** 2
    den = (vx**2 / (x.size - 1) if x.size > 1 else 0.0) + (vy**2 / (y.size - 1) if y.size > 1 else 0.0)
    df = num / den if den > 0 else float("inf")
    q = stats.t.ppf(0.5 + confidence / 2, df)
    return diff - q * se, diff + q * se


def equality_verdict(ci: Tuple[float, float], margin: float) -> Verdict:
    lo, hi = ci
    if lo > 0 or hi < 0:
        return Verdict.FAILS
    if max(abs(lo), abs(hi)) <= margin:
        return Verdict.HOLDS
    return Verdict.INCONCLUSIVE


def positivity_verdict(*cis) -> Verdict:
    if all(lo > 0 for lo, _ in cis):
        return Verdict.HOLDS
    if any(hi < 0 for _, hi in cis):
        return Verdict.FAILS
    return Verdict.INCONCLUSIVE


@dataclass(frozen=True)
class Assumption1Report:
    alpha: float
    confidence: float
    e_sbefore_1: Estimate
    e_sbefore_2: Estimate
    e_safter_1: Estimate
    e_safter_2: Estimate
    p_A1: Estimate
    p_A2: Estimate
    holds_os1: Verdict
    holds_os2: Verdict
    positivity: Verdict
    os1_interval: Tuple[float, float]  # for episode-2 minus episode-1 mean
    os2_interval: Tuple[float, float]

    def as_dict(self) -> dict:
        out = {"alpha": self.alpha, "confidence": self.confidence}
        for name in ("e_sbefore_1", "e_sbefore_2", "e_safter_1", "e_safter_2", "p_A1", "p_A2"):
            out[name] = getattr(self, name).as_dict()
        out.update(
            holds_os1=self.holds_os1.value,
            holds_os2=self.holds_os2.value,
            positivity=self.positivity.value,
            os1_interval=list(self.os1_interval),
            os2_interval=list(self.os2_interval),
        )
        return out


def diagnostic_from_batch(batch: ExcursionBatch, alpha, confidence: float = 0.99,
                          margin: float = 0.05) -> Assumption1Report:
    b1, a1 = batch.episode(alpha, 1)
    b2, a2 = batch.episode(alpha, 2)
    if b1.size == 0:
        raise NoCrossings(f"level {alpha} was never crossed")
    if b2.size == 0:
        raise NoSecondCrossings(f"no second crossing of level {alpha} observed")
    cf = batch.censored_fraction
    e_b1, e_a1 = Estimate.from_samples(b1, cf), Estimate.from_samples(a1, cf)
    e_b2, e_a2 = Estimate.from_samples(b2, cf), Estimate.from_samples(a2, cf)
    os1 = welch_interval(b1, b2, confidence)
    os2 = welch_interval(a1, a2, confidence)
    return Assumption1Report(
        alpha=float(alpha),
        confidence=confidence,
        e_sbefore_1=e_b1,
        e_sbefore_2=e_b2,
        e_safter_1=e_a1,
        e_safter_2=e_a2,
        p_A1=batch.p_episode(alpha, 1),
        p_A2=batch.p_episode(alpha, 2),
        holds_os1=equality_verdict(os1, margin),
        holds_os2=equality_verdict(os2, margin),
        positivity=positivity_verdict(e_b1.interval(confidence), e_a1.interval(confidence)),
        os1_interval=os1,
        os2_interval=os2,
    )


def assumption1_diagnostic(dist, alpha, cfg: MCConfig, confidence: float = 0.99,
                           margin: float = 0.05) -> Assumption1Report:
    """Empirical check of episode-1 positivity and episode-1/2 mean equality.

    Each equality verdict compares the Welch interval of the episode-2 minus
    episode-1 mean at ``confidence``: *fails* if it excludes 0, *holds* if it
    lies within ``[-margin, margin]``, *inconclusive* otherwise.
    """
    batch = simulate_excursions(dist, [alpha], cfg)
    _gate(batch, cfg)
    return diagnostic_from_batch(batch, alpha, confidence, margin)


def _exact_increment(dist, alpha0):
    from . import lattice

    try:
        spec = lattice.spec_from_distribution(dist)
    except InvalidDistribution:
        return None
    prof = lattice.crossing_profiles(spec, alpha0, require_second=False)
    return float(prof.episode1_profile.mean_before)


def estimate_alpha_ladder(dist, alpha0, n: int, cfg: MCConfig, increment: Optional[float] = None,
                          check: bool = True, confidence: float = 0.99,
                          margin: float = 0.05) -> List[Tuple[float, Estimate]]:
    """Estimate ``E L`` on the ladder ``alpha_{i+1} = alpha_i + E{S_{t_1-1} | A_1}``.

    The increment is taken from the exact lattice solve when the law is on a
    lattice, else from the Monte Carlo estimate at ``alpha0``. With ``check``
    the diagnostic runs first and a failed equality raises
    :class:`AssumptionViolated`.
    """
    if n < 1:
        raise ValueError("need at least one rung")
    report = None
    if check or increment is None:
        batch0 = simulate_excursions(dist, [alpha0], cfg)
        _gate(batch0, cfg)
        if check:
            report = diagnostic_from_batch(batch0, alpha0, confidence, margin)
            if Verdict.FAILS in (report.holds_os1, report.holds_os2):
                raise AssumptionViolated(
                    f"episode means differ at level {alpha0}: "
                    f"before-means {report.holds_os1.value}, after-means {report.holds_os2.value}"
                )
            if Verdict.INCONCLUSIVE in (report.holds_os1, report.holds_os2):
                logger.warning("episode-mean diagnostic inconclusive at level %s", alpha0)
        if increment is None:
            increment = _exact_increment(dist, alpha0)
        if increment is None:
            b1, _ = batch0.episode(alpha0, 1)
            if b1.size == 0:
                raise NoCrossings(f"level {alpha0} was never crossed")
            increment = float(b1.mean())
    if not increment > 0:
        raise AssumptionViolated(f"ladder increment {increment} is not positive")
    rungs = [float(alpha0) + i * increment for i in range(n)]
    batch = simulate_excursions(dist, rungs, cfg)
    _gate(batch, cfg)
    return [(a, batch.el(a)) for a in rungs]
