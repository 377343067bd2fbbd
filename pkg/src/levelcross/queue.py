"""Busy periods of a batch loss queue with full rejection.

Customers arrive at rate ``lam`` carrying a random amount of work ``X``; the
server removes a random amount ``Y`` at rate ``mu``. The content process is
simulated on its embedded jump chain: each event is an arrival with
probability ``p = lam / (lam + mu)``, otherwise a service. A busy period
starts with an accepted arrival and ends at the first service that takes the
content to ``<= 0``; the negative remainder is kept as ``s_tau``.

Two rejection rules are offered:

``"exceeded"`` (default)
    an arrival is lost when the content already exceeds ``N``. The content
    can then overshoot ``N`` by at most one batch, and the number of losses is
    the number of arrivals during sojourns above ``N``.
``"overflow"``
    an arrival is lost when it would push the content above ``N``.

Under ``"overflow"`` a first arrival with ``X > N`` is turned away before any
busy period starts. Such standalone rejections are counted separately and
kept out of the busy-period averages.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np
from numba import njit

from . import _rng
from . import steps as _steps
from .errors import CensoredFractionTooHigh, InvalidQueueModel
from .estimators import Estimate, MCConfig, _chunks
from .lattice import _banded_solve

POLICIES = ("exceeded", "overflow")
BALANCE_TOL = 1e-9
DEFAULT_MAX_EVENTS = 10**7


def _law_mean(law) -> float:
    return float(law.mean)


def _law_values(law):
    if isinstance(law, _steps.FiniteLaw):
        return [v for v, p in law.atoms if p > 0]
    return None


def _check_positive_law(law, name):
    if isinstance(law, _steps.FiniteLaw):
        _steps._check_probs([p for _, p in law.atoms])
        if any(v <= 0 for v, p in law.atoms if p > 0):
            raise InvalidQueueModel(f"{name} must take positive values only")
    elif isinstance(law, _steps.UniformLaw):
        if law.low < 0:
            raise InvalidQueueModel(f"{name} must be nonnegative")
    elif not isinstance(law, (_steps.ExponentialLaw, _steps.GeometricLaw)):
        raise InvalidQueueModel(f"{name}: unsupported law {type(law).__name__}")


@dataclass(frozen=True)
class QueueModel:
    lam: float
    mu: float
    x_law: _steps.PositiveLaw
    y_law: _steps.PositiveLaw
    capacity_N: float
    policy: str = "exceeded"

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise InvalidQueueModel("rates must be positive")
        if self.policy not in POLICIES:
            raise InvalidQueueModel(f"policy must be one of {POLICIES}")
        _check_positive_law(self.x_law, "x_law")
        _check_positive_law(self.y_law, "y_law")
        ex, ey = _law_mean(self.x_law), _law_mean(self.y_law)
        if abs(self.lam * ex - self.mu * ey) > BALANCE_TOL:
            raise InvalidQueueModel(
                f"load must balance: lam*E X = {self.lam * ex!r} vs mu*E Y = {self.mu * ey!r}"
            )
        if not self.capacity_N > ex:
            raise InvalidQueueModel(f"capacity N = {self.capacity_N} must exceed E X = {ex}")

    @property
    def p_arrival(self) -> float:
        return self.lam / (self.lam + self.mu)

    def mixture(self) -> _steps.QueueMixture:
        """Step law of the uncut content walk: ``+X`` w.p. ``p``, else ``-Y``."""
        return _steps.QueueMixture(self.p_arrival, self.x_law, self.y_law)

    def with_capacity(self, n) -> "QueueModel":
        return QueueModel(self.lam, self.mu, self.x_law, self.y_law, n, self.policy)

    def is_lattice_control(self) -> bool:
        """``Y`` is one constant ``y`` and every value of ``X`` is a multiple of it."""
        yv = _law_values(self.y_law)
        if yv is None or len(yv) != 1:
            return False
        y = _steps.as_fraction(yv[0])
        if isinstance(self.x_law, _steps.GeometricLaw):
            return y == 1
        xv = _law_values(self.x_law)
        if xv is None or y is None:
            return False
        return all((f := _steps.as_fraction(v)) is not None and (f / y).denominator == 1 for v in xv)


@dataclass
class BusyPeriodResult:
    losses: int
    events: int
    s_tau: float  # last content seen when censored
    censored: bool
    standalone_rejection: bool
    path: Optional[np.ndarray] = field(default=None, repr=False)  # content after each event
    lost_at: Optional[List[int]] = None  # event indices of losses (path index)


@njit(cache=True, nogil=True)
def busy_core(p, xk, xv, xc, xa, xb, yk, yv, yc, ya, yb,
              cap, overflow, max_events, forced, state, path, lost):
    """One busy period in kernel units.

    Idle-period services are drawn and discarded so that, for the same
    stream, a busy period replays the walk excursion whose first step is an
    arrival. Returns ``(losses, events, s_tau, censored, standalone, path_len)``.
    """
    n_forced = forced.shape[0]
    pcap = path.shape[0]
    lcap = lost.shape[0]
    i = 0
    # first accepted-or-rejected arrival
    while True:
        if n_forced > 0:
            if i >= n_forced:
                return 0, 0, 0.0, True, False, 0
            x = forced[i]
            i += 1
            if x > 0.0:
                break
        elif _rng.uniform(state) <= p:
            x = _steps.draw_half(xk, xv, xc, xa, xb, state)
            break
        else:
            _steps.draw_half(yk, yv, yc, ya, yb, state)
    if pcap > 0:
        path[0] = 0.0
    if overflow and x > cap:
        return 1, 1, 0.0, False, True, min(1, pcap)
    s = x
    t = 1
    if t < pcap:
        path[t] = s
    losses = 0
    while True:
        if t >= max_events or (n_forced > 0 and i >= n_forced):
            return losses, t, s, True, False, min(t + 1, pcap)
        if n_forced > 0:
            w = forced[i]
            i += 1
        elif _rng.uniform(state) <= p:
            w = _steps.draw_half(xk, xv, xc, xa, xb, state)
        else:
            w = -_steps.draw_half(yk, yv, yc, ya, yb, state)
        t += 1
        if w > 0.0:
            if (overflow and s + w > cap) or (not overflow and s > cap):
                if losses < lcap:
                    lost[losses] = t
                losses += 1
            else:
                s += w
        else:
            s += w
        if t < pcap:
            path[t] = s
        if s <= 0.0:
            return losses, t, s, False, False, min(t + 1, pcap)


@dataclass(frozen=True)
class _QueueCode:
    step: _steps.StepCode
    cap: float
    overflow: bool

    def args(self):
        return self.step.args() + (self.cap, self.overflow)


def encode_model(model: QueueModel) -> _QueueCode:
    code = _steps.encode(model.mixture())
    cap = model.capacity_N
    cap_u = np.inf if math.isinf(cap) else _steps.to_units(code, cap)
    return _QueueCode(code, float(cap_u), model.policy == "overflow")


def run_busy_period(
    model: QueueModel,
    rng_state: Optional[np.ndarray] = None,
    max_events: int = DEFAULT_MAX_EVENTS,
    forced_events: Optional[Sequence[float]] = None,
    record_path: bool = False,
) -> BusyPeriodResult:
    """Simulate one busy period.

    ``forced_events`` replaces sampling: positive entries are arrivals of that
    size, negative entries services. Leading services are idle and ignored.
    """
    if rng_state is None and forced_events is None:
        raise ValueError("need an rng_state or forced_events")
    qc = encode_model(model)
    unit = qc.step.unit
    forced = (np.zeros(0) if forced_events is None
              else np.asarray([_steps.to_units(qc.step, float(w)) for w in forced_events]))
    if rng_state is None:
        rng_state = _steps.new_state(0)
    start = rng_state.copy()
    pcap = 1024 if record_path else 0
    lcap = 64 if record_path else 0
    while True:
        state = start.copy()
        path = np.zeros(pcap)
        lost = np.zeros(lcap, dtype=np.int64)
        losses, events, s_tau, cens, standalone, plen = busy_core(
            *qc.args(), int(max_events), forced, state, path, lost)
        if record_path and (events + 1 > pcap or losses > lcap):
            pcap = max(pcap, events + 1)
            lcap = max(lcap, losses)
            continue
        break
    rng_state[:] = state
    return BusyPeriodResult(
        losses=int(losses),
        events=int(events),
        s_tau=float(s_tau) * unit,
        censored=bool(cens),
        standalone_rejection=bool(standalone),
        path=path[:plen] * unit if record_path else None,
        lost_at=[int(k) for k in lost[: int(losses)]] if record_path else None,
    )


# ---------------------------------------------------------------------------
# Monte Carlo


@njit(cache=True, nogil=True)
def _busy_range(p, xk, xv, xc, xa, xb, yk, yv, yc, ya, yb, cap, overflow,
                max_events, master, lo, hi, losses, events, s_tau, censored, standalone):
    forced = np.zeros(0)
    path = np.zeros(0)
    lost = np.zeros(0, dtype=np.int64)
    for r in range(lo, hi):
        state = _rng.seed_state(master, np.uint64(r))
        n_lost, n_ev, s, cens, sa, _ = busy_core(
            p, xk, xv, xc, xa, xb, yk, yv, yc, ya, yb,
            cap, overflow, max_events, forced, state, path, lost)
        losses[r] = n_lost
        events[r] = n_ev
        s_tau[r] = s
        censored[r] = cens
        standalone[r] = sa


@dataclass
class BusyPeriodBatch:
    losses: np.ndarray
    events: np.ndarray
    s_tau: np.ndarray  # kernel units scaled back to content units
    censored: np.ndarray
    standalone: np.ndarray

    @property
    def busy(self) -> np.ndarray:
        return ~self.standalone

    @property
    def censored_fraction(self) -> float:
        nb = int(self.busy.sum())
        return float(self.censored[self.busy].sum()) / nb if nb else 0.0


def simulate_busy_periods(model: QueueModel, cfg: MCConfig) -> BusyPeriodBatch:
    qc = encode_model(model)
    n = cfg.replications
    out = dict(
        losses=np.zeros(n, dtype=np.int64),
        events=np.zeros(n, dtype=np.int64),
        s_tau=np.zeros(n),
        censored=np.zeros(n, dtype=np.bool_),
        standalone=np.zeros(n, dtype=np.bool_),
    )
    master = np.uint64(_rng.master_seed_int(cfg.master_seed))
    args = qc.args() + (int(cfg.max_steps), master)
    arrays = tuple(out.values())

    def work(bounds):
        _busy_range(*args, bounds[0], bounds[1], *arrays)

    chunks = _chunks(n, cfg.workers)
    if len(chunks) == 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(work, chunks))
    out["s_tau"] *= qc.step.unit
    return BusyPeriodBatch(**out)


@dataclass(frozen=True)
class LossEstimate(Estimate):
    """Losses per busy period plus the excluded standalone rejections."""

    standalone_fraction: float = 0.0
    s_tau_mean: float = float("nan")

    def as_dict(self) -> dict:
        d = super().as_dict()
        d["standalone_fraction"] = self.standalone_fraction
        d["s_tau_mean"] = self.s_tau_mean
        return d


def estimate_EL_N(model: QueueModel, cfg: MCConfig) -> LossEstimate:
    """Mean losses per busy period; standalone rejections are left out."""
    batch = simulate_busy_periods(model, cfg)
    busy = batch.busy
    if not busy.any():
        raise ValueError("every replication was a standalone rejection")
    frac = batch.censored_fraction
    if frac > cfg.censor_limit:
        raise CensoredFractionTooHigh(frac, cfg.censor_limit)
    base = Estimate.from_samples(batch.losses[busy], frac)
    done = busy & ~batch.censored
    s_mean = float(batch.s_tau[done].mean()) if done.any() else float("nan")
    return LossEstimate(
        base.mean, base.stderr, base.n_effective, base.ci95, base.censored_fraction,
        standalone_fraction=float(batch.standalone.mean()),
        s_tau_mean=s_mean,
    )


@dataclass(frozen=True)
class SweepRow:
    N: float
    estimate: LossEstimate
    expectation: str  # "above_one" or "contains_one"
    ok: bool


@dataclass(frozen=True)
class SweepReport:
    control: bool
    rows: List[SweepRow]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)


def theorem6_sweep(model: QueueModel, n_values: Sequence[float], cfg: MCConfig) -> SweepReport:
    """Estimate losses over a capacity grid and check the ``E L_N`` vs 1 dichotomy.

    Lattice controls (constant ``Y``, ``X`` on multiples of it) must keep 1
    inside every 95% interval; all other models need the lower bound above 1.
    """
    control = model.is_lattice_control()
    rows = []
    for N in n_values:
        est = estimate_EL_N(model.with_capacity(N), cfg)
        lo, hi = est.ci95
        if control:
            rows.append(SweepRow(float(N), est, "contains_one", lo <= 1.0 <= hi))
        else:
            rows.append(SweepRow(float(N), est, "above_one", lo > 1.0))
    return SweepReport(control, rows)


# ---------------------------------------------------------------------------
# exact lattice oracle


@dataclass(frozen=True)
class QueueSolve:
    expected_losses: object
    mean_s_tau: object
    standalone_prob: object
    exact: bool


def exact_EL_N(model: QueueModel, exact: Optional[bool] = None) -> QueueSolve:
    """Expected losses per busy period for finite lattice ``X`` and ``Y``.

    The cut content chain lives on a finite set of lattice points, so one
    linear solve gives the answer; no truncation is involved.
    """
    x, y = model.x_law, model.y_law
    if not (isinstance(x, _steps.FiniteLaw) and isinstance(y, _steps.FiniteLaw)):
        raise InvalidQueueModel("exact solve needs finite X and Y laws")
    d = _steps.lattice_pitch([v for v, p in x.atoms + y.atoms if p > 0] + [model.capacity_N])
    if d is None:
        raise InvalidQueueModel("X, Y and N must share a lattice")
    probs = [p for _, p in x.atoms + y.atoms] + [model.lam, model.mu]
    if exact is None:
        exact = all(_steps.as_fraction(q) is not None for q in probs)
    conv = _steps.as_fraction if exact else float
    p = conv(model.lam) / (conv(model.lam) + conv(model.mu))
    xs = [(int(_steps.as_fraction(v) / d), conv(q)) for v, q in x.atoms if q > 0]
    ys = [(int(_steps.as_fraction(v) / d), conv(q)) for v, q in y.atoms if q > 0]
    cap = int(_steps.as_fraction(model.capacity_N) / d)
    overflow = model.policy == "overflow"
    top = cap if overflow else cap + max(k for k, _ in xs)
    n = top
    A = [dict() for _ in range(n)]
    rhs_loss = [conv(0)] * n
    rhs_s = [conv(0)] * n
    for s in range(1, top + 1):
        i = s - 1
        A[i][i] = A[i].get(i, 0) + 1
        for k, q in xs:
            lost = s + k > cap if overflow else s > cap
            if lost:
                A[i][i] -= p * q
                rhs_loss[i] += p * q
            else:
                A[i][s + k - 1] = A[i].get(s + k - 1, 0) - p * q
        for k, q in ys:
            t = s - k
            if t <= 0:
                rhs_s[i] += (1 - p) * q * t
            else:
                A[i][t - 1] = A[i].get(t - 1, 0) - (1 - p) * q
    if exact:
        loss_v, s_v = _banded_solve(A, [[a, b] for a, b in zip(rhs_loss, rhs_s)], 2)
    else:
        M = np.zeros((n, n))
        for i, row in enumerate(A):
            for j, v in row.items():
                M[i, j] = v
        sol = np.linalg.solve(M, np.column_stack([rhs_loss, rhs_s]))
        loss_v, s_v = sol[:, 0], sol[:, 1]
    start = [(k, q) for k, q in xs if k <= top and not (overflow and k > cap)]
    p_ok = sum(q for _, q in start)
    el = sum(q * loss_v[k - 1] for k, q in start) / p_ok
    es = sum(q * s_v[k - 1] for k, q in start) / p_ok * (d if exact else float(d))
    return QueueSolve(el, es, 1 - p_ok, bool(exact))
