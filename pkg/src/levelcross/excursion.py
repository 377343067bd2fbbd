"""Single excursions of the walk and their level-crossing bookkeeping.

An excursion starts at ``S_0 = 0``. It ends at ``tau = 1`` when the first
step is nonpositive, otherwise at the first ``t > 1`` with ``S_t <= 0``.
``L_alpha`` counts the steps with ``S_{t-1} < alpha <= S_t``. Each such step
opens a crossing episode, which closes at the next step that lands below
``alpha``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from numba import njit

from . import _rng
from . import steps as _steps
from .errors import EmptyPath, InvalidDistribution

DEFAULT_MAX_STEPS = 10**7


@dataclass(frozen=True)
class EngineConfig:
    levels: Sequence[float]
    max_steps: int = DEFAULT_MAX_STEPS
    record_path: bool = False

    def __post_init__(self):
        levels = tuple(sorted(float(a) for a in self.levels))
        if not levels:
            raise ValueError("at least one level is required")
        if any(not a > 0 for a in levels):
            raise ValueError("levels must be positive")
        if int(self.max_steps) < 1:
            raise ValueError("max_steps must be >= 1")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "max_steps", int(self.max_steps))


@dataclass(frozen=True)
class CrossingEpisode:
    index: int
    t: int
    tau: Optional[int]  # None if the excursion was censored inside the episode
    s_before: float
    s_after: Optional[float]


@dataclass
class ExcursionResult:
    tau: Optional[int]  # None when censored
    s_tau: float  # last position reached when censored
    crossings: Dict[float, int]
    episodes: Dict[float, List[CrossingEpisode]]
    censored: bool
    first_step_positive: bool
    steps: int
    path: Optional[np.ndarray] = field(default=None, repr=False)

    def write_path_csv(self, fh) -> None:
        """Dump the recorded path as ``t,S_t`` rows."""
        if self.path is None:
            raise ValueError("path was not recorded (set record_path=True)")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "S_t"])
        for t, s in enumerate(self.path):
            w.writerow([t, repr(float(s))])


def levels_in_units(code: _steps.StepCode, levels) -> np.ndarray:
    """Thresholds in kernel units; on a lattice ``S >= a`` iff ``S >= ceil(a)``."""
    out = np.empty(len(levels))
    for i, a in enumerate(levels):
        u = _steps.to_units(code, a)
        out[i] = math.ceil(u) if code.lattice else u
    return out


@njit(cache=True, nogil=True)
def walk_core(
    p_pos, pk, pv, pc, pa, pb, nk, nv, nc, na, nb,
    levels, max_steps, forced, state,
    path, counts, ep_t, ep_tau, ep_before, ep_after,
):
    """Run one excursion in kernel units.

    Episodes beyond ``ep_t.shape[1]`` are counted but not stored; the path is
    stored while it fits in ``path``. Returns
    ``(steps, s_tau, censored, first_positive, path_len)``.
    """
    nl = levels.shape[0]
    cap = ep_t.shape[1]
    pcap = path.shape[0]
    n_forced = forced.shape[0]
    for j in range(nl):
        counts[j] = 0
    above = np.zeros(nl, dtype=np.bool_)
    s = 0.0
    if pcap > 0:
        path[0] = 0.0
    t = 0
    first_positive = False
    while True:
        if t >= max_steps or (n_forced > 0 and t >= n_forced):
            return t, s, True, first_positive, min(t + 1, pcap)
        # coin and half drawn inline: routing through draw_step costs ~7x here
        if n_forced > 0:
            x = forced[t]
        elif _rng.uniform(state) <= p_pos:
            x = _steps.draw_half(pk, pv, pc, pa, pb, state)
        else:
            x = -_steps.draw_half(nk, nv, nc, na, nb, state)
        prev = s
        s = prev + x
        t += 1
        if t < pcap:
            path[t] = s
        if t == 1:
            first_positive = x > 0
        for j in range(nl):
            a = levels[j]
            if prev < a and s >= a:
                k = counts[j]
                if k < cap:
                    ep_t[j, k] = t
                    ep_before[j, k] = prev
                counts[j] = k + 1
                above[j] = True
            elif above[j] and s < a:
                k = counts[j] - 1
                if k < cap:
                    ep_tau[j, k] = t
                    ep_after[j, k] = s
                above[j] = False
        if s <= 0.0:
            return t, s, False, first_positive, min(t + 1, pcap)


def _forced_units(code, forced):
    if forced is None:
        return np.zeros(0)
    arr = np.asarray([_steps.to_units(code, float(x)) for x in forced], dtype=np.float64)
    if arr.size == 0:
        raise ValueError("forced step list is empty")
    return arr


def run_excursion(
    dist: _steps.StepDistribution,
    cfg: EngineConfig,
    rng_state: Optional[np.ndarray] = None,
    forced_steps: Optional[Sequence[float]] = None,
) -> ExcursionResult:
    """Simulate one excursion and collect crossings per level.

    ``rng_state`` (see :func:`levelcross.steps.new_state`) is advanced in
    place. ``forced_steps`` replaces sampling by a fixed step sequence; the
    excursion is reported as censored if the sequence runs out first.
    """
    _steps.validate(dist)
    if rng_state is None and forced_steps is None:
        raise ValueError("need an rng_state or forced_steps")
    code = _steps.encode(dist)
    levels_u = levels_in_units(code, cfg.levels)
    forced = _forced_units(code, forced_steps)
    if rng_state is None:
        rng_state = _steps.new_state(0)
    start = rng_state.copy()
    nl = len(levels_u)
    ep_cap = 8
    path_cap = 1024 if cfg.record_path else 0
    while True:
        state = start.copy()
        counts = np.zeros(nl, dtype=np.int64)
        ep_t = np.zeros((nl, ep_cap), dtype=np.int64)
        ep_tau = np.full((nl, ep_cap), -1, dtype=np.int64)
        ep_before = np.zeros((nl, ep_cap))
        ep_after = np.full((nl, ep_cap), np.nan)
        path = np.zeros(path_cap)
        steps_, s_tau, censored, first_pos, plen = walk_core(
            *code.args(), levels_u, cfg.max_steps, forced, state,
            path, counts, ep_t, ep_tau, ep_before, ep_after,
        )
        grow = False
        if counts.max(initial=0) > ep_cap:
            ep_cap = int(counts.max()) + 1
            grow = True
        if cfg.record_path and steps_ + 1 > path_cap:
            path_cap = steps_ + 1
            grow = True
        if not grow:
            break
    rng_state[:] = state
    unit = code.unit
    crossings, episodes = {}, {}
    for j, a in enumerate(cfg.levels):
        crossings[a] = int(counts[j])
        eps = []
        for k in range(int(counts[j])):
            closed = ep_tau[j, k] >= 0
            eps.append(
                CrossingEpisode(
                    index=k + 1,
                    t=int(ep_t[j, k]),
                    tau=int(ep_tau[j, k]) if closed else None,
                    s_before=float(ep_before[j, k]) * unit,
                    s_after=float(ep_after[j, k]) * unit if closed else None,
                )
            )
        episodes[a] = eps
    return ExcursionResult(
        tau=None if censored else int(steps_),
        s_tau=float(s_tau) * unit,
        crossings=crossings,
        episodes=episodes,
        censored=bool(censored),
        first_step_positive=bool(first_pos),
        steps=int(steps_),
        path=path[:plen] * unit if cfg.record_path else None,
    )


def crossing_count_oracle(path: Sequence[float], alpha: float) -> int:
    """Naive recount of up-crossings of ``alpha`` along a full path ``S_0..S_tau``."""
    if len(path) == 0:
        raise EmptyPath("path must contain at least S_0")
    return sum(1 for prev, cur in zip(path[:-1], path[1:]) if prev < alpha <= cur)
