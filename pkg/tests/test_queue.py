from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelcross.errors import InvalidQueueModel
from levelcross.estimators import MCConfig
from levelcross.excursion import EngineConfig, run_excursion
from levelcross.queue import (
    QueueModel,
    estimate_EL_N,
    exact_EL_N,
    run_busy_period,
    theorem6_sweep,
)
from levelcross.steps import ExponentialLaw, FiniteLaw, new_state, point

FAST = MCConfig(20000, master_seed=3, max_steps=10**6, censor_limit=0.01)


X12 = FiniteLaw(((0.1, 0.5), (0.2, 0.5)))


def discrete(N=1, policy="exceeded"):
    return QueueModel(1, 1, X12, X12, N, policy)


def control(N=3, policy="exceeded"):
    return QueueModel(1, F(3, 2), FiniteLaw(((1, F(1, 2)), (2, F(1, 2)))), point(1), N, policy)


def test_model_validation():
    with pytest.raises(InvalidQueueModel):
        QueueModel(1, 1, point(1), point(2), 5)
    with pytest.raises(InvalidQueueModel):
        QueueModel(1, 1, point(1), point(1), 1)
    with pytest.raises(InvalidQueueModel):
        QueueModel(1, 1, point(1), point(1), 5, policy="drop")
    assert control().is_lattice_control() and not discrete().is_lattice_control()


def test_forced_path_policies():
    ev = [1, 1, -1, 2, 1, 1, -1, -1, -1, -1, -1]
    # content after each event: 1 2 1 3 4 ...
    over = run_busy_period(control(3, "overflow"), forced_events=ev, record_path=True)
    exc = run_busy_period(control(3, "exceeded"), forced_events=ev, record_path=True)
    # overflow drops the 5th event (3 + 1 > 3); exceeded admits it and drops the 6th
    assert over.lost_at == [5, 6] and over.losses == 2
    assert exc.lost_at == [6] and exc.losses == 1
    assert list(exc.path[:6]) == [0, 1, 2, 1, 3, 4]
    for r in (over, exc):
        assert r.path[-1] <= 0 and not r.censored
        for k in r.lost_at:
            assert r.path[k] == r.path[k - 1]


def test_leading_services_are_idle():
    a = run_busy_period(control(), forced_events=[-1, -1, 1, -1])
    assert a.events == 2 and a.s_tau == 0


def test_standalone_rejection_only_under_overflow():
    m = QueueModel(1, 1, FiniteLaw(((1, 0.5), (3, 0.5))), point(2), 2.5, "overflow")
    r = run_busy_period(m, forced_events=[3, -2])
    assert r.standalone_rejection and r.losses == 1
    r = run_busy_period(QueueModel(1, 1, m.x_law, m.y_law, 2.5), forced_events=[3, -2, -2])
    assert not r.standalone_rejection


def test_infinite_capacity_replays_the_walk():
    m = discrete(float("inf"))
    seen = 0
    for r in range(300):
        ex = run_excursion(m.mixture(), EngineConfig([1.0], max_steps=10**6), new_state(9, r))
        if not ex.first_step_positive or ex.censored:
            continue
        bp = run_busy_period(m, new_state(9, r), max_events=10**6)
        seen += 1
        assert bp.losses == 0 and bp.events == ex.steps
        assert bp.s_tau == pytest.approx(ex.s_tau, abs=1e-12)
    assert seen > 100


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([2, 5, 10]), st.integers(0, 1000))
def test_scale_equivariance(c, seed):
    m = discrete(1)
    xc = FiniteLaw(((0.1 * c, 0.5), (0.2 * c, 0.5)))
    big = QueueModel(1, 1, xc, xc, 1 * c)
    a = run_busy_period(m, new_state(seed), record_path=True)
    b = run_busy_period(big, new_state(seed), record_path=True)
    assert a.losses == b.losses and a.events == b.events
    np.testing.assert_allclose(b.path, a.path * c, atol=1e-9)


def test_exact_control_is_one():
    for N in (2, 3, 4, 6):
        s = exact_EL_N(control(N))
        assert s.exact and s.expected_losses == 1 and s.mean_s_tau == 0


def test_exact_discrete_model():
    s = exact_EL_N(discrete(F(2)))
    # 1.2060..., close to but not equal to 11/9
    assert s.exact and 1 < s.expected_losses < F(11, 9)
    assert float(s.expected_losses) == pytest.approx(1.20601, abs=1e-4)
    assert s.mean_s_tau < 0
    flt = exact_EL_N(discrete(F(2)), exact=False)
    assert float(s.expected_losses) == pytest.approx(flt.expected_losses, rel=1e-10)


@pytest.mark.parametrize("policy", ["exceeded", "overflow"])
def test_mc_matches_exact(policy):
    m = discrete(1, policy)
    est = estimate_EL_N(m, FAST)
    assert est.contains(exact_EL_N(m).expected_losses)


def test_exponential_requires_mc():
    m = QueueModel(1, 1, FiniteLaw(((0.1, 0.5), (0.2, 0.5))), ExponentialLaw(0.15), 1)
    with pytest.raises(InvalidQueueModel):
        exact_EL_N(m)


def test_sweep_dichotomy():
    rep = theorem6_sweep(control(), [2, 3], FAST)
    assert rep.control and rep.ok
    rep = theorem6_sweep(discrete(), [0.5, 1], FAST)
    assert not rep.control and rep.ok
    assert all(r.estimate.ci95[0] > 1 for r in rep.rows)


def test_worker_count_reproducible():
    a = estimate_EL_N(discrete(1), MCConfig(5000, master_seed=1, workers=1))
    b = estimate_EL_N(discrete(1), MCConfig(5000, master_seed=1, workers=4))
    assert a == b


def test_unit_queue_fourth_arrival():
    m = QueueModel(1, 1, point(1), point(1), 3, "overflow")
    r = run_busy_period(m, forced_events=[1, 1, 1, 1, -1, -1, -1], record_path=True)
    assert r.lost_at == [4] and list(r.path) == [0, 1, 2, 3, 3, 2, 1, 0]
    # the default policy only refuses arrivals once content is above N
    r = run_busy_period(m.__class__(1, 1, point(1), point(1), 3), forced_events=[1, 1, 1, 1, 1, -1, -1, -1, -1],
                        record_path=True)
    assert r.lost_at == [5] and r.path[4] == 4
