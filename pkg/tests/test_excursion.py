import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelcross import EngineConfig, Scaled, crossing_count_oracle, finite, new_state, run_excursion
from levelcross.errors import EmptyPath

LEVELS = EngineConfig(levels=[1, 2, 3, 5], record_path=True)


def test_nonpositive_first_step_ends_at_one(simple_walk):
    r = run_excursion(simple_walk, LEVELS, forced_steps=[-1])
    assert (r.tau, r.s_tau, r.first_step_positive, r.censored) == (1, -1.0, False, False)
    assert all(v == 0 for v in r.crossings.values())


def test_up_up_down_down(simple_walk):
    r = run_excursion(simple_walk, EngineConfig(levels=[1, 2]), forced_steps=[1, 1, -1, -1])
    assert r.tau == 4 and r.s_tau == 0.0
    assert r.crossings == {1.0: 1, 2.0: 1}
    (ep,) = r.episodes[2.0]
    assert (ep.t, ep.tau, ep.s_before, ep.s_after) == (2, 3, 1.0, 1.0)


def test_four_atom_forced_path(four_atom):
    r = run_excursion(four_atom, EngineConfig(levels=[1, 2]), forced_steps=[2, -1, -2])
    assert (r.tau, r.s_tau) == (3, -1.0)
    assert r.crossings == {1.0: 1, 2.0: 1}


def test_zero_steps_neither_cross_nor_stop():
    d = finite((1, 0.4), (0, 0.2), (-1, 0.4))
    r = run_excursion(d, EngineConfig(levels=[1]), forced_steps=[1, 0, 0, -1])
    assert r.tau == 4 and r.crossings[1.0] == 1


def test_exhausted_forced_steps_censor(simple_walk):
    r = run_excursion(simple_walk, EngineConfig(levels=[1]), forced_steps=[1, 1])
    assert r.censored and r.tau is None and r.s_tau == 2.0
    (ep,) = r.episodes[1.0]
    assert ep.tau is None and ep.s_after is None


def test_max_steps_censors(simple_walk):
    cfg = EngineConfig(levels=[1], max_steps=3)
    r = run_excursion(simple_walk, cfg, forced_steps=[1, 1, 1, -1, -1, -1])
    assert r.censored and r.steps == 3


def test_config_validation():
    with pytest.raises(ValueError):
        EngineConfig(levels=[])
    with pytest.raises(ValueError):
        EngineConfig(levels=[0.0])
    with pytest.raises(ValueError):
        EngineConfig(levels=[1], max_steps=0)
    assert EngineConfig(levels=[3, 1]).levels == (1.0, 3.0)


def test_count_oracle_examples():
    assert crossing_count_oracle([0, 2, 1, -1], 2) == 1
    assert crossing_count_oracle([0, -1], 7) == 0
    with pytest.raises(EmptyPath):
        crossing_count_oracle([], 1)


def _check_result(r, levels):
    path = r.path
    assert path[0] == 0.0 and len(path) == r.steps + 1
    if not r.censored:
        assert r.s_tau == path[-1] and r.s_tau <= 0
        assert (path[1:-1] > 0).all() or r.tau == 1
    if not r.first_step_positive:
        assert r.tau == 1 and all(v == 0 for v in r.crossings.values())
    for a in levels:
        a = float(a)
        assert r.crossings[a] == crossing_count_oracle(path, a)
        eps = r.episodes[a]
        assert len(eps) == r.crossings[a]
        for i, ep in enumerate(eps):
            assert ep.s_before < a <= path[ep.t]
            if ep.tau is not None:
                assert ep.t < ep.tau and ep.s_after < a
                assert ep.s_after == path[ep.tau]
            if i + 1 < len(eps):
                assert ep.tau < eps[i + 1].t
        if not r.censored:
            assert all(ep.tau is not None for ep in eps)
            # the last step lands at <= 0, so it can never be an up-crossing
            assert not any(ep.t == r.tau for ep in eps)


def test_streamed_counts_match_recount_on_1000_paths(four_atom):
    state = new_state(2024)
    for _ in range(1000):
        r = run_excursion(four_atom, LEVELS, rng_state=state)
        _check_result(r, LEVELS.levels)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**63 - 1), st.sampled_from([0.1, 0.5, 3.0, 7.25]))
def test_scale_equivariance(seed, c):
    base = finite((-2, 0.25), (-1, 0.25), (1, 0.25), (2, 0.25))
    levels = [1, 2, 3]
    r1 = run_excursion(base, EngineConfig(levels=levels), rng_state=new_state(seed))
    r2 = run_excursion(Scaled(base, c), EngineConfig(levels=[c * a for a in levels]), rng_state=new_state(seed))
    assert r1.tau == r2.tau
    for a in levels:
        assert r1.crossings[float(a)] == r2.crossings[c * a]
        for e1, e2 in zip(r1.episodes[float(a)], r2.episodes[c * a]):
            assert e2.s_before == e1.s_before * c
            assert (e1.t, e1.tau) == (e2.t, e2.tau)


def test_continuous_variant_paths_are_consistent():
    from levelcross import PointPosExponentialNeg

    d = PointPosExponentialNeg(1, 1)
    state = new_state(9)
    for _ in range(300):
        _check_result(run_excursion(d, LEVELS, rng_state=state), LEVELS.levels)


def test_rng_state_advances_and_long_episode_lists(simple_walk):
    state = new_state(1)
    before = state.copy()
    # long excursions need more than the initial episode buffer
    seen_many = False
    for _ in range(1000):
        r = run_excursion(simple_walk, EngineConfig(levels=[5], record_path=True), rng_state=state)
        seen_many |= r.crossings[5.0] > 8
        _check_result(r, [5])
    assert not (state == before).all()
    assert seen_many


def test_path_csv(simple_walk):
    r = run_excursion(simple_walk, LEVELS, forced_steps=[1, -1])
    buf = io.StringIO()
    r.write_path_csv(buf)
    assert buf.getvalue() == "t,S_t\n0,0.0\n1,1.0\n2,0.0\n"
    r = run_excursion(simple_walk, EngineConfig(levels=[1]), forced_steps=[1, -1])
    with pytest.raises(ValueError):
        r.write_path_csv(buf)
