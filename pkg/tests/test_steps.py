import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelcross import steps
from levelcross.errors import BadProbabilities, DegenerateSupport, InvalidDistribution, NonzeroMean
from levelcross.steps import (
    ExponentialLaw,
    FiniteLaw,
    PointPosExponentialNeg,
    PointPosGeometricNeg,
    QueueMixture,
    Scaled,
    SymmetryClass,
    classify,
    finite,
    moments,
    new_state,
    sample,
    validate,
)


def test_validate_accepts_and_rejects(simple_walk, up2):
    assert validate(simple_walk) is simple_walk
    assert validate(up2) is up2
    with pytest.raises(NonzeroMean):
        validate(finite((1, 0.5), (-2, 0.5)))
    with pytest.raises(BadProbabilities):
        validate(finite((1, 0.6), (-1, 0.5)))
    with pytest.raises(BadProbabilities):
        validate(finite((1, 1.5), (-1, -0.5)))
    with pytest.raises(DegenerateSupport):
        validate(finite((0, 1.0)))
    with pytest.raises(InvalidDistribution):
        validate(finite((1, 0.25), (1, 0.25), (-1, 0.5)))


def test_classify_examples(four_atom, up2, up1):
    assert classify(four_atom) is SymmetryClass.PURELY_SYMMETRIC
    assert classify(up2) is SymmetryClass.P_SYMMETRIC
    assert classify(up1) is SymmetryClass.E_SYMMETRIC
    assert classify(PointPosExponentialNeg(1, 1)) is SymmetryClass.P_SYMMETRIC
    assert classify(PointPosGeometricNeg(1, 3)) is SymmetryClass.E_SYMMETRIC


def test_classify_demotes_on_perturbation():
    q, eps = F(1, 4), F(1, 20)
    base = finite((-2, q), (-1, q), (1, q), (2, q))
    assert classify(base) is SymmetryClass.PURELY_SYMMETRIC
    # redistribute inside the positive half only: masses and mean stay put, mirror symmetry breaks
    s6 = F(1, 6)
    base6 = finite((-3, s6), (-2, s6), (-1, s6), (1, s6), (2, s6), (3, s6))
    assert classify(base6) is SymmetryClass.PURELY_SYMMETRIC
    p_only = finite((-3, s6), (-2, s6), (-1, s6), (1, s6 + eps), (2, s6 - 2 * eps), (3, s6 + eps))
    assert sum(v * p for v, p in p_only.atoms) == 0
    assert classify(p_only) is SymmetryClass.P_SYMMETRIC
    # move mass across the sign: +1 gains 2 eps, +2 loses eps, compensated on the negative side
    e_only = finite((-2, q + eps), (-1, q - 2 * eps), (1, q + 2 * eps), (2, q - eps))
    assert sum(v * p for v, p in e_only.atoms) == 0
    assert classify(e_only) is SymmetryClass.E_SYMMETRIC


def test_moments_examples(four_atom, up1, simple_walk):
    m = moments(four_atom)
    assert (m.a, m.p_pos, m.p_nonzero) == (F(3, 2), F(1, 2), 1)
    m = moments(simple_walk)
    assert (m.a, m.p_pos) == (1, F(1, 2))
    m = moments(up1)
    assert (m.a, m.p_pos) == (1, F(2, 3))


def test_geometric_convention():
    d = PointPosGeometricNeg(1, 3)
    m = moments(d)
    assert m.p_pos == pytest.approx(3 / 4)
    assert m.a * m.p_pos + m.neg_mean * m.p_nonpos == pytest.approx(0, abs=1e-12)


def test_scaled_sample_is_proportional(four_atom):
    c = 2.5
    for seed in range(50):
        x = sample(four_atom, new_state(seed))
        y = sample(Scaled(four_atom, c), new_state(seed))
        assert y == x * c


def test_exponential_positive_branch_is_exact():
    d = PointPosExponentialNeg(1, 1)
    st_ = new_state(7)
    pos = [x for x in (sample(d, st_) for _ in range(2000)) if x > 0]
    assert pos and all(x == 1.0 for x in pos)


def test_sample_n_matches_repeated_sample(up2):
    a, b = new_state(5), new_state(5)
    assert list(steps.sample_n(up2, a, 50)) == [sample(up2, b) for _ in range(50)]
    assert (a == b).all()


def test_sample_is_deterministic_in_state(up2):
    a = [sample(up2, new_state(3, 9)) for _ in range(5)]
    assert len(set(a)) == 1


@pytest.mark.parametrize(
    "dist",
    [
        finite((-2, 0.25), (-1, 0.25), (1, 0.25), (2, 0.25)),
        finite((1, F(2, 3)), (-2, F(1, 3))),
        PointPosGeometricNeg(1, 2.5),
        PointPosExponentialNeg(1, 1),
        QueueMixture(0.5, FiniteLaw(((0.1, 0.5), (0.2, 0.5))), ExponentialLaw(0.15)),
    ],
)
def test_sample_mean_lln(dist):
    state = new_state(11)
    x = steps.sample_n(dist, state, 10**6)
    assert abs(x.mean()) <= 4 * steps.sd(dist) / 1e3
    assert x.std() == pytest.approx(steps.sd(dist), rel=0.01)


atom_values = st.lists(st.integers(1, 6), min_size=1, max_size=4, unique=True)


@st.composite
def zero_mean_finite(draw):
    """Finite law with rational masses and mean exactly zero."""
    pos = draw(atom_values)
    neg = draw(atom_values)
    wp = [F(draw(st.integers(1, 9))) for _ in pos]
    wn = [F(draw(st.integers(1, 9))) for _ in neg]
    mp = sum(v * w for v, w in zip(pos, wp))
    mn = sum(v * w for v, w in zip(neg, wn))
    # scale the negative weights so both sides carry the same first moment
    wn = [w * mp / mn for w in wn]
    z = F(draw(st.integers(0, 3)))
    total = sum(wp) + sum(wn) + z
    atoms = [(v, w / total) for v, w in zip(pos, wp)] + [(-v, w / total) for v, w in zip(neg, wn)]
    if z:
        atoms.append((0, z / total))
    return finite(*atoms)


@settings(max_examples=60, deadline=None)
@given(zero_mean_finite())
def test_moment_identity(dist):
    m = moments(dist)
    assert m.a * m.p_pos + m.neg_mean * m.p_nonpos == 0
    cls = classify(dist)
    if cls is not SymmetryClass.E_SYMMETRIC:
        assert m.p_pos == m.p_nonzero - m.p_pos


@settings(max_examples=40, deadline=None)
@given(zero_mean_finite(), st.floats(0.1, 10))
def test_scaled_moments(dist, c):
    m, ms = moments(dist), moments(Scaled(dist, c))
    assert float(ms.a) == pytest.approx(float(m.a) * c)
    assert ms.p_pos == m.p_pos
    assert classify(Scaled(dist, c)) is classify(dist)


def test_encode_uses_lattice_units():
    code = steps.encode(finite((0.1, 0.5), (-0.1, 0.5)))
    assert code.lattice and math.isclose(code.unit, 0.1)
    assert list(code.pos.vals) == [1.0]
    assert steps.to_units(code, 0.3) == 3.0
