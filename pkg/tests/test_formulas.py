from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from levelcross.errors import DegenerateDenominator
from levelcross.formulas import (
    FormulaInputs,
    el_cor1,
    el_pure,
    el_queue,
    el_thm2,
    el_thm4,
    min_valid_alpha,
)

pos = st.fractions(min_value=F(1, 100), max_value=10)
nonpos = st.fractions(min_value=-10, max_value=0)
prob = st.fractions(min_value=F(1, 100), max_value=1)


def test_queue_value_is_exact():
    assert el_queue(F(3, 20), F(-1, 30)) == F(11, 9)
    assert el_queue(F(3, 20), F(-3, 20)) == 2
    assert el_queue(F(3, 2), 0) == 1


def test_known_values():
    assert el_pure(F(3, 2), F(-1, 3), 1) == F(11, 18)
    assert el_thm2(FormulaInputs(a=1, b=F(-1, 3), es_tau=F(-1, 2), p_pos=F(2, 3))) == F(3, 4)
    assert el_thm2(FormulaInputs(a=1, b=F(1, 2), es_tau=F(-1, 2), p_pos=F(2, 3))) == 2
    assert el_thm4(1, F(-1, 2), F(2, 3)) == F(3, 4)
    assert el_cor1(FormulaInputs(a=1, es_tau=0, p_nonzero=F(4, 5))) == F(2, 5)


def test_degenerate_and_invalid():
    with pytest.raises(DegenerateDenominator):
        el_thm2(FormulaInputs(a=1, b=1, es_tau=0, p_pos=F(1, 2)))
    with pytest.raises(ValueError):
        FormulaInputs(a=0)
    with pytest.raises(ValueError):
        FormulaInputs(a=1, es_tau=F(1, 10))
    with pytest.raises(ValueError):
        FormulaInputs(a=1, p_pos=F(3, 4), p_nonzero=F(1, 2))
    with pytest.raises(ValueError):
        el_queue(1, F(1, 2))
    with pytest.raises(ValueError):
        el_thm4(0, 0, F(1, 2))


def test_min_valid_alpha():
    assert min_valid_alpha(F(-1, 2)) == 1
    assert min_valid_alpha(-3) == 3
    assert min_valid_alpha(F(-1, 2), d=2) == 2
    with pytest.raises(ValueError):
        min_valid_alpha(1)


@given(pos, nonpos, prob)
def test_zero_b_is_scaled_queue_value(a, es, p):
    assert el_thm2(FormulaInputs(a=a, b=0, es_tau=es, p_pos=p)) == el_queue(a, es) * p


@given(pos, nonpos, prob)
def test_single_atom_form_is_b_substitution(d, es, p):
    assert el_thm4(d, es, p) == el_thm2(FormulaInputs(a=d, b=es * p, es_tau=es, p_pos=p))


@given(pos, nonpos, prob)
def test_pure_lower_bound(a, es, r):
    v = el_pure(a, es, r)
    assert v >= r / 2
    assert (v == r / 2) == (es == 0)


@given(pos, nonpos)
def test_queue_at_least_one(a, es):
    v = el_queue(a, es)
    assert v >= 1 and (v > 1) == (es < 0)


@given(pos, nonpos, prob)
def test_symmetric_form_matches_general_at_half(a, es, r):
    fi = FormulaInputs(a=a, b=0, es_tau=es, p_pos=r / 2, p_nonzero=r)
    assert el_cor1(fi) == el_thm2(fi) == el_pure(a, es, r)


@given(pos, st.fractions(min_value=-10, max_value=F(99, 100)), nonpos, prob)
def test_outputs_nonnegative(a, frac, es, p):
    b = a * frac
    assert el_thm2(FormulaInputs(a=a, b=b, es_tau=es, p_pos=p)) >= 0
