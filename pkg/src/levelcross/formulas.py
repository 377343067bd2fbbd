"""Closed-form expressions for the expected number of level crossings.

All functions are plain arithmetic and accept ``fractions.Fraction`` inputs,
in which case the results are exact.

Symbols: ``a = E{X | X > 0}``; ``es_tau = E{S_tau | X_1 > 0}`` (always
``<= 0``); ``b`` the expected drop ``S_{t_1-1} - S_{tau_1}`` across the first
episode above the level; ``p_pos = P{X > 0}``; ``p_nonzero = P{X != 0}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .errors import DegenerateDenominator


@dataclass(frozen=True)
class FormulaInputs:
    a: object
    b: object = 0
    es_tau: object = 0
    p_pos: Optional[object] = None
    p_nonzero: Optional[object] = None
    d: Optional[object] = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a = E{X|X>0} must be positive")
        if self.es_tau > 0:
            raise ValueError("E{S_tau|X_1>0} cannot be positive")
        for name in ("p_pos", "p_nonzero"):
            p = getattr(self, name)
            if p is not None and not 0 < p <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.p_pos is not None and self.p_nonzero is not None and self.p_pos > self.p_nonzero:
            raise ValueError("p_pos cannot exceed p_nonzero")


def _div(num, den):
    # keep int/Fraction arithmetic exact; plain int division would give a float
    if isinstance(num, (int, Fraction)) and isinstance(den, (int, Fraction)):
        return Fraction(num) / den
    return num / den


def _ratio(a, b, es_tau):
    if not a > b:
        raise DegenerateDenominator(f"a - b must be positive (a={a}, b={b})")
    return _div(a - es_tau, a - b)


def el_thm2(inputs: FormulaInputs):
    """``(a - es_tau) / (a - b) * p_pos``."""
    return _ratio(inputs.a, inputs.b, inputs.es_tau) * inputs.p_pos


def el_cor1(inputs: FormulaInputs):
    """P-symmetric form: ``1/2 (a - es_tau) / (a - b) * p_nonzero``."""
    return _ratio(inputs.a, inputs.b, inputs.es_tau) * inputs.p_nonzero / 2


def el_thm4(d, es_tau, p_pos):
    """Single positive atom ``d``: general form with ``b = es_tau * p_pos``."""
    if not d > 0 or es_tau > 0:
        raise ValueError("need d > 0 and es_tau <= 0")
    return _div((d - es_tau) * p_pos, d - es_tau * p_pos)


def el_pure(a, es_tau, p_nonzero):
    """Purely symmetric walks (``b = 0``): ``1/2 (a - es_tau) / a * p_nonzero``."""
    if not a > 0:
        raise ValueError("a must be positive")
    return _div((a - es_tau) * p_nonzero, 2 * a)


def el_queue(a, es_tau):
    """Expected losses per busy period, ``(a - es_tau) / a``; exceeds 1 iff ``es_tau < 0``."""
    if not a > 0 or es_tau > 0:
        raise ValueError("need a > 0 and es_tau <= 0")
    return _div(a - es_tau, a)


def min_valid_alpha(es_tau, d=None):
    """Lowest level for which both episode-1 means are guaranteed positive."""
    if es_tau > 0:
        raise ValueError("es_tau must be <= 0")
    return max(1 if d is None else d, -es_tau)
