"""Independent reference computations used only by the tests.

They deliberately avoid the package's lattice machinery: dense numpy
solves on a killed (not clipped) chain, and plain Python recounts.
"""

import numpy as np


def dense_EL(pmf: dict, alpha_u: int, C: int = 400) -> float:
    """E L_alpha for an integer step law, killing the walk above ``C``."""
    Q = np.zeros((C, C))
    for s in range(1, C + 1):
        for k, p in pmf.items():
            t = s + k
            if 1 <= t <= C:
                Q[s - 1, t - 1] += p
    G = np.linalg.inv(np.eye(C) - Q)
    # expected crossings started from state s, counting steps out of s
    cross_from = np.array([sum(p for k, p in pmf.items() if s < alpha_u <= s + k) for s in range(1, C + 1)])
    total = 0.0
    for x1, p in pmf.items():
        if x1 <= 0:
            continue
        total += p * (x1 >= alpha_u)
        if x1 <= C:
            total += p * (G[x1 - 1] @ cross_from)
    return float(total)


def dense_S_tau(pmf: dict, C: int = 400) -> float:
    """E{S_tau | X_1 > 0} on the killed chain (renormalised over absorbed mass)."""
    Q = np.zeros((C, C))
    r_val = np.zeros(C)
    r_mass = np.zeros(C)
    for s in range(1, C + 1):
        for k, p in pmf.items():
            t = s + k
            if 1 <= t <= C:
                Q[s - 1, t - 1] += p
            elif t <= 0:
                r_val[s - 1] += p * t
                r_mass[s - 1] += p
    G = np.linalg.inv(np.eye(C) - Q)
    p_pos = sum(p for k, p in pmf.items() if k > 0)
    num = sum(p * (G[k - 1] @ r_val) for k, p in pmf.items() if k > 0) / p_pos
    den = sum(p * (G[k - 1] @ r_mass) for k, p in pmf.items() if k > 0) / p_pos
    return float(num / den)
