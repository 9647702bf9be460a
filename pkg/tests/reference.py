"""Independent high-precision reference implementations used as test oracles.

Nothing here imports the package; each formula is written out directly in
mpmath so the tests compare two separate derivations.
"""

from fractions import Fraction

import mpmath as mp

mp.mp.dps = 50
FD_STEP = mp.mpf("1e-6")


def sigma(z):
    return 1 / (1 + mp.exp(-z))


def ce(z, o):
    # -log sigma(t) == log(1 + exp(-t)); log1p keeps precision when sigma(t) ~ 1
    t = z if o == 1 else -z
    return mp.log1p(mp.exp(-t))


def focal(z, o, gamma):
    t = z if o == 1 else -z
    return sigma(-t) ** gamma * ce(z, o)


def tcp(z, p_star):
    return (sigma(z) - p_star) ** 2


def steep_slope(z, o, alpha_pos, alpha_neg):
    # correct samples pay more as z falls, incorrect ones as z rises
    s = z / (1 + abs(z))
    if o == 1:
        return mp.exp(-alpha_pos * s) - mp.exp(-alpha_pos)
    return mp.exp(alpha_neg * s) - mp.exp(-alpha_neg)


def central_difference(f, z, h=FD_STEP):
    z = mp.mpf(z)
    return (f(z + h) - f(z - h)) / (2 * h)


def auc_pairwise(conf, o):
    """Mann-Whitney statistic over every (positive, negative) pair, exact."""
    pos = [c for c, y in zip(conf, o) if y == 1]
    neg = [c for c, y in zip(conf, o) if y == 0]
    total = Fraction(0)
    for p in pos:
        for n in neg:
            if p > n:
                total += 1
            elif p == n:
                total += Fraction(1, 2)
    return total / (len(pos) * len(neg))


def average_precision(score, label):
    """Sum over distinct thresholds (high to low) of recall gain times precision."""
    n_positive = sum(label)
    ap = Fraction(0)
    prev_recall = Fraction(0)
    for t in sorted(set(score), reverse=True):
        chosen = [y for s, y in zip(score, label) if s >= t]
        hits = sum(chosen)
        recall = Fraction(hits, n_positive)
        ap += (recall - prev_recall) * Fraction(hits, len(chosen))
        prev_recall = recall
    return ap


def roc_vertices(conf, o):
    n_pos = sum(o)
    n_neg = len(o) - n_pos
    pts = [(Fraction(0), Fraction(0))]
    for t in sorted(set(conf), reverse=True):
        tp = sum(1 for c, y in zip(conf, o) if c >= t and y == 1)
        fp = sum(1 for c, y in zip(conf, o) if c >= t and y == 0)
        pts.append((Fraction(fp, n_neg), Fraction(tp, n_pos)))
    return pts
