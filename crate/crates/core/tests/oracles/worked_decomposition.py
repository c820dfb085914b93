"""Brute-force Brier decomposition over exact fractions.

Bins are [k/K, (k+1)/K) with the last bin closed. Prints one `name num/den`
line per term.
"""
from fractions import Fraction as F

p = [F(8, 10), F(8, 10), F(3, 10), F(3, 10)]
o = [1, 1, 0, 1]
K = 10
N = len(p)


def bin_of(x):
    for k in range(K):
        lo, hi = F(k, K), F(k + 1, K)
        if lo <= x < hi or (k == K - 1 and x == 1):
            return k
    raise ValueError(x)


bins = {}
for x, y in zip(p, o):
    bins.setdefault(bin_of(x), []).append((x, y))

obar = F(sum(o), N)
cal = F(0)
ref = F(0)
for members in bins.values():
    n = len(members)
    f = sum(x for x, _ in members) / n
    ok = F(sum(y for _, y in members), n)
    cal += n * (f - ok) ** 2
    ref += n * (ok - obar) ** 2
cal /= N
ref /= N
unc = obar * (1 - obar)
brier = sum((x - y) ** 2 for x, y in zip(p, o)) / N

for name, v in [("brier", brier), ("calibration", cal), ("refinement", ref), ("uncertainty", unc)]:
    print(f"{name} {v.numerator}/{v.denominator}")
