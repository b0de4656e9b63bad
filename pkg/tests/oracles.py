"""Independent brute-force quadrature oracles for the claim integral.

Two decompositions, both independent of the production path (which uses
closed-form time integration over exact claim cells):

* tensor midpoint over (t, u) with the law's density: fully primitive-free,
  but first-order accurate across the floor discontinuities, so it certifies
  only a coarse tolerance;
* midpoint in t with exact per-cell claim-law integration in u: the t
  integrand is continuous, so this one converges fast and certifies tight
  tolerances while still slicing time numerically.
"""

import math

import numpy as np

from divopt.model import Deterministic, Erlang2, Exponential, integrate_affine


def brute_force_tensor(params, law, grid, values, n, m, nt=2000, na=2000):
    b1, b2, c1, c2 = params.b1, params.b2, params.c1, params.c2
    dx1, dx2, delta = grid.dx1, grid.dx2, grid.delta
    lam, q = params.lam, params.q
    ts = (np.arange(nt) + 0.5) * delta / nt
    total = 0.0
    for t in ts:
        ub = min((n * dx1 + c1 * t) / b1, (m * dx2 + c2 * t) / b2)
        if ub <= 0:
            continue
        if isinstance(law, Deterministic):
            if law.atom > ub:
                continue
            al = np.array([law.atom])
            w = np.array([1.0])
        else:
            al = (np.arange(na) + 0.5) * ub / na
            if isinstance(law, Exponential):
                dens = law.rate * np.exp(-law.rate * al)
            elif isinstance(law, Erlang2):
                dens = law.rate**2 * al * np.exp(-law.rate * al)
            else:
                raise TypeError(law)
            w = dens * ub / na
        k1 = np.floor((n * dx1 + c1 * t - b1 * al) / dx1).astype(int)
        k2 = np.floor((m * dx2 + c2 * t - b2 * al) / dx2).astype(int)
        vals = values[k1, k2]
        pay = (c1 + c2) * t - al + (n - k1) * dx1 + (m - k2) * dx2
        total += (delta / nt) * lam * math.exp(-(lam + q) * t) * np.sum(w * (vals + pay))
    return total


def brute_force_t_slices(params, law, grid, values, n, m, nt=4000):
    b1, b2, c1, c2 = params.b1, params.b2, params.c1, params.c2
    dx1, dx2, delta = grid.dx1, grid.dx2, grid.delta
    lam, q = params.lam, params.q
    total = 0.0
    for i in range(nt):
        t = (i + 0.5) * delta / nt
        y1 = n * dx1 + c1 * t
        y2 = m * dx2 + c2 * t
        ub = min(y1 / b1, y2 / b2)
        cuts = [0.0, ub]
        for y, b, dx in ((y1, b1, dx1), (y2, b2, dx2)):
            ks = np.arange(0, int(math.floor(y / dx)) + 1)
            a = (y - ks * dx) / b
            cuts.extend(a[(a > 0) & (a < ub)].tolist())
        bp = np.unique(np.array(cuts))
        inner = 0.0
        for a_lo, a_hi in zip(bp[:-1], bp[1:]):
            amid = 0.5 * (a_lo + a_hi)
            k1 = int(math.floor((y1 - b1 * amid) / dx1))
            k2 = int(math.floor((y2 - b2 * amid) / dx2))
            p = values[k1, k2] + (c1 + c2) * t + (n - k1) * dx1 + (m - k2) * dx2
            inner += integrate_affine(law, a_lo, a_hi, p, -1.0)
        total += (delta / nt) * lam * math.exp(-(lam + q) * t) * inner
    return total
