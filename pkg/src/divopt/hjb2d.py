"""Discrete dynamic-programming operators on the surplus grid.

The expensive piece is the claim integral entering the no-dividend
operator: a double integral over claim time t in [0, delta] and claim
size u, whose integrand involves the grid floor of the post-claim
surplus in each coordinate.  Swapping the integration order makes the
time integral piecewise closed-form: for fixed claim size u, each floor
index crosses at most one integer as t runs over [0, delta], at the
time delta*frac(u/h_i) with h_i = dx_i/b_i.  Partitioning the claim
axis at the multiples of h_1, h_2 (and at the points where the two
crossing times coincide) yields finitely many cells on which the
post-claim grid offset (j1, j2) relative to the start node is constant
and both the time integral and the claim-law integral have closed
forms.  Crucially the cells and their weights do not depend on the
start node (n, m): only the lookup index (n + j1, m + j2) does, and a
claim ruining a branch is exactly a negative lookup index.  The whole
claim operator is therefore one correlation of the value table with a
fixed kernel (zero padding implements ruin), evaluated either per point
by a sparse gather or over the full grid by FFT.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .model import ClaimLaw, GridSpec, ModelParams, integrate_affine

__all__ = [
    "Action",
    "ValueField",
    "ClaimKernel",
    "build_claim_kernel",
    "claim_field",
    "set_fft_workers",
    "shift_up_diag",
    "op_lump",
    "integral_I_delta",
    "op_T0",
    "op_T",
    "tie_epsilon",
    "continuous_L",
]

EPS_TIE_REL = 1e-9

_FFT_WORKERS = -1


def set_fft_workers(n: int):
    """Cap FFT worker threads (-1 or 0 = all cores)."""
    global _FFT_WORKERS
    _FFT_WORKERS = -1 if n in (0, -1) else int(n)


class Action(enum.IntFlag):
    """Grid control actions; ES (stop paying) seeds the iteration only."""

    E0 = 1
    E1 = 2
    E2 = 4
    ES = 8


@dataclass
class ValueField:
    """Value table on the truncated grid with unit-slope extension beyond it."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("value table must be finite")
        if np.any(self.values < 0):
            raise ValueError("value table must be nonnegative")

    def lookup(self, n: int, m: int) -> float:
        """Grid value at (n, m), extended linearly past the truncation."""
        if n < 0 or m < 0:
            raise IndexError("grid indices must be nonnegative")
        g = self.grid
        nc = min(n, g.n_max)
        mc = min(m, g.m_max)
        return (
            self.values[nc, mc]
            + max(n - g.n_max, 0) * g.dx1
            + max(m - g.m_max, 0) * g.dx2
        )

    def extend(self, x1: float, x2: float) -> float:
        """Continuous extension: floor to the grid and add both remainders."""
        if x1 < 0 or x2 < 0:
            raise ValueError("surplus coordinates must be nonnegative")
        g = self.grid
        n = int(math.floor(x1 / g.dx1 + 1e-12))
        m = int(math.floor(x2 / g.dx2 + 1e-12))
        return self.lookup(n, m) + (x1 - n * g.dx1) + (x2 - m * g.dx2)


def shift_up_diag(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Array of lookup(n+1, m+1), using the linear extension at the edges."""
    up = np.empty_like(values)
    up[:-1, :-1] = values[1:, 1:]
    up[-1, :-1] = values[-1, 1:] + grid.dx1
    up[:-1, -1] = values[1:, -1] + grid.dx2
    up[-1, -1] = values[-1, -1] + grid.dx1 + grid.dx2
    return up


def _breakpoints(h1: float, h2: float, a_cap: float) -> np.ndarray:
    """Sorted claim-size cell boundaries in [0, a_cap].

    Multiples of h1 and h2 (floor crossings of each coordinate) plus the
    points where the two crossing times coincide, i.e. where u/h1 - u/h2
    is an integer; within the resulting cells the time ordering of the
    two floor crossings is constant.
    """
    pts = [np.array([0.0, a_cap])]
    for h in (h1, h2):
        k = int(math.floor(a_cap / h)) + 1
        pts.append(h * np.arange(1, k + 1))
    if not math.isclose(h1, h2, rel_tol=1e-12):
        h3 = h1 * h2 / abs(h1 - h2)
        k = int(math.floor(a_cap / h3)) + 1
        pts.append(h3 * np.arange(1, k + 1))
    bp = np.concatenate(pts)
    bp = bp[(bp >= 0.0) & (bp <= a_cap * (1 + 1e-12))]
    bp = np.unique(bp)
    # merge near-duplicates (h3 often coincides with an h_i lattice)
    keep = np.concatenate([[True], np.diff(bp) > 1e-9 * min(h1, h2)])
    bp = bp[keep]
    bp[-1] = min(bp[-1], a_cap)
    return bp


@dataclass
class ClaimKernel:
    """Exact cell decomposition of the claim integral for one grid/model/law.

    kw[i1, i2] multiplies W(n - i1, m - i2); kp (same indexing) carries the
    dividends paid at the claim instant.  payout_field is the correlation
    of kp with the all-ones table and is the full payout contribution at
    every node (zero-padding encodes ruin in both pieces).
    """

    grid: GridSpec
    params: ModelParams
    law: ClaimLaw
    kw: np.ndarray
    kp: np.ndarray
    cell_i1: np.ndarray
    cell_i2: np.ndarray
    cell_wv: np.ndarray
    cell_wp: np.ndarray
    fshape: tuple
    _fk: np.ndarray = field(repr=False, default=None)
    payout_field: np.ndarray = field(repr=False, default=None)

    @property
    def discount_step(self) -> float:
        return math.exp(-(self.params.q + self.params.lam) * self.grid.delta)


def build_claim_kernel(params: ModelParams, law: ClaimLaw, grid: GridSpec) -> ClaimKernel:
    b1, b2 = params.b1, params.b2
    dx1, dx2, delta = grid.dx1, grid.dx2, grid.delta
    lam, beta = params.lam, params.lam + params.q
    n_pts, m_pts = grid.shape

    h1 = dx1 / b1
    h2 = dx2 / b2
    a_cap = min(n_pts * h1, m_pts * h2)
    bp = _breakpoints(h1, h2, a_cap)
    a_lo, a_hi = bp[:-1], bp[1:]
    mid = 0.5 * (a_lo + a_hi)
    f1 = np.floor(mid / h1).astype(np.int64)
    f2 = np.floor(mid / h2).astype(np.int64)

    # Boundary moments per cell: Bk = int_cell u^k e^{-beta * t_b(u)} dG(u)
    # for the four time boundaries t_b in {0, t1*, t2*, delta}, with
    # ti*(u) = delta * (u/h_i - f_i) the crossing time of floor i.
    e0_s, e1_s = law.weighted_moments(a_lo, a_hi, 0.0)
    g1 = beta * delta / h1
    g2 = beta * delta / h2
    e0_1, e1_1 = law.weighted_moments(a_lo, a_hi, g1, ref=f1 * h1)
    e0_2, e1_2 = law.weighted_moments(a_lo, a_hi, g2, ref=f2 * h2)
    edelta = math.exp(-beta * delta)
    e0_e, e1_e = edelta * e0_s, edelta * e1_s
    # T_b = int_cell t_b(u) e^{-beta t_b(u)} dG(u)
    t_s = np.zeros_like(e0_s)
    t_1 = (delta / h1) * (e1_1 - (f1 * h1) * e0_1)
    t_2 = (delta / h2) * (e1_2 - (f2 * h2) * e0_2)
    t_e = delta * e0_e

    first1 = (delta / h1) * mid - delta * f1 <= (delta / h2) * mid - delta * f2

    def pick(which_1, which_2):
        return np.where(first1, which_1, which_2)

    sub_bounds = [
        # (ta moments, tb moments, j1 offset, j2 offset) per sub-cell
        (
            (e0_s, e1_s, t_s),
            (pick(e0_1, e0_2), pick(e1_1, e1_2), pick(t_1, t_2)),
            -(f1 + 1),
            -(f2 + 1),
        ),
        (
            (pick(e0_1, e0_2), pick(e1_1, e1_2), pick(t_1, t_2)),
            (pick(e0_2, e0_1), pick(e1_2, e1_1), pick(t_2, t_1)),
            np.where(first1, -f1, -(f1 + 1)),
            np.where(first1, -(f2 + 1), -f2),
        ),
        (
            (pick(e0_2, e0_1), pick(e1_2, e1_1), pick(t_2, t_1)),
            (e0_e, e1_e, t_e),
            -f1,
            -f2,
        ),
    ]

    ctot = params.c1 + params.c2
    j1_parts, j2_parts, wv_parts, wp_parts = [], [], [], []
    for (ea0, ea1, ta), (eb0, eb1, tb), j1, j2 in sub_bounds:
        wv = (lam / beta) * (ea0 - eb0)
        int_alpha = (lam / beta) * (ea1 - eb1)
        int_t = lam * ((ta - tb) / beta + (ea0 - eb0) / beta**2)
        wp = ctot * int_t - int_alpha - (j1 * dx1 + j2 * dx2) * wv
        j1_parts.append(np.asarray(j1, dtype=np.int64))
        j2_parts.append(np.asarray(j2, dtype=np.int64))
        wv_parts.append(wv)
        wp_parts.append(wp)

    j1_all = np.concatenate(j1_parts)
    j2_all = np.concatenate(j2_parts)
    wv_all = np.concatenate(wv_parts)
    wp_all = np.concatenate(wp_parts)

    # drop cells that no grid node can reach and exact zeros
    live = (j1_all >= -grid.n_max) & (j2_all >= -grid.m_max)
    live &= (np.abs(wv_all) > 0) | (np.abs(wp_all) > 0)
    j1_all, j2_all = j1_all[live], j2_all[live]
    wv_all, wp_all = wv_all[live], wp_all[live]

    kw = np.zeros(grid.shape)
    kp = np.zeros(grid.shape)
    np.add.at(kw, (-j1_all, -j2_all), wv_all)
    np.add.at(kp, (-j1_all, -j2_all), wp_all)

    nz = np.nonzero((kw != 0) | (kp != 0))
    fshape = tuple(sfft.next_fast_len(2 * s - 1) for s in grid.shape)
    kernel = ClaimKernel(
        grid=grid,
        params=params,
        law=law,
        kw=kw,
        kp=kp,
        cell_i1=nz[0].astype(np.int64),
        cell_i2=nz[1].astype(np.int64),
        cell_wv=kw[nz],
        cell_wp=kp[nz],
        fshape=fshape,
    )
    kernel._fk = sfft.rfft2(kw, s=fshape, workers=_FFT_WORKERS)
    ones = np.ones(grid.shape)
    fp = sfft.rfft2(kp, s=fshape, workers=_FFT_WORKERS)
    full = sfft.irfft2(sfft.rfft2(ones, s=fshape, workers=_FFT_WORKERS) * fp, s=fshape, workers=_FFT_WORKERS)
    kernel.payout_field = full[: grid.shape[0], : grid.shape[1]].copy()
    return kernel


def claim_field(kernel: ClaimKernel, values: np.ndarray) -> np.ndarray:
    """Claim integral at every grid node for the given value table."""
    fv = sfft.rfft2(values, s=kernel.fshape, workers=_FFT_WORKERS)
    full = sfft.irfft2(fv * kernel._fk, s=kernel.fshape, workers=_FFT_WORKERS)
    n_pts, m_pts = kernel.grid.shape
    return full[:n_pts, :m_pts] + kernel.payout_field


def integral_I_delta(kernel: ClaimKernel, v: ValueField, n: int, m: int) -> float:
    """Claim integral at a single node by direct gather over kernel cells."""
    g = kernel.grid
    if not (0 <= n <= g.n_max and 0 <= m <= g.m_max):
        raise IndexError("grid point outside the truncated grid")
    keep = (kernel.cell_i1 <= n) & (kernel.cell_i2 <= m)
    if not np.any(keep):
        return 0.0
    vals = v.values[n - kernel.cell_i1[keep], m - kernel.cell_i2[keep]]
    return float(np.dot(kernel.cell_wv[keep], vals) + kernel.cell_wp[keep].sum())


def op_lump(v: ValueField, n: int, m: int, axis: int) -> float:
    """Lump-payout operator: one grid step of surplus paid as dividends."""
    if axis == 1:
        if n <= 0:
            raise ValueError("branch-1 lump needs n > 0")
        return v.values[n - 1, m] + v.grid.dx1
    if axis == 2:
        if m <= 0:
            raise ValueError("branch-2 lump needs m > 0")
        return v.values[n, m - 1] + v.grid.dx2
    raise ValueError("axis must be 1 or 2")


def op_T0(kernel: ClaimKernel, v: ValueField, n: int, m: int) -> float:
    """No-dividend continuation over one step (or until the first claim)."""
    return kernel.discount_step * v.lookup(n + 1, m + 1) + integral_I_delta(kernel, v, n, m)


def tie_epsilon(max_value: float) -> float:
    return EPS_TIE_REL * (1.0 + abs(max_value))


def op_T(kernel: ClaimKernel, v: ValueField, n: int, m: int, eps_tie: float = None):
    """Bellman operator: max of the applicable operators plus its argmax set.

    The action set contains every operator within the tie tolerance of the
    maximum.  ES is never a candidate.
    """
    cands = {Action.E0: op_T0(kernel, v, n, m)}
    if n > 0:
        cands[Action.E1] = op_lump(v, n, m, 1)
    if m > 0:
        cands[Action.E2] = op_lump(v, n, m, 2)
    best = max(cands.values())
    eps = tie_epsilon(best) if eps_tie is None else eps_tie
    return best, {a for a, val in cands.items() if val >= best - eps}


def continuous_L(
    v: ValueField, x1: float, x2: float, params: ModelParams, law: ClaimLaw
) -> float:
    """Generator-type residual of the continuous extension at (x1, x2).

    Diagnostic only: forward differences of step dx1/dx2 for the partials
    and exact per-cell quadrature of the claim integral along the ray
    (x1 - b1*u, x2 - b2*u).
    """
    g = v.grid
    if not (0 <= x1 <= g.x1_max - g.dx1 and 0 <= x2 <= g.x2_max - g.dx2):
        raise ValueError("point outside the domain interior")
    u0 = v.extend(x1, x2)
    d1 = (v.extend(x1 + g.dx1, x2) - u0) / g.dx1
    d2 = (v.extend(x1, x2 + g.dx2) - u0) / g.dx2
    integral = _ray_integral(v, x1, x2, params, law)
    return (
        params.c1 * d1
        + params.c2 * d2
        - (params.q + params.lam) * u0
        + params.lam * integral
    )


def _ray_integral(v: ValueField, x1: float, x2: float, params: ModelParams, law: ClaimLaw):
    """int_0^{x1/b1 ^ x2/b2} V_ext(x1 - b1 u, x2 - b2 u) dG(u), exactly per cell."""
    g = v.grid
    b1, b2 = params.b1, params.b2
    ub = min(x1 / b1, x2 / b2)
    if ub <= 0:
        return 0.0
    cuts = [np.array([0.0, ub])]
    for coord, b, dx in ((x1, b1, g.dx1), (x2, b2, g.dx2)):
        ks = np.arange(0, int(math.floor(coord / dx)) + 1)
        alphas = (coord - ks * dx) / b
        cuts.append(alphas[(alphas > 0) & (alphas < ub)])
    bp = np.unique(np.concatenate(cuts))
    keep = np.concatenate([[True], np.diff(bp) > 1e-13 * max(1.0, ub)])
    bp = bp[keep]
    total = 0.0
    for a_lo, a_hi in zip(bp[:-1], bp[1:]):
        amid = 0.5 * (a_lo + a_hi)
        k1 = int(math.floor((x1 - b1 * amid) / g.dx1))
        k2 = int(math.floor((x2 - b2 * amid) / g.dx2))
        p = v.values[k1, k2] + (x1 - k1 * g.dx1) + (x2 - k2 * g.dx2)
        total += integrate_affine(law, a_lo, a_hi, p, -1.0)
    return total
