"""One-dimensional dividend problems with reward rate and payout multiplier.

Covers the on-ray auxiliary problem (premium c2, claims b2*U, reward for
staying alive, dividends amplified by both branches paying together), the
merged-company problem (pooled premiums, full claims), and the generic
constant-reward case.  The scheme mirrors the 2D one: grid step c*delta,
lump/no-pay/stop actions, exact claim-cell kernel, monotone sweeps from
zero, and band extraction from the argmax sets.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import ClaimLaw, ModelParams, integrate_affine, validate_params

__all__ = [
    "OneDimProblem",
    "BandStructure",
    "WbarSolution",
    "TruncationError",
    "NonConvergence1D",
    "make_auxiliary_problem",
    "solve_1d",
    "ray_integral",
    "tilde_V_eval",
    "merger_compare",
]

EPS_TIE_REL = 1e-9


class TruncationError(RuntimeError):
    """The band did not close with a lump region before the truncation."""


class NonConvergence1D(RuntimeError):
    def __init__(self, sweeps, last_increment):
        super().__init__(
            f"1D iteration hit the sweep cap ({sweeps}) with sup-increment "
            f"{last_increment:.3e}"
        )
        self.last_increment = last_increment


@dataclass(frozen=True)
class OneDimProblem:
    """Surplus drifts at rate c, claims enter as b*U, dividends pay rho per
    unit of surplus released, and a reward accrues at rate rho*kappa until
    ruin."""

    c: float
    b: float
    law: ClaimLaw
    lam: float
    q: float
    kappa: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        if self.c <= 0 or self.b <= 0:
            raise ValueError("premium c and claim scale b must be positive")
        if self.rho < 1.0:
            raise ValueError("payout multiplier rho must be >= 1")
        if self.kappa < 0.0:
            raise ValueError("reward rate kappa must be >= 0")
        if self.lam <= 0 or self.q <= 0:
            raise ValueError("lam and q must be positive")


@dataclass
class BandStructure:
    """Sorted breakpoints splitting [0, x_max] into labeled intervals."""

    breakpoints: list
    intervals: list  # (lo, hi, label) with label in {"A", "B", "C"}
    a_points: list

    def label_at(self, x):
        for lo, hi, lab in self.intervals:
            if lo <= x <= hi:
                return lab
        raise ValueError("x outside the solved range")


@dataclass
class WbarSolution:
    problem: OneDimProblem
    delta: float
    dx: float
    values: np.ndarray
    band: BandStructure
    iterations: int
    final_sup_increment: float
    residual_max: float
    tol_effective: float
    min_increment: float
    wall_time: float

    @property
    def rho(self):
        return self.problem.rho

    @property
    def x_max(self):
        return (len(self.values) - 1) * self.dx

    def extend(self, x: float) -> float:
        """Floor-plus-remainder extension; the remainder pays rho per unit."""
        if x < 0:
            raise ValueError("surplus must be nonnegative")
        n = int(math.floor(x / self.dx + 1e-12))
        n_max = len(self.values) - 1
        base = self.values[min(n, n_max)] + max(n - n_max, 0) * self.rho * self.dx
        return base + self.rho * (x - n * self.dx)


def make_auxiliary_problem(
    params: ModelParams, law: ClaimLaw, kind: str, m_cost: float = 0.0
) -> OneDimProblem:
    """Build the on-ray problem ('wbar') or the merged-company one ('merger').

    For a merger the caller shifts the initial surplus by x1 + x2 - m_cost.
    """
    params = validate_params(params)
    if kind == "wbar":
        ratio = params.b1 / params.b2
        kappa = (params.c1 - ratio * params.c2) / (1.0 + ratio)
        return OneDimProblem(
            c=params.c2, b=params.b2, law=law, lam=params.lam, q=params.q,
            kappa=kappa, rho=1.0 + ratio,
        )
    if kind == "merger":
        if m_cost < 0:
            raise ValueError("merger cost must be >= 0")
        return OneDimProblem(
            c=params.c1 + params.c2, b=1.0, law=law, lam=params.lam, q=params.q,
            kappa=0.0, rho=1.0,
        )
    raise ValueError("kind must be 'wbar' or 'merger'")


def _kernel_1d(prob: OneDimProblem, delta: float, n_max: int):
    """Exact claim cells: offsets j <= 0, value weights and rho-scaled
    claim-instant payouts, same decomposition as the 2D kernel on one axis."""
    beta = prob.lam + prob.q
    dx = prob.c * delta
    h = dx / prob.b
    a_cap = (n_max + 1) * h
    k = int(math.floor(a_cap / h)) + 1
    bp = np.unique(np.concatenate([[0.0], h * np.arange(1, k + 1), [a_cap]]))
    bp = bp[bp <= a_cap * (1 + 1e-12)]
    bp[-1] = min(bp[-1], a_cap)
    keep = np.concatenate([[True], np.diff(bp) > 1e-9 * h])
    bp = bp[keep]
    a_lo, a_hi = bp[:-1], bp[1:]
    mid = 0.5 * (a_lo + a_hi)
    f = np.floor(mid / h).astype(np.int64)

    law = prob.law
    e0_s, e1_s = law.weighted_moments(a_lo, a_hi, 0.0)
    g = beta * delta / h
    e0_t, e1_t = law.weighted_moments(a_lo, a_hi, g, ref=f * h)
    edelta = math.exp(-beta * delta)
    e0_e, e1_e = edelta * e0_s, edelta * e1_s
    t_s = np.zeros_like(e0_s)
    t_t = (delta / h) * (e1_t - (f * h) * e0_t)
    t_e = delta * e0_e

    lam = prob.lam
    j_parts, wv_parts, wp_parts = [], [], []
    for (ea0, ea1, ta), (eb0, eb1, tb), j in (
        ((e0_s, e1_s, t_s), (e0_t, e1_t, t_t), -(f + 1)),
        ((e0_t, e1_t, t_t), (e0_e, e1_e, t_e), -f),
    ):
        wv = (lam / beta) * (ea0 - eb0)
        int_alpha = (lam / beta) * (ea1 - eb1)
        int_t = lam * ((ta - tb) / beta + (ea0 - eb0) / beta**2)
        wp = prob.rho * (prob.c * int_t - prob.b * int_alpha - j * dx * wv)
        j_parts.append(np.asarray(j))
        wv_parts.append(wv)
        wp_parts.append(wp)

    j_all = np.concatenate(j_parts)
    wv_all = np.concatenate(wv_parts)
    wp_all = np.concatenate(wp_parts)
    live = j_all >= -n_max
    j_all, wv_all, wp_all = j_all[live], wv_all[live], wp_all[live]
    kw = np.zeros(n_max + 1)
    kp = np.zeros(n_max + 1)
    np.add.at(kw, -j_all, wv_all)
    np.add.at(kp, -j_all, wp_all)
    return kw, kp


def _claim_field_1d(kw, kp, w):
    n = len(w)
    conv_v = np.convolve(w, kw)[:n]
    conv_p = np.convolve(np.ones(n), kp)[:n]
    return conv_v + conv_p


def solve_1d(
    prob: OneDimProblem,
    delta: float,
    x_max: float,
    tol: float = 1e-9,
    iter_cap: int = 200_000,
) -> WbarSolution:
    """Monotone iteration to the 1D fixed point plus band extraction.

    Raises TruncationError when the final interval before x_max is not a
    lump region (the truncation cut through the band).
    """
    if delta <= 0 or x_max <= 0 or tol <= 0:
        raise ValueError("delta, x_max and tol must be positive")
    dx = prob.c * delta
    n_max = int(round(x_max / dx))
    if n_max < 4:
        raise ValueError("truncation too coarse: fewer than 5 grid nodes")
    beta = prob.lam + prob.q
    disc = math.exp(-beta * delta)
    r0 = prob.rho * prob.kappa * (1.0 - disc) / beta
    rho_dx = prob.rho * dx
    kw, kp = _kernel_1d(prob, delta, n_max)

    t_start = time.perf_counter()
    w = np.zeros(n_max + 1)
    offs = np.arange(n_max + 1) * rho_dx
    sup_inc = math.inf
    min_inc = math.inf
    tol_eff = tol
    sweeps = 0
    while sweeps < iter_cap:
        cf = _claim_field_1d(kw, kp, w) + r0
        nxt = w.copy()
        for n in range(n_max, -1, -1):
            upv = nxt[n + 1] if n < n_max else nxt[n_max] + rho_dx
            cand = disc * upv + cf[n]
            if cand > nxt[n]:
                nxt[n] = cand
        nxt = np.maximum(nxt, np.maximum.accumulate(nxt - offs) + offs)
        inc = nxt - w
        sup_inc = float(inc.max())
        min_inc = min(min_inc, float(inc.min()))
        w = nxt
        sweeps += 1
        tol_eff = tol * (1.0 + float(w.max()))
        if sup_inc < tol_eff:
            break
    else:
        raise NonConvergence1D(sweeps, sup_inc)

    t0f = _t0_field(w, kw, kp, r0, disc, rho_dx)
    t1f = np.full_like(w, -np.inf)
    t1f[1:] = w[:-1] + rho_dx
    best = np.maximum(t0f, t1f)
    eps = EPS_TIE_REL * (1.0 + float(best.max()))
    is_b = t1f >= best - eps
    is_c = t0f >= best - eps
    band = _extract_band(is_b, is_c, dx)
    resid = abs(float((best - w)[:-1].max()))

    return WbarSolution(
        problem=prob,
        delta=delta,
        dx=dx,
        values=w,
        band=band,
        iterations=sweeps,
        final_sup_increment=sup_inc,
        residual_max=resid,
        tol_effective=tol_eff,
        min_increment=min_inc,
        wall_time=time.perf_counter() - t_start,
    )


def _t0_field(w, kw, kp, r0, disc, rho_dx):
    up = np.empty_like(w)
    up[:-1] = w[1:]
    up[-1] = w[-1] + rho_dx
    return disc * up + _claim_field_1d(kw, kp, w) + r0


def _extract_band(is_b, is_c, dx):
    n_pts = len(is_b)
    labels = np.where(is_b & is_c, "A", np.where(is_b, "B", "C"))
    intervals = []
    breakpoints = []
    start = 0
    for i in range(1, n_pts + 1):
        if i == n_pts or labels[i] != labels[start]:
            lo = 0.0 if start == 0 else (start - 0.5) * dx
            hi = (n_pts - 1) * dx if i == n_pts else (i - 0.5) * dx
            intervals.append((lo, hi, str(labels[start])))
            if i < n_pts:
                breakpoints.append(hi)
            start = i
    if intervals[-1][2] != "B":
        raise TruncationError(
            "no-pay region extends to the truncation; increase x_max"
        )
    a_points = [0.5 * (lo + hi) for lo, hi, lab in intervals if lab == "A"]
    # a lump region anchored at the origin pays premiums out at 0
    if intervals[0][2] == "B" or (len(intervals) > 1 and intervals[0][2] == "A"):
        if 0.0 not in a_points:
            a_points.insert(0, 0.0)
    # each C-to-B transition accumulates at the barrier
    for bp_ in breakpoints:
        for lo, hi, lab in intervals:
            if lab == "C" and abs(hi - bp_) < 1e-12 and bp_ not in a_points:
                a_points.append(bp_)
    return BandStructure(
        breakpoints=breakpoints, intervals=intervals, a_points=sorted(set(a_points))
    )


def ray_integral(wbar: WbarSolution, z0: float, b: float, ub: float, law: ClaimLaw):
    """int_0^ub Wext(z0 - b*u) dG(u), exact per grid cell of the 1D solution."""
    if ub <= 0:
        return 0.0
    dx = wbar.dx
    ks = np.arange(0, int(math.floor(z0 / dx)) + 1)
    alphas = (z0 - ks * dx) / b
    cuts = np.concatenate([[0.0, ub], alphas[(alphas > 0) & (alphas < ub)]])
    bp = np.unique(cuts)
    total = 0.0
    rho = wbar.rho
    for a_lo, a_hi in zip(bp[:-1], bp[1:]):
        amid = 0.5 * (a_lo + a_hi)
        k = int(math.floor((z0 - b * amid) / dx))
        p = wbar.values[k] + rho * (z0 - k * dx)
        total += integrate_affine(law, a_lo, a_hi, p, -rho * b)
    return total


def tilde_V_eval(wbar: WbarSolution, params: ModelParams, x1: float, x2: float) -> float:
    """Reflection value: project to the proportional ray, then the 1D value.

    Below or on the ray, branch 1 pays the horizontal distance; above it,
    branch 2 pays the vertical distance.  The projection must lie within
    the solved 1D range.
    """
    if x1 < 0 or x2 < 0:
        raise ValueError("surplus coordinates must be nonnegative")
    ratio21 = params.b2 / params.b1
    if ratio21 * x1 >= x2:  # D1 or on the ray
        proj = x2
        offset = x1 - (params.b1 / params.b2) * x2
    else:
        proj = ratio21 * x1
        offset = x2 - ratio21 * x1
    if proj > wbar.x_max + 1e-9:
        raise ValueError("projection outside the solved 1D range")
    return offset + wbar.extend(proj)


def merger_compare(
    params: ModelParams,
    law: ClaimLaw,
    m_cost: float,
    samples,
    v2d,
    merger: WbarSolution = None,
    delta: float = None,
    x_max: float = None,
):
    """Tabulate merged-company vs two-branch values at the given surpluses.

    Returns rows (x1, x2, v_merger - (x1+x2), v_2d - (x1+x2)); the merger
    entry is None when x1 + x2 < m_cost.  Values are the floor extensions
    of the respective solves.
    """
    if merger is None:
        prob = make_auxiliary_problem(params, law, "merger", m_cost)
        if delta is None:
            delta = v2d.grid.delta / 4.0
        if x_max is None:
            x_max = v2d.grid.x1_max + v2d.grid.x2_max + 1.0
        merger = solve_1d(prob, delta, x_max)
    rows = []
    for x1, x2 in samples:
        s = x1 + x2 - m_cost
        base = x1 + x2
        vm = merger.extend(s) - base if s >= 0 else None
        rows.append((x1, x2, vm, v2d.extend(x1, x2) - base))
    return rows, merger
