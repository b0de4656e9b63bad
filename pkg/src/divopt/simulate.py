"""Monte Carlo evaluation of dividend strategies on the controlled process.

Paths are driven event by event: premium and reward streams between events
are discounted in closed form, so the only discretization in a simulated
path is the strategy's own grid.  Policy-table runs batch consecutive
no-pay steps (the uncontrolled drift between claims is linear) and collapse
the boundary-riding cycles (drift up, lump back) into geometric sums, which
keeps the per-path work proportional to the number of claims.

All draws use a counter-based Philox generator and are made in fixed-size
arrays per event round, so results are bit-identical for a given seed
regardless of how the rounds interleave across paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hjb2d import Action, ValueField
from .model import ClaimLaw, ModelParams, SurplusPoint, validate_params
from .solver1d import WbarSolution
from .solver2d import PolicyField

__all__ = [
    "PolicyTable",
    "TakeAndRun",
    "MReflection",
    "SimResult",
    "simulate_policy",
    "estimate_gap",
]

RNG_ALGORITHM = "philox4x64"


@dataclass(frozen=True)
class TakeAndRun:
    """Pay the whole surplus at once, then stream premiums until the first claim."""


@dataclass(frozen=True)
class PolicyTable:
    """Follow the grid policy of a converged solve, with the initial
    rounding payout down to the grid and floor-rounding payouts at claims."""

    policy: PolicyField
    values: ValueField


@dataclass(frozen=True)
class MReflection:
    """Project onto the proportional ray, then follow the 1D band strategy."""

    wbar: WbarSolution


@dataclass(frozen=True)
class SimResult:
    mean: float
    stderr: float
    n_paths: int
    horizon: float
    seed: int
    rng: str = RNG_ALGORITHM


def estimate_gap(sim: SimResult, solver_value: float) -> float:
    """(solver_value - sample mean) in standard-error units."""
    if sim.stderr <= 0:
        if abs(solver_value - sim.mean) > 1e-12 * (1 + abs(solver_value)):
            raise ValueError("zero standard error with a mean mismatch")
        return 0.0
    return (solver_value - sim.mean) / sim.stderr


def simulate_policy(
    params: ModelParams,
    law: ClaimLaw,
    strat,
    x0: SurplusPoint,
    n_paths: int,
    seed: int,
    horizon: float = None,
    trace_path=None,
) -> SimResult:
    """Sample mean and standard error of discounted dividends until ruin.

    The horizon is picked in a pilot run so the discarded tail is below a
    tenth of the reported standard error (the discounted value beyond T is
    at most e^{-qT} times the global upper bound).  trace_path, if given,
    receives a per-path CSV (path index, discounted total, final time).
    """
    params = validate_params(params)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if isinstance(strat, TakeAndRun):
        rng = np.random.Generator(np.random.Philox(key=seed))
        tau = rng.exponential(1.0 / params.lam, n_paths)
        ctot = params.c1 + params.c2
        vals = x0.x1 + x0.x2 + ctot * (1.0 - np.exp(-params.q * tau)) / params.q
        if trace_path:
            _write_trace(trace_path, vals, tau)
        return _wrap(vals, math.inf, seed)
    if isinstance(strat, PolicyTable):
        runner, ub = _policy_runner(params, law, strat, x0), _upper_bound(params, x0)
    elif isinstance(strat, MReflection):
        runner, ub = _reflection_runner(params, law, strat, x0), _upper_bound(params, x0)
    else:
        raise TypeError(f"unknown strategy {strat!r}")

    if horizon is None:
        pilot_n = min(max(n_paths // 50, 200), 2000, n_paths)
        pilot_T = math.log(1e4) / params.q
        pilot, _ = runner(pilot_n, seed + 1, pilot_T)
        target = 0.1 * max(np.std(pilot, ddof=1) / math.sqrt(n_paths), 1e-8)
        horizon = math.log(max(ub / target, 10.0)) / params.q
    vals, t_final = runner(n_paths, seed, horizon)
    if trace_path:
        _write_trace(trace_path, vals, t_final)
    return _wrap(vals, horizon, seed)


def _write_trace(path, vals, t_final):
    with open(path, "w") as fh:
        fh.write("path,value,t_final\n")
        for i, (v, t) in enumerate(zip(vals, t_final)):
            fh.write(f"{i},{v:.17g},{t:.17g}\n")


def _wrap(vals, horizon, seed):
    n = len(vals)
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return SimResult(
        mean=float(np.mean(vals)), stderr=stderr, n_paths=n, horizon=horizon, seed=seed
    )


def _upper_bound(params, x0):
    return x0.x1 + x0.x2 + (params.c1 + params.c2) / params.q


def _prepare_policy_tables(policy: PolicyField):
    """Preferred action per node (lumps first), lump-chain anchors with the
    dividends paid along the chain, and the length of the no-pay diagonal
    run from each node."""
    g = policy.grid
    acts = policy.actions
    pref = np.zeros(g.shape, dtype=np.int8)
    pref[(acts & Action.E1) > 0] = 1
    pref[((acts & Action.E2) > 0) & (pref == 0)] = 2
    # outer edges follow the unit-slope extension: treat residual no-pay
    # nodes there as lump nodes so drift never leaves the table
    edge = pref[g.n_max, :] == 0
    pref[g.n_max, edge] = 1
    edge = pref[:, g.m_max] == 0
    pref[1:, g.m_max][edge[1:]] = 1
    pref[0, g.m_max] = 2 if pref[0, g.m_max] == 0 else pref[0, g.m_max]

    n_pts, m_pts = g.shape
    anchor_n = np.empty(g.shape, dtype=np.int64)
    anchor_m = np.empty(g.shape, dtype=np.int64)
    cols = np.arange(n_pts)
    for m in range(m_pts):
        row = pref[:, m]
        an = np.where(row == 0, cols, 0)
        am = np.where(row == 0, m, 0)
        is2 = row == 2
        if m > 0 and np.any(is2):
            an[is2] = anchor_n[is2, m - 1]
            am[is2] = anchor_m[is2, m - 1]
        src = np.maximum.accumulate(np.where(row != 1, cols, -1))
        is1 = row == 1
        if np.any(is1):
            an[is1] = an[src[is1]]
            am[is1] = am[src[is1]]
        anchor_n[:, m] = an
        anchor_m[:, m] = am
    paid = (cols[:, None] - anchor_n) * g.dx1 + (np.arange(m_pts)[None, :] - anchor_m) * g.dx2

    exit_k = np.zeros(g.shape, dtype=np.int64)
    for m in range(m_pts - 2, -1, -1):
        up = np.zeros(n_pts, dtype=np.int64)
        up[:-1] = exit_k[1:, m + 1]
        exit_k[:, m] = np.where(pref[:, m] == 0, 1 + up, 0)
    return pref, anchor_n, anchor_m, paid, exit_k


def _policy_runner(params, law, strat: PolicyTable, x0: SurplusPoint):
    if not strat.policy.converged:
        raise ValueError("policy table must come from a converged solve")
    g = strat.policy.grid
    if x0.x1 > g.x1_max + 1e-9 or x0.x2 > g.x2_max + 1e-9:
        raise ValueError("initial surplus outside the solved grid")
    pref, anchor_n, anchor_m, paid, exit_k = _prepare_policy_tables(strat.policy)
    dx1, dx2, delta = g.dx1, g.dx2, g.delta
    c1, c2, b1, b2 = params.c1, params.c2, params.b1, params.b2
    q, lam = params.q, params.lam
    n0 = int(math.floor(x0.x1 / dx1 + 1e-12))
    m0 = int(math.floor(x0.x2 / dx2 + 1e-12))
    pay0 = (x0.x1 - n0 * dx1) + (x0.x2 - m0 * dx2)

    def run(n_paths, seed, horizon):
        rng = np.random.Generator(np.random.Philox(key=seed))
        n = np.full(n_paths, n0, dtype=np.int64)
        m = np.full(n_paths, m0, dtype=np.int64)
        t = np.zeros(n_paths)
        acc = np.full(n_paths, pay0)
        running = np.ones(n_paths, dtype=bool)
        while np.any(running):
            togo = rng.exponential(1.0 / lam, n_paths)
            claim = law.sample(rng, n_paths)
            ph = running.copy()
            last_n = np.full(n_paths, -1, dtype=np.int64)
            last_m = np.full(n_paths, -1, dtype=np.int64)
            while np.any(ph):
                idx = np.nonzero(ph)[0]
                ni, mi = n[idx], m[idx]
                # instant lump payouts down to the chain anchor
                lump = pref[ni, mi] != 0
                if np.any(lump):
                    li = idx[lump]
                    acc[li] += paid[n[li], m[li]] * np.exp(-q * t[li])
                    n[li], m[li] = anchor_n[n[li], m[li]], anchor_m[n[li], m[li]]
                    ni, mi = n[idx], m[idx]
                k = exit_k[ni, mi]
                kd = k * delta
                # boundary-riding cycle: batch full periods until the claim
                cyc = (ni == last_n[idx]) & (mi == last_m[idx]) & (kd > 0)
                if np.any(cyc):
                    ci = idx[cyc]
                    kdc = kd[cyc]
                    full = np.floor(togo[ci] / kdc).astype(np.int64)
                    cap = np.floor(np.maximum(horizon - t[ci], 0.0) / kdc).astype(np.int64)
                    reps = np.minimum(full, cap)
                    pos = np.nonzero(reps > 0)[0]
                    if pos.size:
                        pi = ci[pos]
                        kdp = kdc[pos]
                        en = n[pi] + k[cyc][pos]
                        em = m[pi] + k[cyc][pos]
                        pay = paid[en, em]
                        x = np.exp(-q * kdp)
                        acc[pi] += pay * np.exp(-q * t[pi]) * x * (1 - x ** reps[pos]) / (1 - x)
                        t[pi] += reps[pos] * kdp
                        togo[pi] -= reps[pos] * kdp
                    over = ci[(full > cap)]
                    if over.size:
                        running[over] = False
                        ph[over] = False
                    idx = np.nonzero(ph)[0]
                    if idx.size == 0:
                        break
                    ni, mi = n[idx], m[idx]
                    k = exit_k[ni, mi]
                    kd = k * delta
                last_n[idx], last_m[idx] = ni, mi
                claims_now = togo[idx] <= kd
                ci = idx[claims_now]
                if ci.size:
                    s = togo[ci]
                    y1 = n[ci] * dx1 + c1 * s - b1 * claim[ci]
                    y2 = m[ci] * dx2 + c2 * s - b2 * claim[ci]
                    t[ci] += s
                    ruined = (y1 < 0) | (y2 < 0)
                    running[ci[ruined]] = False
                    ok = ci[~ruined]
                    if ok.size:
                        k1 = np.floor(y1[~ruined] / dx1 + 1e-12).astype(np.int64)
                        k2 = np.floor(y2[~ruined] / dx2 + 1e-12).astype(np.int64)
                        rem = (y1[~ruined] - k1 * dx1) + (y2[~ruined] - k2 * dx2)
                        acc[ok] += rem * np.exp(-q * t[ok])
                        n[ok], m[ok] = k1, k2
                        running[ok[t[ok] >= horizon]] = False
                    ph[ci] = False
                di = idx[~claims_now]
                if di.size:
                    t[di] += kd[~claims_now]
                    togo[di] -= kd[~claims_now]
                    n[di] += k[~claims_now]
                    m[di] += k[~claims_now]
                    hit = di[t[di] >= horizon]
                    running[hit] = False
                    ph[hit] = False
        return acc, t

    return run


def _reflection_runner(params, law, strat: MReflection, x0: SurplusPoint):
    wbar = strat.wbar
    band = wbar.band
    c1, c2, b1, b2 = params.c1, params.c2, params.b1, params.b2
    q, lam = params.q, params.lam
    ctot = c1 + c2
    kflow = c1 - (b1 / b2) * c2
    rho = wbar.rho
    ivl_lo = np.array([iv[0] for iv in band.intervals])
    ivl_lab = np.array([iv[2] for iv in band.intervals])
    a_pts = np.array(band.a_points)
    if a_pts.size == 0:
        raise ValueError("band structure has no premium-paying points")

    ratio21 = params.b2 / params.b1
    if ratio21 * x0.x1 >= x0.x2:
        z0 = x0.x2
        pay0 = x0.x1 - (params.b1 / params.b2) * x0.x2
    else:
        z0 = ratio21 * x0.x1
        pay0 = x0.x2 - z0
    if z0 > wbar.x_max:
        raise ValueError("initial projection outside the solved band range")

    def labels_of(z):
        i = np.searchsorted(ivl_lo, z, side="right") - 1
        return ivl_lab[np.clip(i, 0, len(ivl_lab) - 1)]

    def run(n_paths, seed, horizon):
        rng = np.random.Generator(np.random.Philox(key=seed))
        z = np.full(n_paths, z0)
        t = np.zeros(n_paths)
        acc = np.full(n_paths, pay0)
        running = np.ones(n_paths, dtype=bool)
        snap = 1e-9 * (1.0 + wbar.x_max)
        while np.any(running):
            togo = rng.exponential(1.0 / lam, n_paths)
            claim = law.sample(rng, n_paths)
            ph = running.copy()
            while np.any(ph):
                idx = np.nonzero(ph)[0]
                zi = z[idx]
                at_a = np.zeros(len(idx), dtype=bool)
                if a_pts.size:
                    nearest = a_pts[np.clip(np.searchsorted(a_pts, zi), 0, a_pts.size - 1)]
                    below = a_pts[np.clip(np.searchsorted(a_pts, zi) - 1, 0, a_pts.size - 1)]
                    at_a = (np.abs(zi - nearest) <= snap) | (np.abs(zi - below) <= snap)
                lab = labels_of(zi)
                # lump region: drop to the nearest premium point below
                isb = (lab == "B") & ~at_a
                if np.any(isb):
                    bi = idx[isb]
                    aidx = np.clip(np.searchsorted(a_pts, z[bi] + snap) - 1, 0, a_pts.size - 1)
                    target = a_pts[aidx]
                    acc[bi] += rho * (z[bi] - target) * np.exp(-q * t[bi])
                    z[bi] = target
                    at_a[isb] = True
                # premium point: stream both premiums until the claim
                isa = at_a
                if np.any(isa):
                    ai = idx[isa]
                    s = togo[ai]
                    acc[ai] += ctot * np.exp(-q * t[ai]) * (1 - np.exp(-q * s)) / q
                    t[ai] += s
                    _claim_1d(ai, z, t, acc, running, claim, b2, q, horizon, rho)
                    ph[ai] = False
                # no-pay region: drift up at c2, branch 1 streaming the excess
                isc = (lab == "C") & ~at_a
                if np.any(isc):
                    di = idx[isc]
                    nxt = np.searchsorted(a_pts, z[di] + snap)
                    a_up = a_pts[np.clip(nxt, 0, a_pts.size - 1)]
                    a_up = np.where(nxt >= a_pts.size, np.inf, a_up)
                    reach = (a_up - z[di]) / c2
                    s = np.minimum(togo[di], reach)
                    if kflow > 0:
                        acc[di] += kflow * np.exp(-q * t[di]) * (1 - np.exp(-q * s)) / q
                    t[di] += s
                    z[di] += c2 * s
                    claimers = togo[di] <= reach
                    ci = di[claimers]
                    if ci.size:
                        _claim_1d(ci, z, t, acc, running, claim, b2, q, horizon, rho)
                        ph[ci] = False
                    togo[di[~claimers]] -= reach[~claimers]
                hit = idx[(t[idx] >= horizon) & ph[idx]]
                running[hit] = False
                ph[hit] = False
        return acc, t

    return run


def _claim_1d(ids, z, t, acc, running, claim, b2, q, horizon, rho):
    post = z[ids] - b2 * claim[ids]
    ruined = post < 0
    running[ids[ruined]] = False
    ok = ids[~ruined]
    z[ok] = post[~ruined]
    running[ok[t[ok] >= horizon]] = False
