"""Monotone value iteration to the grid fixed point, policy and region maps.

The iteration starts from the all-zero table (the value of never paying
again) and applies monotone sweeps; every iterate is the value of an
admissible grid strategy, so the sequence increases pointwise to the
smallest fixed point.  The default in-place sweep freezes the claim field
once per sweep (one FFT correlation), then resolves the diagonal
continuation row by row downward and finishes with lump-closure scans in
both axes; each partial update is a restriction of the Bellman operator
evaluated on values between the previous iterate and the fixed point,
which keeps the squeeze v_jacobi <= v_inplace <= v_delta and hence the
limit intact.  A strict Jacobi mode is kept for oracle comparison.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import solver1d
from .hjb2d import (
    Action,
    ClaimKernel,
    ValueField,
    build_claim_kernel,
    claim_field,
    shift_up_diag,
    tie_epsilon,
)
from .model import ClaimLaw, GridSpec, ModelParams, region_of, validate_params

__all__ = [
    "PolicyField",
    "RegionMap",
    "SolveReport",
    "NonConvergenceError",
    "solve",
    "extend_value",
    "residual_check",
    "extract_regions",
    "check_D1_identity",
    "check_tilde_suboptimality",
    "write_value_csv",
    "write_policy_csv",
    "write_summary_json",
    "write_region_data",
    "LABEL_NAMES",
]

LABEL_C, LABEL_B1, LABEL_B2, LABEL_B0, LABEL_A1, LABEL_A2, LABEL_A0 = range(7)
LABEL_NAMES = {
    LABEL_C: "C",
    LABEL_B1: "B1",
    LABEL_B2: "B2",
    LABEL_B0: "B0",
    LABEL_A1: "A1",
    LABEL_A2: "A2",
    LABEL_A0: "A0",
}


class NonConvergenceError(RuntimeError):
    def __init__(self, sweeps, last_increment):
        super().__init__(
            f"value iteration hit the sweep cap ({sweeps}) with sup-increment "
            f"{last_increment:.3e}"
        )
        self.sweeps = sweeps
        self.last_increment = last_increment


@dataclass
class PolicyField:
    """Per-node argmax sets, packed as an Action bitmask table."""

    grid: GridSpec
    actions: np.ndarray
    eps_tie: float
    converged: bool = True

    def __post_init__(self):
        a = self.actions
        if a.shape != self.grid.shape:
            raise ValueError("actions shape does not match grid")
        if np.any(a == 0):
            raise ValueError("every grid point needs a nonempty argmax set")
        if np.any(a[0, :] & Action.E1):
            raise ValueError("E1 cannot be optimal at n = 0")
        if np.any(a[:, 0] & Action.E2):
            raise ValueError("E2 cannot be optimal at m = 0")

    def action_set(self, n, m):
        return {act for act in (Action.E0, Action.E1, Action.E2) if self.actions[n, m] & act}


@dataclass
class SolveReport:
    iterations: int
    final_sup_increment: float
    residual_max: float
    wall_time: float
    tol_effective: float
    min_increment: float
    converged: bool
    mode: str


@dataclass
class RegionMap:
    """Region labels derived from the argmax sets, plus derived geometry."""

    grid: GridSpec
    labels: np.ndarray
    a0_points: list
    component_counts: dict
    lower_boundary: list = field(default_factory=list)
    upper_boundary: list = field(default_factory=list)
    slope_runs: list = field(default_factory=list)

    def label_name(self, n, m):
        return LABEL_NAMES[int(self.labels[n, m])]


def _t1_closure(row, offs):
    return np.maximum(row, np.maximum.accumulate(row - offs) + offs)


def _sweep_inplace(w, cf, grid, disc):
    n_pts, m_pts = w.shape
    dx1, dx2 = grid.dx1, grid.dx2
    offs = np.arange(n_pts) * dx1
    cont = np.empty(n_pts)
    for m in range(m_pts - 1, -1, -1):
        up = w[:, m] + dx2 if m == m_pts - 1 else w[:, m + 1]
        cont[:-1] = up[1:]
        cont[-1] = up[-1] + dx1
        row = np.maximum(w[:, m], disc * cont + cf[:, m])
        w[:, m] = _t1_closure(row, offs)
    for m in range(1, m_pts):
        row = np.maximum(w[:, m], w[:, m - 1] + dx2)
        w[:, m] = _t1_closure(row, offs)
    return w


def _operator_fields(kernel, values):
    """T0, T1, T2 over the whole grid (lumps are -inf where inapplicable)."""
    grid = kernel.grid
    t0 = kernel.discount_step * shift_up_diag(values, grid) + claim_field(kernel, values)
    t1 = np.full_like(values, -np.inf)
    t1[1:, :] = values[:-1, :] + grid.dx1
    t2 = np.full_like(values, -np.inf)
    t2[:, 1:] = values[:, :-1] + grid.dx2
    return t0, t1, t2


def _sweep_jacobi(w, cf, kernel):
    grid = kernel.grid
    t0 = kernel.discount_step * shift_up_diag(w, grid) + cf
    t1 = np.full_like(w, -np.inf)
    t1[1:, :] = w[:-1, :] + grid.dx1
    t2 = np.full_like(w, -np.inf)
    t2[:, 1:] = w[:, :-1] + grid.dx2
    return np.maximum(w, np.maximum(t0, np.maximum(t1, t2)))


def solve(
    params: ModelParams,
    law: ClaimLaw,
    grid: GridSpec,
    tol: float = 1e-8,
    iter_cap: int = 200_000,
    mode: str = "inplace",
    kernel: ClaimKernel = None,
    eps_tie: float = None,
):
    """Iterate to the grid fixed point and extract the policy.

    tol is relative: the loop stops when the sup increment of a sweep drops
    below tol * (1 + sup v); eps_tie overrides the default argmax tie
    tolerance of 1e-9 * (1 + |max|).  Returns (ValueField, PolicyField,
    SolveReport).
    """
    params = validate_params(params)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if mode not in ("inplace", "jacobi"):
        raise ValueError("mode must be 'inplace' or 'jacobi'")
    if kernel is None:
        kernel = build_claim_kernel(params, law, grid)
    t_start = time.perf_counter()
    v = np.zeros(grid.shape)
    sup_inc = math.inf
    min_inc = math.inf
    tol_eff = tol
    sweeps = 0
    while sweeps < iter_cap:
        cf = claim_field(kernel, v)
        if mode == "inplace":
            w = _sweep_inplace(v.copy(), cf, grid, kernel.discount_step)
        else:
            w = _sweep_jacobi(v, cf, kernel)
        inc = w - v
        sup_inc = float(inc.max())
        min_inc = min(min_inc, float(inc.min()))
        v = w
        sweeps += 1
        tol_eff = tol * (1.0 + float(v.max()))
        if sup_inc < tol_eff:
            break
    else:
        raise NonConvergenceError(sweeps, sup_inc)

    vf = ValueField(grid, v)
    t0, t1, t2 = _operator_fields(kernel, v)
    best = np.maximum(t0, np.maximum(t1, t2))
    eps = tie_epsilon(float(best.max())) if eps_tie is None else eps_tie
    mask = (
        (t0 >= best - eps) * int(Action.E0)
        + (t1 >= best - eps) * int(Action.E1)
        + (t2 >= best - eps) * int(Action.E2)
    ).astype(np.uint8)
    policy = PolicyField(grid=grid, actions=mask, eps_tie=eps, converged=True)

    interior = np.maximum(t0 - v, np.maximum(t1 - v, t2 - v))[: grid.n_max, : grid.m_max]
    report = SolveReport(
        iterations=sweeps,
        final_sup_increment=sup_inc,
        residual_max=abs(float(interior.max())),
        wall_time=time.perf_counter() - t_start,
        tol_effective=tol_eff,
        min_increment=min_inc,
        converged=True,
        mode=mode,
    )
    return vf, policy, report


def extend_value(v: ValueField, x1: float, x2: float) -> float:
    """Continuous extension of the grid solution (floor plus remainders)."""
    return v.extend(x1, x2)


def residual_check(kernel: ClaimKernel, v: ValueField) -> float:
    """|sup over interior nodes of max(T0 - v, T1 - v, T2 - v)|.

    Zero at any fixed point (lump ties included); for an accepted solve the
    value must stay below 10x the stopping tolerance.
    """
    t0, t1, t2 = _operator_fields(kernel, v.values)
    resid = np.maximum(t0 - v.values, np.maximum(t1 - v.values, t2 - v.values))
    interior = resid[: v.grid.n_max, : v.grid.m_max]
    return abs(float(interior.max()))


def _mask_label(actions):
    has0 = (actions & Action.E0) > 0
    has1 = (actions & Action.E1) > 0
    has2 = (actions & Action.E2) > 0
    labels = np.full(actions.shape, LABEL_C, dtype=np.int8)
    labels[has1 & ~has2 & ~has0] = LABEL_B1
    labels[has2 & ~has1 & ~has0] = LABEL_B2
    labels[has1 & has2 & ~has0] = LABEL_B0
    labels[has0 & has1 & ~has2] = LABEL_A1
    labels[has0 & has2 & ~has1] = LABEL_A2
    labels[has0 & has1 & has2] = LABEL_A0
    return labels


_BOX = np.ones((3, 3), dtype=bool)


def _component_count(mask):
    """Connected components after removing structures thinner than one cell.

    Region boundaries sit exactly where two operators tie, so single-cell
    filaments of either label flip with the tie noise; a morphological
    opening with a 2x2 square drops them before counting.
    """
    opened = ndimage.binary_opening(mask, structure=np.ones((2, 2), dtype=bool))
    _, k = ndimage.label(opened, structure=_BOX)
    return int(k)


def _lens_tips(labels, grid):
    """Corner point of each no-pay component where both lump regions meet.

    The no-pay region ends, going up-right, at the point toward which the
    boundary-riding strategy drives the surplus; at grid level it is the
    far tip of a C component whose neighborhood contains both single-branch
    lump labels.  Returns the centroid of the cells in the last few columns
    of each qualifying component.
    """
    pts = []
    comp, k = ndimage.label(labels == LABEL_C, structure=_BOX)
    for idx in range(1, k + 1):
        ns, ms = np.nonzero(comp == idx)
        if ns.size < 3:
            continue
        n_hi = ns.max()
        sel = ns >= n_hi - 2
        tip_n, tip_m = ns[sel], ms[sel]
        lo_n = max(0, tip_n.min() - 3)
        hi_n = min(labels.shape[0], tip_n.max() + 4)
        lo_m = max(0, tip_m.min() - 3)
        hi_m = min(labels.shape[1], tip_m.max() + 4)
        patch = labels[lo_n:hi_n, lo_m:hi_m]
        has_b1 = np.any((patch == LABEL_B1) | (patch == LABEL_A1) | (patch == LABEL_A0))
        has_b2 = np.any((patch == LABEL_B2) | (patch == LABEL_A2) | (patch == LABEL_A0))
        if has_b1 and has_b2:
            pts.append((float(tip_n.mean() * grid.dx1), float(tip_m.mean() * grid.dx2)))
    return pts


def extract_regions(policy: PolicyField, v: ValueField) -> RegionMap:
    """Label each node, count label components, and locate corner points.

    Labels follow the argmax sets directly.  The isolated premium-paying
    points of the continuous problem (no-pay and both lump directions
    optimal at once) are recovered geometrically: the up-right tip of each
    no-pay component flanked by both lump regions, plus the origin when a
    both-pay region starts there.  Exact three-way argmax ties, when
    present, are reported as their own cluster centroids.
    """
    grid = policy.grid
    labels = _mask_label(policy.actions)

    counts = {name: _component_count(labels == code) for code, name in LABEL_NAMES.items()}

    a0_points = _lens_tips(labels, grid)
    tie_lab, tie_k = ndimage.label(labels == LABEL_A0, structure=_BOX)
    for idx in range(1, tie_k + 1):
        ns, ms = np.nonzero(tie_lab == idx)
        cand = (float(ns.mean() * grid.dx1), float(ms.mean() * grid.dx2))
        if not any(
            abs(cand[0] - p[0]) <= 4 * grid.dx1 and abs(cand[1] - p[1]) <= 4 * grid.dx2
            for p in a0_points
        ):
            a0_points.append(cand)

    r = 3
    origin_patch = labels[: r + 1, : r + 1]
    if np.any((origin_patch == LABEL_B0) | (origin_patch == LABEL_A0)):
        if not any(abs(p[0]) < 3 * grid.dx1 and abs(p[1]) < 3 * grid.dx2 for p in a0_points):
            a0_points.insert(0, (0.0, 0.0))
    a0_points.sort()

    lower, upper, runs = _c_boundaries(labels, grid)
    return RegionMap(
        grid=grid,
        labels=labels,
        a0_points=a0_points,
        component_counts=counts,
        lower_boundary=lower,
        upper_boundary=upper,
        slope_runs=runs,
    )


def _c_boundaries(labels, grid):
    """Lower/upper boundary polylines of the largest no-pay component and
    the maximal straight runs of the lower boundary with one diagonal step
    per column (slope dx2/dx1 = c2/c1 in surplus units)."""
    comp, k = ndimage.label(labels == LABEL_C, structure=_BOX)
    if k == 0:
        return [], [], []
    sizes = ndimage.sum_labels(np.ones_like(comp), comp, index=np.arange(1, k + 1))
    main = int(np.argmax(sizes)) + 1
    mask = comp == main
    cols = np.nonzero(mask.any(axis=1))[0]
    lower, upper = [], []
    for n in cols:
        ms = np.nonzero(mask[n])[0]
        lower.append((n * grid.dx1, ms.min() * grid.dx2))
        upper.append((n * grid.dx1, ms.max() * grid.dx2))
    runs = []
    if len(cols) > 1:
        m_lo = np.array([p[1] for p in lower]) / grid.dx2
        steps = np.diff(m_lo).round().astype(int)
        contig = np.diff(cols) == 1
        i = 0
        while i < len(steps):
            if steps[i] == 1 and contig[i]:
                j = i
                while j < len(steps) and steps[j] == 1 and contig[j]:
                    j += 1
                runs.append(
                    (
                        float(cols[i] * grid.dx1),
                        float(cols[j] * grid.dx1),
                        float((cols[j] - cols[i]) * grid.dx1),
                    )
                )
                i = j
            else:
                i += 1
    return lower, upper, runs


def c_region_inside_d2(region: RegionMap, params: ModelParams, slack_cells: int = 2) -> bool:
    """True if the no-pay region sits inside D2 at grid resolution.

    Requires a nonempty set of C nodes strictly above the proportional ray
    and no C node deeper below it than the grid jitter band (slack_cells
    cells); the continuous no-pay region touches the ray only along its
    boundary.
    """
    g = region.grid
    ns, ms = np.nonzero(region.labels == LABEL_C)
    if ns.size == 0:
        return False
    ratio = params.b2 / params.b1
    depth = ratio * ns * g.dx1 - ms * g.dx2
    has_d2 = np.any(depth < 0)
    no_deep_d1 = np.all(depth <= slack_cells * (g.dx1 + g.dx2))
    return bool(has_d2 and no_deep_d1)


def check_D1_identity(
    v: ValueField, params: ModelParams, n_samples: int = 100, seed: int = 0
) -> float:
    """Max deviation of the deep-branch-1 reduction over sampled points.

    For surpluses below the proportional ray the value must equal the
    immediate branch-1 payout down to the ray plus the on-ray value; the
    grid solution satisfies this to O(dx1 + dx2).
    """
    g = v.grid
    rng = np.random.default_rng(seed)
    ratio = params.b1 / params.b2
    worst = 0.0
    count = 0
    while count < n_samples:
        x1 = rng.uniform(0.1 * g.x1_max, 0.95 * g.x1_max)
        x2_cap = min((params.b2 / params.b1) * x1 * 0.98, 0.95 * g.x2_max)
        if x2_cap <= 0:
            continue
        x2 = rng.uniform(0.0, x2_cap)
        if region_of(params, x1, x2) != "D1":
            continue
        proj = ratio * x2
        dev = abs(v.extend(x1, x2) - (x1 - proj + v.extend(proj, x2)))
        worst = max(worst, dev)
        count += 1
    return worst


def check_tilde_suboptimality(
    params: ModelParams,
    law: ClaimLaw,
    wbar,
    n_probe: int = 4,
):
    """Probe the ray-reflection value for a positive generator residual.

    In the strict premium regime, if the 1D no-pay set is nonempty the
    reflection construction fails the HJB equation just above the ray;
    returns {'witness': ((x1, x2), L-value)} with a positive residual, or
    {'applicable': False, ...} when the 1D no-pay set is empty (pay
    everything immediately is optimal along the ray).  Rejects symmetric
    parameter sets, where the reflection value is genuinely optimal.
    """
    if params.is_symmetric:
        raise ValueError("reflection strategy is optimal in the symmetric case")
    # the origin node can never carry a lump label, so a no-pay interval
    # must span more than a couple of cells to count as genuinely nonempty
    c_intervals = [
        iv for iv in wbar.band.intervals if iv[2] == "C" and iv[1] - iv[0] > 2 * wbar.dx
    ]
    if not c_intervals:
        formula = lambda x2: (params.b1 / params.b2 + 1.0) * x2 + (
            params.c1 + params.c2
        ) / (params.lam + params.q)
        xs = np.linspace(0.0, 0.8 * wbar.x_max, 9)
        dev = max(abs(wbar.extend(x) - formula(x)) / max(1.0, formula(x)) for x in xs)
        return {"applicable": False, "linear_value_deviation": dev}

    lo, hi, _ = max(c_intervals, key=lambda iv: iv[1] - iv[0])
    best = None
    for frac in np.linspace(0.25, 0.75, n_probe):
        x2_0 = lo + frac * (hi - lo)
        x1_0 = (params.b1 / params.b2) * x2_0
        for steps in (2, 4, 8):
            x2 = x2_0 + steps * wbar.dx
            lval = _tilde_L(params, law, wbar, x1_0, x2)
            if best is None or lval > best[1]:
                best = ((x1_0, x2), lval)
        if best is not None and best[1] > 0:
            return {"applicable": True, "witness": best}
    return {"applicable": True, "witness": best}


def _tilde_L(params, law, wbar, x1, x2):
    """Generator residual of the reflection value at (x1, x2) above the ray."""
    ratio = params.b2 / params.b1
    z0 = ratio * x1
    if not z0 < x2:
        raise ValueError("probe point must lie strictly above the ray")
    u0 = x2 - z0 + wbar.extend(z0)
    k = int(math.floor(z0 / wbar.dx))
    wprime = (wbar.values[min(k + 1, len(wbar.values) - 1)] - wbar.values[k]) / wbar.dx
    d1 = -ratio + ratio * wprime
    d2 = 1.0
    ub = x1 / params.b1
    shift = x2 - z0
    integral = shift * float(law.cdf(ub)) + solver1d.ray_integral(wbar, z0, params.b2, ub, law)
    return (
        params.c1 * d1
        + params.c2 * d2
        - (params.q + params.lam) * u0
        + params.lam * integral
    )


def write_value_csv(path, v: ValueField):
    g = v.grid
    with open(path, "w") as fh:
        fh.write("n,m,x1,x2,v\n")
        for n in range(g.n_max + 1):
            x1 = n * g.dx1
            for m in range(g.m_max + 1):
                fh.write(f"{n},{m},{x1:.17g},{m * g.dx2:.17g},{v.values[n, m]:.17g}\n")


def write_policy_csv(path, policy: PolicyField, region: RegionMap):
    g = policy.grid
    with open(path, "w") as fh:
        fh.write("n,m,label,argmax\n")
        for n in range(g.n_max + 1):
            for m in range(g.m_max + 1):
                acts = "+".join(
                    a.name for a in (Action.E0, Action.E1, Action.E2)
                    if policy.actions[n, m] & a
                )
                fh.write(f"{n},{m},{region.label_name(n, m)},{acts}\n")


def write_summary_json(path, region: RegionMap, report: SolveReport, extra=None):
    payload = {
        "a0_points": [list(p) for p in region.a0_points],
        "b0_components": region.component_counts.get("B0", 0),
        "component_counts": region.component_counts,
        "residual_max": report.residual_max,
        "iterations": report.iterations,
        "final_sup_increment": report.final_sup_increment,
        "tol_effective": report.tol_effective,
        "converged": report.converged,
        "slope_runs": region.slope_runs,
        "breakpoints": [],
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_region_data(path, region: RegionMap, recipe_path=None):
    """Gnuplot-ready map: x1 x2 label_code, blank line per grid column."""
    g = region.grid
    with open(path, "w") as fh:
        fh.write("# x1 x2 label (0=C 1=B1 2=B2 3=B0 4=A1 5=A2 6=A0)\n")
        for n in range(g.n_max + 1):
            for m in range(g.m_max + 1):
                fh.write(f"{n * g.dx1:.6f} {m * g.dx2:.6f} {int(region.labels[n, m])}\n")
            fh.write("\n")
    if recipe_path:
        with open(recipe_path, "w") as fh:
            fh.write(
                "set view map\n"
                "set palette maxcolors 7\n"
                "set cbrange [-0.5:6.5]\n"
                f"splot '{path}' using 1:2:3 with points pt 5 ps 0.4 palette\n"
            )
