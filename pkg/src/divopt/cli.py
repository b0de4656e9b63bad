"""Configuration-driven entry points.

Flat key=value configs drive the solvers, the Monte Carlo cross-checks,
and the validation battery; every run writes a manifest echoing the config
byte for byte together with versions, seeds, and timings so deterministic
runs can be reproduced exactly.

Exit codes: 0 success, 1 validation failure, 2 bad config or missing
artifacts, 3 solver nonconvergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .hjb2d import Action, ValueField, build_claim_kernel, set_fft_workers
from .model import (
    Deterministic,
    Erlang2,
    Exponential,
    GridSpec,
    ModelParams,
    SurplusPoint,
    validate_params,
)
from . import solver1d, solver2d, simulate as sim_mod

__all__ = ["main", "load_config", "build_model", "build_grid", "ConfigError"]


class ConfigError(ValueError):
    pass


def load_config(path):
    """Parse a flat key=value file ('#' starts a comment)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = p.read_text()
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        cfg[key.strip()] = val.strip()
    return cfg, text


def _get_float(cfg, key, default=None):
    if key not in cfg:
        if default is not None:
            return default
        raise ConfigError(f"missing config key: {key}")
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key} is not a number: {cfg[key]!r}")


def build_model(cfg):
    params = validate_params(
        ModelParams(
            c1=_get_float(cfg, "c1"),
            c2=_get_float(cfg, "c2"),
            b1=_get_float(cfg, "b1"),
            b2=_get_float(cfg, "b2"),
            lam=_get_float(cfg, "lambda"),
            q=_get_float(cfg, "q"),
        )
    )
    kind = cfg.get("claim.kind")
    if kind == "exponential":
        law = Exponential(_get_float(cfg, "claim.rate"))
    elif kind == "erlang2":
        law = Erlang2(_get_float(cfg, "claim.rate"))
    elif kind == "deterministic":
        law = Deterministic(_get_float(cfg, "claim.atom"))
    else:
        raise ConfigError(f"claim.kind must be exponential|erlang2|deterministic, got {kind!r}")
    return params, law


def build_grid(cfg, params):
    return GridSpec.make(
        params,
        delta=_get_float(cfg, "delta"),
        x1_max=_get_float(cfg, "x1_max"),
        x2_max=_get_float(cfg, "x2_max"),
    )


def _write_manifest(out, name, cfg_text, extra):
    payload = {
        "command": name,
        "config_echo": cfg_text,
        "versions": {
            "divopt": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "rng": sim_mod.RNG_ALGORITHM,
    }
    payload.update(extra)
    with open(Path(out) / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_value_csv(path, grid):
    data = np.loadtxt(path, delimiter=",", skiprows=1, usecols=(0, 1, 4))
    values = np.zeros(grid.shape)
    values[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2]
    return ValueField(grid, values)


def _read_policy_csv(path, grid, eps_tie):
    actions = np.zeros(grid.shape, dtype=np.uint8)
    with open(path) as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            mask = 0
            for name in row["argmax"].split("+"):
                if name:
                    mask |= int(Action[name])
            actions[int(row["n"]), int(row["m"])] = mask
    return solver2d.PolicyField(grid=grid, actions=actions, eps_tie=eps_tie)


def cmd_solve2d(args):
    cfg, cfg_text = load_config(args.config)
    params, law = build_model(cfg)
    grid = build_grid(cfg, params)
    tol = _get_float(cfg, "tol", 1e-8)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    eps_tie = float(cfg["eps_tie"]) if "eps_tie" in cfg else None
    try:
        v, policy, report = solver2d.solve(params, law, grid, tol=tol, mode=args.mode,
                                           eps_tie=eps_tie)
    except solver2d.NonConvergenceError as exc:
        print(f"solve2d: {exc}", file=sys.stderr)
        return 3
    region = solver2d.extract_regions(policy, v)
    solver2d.write_value_csv(out / "value.csv", v)
    solver2d.write_policy_csv(out / "policy.csv", policy, region)
    solver2d.write_summary_json(out / "summary.json", region, report)
    solver2d.write_region_data(out / "regions.dat", region, out / "regions.gp")
    _write_manifest(
        out,
        "solve2d",
        cfg_text,
        {
            "mode": report.mode,
            "iterations": report.iterations,
            "residual_max": report.residual_max,
            "tol_effective": report.tol_effective,
            "min_increment": report.min_increment,
            "eps_tie": policy.eps_tie,
            "wall_time": time.perf_counter() - t0,
        },
    )
    print(f"solve2d: {report.iterations} sweeps, residual {report.residual_max:.3e}")
    return 0


def cmd_solve1d(args):
    cfg, cfg_text = load_config(args.config)
    params, law = build_model(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m_cost = _get_float(cfg, "merger.cost", 0.0)
    prob = solver1d.make_auxiliary_problem(params, law, args.kind, m_cost)
    delta = _get_float(cfg, "delta_1d", _get_float(cfg, "delta") / 4.0)
    x_max = _get_float(cfg, "x_max_1d", 2.0 * _get_float(cfg, "x1_max", 14.0))
    try:
        sol = solver1d.solve_1d(prob, delta, x_max, tol=_get_float(cfg, "tol", 1e-9))
    except (solver1d.NonConvergence1D, solver1d.TruncationError) as exc:
        print(f"solve1d: {exc}", file=sys.stderr)
        return 3
    with open(out / f"value1d_{args.kind}.csv", "w") as fh:
        fh.write("x,value,label\n")
        for n, val in enumerate(sol.values):
            x = n * sol.dx
            fh.write(f"{x:.17g},{val:.17g},{sol.band.label_at(x)}\n")
    with open(out / f"band_{args.kind}.json", "w") as fh:
        json.dump(
            {
                "breakpoints": sol.band.breakpoints,
                "intervals": sol.band.intervals,
                "a_points": sol.band.a_points,
                "iterations": sol.iterations,
                "residual_max": sol.residual_max,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    _write_manifest(
        out,
        f"solve1d:{args.kind}",
        cfg_text,
        {
            "iterations": sol.iterations,
            "residual_max": sol.residual_max,
            "tol_effective": sol.tol_effective,
            "min_increment": sol.min_increment,
            "wall_time": sol.wall_time,
        },
    )
    print(f"solve1d[{args.kind}]: breakpoints {sol.band.breakpoints}")
    return 0


def _sample_points(cfg, grid):
    if "sim.points" in cfg:
        pts = []
        for chunk in cfg["sim.points"].split(";"):
            x1s, x2s = chunk.split(":")
            pts.append((float(x1s), float(x2s)))
        return pts
    fr = [(0.25, 0.25), (0.5, 0.5), (0.25, 0.6), (0.6, 0.25), (0.45, 0.7)]
    return [
        (round(f1 * grid.x1_max / grid.dx1) * grid.dx1,
         round(f2 * grid.x2_max / grid.dx2) * grid.dx2)
        for f1, f2 in fr
    ]


def cmd_simulate(args):
    cfg, cfg_text = load_config(args.config)
    params, law = build_model(cfg)
    grid = build_grid(cfg, params)
    out = Path(args.out)
    value_path = out / "value.csv"
    policy_path = out / "policy.csv"
    manifest_path = out / "manifest.json"
    if not (value_path.is_file() and policy_path.is_file() and manifest_path.is_file()):
        print("simulate: missing solve2d artifacts (value.csv/policy.csv/manifest.json)",
              file=sys.stderr)
        return 2
    manifest = json.loads(manifest_path.read_text())
    v = _read_value_csv(value_path, grid)
    policy = _read_policy_csv(policy_path, grid, manifest.get("eps_tie", 1e-9))
    n_paths = int(_get_float(cfg, "paths", 10_000))
    seed = args.seed if args.seed is not None else int(_get_float(cfg, "seed", 1))
    rows = []
    for x1, x2 in _sample_points(cfg, grid):
        res = sim_mod.simulate_policy(
            params, law, sim_mod.PolicyTable(policy, v), SurplusPoint(x1, x2),
            n_paths, seed,
        )
        z = sim_mod.estimate_gap(res, v.extend(x1, x2))
        rows.append(
            {
                "x1": x1, "x2": x2, "mean": res.mean, "stderr": res.stderr,
                "solver_value": v.extend(x1, x2), "z": z, "horizon": res.horizon,
            }
        )
    with open(out / "sim.json", "w") as fh:
        json.dump({"paths": n_paths, "seed": seed, "rng": sim_mod.RNG_ALGORITHM,
                   "results": rows}, fh, indent=2)
        fh.write("\n")
    worst = max(abs(r["z"]) for r in rows)
    print(f"simulate: {len(rows)} points, max |z| = {worst:.2f}")
    return 0


def cmd_merger_compare(args):
    cfg, cfg_text = load_config(args.config)
    params, law = build_model(cfg)
    grid = build_grid(cfg, params)
    out = Path(args.out)
    value_path = out / "value.csv"
    if not value_path.is_file():
        print("merger-compare: missing value.csv", file=sys.stderr)
        return 2
    v = _read_value_csv(value_path, grid)
    m_cost = args.m_cost if args.m_cost is not None else _get_float(cfg, "merger.cost", 0.0)
    samples = _sample_points(cfg, grid)
    rows, merger = solver1d.merger_compare(params, law, m_cost, samples, v)
    with open(out / "merger_compare.csv", "w") as fh:
        fh.write("x1,x2,merger_reduced,v2d_reduced\n")
        for x1, x2, vm, vd in rows:
            vm_s = "nan" if vm is None else f"{vm:.17g}"
            fh.write(f"{x1:.17g},{x2:.17g},{vm_s},{vd:.17g}\n")
    print(f"merger-compare: wrote {len(rows)} rows (m = {m_cost})")
    return 0


def cmd_validate(args):
    cfg, cfg_text = load_config(args.config)
    params, law = build_model(cfg)
    grid = build_grid(cfg, params)
    out = Path(args.out)
    needed = [out / "value.csv", out / "policy.csv", out / "manifest.json"]
    if not all(p.is_file() for p in needed):
        print("validate: missing solve artifacts", file=sys.stderr)
        return 2
    manifest = json.loads((out / "manifest.json").read_text())
    v = _read_value_csv(out / "value.csv", grid)
    kernel = build_claim_kernel(params, law, grid)
    tol_eff = manifest.get("tol_effective", 1e-8)
    checks = []

    def check(name, ok, detail=""):
        checks.append({"name": name, "pass": bool(ok), "detail": detail})

    resid = solver2d.residual_check(kernel, v)
    check("residual", resid <= 10 * tol_eff, f"residual {resid:.3e} vs 10*tol {10*tol_eff:.3e}")

    ns = np.arange(grid.n_max + 1)[:, None] * grid.dx1
    ms = np.arange(grid.m_max + 1)[None, :] * grid.dx2
    lower_ok = np.all(v.values >= ns + ms - 1e-9)
    upper_ok = np.all(v.values <= ns + ms + (params.c1 + params.c2) / params.q + 1e-9)
    check("lower_bound", lower_ok)
    check("upper_bound", upper_ok)
    inc1 = np.diff(v.values, axis=0) >= grid.dx1 - 1e-9
    inc2 = np.diff(v.values, axis=1) >= grid.dx2 - 1e-9
    check("increments", bool(np.all(inc1) and np.all(inc2)))
    check("iterate_monotone", manifest.get("min_increment", 0.0) >= -1e-15)

    dev = solver2d.check_D1_identity(v, params)
    check("d1_identity", dev <= 2 * (grid.dx1 + grid.dx2), f"max deviation {dev:.4f}")

    wbar = solver1d.solve_1d(
        solver1d.make_auxiliary_problem(params, law, "wbar"),
        grid.delta / 4.0,
        grid.x2_max * 2.0,
    )
    if params.is_symmetric:
        xs = np.linspace(0.2, 0.8, 7) * min(grid.x1_max, grid.x2_max)
        rel = max(
            abs(v.extend((params.b1 / params.b2) * x, x) - wbar.extend(x))
            / max(1.0, wbar.extend(x))
            for x in xs
        )
        check("symmetric_diagonal", rel <= 1e-2, f"max rel dev {rel:.2e}")
    else:
        sub = solver2d.check_tilde_suboptimality(params, law, wbar)
        if sub.get("applicable", True):
            ok = sub["witness"][1] > 0
            check("reflection_suboptimal", ok,
                  f"L(tilde) = {sub['witness'][1]:.4f} at {sub['witness'][0]}")
        else:
            check("reflection_suboptimal", True, "no-pay set empty: take-the-money regime")

    rows, _ = solver1d.merger_compare(
        params, law, 0.0,
        [(n * grid.dx1, m * grid.dx2)
         for n in range(0, grid.n_max + 1, max(1, grid.n_max // 20))
         for m in range(0, grid.m_max + 1, max(1, grid.m_max // 20))],
        v,
    )
    worst_gap = min(r[2] - r[3] for r in rows if r[2] is not None)
    check("merger_dominance", worst_gap >= -100 * tol_eff, f"min gap {worst_gap:.3e}")

    policy = _read_policy_csv(out / "policy.csv", grid, manifest.get("eps_tie", 1e-9))
    n_paths = int(_get_float(cfg, "paths", 20_000))
    seed = args.seed if args.seed is not None else int(_get_float(cfg, "seed", 1))
    worst_z = 0.0
    for x1, x2 in _sample_points(cfg, grid)[:3]:
        res = sim_mod.simulate_policy(
            params, law, sim_mod.PolicyTable(policy, v), SurplusPoint(x1, x2),
            n_paths, seed,
        )
        worst_z = max(worst_z, abs(sim_mod.estimate_gap(res, v.extend(x1, x2))))
    check("mc_policy_crosscheck", worst_z <= 3.0, f"max |z| = {worst_z:.2f}")

    x0 = SurplusPoint(grid.x1_max / 3, grid.x2_max / 3)
    res = sim_mod.simulate_policy(params, law, sim_mod.TakeAndRun(), x0, n_paths, seed)
    target = x0.x1 + x0.x2 + (params.c1 + params.c2) / (params.q + params.lam)
    z = sim_mod.estimate_gap(res, target)
    check("mc_take_and_run", abs(z) <= 3.0, f"z = {z:.2f}")

    all_ok = all(c["pass"] for c in checks)
    with open(out / "validate.json", "w") as fh:
        json.dump({"pass": all_ok, "checks": checks}, fh, indent=2)
        fh.write("\n")
    for c in checks:
        print(f"[{'PASS' if c['pass'] else 'FAIL'}] {c['name']} {c['detail']}".rstrip())
    return 0 if all_ok else 1


def main(argv=None):
    parser = argparse.ArgumentParser(prog="divopt", description=__doc__)
    parser.add_argument("command",
                        choices=["solve2d", "solve1d", "simulate", "validate",
                                 "merger-compare"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="out")
    parser.add_argument("--threads", type=int, default=0,
                        help="FFT worker threads (0 = all cores)")
    parser.add_argument("--mode", choices=["inplace", "jacobi"], default="inplace")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--kind", choices=["wbar", "merger"], default="wbar",
                        help="solve1d problem kind")
    parser.add_argument("--m-cost", type=float, default=None,
                        help="merger cost for merger-compare")
    args = parser.parse_args(argv)
    set_fft_workers(args.threads)
    try:
        if args.command == "solve2d":
            return cmd_solve2d(args)
        if args.command == "solve1d":
            return cmd_solve1d(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "merger-compare":
            return cmd_merger_compare(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
