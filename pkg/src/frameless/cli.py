"""Command-line surface: analyze, simulate, optimize, bounds, compare, repro.

Every command reads a JSON config, writes CSV (canonical) plus a JSON
mirror into --out, and embeds the config hash, tool version, and seed in
each output so identical configs reproduce identical primary columns.

Exit codes: 0 success, 2 config error, 3 guard refusal (pattern space too
large without --allow-long-running), 4 non-convergence / no feasible
optimum.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundEngine, upper_bound_throughput
from .evolution import (
    CoopEngine,
    GuardError,
    default_t_grid,
    peak_search,
    plr_curve,
    evolve_coop,
    simultaneous_transmission_degrees,
)
from .optimizer import OptimizationSpec, optimize
from .simulator import RNG_ID, SimulationSpec, monte_carlo
from .topology import (
    NetworkTopology,
    TopologyError,
    full_topology,
    load_topology,
    serialize_topology,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3
EXIT_NONCONV = 4


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    return doc


def config_hash(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


def _topology_from(doc: dict) -> NetworkTopology:
    if "topology" not in doc:
        raise ConfigError("config needs a 'topology' object")
    try:
        return load_topology(json.dumps(doc["topology"]))
    except TopologyError as e:
        raise ConfigError(f"bad topology: {e}") from e


def _degrees_from(doc: dict, topology: NetworkTopology, key="degrees"):
    if key not in doc:
        raise ConfigError(f"config needs '{key}'")
    g = doc[key]
    if not isinstance(g, list) or len(g) != topology.num_groups:
        raise ConfigError(
            f"'{key}' must list one target degree per group ({topology.num_groups})"
        )
    return tuple(float(v) for v in g)


def _t_values(doc: dict, topology: NetworkTopology):
    if "t_values" in doc:
        return [int(t) for t in doc["t_values"]]
    if "t_grid" in doc:
        spec = doc["t_grid"]
        return list(
            np.unique(
                np.linspace(
                    int(spec["start"]), int(spec["stop"]), int(spec.get("num", 41))
                )
                .round()
                .astype(int)
            )
        )
    return None


def _meta_lines(doc: dict, args, extra=None) -> list[str]:
    meta = {
        "tool_version": __version__,
        "config_hash": config_hash(doc),
        "seed": getattr(args, "seed", None),
        "rng": RNG_ID,
    }
    meta.update(extra or {})
    return [f"# {k}={v}" for k, v in meta.items()]


def _write(path: Path, lines):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _emit_json(path: Path, doc: dict, payload: dict, args, extra=None):
    full = {
        "tool_version": __version__,
        "config_hash": config_hash(doc),
        "seed": getattr(args, "seed", None),
        **(extra or {}),
        **payload,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(full, indent=2, sort_keys=True) + "\n")
    return full


def _print_summary(args, payload: dict):
    if args.format == "json":
        print(json.dumps(payload, sort_keys=True))
    else:
        for k, v in payload.items():
            print(f"{k}: {v}")


def cmd_analyze(args) -> int:
    doc = _load_config(args.config)
    topology = _topology_from(doc)
    mode = args.mode or doc.get("mode", "coop")
    degrees = _degrees_from(doc, topology)
    out_dir = Path(args.out)
    engine_kw = dict(
        cache_dir=args.cache_dir, workers=args.workers, allow_long=args.allow_long_running
    )
    if mode == "noncoop":
        engine_kw = {}
    t_vals = _t_values(doc, topology)
    peak = peak_search(
        topology, degrees, mode, t_grid=t_vals, points=args.grid_points, **engine_kw
    )
    curve = peak.curve
    _write(
        out_dir / "curve.csv",
        _meta_lines(doc, args, {"mode": mode}) + [curve.header(), *curve.csv_rows()],
    )
    payload = {
        "mode": mode,
        "t_star": peak.t_star,
        "peak_throughput": peak.throughput,
        "plr_at_peak": peak.plr_avg,
        "success_fraction": peak.success_fraction,
        "converged": peak.converged,
        "n_evaluated": peak.n_evaluated,
    }
    _emit_json(out_dir / "peak.json", doc, payload, args)
    if args.trace:
        if mode != "coop":
            raise ConfigError("--trace requires cooperative mode")
        trace_t = int(doc.get("trace_t", peak.t_star))
        res = evolve_coop(topology, degrees, trace_t, **engine_kw, trace=True)
        n_groups = topology.num_groups
        header = "iteration," + ",".join(
            [f"p_r0_g{i+1}" for i in range(n_groups)]
            + [f"p_r1_g{i+1}" for i in range(n_groups)]
        )
        rows = [
            f"{k + 1},"
            + ",".join(repr(float(v)) for v in res.trace_r0[k])
            + ","
            + ",".join(repr(float(v)) for v in res.trace_r1[k])
            for k in range(res.iterations)
        ]
        _write(
            out_dir / "trace.csv",
            _meta_lines(doc, args, {"trace_t": trace_t}) + [header, *rows],
        )
    _print_summary(args, payload)
    return EXIT_OK if peak.converged else EXIT_NONCONV


def cmd_simulate(args) -> int:
    doc = _load_config(args.config)
    topology = _topology_from(doc)
    mode = doc.get("mode", "frameless")
    replica = None
    degrees = None
    if mode == "spatio":
        raw = doc.get("replica_dist")
        if not raw:
            raise ConfigError("spatio mode needs 'replica_dist'")
        replica = tuple(sorted((int(k), float(v)) for k, v in raw.items()))
    else:
        degrees = _degrees_from(doc, topology)
    spec = SimulationSpec(
        topology=topology,
        mode=mode,
        degrees=degrees,
        alpha=float(doc.get("alpha", 0.8)),
        t_slots=int(doc["t"]) if "t" in doc else None,
        slot_cap=int(doc["slot_cap"]) if "slot_cap" in doc else None,
        replica_dist=replica,
        master_seed=args.seed,
    )
    trials = int(doc.get("trials", 100))
    result = monte_carlo(spec, trials, workers=args.workers)
    out_dir = Path(args.out)
    _write(
        out_dir / "trials.csv",
        _meta_lines(doc, args, {"mode": mode})
        + [result.csv_header(), *result.csv_rows()],
    )
    payload = result.summary()
    _emit_json(out_dir / "aggregate.json", doc, payload, args)
    _print_summary(
        args,
        {
            "mean_throughput": payload["mean_throughput"],
            "stderr_throughput": payload["stderr_throughput"],
            "mean_plr": payload["mean_plr"],
            "mean_t": payload["mean_t"],
        },
    )
    return EXIT_OK


def cmd_optimize(args) -> int:
    doc = _load_config(args.config)
    topology = _topology_from(doc)
    tie = doc.get("tie_classes")
    spec = OptimizationSpec(
        topology=topology,
        alpha=float(doc.get("alpha", 0.8)),
        mode=doc.get("mode", "coop"),
        tie_classes=tuple(tuple(c) for c in tie) if tie else None,
        bounds=tuple(doc.get("bounds", (0.0, 4.0))),
        population=int(doc.get("population", 300)),
        mutant_factor=float(doc.get("mutant_factor", 0.2)),
        generations=int(doc.get("generations", 30)),
        crossover_rate=float(doc.get("crossover_rate", 0.9)),
        allow_long=args.allow_long_running,
        cache_dir=args.cache_dir,
    )
    result = optimize(spec, seed=args.seed, workers=args.workers, fast=args.fast)
    out_dir = Path(args.out)
    payload = result.summary()
    _emit_json(out_dir / "optimum.json", doc, payload, args)
    gcols = ",".join(f"g{i+1}" for i in range(topology.num_groups))
    gvals = ",".join(f"{v:.4f}" for v in result.best_g)
    _write(
        out_dir / "optimum.csv",
        _meta_lines(doc, args)
        + [f"{gcols},t_star,throughput,feasible", f"{gvals},{result.t_star},{result.throughput!r},{int(result.feasible)}"],
    )
    _print_summary(
        args,
        {
            "best_g": [round(v, 4) for v in result.best_g],
            "throughput": result.throughput,
            "t_star": result.t_star,
            "feasible": result.feasible,
        },
    )
    return EXIT_OK if result.feasible else EXIT_NONCONV


def cmd_bounds(args) -> int:
    doc = _load_config(args.config)
    m_values = [int(m) for m in doc.get("m_values", [1, 2, 3, 4])]
    n_per_group = int(doc.get("num_users_per_group", 10000))
    g_single = float(doc.get("noncoop_degree", 3.098))
    exact_g = doc.get("exact_degrees", {})
    rows = []
    for m in m_values:
        topology = full_topology(m, [n_per_group] * (2**m - 1))
        g_nc = simultaneous_transmission_degrees(topology, g_single)
        pk_nc = peak_search(topology, g_nc, "noncoop")
        s_up = upper_bound_throughput(m)
        row = {
            "m": m,
            "s_noncoop": pk_nc.throughput,
            "s_upper": s_up,
            "gamma_upper": s_up / pk_nc.throughput,
        }
        bound_spec = OptimizationSpec(
            topology=topology,
            mode="bound",
            alpha=float(doc.get("alpha", 0.8)),
            population=int(doc.get("bound_population", 30)),
            generations=int(doc.get("bound_generations", 10)),
        )
        opt_b = optimize(bound_spec, seed=args.seed, workers=args.workers)
        row["s_lower"] = opt_b.throughput
        row["gamma_lower"] = opt_b.throughput / pk_nc.throughput
        exact_possible = 2**m - 1 <= 7 or args.allow_long_running
        if exact_possible and str(m) in exact_g:
            pk_c = peak_search(
                topology,
                tuple(float(v) for v in exact_g[str(m)]),
                "coop",
                cache_dir=args.cache_dir,
                workers=args.workers,
                allow_long=args.allow_long_running,
            )
            row["s_exact"] = pk_c.throughput
            row["gamma_exact"] = pk_c.throughput / pk_nc.throughput
        rows.append(row)
        print(
            f"M={m}: S_nc={row['s_noncoop']:.4f} S_lb={row['s_lower']:.4f} "
            f"S_ub={s_up:.3f}"
            + (f" S_exact={row['s_exact']:.4f}" if "s_exact" in row else "")
        )
    out_dir = Path(args.out)
    cols = [
        "m", "s_noncoop", "s_lower", "s_upper", "s_exact",
        "gamma_lower", "gamma_exact", "gamma_upper",
    ]
    lines = _meta_lines(doc, args) + [",".join(cols)]
    for row in rows:
        lines.append(",".join(str(row.get(c, "")) for c in cols))
    _write(out_dir / "bounds.csv", lines)
    _emit_json(out_dir / "bounds.json", doc, {"rows": rows}, args)
    return EXIT_OK


def cmd_compare(args) -> int:
    doc = _load_config(args.config)
    topology = _topology_from(doc)
    degrees = _degrees_from(doc, topology)
    raw = doc.get("replica_dist", {"2": 1.0})
    replica = tuple(sorted((int(k), float(v)) for k, v in raw.items()))
    gbars = [float(v) for v in doc.get("gbar_values", [0.5, 0.6, 0.7, 0.75, 0.8, 0.9])]
    trials = int(doc.get("trials", 10))
    n = topology.num_users
    m = topology.num_bs
    p = np.array(
        [g / grp.num_users if grp.num_users else 0.0 for g, grp in zip(degrees, topology.groups)]
    )
    weights = np.array([grp.num_users for grp in topology.groups]) / n
    rows = []
    for gbar in gbars:
        t = max(1, int(round(n / (m * gbar))))
        mc_f = monte_carlo(
            SimulationSpec(
                topology=topology, mode="fixed", degrees=degrees, t_slots=t,
                master_seed=args.seed,
            ),
            trials,
            workers=args.workers,
        )
        mc_b = monte_carlo(
            SimulationSpec(
                topology=topology, mode="spatio", replica_dist=replica, t_slots=t,
                master_seed=args.seed + 1,
            ),
            trials,
            workers=args.workers,
        )
        floor = float(weights @ (1.0 - p) ** t)
        rows.append(
            {
                "gbar": gbar,
                "t": t,
                "frameless_throughput": mc_f.mean_throughput / m,
                "frameless_stderr": mc_f.stderr_throughput / m,
                "frameless_plr": mc_f.mean_plr,
                "baseline_throughput": mc_b.mean_throughput / m,
                "baseline_stderr": mc_b.stderr_throughput / m,
                "baseline_plr": mc_b.mean_plr,
                "plr_floor": floor,
                "delta_throughput": (mc_f.mean_throughput - mc_b.mean_throughput) / m,
            }
        )
        print(
            f"Gbar={gbar:.2f}: frameless={rows[-1]['frameless_throughput']:.4f} "
            f"baseline={rows[-1]['baseline_throughput']:.4f} "
            f"plr={rows[-1]['frameless_plr']:.3e}/{rows[-1]['baseline_plr']:.3e}"
        )
    out_dir = Path(args.out)
    cols = list(rows[0].keys())
    lines = _meta_lines(doc, args) + [",".join(cols)]
    for row in rows:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols))
    _write(out_dir / "compare.csv", lines)
    _emit_json(out_dir / "compare.json", doc, {"rows": rows}, args)
    return EXIT_OK


def cmd_repro(args) -> int:
    """Scaled-down acceptance run: fast checks of the headline numbers."""
    failures = []

    def check(name, ok, detail):
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name}: {detail}")
        if not ok:
            failures.append(name)

    topo1 = full_topology(1, [10000])
    pk1 = peak_search(topo1, [3.10], "coop", cache_dir=args.cache_dir)
    check("table1-m1-peak", abs(pk1.throughput - 0.874) <= 0.005,
          f"S={pk1.throughput:.4f} vs 0.874±0.005")
    topo2 = full_topology(2, [10000] * 3)
    pk2 = peak_search(topo2, (1.81, 1.81, 1.68), "coop", cache_dir=args.cache_dir)
    check("table1-m2-peak", abs(pk2.throughput - 1.676) <= 0.005,
          f"S={pk2.throughput:.4f} vs 1.676±0.005")
    g_nc = simultaneous_transmission_degrees(topo2)
    pk_nc = peak_search(topo2, g_nc, "noncoop")
    gamma = pk2.throughput / pk_nc.throughput
    check("gain-m2", abs(gamma - 1.26) <= 0.03, f"Gamma={gamma:.3f} vs 1.26±0.03")
    pk_b = peak_search(topo2, (1.81, 1.81, 1.68), "bound")
    check("bound-ordering", pk_b.throughput <= pk2.throughput <= upper_bound_throughput(2),
          f"{pk_b.throughput:.3f} <= {pk2.throughput:.3f} <= {upper_bound_throughput(2):.3f}")
    mc = monte_carlo(
        SimulationSpec(topology=topo2, mode="frameless", degrees=(1.81, 1.81, 1.68),
                       alpha=0.8, master_seed=args.seed),
        trials=10,
        workers=args.workers,
    )
    check("simulated-m2", abs(mc.mean_throughput - 1.673) <= 0.02,
          f"mean S={mc.mean_throughput:.4f} vs 1.673±0.02 (10 trials)")
    spec = OptimizationSpec(topology=topo1, alpha=0.8, mode="coop")
    opt = optimize(spec, seed=args.seed, workers=args.workers, fast=True)
    check("optimizer-m1", opt.feasible and abs(opt.best_g[0] - 3.10) <= 0.05,
          f"G={opt.best_g[0]:.3f} vs 3.10±0.05 (fast settings)")
    print(f"{6 - len(failures)}/6 checks passed")
    return EXIT_OK if not failures else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frameless-aloha",
        description="Frameless ALOHA with cooperating base stations: "
        "analysis, simulation, bounds, and target-degree optimization.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="stdout summary format")
        p.add_argument("--fast", action="store_true",
                       help="scaled-down settings for smoke runs")
        p.add_argument("--allow-long-running", action="store_true",
                       help="permit exact analysis beyond 7 groups (e.g. full M=4)")
        p.add_argument("--cache-dir", default=None,
                       help="retrievability table cache (default: "
                            "$FRAMELESS_CACHE_DIR or ~/.cache/frameless-aloha)")

    p = sub.add_parser("analyze", help="density-evolution PLR curve and peak")
    common(p)
    p.add_argument("--mode", choices=("coop", "noncoop", "bound"), default=None)
    p.add_argument("--trace", action="store_true",
                   help="write per-iteration retrieval-probability trace")
    p.add_argument("--grid-points", type=int, default=41)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo frames")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="differential-evolution degree search")
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("bounds", help="gain bounds versus number of BSs")
    common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("compare", help="frameless vs spatio-temporal baseline")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("repro", help="scaled-down acceptance checks")
    common(p, needs_config=False)
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TopologyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardError as e:
        print(f"guard refusal: {e}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
