"""Command-line entry point.

Exit codes: 0 success, 1 some check reported ``satisfied = false``,
2 usage or configuration error, 3 a path diverged.
"""

import argparse
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import ConfigError, RunConfig, config_from_dict, parse_config, reference_nodal
from .control import ControlProblem, CostSpec, optimize
from .diagnostics import (
    energy_constants,
    energy_estimate_check,
    energy_path_terms,
    h1_blowup_probe,
    hminus1_distances,
    lp_energy_check,
    martingale_mean_check,
    modulus_from_distances,
    tightness_probe,
)
from .grid import ContractError, DomainSpec
from .io import export_trajectory, write_csv, write_json
from .noise import hypothesis_checks
from .operators import (
    b_bound_checks,
    bilinear_checks,
    ladyzhenskaya_checks,
    monotonicity_checks,
    pressure_bound_checks,
)
from .stepper import DivergenceError, simulate_ensemble

EXIT_OK, EXIT_UNSATISFIED, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3
COMMANDS = ("simulate", "verify", "energy", "regularity", "tightness", "optimize", "modulus")


def _parser():
    ap = argparse.ArgumentParser(prog="tidelevy", description="Stochastic tide model laboratory.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    helps = {
        "simulate": "run an ensemble and write trajectories",
        "verify": "operator and noise inequality suite",
        "energy": "energy estimates on an ensemble",
        "regularity": "H10 exceedance probability table",
        "tightness": "uniform bounds, modulus curve, increment power law",
        "optimize": "initial-value control by sample averaging",
        "modulus": "cadlag modulus curve",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", type=Path, help="JSON run configuration (defaults if omitted)")
        sp.add_argument("--out", type=Path, help="output directory (overrides outputs.directory)")
        sp.add_argument("--seed", type=int, help="master seed (overrides sim.seed)")
        if name == "verify":
            sp.add_argument("--samples", type=int, default=1000)
        else:
            sp.add_argument("--paths", type=int, help="ensemble size (overrides sim.n_paths)")
        if name == "optimize":
            sp.add_argument("--method", choices=("fd_gradient", "coordinate_search"))
            sp.add_argument("--budget", type=int)
    return ap


def _load(args):
    cfg = parse_config(args.config) if args.config else config_from_dict({})
    data = cfg.model_dump()
    if args.seed is not None:
        data["sim"]["seed"] = args.seed
    if getattr(args, "paths", None) is not None:
        data["sim"]["n_paths"] = args.paths
    if args.out is not None:
        data["outputs"]["directory"] = str(args.out)
    return RunConfig.model_validate(data)


def _manifest(cfg, command, started, elapsed, files, extra=None):
    dom = cfg.build_domain()
    p = cfg.build_params(dom)
    noise = cfg.build_noise(dom)
    sim = cfg.build_sim()
    k = energy_constants(p, noise, sim.horizon_T, cfg.diagnostics.bdg_c3, cfg.diagnostics.bdg_c4)
    n = cfg.sim.n_paths
    out = {
        "command": command,
        "config": cfg.model_dump(mode="json"),
        "master_seed": cfg.sim.seed,
        "path_seed_rule": "numpy.random.default_rng(SeedSequence(master_seed, spawn_key=(path,)))",
        "paths": list(range(n)),
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "started_utc": started,
        "wall_clock_s": elapsed,
        "derived": {
            "eps": p.eps, "mu": p.mu, "M": p.M, "C_P": p.C_P, "C1": p.C1, "C2": p.C2,
            "K": noise.K, "L": noise.L, "C": k["C"], "C_prime": k["C_prime"], "C_dprime": k["C_dprime"],
        },
        "artifacts": sorted(str(Path(f).name) for f in files),
    }
    if extra:
        out.update(extra)
    return out


def _ensemble(cfg, store_states):
    dom = cfg.build_domain()
    p = cfg.build_params(dom)
    noise = cfg.build_noise(dom)
    sim = cfg.build_sim().replace(store_states=store_states)
    u0, z0 = cfg.initial_state(dom)
    trajs = simulate_ensemble(u0, z0, p, sim, noise, cfg.sim.n_paths)
    return dom, p, noise, trajs


# ---------------------------------------------------------------------------
# commands; each returns (exit code, files written, extra manifest fields)
# ---------------------------------------------------------------------------


def cmd_simulate(cfg, out, args):
    dom, _, _, trajs = _ensemble(cfg, store_states=True)
    files = []
    o = cfg.outputs
    for tr in trajs:
        files += export_trajectory(tr, out, f"path_{tr.path_index:04d}", dom, o.csv, o.binary)
    return EXIT_OK, files, {}


def _suite_summary(name, reports):
    margins = [r.margin for r in reports]
    return {
        "name": name,
        "count": len(reports),
        "satisfied": sum(r.satisfied for r in reports),
        "all_satisfied": all(r.satisfied for r in reports),
        "min_margin": min(margins),
        "max_lhs": max(r.lhs for r in reports),
    }


def cmd_verify(cfg, out, args):
    n, seed = args.samples, cfg.sim.seed if args.seed is None else args.seed
    if n < 1:
        raise ContractError("--samples must be >= 1")
    dom = cfg.build_domain()
    p = cfg.build_params(dom)
    noise = cfg.build_noise(dom)
    suites = [
        ("monotonicity", monotonicity_checks(n, seed)),
        ("bilinear", bilinear_checks(n, seed, p)),
        ("ladyzhenskaya", ladyzhenskaya_checks(n, seed, dom)),
        ("b_bounds", b_bound_checks(n, seed, p)),
        ("pressure", pressure_bound_checks(n, seed, p)),
    ]
    if noise.wiener is not None or noise.jumps is not None:
        suites.append(("noise_hypotheses", hypothesis_checks(noise, dom, n, seed, p=4)))
    summary = [_suite_summary(name, reps) for name, reps in suites]
    for s, (name, reps) in zip(summary, suites):
        by_kind = {}
        for r in reps:
            by_kind.setdefault(r.name, []).append(r.satisfied)
        s["by_check"] = {k: all(v) for k, v in by_kind.items()}
    ok = all(s["all_satisfied"] for s in summary)
    report = {"samples": n, "seed": seed, "suites": summary, "satisfied": ok,
              "constants": {**p.constants(), **noise.constants()}, "manifest": "manifest.json"}
    f = write_json(out / "verify_report.json", report)
    return (EXIT_OK if ok else EXIT_UNSATISFIED), [f], {}


def cmd_energy(cfg, out, args):
    _, p, noise, trajs = _ensemble(cfg, store_states=False)
    d = cfg.diagnostics
    rep = energy_estimate_check(trajs, p, noise, d.bdg_c3, d.bdg_c4)
    lp = lp_energy_check(trajs, p, cfg.sim.p_moment, d.lp_multiple)
    mart = martingale_mean_check(trajs)
    sup_e, diss = energy_path_terms(trajs, p.alpha)
    files = [write_json(out / "energy_report.json", {
        "energy": rep.to_dict(), "lp_energy": lp.to_dict(), "martingale": mart,
        "satisfied": rep.satisfied and lp.satisfied and mart["satisfied"], "manifest": "manifest.json",
    })]
    files.append(write_csv(out / "energy_paths.csv", {
        "path": [tr.path_index for tr in trajs], "sup_energy": sup_e, "dissipation": diss}))
    c = trajs[0]
    mean = {k: np.mean([tr.channels[k] for tr in trajs], axis=0) for k in ("l2_sq", "h10_sq", "z_l2_sq")}
    files.append(write_csv(out / "energy_mean.csv", {"time": c.step_times, **mean}))
    ok = rep.satisfied and lp.satisfied and mart["satisfied"]
    return (EXIT_OK if ok else EXIT_UNSATISFIED), files, {}


def cmd_regularity(cfg, out, args):
    dom = cfg.build_domain()
    p = cfg.build_params(dom)
    noise = cfg.build_noise(dom)
    u0, z0 = cfg.initial_state(dom)
    d = cfg.diagnostics
    table = h1_blowup_probe(p, cfg.build_sim(), d.thresholds, d.horizons, cfg.sim.n_paths, noise,
                            u0, z0, small=d.probe_small)
    files = [write_json(out / "regularity.json", {**table.to_dict(), "manifest": "manifest.json"})]
    cols = {"threshold": table.thresholds}
    for j, T in enumerate(table.horizons):
        cols[f"T={T!r}"] = table.probabilities[:, j]
    files.append(write_csv(out / "regularity.csv", cols))
    return (EXIT_OK if table.satisfied else EXIT_UNSATISFIED), files, {}


def cmd_tightness(cfg, out, args):
    dom, _, _, trajs = _ensemble(cfg, store_states=True)
    d = cfg.diagnostics
    rep = tightness_probe(trajs, d.delta_grid, d.theta_grid, dom)
    files = [write_json(out / "tightness.json", {**rep.to_dict(), "manifest": "manifest.json"})]
    return EXIT_OK, files, {}


def cmd_optimize(cfg, out, args):
    dom = cfg.build_domain()
    p = cfg.build_params(dom)
    noise = cfg.build_noise(dom)
    u0, z0 = cfg.initial_state(dom)
    c = cfg.control
    cost = CostSpec(c.w_track, c.w_reg, reference_nodal(c.u_ref, dom))
    prob = ControlProblem(u0, z0, c.control_modes, c.control_bound, cost, p,
                          cfg.build_sim(), noise, tuple(c.seed_set))
    method = args.method or c.method
    budget = args.budget or c.budget
    trace = optimize(prob, method, budget)
    files = [write_json(out / "optimization.json", {**trace.to_dict(), "manifest": "manifest.json"})]
    files.append(write_csv(out / "optimization.csv", {
        "iteration": list(range(len(trace.iterates))),
        "J": [it["J"] for it in trace.iterates],
        "stderr": [it["stderr"] for it in trace.iterates],
    }))
    return EXIT_OK, files, {}


def cmd_modulus(cfg, out, args):
    dom, _, _, trajs = _ensemble(cfg, store_states=True)
    deltas = sorted(cfg.diagnostics.delta_grid)
    dists = [hminus1_distances(tr.u, dom) for tr in trajs]
    curve = [max(modulus_from_distances(trajs[0].times, D, d) for D in dists) for d in deltas]
    f = write_csv(out / "modulus.csv", {"delta": deltas, "modulus": curve})
    return EXIT_OK, [f], {}


HANDLERS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "energy": cmd_energy,
    "regularity": cmd_regularity,
    "tightness": cmd_tightness,
    "optimize": cmd_optimize,
    "modulus": cmd_modulus,
}


def main(argv=None):
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        code, files, extra = HANDLERS[args.command](cfg, out, args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        write_json(out / "manifest.json", _manifest(cfg, args.command, started,
                                                    time.perf_counter() - t0, [],
                                                    {"diverged": {"step": exc.step, "paths": exc.paths}}))
        return EXIT_DIVERGED
    except (ContractError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    write_json(out / "manifest.json", _manifest(cfg, args.command, started, time.perf_counter() - t0, files, extra))
    return code


run_command = main


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
