"""Command-line surface.

Subcommands: reference, solve, train-rl, train-sl, evaluate, regions,
weights, bench.  Exit codes: 0 success, 1 validation/usage error, 2 runtime
failure (CFL rejection, blow-up, training abort).
"""

import argparse
import os
import sys

import numpy as np

from . import env as env_mod
from . import evaluate as ev
from . import mlp
from . import sl as sl_mod
from . import td3 as td3_mod
from .config import (ConfigValidationError, ExperimentConfig, config_hash,
                     load_seed_file, parse_config)
from .core import (BlowUpError, CflViolationError, ConfigurationError, Grid,
                   ProblemInstance, flux_by_tag, save_reference)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="rlweno", description=__doc__)
    sub = p.add_subparsers(dest="command")
    for name in ("reference", "solve", "train-rl", "train-sl", "evaluate",
                 "regions", "weights", "bench"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed-file", default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--deterministic", action="store_true")
    return p


def _setting_for(cfg: ExperimentConfig, eta: float) -> ev.EvalSetting:
    return ev.EvalSetting(
        flux=flux_by_tag(cfg.flux), x_lo=cfg.domain[0], x_hi=cfg.domain[1],
        T=cfg.test_T, eta=eta,
        kind="forcing" if cfg.setting == "forcing" else "ic",
        c_choices=tuple(cfg.c_test))


def _load_actor(cfg: ExperimentConfig):
    if cfg.method == "weno":
        return None
    if not cfg.checkpoint:
        raise ConfigurationError(f"method {cfg.method!r} requires a checkpoint path")
    params, _ = mlp.load_checkpoint(cfg.checkpoint)
    return params


def _train_sampler(cfg: ExperimentConfig, store: ev.ReferenceStore):
    """Episode sampler: training IC/forcing seed x training grid x horizon."""
    rng = np.random.default_rng(cfg.seeds.ic + 99)
    seeds = cfg.train_seed_list()
    t_lo, t_hi = cfg.train_T_range
    t_max = t_hi
    setting = ev.EvalSetting(
        flux=flux_by_tag(cfg.flux), x_lo=cfg.domain[0], x_hi=cfg.domain[1],
        T=t_max, eta=cfg.train_eta,
        kind="forcing" if cfg.setting == "forcing" else "ic",
        c_choices=tuple(cfg.c_train))

    def sampler(episode: int):
        seed = seeds[rng.integers(len(seeds))]
        dx, dt = cfg.train_grids[rng.integers(len(cfg.train_grids))]
        ref = store.restricted(setting, seed, [(dx, dt)])[(dx, dt)]
        n_max = round(t_max / dt)
        n = int(np.clip(round(rng.uniform(t_lo, t_hi) / dt), 1, n_max))
        grid = Grid(cfg.domain[0], cfg.domain[1], dx, dt, n)
        problem = setting.build_problem(seed, dx, dt)
        problem = ProblemInstance(grid, problem.flux, problem.u0, problem.eta,
                                  problem.forcing)
        return problem, ref[: n + 1]

    return sampler


def _eval_instances(cfg: ExperimentConfig, store: ev.ReferenceStore, n: int = 3):
    """Held-out instances for during-training evaluation."""
    setting = _setting_for(cfg, cfg.train_eta)
    dx, dt = cfg.train_grids[0]
    out = []
    for i in range(n):
        seed = cfg.seeds.eval + i
        ref = store.restricted(setting, seed, [(dx, dt)])[(dx, dt)]
        out.append((setting.build_problem(seed, dx, dt), ref))
    return out


def cmd_reference(cfg, args, out_dir) -> int:
    store = ev.ReferenceStore()
    for eta in cfg.etas:
        setting = _setting_for(cfg, eta)
        for seed in cfg.test_seed_list():
            ref = store.fine(setting, seed)
            stem = os.path.join(out_dir, f"ref_{cfg.setting}_{cfg.flux}_eta{eta}_s{seed}")
            save_reference(ref, stem)
            print(f"wrote {stem}.f64")
    return EXIT_OK


def cmd_solve(cfg, args, out_dir) -> int:
    actor = _load_actor(cfg)
    store = ev.ReferenceStore()
    rows, failures = [], 0
    for eta in cfg.etas:
        setting = _setting_for(cfg, eta)
        records, _ = ev.error_table({cfg.method: actor}, setting, cfg.grids,
                                    cfg.test_seed_list(), store,
                                    workers=1 if args.deterministic else args.workers)
        for r in records:
            rows.append({"method": r.method, "dx": r.dx, "dt": r.dt, "eta": eta,
                         "seed": r.seed, "status": r.status,
                         "rel_error": r.rel_error,
                         "cell": "-" if r.status == "cfl" else
                                 ("nan" if r.status == "blowup" else f"{r.rel_error:.10g}")})
            failures += r.status != "ok"
    ev.write_csv(os.path.join(out_dir, "solve_records.csv"),
                 ["method", "dx", "dt", "eta", "seed", "status", "rel_error", "cell"],
                 rows, meta=_meta(cfg))
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_train_rl(cfg, args, out_dir) -> int:
    store = ev.ReferenceStore()
    sampler = _train_sampler(cfg, store)
    eval_set = _eval_instances(cfg, store)
    try:
        td3_mod.train(sampler, cfg.td3, init_seed=cfg.seeds.init,
                      noise_seed=cfg.seeds.noise, buffer_seed=cfg.seeds.buffer,
                      eval_set=eval_set, out_dir=out_dir, verbose=True)
    except td3_mod.TrainingAbortError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_train_sl(cfg, args, out_dir) -> int:
    store = ev.ReferenceStore()
    sampler = _train_sampler(cfg, store)
    eval_set = _eval_instances(cfg, store)
    sl_mod.sl_train(sampler, cfg.sl, init_seed=cfg.seeds.init,
                    eval_set=eval_set, out_dir=out_dir, verbose=True)
    return EXIT_OK


def cmd_evaluate(cfg, args, out_dir) -> int:
    methods = {cfg.method: _load_actor(cfg)} if cfg.method != "weno" else {"weno": None}
    store = ev.ReferenceStore()
    all_rows = []
    for eta in cfg.etas:
        setting = _setting_for(cfg, eta)
        _, rows = ev.error_table(methods, setting, cfg.grids, cfg.test_seed_list(),
                                 store, workers=1 if args.deterministic else args.workers)
        for row in rows:
            row["eta"] = eta
            all_rows.append(row)
    ev.write_csv(os.path.join(out_dir, "error_table.csv"),
                 ["eta", "dx", "dt", "method", "n_ok", "n_cfl", "n_blowup",
                  "mean", "std", "cell"],
                 all_rows, meta=_meta(cfg))
    print(f"wrote {os.path.join(out_dir, 'error_table.csv')}")
    return EXIT_OK


def cmd_regions(cfg, args, out_dir) -> int:
    actor = _load_actor(cfg)
    store = ev.ReferenceStore()
    setting = _setting_for(cfg, cfg.etas[0])
    dx, dt = cfg.grids[0]
    rows = []
    for seed in cfg.test_seed_list():
        problem = setting.build_problem(seed, dx, dt)
        ref = store.restricted(setting, seed, [(dx, dt)])[(dx, dt)]
        mask = ev.classify_regions(ref, dx, cfg.eval.theta, cfg.eval.halo)
        try:
            traj = ev.solve_with_method(cfg.method, problem, actor)
        except (CflViolationError, BlowUpError):
            continue
        cdfs = ev.error_cdf_by_region(traj.values(), ref, mask)
        for region, table in cdfs.items():
            for log_err, count in table:
                rows.append({"seed": seed, "region": region,
                             "log10_error": log_err, "cumulative_count": count})
    meta = _meta(cfg)
    meta.update({"theta": cfg.eval.theta, "halo": cfg.eval.halo})
    ev.write_csv(os.path.join(out_dir, "error_cdf.csv"),
                 ["seed", "region", "log10_error", "cumulative_count"], rows, meta=meta)
    return EXIT_OK


def cmd_weights(cfg, args, out_dir) -> int:
    actor = _load_actor(cfg)
    if actor is None:
        raise ConfigurationError("weights analysis needs a checkpointed policy")
    store = ev.ReferenceStore()
    setting = _setting_for(cfg, cfg.etas[0])
    dx, dt = cfg.grids[0]
    states_all, tags_all = [], []
    for seed in cfg.test_seed_list():
        problem = setting.build_problem(seed, dx, dt)
        ref = store.restricted(setting, seed, [(dx, dt)])[(dx, dt)]
        mask = ev.classify_regions(ref, dx, cfg.eval.theta, cfg.eval.halo)
        try:
            traj = ev.solve_with_method("weno", problem, None)
        except (CflViolationError, BlowUpError):
            continue
        states, tags = ev.collect_interface_states(traj.values(), setting.flux, mask)
        states_all.append(states)
        tags_all.append(tags)
    states = np.concatenate(states_all)
    tags = np.concatenate(tags_all)
    rows = ev.weight_statistics(actor, states, tags)
    meta = _meta(cfg)
    meta.update({"theta": cfg.eval.theta, "halo": cfg.eval.halo,
                 "corpus_size": len(states)})
    ev.write_csv(os.path.join(out_dir, "weight_stats.csv"),
                 ["region", "slot", "count", "rl_mean", "rl_std",
                  "weno_mean", "weno_std"], rows, meta=meta)
    return EXIT_OK


BENCH_GRIDS = [(0.02, 0.004), (0.01, 0.002), (0.005, 0.001), (0.002, 0.0004)]


def cmd_bench(cfg, args, out_dir) -> int:
    actor = _load_actor(cfg)
    rows = ev.timing_benchmark(cfg.method, BENCH_GRIDS, cfg.eval.repetitions, actor)
    ev.write_csv(os.path.join(out_dir, "timing.csv"),
                 ["method", "dx", "dt", "mean_seconds", "repetitions"],
                 rows, meta=_meta(cfg))
    for row in rows:
        print(f"{row['method']} dx={row['dx']} dt={row['dt']}: "
              f"{row['mean_seconds']:.4f} s")
    return EXIT_OK


def _meta(cfg: ExperimentConfig) -> dict:
    from dataclasses import asdict
    return {"config_hash": config_hash(cfg), "seeds": asdict(cfg.seeds),
            "checkpoint": cfg.checkpoint, "method": cfg.method}


COMMANDS = {
    "reference": cmd_reference,
    "solve": cmd_solve,
    "train-rl": cmd_train_rl,
    "train-sl": cmd_train_sl,
    "evaluate": cmd_evaluate,
    "regions": cmd_regions,
    "weights": cmd_weights,
    "bench": cmd_bench,
}


def run_subcommand(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION
    try:
        cfg = parse_config(args.config)
        if args.seed_file:
            load_seed_file(args.seed_file, cfg)
    except ConfigValidationError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = args.out or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args, out_dir)
    except (CflViolationError, BlowUpError, td3_mod.TrainingAbortError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run_subcommand(sys.argv[1:]))


if __name__ == "__main__":
    main()
