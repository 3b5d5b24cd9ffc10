"""Metrics and result artifacts: relative-error tables across grids and
methods, smooth/singular region analysis with error CDFs, weight-distribution
statistics, and CPU timing benchmarks.  All outputs are CSV plus a JSON
metadata sidecar.
"""

import json
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import env as env_mod
from . import mlp
from . import weno
from .core import (BlowUpError, CflViolationError, ConfigurationError, FluxFunction,
                   Grid, ProblemInstance, ReferenceSolution, generate_reference,
                   load_reference, sample_forcing, sample_initial_condition,
                   save_reference)

ARTIFACT_VERSION = 1


def relative_error(traj_values: np.ndarray, ref_values: np.ndarray) -> float:
    """Mean over evolving steps n = 1..N of ||U^n - u^n||_2 / ||u^n||_2."""
    U = np.asarray(traj_values, dtype=float)
    u = np.asarray(ref_values, dtype=float)
    if U.shape != u.shape:
        raise ConfigurationError(f"trajectory {U.shape} vs reference {u.shape}")
    norms = np.linalg.norm(u[1:], axis=1)
    if np.any(norms == 0.0):
        raise ConfigurationError("zero-norm reference slice")
    return float(np.mean(np.linalg.norm(U[1:] - u[1:], axis=1) / norms))


@dataclass(frozen=True)
class EvalSetting:
    """Shared protocol for one evaluation table: domain, physics, horizon,
    and how per-seed instances are drawn."""

    flux: FluxFunction
    x_lo: float
    x_hi: float
    T: float
    eta: float = 0.0
    kind: str = "ic"                  # "ic": random u0; "forcing": u0 = 0
    c_choices: Tuple[int, ...] = (4, 6)

    def key(self) -> tuple:
        return (self.flux.tag, self.x_lo, self.x_hi, self.T, self.eta,
                self.kind, self.c_choices)

    def build_problem(self, seed: int, dx: float, dt: float) -> ProblemInstance:
        grid = Grid.for_time(self.x_lo, self.x_hi, dx, dt, self.T)
        if self.kind == "forcing":
            forcing = sample_forcing(seed, self.x_hi - self.x_lo)
            return ProblemInstance(grid, self.flux, lambda x: np.zeros_like(x),
                                   self.eta, forcing)
        u0 = sample_initial_condition(seed, self.c_choices)
        return ProblemInstance(grid, self.flux, u0, self.eta, None)


class ReferenceStore:
    """Fine WENO/RK4 references restricted onto coarse grids, cached in
    memory and optionally persisted under ``cache_dir``."""

    def __init__(self, cache_dir: Optional[str] = None):
        self.cache_dir = cache_dir
        self._restricted: Dict[tuple, np.ndarray] = {}

    def _stem(self, setting: EvalSetting, seed: int) -> str:
        import hashlib
        h = hashlib.sha256(repr((setting.key(), seed)).encode()).hexdigest()[:16]
        return f"{self.cache_dir}/ref_{h}"

    def fine(self, setting: EvalSetting, seed: int) -> ReferenceSolution:
        if self.cache_dir:
            import os
            stem = self._stem(setting, seed)
            if os.path.exists(stem + ".json"):
                return load_reference(stem)
        # the coarse grid passed to generate_reference only fixes domain and T
        ref = generate_reference(setting.build_problem(
            seed, _any_coarse_dx(setting), _any_coarse_dt(setting)))
        ref.meta.update({"flux": setting.flux.tag, "seed": seed, "eta": setting.eta,
                         "kind": setting.kind})
        if self.cache_dir:
            import os
            os.makedirs(self.cache_dir, exist_ok=True)
            save_reference(ref, self._stem(setting, seed))
        return ref

    def restricted(self, setting: EvalSetting, seed: int,
                   grids: Sequence[Tuple[float, float]]) -> Dict[tuple, np.ndarray]:
        missing = [g for g in grids
                   if (setting.key(), seed, g) not in self._restricted]
        if missing:
            ref = self.fine(setting, seed)
            for dx, dt in missing:
                coarse = Grid.for_time(setting.x_lo, setting.x_hi, dx, dt, setting.T)
                self._restricted[(setting.key(), seed, (dx, dt))] = ref.restrict(coarse)
        return {g: self._restricted[(setting.key(), seed, g)] for g in grids}


def _any_coarse_dx(setting: EvalSetting) -> float:
    return 0.01 * (setting.x_hi - setting.x_lo)


def _any_coarse_dt(setting: EvalSetting) -> float:
    return 0.001 * (setting.x_hi - setting.x_lo)


def solve_with_method(method: str, problem: ProblemInstance,
                      actor: Optional[mlp.MlpParams] = None,
                      integrator: str = "rk4"):
    """Run one instance with 'weno' or a checkpointed policy ('rl'/'sl')."""
    if method == "weno":
        return weno.weno_solve(problem, integrator=integrator)
    if actor is None:
        raise ConfigurationError(f"method {method!r} needs a checkpointed actor")
    return env_mod.policy_solve(mlp.ActorPolicy(actor), problem, integrator=integrator)


@dataclass
class ErrorRecord:
    method: str
    dx: float
    dt: float
    flux: str
    eta: float
    seed: int
    rel_error: float            # nan unless status == "ok"
    status: str                 # ok | cfl | blowup

    @property
    def blowup(self) -> bool:
        return self.status == "blowup"


def error_table(methods: Dict[str, Optional[mlp.MlpParams]], setting: EvalSetting,
                grids: Sequence[Tuple[float, float]], seeds: Sequence[int],
                store: ReferenceStore, integrator: str = "rk4",
                workers: int = 1) -> tuple:
    """Per-seed error records plus (dx, dt, method) aggregate rows.

    CFL-rejected runs are recorded with status 'cfl' and shown as '-' when a
    whole cell is rejected; blow-ups are recorded, never dropped.
    """
    refs = {seed: store.restricted(setting, seed, grids) for seed in seeds}

    def run_one(task):
        method, actor, (dx, dt), seed = task
        problem = setting.build_problem(seed, dx, dt)
        try:
            traj = solve_with_method(method, problem, actor, integrator)
            err = relative_error(traj.values(), refs[seed][(dx, dt)])
            return ErrorRecord(method, dx, dt, setting.flux.tag, setting.eta,
                               seed, err, "ok")
        except CflViolationError:
            return ErrorRecord(method, dx, dt, setting.flux.tag, setting.eta,
                               seed, float("nan"), "cfl")
        except BlowUpError:
            return ErrorRecord(method, dx, dt, setting.flux.tag, setting.eta,
                               seed, float("nan"), "blowup")

    tasks = [(m, a, g, s) for m, a in methods.items() for g in grids for s in seeds]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_one, tasks))
    else:
        records = [run_one(t) for t in tasks]

    rows = []
    for dx, dt in grids:
        for method in methods:
            cell = [r for r in records
                    if r.method == method and r.dx == dx and r.dt == dt]
            if not cell:
                continue
            ok = [r.rel_error for r in cell if r.status == "ok"]
            n_cfl = sum(r.status == "cfl" for r in cell)
            n_blow = sum(r.status == "blowup" for r in cell)
            if ok:
                mean, std = float(np.mean(ok)), float(np.std(ok))
                display = f"{mean:.6g} ({std:.6g})"
            else:
                mean, std = float("nan"), float("nan")
                display = "-" if n_cfl >= n_blow and n_cfl > 0 else "nan"
            rows.append({"dx": dx, "dt": dt, "method": method, "n_ok": len(ok),
                         "n_cfl": n_cfl, "n_blowup": n_blow, "mean": mean,
                         "std": std, "cell": display})
    return records, rows


# ---------------------------------------------------------------------------
# Region analysis


def classify_regions(ref_values: np.ndarray, dx: float, theta: float = 10.0,
                     halo: int = 2) -> np.ndarray:
    """(N+1, J) boolean mask, True near singularities: the centered reference
    gradient exceeds ``theta`` within ``halo`` cells."""
    if theta <= 0 or halo < 0:
        raise ConfigurationError("theta must be positive and halo nonnegative")
    u = np.asarray(ref_values, dtype=float)
    steep = np.abs(np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2.0 * dx) > theta
    out = steep.copy()
    for k in range(1, halo + 1):
        out |= np.roll(steep, k, axis=1)
        out |= np.roll(steep, -k, axis=1)
    return out


def error_cdf_by_region(traj_values: np.ndarray, ref_values: np.ndarray,
                        singular_mask: np.ndarray,
                        log_floor: float = 1e-16) -> Dict[str, np.ndarray]:
    """Sorted per-point absolute errors with cumulative counts, split by
    region; column 0 is log10(error) (floored), column 1 the count."""
    err = np.abs(np.asarray(traj_values) - np.asarray(ref_values))
    out = {}
    for name, mask in (("smooth", ~singular_mask), ("singular", singular_mask)):
        e = np.sort(err[mask])
        logs = np.log10(np.maximum(e, log_floor))
        out[name] = np.column_stack([logs, np.arange(1, len(e) + 1, dtype=float)])
    return out


# ---------------------------------------------------------------------------
# Weight statistics


@dataclass
class WeightSample:
    state: np.ndarray
    rl_weights: np.ndarray
    weno_weights: np.ndarray
    singular: bool


def collect_interface_states(traj_values: np.ndarray, flux: FluxFunction,
                             singular_mask: Optional[np.ndarray] = None) -> tuple:
    """Stack interface states over all acted-on steps n = 0..N-1; optional
    per-state singular tags (an interface is singular if either adjacent cell
    is)."""
    states, tags = [], []
    U = np.asarray(traj_values, dtype=float)
    for n in range(U.shape[0] - 1):
        s = env_mod.interface_states(U[n], flux)
        states.append(s)
        if singular_mask is not None:
            m = singular_mask[n]
            tags.append(m | np.roll(m, -1))
    return (np.concatenate(states),
            np.concatenate(tags) if singular_mask is not None else None)


def weight_statistics(actor: mlp.MlpParams, states: np.ndarray,
                      singular_tags: Optional[np.ndarray] = None) -> List[dict]:
    """Per-slot mean/std of the policy's and classical WENO's weights over a
    state corpus, split by region when tags are given."""
    if len(states) == 0:
        raise ConfigurationError("empty state corpus")
    logits, _ = mlp.forward(actor, states)
    rl_w = mlp.softmax_head(logits)
    weno_w = weno.weno_weights_batch(states[:, :6], states[:, 6] >= 0.0)
    groups = {"all": np.ones(len(states), dtype=bool)}
    if singular_tags is not None:
        groups["smooth"] = ~singular_tags
        groups["singular"] = singular_tags
    rows = []
    for region, mask in groups.items():
        if not mask.any():
            continue
        for slot in range(4):
            rows.append({
                "region": region, "slot": slot, "count": int(mask.sum()),
                "rl_mean": float(rl_w[mask, slot].mean()),
                "rl_std": float(rl_w[mask, slot].std()),
                "weno_mean": float(weno_w[mask, slot].mean()),
                "weno_std": float(weno_w[mask, slot].std()),
            })
    return rows


def excluded_direction_mean(actor: mlp.MlpParams, states: np.ndarray,
                            roe_threshold: float = 0.5) -> float:
    """Mean policy weight on the downwind-excluded slot over states with
    |Roe speed| above the threshold."""
    roe = states[:, 6]
    mask = np.abs(roe) > roe_threshold
    if not mask.any():
        raise ConfigurationError("no states beyond the Roe threshold")
    logits, _ = mlp.forward(actor, states[mask])
    w = mlp.softmax_head(logits)
    excluded = np.where(roe[mask] >= 0.0, w[:, 3], w[:, 0])
    return float(excluded.mean())


# ---------------------------------------------------------------------------
# Timing benchmark


def benchmark_problem(dx: float, dt: float, x_lo: float = -1.0, x_hi: float = 1.0,
                      T: float = 0.8) -> ProblemInstance:
    """u0(x) = 1 + cos(6 pi x), flux u^2, T = 0.8."""
    from .core import flux_by_tag
    grid = Grid.for_time(x_lo, x_hi, dx, dt, T)
    return ProblemInstance(grid, flux_by_tag("u2"),
                           lambda x: 1.0 + np.cos(6.0 * np.pi * x))


def timing_benchmark(method: str, grids: Sequence[Tuple[float, float]],
                     repetitions: int = 20,
                     actor: Optional[mlp.MlpParams] = None) -> List[dict]:
    """Mean wall-clock seconds per grid for repeated full solves, sequential,
    repetition order pinned."""
    if repetitions <= 0:
        raise ConfigurationError("repetitions must be positive")
    rows = []
    for dx, dt in grids:
        problem = benchmark_problem(dx, dt)
        t0 = time.perf_counter()
        for _ in range(repetitions):
            solve_with_method(method, problem, actor, integrator="rk4")
        mean_s = (time.perf_counter() - t0) / repetitions
        rows.append({"dx": dx, "dt": dt, "method": method,
                     "mean_seconds": mean_s, "repetitions": repetitions})
    return rows


# ---------------------------------------------------------------------------
# CSV + sidecar output


def write_csv(path: str, header: Sequence[str], rows: Sequence[dict],
              meta: Optional[dict] = None) -> None:
    """Write rows (dicts) under a fixed header; meta goes to <path>.json."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[h]) for h in header) + "\n")
    if meta is not None:
        sidecar = {"artifact_version": ARTIFACT_VERSION}
        sidecar.update(meta)
        with open(path + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True, default=str)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)
