"""Supervised one-step baseline: regress the policy's single-step evolution
onto the restricted reference with windowed squared error, gradients flowing
through the flux combination and the Euler step only (candidate fluxes,
states, and reference values are constants; no gradient crosses time steps).

Each training step starts from the reference slice itself, so the policy is
fit on on-reference states; long-horizon drift is exactly what this baseline
cannot see, which is the behaviour the evaluation compares against.
"""

import os
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from . import env as env_mod
from . import mlp
from .core import BlowUpError, ConfigurationError, ProblemInstance, SolutionField, viscous_term
from .td3 import AdamState, TrainLogRow, adam_step, evaluate_policy, write_log_csv

WINDOW_HALO = env_mod.REWARD_HALO  # loss window j-3..j+3


@dataclass
class SlConfig:
    learning_rate: float = 3e-4
    iterations: int = 200              # training episodes
    batch_accum: int = 0               # cells per update; 0 = all cells of a step
    plateau_window: int = 20
    plateau_tol: float = 1e-3          # relative improvement below this = plateau
    stop_on_plateau: bool = True
    eval_every_episodes: int = 20

    def validate(self) -> List[str]:
        errs = []
        if self.learning_rate <= 0:
            errs.append("learning_rate must be positive")
        if self.iterations < 0:
            errs.append("iterations must be nonnegative")
        return errs


def _window_counts(J: int, cells: np.ndarray) -> np.ndarray:
    """counts[k] = how many of the given cells have k inside their 7-window."""
    m = np.zeros(J)
    m[cells] = 1.0
    return sum(np.roll(m, k) for k in range(-WINDOW_HALO, WINDOW_HALO + 1))


def _one_step(params: mlp.MlpParams, values: np.ndarray, problem: ProblemInstance,
              t: float) -> tuple:
    """Euler-evolve the full field with the policy's weights; returns
    (next values, per-interface weights, candidates, forward cache)."""
    from . import weno

    grid = problem.grid
    states = env_mod.interface_states(values, problem.flux)
    logits, cache = mlp.forward(params, states)
    w = mlp.softmax_head(logits)
    cands = weno.candidate_fluxes_batch(states[:, :6])
    fhat = weno.combine_candidates(w, cands)
    dudt = -(fhat - np.roll(fhat, 1)) / grid.dx
    if problem.eta:
        dudt = dudt + viscous_term(values, problem.eta, grid.dx)
    if problem.forcing is not None:
        dudt = dudt + problem.forcing(grid.nodes(), t)
    return values + grid.dt * dudt, w, cands, cache


def _loss_and_grads(params: mlp.MlpParams, values: np.ndarray, problem: ProblemInstance,
                    ref_next: np.ndarray, cells: np.ndarray, t: float) -> tuple:
    """Windowed squared-error loss summed over the given cells, with exact
    gradients through softmax, flux combination, and the Euler step."""
    grid = problem.grid
    with np.errstate(over="ignore", invalid="ignore"):
        u_next, w, cands, cache = _one_step(params, values, problem, t)
    if not np.all(np.isfinite(u_next)):
        raise BlowUpError("one-step evolution blew up")
    e = u_next - ref_next
    cnt = _window_counts(grid.J, cells)
    loss = float((cnt * e * e).sum())
    # dL/dfhat_i = 2 dt/dx (cnt_{i+1} e_{i+1} - cnt_i e_i), interface i = i+1/2
    ce = cnt * e
    g_fhat = 2.0 * grid.dt / grid.dx * (np.roll(ce, -1) - ce)
    g_logits = mlp.softmax_backward(w, g_fhat[:, None] * cands)
    grads, _ = mlp.backward(params, cache, g_logits)
    return loss, grads


def sl_step_loss(params: mlp.MlpParams, field: SolutionField, cell_index: int,
                 problem: ProblemInstance, ref_next: np.ndarray,
                 t: float = 0.0) -> tuple:
    """Loss and parameter gradients for one cell's 7-point window after a
    single Euler step from ``field``."""
    return _loss_and_grads(params, field.values, problem, ref_next,
                           np.array([cell_index % problem.grid.J]), t)


def sl_train(problem_sampler: Callable[[int], tuple], cfg: SlConfig,
             init_seed: int = 0, eval_set: Optional[list] = None,
             out_dir: Optional[str] = None, verbose: bool = False) -> tuple:
    """Iterate teacher-forced episodes of per-step regression.

    ``problem_sampler(episode) -> (problem, restricted reference values)``.
    Returns (best actor params, log rows); with ``out_dir`` also writes
    checkpoints (method tag "sl") and the CSV log.
    """
    errs = cfg.validate()
    if errs:
        raise ConfigurationError("; ".join(errs))
    params = mlp.init_params(np.random.default_rng(init_seed), mlp.ACTOR_SIZES)
    adam = AdamState(params)
    log: List[TrainLogRow] = []
    losses: List[float] = []
    best = (np.inf, params.copy())
    skipped = 0
    updates = 0
    t0 = time.perf_counter()
    plateaued = False

    for episode in range(cfg.iterations):
        problem, ref_values = problem_sampler(episode)
        grid = problem.grid
        chunk = grid.J if cfg.batch_accum <= 0 else cfg.batch_accum
        ep_loss, n_terms = 0.0, 0
        for n in range(grid.n_steps):
            values = ref_values[n]
            for start in range(0, grid.J, chunk):
                cells = np.arange(start, min(start + chunk, grid.J))
                try:
                    loss, grads = _loss_and_grads(params, values, problem,
                                                  ref_values[n + 1], cells,
                                                  n * grid.dt)
                except BlowUpError:
                    skipped += 1
                    continue
                adam_step(params, grads, adam, cfg.learning_rate)
                updates += 1
                ep_loss += loss
                n_terms += len(cells) * (2 * WINDOW_HALO + 1)
        mean_loss = ep_loss / max(1, n_terms)
        losses.append(mean_loss)
        eval_err = None
        if eval_set and ((episode + 1) % cfg.eval_every_episodes == 0
                         or episode == cfg.iterations - 1):
            eval_err = evaluate_policy(params, eval_set)
            if eval_err < best[0]:
                best = (eval_err, params.copy())
                if out_dir:
                    mlp.save_checkpoint(os.path.join(out_dir, "actor_best.json"),
                                        params, rng_seed=init_seed,
                                        train_step=updates, method="sl",
                                        extra={"eval_rel_error": eval_err})
        log.append(TrainLogRow(episode + 1, grid.n_steps, mean_loss, eval_err,
                               time.perf_counter() - t0))
        if verbose:
            ev = f"{eval_err:.4f}" if eval_err is not None else "-"
            print(f"sl ep {episode + 1:4d} loss {mean_loss:.3e} eval {ev}", flush=True)
        if detect_plateau(losses, cfg.plateau_window, cfg.plateau_tol):
            plateaued = True
            if cfg.stop_on_plateau:
                break

    best_params = best[1] if np.isfinite(best[0]) else params
    if out_dir:
        mlp.save_checkpoint(os.path.join(out_dir, "actor_last.json"), params,
                            rng_seed=init_seed, train_step=updates, method="sl")
        if not os.path.exists(os.path.join(out_dir, "actor_best.json")):
            mlp.save_checkpoint(os.path.join(out_dir, "actor_best.json"), best_params,
                                rng_seed=init_seed, train_step=updates, method="sl")
        write_log_csv(os.path.join(out_dir, "train_log.csv"), log)
    return best_params, log, plateaued


def detect_plateau(losses: List[float], window: int, tol: float) -> bool:
    """True when the trailing window improved by less than ``tol`` relative
    to the preceding window."""
    if len(losses) < 2 * window:
        return False
    prev = float(np.mean(losses[-2 * window:-window]))
    cur = float(np.mean(losses[-window:]))
    return prev <= 0 or (prev - cur) / abs(prev) < tol
