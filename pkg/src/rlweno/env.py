"""The solving procedure as a per-cell decision process.

At time n, cell j sees two 7-vectors: the flux window plus Roe speed of its
left interface j-1/2 and of its right interface j+1/2.  A policy maps each
interface state to four simplex weights on the WENO candidate fluxes; each
interface is evaluated exactly once and shared by the two adjacent cells, so
the scheme stays conservative no matter what the policy emits.  Rewards are
negated infinity norms of the local error against the restricted reference.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import weno
from .core import (BlowUpError, FluxFunction, ProblemInstance, SolutionField,
                   Trajectory, rhs_conservative, viscous_term)

SIMPLEX_TOL = 1e-9
BLOWUP_REWARD = -10.0
REWARD_HALO = 3  # reward window is j-3..j+3


class ActionContractError(ValueError):
    """Action weights violate the simplex constraint beyond tolerance."""


def build_interface_state(values: np.ndarray, interface: int, flux: FluxFunction) -> np.ndarray:
    """7-vector for interface j+1/2: (f_{j-2}, ..., f_{j+3}, roe_speed)."""
    u = np.asarray(values, dtype=float)
    J = len(u)
    idx = (interface + np.arange(-2, 4)) % J
    f = flux.value(u[idx])
    a = weno.roe_speed(u[interface % J], u[(interface + 1) % J], flux)
    return np.concatenate([f, [a]])


def interface_states(values: np.ndarray, flux: FluxFunction) -> np.ndarray:
    """(J, 7) states for all interfaces; row j is interface j+1/2."""
    f = flux.value(np.asarray(values, dtype=float))
    windows = weno.flux_windows(f)
    roe = weno.roe_speeds_batch(values, flux)
    return np.concatenate([windows, roe[:, None]], axis=1)


def cell_states(states: np.ndarray) -> np.ndarray:
    """(J, 14) per-cell states: cell j = (state of j-1/2, state of j+1/2)."""
    return np.concatenate([np.roll(states, 1, axis=0), states], axis=1)


def check_simplex(weights: np.ndarray, tol: float = SIMPLEX_TOL) -> None:
    w = np.asarray(weights, dtype=float)
    if np.any(w < -tol) or np.any(np.abs(w.sum(axis=-1) - 1.0) > tol):
        raise ActionContractError("weights must be nonnegative and sum to 1")


def apply_action(weights: np.ndarray, candidates: np.ndarray) -> float:
    """Convex combination of the four candidate fluxes at one interface."""
    check_simplex(weights)
    c = np.asarray(candidates, dtype=float)
    w = np.asarray(weights, dtype=float)
    return float(weno.combine_candidates(w, c))


def reward(window_errors: np.ndarray) -> float:
    """Negated infinity norm of the 7 windowed errors."""
    e = np.asarray(window_errors, dtype=float)
    if e.shape != (2 * REWARD_HALO + 1,):
        raise ValueError(f"expected {2 * REWARD_HALO + 1} window errors")
    return -float(np.max(np.abs(e)))


def rewards_batch(values: np.ndarray, ref_values: np.ndarray) -> np.ndarray:
    """Per-cell rewards -max|U_k - u_k| over k = j-3..j+3, periodic."""
    err = np.abs(np.asarray(values) - np.asarray(ref_values))
    stacked = np.stack([np.roll(err, -k) for k in range(-REWARD_HALO, REWARD_HALO + 1)])
    return -stacked.max(axis=0)


def _policy_flux_fn(problem: ProblemInstance, weights_fn: Callable[[np.ndarray], np.ndarray]):
    """Interface-flux closure: states -> policy weights -> combined flux."""
    flux = problem.flux

    def fn(values):
        states = interface_states(values, flux)
        w = weights_fn(states)
        cands = weno.candidate_fluxes_batch(states[:, :6])
        return weno.combine_candidates(w, cands)

    return fn


def step_with_interface_weights(field: SolutionField, interface_weights: np.ndarray,
                                problem: ProblemInstance, integrator: str = "euler",
                                t: float = 0.0) -> SolutionField:
    """Advance one step holding the given per-interface weights fixed across
    stages (training uses Euler, where one action is one step)."""
    from .core import STEPPERS

    check_simplex(interface_weights)
    flux = problem.flux
    grid = problem.grid
    x = grid.nodes()

    def rhs(values, time):
        f = flux.value(np.asarray(values, dtype=float))
        cands = weno.candidate_fluxes_batch(weno.flux_windows(f))
        dudt = rhs_conservative(weno.combine_candidates(interface_weights, cands), grid.dx)
        if problem.eta:
            dudt = dudt + viscous_term(values, problem.eta, grid.dx)
        if problem.forcing is not None:
            dudt = dudt + problem.forcing(x, time)
        return dudt

    with np.errstate(over="ignore", invalid="ignore"):
        return STEPPERS[integrator](field, rhs, grid.dt, t)


def env_step(field: SolutionField, cell_actions: np.ndarray, problem: ProblemInstance,
             ref_next: np.ndarray, integrator: str = "euler") -> tuple:
    """One environment transition from (J, 8) per-cell actions.

    The right 4-block of cell j and the left 4-block of cell j+1 refer to the
    same interface and must agree; the shared value is applied once.
    Returns (next_field, per-cell rewards).
    """
    actions = np.asarray(cell_actions, dtype=float)
    J = problem.grid.J
    if actions.shape != (J, 8):
        raise ActionContractError(f"expected ({J}, 8) cell actions")
    right = actions[:, 4:]
    left = actions[:, :4]
    if not np.allclose(left, np.roll(right, 1, axis=0), atol=SIMPLEX_TOL):
        raise ActionContractError("left/right blocks disagree on shared interfaces")
    nxt = step_with_interface_weights(field, right, problem, integrator,
                                      t=field.time_index * problem.grid.dt)
    return nxt, rewards_batch(nxt.values, ref_next)


@dataclass
class Transition:
    state: np.ndarray       # (14,)
    action: np.ndarray      # (8,)
    reward: float
    next_state: np.ndarray  # (14,)
    done: bool


class TransitionBatch:
    """Array-backed transition store emitted by rollouts (ascending j within
    each step, steps in order)."""

    def __init__(self, states, actions, rewards, next_states, dones):
        self.states = np.asarray(states, dtype=float).reshape(-1, 14)
        self.actions = np.asarray(actions, dtype=float).reshape(-1, 8)
        self.rewards = np.asarray(rewards, dtype=float).ravel()
        self.next_states = np.asarray(next_states, dtype=float).reshape(-1, 14)
        self.dones = np.asarray(dones, dtype=bool).ravel()

    def __len__(self):
        return len(self.rewards)

    def __getitem__(self, i) -> Transition:
        return Transition(self.states[i], self.actions[i], float(self.rewards[i]),
                          self.next_states[i], bool(self.dones[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @staticmethod
    def concatenate(batches):
        return TransitionBatch(
            np.concatenate([b.states for b in batches]),
            np.concatenate([b.actions for b in batches]),
            np.concatenate([b.rewards for b in batches]),
            np.concatenate([b.next_states for b in batches]),
            np.concatenate([b.dones for b in batches]),
        )


class WenoWeightPolicy:
    """Oracle emitting the classical WENO weights (reduction baseline)."""

    def weights(self, states: np.ndarray, rng=None, noise_std: float = 0.0) -> np.ndarray:
        positive = states[:, 6] >= 0.0
        return weno.weno_weights_batch(states[:, :6], positive)


class UniformRandomPolicy:
    """Uniformly random simplex weights (warmup exploration)."""

    def weights(self, states: np.ndarray, rng=None, noise_std: float = 0.0) -> np.ndarray:
        return rng.dirichlet(np.ones(4), size=len(states))


def rollout(policy, problem: ProblemInstance, ref_values: np.ndarray,
            integrator: str = "euler", rng=None, noise_std: float = 0.0,
            record_transitions: bool = True,
            n_steps: Optional[int] = None) -> tuple:
    """Run one episode; returns (Trajectory, TransitionBatch).

    ``ref_values`` is the reference restricted to the problem grid, rows
    0..n_steps.  A blow-up truncates the episode: the transitions of the
    failed step keep their states and actions, receive the blow-up penalty
    reward, a self-loop next state (masked by done), and done = True.
    Under RK4 the recorded action is the first-stage weight set.
    """
    grid = problem.grid
    N = grid.n_steps if n_steps is None else n_steps
    if ref_values.shape[0] < N + 1:
        raise ValueError("reference shorter than episode horizon")
    field = problem.initial_field()
    traj = Trajectory()
    traj.append(field)
    states_l, actions_l, rewards_l, next_l, dones_l = [], [], [], [], []

    states = interface_states(field.values, problem.flux)
    for n in range(N):
        w = policy.weights(states, rng=rng, noise_std=noise_std)
        cells = cell_states(states)
        cell_actions = np.concatenate([np.roll(w, 1, axis=0), w], axis=1)
        try:
            field = step_with_interface_weights(field, w, problem, integrator,
                                                t=n * grid.dt)
            with np.errstate(over="ignore", invalid="ignore"):
                next_states = interface_states(field.values, problem.flux)
            if not np.all(np.isfinite(next_states)):
                raise BlowUpError("flux overflow in next state")
        except BlowUpError:
            if record_transitions:
                states_l.append(cells)
                actions_l.append(cell_actions)
                rewards_l.append(np.full(grid.J, BLOWUP_REWARD))
                next_l.append(cells.copy())
                dones_l.append(np.ones(grid.J, dtype=bool))
            break
        if record_transitions:
            r = rewards_batch(field.values, ref_values[n + 1])
            states_l.append(cells)
            actions_l.append(cell_actions)
            rewards_l.append(r)
            next_l.append(cell_states(next_states))
            dones_l.append(np.full(grid.J, n == N - 1))
        traj.append(field)
        states = next_states

    if record_transitions and states_l:
        batch = TransitionBatch(np.concatenate(states_l), np.concatenate(actions_l),
                                np.concatenate(rewards_l), np.concatenate(next_l),
                                np.concatenate(dones_l))
    else:
        batch = TransitionBatch(np.empty((0, 14)), np.empty((0, 8)), np.empty(0),
                                np.empty((0, 14)), np.empty(0, dtype=bool))
    return traj, batch


def policy_solve(policy, problem: ProblemInstance, integrator: str = "rk4",
                 check_cfl: bool = True) -> Trajectory:
    """Deterministic full-horizon solve with a policy's weights (weights are
    recomputed from the current field inside every stage)."""
    from .core import evolve

    return evolve(problem, _policy_flux_fn(problem, lambda s: policy.weights(s)),
                  integrator=integrator, check_cfl=check_cfl)
