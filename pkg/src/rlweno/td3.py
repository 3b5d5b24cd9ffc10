"""Twin-delayed deterministic policy-gradient training of the flux-weight
actor: replay buffer, twin critics with target smoothing, delayed actor
updates, soft target updates, Adam throughout.  All from-scratch numpy on the
explicit-backprop networks in ``mlp``.
"""

import os
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import env as env_mod
from . import mlp
from .core import BlowUpError, ConfigurationError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingAbortError(RuntimeError):
    """Training aborted (non-finite loss or persistent blow-ups)."""


class ReplayBuffer:
    """Fixed-capacity FIFO ring over transitions, uniform sampling."""

    def __init__(self, capacity: int, state_dim: int = 14, action_dim: int = 8):
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, state_dim))
        self.dones = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self.insert_count = 0

    def push(self, transition: env_mod.Transition) -> None:
        self.push_batch(transition.state[None], transition.action[None],
                        np.array([transition.reward]), transition.next_state[None],
                        np.array([transition.done]))

    def push_batch(self, states, actions, rewards, next_states, dones) -> None:
        n = len(rewards)
        idx = (self.insert_count + np.arange(n)) % self.capacity
        self.states[idx] = states
        self.actions[idx] = actions
        self.rewards[idx] = rewards
        self.next_states[idx] = next_states
        self.dones[idx] = dones
        self.insert_count += n
        self.size = min(self.size + n, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int) -> tuple:
        idx = rng.integers(0, self.size, batch_size)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.dones[idx])


@dataclass
class Td3Config:
    gamma: float = 0.99
    tau: float = 0.005
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    batch_size: int = 256
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    exploration_noise: float = 0.1
    buffer_capacity: int = 1_000_000
    total_steps: int = 50_000          # environment steps
    warmup_transitions: int = 5_000    # uniform-random simplex actions until then
    updates_per_step: int = 1
    eval_every_episodes: int = 10
    max_consecutive_blowups: int = 500

    def validate(self) -> List[str]:
        errs = []
        if not 0.0 <= self.gamma < 1.0:
            errs.append("gamma must be in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            errs.append("tau must be in (0, 1]")
        if self.policy_delay < 1:
            errs.append("policy_delay must be >= 1")
        if self.batch_size < 1:
            errs.append("batch_size must be >= 1")
        return errs


class AdamState:
    def __init__(self, params: mlp.MlpParams):
        self.m_w = [np.zeros_like(w) for w in params.weights]
        self.v_w = [np.zeros_like(w) for w in params.weights]
        self.m_b = [np.zeros_like(b) for b in params.biases]
        self.v_b = [np.zeros_like(b) for b in params.biases]
        self.t = 0


def adam_step(params: mlp.MlpParams, grads: mlp.GradientSet, state: AdamState, lr: float) -> None:
    state.t += 1
    c1 = 1.0 - ADAM_BETA1 ** state.t
    c2 = 1.0 - ADAM_BETA2 ** state.t
    for w, g, m, v in zip(params.weights, grads.d_weights, state.m_w, state.v_w):
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * g * g
        w -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    for b, g, m, v in zip(params.biases, grads.d_biases, state.m_b, state.v_b):
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * g * g
        b -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def soft_update(online: mlp.MlpParams, target: mlp.MlpParams, tau: float) -> None:
    for wt, wo in zip(target.weights, online.weights):
        wt *= 1.0 - tau
        wt += tau * wo
    for bt, bo in zip(target.biases, online.biases):
        bt *= 1.0 - tau
        bt += tau * bo


@dataclass
class Td3State:
    actor: mlp.MlpParams
    critic1: mlp.MlpParams
    critic2: mlp.MlpParams
    target_actor: mlp.MlpParams
    target_critic1: mlp.MlpParams
    target_critic2: mlp.MlpParams
    adam_actor: AdamState
    adam_critic1: AdamState
    adam_critic2: AdamState
    noise_rng: np.random.Generator
    buffer_rng: np.random.Generator
    critic_updates: int = 0
    actor_updates: int = 0
    env_steps: int = 0

    @staticmethod
    def initialize(init_seed: int, noise_seed: int, buffer_seed: int) -> "Td3State":
        sa, sc1, sc2 = np.random.SeedSequence(init_seed).spawn(3)
        actor = mlp.init_params(np.random.default_rng(sa), mlp.ACTOR_SIZES)
        critic1 = mlp.init_params(np.random.default_rng(sc1), mlp.CRITIC_SIZES)
        critic2 = mlp.init_params(np.random.default_rng(sc2), mlp.CRITIC_SIZES)
        return Td3State(
            actor=actor, critic1=critic1, critic2=critic2,
            target_actor=actor.copy(), target_critic1=critic1.copy(),
            target_critic2=critic2.copy(),
            adam_actor=AdamState(actor), adam_critic1=AdamState(critic1),
            adam_critic2=AdamState(critic2),
            noise_rng=np.random.default_rng(noise_seed),
            buffer_rng=np.random.default_rng(buffer_seed),
        )


def _critic_value(params: mlp.MlpParams, states: np.ndarray, actions: np.ndarray) -> tuple:
    out, cache = mlp.forward(params, np.concatenate([states, actions], axis=1))
    return out[:, 0], cache


def _target_actions(state: Td3State, next_states: np.ndarray, cfg: Td3Config) -> np.ndarray:
    halves = next_states.reshape(-1, 7)
    logits, _ = mlp.forward(state.target_actor, halves)
    noise = np.clip(state.noise_rng.normal(0.0, cfg.policy_noise, logits.shape),
                    -cfg.noise_clip, cfg.noise_clip)
    return mlp.softmax_head(logits + noise).reshape(-1, 8)


def critic_target(batch: tuple, state: Td3State, cfg: Td3Config) -> np.ndarray:
    """y = r + (1 - done) * gamma * min(Q1', Q2')(s', a~') with smoothed
    target actions."""
    _, _, rewards, next_states, dones = batch
    a_next = _target_actions(state, next_states, cfg)
    q1, _ = _critic_value(state.target_critic1, next_states, a_next)
    q2, _ = _critic_value(state.target_critic2, next_states, a_next)
    return rewards + (~dones) * cfg.gamma * np.minimum(q1, q2)


def update_critics(state: Td3State, batch: tuple, cfg: Td3Config) -> float:
    """One Adam step on both critics' MSE against the shared target; returns
    the pre-step combined loss."""
    states, actions, _, _, _ = batch
    y = critic_target(batch, state, cfg)
    total = 0.0
    for params, adam in ((state.critic1, state.adam_critic1),
                         (state.critic2, state.adam_critic2)):
        pred, cache = _critic_value(params, states, actions)
        err = pred - y
        total += float(np.mean(err * err))
        grads, _ = mlp.backward(params, cache, (2.0 * err / len(err))[:, None])
        adam_step(params, grads, adam, cfg.critic_lr)
    if not np.isfinite(total):
        raise TrainingAbortError(f"non-finite critic loss {total}")
    state.critic_updates += 1
    return total


def update_actor_and_targets(state: Td3State, batch: tuple, cfg: Td3Config) -> None:
    """Ascend Q1(s, actor(s)), then soft-update all three targets."""
    states = batch[0]
    halves = states.reshape(-1, 7)
    logits, actor_cache = mlp.forward(state.actor, halves)
    w = mlp.softmax_head(logits)
    actions = w.reshape(-1, 8)
    q, critic_cache = _critic_value(state.critic1, states, actions)
    # minimize -mean(q)
    grad_q = np.full((len(q), 1), -1.0 / len(q))
    _, grad_in = mlp.backward(state.critic1, critic_cache, grad_q)
    grad_actions = grad_in[:, 14:]
    grad_logits = mlp.softmax_backward(w, grad_actions.reshape(-1, 4))
    actor_grads, _ = mlp.backward(state.actor, actor_cache, grad_logits)
    adam_step(state.actor, actor_grads, state.adam_actor, cfg.actor_lr)
    state.actor_updates += 1
    soft_update(state.actor, state.target_actor, cfg.tau)
    soft_update(state.critic1, state.target_critic1, cfg.tau)
    soft_update(state.critic2, state.target_critic2, cfg.tau)


def train_step(state: Td3State, buffer: ReplayBuffer, cfg: Td3Config) -> float:
    """One critic update plus the delayed actor/target update."""
    loss = update_critics(state, buffer.sample(state.buffer_rng, cfg.batch_size), cfg)
    if state.critic_updates % cfg.policy_delay == 0:
        update_actor_and_targets(state, buffer.sample(state.buffer_rng, cfg.batch_size), cfg)
    return loss


@dataclass
class TrainLogRow:
    episode: int
    steps: int
    mean_reward: float
    eval_rel_error: Optional[float]
    wall_time: float


def evaluate_policy(actor: mlp.MlpParams, eval_set: list) -> float:
    """Mean relative error of the noise-free policy (RK4) over held-out
    (problem, restricted reference) pairs; blow-ups count as +inf."""
    from .evaluate import relative_error

    policy = mlp.ActorPolicy(actor)
    errs = []
    for problem, ref in eval_set:
        try:
            traj = env_mod.policy_solve(policy, problem, integrator="rk4")
            errs.append(relative_error(traj.values(), ref))
        except Exception:
            errs.append(np.inf)
    return float(np.mean(errs))


def train(problem_sampler: Callable[[int], tuple], cfg: Td3Config,
          init_seed: int = 0, noise_seed: int = 1, buffer_seed: int = 2,
          eval_set: Optional[list] = None, out_dir: Optional[str] = None,
          verbose: bool = False) -> tuple:
    """Run TD3 over episodes drawn from ``problem_sampler(episode) ->
    (problem, restricted reference values)``.

    Episodes step with Euler; transitions are trained on after every
    environment step once warmup ends.  Returns (best actor params, log rows);
    with ``out_dir`` also writes best/last checkpoints and the CSV log.
    """
    errs = cfg.validate()
    if errs:
        raise ConfigurationError("; ".join(errs))
    state = Td3State.initialize(init_seed, noise_seed, buffer_seed)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    random_policy = env_mod.UniformRandomPolicy()
    log: List[TrainLogRow] = []
    best = (np.inf, state.actor.copy())
    episode = 0
    consecutive_blowups = 0
    t0 = time.perf_counter()

    while state.env_steps < cfg.total_steps:
        problem, ref_values = problem_sampler(episode)
        grid = problem.grid
        field = problem.initial_field()
        states = env_mod.interface_states(field.values, problem.flux)
        rewards_sum, blown = 0.0, False
        steps_done = 0
        for n in range(grid.n_steps):
            warm = buffer.insert_count < cfg.warmup_transitions
            if warm:
                w = random_policy.weights(states, rng=state.noise_rng)
            else:
                w = mlp.ActorPolicy(state.actor).weights(
                    states, rng=state.noise_rng, noise_std=cfg.exploration_noise)
            cells = env_mod.cell_states(states)
            cell_actions = np.concatenate([np.roll(w, 1, axis=0), w], axis=1)
            try:
                field = env_mod.step_with_interface_weights(
                    field, w, problem, "euler", t=n * grid.dt)
                with np.errstate(over="ignore", invalid="ignore"):
                    next_states = env_mod.interface_states(field.values, problem.flux)
                if not np.all(np.isfinite(next_states)):
                    raise BlowUpError("flux overflow in next state")
            except BlowUpError:
                r = np.full(grid.J, env_mod.BLOWUP_REWARD)
                buffer.push_batch(cells, cell_actions, r, cells.copy(),
                                  np.ones(grid.J, dtype=bool))
                rewards_sum += r.sum()
                blown = True
                steps_done = n + 1
                break
            r = env_mod.rewards_batch(field.values, ref_values[n + 1])
            buffer.push_batch(cells, cell_actions, r,
                              env_mod.cell_states(next_states),
                              np.full(grid.J, n == grid.n_steps - 1))
            rewards_sum += r.sum()
            states = next_states
            state.env_steps += 1
            steps_done = n + 1
            if not warm and buffer.size >= cfg.batch_size:
                for _ in range(cfg.updates_per_step):
                    train_step(state, buffer, cfg)
            if state.env_steps >= cfg.total_steps:
                break

        consecutive_blowups = consecutive_blowups + 1 if blown else 0
        if consecutive_blowups > cfg.max_consecutive_blowups:
            raise TrainingAbortError(
                f"{consecutive_blowups} consecutive blow-up episodes")
        episode += 1
        eval_err = None
        if eval_set and (episode % cfg.eval_every_episodes == 0
                         or state.env_steps >= cfg.total_steps):
            eval_err = evaluate_policy(state.actor, eval_set)
            if eval_err < best[0]:
                best = (eval_err, state.actor.copy())
                if out_dir:
                    mlp.save_checkpoint(os.path.join(out_dir, "actor_best.json"),
                                        state.actor, rng_seed=init_seed,
                                        train_step=state.critic_updates, method="rl",
                                        extra={"eval_rel_error": eval_err})
        mean_r = rewards_sum / max(1, steps_done * grid.J)
        log.append(TrainLogRow(episode, steps_done, mean_r, eval_err,
                               time.perf_counter() - t0))
        if verbose:
            ev = f"{eval_err:.4f}" if eval_err is not None else "-"
            print(f"ep {episode:4d} steps {steps_done:4d} env {state.env_steps:6d} "
                  f"mean_r {mean_r:+.3e} eval {ev} blown {blown}", flush=True)

    best_actor = best[1] if np.isfinite(best[0]) else state.actor
    if out_dir:
        mlp.save_checkpoint(os.path.join(out_dir, "actor_last.json"), state.actor,
                            rng_seed=init_seed, train_step=state.critic_updates,
                            method="rl")
        if not os.path.exists(os.path.join(out_dir, "actor_best.json")):
            mlp.save_checkpoint(os.path.join(out_dir, "actor_best.json"), best_actor,
                                rng_seed=init_seed, train_step=state.critic_updates,
                                method="rl")
        write_log_csv(os.path.join(out_dir, "train_log.csv"), log)
    return best_actor, log


def write_log_csv(path: str, log: List[TrainLogRow]) -> None:
    with open(path, "w") as fh:
        fh.write("episode,steps,mean_reward,eval_rel_error,wall_time\n")
        for row in log:
            ev = "" if row.eval_rel_error is None else f"{row.eval_rel_error:.8g}"
            fh.write(f"{row.episode},{row.steps},{row.mean_reward:.8g},{ev},"
                     f"{row.wall_time:.3f}\n")
