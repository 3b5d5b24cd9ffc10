import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlweno import core, env, weno

BURGERS = core.flux_by_tag("burgers_half_u2")
LINEAR = core.flux_by_tag("linear_u")


def make_problem(seed=11, dx=0.04, dt=0.004, n_steps=50, c=(4, 6)):
    grid = core.Grid(-1.0, 1.0, dx, dt, n_steps)
    return core.ProblemInstance(grid, BURGERS, core.sample_initial_condition(seed, c))


def restricted_reference(problem):
    ref = core.generate_reference(problem)
    return ref.restrict(problem.grid)


def test_interface_state_constant_one():
    s = env.build_interface_state(np.ones(12), 4, BURGERS)
    assert np.allclose(s[:6], 0.5)
    assert np.isclose(s[6], 1.0)


def test_interface_state_zero_field_linear_flux():
    s = env.build_interface_state(np.zeros(12), 0, LINEAR)
    assert np.allclose(s[:6], 0.0)
    assert np.isclose(s[6], 1.0)


def test_interface_states_shared_between_neighbours():
    u = np.random.default_rng(0).normal(size=16)
    states = env.interface_states(u, BURGERS)
    cells = env.cell_states(states)
    for j in range(16):
        assert np.array_equal(cells[j, 7:], states[j])          # own right
        assert np.array_equal(cells[(j + 1) % 16, :7], states[j])  # neighbour's left


def test_interface_states_match_scalar_builder():
    u = np.random.default_rng(1).normal(size=10)
    states = env.interface_states(u, BURGERS)
    for j in range(10):
        assert np.allclose(states[j], env.build_interface_state(u, j, BURGERS))


def test_apply_action_weno_weights_reproduce_flux():
    u = np.random.default_rng(2).normal(size=6)
    f = BURGERS.value(u)
    positive = weno.roe_speed(u[2], u[3], BURGERS) >= 0
    w = weno.weno_weights(weno.smoothness_indicators(f, positive), positive)
    c = weno.candidate_fluxes(f)
    assert np.isclose(env.apply_action(w, c), weno.weno_interface_flux(u, BURGERS))


def test_apply_action_constant_candidates():
    assert np.isclose(env.apply_action(np.array([0.4, 0.3, 0.2, 0.1]),
                                       np.full(4, 2.5)), 2.5)


def test_apply_action_one_hot():
    c = np.array([1.0, 2.0, 3.0, 4.0])
    assert env.apply_action(np.array([1.0, 0, 0, 0]), c) == 1.0


def test_apply_action_rejects_off_simplex():
    with pytest.raises(env.ActionContractError):
        env.apply_action(np.array([0.5, 0.5, 0.5, -0.5]), np.ones(4))
    with pytest.raises(env.ActionContractError):
        env.apply_action(np.array([0.3, 0.3, 0.3, 0.3]), np.ones(4))


def test_reward_examples():
    assert np.isclose(env.reward(np.array([0.1, -0.3, 0.2, 0, 0, 0, 0])), -0.3)
    assert env.reward(np.zeros(7)) == 0.0


@given(st.permutations(list(range(7))))
def test_reward_permutation_invariant(perm):
    e = np.array([0.05, -0.2, 0.0, 0.11, -0.07, 0.3, -0.3])
    assert env.reward(e) == env.reward(e[list(perm)])


def test_rewards_batch_matches_scalar():
    rng = np.random.default_rng(3)
    u, ref = rng.normal(size=20), rng.normal(size=20)
    r = env.rewards_batch(u, ref)
    err = u - ref
    for j in range(20):
        window = err[(j + np.arange(-3, 4)) % 20]
        assert np.isclose(r[j], env.reward(window))


def test_env_step_with_weno_actions_reduces_to_solver():
    problem = make_problem(n_steps=1)
    ref = restricted_reference(problem)
    field = problem.initial_field()
    states = env.interface_states(field.values, BURGERS)
    w = env.WenoWeightPolicy().weights(states)
    actions = np.concatenate([np.roll(w, 1, axis=0), w], axis=1)
    nxt, rewards = env.env_step(field, actions, problem, ref[1], integrator="euler")
    expected = weno.weno_solve(problem, integrator="euler")
    assert np.allclose(nxt.values, expected[1].values, atol=1e-14)
    assert rewards.shape == (problem.grid.J,)
    assert np.all(rewards <= 0.0)


def test_env_step_rejects_mismatched_blocks():
    problem = make_problem(n_steps=1)
    field = problem.initial_field()
    J = problem.grid.J
    actions = np.tile([1.0, 0, 0, 0, 0, 1.0, 0, 0], (J, 1))
    with pytest.raises(env.ActionContractError):
        env.env_step(field, actions, problem, np.zeros(J))


def test_env_step_constant_exact_solution_zero_rewards():
    grid = core.Grid(-1.0, 1.0, 0.04, 0.004, 5)
    problem = core.ProblemInstance(grid, BURGERS, lambda x: np.full_like(x, 0.8))
    field = problem.initial_field()
    states = env.interface_states(field.values, BURGERS)
    w = env.WenoWeightPolicy().weights(states)
    actions = np.concatenate([np.roll(w, 1, axis=0), w], axis=1)
    nxt, rewards = env.env_step(field, actions, problem,
                                np.full(grid.J, 0.8), integrator="euler")
    assert np.allclose(rewards, 0.0, atol=1e-13)


def test_mass_conserved_under_random_policy():
    grid = core.Grid(-1.0, 1.0, 0.02, 0.001, 500)
    problem = core.ProblemInstance(grid, BURGERS,
                                   lambda x: 0.5 + 0.25 * np.sin(2 * np.pi * x))
    rng = np.random.default_rng(7)
    policy = env.UniformRandomPolicy()
    field = problem.initial_field()
    m0 = core.total_mass(field.values, grid.dx)
    for n in range(grid.n_steps):
        w = policy.weights(env.interface_states(field.values, BURGERS), rng=rng)
        field = env.step_with_interface_weights(field, w, problem, "euler")
    assert abs(core.total_mass(field.values, grid.dx) - m0) <= 1e-10 * (1 + abs(m0))


def test_rollout_counts_and_done_flags():
    problem = make_problem(n_steps=20)
    ref = restricted_reference(problem)
    traj, batch = env.rollout(env.WenoWeightPolicy(), problem, ref)
    J, N = problem.grid.J, problem.grid.n_steps
    assert len(batch) == N * J
    assert len(traj) == N + 1
    assert not batch.dones[:-J].any()
    assert batch.dones[-J:].all()
    assert np.all(batch.rewards <= 0.0)


def test_rollout_weno_oracle_matches_solver():
    problem = make_problem(n_steps=100)
    ref = restricted_reference(problem)
    traj, _ = env.rollout(env.WenoWeightPolicy(), problem, ref)
    expected = weno.weno_solve(problem, integrator="euler")
    dev = np.abs(traj.values() - expected.values()).max()
    assert dev <= 1e-12


def test_rollout_deterministic_given_seed():
    problem = make_problem(n_steps=10)
    ref = restricted_reference(problem)
    outs = []
    for _ in range(2):
        rng = np.random.default_rng(123)
        traj, batch = env.rollout(env.UniformRandomPolicy(), problem, ref, rng=rng)
        outs.append((traj.values(), batch.actions.copy()))
    assert np.array_equal(outs[0][0], outs[1][0])
    assert np.array_equal(outs[0][1], outs[1][1])


class DownwindPolicy:
    def weights(self, states, rng=None, noise_std=0.0):
        w = np.zeros((len(states), 4))
        pos = states[:, 6] >= 0
        w[pos, 3] = 1.0
        w[~pos, 0] = 1.0
        return w


def test_rollout_blowup_truncates_with_penalty():
    grid = core.Grid(-1.0, 1.0, 0.02, 0.008, 400)
    problem = core.ProblemInstance(grid, BURGERS,
                                   core.sample_initial_condition(3, [8]))
    ref = np.zeros((grid.n_steps + 1, grid.J))  # placeholder magnitudes
    traj, batch = env.rollout(DownwindPolicy(), problem, ref)
    J = grid.J
    assert len(traj) < grid.n_steps + 1
    assert batch.dones[-J:].all()
    assert np.all(batch.rewards[-J:] == env.BLOWUP_REWARD)
    assert np.all(np.isfinite(batch.next_states))


def test_policy_solve_weno_oracle_matches_weno_solve_rk4():
    problem = make_problem(n_steps=50)
    traj = env.policy_solve(env.WenoWeightPolicy(), problem, integrator="rk4")
    expected = weno.weno_solve(problem, integrator="rk4")
    assert np.abs(traj.values() - expected.values()).max() <= 1e-12


def test_transition_batch_indexing():
    problem = make_problem(n_steps=3)
    ref = restricted_reference(problem)
    _, batch = env.rollout(env.WenoWeightPolicy(), problem, ref)
    t = batch[5]
    assert isinstance(t, env.Transition)
    assert t.state.shape == (14,) and t.action.shape == (8,)
    assert isinstance(t.reward, float) and isinstance(t.done, bool)
