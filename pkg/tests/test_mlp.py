import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlweno import mlp


def flatten(params):
    return np.concatenate([a.ravel() for a in params.weights + params.biases])


def unflatten_into(params, vec):
    i = 0
    for a in params.weights + params.biases:
        a[...] = vec[i:i + a.size].reshape(a.shape)
        i += a.size


def fd_gradient(loss_fn, params, h=1e-5):
    base = flatten(params).copy()
    g = np.zeros_like(base)
    for k in range(len(base)):
        for sign in (1.0, -1.0):
            vec = base.copy()
            vec[k] += sign * h
            unflatten_into(params, vec)
            g[k] += sign * loss_fn(params)
    unflatten_into(params, base)
    return g / (2 * h)


def random_fixture(seed, head=False):
    """Small random net + input, resampled until pre-activations sit away
    from the ReLU kink so finite differences are trustworthy."""
    for attempt in range(100):
        rng = np.random.default_rng((seed, attempt))
        depth = rng.integers(2, 5)
        sizes = [int(rng.integers(2, 7)) for _ in range(depth + 1)]
        if head:
            sizes[-1] = 4
        params = mlp.init_params(rng, sizes)
        for b in params.biases:
            b[...] = rng.normal(0, 0.3, b.shape)
        x = rng.normal(0, 1.0, (int(rng.integers(1, 4)), sizes[0]))
        _, cache = mlp.forward(params, x)
        if min(np.abs(z).min() for z in cache.pre_acts) > 1e-3:
            return params, x, rng
    raise AssertionError("could not build a kink-safe fixture")


def test_init_deterministic_and_bounded():
    a = mlp.init_params(9, [7, 64, 4])
    b = mlp.init_params(9, [7, 64, 4])
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    for b_ in a.biases:
        assert np.all(b_ == 0.0)
    for (n_in, n_out), w in zip(((7, 64), (64, 4)), a.weights):
        assert np.abs(w).max() <= np.sqrt(6.0 / (n_in + n_out))


def test_forward_zero_params():
    params = mlp.init_params(0, [3, 5, 2])
    for w in params.weights:
        w[...] = 0.0
    out, _ = mlp.forward(params, np.array([1.0, -2.0, 3.0]))
    assert np.all(out == 0.0)


def test_forward_hand_computed():
    params = mlp.MlpParams(
        weights=[np.array([[1.0, 0.0], [0.0, -1.0]]), np.array([[2.0], [1.0]])],
        biases=[np.array([0.5, 0.0]), np.array([-1.0])],
    )
    # hidden = relu([x1 + 0.5, -x2]) ; out = 2 h1 + h2 - 1
    out, _ = mlp.forward(params, np.array([1.0, -3.0]))
    assert np.isclose(out[0], 2 * 1.5 + 3.0 - 1.0)


def test_forward_dimension_mismatch():
    params = mlp.init_params(0, [3, 4])
    with pytest.raises(ValueError):
        mlp.forward(params, np.zeros(5))


def test_softmax_examples():
    assert np.allclose(mlp.softmax_head(np.zeros(4)), 0.25)
    w = mlp.softmax_head(np.array([20.0, 0.0, 0.0, 0.0]))
    assert w[0] > 0.999
    big = mlp.softmax_head(np.array([1e6, 1e6, 0.0, 0.0]))
    assert np.isfinite(big).all()


@given(st.floats(min_value=-50, max_value=50))
def test_softmax_shift_invariance(c):
    z = np.array([0.3, -1.2, 2.0, 0.0])
    assert np.allclose(mlp.softmax_head(z), mlp.softmax_head(z + c), atol=1e-12)


def test_backward_zero_output_gradient():
    params, x, _ = random_fixture(0)
    _, cache = mlp.forward(params, x)
    grads, grad_in = mlp.backward(params, cache, np.zeros_like(cache.pre_acts[-1]))
    assert all(np.all(g == 0) for g in grads.d_weights + grads.d_biases)
    assert np.all(grad_in == 0)


def test_backward_matches_finite_differences():
    worst = 0.0
    for seed in range(20):
        params, x, rng = random_fixture(seed)
        v = rng.normal(size=(x.shape[0], params.layer_sizes[-1]))

        def loss(p):
            out, _ = mlp.forward(p, x)
            return float((v * out).sum())

        _, cache = mlp.forward(params, x)
        grads, _ = mlp.backward(params, cache, v)
        analytic = flatten(mlp.MlpParams(grads.d_weights, grads.d_biases))
        numeric = fd_gradient(loss, params)
        worst = max(worst, np.abs(analytic - numeric).max() / (1 + np.abs(numeric).max()))
    assert worst < 1e-5


def test_backward_through_softmax_matches_finite_differences():
    for seed in range(8):
        params, x, rng = random_fixture(seed + 100, head=True)
        v = rng.normal(size=(x.shape[0], 4))

        def loss(p):
            out, _ = mlp.forward(p, x)
            return float((v * mlp.softmax_head(out)).sum())

        out, cache = mlp.forward(params, x)
        w = mlp.softmax_head(out)
        grads, _ = mlp.backward(params, cache, mlp.softmax_backward(w, v))
        analytic = flatten(mlp.MlpParams(grads.d_weights, grads.d_biases))
        numeric = fd_gradient(loss, params)
        assert np.abs(analytic - numeric).max() <= 1e-5 * (1 + np.abs(numeric).max())


def test_input_gradient_matches_finite_differences():
    params, x, rng = random_fixture(5)
    v = rng.normal(size=(x.shape[0], params.layer_sizes[-1]))
    _, cache = mlp.forward(params, x)
    _, grad_in = mlp.backward(params, cache, v)
    h = 1e-6
    num = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        for sign in (1.0, -1.0):
            xp = x.copy()
            xp[idx] += sign * h
            out, _ = mlp.forward(params, xp)
            num[idx] += sign * float((v * out).sum())
    num /= 2 * h
    assert np.allclose(grad_in, num, atol=1e-5)


def test_scaling_one_first_layer_row_is_linear_downstream():
    # zero biases + nonnegative downstream weights keep every downstream
    # pre-activation nonnegative, so the output is linear in the row scale
    rng = np.random.default_rng(8)
    params = mlp.init_params(rng, [3, 5, 4, 2])
    for w in params.weights[1:]:
        w[...] = np.abs(w)
    x = rng.normal(size=3)

    def out_with_scale(alpha):
        p = params.copy()
        p.weights[0][:, 1] *= alpha
        return mlp.forward(p, x)[0]

    o0, o1, o2 = out_with_scale(0.0), out_with_scale(1.0), out_with_scale(2.0)
    assert np.allclose(o2 - o0, 2.0 * (o1 - o0), atol=1e-12)


def test_actor_act_symmetric_halves():
    params = mlp.init_params(4, mlp.ACTOR_SIZES)
    s = np.random.default_rng(0).normal(size=7)
    action = mlp.actor_act(params, np.concatenate([s, s]))
    assert np.allclose(action[:4], action[4:])


def test_actor_act_simplex_blocks():
    params = mlp.init_params(4, mlp.ACTOR_SIZES)
    states = np.random.default_rng(1).normal(size=(10, 14))
    actions = mlp.actor_act(params, states)
    assert actions.shape == (10, 8)
    for block in (actions[:, :4], actions[:, 4:]):
        assert np.all(block > 0)
        assert np.allclose(block.sum(axis=1), 1.0, atol=1e-9)


def test_actor_act_zero_params_uniform():
    params = mlp.init_params(4, [7, 8, 4])
    for w in params.weights:
        w[...] = 0.0
    action = mlp.actor_act(params, np.zeros(14))
    assert np.allclose(action, 0.25)


def test_actor_policy_noise_respects_simplex():
    params = mlp.init_params(4, mlp.ACTOR_SIZES)
    policy = mlp.ActorPolicy(params)
    states = np.random.default_rng(2).normal(size=(6, 7))
    w = policy.weights(states, rng=np.random.default_rng(3), noise_std=0.5)
    assert np.all(w > 0)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-9)


def test_checkpoint_round_trip(tmp_path):
    params = mlp.init_params(11, [7, 16, 4])
    path = str(tmp_path / "ck.json")
    mlp.save_checkpoint(path, params, rng_seed=11, train_step=33, method="sl")
    back, meta = mlp.load_checkpoint(path)
    for a, b in zip(params.weights + params.biases, back.weights + back.biases):
        assert np.array_equal(a, b)
    assert meta["method"] == "sl" and meta["train_step"] == 33
    assert meta["layer_sizes"] == [7, 16, 4]


def test_checkpoint_rejects_unknown_version(tmp_path):
    path = str(tmp_path / "ck.json")
    mlp.save_checkpoint(path, mlp.init_params(0, [2, 2]))
    blob = json.load(open(path))
    blob["format_version"] = 99
    json.dump(blob, open(path, "w"))
    with pytest.raises(ValueError):
        mlp.load_checkpoint(path)
