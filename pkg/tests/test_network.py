"""Trial network: init, evaluation, directional derivatives, checkpoints."""

import numpy as np
import pytest

from uzawa_transport import network as net
from uzawa_transport.errors import ContractViolation
from uzawa_transport.phase_space import PhasePoint


def test_init_deterministic_given_seed():
    a = net.init_params((4, 8, 1), seed=7)
    b = net.init_params((4, 8, 1), seed=7)
    assert np.array_equal(net.flatten(a), net.flatten(b))
    c = net.init_params((4, 8, 1), seed=8)
    assert not np.array_equal(net.flatten(a), net.flatten(c))


def test_param_counts():
    assert net.param_count((4, 8, 1)) == 49
    assert net.param_count((4, 16, 16, 1)) == 369
    assert net.init_params((4, 16, 16, 1)).n_params == 369


def test_no_hidden_layer_rejected():
    with pytest.raises(ContractViolation):
        net.init_params((4, 1))
    with pytest.raises(ContractViolation):
        net.init_params((4, 0, 1))
    with pytest.raises(ContractViolation):
        net.init_params((4, 8, 2))


def test_zero_params_give_zero_output():
    params = net.init_params((4, 8, 1), seed=0)
    zero = net.unflatten(np.zeros(params.n_params), params.widths)
    for theta in (0.0, 1.3, 5.0):
        assert net.evaluate(zero, PhasePoint(np.array([0.3, 0.8]), theta)) == 0.0


def test_eval_matches_hand_rolled_matrices():
    params = net.init_params((4, 5, 3, 1), seed=13)
    pt = PhasePoint(np.array([0.21, 0.77]), 2.3)
    v = np.array([0.21, 0.77, np.cos(2.3), np.sin(2.3)])
    a = v
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        a = np.tanh(W @ a + b)
    expected = float((params.weights[-1] @ a + params.biases[-1])[0])
    assert abs(net.evaluate(params, pt) - expected) <= 1e-14


def test_directional_derivative_finite_difference():
    params = net.init_params((4, 16, 16, 1), seed=3)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.uniform(0.1, 0.9, 2)
        theta = rng.uniform(0, 2 * np.pi)
        ang = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(ang), np.sin(ang)])
        pt = PhasePoint(x, theta)
        _, du = net.eval_with_spatial_directional(params, pt, d)
        h = 1e-5
        fd = (
            net.evaluate(params, PhasePoint(x + h * d, theta))
            - net.evaluate(params, PhasePoint(x - h * d, theta))
        ) / (2 * h)
        assert abs(du - fd) / max(abs(fd), 1e-12) <= 1e-6


def test_directional_antisymmetry():
    params = net.init_params((4, 8, 1), seed=4)
    pt = PhasePoint(np.array([0.4, 0.6]), 0.9)
    d = np.array([np.cos(0.2), np.sin(0.2)])
    _, du_fwd = net.eval_with_spatial_directional(params, pt, d)
    _, du_bwd = net.eval_with_spatial_directional(params, pt, -d)
    assert du_fwd == pytest.approx(-du_bwd, abs=1e-15)


def test_constant_output_network_has_zero_directional():
    params = net.init_params((4, 8, 1), seed=0)
    flat = np.zeros(params.n_params)
    flat[-1] = 3.7  # output bias only
    const = net.unflatten(flat, params.widths)
    pt = PhasePoint(np.array([0.3, 0.3]), 1.0)
    u, du = net.eval_with_spatial_directional(params=const, point=pt, direction=np.array([1.0, 0.0]))
    assert u == pytest.approx(3.7)
    assert du == 0.0


def test_non_unit_direction_rejected():
    params = net.init_params((4, 8, 1), seed=0)
    pt = PhasePoint(np.array([0.5, 0.5]), 0.0)
    with pytest.raises(ContractViolation):
        net.eval_with_spatial_directional(params, pt, np.array([1.0, 1.0]))


def test_flatten_unflatten_roundtrip_preserves_eval():
    params = net.init_params((4, 12, 12, 1), seed=21)
    again = net.unflatten(net.flatten(params), params.widths)
    pt = PhasePoint(np.array([0.11, 0.93]), 4.2)
    assert net.evaluate(params, pt) == net.evaluate(again, pt)
    assert np.array_equal(net.flatten(params), net.flatten(again))


def test_batch_matches_single_point():
    params = net.init_params((4, 10, 1), seed=6)
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, (20, 2))
    theta = rng.uniform(0, 2 * np.pi, 20)
    u = net.eval_batch(params, x, theta)
    for i in range(20):
        assert u[i] == pytest.approx(net.evaluate(params, PhasePoint(x[i], theta[i])), abs=1e-14)


def test_vectorized_matches_tape_for_random_networks():
    rng = np.random.default_rng(42)
    for seed in range(3):
        params = net.init_params((4, 7, 5, 1), seed=seed)
        x = rng.uniform(0.05, 0.95, 2)
        theta = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(theta), np.sin(theta)])
        pt = PhasePoint(x, theta)
        u_v, du_v = net.eval_with_spatial_directional(params, pt, d)
        u_t, du_t, tape = net.tape_eval_with_directional(params, pt, d)
        assert u_v == pytest.approx(u_t, abs=1e-13)
        assert du_v == pytest.approx(du_t, abs=1e-13)

        from uzawa_transport import autodiff as ad

        emb = net.DEFAULT_EMBEDDING.embed(x[None, :], [theta])
        tan = net.DEFAULT_EMBEDDING.tangent(d[None, :])
        _, _, cache = net.forward_jvp_batch(params, emb, tan)
        g_vec = net.vjp_jvp_batch(params, cache, np.array([0.3]), np.array([-1.7]))
        g_tape = ad.reverse_gradient(
            tape, value_adjoints={tape.output: 0.3}, tangent_adjoints={tape.output: -1.7}
        )
        np.testing.assert_allclose(g_vec, g_tape, rtol=0, atol=1e-13)


@pytest.mark.parametrize("activation", ["tanh", "gelu", "silu"])
def test_activations_gradient_check(activation):
    params = net.init_params((4, 6, 1), activation=activation, seed=2)
    x = np.array([0.42, 0.58])
    theta = 0.77
    d = np.array([np.cos(theta), np.sin(theta)])
    emb = net.DEFAULT_EMBEDDING.embed(x[None, :], [theta])
    tan = net.DEFAULT_EMBEDDING.tangent(d[None, :])
    _, _, cache = net.forward_jvp_batch(params, emb, tan)
    grad = net.vjp_jvp_batch(params, cache, np.array([1.0]), np.array([0.5]))
    flat = net.flatten(params)

    def combined(vec):
        p = net.unflatten(vec, params.widths, activation)
        u, du = net.eval_with_spatial_directional(p, PhasePoint(x, theta), d)
        return u + 0.5 * du

    h = 1e-6
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        fd[i] = (combined(flat + e) - combined(flat - e)) / (2 * h)
    rel = np.abs(fd - grad) / np.maximum(1.0, np.abs(grad))
    assert rel.max() <= 1e-6


def test_smoothness_under_small_perturbation():
    params = net.init_params((4, 32, 32, 1), seed=11)
    pt = PhasePoint(np.array([0.5, 0.5]), 1.0)
    d = np.array([1.0, 0.0])
    u0, du0 = net.eval_with_spatial_directional(params, pt, d)
    pt_eps = PhasePoint(np.array([0.5 + 1e-6, 0.5 - 1e-6]), 1.0 + 1e-6)
    u1, du1 = net.eval_with_spatial_directional(params, pt_eps, d)
    assert np.isfinite([u0, du0, u1, du1]).all()
    assert abs(u1 - u0) <= 1e-4
    assert abs(du1 - du0) <= 1e-4


def test_checkpoint_roundtrip(tmp_path):
    params = net.init_params((4, 16, 1), activation="gelu", seed=17)
    path = tmp_path / "net.uzmlp"
    net.save_params(params, path)
    with open(path, "rb") as fh:
        assert fh.read(6) == b"UZMLP1"
    loaded = net.load_params(path)
    assert loaded.widths == params.widths
    assert loaded.activation == "gelu"
    assert np.array_equal(net.flatten(loaded), net.flatten(params))


def test_raw_angle_embedding_mode():
    params = net.init_params((3, 8, 1), seed=1)
    emb = net.embedding_for(params)
    assert emb.mode == net.RAW_ANGLE
    pt = PhasePoint(np.array([0.2, 0.4]), 1.5)
    val = net.evaluate(params, pt, emb)
    assert np.isfinite(val)


def test_cos_sin_periodicity():
    params = net.init_params((4, 8, 1), seed=5)
    pt_a = PhasePoint(np.array([0.3, 0.3]), 0.4)
    pt_b = PhasePoint(np.array([0.3, 0.3]), 0.4 + 2 * np.pi)
    assert net.evaluate(params, pt_a) == pytest.approx(net.evaluate(params, pt_b), abs=1e-14)
