"""Tape engine: forward/tangent values, reverse sweeps, contracts."""

import numpy as np
import pytest

from uzawa_transport import autodiff as ad
from uzawa_transport import network as net
from uzawa_transport.errors import ContractViolation, EvaluationError
from uzawa_transport.phase_space import PhasePoint


def test_constant_program_has_zero_directional():
    tape = ad.Tape()
    out = ad.record_forward(tape, [0.4, -1.2], [1.0, 3.0], lambda t, v: t.constant(7.5))
    assert out.primal == 7.5
    assert out.tangent == 0.0


def test_linear_map_directional():
    # u(x) = 2*x1 + 3*x2, seed (1, 0) -> directional 2
    def program(tape, v):
        return v[0] * 2.0 + v[1] * 3.0

    tape = ad.Tape()
    out = ad.record_forward(tape, [0.7, 0.1], [1.0, 0.0], program)
    assert out.tangent == pytest.approx(2.0, abs=0)
    assert out.primal == pytest.approx(1.7)


def test_mlp_directional_matches_central_difference():
    params = net.init_params((4, 8, 1), seed=5)
    x = np.array([0.31, 0.62])
    theta = 0.7
    direction = np.array([np.cos(0.7), np.sin(0.7)])
    _, du, _ = net.tape_eval_with_directional(params, PhasePoint(x, theta), direction)
    h = 1e-5
    up = net.evaluate(params, PhasePoint(x + h * direction, theta))
    dn = net.evaluate(params, PhasePoint(x - h * direction, theta))
    fd = (up - dn) / (2 * h)
    assert abs(du - fd) / max(abs(fd), 1e-12) <= 1e-6


def test_product_rule_gradient():
    tape = ad.Tape()
    a = tape.param(0, 3.0)
    b = tape.param(1, 4.0)
    out = a * b
    grad = ad.reverse_gradient(tape, value_adjoints={out.i: 1.0})
    assert grad == pytest.approx([4.0, 3.0])


def test_tangent_seeded_gradient_of_linear_map():
    # u = theta * x with seed s: gradient of du wrt theta equals s
    s = 2.5
    tape = ad.Tape()
    theta = tape.param(0, 1.7)
    x = tape.input(0.9, tangent=s)
    out = theta * x
    grad = ad.reverse_gradient(tape, tangent_adjoints={out.i: 1.0})
    assert grad == pytest.approx([s])


def _residual_tape(params, x, theta, sigma_a, sigma_t, f_val):
    """(T + sigma_t)u - f on a tape: directional + (sigma_a+sigma_t)*u - f."""
    point = PhasePoint(x, theta)
    direction = np.array([np.cos(theta), np.sin(theta)])
    out = net.tape_eval_with_directional(params, point, direction)
    return out


def test_full_residual_gradient_matches_finite_differences():
    # 1/2 r^2 with r = du + c*u - f for a width-8 depth-2 network
    params = net.init_params((4, 8, 1), seed=7)
    x = np.array([0.25, 0.6])
    theta = 1.1
    c, f_val = 1.7, 0.4

    u, du, tape = _residual_tape(params, x, theta, 1.0, 0.7, f_val)
    r = du + c * u - f_val
    grad = ad.reverse_gradient(
        tape,
        value_adjoints={tape.output: r * c},
        tangent_adjoints={tape.output: r},
    )

    flat = net.flatten(params)
    direction = np.array([np.cos(theta), np.sin(theta)])

    def half_r_squared(vec):
        p = net.unflatten(vec, params.widths)
        uu, dd = net.eval_with_spatial_directional(p, PhasePoint(x, theta), direction)
        return 0.5 * (dd + c * uu - f_val) ** 2

    h = 1e-5
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        fd[i] = (half_r_squared(flat + e) - half_r_squared(flat - e)) / (2 * h)
    rel = np.abs(fd - grad) / np.maximum(1.0, np.abs(grad))
    assert rel.max() <= 1e-5


def test_reverse_gradient_additive_in_seeds():
    params = net.init_params((4, 6, 1), seed=1)
    point = PhasePoint(np.array([0.4, 0.5]), 0.3)
    direction = np.array([np.cos(0.3), np.sin(0.3)])
    _, _, tape = net.tape_eval_with_directional(params, point, direction)
    g1 = ad.reverse_gradient(tape, value_adjoints={tape.output: 1.0})
    g2 = ad.reverse_gradient(tape, tangent_adjoints={tape.output: 1.0})
    g12 = ad.reverse_gradient(
        tape, value_adjoints={tape.output: 1.0}, tangent_adjoints={tape.output: 1.0}
    )
    np.testing.assert_allclose(g1 + g2, g12, rtol=0, atol=1e-15)


def test_replay_is_bitwise_deterministic():
    params = net.init_params((4, 8, 1), seed=9)
    point = PhasePoint(np.array([0.2, 0.9]), 2.0)
    direction = np.array([0.0, 1.0])
    _, _, tape = net.tape_eval_with_directional(params, point, direction)
    before_val = list(tape.val)
    before_tan = list(tape.tan)
    tape.replay()
    assert tape.val == before_val
    assert tape.tan == before_tan
    g1 = ad.reverse_gradient(tape, value_adjoints={tape.output: 1.0})
    g2 = ad.reverse_gradient(tape, value_adjoints={tape.output: 1.0})
    assert np.array_equal(g1, g2)


def test_replay_with_new_params_matches_fresh_tape():
    params = net.init_params((4, 6, 1), seed=2)
    point = PhasePoint(np.array([0.5, 0.5]), 1.0)
    direction = np.array([1.0, 0.0])
    _, _, tape = net.tape_eval_with_directional(params, point, direction)
    flat = net.flatten(params) * 1.1 + 0.01
    tape.replay(params=flat)
    p2 = net.unflatten(flat, params.widths)
    u2, du2, _ = net.tape_eval_with_directional(p2, point, direction)
    assert tape.val[tape.output] == pytest.approx(u2, abs=1e-15)
    assert tape.tan[tape.output] == pytest.approx(du2, abs=1e-15)


def test_seed_on_nonexistent_node_rejected():
    tape = ad.Tape()
    tape.param(0, 1.0)
    with pytest.raises(ContractViolation):
        ad.reverse_gradient(tape, value_adjoints={99: 1.0})


def test_division_by_zero_names_node():
    tape = ad.Tape()
    a = tape.input(1.0)
    b = tape.input(0.0)
    with pytest.raises(EvaluationError, match="node"):
        a / b


def test_mismatched_tangent_length_rejected():
    with pytest.raises(ContractViolation):
        ad.record_forward(ad.Tape(), [1.0, 2.0], [1.0], lambda t, v: v[0])


def test_unary_chain_against_numpy():
    def program(tape, v):
        return (v[0].sin() * v[1].exp() + v[0].cos() / (v[1] + 2.0)) ** 3.0

    x, y = 0.37, -0.21
    sx, sy = 0.8, -0.4
    tape = ad.Tape()
    out = ad.record_forward(tape, [x, y], [sx, sy], program)
    val = (np.sin(x) * np.exp(y) + np.cos(x) / (y + 2.0)) ** 3
    assert out.primal == pytest.approx(val, rel=1e-14)
    h = 1e-7
    vp = (np.sin(x + h * sx) * np.exp(y + h * sy) + np.cos(x + h * sx) / (y + h * sy + 2.0)) ** 3
    vm = (np.sin(x - h * sx) * np.exp(y - h * sy) + np.cos(x - h * sx) / (y - h * sy + 2.0)) ** 3
    assert out.tangent == pytest.approx((vp - vm) / (2 * h), rel=1e-6)
