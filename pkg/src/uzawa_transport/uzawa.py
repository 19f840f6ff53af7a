"""Outer multiplier ascent wrapped around inner stochastic minimization.

Each outer step minimizes the discrete Lagrangian over the network
parameters for a fixed multiplier (a fixed number of optimizer steps,
parameters warm-started from the previous outer step), then moves the
multiplier along the boundary mismatch:

    lambda(b) <- lambda(b) - rho * (u(b) - g(b))   on every frozen node.

The minus sign is the ascent direction of the saddle objective in the
multiplier.  The outer loop is strictly sequential; all randomness is
drawn from seeds keyed by (run seed, outer index, inner index), so a run
is reproducible bit for bit in single-threaded mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lagrangian as lagr
from . import network, phase_space
from .errors import ContractViolation, NumericalAbort
from .lagrangian import MultiplierField, constant_multiplier


@dataclass
class UzawaConfig:
    rho: float = 1.0
    n_outer: int = 10
    n_inner: int = 200
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    lambda_init: float = 0.0

    def __post_init__(self):
        if self.rho <= 0:
            raise ContractViolation("multiplier step rho must be positive")
        if self.n_outer < 1 or self.n_inner < 1:
            raise ContractViolation("iteration counts must be >= 1")
        if self.learning_rate <= 0:
            raise ContractViolation("learning rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ContractViolation(f"unknown optimizer '{self.optimizer}'")


class Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, theta, grad):
        return theta - self.lr * grad


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config):
    if config.optimizer == "sgd":
        return Sgd(config.learning_rate)
    return Adam(config.learning_rate, config.beta1, config.beta2, config.eps_adam)


@dataclass
class OuterRecord:
    outer: int
    loss_parts: lagr.LagrangianParts
    boundary_residual: float
    lambda_norm: float


@dataclass
class RunState:
    params: network.MlpParams
    multiplier: MultiplierField
    outer_index: int = 0
    inner_history: list = field(default_factory=list)  # per outer: list of parts
    outer_history: list = field(default_factory=list)  # OuterRecord per outer
    initial_boundary_residual: float = float("nan")


def boundary_residual(params, nodes, g_values):
    """Discrete inflow-trace mismatch norm ||u - g||."""
    u = network.eval_batch(params, nodes.x, nodes.theta, network.embedding_for(params))
    return float(np.sqrt(nodes.weight @ (u - g_values) ** 2))


def multiplier_update(multiplier, params, g_values, rho):
    """One ascent step on the frozen boundary nodes."""
    if rho <= 0:
        raise ContractViolation("multiplier step rho must be positive")
    nodes = multiplier.nodes
    u = network.eval_batch(params, nodes.x, nodes.theta, network.embedding_for(params))
    return MultiplierField(multiplier.values - rho * (u - np.asarray(g_values)), nodes)


def _check_finite(parts, grad, outer, inner):
    named = (
        ("pde", parts.pde),
        ("boundary_penalty", parts.boundary_penalty),
        ("multiplier_term", parts.multiplier_term),
    )
    for name, value in named:
        if not math.isfinite(value):
            raise NumericalAbort(
                f"non-finite loss part '{name}' at outer step {outer}, inner step {inner}"
            )
    if not np.all(np.isfinite(grad)):
        raise NumericalAbort(
            f"non-finite gradient at outer step {outer}, inner step {inner}"
        )


def _step_quadrature(quad, lagr_cfg, seed, outer, inner):
    if quad.scheme == phase_space.MONTE_CARLO and lagr_cfg.resample:
        n = lagr_cfg.batch_interior or len(quad.interior)
        interior = phase_space.mc_interior(quad.domain, n, [seed, outer, inner])
        return phase_space.QuadratureSet(
            interior, quad.angular, quad.boundary, quad.scheme, quad.seeds, quad.domain
        )
    if lagr_cfg.batch_interior is not None:
        return lagr.subsample(quad, lagr_cfg.batch_interior, [seed, outer, inner])
    return quad


def inner_minimize(state, quad, problem, lagr_cfg, config, optimizer, outer, seed=0):
    """Exactly n_inner optimizer steps on the Lagrangian; returns the trace."""
    theta = network.flatten(state.params)
    widths = state.params.widths
    activation = state.params.activation
    trace = []
    for m in range(config.n_inner):
        batch = _step_quadrature(quad, lagr_cfg, seed, outer, m)
        params = network.unflatten(theta, widths, activation)
        parts, grad = lagr.assemble_with_gradient(
            params, state.multiplier, batch, problem, lagr_cfg
        )
        _check_finite(parts, grad, outer, m)
        theta = optimizer.step(theta, grad)
        trace.append(parts)
    state.params = network.unflatten(theta, widths, activation)
    return trace


def run(problem, quad, params0, config, lagr_cfg, seed=0):
    """Full iteration: returns the final state with per-step histories."""
    g_values = problem.data.inflow(quad.boundary)
    state = RunState(
        params=params0,
        multiplier=constant_multiplier(quad.boundary, config.lambda_init),
    )
    state.initial_boundary_residual = boundary_residual(
        state.params, quad.boundary, g_values
    )
    optimizer = make_optimizer(config)
    for k in range(config.n_outer):
        trace = inner_minimize(state, quad, problem, lagr_cfg, config, optimizer, k, seed)
        full_parts = lagr.assemble(state.params, state.multiplier, quad, problem, lagr_cfg)
        br = boundary_residual(state.params, quad.boundary, g_values)
        state.multiplier = multiplier_update(state.multiplier, state.params, g_values, config.rho)
        state.inner_history.append(trace)
        state.outer_history.append(
            OuterRecord(k, full_parts, br, state.multiplier.norm())
        )
        state.outer_index = k + 1
    return state


@dataclass(frozen=True)
class StrongRegime:
    valid: bool
    rho_max: float | None


def check_strong_regime(sigma_a, sigma_t, rho, gamma):
    """Absorption-dominance check: scattering below a quarter of absorption
    and the multiplier step below 2*gamma - sigma_a - sqrt(sigma_a^2 - 16*sigma_t^2)."""
    if min(sigma_a, sigma_t, rho, gamma) < 0:
        raise ContractViolation("regime parameters must be nonnegative")
    if sigma_t >= sigma_a / 4.0 or sigma_a == 0.0:
        return StrongRegime(False, None)
    rho_max = 2.0 * gamma - sigma_a - math.sqrt(sigma_a**2 - 16.0 * sigma_t**2)
    return StrongRegime(0.0 < rho < rho_max, rho_max)
