"""Discrete Lagrangian: residual energy, boundary penalty, multiplier term.

The objective is
    1/2 sum_w (residual)^2  +  gamma/2 sum_b w_b (u-g)^2  -  sum_b w_b lambda (u-g),
assembled on a quadrature set.  The multiplier lives on a frozen copy of
the inflow-boundary nodes; interior nodes may be subsampled (tensor rules
subsample whole spatial blocks so the angular coupling stays intact) or,
for Monte Carlo rules, redrawn per step by the caller.  Gradients reuse
the forward evaluations: every interior point contributes a value seed and
a tangent seed, with the angular cross-terms of the scattering sum folded
into the value seeds, and a single reverse sweep produces the flat
parameter gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kinetic_ops, network
from .errors import ContractViolation
from .kinetic_ops import TWO_PI
from .phase_space import InteriorNodes, QuadratureSet


@dataclass
class LagrangianConfig:
    gamma: float = 1.0
    include_source: bool = True
    batch_interior: int | None = None
    resample: bool = True

    def __post_init__(self):
        if self.gamma < 0:
            raise ContractViolation("boundary stabilization weight must be >= 0")
        if self.batch_interior is not None and self.batch_interior < 1:
            raise ContractViolation("interior batch size must be >= 1")


@dataclass
class MultiplierField:
    """Multiplier values pinned to a frozen inflow-boundary node set."""

    values: np.ndarray
    nodes: object

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.nodes),):
            raise ContractViolation("one multiplier value per boundary node")

    def norm(self):
        """Discrete boundary L2 norm of the multiplier."""
        return float(np.sqrt(self.nodes.weight @ self.values**2))


def constant_multiplier(nodes, value=0.0):
    return MultiplierField(np.full(len(nodes), float(value)), nodes)


@dataclass
class LagrangianParts:
    pde: float
    boundary_penalty: float
    multiplier_term: float

    @property
    def value(self):
        return self.pde + self.boundary_penalty + self.multiplier_term


def _check_registry(multiplier, quad):
    if multiplier.nodes is quad.boundary:
        return
    same = (
        len(multiplier.nodes) == len(quad.boundary)
        and np.array_equal(multiplier.nodes.x, quad.boundary.x)
        and np.array_equal(multiplier.nodes.theta, quad.boundary.theta)
    )
    if not same:
        raise ContractViolation("multiplier registry does not match the boundary nodes")


def _problem_for(problem, config):
    if config.include_source:
        return problem
    stripped = kinetic_ops.SourceAndInflow(None, problem.data.g, problem.data.noise)
    return kinetic_ops.ProblemSpec(problem.sigma_a, problem.sigma_t, problem.kernel, stripped)


def _evaluate(params, multiplier, quad, problem, config, need_grad):
    _check_registry(multiplier, quad)
    problem = _problem_for(problem, config)
    interior = quad.interior
    angular = quad.angular
    grad = None

    if interior.blocked:
        terms = kinetic_ops.blocked_terms(params, interior.spatial_x, angular, problem)
        w = interior.weight
        r = terms["residual"]
        pde = 0.5 * float(w @ r**2)
        if need_grad:
            m = interior.spatial_x.shape[0]
            k = len(angular)
            wr = (w * r).reshape(m, k)
            scat_seed = -(problem.sigma_t / TWO_PI) * (wr @ terms["kernel_matrix"]) * angular.weight[None, :]
            alpha = w * r * (terms["sigma"] + problem.sigma_t) + scat_seed.ravel()
            beta = w * r
            grad = network.vjp_jvp_batch(params, terms["cache"], alpha, beta)
    else:
        terms = kinetic_ops.sample_terms(params, interior.x, interior.theta, angular, problem)
        w = interior.weight
        r = terms["residual"]
        pde = 0.5 * float(w @ r**2)
        if need_grad:
            wr = w * r
            alpha = wr * (terms["sigma"] + problem.sigma_t)
            grad = network.vjp_jvp_batch(params, terms["cache_residual"], alpha, wr)
            if problem.sigma_t != 0.0:
                scat_seed = (
                    -(problem.sigma_t / TWO_PI)
                    * wr[:, None]
                    * terms["rows"]
                    * angular.weight[None, :]
                )
                grad = grad + network.vjp_value_batch(
                    params, terms["cache_scatter"], scat_seed.ravel()
                )

    b = quad.boundary
    emb = network.embedding_for(params)
    u_b, cache_b = network.forward_batch(params, emb.embed(b.x, b.theta))
    g_b = problem.data.inflow(b)
    mismatch = u_b - g_b
    penalty = 0.5 * config.gamma * float(b.weight @ mismatch**2)
    mult_term = -float((b.weight * multiplier.values) @ mismatch)
    if need_grad:
        seed_b = b.weight * (config.gamma * mismatch - multiplier.values)
        grad = grad + network.vjp_value_batch(params, cache_b, seed_b)

    return LagrangianParts(pde, penalty, mult_term), grad


def assemble(params, multiplier, quad, problem, config):
    """Objective value split into its three parts."""
    parts, _ = _evaluate(params, multiplier, quad, problem, config, need_grad=False)
    return parts


def gradient(params, multiplier, quad, problem, config):
    """Exact flat-parameter gradient of the assembled objective."""
    _, grad = _evaluate(params, multiplier, quad, problem, config, need_grad=True)
    return grad


def assemble_with_gradient(params, multiplier, quad, problem, config):
    """Value parts and gradient from one shared forward pass."""
    return _evaluate(params, multiplier, quad, problem, config, need_grad=True)


def subsample(quad, batch_interior, step_seed):
    """Interior subsample without replacement; boundary nodes kept intact.

    Tensor interiors are subsampled by whole spatial blocks (units of the
    batch size), Monte Carlo interiors by phase samples.  Weights are
    rescaled by the inverse inclusion probability, which makes every
    weighted sum exactly unbiased; for the constant-weight Monte Carlo
    interiors this also preserves the total measure exactly.  The
    multiplier registry is frozen, so boundary nodes are never subsampled.
    """
    interior = quad.interior
    if interior.blocked:
        n_full = interior.spatial_x.shape[0]
    else:
        n_full = len(interior)
    if batch_interior is None or batch_interior == n_full:
        return quad
    if batch_interior > n_full:
        raise ContractViolation("interior batch exceeds the available nodes")
    rng = np.random.default_rng(step_seed)
    idx = np.sort(rng.choice(n_full, size=batch_interior, replace=False))
    scale = n_full / batch_interior
    if interior.blocked:
        k = len(quad.angular)
        flat_idx = (idx[:, None] * k + np.arange(k)[None, :]).ravel()
        sub = InteriorNodes(
            interior.x[flat_idx],
            interior.theta[flat_idx],
            interior.weight[flat_idx] * scale,
            blocked=True,
            spatial_x=interior.spatial_x[idx],
            spatial_w=interior.spatial_w[idx] * scale,
        )
    else:
        sub = InteriorNodes(
            interior.x[idx],
            interior.theta[idx],
            interior.weight[idx] * scale,
            blocked=False,
        )
    return QuadratureSet(sub, quad.angular, quad.boundary, quad.scheme, quad.seeds, quad.domain)
