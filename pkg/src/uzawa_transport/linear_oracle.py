"""The same multiplier iteration on a small linear basis, solved exactly.

Trial space: tensor products of {1, x1, x2, x1*x2, x1^2, x2^2} with
{1, cos(theta), sin(theta)} (18 functions).  The operator image of each
basis function is available in closed form (the isotropic scattering
average of the angular factors is 0 or the factor itself), so the inner
minimization is an 18x18 normal-equation solve and every quantity in the
iteration identities can be computed independently of the network path.

All inner products use one frozen high-order tensor quadrature.  Because
the matrices, the iterates, and the saddle point are built from the same
discrete inner products, the residual identity, the multiplier distance
recursion, and the telescoping bound hold to solver precision at every
iterate; this is what the acceptance identity suite checks.

The multiplier lives on the boundary quadrature nodes.  Its component
orthogonal to the trace image of the basis is never touched by the
updates, so the reference multiplier is the unique fixed point inside
(initial multiplier + trace image), computed by one boundary-mass solve.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, IllConditionedSystem
from .phase_space import (
    INFLOW,
    OUTFLOW,
    UNIT_SQUARE,
    angular_rule,
    tensor_boundary,
    tensor_interior,
)

COND_LIMIT = 1e12

_N_POLY = 6
_N_ANG = 3
# scattering eigenvalue of each angular factor under the isotropic kernel
_ANG_SCATTER = np.array([0.0, 1.0, 1.0])


def _poly_values(x):
    one = np.ones(x.shape[0])
    return np.column_stack([one, x[:, 0], x[:, 1], x[:, 0] * x[:, 1], x[:, 0] ** 2, x[:, 1] ** 2])


def _poly_gradients(x):
    n = x.shape[0]
    zero = np.zeros(n)
    one = np.ones(n)
    gx = np.column_stack([zero, one, zero, x[:, 1], 2.0 * x[:, 0], zero])
    gy = np.column_stack([zero, zero, one, x[:, 0], zero, 2.0 * x[:, 1]])
    return gx, gy


def _angular_values(theta):
    return np.column_stack([np.ones(theta.size), np.cos(theta), np.sin(theta)])


def _basis_values(x, theta):
    poly = _poly_values(x)
    ang = _angular_values(theta)
    return (ang[:, :, None] * poly[:, None, :]).reshape(x.shape[0], _N_ANG * _N_POLY)


def _advection_values(x, theta):
    gx, gy = _poly_gradients(x)
    adv = np.cos(theta)[:, None] * gx + np.sin(theta)[:, None] * gy
    ang = _angular_values(theta)
    return (ang[:, :, None] * adv[:, None, :]).reshape(x.shape[0], _N_ANG * _N_POLY)


@dataclass
class LinearTrialSpace:
    """Frozen Gram-type matrices of the 18-function trial space."""

    sigma_a: float
    sigma_t: float
    n_basis: int = _N_ANG * _N_POLY
    pde_gram: np.ndarray = field(init=False, repr=False)  # <(T+S)phi_i, (T+S)phi_j>
    mass: np.ndarray = field(init=False, repr=False)
    advection_gram: np.ndarray = field(init=False, repr=False)
    boundary_mass: np.ndarray = field(init=False, repr=False)
    outflow_mass: np.ndarray = field(init=False, repr=False)
    trace: np.ndarray = field(init=False, repr=False)  # basis at boundary nodes
    boundary_w: np.ndarray = field(init=False, repr=False)
    boundary_x: np.ndarray = field(init=False, repr=False)
    boundary_theta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        domain = UNIT_SQUARE
        angular = angular_rule(64)
        interior = tensor_interior(domain, 32, 32, angular)
        x, theta, w = interior.x, interior.theta, interior.weight

        phi = _basis_values(x, theta)
        adv = _advection_values(x, theta)
        scatter_scale = self.sigma_a + self.sigma_t * np.repeat(_ANG_SCATTER, _N_POLY)
        ts = adv + phi * scatter_scale[None, :]

        self.pde_gram = ts.T @ (w[:, None] * ts)
        self.mass = phi.T @ (w[:, None] * phi)
        self.advection_gram = adv.T @ (w[:, None] * adv)

        inflow = tensor_boundary(domain, 32, 32, side=INFLOW)
        self.trace = _basis_values(inflow.x, inflow.theta)
        self.boundary_w = inflow.weight
        self.boundary_x = inflow.x
        self.boundary_theta = inflow.theta
        self.boundary_mass = self.trace.T @ (self.boundary_w[:, None] * self.trace)

        outflow = tensor_boundary(domain, 32, 32, side=OUTFLOW)
        phi_out = _basis_values(outflow.x, outflow.theta)
        self.outflow_mass = phi_out.T @ (outflow.weight[:, None] * phi_out)

        for name, mat in (("pde", self.pde_gram), ("boundary", self.boundary_mass)):
            low = np.linalg.eigvalsh(mat).min()
            if low < -1e-10:
                raise ContractViolation(f"{name} Gram matrix is not positive semidefinite")

    def triple_gram(self):
        return self.mass + self.advection_gram + self.outflow_mass + self.boundary_mass

    def boundary_values(self, c):
        return self.trace @ c

    def rhs(self, lambda_vec, gamma, g_values):
        wl = self.boundary_w * (gamma * g_values + lambda_vec)
        return self.trace.T @ wl


def _solve_checked(mat, rhs, what):
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedSystem(f"refusing {what} solve", cond)
    return np.linalg.solve(mat, rhs)


def exact_inner_solve(space, lambda_vec, gamma, g_values=None):
    """Minimizer of the discrete Lagrangian over the span: one linear solve."""
    lambda_vec = np.asarray(lambda_vec, dtype=float)
    if g_values is None:
        g_values = np.zeros_like(lambda_vec)
    system = space.pde_gram + gamma * space.boundary_mass
    return _solve_checked(system, space.rhs(lambda_vec, gamma, g_values), "inner")


def fixed_point_solve(space, gamma, g_values, lambda0=None):
    """Discrete saddle point: trace-fitting coefficients and the multiplier.

    Returns (c_star, lambda_star, trace_mismatch); the mismatch reports how
    well the datum is representable in the span's trace image and should be
    near zero for data constructed inside it.
    """
    g_values = np.asarray(g_values, dtype=float)
    sqw = np.sqrt(space.boundary_w)
    c_star, *_ = np.linalg.lstsq(sqw[:, None] * space.trace, sqw * g_values, rcond=None)
    mismatch = float(
        np.sqrt(space.boundary_w @ (space.boundary_values(c_star) - g_values) ** 2)
    )
    if lambda0 is None:
        lambda0 = np.zeros(len(space.boundary_w))
    else:
        lambda0 = np.broadcast_to(np.asarray(lambda0, dtype=float), space.boundary_w.shape).copy()
    target = space.pde_gram @ c_star - space.trace.T @ (space.boundary_w * lambda0)
    d = _solve_checked(space.boundary_mass, target, "saddle")
    lambda_star = lambda0 + space.trace @ d
    return c_star, lambda_star, mismatch


@dataclass
class OracleRun:
    coefficients: list
    multipliers: list
    c_star: np.ndarray
    lambda_star: np.ndarray
    dist_lambda: np.ndarray
    err_pde: np.ndarray
    err_boundary: np.ndarray
    err_triple: np.ndarray


def run_uzawa_oracle(space, gamma, rho, n_iter, lambda0=0.0, g_values=None):
    """Iterate with exact inner solves; series lengths are n_iter + 1."""
    if rho <= 0:
        raise ContractViolation("multiplier step rho must be positive")
    n_b = len(space.boundary_w)
    if g_values is None:
        g_values = np.zeros(n_b)
    g_values = np.asarray(g_values, dtype=float)
    lam = np.broadcast_to(np.asarray(lambda0, dtype=float), (n_b,)).copy()
    c_star, lambda_star, _ = fixed_point_solve(space, gamma, g_values, lambda0=lam)

    w = space.boundary_w
    triple = space.triple_gram()
    coeffs, lams = [], []
    dist, epde, ebnd, etri = [], [], [], []
    for k in range(n_iter + 1):
        c = exact_inner_solve(space, lam, gamma, g_values)
        coeffs.append(c)
        lams.append(lam.copy())
        e = c - c_star
        dlam = lam - lambda_star
        dist.append(np.sqrt(w @ dlam**2))
        epde.append(np.sqrt(e @ space.pde_gram @ e))
        ebnd.append(np.sqrt(e @ space.boundary_mass @ e))
        etri.append(np.sqrt(e @ triple @ e))
        if k < n_iter:
            lam = lam - rho * (space.boundary_values(c) - g_values)
    return OracleRun(
        coeffs,
        lams,
        c_star,
        lambda_star,
        np.array(dist),
        np.array(epde),
        np.array(ebnd),
        np.array(etri),
    )


@dataclass
class QuadraticObjective:
    """The oracle's inner problem as an explicit convex quadratic.

    value(c) = 1/2 c' H c - r' c with H = pde_gram + gamma * boundary_mass;
    ``lipschitz`` is the largest eigenvalue of H (the gradient's Lipschitz
    constant), and ``minimizer`` the exact solution.
    """

    hessian: np.ndarray
    linear: np.ndarray

    @classmethod
    def from_space(cls, space, lambda_vec, gamma, g_values=None):
        lambda_vec = np.asarray(lambda_vec, dtype=float)
        if g_values is None:
            g_values = np.zeros_like(lambda_vec)
        return cls(
            space.pde_gram + gamma * space.boundary_mass,
            space.rhs(lambda_vec, gamma, g_values),
        )

    def value(self, c):
        return 0.5 * c @ self.hessian @ c - self.linear @ c

    def grad(self, c):
        return self.hessian @ c - self.linear

    @property
    def lipschitz(self):
        return float(np.linalg.eigvalsh(self.hessian).max())

    @property
    def minimizer(self):
        return _solve_checked(self.hessian, self.linear, "quadratic")


def emit_series_csv(run, path):
    """Series as (k, dist_lambda, residual_pde, residual_boundary)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "dist_lambda", "residual_pde", "residual_boundary"])
        for k in range(len(run.dist_lambda)):
            writer.writerow(
                [
                    k,
                    repr(float(run.dist_lambda[k])),
                    repr(float(run.err_pde[k])),
                    repr(float(run.err_boundary[k])),
                ]
            )


# -- identity gaps ------------------------------------------------------------


def default_trace_datum(space, seed=12345, scale=0.5):
    """A boundary datum built inside the span's trace image (seeded)."""
    rng = np.random.default_rng(seed)
    c_g = scale * rng.standard_normal(space.n_basis)
    return c_g, space.boundary_values(c_g)


def residual_identity_gap(space, run, gamma):
    """Worst deviation of <(T+S)e,(T+S)e> + gamma<e,e>_b = <dlam, e>_b."""
    w = space.boundary_w
    worst = 0.0
    for c, lam in zip(run.coefficients, run.multipliers):
        e = c - run.c_star
        lhs = e @ space.pde_gram @ e + gamma * (e @ space.boundary_mass @ e)
        rhs = (lam - run.lambda_star) @ (w * space.boundary_values(e))
        worst = max(worst, abs(lhs - rhs))
    return worst


def recursion_identity_gap(space, run, rho):
    """Worst deviation of the multiplier distance recursion."""
    w = space.boundary_w
    worst = 0.0
    for k in range(len(run.multipliers) - 1):
        e_b = space.boundary_values(run.coefficients[k] - run.c_star)
        dl = run.multipliers[k] - run.lambda_star
        dl_next = run.multipliers[k + 1] - run.lambda_star
        lhs = w @ dl_next**2
        rhs = w @ dl**2 - 2.0 * rho * (dl @ (w * e_b)) + rho**2 * (w @ e_b**2)
        worst = max(worst, abs(lhs - rhs))
    return worst


def telescoping_check(space, run, gamma, rho):
    """(gap to the exact telescoped drop, partial sum, initial distance^2)."""
    total = 0.0
    n = len(run.multipliers) - 1
    for k in range(n):
        e = run.coefficients[k] - run.c_star
        total += 2.0 * rho * (e @ space.pde_gram @ e)
        total += rho * (2.0 * gamma - rho) * (e @ space.boundary_mass @ e)
    drop = run.dist_lambda[0] ** 2 - run.dist_lambda[n] ** 2
    return abs(total - drop), total, run.dist_lambda[0] ** 2


def strong_regime_constant(sigma_a, sigma_t, gamma, rho, n_alpha=999):
    """Best positive coercivity constant over the free parameter alpha."""
    alphas = np.linspace(1e-3, 1.0 - 1e-3, n_alpha)
    best = -np.inf
    for a in alphas:
        entries = (
            2.0 * rho * a,
            2.0 * rho * sigma_a * a,
            rho * (2.0 * gamma - rho - 2.0 * sigma_a * a),
            2.0 * rho * (sigma_a**2 * a - 4.0 * sigma_t**2 / (1.0 - a)),
        )
        best = max(best, min(entries))
    return best


def verification_suite(n_iter=200, pairs=((1.0, 0.5), (1.0, 1.5), (2.0, 3.5))):
    """Run the full identity battery; returns (name, ok, detail) tuples.

    Identity tolerances 1e-10, telescoping 1e-8, matching the acceptance
    gate.  The strong-regime case uses absorption 1, scattering 0.1,
    gamma 2, rho 1.
    """
    checks = []
    space = LinearTrialSpace(sigma_a=1.0, sigma_t=0.1)
    _, g_values = default_trace_datum(space)
    for gamma, rho in pairs:
        run = run_uzawa_oracle(space, gamma, rho, n_iter, 0.0, g_values)
        gap_res = residual_identity_gap(space, run, gamma)
        gap_rec = recursion_identity_gap(space, run, rho)
        gap_tel, total, bound = telescoping_check(space, run, gamma, rho)
        mono = bool(np.all(np.diff(run.dist_lambda) <= 1e-12))
        label = f"gamma={gamma}, rho={rho}"
        checks.append((f"residual identity ({label})", gap_res <= 1e-10, f"max gap {gap_res:.3e}"))
        checks.append((f"distance recursion ({label})", gap_rec <= 1e-10, f"max gap {gap_rec:.3e}"))
        checks.append(
            (
                f"telescoping bound ({label})",
                gap_tel <= 1e-8 and total <= bound + 1e-8,
                f"gap {gap_tel:.3e}, sum {total:.6f} <= {bound:.6f}",
            )
        )
        checks.append((f"monotone multiplier distance ({label})", mono, ""))

    sigma_a, sigma_t, gamma, rho = 1.0, 0.1, 2.0, 1.0
    strong_space = LinearTrialSpace(sigma_a=sigma_a, sigma_t=sigma_t)
    _, g_strong = default_trace_datum(strong_space)
    run = run_uzawa_oracle(strong_space, gamma, rho, n_iter, 0.0, g_strong)
    c_const = strong_regime_constant(sigma_a, sigma_t, gamma, rho)
    partial = c_const * np.cumsum(run.err_triple[:-1] ** 2)
    bound = run.dist_lambda[0] ** 2 + 1e-8
    decreasing = bool(np.all(np.diff(run.err_triple) <= 1e-12))
    checks.append(
        (
            "strong-regime weighted sums",
            c_const > 0 and bool(np.all(partial <= bound)),
            f"C={c_const:.4f}, max partial {partial.max():.6f} <= {bound:.6f}",
        )
    )
    checks.append(("strong-regime decreasing error", decreasing, ""))
    return checks
