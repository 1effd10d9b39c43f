"""Maximum causal entropy IRL on the occupation-measure dual.

Given the expert mean-field term and discounted feature expectations, the
entropy-maximization problem over occupation measures has an unconstrained
convex dual in (theta, lambda, xi). Constant-step gradient descent on that
dual recovers the Boltzmann occupation measure and its policy.
"""

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NonFinite, NotConverged, ValidationError
from .mdp import disintegrate, OccupationMeasure
from .model import check_simplex, feature_table, transition_kernel
from .numerics import log_sum_exp


@dataclass(frozen=True)
class IrlProblem:
    """Expert data for the inverse problem.

    mu_E must be strictly positive: the exponent of the Boltzmann measure
    contains log mu_E(x). f_expert is the discounted feature expectation
    vector of the expert.
    """

    spec: object
    mu_E: np.ndarray
    f_expert: np.ndarray

    def __post_init__(self):
        mu = check_simplex(self.mu_E, "mu_E")
        if mu.min() <= 0.0:
            raise ValidationError(
                f"mu_E must be strictly positive; state {mu.argmin()} has zero mass"
            )
        f = np.asarray(self.f_expert, dtype=float)
        if f.shape != (self.spec.feature_dim,) or not np.all(np.isfinite(f)):
            raise ValidationError("f_expert must be a finite vector of length k")
        object.__setattr__(self, "mu_E", mu)
        object.__setattr__(self, "f_expert", f)

    @cached_property
    def features(self):
        return feature_table(self.spec, self.mu_E)

    @cached_property
    def kernel(self):
        return transition_kernel(self.spec, self.mu_E)


@dataclass(frozen=True)
class DualPoint:
    theta: np.ndarray
    lam: np.ndarray
    xi: np.ndarray

    @classmethod
    def zero(cls, problem):
        X = problem.spec.n_states
        return cls(np.zeros(problem.spec.feature_dim), np.zeros(X), np.zeros(X))

    def as_vector(self):
        return np.concatenate([self.theta, self.lam, self.xi])

    @classmethod
    def from_vector(cls, problem, v):
        k = problem.spec.feature_dim
        X = problem.spec.n_states
        v = np.asarray(v, dtype=float)
        return cls(v[:k].copy(), v[k : k + X].copy(), v[k + X :].copy())


@dataclass(frozen=True)
class SmoothnessConstants:
    M1: float
    M2: float
    M3: float
    M: float
    L: float


@dataclass
class IrlConfig:
    """step=None selects 1/L from the smoothness constants.

    settle_tol, when set, additionally requires the Boltzmann occupation
    measure to move by at most settle_tol (sup norm) between successive
    iterations before stopping. This matters when the expert data is not
    exactly self-consistent: the dual then has no finite minimizer, yet the
    occupation measure still converges while the gradient plateaus at a
    small positive norm, and the plateau can dip under grad_tol long
    before the measure has settled.
    """

    step: float | None = None
    grad_tol: float = 1e-2
    max_iter: int = 1_000_000
    settle_tol: float | None = None


def k_table(problem, d):
    """Exponent table of the Boltzmann measure:

    k(x,a) = log mu_E(x) + <theta, f(x,a,mu_E)>
             + (1-beta) [lambda_x + sum_z xi_z (p(z|x,a,mu_E) - mu_E(z))]
    """
    spec = problem.spec
    f = problem.features
    p = problem.kernel  # [z, x, a]
    shift = np.einsum("zxa,z->xa", p - problem.mu_E[:, None, None], d.xi)
    return (
        np.log(problem.mu_E)[:, None]
        + f @ d.theta
        + (1.0 - spec.beta) * (d.lam[:, None] + shift)
    )


def boltzmann(problem, d):
    """Normalized exponential of the k-table, as an occupation measure."""
    k = k_table(problem, d)
    log_z = log_sum_exp(k.ravel())
    nu = np.exp(k - log_z)
    return OccupationMeasure(nu=nu, beta=problem.spec.beta, mu0=problem.mu_E)


def dual_objective(problem, d):
    """g = (1/(1-beta)) log sum exp(k) - <theta, f_expert> - <lambda, mu_E>."""
    k = k_table(problem, d)
    return (
        log_sum_exp(k.ravel()) / (1.0 - problem.spec.beta)
        - float(d.theta @ problem.f_expert)
        - float(d.lam @ problem.mu_E)
    )


def dual_gradient(problem, d):
    """Partial gradients (grad_theta, grad_lambda, grad_xi) of the dual.

    All three are expectation-matching residuals under the current
    Boltzmann measure.
    """
    nu = boltzmann(problem, d).nu
    f = problem.features
    p = problem.kernel
    grad_theta = (
        np.einsum("xaj,xa->j", f, nu) / (1.0 - problem.spec.beta)
        - problem.f_expert
    )
    grad_lam = nu.sum(axis=1) - problem.mu_E
    grad_xi = np.einsum("zxa,xa->z", p, nu) - problem.mu_E
    return grad_theta, grad_lam, grad_xi


def smoothness_constants(problem):
    """Lipschitz data of the dual gradient: L = 2M (M1/(1-beta) + 2 sqrt(|X||A|))."""
    spec = problem.spec
    f = problem.features
    p = problem.kernel
    M1 = float(np.linalg.norm(f, axis=2).max())
    M2 = 1.0 - spec.beta
    diffs = p - problem.mu_E[:, None, None]
    M3 = (1.0 - spec.beta) * float(np.linalg.norm(diffs, axis=0).max())
    M = max(M1, M2, M3)
    L = 2.0 * M * (M1 / (1.0 - spec.beta) + 2.0 * np.sqrt(spec.n_states * spec.n_actions))
    return SmoothnessConstants(M1=M1, M2=M2, M3=M3, M=M, L=L)


def check_span_assumption(problem):
    """Rank test of the stacked vectors (f, p(.|x,a), e(.|x,a)) over all
    state-action pairs; the strong-convexity condition needs rank k + 2|X|."""
    spec = problem.spec
    X, A, k = spec.n_states, spec.n_actions, spec.feature_dim
    f = problem.features
    p = problem.kernel
    rows = np.zeros((X * A, k + 2 * X))
    for x in range(X):
        for a in range(A):
            i = x * A + a
            rows[i, :k] = f[x, a]
            rows[i, k : k + X] = p[:, x, a]
            rows[i, k + X + x] = 1.0
    svals = np.linalg.svd(rows, compute_uv=False)
    rank = int(np.sum(svals > 1e-10 * svals[0])) if svals[0] > 0 else 0
    return rank == k + 2 * X, rank


def solve_irl(problem, config=None):
    """Constant-step gradient descent on the dual from the zero start.

    Stops when the sup-norm of the gradient drops below grad_tol (and, if
    settle_tol is set, the occupation measure has stopped moving). Returns
    (DualPoint, OccupationMeasure, Policy, trace) where trace rows are
    (g value, sup-norm of gradient) per iteration.
    """
    config = config or IrlConfig()
    consts = smoothness_constants(problem)
    step = config.step if config.step is not None else 1.0 / consts.L
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    if step > 1.0 / consts.L:
        warnings.warn(
            f"step {step:g} exceeds 1/L = {1.0 / consts.L:g}; "
            "the descent guarantee does not apply",
            stacklevel=2,
        )
    spec = problem.spec
    X, A = spec.n_states, spec.n_actions
    f_flat = problem.features.reshape(X * A, spec.feature_dim)
    p_flat = problem.kernel.reshape(X, X * A)
    one_minus_beta = 1.0 - spec.beta
    marginal = np.repeat(np.eye(X), A, axis=0)  # [xa, x] state indicator

    # The exponent of the Boltzmann measure is affine in the dual vector,
    # k = c0 + B v, and the gradient is G nu - b; precomputing the three
    # matrices makes each iteration a pair of small matrix-vector products.
    c0 = np.repeat(np.log(problem.mu_E), A)
    B = np.hstack([
        f_flat,
        one_minus_beta * marginal,
        one_minus_beta * (p_flat - problem.mu_E[:, None]).T,
    ])
    G = np.vstack([f_flat.T / one_minus_beta, marginal.T, p_flat])
    b = np.concatenate([problem.f_expert, problem.mu_E, problem.mu_E])
    linear = np.concatenate([
        problem.f_expert, problem.mu_E, np.zeros(X)
    ])  # <theta, f_expert> + <lambda, mu_E>

    v = DualPoint.zero(problem).as_vector()
    trace = []
    prev_nu = None
    for _ in range(config.max_iter + 1):
        k = c0 + B @ v
        log_z = log_sum_exp(k)
        g = log_z / one_minus_beta - float(v @ linear)
        if not np.isfinite(g):
            raise NonFinite(f"dual objective diverged after {len(trace)} steps")
        nu_flat = np.exp(k - log_z)
        grad = G @ nu_flat - b
        grad_norm = float(np.abs(grad).max())
        trace.append((g, grad_norm))
        settled = config.settle_tol is None or (
            prev_nu is not None
            and float(np.abs(nu_flat - prev_nu).max()) <= config.settle_tol
        )
        if grad_norm <= config.grad_tol and settled:
            d = DualPoint.from_vector(problem, v)
            nu = OccupationMeasure(
                nu=nu_flat.reshape(X, A), beta=spec.beta, mu0=problem.mu_E
            )
            return d, nu, disintegrate(nu), np.array(trace)
        prev_nu = nu_flat
        v = v - step * grad
    raise NotConverged(
        f"gradient sup-norm {grad_norm:.3e} after {config.max_iter} iterations",
        result=(DualPoint.from_vector(problem, v), np.array(trace)),
    )


def polish_dual(problem, start=None, gtol=1e-12, max_iter=50_000):
    """Quasi-Newton refinement of a dual point with scipy's L-BFGS-B.

    Constant-step descent closes the last stretch of the duality gap
    sublinearly whenever the expert policy is deterministic somewhere: the
    dual infimum is then approached only along an unbounded direction.
    L-BFGS takes large steps along that direction and closes the gap in a
    handful of iterations. Returns (DualPoint, OccupationMeasure, policy);
    the refined point is kept only if it improves the dual objective.
    """
    from scipy.optimize import minimize

    v0 = (start.as_vector() if isinstance(start, DualPoint)
          else DualPoint.zero(problem).as_vector() if start is None
          else np.asarray(start, dtype=float))

    def fun(v):
        return dual_objective(problem, DualPoint.from_vector(problem, v))

    def jac(v):
        return np.concatenate(
            dual_gradient(problem, DualPoint.from_vector(problem, v))
        )

    res = minimize(fun, v0, jac=jac, method="L-BFGS-B",
                   options={"maxiter": max_iter, "ftol": 1e-18, "gtol": gtol})
    v = res.x if res.fun <= fun(v0) else v0
    d = DualPoint.from_vector(problem, v)
    nu = boltzmann(problem, d)
    return d, nu, disintegrate(nu)


def verify_irl(problem, nu):
    """Residuals of the recovered occupation measure against the expert
    constraints: feature matching, invariance, marginal, positivity."""
    table = nu.nu if isinstance(nu, OccupationMeasure) else np.asarray(nu, dtype=float)
    f = problem.features
    p = problem.kernel
    r_feat = float(np.abs(
        np.einsum("xaj,xa->j", f, table) / (1.0 - problem.spec.beta)
        - problem.f_expert
    ).max())
    r_flow = float(np.abs(
        problem.mu_E - np.einsum("zxa,xa->z", p, table)
    ).max())
    r_marg = float(np.abs(table.sum(axis=1) - problem.mu_E).max())
    r_pos = float(max(0.0, -table.min()))
    return {"feat": r_feat, "flow": r_flow, "marg": r_marg, "pos": r_pos}
