"""Optimal averaging: weight choice under a sum-to-one simplex constraint.

Solves min b' Q b over { b : sum b = 1, b >= 0 } with a primal active-set
method.  Multipliers follow Q b = lambda u + rho with rho >= 0 supported on
the pinned weights (so lambda equals the optimal objective and excluded
sites are exactly those whose marginal cost (Qb)_i exceeds lambda),
complementary slackness rho_i b_i = 0 holds exactly, and every returned
solution carries its KKT residual.

Also provides the closed-form minimizer of the missing-data bias term, which
exploits the two-sign-group structure of the stationarity system, and the
directional derivatives of the sampling-bias quadratic at uniform weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import AvailabilityModel, WeightVector
from .delta_stats import delta_bias, delta_variance
from .errors import (
    IndexOutOfRangeError,
    InfeasibleSignsError,
    InvalidParameterError,
    MaxIterationsError,
    NonPsdMatrixError,
)
from .moments import MomentSet, build_variance_matrix

SYMMETRY_TOL = 1e-10
PSD_EIG_TOL = 1e-8          # min eigenvalue >= -PSD_EIG_TOL * trace
RIDGE_FACTOR = 1e-10        # ridge = RIDGE_FACTOR * trace / n when repairing
DUAL_TOL = 1e-10            # rho >= -DUAL_TOL at termination
STATIONARITY_TOL = 1e-8     # residual <= STATIONARITY_TOL * (1 + |Q|_inf)
_FEAS_TOL = 1e-12


@dataclass(frozen=True)
class QpProblem:
    """min b' Q b subject to sum(b) = 1 and b >= 0, with Q symmetric PSD."""

    q_matrix: np.ndarray

    def __post_init__(self):
        q = np.array(self.q_matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise InvalidParameterError("q_matrix must be a square matrix")
        scale = max(1.0, float(np.abs(q).max()))
        if float(np.abs(q - q.T).max()) > SYMMETRY_TOL * scale:
            raise NonPsdMatrixError("q_matrix is not symmetric within tolerance")
        q = 0.5 * (q + q.T)
        min_eig = float(np.linalg.eigvalsh(q).min())
        trace = float(np.trace(q))
        if min_eig < -PSD_EIG_TOL * max(trace, 0.0) - 1e-300:
            raise NonPsdMatrixError(
                f"q_matrix has eigenvalue {min_eig:.3e}, below the PSD tolerance"
            )
        q.setflags(write=False)
        object.__setattr__(self, "q_matrix", q)
        object.__setattr__(self, "_min_eig", min_eig)

    @property
    def n(self) -> int:
        return self.q_matrix.shape[0]


@dataclass(frozen=True)
class QpSolution:
    """KKT point of a simplex-constrained quadratic program.

    Stationarity holds as Q beta = lam * u + rho with rho >= 0 vanishing on
    the support, so ``kkt_residual`` is the max-norm of Q beta - lam - rho.
    """

    beta: WeightVector
    lam: float                      # equality multiplier; equals the objective
    rho: np.ndarray                 # inequality multipliers, nonzero only off-support
    objective: float
    kkt_residual: float
    active_set: tuple[int, ...]
    iterations: int
    ridge: float = 0.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "objective", float(self.objective))
        object.__setattr__(self, "kkt_residual", float(self.kkt_residual))
        object.__setattr__(self, "active_set", tuple(int(i) for i in self.active_set))
        if float(rho.min(initial=0.0)) < -DUAL_TOL:
            raise InvalidParameterError("dual variables must be >= -1e-10")
        slack = float(np.abs(rho * self.beta.beta).max(initial=0.0))
        if slack > 1e-10 * max(1.0, float(np.abs(rho).max(initial=0.0))):
            raise InvalidParameterError("complementary slackness violated")


def _solve_face(q: np.ndarray, free: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimize b'Qb on the face {b_free free, b_active = 0, sum b = 1}."""
    idx = np.flatnonzero(free)
    f = idx.size
    kkt = np.zeros((f + 1, f + 1))
    kkt[:f, :f] = q[np.ix_(idx, idx)]
    kkt[:f, f] = -1.0
    kkt[f, :f] = 1.0
    rhs = np.zeros(f + 1)
    rhs[f] = 1.0
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    x = np.zeros(q.shape[0])
    x[idx] = sol[:f]
    return x, float(sol[f])


def solve_qp(p: QpProblem) -> QpSolution:
    """Primal active-set solve; returns a certified KKT point.

    Starts from uniform weights with no active bounds.  Each iteration
    minimizes on the current face; a blocking bound (lowest index on ties)
    is activated when the step would go negative, and the most negative
    multiplier is released when optimal on the face.
    """
    q = p.q_matrix
    n = p.n
    ridge = 0.0
    min_eig = getattr(p, "_min_eig")
    if min_eig < 0.0:
        ridge = RIDGE_FACTOR * max(float(np.trace(q)), 0.0) / n
        q = q + ridge * np.eye(n)

    beta = np.full(n, 1.0 / n)
    active = np.zeros(n, dtype=bool)
    max_iter = 50 * n
    q_scale = 1.0 + float(np.abs(q).max())

    for iteration in range(1, max_iter + 1):
        cand, lam = _solve_face(q, ~active)
        free_idx = np.flatnonzero(~active)
        if cand[free_idx].min() >= -_FEAS_TOL:
            beta = np.where(cand < 0.0, 0.0, cand)
            rho = q @ beta - lam
            rho[free_idx] = 0.0
            act_idx = np.flatnonzero(active)
            if act_idx.size and rho[act_idx].min() < -DUAL_TOL:
                release = act_idx[int(np.argmin(rho[act_idx]))]
                active[release] = False
                continue
            rho = np.maximum(rho, 0.0)
            residual = float(np.abs(q @ beta - lam - rho).max())
            if residual > STATIONARITY_TOL * q_scale:
                raise MaxIterationsError(
                    f"KKT residual {residual:.3e} exceeds tolerance; "
                    "problem is too ill-conditioned"
                )
            return QpSolution(
                beta=WeightVector(beta),
                lam=lam,
                rho=rho,
                objective=float(beta @ q @ beta),
                kkt_residual=residual,
                active_set=tuple(np.flatnonzero(active)),
                iterations=iteration,
                ridge=ridge,
            )
        # Partial step toward the face minimizer up to the first bound.
        delta = cand - beta
        blockers = free_idx[delta[free_idx] < -_FEAS_TOL]
        ratios = beta[blockers] / -delta[blockers]
        hit = blockers[int(np.argmin(ratios))]
        theta = min(float(ratios.min()), 1.0)
        beta = np.maximum(beta + theta * delta, 0.0)
        beta[hit] = 0.0
        active[hit] = True

    raise MaxIterationsError(f"active-set solve did not converge in {max_iter} iterations")


def minimize_bias(m: MomentSet) -> QpSolution:
    """Weights minimizing the finite-sampling bias quadratic b' D1 b."""
    return solve_qp(QpProblem(m.d1))


def minimize_variance(m: MomentSet, avail: AvailabilityModel) -> QpSolution:
    """Weights minimizing the variance quadratic b' C b at the given alpha.

    The quadratic uses the mean-field approximation; the non-quadratic
    variance expression is re-evaluated at the solution into ``extras``.
    """
    sol = solve_qp(QpProblem(build_variance_matrix(m, avail)))
    sol.extras["exact_variance"] = delta_variance(m, sol.beta, avail)
    return sol


def minimize_mse(m: MomentSet, avail: AvailabilityModel) -> QpSolution:
    """Weights minimizing the quadratic MSE b' (C + D1) b at the given alpha.

    After solving, the exact (non-quadratic) bias and variance are evaluated
    at the optimal weights and stored in ``extras`` as exact_bias_sq,
    exact_variance and exact_mse.
    """
    q = build_variance_matrix(m, avail) + m.d1
    sol = solve_qp(QpProblem(q))
    bias_sq, _, _ = delta_bias(m, sol.beta, avail)
    variance = delta_variance(m, sol.beta, avail)
    sol.extras["exact_bias_sq"] = bias_sq
    sol.extras["exact_variance"] = variance
    sol.extras["exact_mse"] = bias_sq + variance
    return sol


def minimize_missing_bias_closed_form(d2_diag) -> WeightVector:
    """Closed-form minimizer of the missing-data bias contribution.

    If some expected deviation is exactly zero, all weight goes to the first
    such site.  Otherwise the stationarity system forces d_i * b_i to share a
    constant within each sign group; the two constants follow from
    sum_i d_i b_i^2 = 0 and sum_i b_i = 1, taking the branch with b >= 0.
    Requires deviations of both signs, else the zero is unattainable.
    """
    d = np.asarray(d2_diag, dtype=float)
    if d.ndim != 1 or d.size < 1:
        raise InvalidParameterError("d2_diag must be a 1-D vector")
    if not np.all(np.isfinite(d)):
        raise InvalidParameterError("d2_diag contains non-finite values")
    zeros = np.flatnonzero(d == 0.0)
    if zeros.size:
        beta = np.zeros(d.size)
        beta[zeros[0]] = 1.0
        return WeightVector(beta)
    pos = d > 0.0
    neg = ~pos
    if not (pos.any() and neg.any()):
        raise InfeasibleSignsError(
            "all expected deviations share one sign; the missing-data bias "
            "cannot be driven to zero with nonnegative weights"
        )
    a_pos = float((1.0 / d[pos]).sum())
    a_neg = float((1.0 / d[neg]).sum())  # negative
    c_pos = 1.0 / (a_pos + np.sqrt(a_pos * -a_neg))
    c_neg = -c_pos * np.sqrt(a_pos / -a_neg)
    beta = np.empty(d.size)
    beta[pos] = c_pos / d[pos]
    beta[neg] = c_neg / d[neg]
    return WeightVector(beta)


def bias_directional_derivative(m: MomentSet, i: int) -> tuple[float, float]:
    """First and second derivatives of b' D1 b at uniform weights toward e_i.

    The direction is (e_i - u/n) / ||e_i - u/n||; the first derivative is
    negative exactly when column i of D1 has a below-average column sum.
    Site index ``i`` is 0-based.
    """
    n = m.n_locations
    if not (0 <= int(i) < n):
        raise IndexOutOfRangeError(f"site index {i} outside [0, {n})")
    i = int(i)
    d1 = m.d1
    col_sum = float(d1[:, i].sum())
    total = float(d1.sum())
    delta = -np.full(n, 1.0 / n)
    delta[i] += 1.0
    norm = float(np.linalg.norm(delta))
    if norm == 0.0:  # n == 1: no feasible direction
        return 0.0, 0.0
    first = 2.0 / norm * (col_sum / n - total / n**2)
    second = 2.0 / norm**2 * float(delta @ d1 @ delta)
    return first, second
