"""Independent ground-truth solver for the constrained flow problem.

Feasible injections are exactly {P : P_lo <= P <= P_hi, 1^T P = 1^T P_L},
so the flow problem collapses to a separable box-constrained QP with a
single equality constraint. Its KKT conditions give, per component,

    p_i = clip(P*_i - nu / m_i, P_lo,i, P_hi,i),

where nu is the multiplier of the equality constraint. The map
nu -> sum_i clip(...) is continuous and nonincreasing, so nu is found by
bisection. This solver shares no code path with the dynamics or the
closed-form frequency prediction and serves as their oracle; nu itself
equals the synchronous frequency deviation the dynamics converge to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import EdgeTransform
from .problem import FlowProblem, validate

# Bisection stops once the clip-sum matches the total load this closely.
BISECTION_TOL = 1e-12
MAX_BISECTIONS = 200


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """Optimal injections with recovered primal and dual variables.

    ``nu`` is the equality-constraint multiplier (per-unit frequency);
    ``predicted_omega_s`` is an alias for it. ``theta`` is the unique
    zero-mean angle vector with L theta = p_opt - P_L. Duals for
    inactive constraints are exactly zero by construction.
    """

    p_opt: np.ndarray
    nu: float
    theta: np.ndarray
    lambda_lo: np.ndarray
    lambda_hi: np.ndarray

    @property
    def predicted_omega_s(self) -> float:
        return self.nu

    @property
    def at_lower(self) -> frozenset[int]:
        """Nodes clipped at their lower limit (strictly positive dual)."""
        return frozenset(np.flatnonzero(self.lambda_lo > 0).tolist())

    @property
    def at_upper(self) -> frozenset[int]:
        """Nodes clipped at their upper limit (strictly positive dual)."""
        return frozenset(np.flatnonzero(self.lambda_hi > 0).tolist())


def solve(p: FlowProblem, tol: float = BISECTION_TOL) -> OracleSolution:
    """Solve the flow problem by monotone dual bisection.

    The bracket [nu_min, nu_max] is chosen so all components clip to the
    upper (resp. lower) limit at its ends, which under the feasibility
    assumptions puts the root strictly inside. A bracket failure
    therefore signals a violated assumption 1.
    """
    report = validate(p)
    if not report.passed:
        raise ValueError(f"cannot solve an infeasible problem; {report}")

    total_load = float(p.p_load.sum())

    def clip_sum(nu: float) -> float:
        return float(np.clip(p.p_star - nu / p.m, p.p_lo, p.p_hi).sum())

    lo = float(np.min(p.m * (p.p_star - p.p_hi))) - 1.0
    hi = float(np.max(p.m * (p.p_star - p.p_lo))) + 1.0
    if clip_sum(lo) - total_load <= 0 or clip_sum(hi) - total_load >= 0:
        raise ValueError("bisection bracket failure: assumption 1 violated")
    nu = 0.5 * (lo + hi)
    for _ in range(MAX_BISECTIONS):
        nu = 0.5 * (lo + hi)
        miss = clip_sum(nu) - total_load
        if abs(miss) < tol:
            break
        if miss > 0:  # clip-sum too large, root lies at larger nu
            lo = nu
        else:
            hi = nu
    unclipped = p.p_star - nu / p.m
    p_opt = np.clip(unclipped, p.p_lo, p.p_hi)

    # Per-component stationarity m_i(p_i - P*_i) + nu = sqrt(k_I,i) *
    # (lambda_lo,i - lambda_hi,i) fixes the dual on each clipped
    # component; clipping guarantees the recovered values are >= 0.
    sqrt_ki = p.sqrt_k_i
    lambda_lo = np.zeros(p.n)
    lambda_hi = np.zeros(p.n)
    at_upper = unclipped > p.p_hi
    at_lower = unclipped < p.p_lo
    lambda_hi[at_upper] = (
        -(p.m[at_upper] * (p.p_hi[at_upper] - p.p_star[at_upper]) + nu)
        / sqrt_ki[at_upper]
    )
    lambda_lo[at_lower] = (
        p.m[at_lower] * (p.p_lo[at_lower] - p.p_star[at_lower]) + nu
    ) / sqrt_ki[at_lower]

    theta = recover_theta(p.transform, p_opt, p.p_load)
    return OracleSolution(
        p_opt=p_opt, nu=float(nu), theta=theta, lambda_lo=lambda_lo, lambda_hi=lambda_hi
    )


def recover_theta(
    t: EdgeTransform, p_opt: np.ndarray, p_load: np.ndarray, tol: float = 1e-8
) -> np.ndarray:
    """Zero-mean theta with L theta = p_opt - p_load.

    Such a theta exists iff the right-hand side is orthogonal to the
    all-ones vector; the Moore-Penrose solve picks the canonical
    zero-mean representative out of the shift family theta + c*1.
    """
    p_opt = np.asarray(p_opt, dtype=float)
    p_load = np.asarray(p_load, dtype=float)
    rhs = p_opt - p_load
    if abs(rhs.sum()) > tol * (1.0 + np.linalg.norm(rhs)):
        raise ValueError(
            f"right-hand side not balanced: sum(p_opt - p_load) = {rhs.sum():g}"
        )
    return np.linalg.pinv(t.L) @ rhs
