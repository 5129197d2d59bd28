"""Projected dynamics for the constrained flow problem.

Four right-hand sides share one projected forward-Euler integrator:

* ``networked``: per-node droop plus PI limiting terms; each node only
  needs its own injection, duals, and parameters.
* ``droop``: the same controller written with unscaled integrator states
  mu = sqrt(k_I) * lambda and raw integral gains k_I.
* ``edge_pd``: primal-dual gradient flow of the problem in edge
  coordinates eta = V B^T theta.
* ``node_pd``: primal-dual flow of the augmented Lagrangian in nodal
  coordinates; its dual terms enter through L, so it is not local. Kept
  for comparison experiments only.

Dual multipliers evolve inside the nonnegative orthant via the tangent
cone projection. The integrator uses the clamp form
max(0, lambda + h * rate), which coincides with Euler on the projected
rate: when lambda > 0 the projection is inactive, and when lambda = 0
both updates produce max(0, h * rate).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .problem import FlowProblem

# Integration aborts once the state norm exceeds this bound.
DIVERGENCE_LIMIT = 1e9
DEFAULT_STEP = 1e-3  # s

# Settling thresholds for frequency synchronization.
SPREAD_TOL = 1e-4  # pu, max over tail of (max_i - min_i) omega
DRIFT_TOL = 1e-6  # pu/s, slope of the mean frequency over the tail


class IntegrationError(RuntimeError):
    """State diverged; carries the step index where it was detected."""

    def __init__(self, step: int, t: float):
        super().__init__(f"state diverged at step {step} (t = {t:g} s)")
        self.step = step
        self.t = t


@dataclass(frozen=True, eq=False)
class PrimalDualState:
    """Primal point (theta or eta) plus nonnegative dual multipliers."""

    primal: np.ndarray
    lambda_lo: np.ndarray
    lambda_hi: np.ndarray

    def __post_init__(self) -> None:
        for name in ("primal", "lambda_lo", "lambda_hi"):
            object.__setattr__(
                self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            )
        if np.any(self.lambda_lo < 0) or np.any(self.lambda_hi < 0):
            raise ValueError("dual multipliers must be nonnegative")


def zero_state(p: FlowProblem, coords: str = "nodal") -> PrimalDualState:
    """All-zero state (controller off) of the requested coordinate type."""
    dim = p.n if coords == "nodal" else p.graph.e
    return PrimalDualState(np.zeros(dim), np.zeros(p.n), np.zeros(p.n))


def tangent_project(x, v):
    """Projection of rate v onto the tangent cone of [0, inf) at x.

    Returns v where x > 0 and max(v, 0) where x = 0; elementwise on
    arrays. Negative x violates the contract and raises.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(x < 0):
        raise ValueError("tangent_project requires x >= 0")
    out = np.where(x > 0, v, np.maximum(v, 0.0))
    return float(out) if out.ndim == 0 else out


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _tangent(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    # integrator-internal tangent_project; x >= 0 is maintained by the clamp
    return np.where(x > 0, v, np.maximum(v, 0.0))


def _nodal_frequency(p: FlowProblem, inj, lam_lo, lam_hi, dual_scale) -> np.ndarray:
    # Common frequency law: droop term, proportional limiting terms, and
    # the integral correction. dual_scale is sqrt(k_I) for lambda duals
    # and 1 for mu duals.
    return (
        p.m * (p.p_star - inj)
        - p.k_p * _relu(inj - p.p_hi)
        + p.k_p * _relu(p.p_lo - inj)
        - dual_scale * (lam_hi - lam_lo)
    )


# Each core maps (problem, primal, lam_lo, lam_hi) to
# (dprimal, dlam_lo, dlam_hi, omega, injections); omega and the
# injections fall out of the computation for free and are recorded at
# sample instants.


def _networked_core(p: FlowProblem, primal, lam_lo, lam_hi):
    inj = p.transform.L @ primal + p.p_load
    sqrt_ki = p.sqrt_k_i
    dtheta = _nodal_frequency(p, inj, lam_lo, lam_hi, sqrt_ki)
    dlam_lo = _tangent(lam_lo, sqrt_ki * (p.p_lo - inj))
    dlam_hi = _tangent(lam_hi, sqrt_ki * (inj - p.p_hi))
    return dtheta, dlam_lo, dlam_hi, dtheta, inj


def _droop_core(p: FlowProblem, primal, mu_lo, mu_hi):
    inj = p.transform.L @ primal + p.p_load
    dtheta = _nodal_frequency(p, inj, mu_lo, mu_hi, 1.0)
    dmu_lo = _tangent(mu_lo, p.k_i * (p.p_lo - inj))
    dmu_hi = _tangent(mu_hi, p.k_i * (inj - p.p_hi))
    return dtheta, dmu_lo, dmu_hi, dtheta, inj


def _edge_pd_core(p: FlowProblem, primal, lam_lo, lam_hi):
    t = p.transform
    inj = t.B @ (t.V @ primal) + p.p_load
    sqrt_ki = p.sqrt_k_i
    omega = _nodal_frequency(p, inj, lam_lo, lam_hi, sqrt_ki)
    deta = t.V @ (t.B.T @ omega)
    dlam_lo = _tangent(lam_lo, sqrt_ki * (p.p_lo - inj))
    dlam_hi = _tangent(lam_hi, sqrt_ki * (inj - p.p_hi))
    return deta, dlam_lo, dlam_hi, omega, inj


def _node_pd_core(p: FlowProblem, primal, lam_lo, lam_hi, rho: float = 1.0):
    L = p.transform.L
    inj = L @ primal + p.p_load
    dtheta = -(
        L
        @ (
            p.m * (inj - p.p_star)
            + rho * _relu(inj - p.p_hi)
            + lam_hi
            - rho * _relu(p.p_lo - inj)
            - lam_lo
        )
    )
    dlam_lo = _tangent(lam_lo, p.p_lo - inj)
    dlam_hi = _tangent(lam_hi, inj - p.p_hi)
    return dtheta, dlam_lo, dlam_hi, dtheta, inj


def networked_rhs(p: FlowProblem, s: PrimalDualState):
    """Networked dynamics: local droop/PI law at every node.

    Returns (dtheta, dlambda_lo, dlambda_hi, omega, injections); omega
    is the primal right-hand side itself. Each node's rates depend only
    on its own injection, duals, and parameters.
    """
    return _networked_core(p, s.primal, s.lambda_lo, s.lambda_hi)


def droop_rhs(p: FlowProblem, s: PrimalDualState):
    """Power-limiting droop control with unscaled integrator states mu.

    Identical to the networked dynamics after the change of variables
    mu = sqrt(k_I) * lambda, which also rescales the dual rates from
    sqrt(k_I) to k_I by the scaled scalar projection identity.
    """
    return _droop_core(p, s.primal, s.lambda_lo, s.lambda_hi)


def edge_pd_rhs(p: FlowProblem, s: PrimalDualState):
    """Primal-dual gradient dynamics of the edge-coordinate problem.

    The primal rate is V B^T applied to the same nodal field as the
    networked dynamics, evaluated at injections B V eta + P_L; the
    reported omega is that inner nodal vector, so deta always lies in
    Im(V B^T).
    """
    return _edge_pd_core(p, s.primal, s.lambda_lo, s.lambda_hi)


def node_pd_rhs(p: FlowProblem, s: PrimalDualState, rho: float = 1.0):
    """Primal-dual flow of the augmented Lagrangian in nodal coordinates.

    The dual terms enter the primal rate through L, so implementing this
    flow requires exchanging multipliers between nodes; it is included
    as a comparison artifact. Every primal term is premultiplied by L,
    hence 1^T dtheta = 0 for all states.
    """
    return _node_pd_core(p, s.primal, s.lambda_lo, s.lambda_hi, rho)


@dataclass(frozen=True)
class System:
    """A right-hand side plus the bookkeeping the integrator needs."""

    name: str
    coords: str  # "nodal" or "edge"
    dual_kind: str  # "lambda" or "mu"
    core: Callable


NETWORKED = System("networked", "nodal", "lambda", _networked_core)
DROOP = System("droop", "nodal", "mu", _droop_core)
EDGE_PD = System("edge_pd", "edge", "lambda", _edge_pd_core)


def node_pd_system(rho: float = 1.0) -> System:
    def core(p, primal, lam_lo, lam_hi):
        return _node_pd_core(p, primal, lam_lo, lam_hi, rho)

    return System("node_pd", "nodal", "lambda", core)


NODE_PD = node_pd_system()

SYSTEMS = {s.name: s for s in (NETWORKED, DROOP, EDGE_PD, NODE_PD)}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled simulation output; one row per sample instant."""

    times: np.ndarray  # (S,)
    primal: np.ndarray  # (S, n) or (S, e)
    lambda_lo: np.ndarray  # (S, n)
    lambda_hi: np.ndarray  # (S, n)
    omega: np.ndarray  # (S, n)
    injections: np.ndarray  # (S, n)
    coords: str
    dual_kind: str = "lambda"

    def __post_init__(self) -> None:
        if len(self.times) == 0:
            raise ValueError("empty trajectory")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def state_at(self, k: int) -> PrimalDualState:
        return PrimalDualState(self.primal[k], self.lambda_lo[k], self.lambda_hi[k])

    @property
    def final_state(self) -> PrimalDualState:
        return self.state_at(-1)

    def column_labels(self) -> list[str]:
        primal_name = "theta" if self.coords == "nodal" else "eta"
        dual_name = "lam" if self.dual_kind == "lambda" else "mu"
        labels = ["t"]
        labels += [f"{primal_name}_{i}" for i in range(self.primal.shape[1])]
        labels += [f"omega_{i}" for i in range(self.omega.shape[1])]
        labels += [f"P_{i}" for i in range(self.injections.shape[1])]
        labels += [f"{dual_name}_lo_{i}" for i in range(self.lambda_lo.shape[1])]
        labels += [f"{dual_name}_hi_{i}" for i in range(self.lambda_hi.shape[1])]
        return labels

    def rows(self) -> np.ndarray:
        return np.column_stack(
            [
                self.times,
                self.primal,
                self.omega,
                self.injections,
                self.lambda_lo,
                self.lambda_hi,
            ]
        )

    def to_csv(self, path) -> None:
        """Wide-format CSV, floats at 12 significant digits."""
        lines = [",".join(self.column_labels())]
        for row in self.rows():
            lines.append(",".join(f"{x:.12g}" for x in row))
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")

    def to_long_csv(self, path) -> None:
        """Plot-ready long format: one (t, series, value) row per entry."""
        labels = self.column_labels()[1:]
        rows = self.rows()
        lines = ["t,series,value"]
        for k in range(self.n_samples):
            t = self.times[k]
            for label, x in zip(labels, rows[k, 1:]):
                lines.append(f"{t:.12g},{label},{x:.12g}")
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")


def integrate(
    system: System,
    p: FlowProblem,
    s0: PrimalDualState,
    h: float = DEFAULT_STEP,
    t_end: float = 10.0,
    sample_every: int = 1,
    t0: float = 0.0,
    stop_when: Callable[[FlowProblem, PrimalDualState, float], bool] | None = None,
    check_every: int = 1000,
) -> Trajectory:
    """Projected forward Euler over [t0, t0 + t_end].

    The primal is advanced explicitly; duals are clamped to the
    nonnegative orthant after each step, so they remain feasible at
    every sample. ``stop_when`` is polled every ``check_every`` steps
    and truncates the run when it returns True. A first-order fixed-step
    scheme is used on purpose: the right-hand side is discontinuous at
    constraint boundaries, where smooth high-order integrators lose
    their order advantage, and the clamp preserves the dual constraint
    set exactly.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    n_steps = max(1, int(round(t_end / h)))
    core = system.core

    primal = s0.primal.copy()
    lam_lo = s0.lambda_lo.copy()
    lam_hi = s0.lambda_hi.copy()

    times: list[float] = []
    primals: list[np.ndarray] = []
    lams_lo: list[np.ndarray] = []
    lams_hi: list[np.ndarray] = []
    omegas: list[np.ndarray] = []
    injs: list[np.ndarray] = []

    def record(k: int, omega: np.ndarray, inj: np.ndarray) -> None:
        times.append(t0 + k * h)
        primals.append(primal.copy())
        lams_lo.append(lam_lo.copy())
        lams_hi.append(lam_hi.copy())
        omegas.append(omega)
        injs.append(inj)

    guard_every = min(check_every, 250)
    k = 0
    while k < n_steps:
        dprimal, dlam_lo, dlam_hi, omega, inj = core(p, primal, lam_lo, lam_hi)
        if k % sample_every == 0:
            record(k, omega, inj)
        primal = primal + h * dprimal
        lam_lo = np.maximum(lam_lo + h * dlam_lo, 0.0)
        lam_hi = np.maximum(lam_hi + h * dlam_hi, 0.0)
        k += 1
        if k % guard_every == 0:
            norm = np.sqrt(primal @ primal + lam_lo @ lam_lo + lam_hi @ lam_hi)
            if not norm < DIVERGENCE_LIMIT:
                raise IntegrationError(step=k, t=t0 + k * h)
        if (
            stop_when is not None
            and k % check_every == 0
            and k < n_steps
            and stop_when(p, PrimalDualState(primal, lam_lo, lam_hi), t0 + k * h)
        ):
            break

    final = core(p, primal, lam_lo, lam_hi)
    record(k, final[3], final[4])

    return Trajectory(
        times=np.asarray(times),
        primal=np.asarray(primals),
        lambda_lo=np.asarray(lams_lo),
        lambda_hi=np.asarray(lams_hi),
        omega=np.asarray(omegas),
        injections=np.asarray(injs),
        coords=system.coords,
        dual_kind=system.dual_kind,
    )


@dataclass(frozen=True)
class SyncMetrics:
    """Synchronization summary over the tail of a trajectory."""

    omega_s_estimate: float
    max_spread: float
    mean_drift: float
    settled: bool


def sync_metrics(
    traj: Trajectory,
    tail_fraction: float = 0.2,
    spread_tol: float = SPREAD_TOL,
    drift_tol: float = DRIFT_TOL,
) -> SyncMetrics:
    """Estimate the synchronous frequency over the trajectory tail.

    The estimate is the mean of all nodal frequencies over the last
    ``tail_fraction`` of samples; the run counts as settled when the
    frequencies agree within ``spread_tol`` on that window and their
    mean drifts slower than ``drift_tol``.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must be in (0, 1]")
    s = traj.n_samples
    k0 = min(int(np.ceil((1.0 - tail_fraction) * s)), max(s - 2, 0))
    t = traj.times[k0:]
    omega = traj.omega[k0:]
    estimate = float(omega.mean())
    max_spread = float((omega.max(axis=1) - omega.min(axis=1)).max())
    if len(t) >= 2 and t[-1] > t[0]:
        drift = float(np.polyfit(t, omega.mean(axis=1), 1)[0])
    else:
        drift = 0.0
    return SyncMetrics(
        omega_s_estimate=estimate,
        max_spread=max_spread,
        mean_drift=drift,
        settled=max_spread < spread_tol and abs(drift) < drift_tol,
    )
