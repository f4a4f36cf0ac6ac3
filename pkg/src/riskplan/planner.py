"""Receding-horizon trajectory optimization over continuous risk fields.

The program minimizes quadratic tracking and input costs plus the summed
risk-field values along the trajectory, subject to the bicycle dynamics
and box bounds.  States are eliminated by single shooting, so the
decision variable is the input sequence alone; input bounds are kept by
projection and the (linear-in-input) velocity and steering bounds by a
quadratic penalty whose weight escalates until they hold to tolerance.
Risk enters the cost, never a constraint, so a finite-cost plan always
exists.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
from numpy.typing import NDArray

from .dynamics import DynamicsError, VehicleParams, jacobians, rollout_array
from .riskfield import EntityFields


class PlannerError(ValueError):
    pass


class PlannerFailure(RuntimeError):
    """Solve aborted on a non-finite cost; diagnostics attached."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class SolverSettings:
    max_iter: int = 200
    stationarity_tol: float = 1e-4
    step_tol: float = 1e-8
    penalty_init: float = 1e4
    penalty_growth: float = 100.0
    penalty_tol: float = 1e-6
    penalty_max_rounds: int = 8


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int
    stage_weights: NDArray[np.float64]
    input_weights: NDArray[np.float64]
    terminal_weights: NDArray[np.float64]
    vehicle: VehicleParams
    solver: SolverSettings = SolverSettings()

    def __post_init__(self):
        if self.horizon < 1:
            raise PlannerError("horizon must be >= 1")
        for name in ("stage_weights", "terminal_weights"):
            w = np.asarray(getattr(self, name), dtype=float)
            if w.shape != (5,) or (w < 0).any():
                raise PlannerError(f"{name} must be 5 non-negative weights")
            object.__setattr__(self, name, w)
        w = np.asarray(self.input_weights, dtype=float)
        if w.shape != (2,) or (w < 0).any():
            raise PlannerError("input_weights must be 2 non-negative weights")
        object.__setattr__(self, "input_weights", w)

    def input_bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        b = self.vehicle.bounds
        lo = np.array([b.a_min, b.omega_min])
        hi = np.array([b.a_max, b.omega_max])
        return lo, hi


@dataclass
class PlanResult:
    u_seq: NDArray[np.float64]  # (N, 2)
    x_seq: NDArray[np.float64]  # (N+1, 5)
    cost: float
    breakdown: dict[str, float]
    iterations: int
    stationarity: float
    feasible: bool
    penalty_weight: float
    status: str
    wall_time_s: float = 0.0
    fallback: bool = False


@dataclass
class _CostRecord:
    total: float  # objective including the bound penalty
    true_cost: float  # objective without the penalty
    grad: NDArray[np.float64] | None
    breakdown: dict[str, float]
    violation: float
    states: NDArray[np.float64] | None


def _state_bound_violation(states, bounds) -> float:
    v = states[1:, 3]
    d = states[1:, 4]
    return float(
        max(
            np.maximum(v - bounds.v_max, 0.0).max(initial=0.0),
            np.maximum(bounds.v_min - v, 0.0).max(initial=0.0),
            np.maximum(d - bounds.delta_max, 0.0).max(initial=0.0),
            np.maximum(bounds.delta_min - d, 0.0).max(initial=0.0),
        )
    )


def _evaluate(x_s, u_seq, refs, fields: EntityFields, cfg: PlannerConfig, penalty_weight, want_grad):
    """Cost, optional gradient via reverse accumulation, and diagnostics."""
    N = cfg.horizon
    p = cfg.vehicle
    try:
        states = rollout_array(x_s, u_seq, p)
    except DynamicsError:
        return _CostRecord(np.inf, np.inf, None, {}, np.inf, None)
    errs = states[1:] - refs  # (N, 5), rows n = 1..N
    lw = cfg.stage_weights
    tw = cfg.terminal_weights
    iw = cfg.input_weights
    stage = float((lw * errs[:-1] ** 2).sum()) if N > 1 else 0.0
    terminal = float((tw * errs[-1] ** 2).sum())
    inputs = float((iw * u_seq**2).sum())

    # risk terms, clamped at zero against spline undershoot
    risk_vals = {"infrastructure": 0.0, "objects": 0.0, "hidden": 0.0}
    dstate = np.zeros((N + 1, 5))
    dstate[1:-1] += 2.0 * lw * errs[:-1]
    dstate[-1] += 2.0 * tw * errs[-1]
    xs = states[1:, 0]
    ys = states[1:, 1]
    for fld in fields.infrastructure:
        v, gx, gy = fld.eval_many(xs, ys)
        if np.isnan(v).any():
            risk_vals["infrastructure"] = float("nan")
            break
        pos = v > 0.0
        risk_vals["infrastructure"] += float(v[pos].sum())
        dstate[1:, 0] += np.where(pos, gx, 0.0)
        dstate[1:, 1] += np.where(pos, gy, 0.0)
    for group, per_entity in (("objects", fields.objects), ("hidden", fields.hidden)):
        for per_step in per_entity:
            for n in range(1, N + 1):
                v, gx, gy = per_step[n].eval(states[n, 0], states[n, 1])
                if v != v:  # NaN: poisoned field, surface it to the solver
                    risk_vals[group] = float("nan")
                elif v > 0.0:
                    risk_vals[group] += v
                    dstate[n, 0] += gx
                    dstate[n, 1] += gy

    pen_value = 0.0
    violation = _state_bound_violation(states, p.bounds)
    if penalty_weight > 0.0:
        v = states[1:, 3]
        d = states[1:, 4]
        b = p.bounds
        over_v = np.maximum(v - b.v_max, 0.0)
        under_v = np.maximum(b.v_min - v, 0.0)
        over_d = np.maximum(d - b.delta_max, 0.0)
        under_d = np.maximum(b.delta_min - d, 0.0)
        pen_value = penalty_weight * float(
            (over_v**2 + under_v**2 + over_d**2 + under_d**2).sum()
        )
        dstate[1:, 3] += penalty_weight * 2.0 * (over_v - under_v)
        dstate[1:, 4] += penalty_weight * 2.0 * (over_d - under_d)

    true_cost = stage + terminal + inputs + sum(risk_vals.values())
    total = true_cost + pen_value
    breakdown = {
        "tracking": stage + terminal,
        "input": inputs,
        **risk_vals,
    }
    if not want_grad:
        return _CostRecord(total, true_cost, None, breakdown, violation, states)

    grad = np.empty((N, 2))
    lam = dstate[N]
    for n in range(N - 1, -1, -1):
        A, B = jacobians(states[n], u_seq[n], p)
        grad[n] = 2.0 * iw * u_seq[n] + B.T @ lam
        if n >= 1:
            lam = dstate[n] + A.T @ lam
    return _CostRecord(total, true_cost, grad, breakdown, violation, states)


def total_cost(x_s, u_seq, refs, fields: EntityFields, cfg: PlannerConfig, penalty_weight=0.0):
    """Objective value and gradient d J / d u for a candidate input sequence.

    `refs` holds the reference states for n = 1..N as an (N, 5) array.
    With penalty_weight 0 this is exactly the planning objective: stage
    and terminal tracking, input effort, and the per-entity risk-field
    sums evaluated along the rollout.
    """
    x_s = np.asarray(x_s, dtype=float)
    u_seq = np.asarray(u_seq, dtype=float)
    refs = np.asarray(refs, dtype=float)
    if u_seq.shape != (cfg.horizon, 2):
        raise PlannerError(f"expected inputs of shape ({cfg.horizon}, 2), got {u_seq.shape}")
    if refs.shape != (cfg.horizon, 5):
        raise PlannerError(f"expected references of shape ({cfg.horizon}, 5), got {refs.shape}")
    if fields.horizon < cfg.horizon:
        raise PlannerError("entity fields cover fewer steps than the horizon")
    rec = _evaluate(x_s, u_seq, refs, fields, cfg, penalty_weight, want_grad=True)
    return rec.total, rec.grad, rec.breakdown


def solve(x_s, refs, fields: EntityFields, cfg: PlannerConfig, warm_start=None) -> PlanResult:
    """Minimize the planning objective over bounded input sequences.

    Projected quasi-Newton descent (bounded limited-memory BFGS) on the
    input sequence; the velocity/steering bound penalty is escalated
    across outer rounds until the rollout satisfies the bounds to
    tolerance.  Deterministic for identical arguments; the returned
    sequence is feasible whenever any feasible iterate was seen and never
    costs more than the starting guess.
    """
    t_start = time.perf_counter()
    N = cfg.horizon
    st = cfg.solver
    x_s = np.asarray(x_s, dtype=float).copy()
    b = cfg.vehicle.bounds
    x_s[3] = min(max(x_s[3], b.v_min), b.v_max)
    x_s[4] = min(max(x_s[4], b.delta_min), b.delta_max)
    refs = np.asarray(refs, dtype=float)
    lo, hi = cfg.input_bounds()
    if warm_start is None:
        u = np.zeros((N, 2))
    else:
        u = np.clip(np.asarray(warm_start, dtype=float).reshape(N, 2), lo, hi)
    box = scipy.optimize.Bounds(np.tile(lo, N), np.tile(hi, N))

    mu = st.penalty_init
    iters_total = 0
    best = None  # (true_cost, u, breakdown)
    status = "max_iter"

    def note_candidate(rec, u_val):
        nonlocal best
        if rec.violation <= st.penalty_tol and np.isfinite(rec.true_cost):
            if best is None or rec.true_cost < best[0]:
                best = (rec.true_cost, u_val.copy(), dict(rec.breakdown))

    def objective(mu_round):
        def fun(z):
            u_trial = z.reshape(N, 2)
            rec = _evaluate(x_s, u_trial, refs, fields, cfg, mu_round, want_grad=True)
            if np.isnan(rec.total):
                raise PlannerFailure(
                    "non-finite cost during line search",
                    {"iterations": iters_total, "penalty_weight": mu_round},
                )
            if np.isinf(rec.total):
                # dynamics blow-up on a trial point: huge finite barrier so
                # the line search backs off
                return 1e20, np.zeros(2 * N)
            note_candidate(rec, u_trial)
            return rec.total, rec.grad.ravel()

        return fun

    rec = _evaluate(x_s, u, refs, fields, cfg, mu, want_grad=True)
    if np.isnan(rec.total):
        raise PlannerFailure("non-finite cost at solver start", {"iterations": 0, "penalty_weight": mu})
    note_candidate(rec, u)

    for round_idx in range(st.penalty_max_rounds + 1):
        remaining = st.max_iter - iters_total
        if remaining <= 0:
            status = "max_iter"
            break
        # leave budget for the escalation rounds that tighten state bounds
        budget = remaining if round_idx == st.penalty_max_rounds else max(10, remaining // 2)
        opt = scipy.optimize.minimize(
            objective(mu),
            u.ravel(),
            jac=True,
            method="L-BFGS-B",
            bounds=box,
            options={
                "maxiter": budget,
                "gtol": st.stationarity_tol,
                "ftol": st.step_tol,
                "maxcor": 20,
            },
        )
        iters_total += int(opt.nit)
        u = np.clip(opt.x.reshape(N, 2), lo, hi)
        rec = _evaluate(x_s, u, refs, fields, cfg, mu, want_grad=True)
        note_candidate(rec, u)
        status = {0: "stationary", 1: "max_iter"}.get(int(opt.status), "stalled")
        if rec.violation <= st.penalty_tol:
            break
        if iters_total >= st.max_iter or round_idx == st.penalty_max_rounds:
            break
        mu *= st.penalty_growth

    u_final = best[1] if best is not None else u
    final = _evaluate(x_s, u_final, refs, fields, cfg, 0.0, want_grad=True)
    pg = np.clip(u_final - final.grad, lo, hi) - u_final
    return PlanResult(
        u_seq=u_final,
        x_seq=final.states,
        cost=final.true_cost,
        breakdown=final.breakdown,
        iterations=iters_total,
        stationarity=float(np.abs(pg).max()),
        feasible=final.violation <= st.penalty_tol,
        penalty_weight=mu,
        status=status,
        wall_time_s=time.perf_counter() - t_start,
    )


class RecedingHorizonPlanner:
    """Closed-loop wrapper: solve, apply the first input, shift to warm-start.

    A solver failure falls back to maximum braking with zero steering rate
    and clears the warm start; the fallback is flagged on the result so
    callers can log it.
    """

    def __init__(self, cfg: PlannerConfig):
        self.cfg = cfg
        self._last_u: NDArray[np.float64] | None = None

    def _warm_start(self):
        if self._last_u is None:
            return None
        shifted = np.vstack([self._last_u[1:], self._last_u[-1:]])
        return shifted

    def step(self, x_s, refs, fields: EntityFields):
        """One receding-horizon step; returns (applied input, PlanResult)."""
        warm = self._warm_start()
        try:
            result = solve(x_s, refs, fields, self.cfg, warm_start=warm)
        except PlannerFailure as failure:
            lo, hi = self.cfg.input_bounds()
            u_brake = np.clip(
                np.tile([self.cfg.vehicle.bounds.a_min, 0.0], (self.cfg.horizon, 1)), lo, hi
            )
            x_seq = rollout_array(np.asarray(x_s, dtype=float), u_brake, self.cfg.vehicle)
            self._last_u = None
            result = PlanResult(
                u_seq=u_brake,
                x_seq=x_seq,
                cost=float("nan"),
                breakdown={},
                iterations=int(failure.diagnostics.get("iterations", 0)),
                stationarity=float("nan"),
                feasible=False,
                penalty_weight=float(failure.diagnostics.get("penalty_weight", 0.0)),
                status="fallback_braking",
                fallback=True,
            )
            return result.u_seq[0], result
        self._last_u = result.u_seq
        return result.u_seq[0], result
