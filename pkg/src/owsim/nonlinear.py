"""Standard and inexact Newton drivers, forcing-term selection and
time-step control.

The Newton loop is a sequential orchestrator over a problem adapter that
supplies residual evaluation, convergence testing, the (transformed)
linear system and the safeguarded update. Forcing terms use the Euclidean
norms of the linear system actually handed to the Krylov solver, so the
per-iteration tolerance and its recurrence live in one consistent norm;
the nonlinear stopping test is the adapter's own scaled criterion.
"""

import math
from dataclasses import dataclass, field

import numpy as np


class TimeStepAbort(RuntimeError):
    """Time step fell below the controller minimum."""


@dataclass
class NewtonConfig:
    """Nonlinear solve settings.

    epsilon bounds the scaled max-norm of the residual; mb_tol bounds the
    per-phase global balance defect of a step (both must hold to accept).
    Standard mode solves every linear system to linear_tol_fixed; inexact
    mode chooses the tolerance per iteration from the forcing-term
    recurrence, clamped into eta_bounds.
    """

    epsilon: float = 1e-7
    mb_tol: float = 1e-9
    max_newton: int = 20
    mode: str = "inexact"            # standard | inexact
    linear_tol_fixed: float = 1e-4
    forcing_variant: int = 2
    eta_min: float = 0.01
    eta_max: float = 0.1
    beta: float = (math.sqrt(5.0) + 1.0) / 2.0
    gamma: float = 0.9
    max_sw_change: float = 0.2

    def __post_init__(self):
        if not (0.0 < self.eta_min <= self.eta_max < 1.0):
            raise ValueError("need 0 < eta_min <= eta_max < 1")
        if self.max_newton < 1:
            raise ValueError("max_newton must be >= 1")
        if self.mode not in ("standard", "inexact"):
            raise ValueError(f"unknown Newton mode {self.mode!r}")


@dataclass
class TimeStepController:
    """Growth/cut time-step policy (days)."""

    dt_init: float = 1.0
    dt_max: float = 100.0
    dt_min: float = 1e-3
    growth: float = 2.0
    cut: float = 0.5

    def __post_init__(self):
        if not (self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need dt_min <= dt_init <= dt_max")
        if self.growth <= 1.0:
            raise ValueError("growth factor must be > 1")
        if not (0.0 < self.cut < 1.0):
            raise ValueError("cut factor must lie in (0, 1)")


def forcing_term(l, norm_b, norm_b_prev, norm_r_prev, config,
                 diff_norm_prev=None):
    """Per-iteration linear tolerance eta_l for inexact Newton.

    Variant 2 (default): (||b(x^l)|| - ||r^(l-1)||) / ||b(x^(l-1))||.
    Variant 1 needs ||b(x^l) - r^(l-1)|| supplied by the caller; variant 3
    is gamma*(||b^l||/||b^(l-1)||)^beta. The first iteration and any
    degenerate history fall back to eta_max; the result is clamped into
    [eta_min, eta_max].
    """
    if l == 0 or norm_b_prev is None or norm_b_prev == 0.0:
        return config.eta_max
    v = config.forcing_variant
    if v == 1:
        if diff_norm_prev is None:
            raise ValueError("variant 1 needs ||b^l - r^(l-1)||")
        raw = diff_norm_prev / norm_b_prev
    elif v == 2:
        raw = (norm_b - norm_r_prev) / norm_b_prev
    elif v == 3:
        raw = config.gamma * (norm_b / norm_b_prev) ** config.beta
    else:
        raise ValueError(f"unknown forcing variant {v}")
    return float(min(max(raw, config.eta_min), config.eta_max))


@dataclass
class IterationRecord:
    """One Newton iteration of one step attempt, as logged to the
    iteration CSV."""

    newton_iter: int
    resid_scaled: float          # scaled max-norm of the nonlinear residual
    norm_b_linear: float         # Euclidean norm of the transformed rhs
    eta: float
    linear_iters: int
    linear_resid_rel: float
    linear_flag: str
    ss_upper_pre: float = float("nan")
    ss_upper_post: float = float("nan")


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    records: list = field(default_factory=list)
    failure: str = ""


def newton_solve(problem, x0, config):
    """Newton/inexact-Newton loop: solve F(x)=0 from x0.

    Per iteration: evaluate the residual, test convergence, assemble the
    Jacobian system, pick eta (fixed in standard mode), solve
    ||A y - b|| <= eta ||b||, apply x <- x + y through the problem's
    safeguards. Fails on the iteration cap, on three consecutive residual
    increases, or on a linear-solver breakdown; failures signal a
    time-step cut to the caller.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    report = NewtonReport(converged=False, iterations=0)
    prev_scaled = math.inf
    rises = 0
    norm_b_prev = None
    norm_r_prev = None

    for l in range(config.max_newton + 1):
        F = problem.residual(x)
        if not np.all(np.isfinite(F)):
            report.failure = "residual not finite"
            return x, report
        done, scaled = problem.converged(F)
        if done:
            report.converged = True
            report.iterations = l
            return x, report
        if scaled > prev_scaled:
            rises += 1
            if rises >= 3:
                report.failure = "diverging (3 consecutive residual rises)"
                return x, report
        else:
            rises = 0
        prev_scaled = scaled
        if l == config.max_newton:
            report.failure = f"no convergence in {config.max_newton} iterations"
            report.iterations = l
            return x, report

        lin = problem.linear_system(x, F)
        if config.mode == "standard":
            eta = config.linear_tol_fixed
        else:
            eta = forcing_term(l, lin.norm_b, norm_b_prev, norm_r_prev,
                               config)
        y, info = lin.solve(eta)
        if not np.all(np.isfinite(y)):
            report.failure = "linear solution not finite"
            return x, report
        if info["flag"] == "breakdown":
            report.failure = "linear solver breakdown"
            return x, report
        if info["resid_rel"] >= 1.0:
            report.failure = "linear solver made no progress"
            return x, report
        x = problem.apply_update(x, y)
        report.iterations = l + 1
        report.records.append(IterationRecord(
            newton_iter=l + 1,
            resid_scaled=scaled,
            norm_b_linear=lin.norm_b,
            eta=eta,
            linear_iters=info["iterations"],
            linear_resid_rel=info["resid_rel"],
            linear_flag=info["flag"],
            ss_upper_pre=info.get("ss_upper_pre", float("nan")),
            ss_upper_post=info.get("ss_upper_post", float("nan")),
        ))
        norm_b_prev = lin.norm_b
        norm_r_prev = info["resid_norm"]
    report.failure = "iteration cap"
    return x, report


def clip_to_boundary(t, dt, boundaries):
    """Largest step from t not exceeding the next boundary (or dt)."""
    for b in boundaries:
        if b > t + 1e-12:
            return min(dt, b - t)
    return dt


def advance_timestep(solve_step, state, dt, controller, boundaries):
    """Attempt one accepted time step with cut-and-retry control.

    solve_step(state, dt) -> (ok, new_state, details). On failure the step
    is retried from the same state at dt*cut; below dt_min the simulation
    aborts. Returns (accepted state, next dt, list of attempt details);
    the next dt is grown and capped, and will be boundary-clipped by the
    caller on the next step.
    """
    attempts = []
    while True:
        dt_eff = clip_to_boundary(state.t, min(dt, controller.dt_max),
                                  boundaries)
        ok, new_state, details = solve_step(state, dt_eff)
        attempts.append(details)
        if ok:
            next_dt = min(dt_eff * controller.growth, controller.dt_max)
            return new_state, next_dt, attempts
        dt = dt_eff * controller.cut
        if dt < controller.dt_min:
            raise TimeStepAbort(
                f"time step {dt:.3e} days fell below the minimum "
                f"{controller.dt_min:.3e} at t={state.t}")
