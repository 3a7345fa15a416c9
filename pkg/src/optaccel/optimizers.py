"""Accelerated minibatch SGD, a plain minibatch SGD baseline, and the
restart meta-scheme that upgrades the convex-rate method to linear
convergence under quadratic growth.

The accelerated method keeps two coupled sequences: a projected iterate
``w`` and an averaged iterate ``w_ag``.  Each step queries the minibatch
gradient at the momentum blend ``w_md = w / beta_t + (1 - 1/beta_t) w_ag``,
moves ``w`` with a stepsize that grows linearly in ``t``, projects back to
the feasible ball, and folds the result into the average.  The base
stepsize is the minimum of a smoothness-limited, a horizon-limited, and a
noise-limited term, the last one dropping out when the gradient variance at
the minimizer is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problems import Problem, SampleStream, config_hash, minibatch_gradient, sample_batch
from .trace import RunTrace, TraceRecorder, canonical_json, sha256_text

__all__ = [
    "StepSchedule",
    "OptimizerState",
    "NonFiniteGradientError",
    "make_schedule",
    "project_ball",
    "acc_step",
    "run_acc_mb_sgd",
    "run_sgd",
    "stage_budget",
    "Stage",
    "StagePlan",
    "make_stage_plan",
    "run_restarted",
    "accel_error_bound",
]

# coefficients of the accelerated method's explicit error bound
#   C_DET * H B^2 / T^2 + C_MB * H B^2 / (b T) + C_NOISE * sigma_* B / sqrt(b T)
# used to size restart stage budgets
_C_DET = 108.0
_C_MB = 144.0
_C_NOISE = 27.0

# position offset separating diagnostic draws from batch draws in a stream
_DIAG_POSITION = 1 << 40


class NonFiniteGradientError(RuntimeError):
    """A minibatch gradient came back with NaN or infinite entries."""


@dataclass(frozen=True)
class StepSchedule:
    """Stepsize/momentum schedule of the accelerated method.

    ``beta(t) = 1 + t/6`` and ``gamma_t(t) = gamma * (t + 1)``; the base
    stepsize satisfies ``2 H gamma_t(t) <= beta(t)`` for every ``t < T``.
    ``noise_sq`` is the gradient variance bound at the minimizer (by
    default twice the smoothness constant times the minimum loss).
    """

    gamma: float
    T: int
    b: int
    H: float
    B: float
    noise_sq: float

    def beta(self, t: int) -> float:
        return 1.0 + t / 6.0

    def gamma_t(self, t: int) -> float:
        return self.gamma * (t + 1)

    def content(self) -> dict:
        return {"gamma": self.gamma, "T": self.T, "b": self.b,
                "H": self.H, "B": self.B, "noise_sq": self.noise_sq}


def make_schedule(H: float, b: int, T: int, B: float,
                  noise_sq: float) -> StepSchedule:
    """Build the schedule for a run of horizon ``T`` with batches of size ``b``.

    The base stepsize is
    ``min(1 / (12 H), b / (24 H (T + 1)), sqrt(b B**2 / (noise_sq T**3)))``,
    the last term treated as infinite when ``noise_sq`` is zero.
    """
    if H <= 0 or B <= 0:
        raise ValueError(f"H and B must be positive, got H={H}, B={B}")
    if T < 1 or b < 1:
        raise ValueError(f"T and b must be >= 1, got T={T}, b={b}")
    if noise_sq < 0:
        raise ValueError(f"noise_sq must be >= 0, got {noise_sq}")
    gamma = min(1.0 / (12.0 * H), b / (24.0 * H * (T + 1)))
    if noise_sq > 0:
        gamma = min(gamma, math.sqrt(b * B**2 / (noise_sq * T**3)))
    return StepSchedule(gamma=gamma, T=int(T), b=int(b), H=float(H),
                        B=float(B), noise_sq=float(noise_sq))


def project_ball(w: np.ndarray, B: float) -> np.ndarray:
    """Euclidean projection onto the origin-centered ball of radius ``B``."""
    if B <= 0:
        raise ValueError(f"radius must be positive, got {B}")
    norm = float(np.linalg.norm(w))
    if norm <= B:
        return w
    return w * (B / norm)


@dataclass(frozen=True)
class OptimizerState:
    """Projected iterate, averaged iterate, and the step counter."""

    w: np.ndarray
    w_ag: np.ndarray
    t: int


def _zero_state(d: int) -> OptimizerState:
    return OptimizerState(w=np.zeros(d), w_ag=np.zeros(d), t=0)


def acc_step(state: OptimizerState, schedule: StepSchedule, problem: Problem,
             stream: SampleStream, recorder: TraceRecorder | None = None,
             center: np.ndarray | None = None, stage: int = 0,
             t_offset: int = 0) -> OptimizerState:
    """One update of the accelerated method.

    State vectors live in coordinates relative to ``center`` (the origin for
    plain runs); gradients are evaluated at the corresponding absolute
    point.  Diagnostics for the completed step are appended to ``recorder``
    when one is given.
    """
    t = state.t
    if t >= schedule.T:
        raise ValueError(f"step t={t} beyond schedule horizon T={schedule.T}")
    beta_inv = 1.0 / schedule.beta(t)
    gamma_t = schedule.gamma_t(t)
    w_md = beta_inv * state.w + (1.0 - beta_inv) * state.w_ag

    query = w_md if center is None else center + w_md
    batch = sample_batch(problem, schedule.b, stream)
    g = minibatch_gradient(problem, query, batch)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError(f"non-finite gradient at step t={t}")

    w_next = project_ball(state.w - gamma_t * g, schedule.B)
    w_ag_next = beta_inv * w_next + (1.0 - beta_inv) * state.w_ag

    if recorder is not None:
        _record_step(recorder, problem, schedule, center, w_md, g,
                     w_next, w_ag_next, t_offset + t + 1, stage, stream)
    return OptimizerState(w=w_next, w_ag=w_ag_next, t=t + 1)


def _record_step(recorder, problem, schedule, center, w_md, g,
                 w_next, w_ag_next, t_global, stage, stream):
    point = w_ag_next if center is None else center + w_ag_next
    if problem.has_exact_L:
        subopt = problem.suboptimality(point)
        stderr = 0.0
    else:
        est, stderr = _mc_subopt(problem, point, stream, t_global)
        subopt = est
    if hasattr(problem, "exact_grad"):
        query = w_md if center is None else center + w_md
        delta = g - problem.exact_grad(query)
        noise_sq = float(delta @ delta)
    else:
        noise_sq = float("nan")
    recorder.append(t_global, float(np.linalg.norm(w_next)),
                    float(np.linalg.norm(w_ag_next)), subopt, stderr,
                    noise_sq, stage)


def _mc_subopt(problem, point, stream, t_global, n=256):
    gen = stream.generator_at(_DIAG_POSITION + t_global)
    batch = problem.sample(gen, n)
    vals = problem.batch_loss(point, batch)
    est = float(np.mean(vals)) - problem.meta.Lstar
    se = float(np.std(vals, ddof=1) / math.sqrt(n))
    return est, se


def _run_header(problem, algorithm, b, T, seed, schedule=None, extra=None):
    cfg = problem.config()
    hdr = {
        "problem": cfg,
        "problem_hash": config_hash(cfg),
        "algorithm": algorithm,
        "b": int(b),
        "T": int(T),
        "seed": int(seed),
    }
    if schedule is not None:
        hdr["schedule"] = schedule.content()
        hdr["schedule_hash"] = sha256_text(canonical_json(schedule.content()))[:16]
    if extra:
        hdr.update(extra)
    return hdr


def run_acc_mb_sgd(problem: Problem, b: int, T: int,
                   B_override: float | None = None,
                   noise_sq_override: float | None = None,
                   seed: int = 0) -> tuple[np.ndarray, RunTrace]:
    """Run the accelerated method for ``T`` steps from the origin.

    The feasible radius defaults to the problem's certified minimizer-norm
    bound and the noise parameter to twice the smoothness constant times
    the certified minimum loss; both accept looser upper bounds via the
    overrides.  Returns the final averaged iterate and the full trace.
    """
    meta = problem.meta
    B = meta.B if B_override is None else float(B_override)
    noise_sq = (2.0 * meta.H * meta.Lstar if noise_sq_override is None
                else float(noise_sq_override))
    schedule = make_schedule(meta.H, b, T, B, noise_sq)
    recorder = TraceRecorder(_run_header(problem, "acc_mb_sgd", b, T, seed,
                                         schedule))
    stream = problem.stream(seed)
    state = _zero_state(problem.d)
    try:
        for _ in range(T):
            state = acc_step(state, schedule, problem, stream, recorder)
    except NonFiniteGradientError as err:
        recorder.aborted = True
        recorder.header["abort_reason"] = str(err)
    return state.w_ag, recorder.build()


def run_sgd(problem: Problem, b: int, T: int, schedule_kind: str = "constant",
            seed: int = 0, eta: float | None = None,
            B_override: float | None = None) -> tuple[np.ndarray, RunTrace]:
    """Projected minibatch SGD with tail averaging, as a baseline.

    The only supported stepsize rule is a constant
    ``min(1 / (2 H), eta)``; pass ``eta`` from a tuning grid to give the
    baseline its best case.  The averaged iterate at step ``t`` is the mean
    of the most recent ``ceil(t / 2)`` projected iterates, and the final
    tail average is returned.
    """
    if schedule_kind != "constant":
        raise ValueError(f"unknown SGD schedule kind {schedule_kind!r}")
    meta = problem.meta
    B = meta.B if B_override is None else float(B_override)
    step = 1.0 / (2.0 * meta.H)
    if eta is not None:
        step = min(step, float(eta))
    header = _run_header(problem, "sgd", b, T, seed,
                         extra={"eta": step, "B": B,
                                "schedule_kind": schedule_kind})
    recorder = TraceRecorder(header)
    stream = problem.stream(seed)
    w = np.zeros(problem.d)
    prefix = [np.zeros(problem.d)]  # prefix[k] = sum of w_1..w_k
    try:
        for t in range(T):
            batch = sample_batch(problem, b, stream)
            g = minibatch_gradient(problem, w, batch)
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient at step t={t}")
            w = project_ball(w - step * g, B)
            prefix.append(prefix[-1] + w)
            lo = (t + 1) // 2  # average w_{lo+1} .. w_{t+1}
            w_avg = (prefix[t + 1] - prefix[lo]) / (t + 1 - lo)
            _record_sgd_step(recorder, problem, w, w_avg, g, t + 1, stream)
    except NonFiniteGradientError as err:
        recorder.aborted = True
        recorder.header["abort_reason"] = str(err)
    n_done = len(prefix) - 1  # completed steps (fewer than T after an abort)
    lo = n_done // 2
    w_avg = (prefix[n_done] - prefix[lo]) / max(n_done - lo, 1)
    return w_avg, recorder.build()


def _record_sgd_step(recorder, problem, w, w_avg, g, t, stream):
    if problem.has_exact_L:
        subopt = problem.suboptimality(w_avg)
        stderr = 0.0
    else:
        subopt, stderr = _mc_subopt(problem, w_avg, stream, t)
    if hasattr(problem, "exact_grad"):
        delta = g - problem.exact_grad(w)
        noise_sq = float(delta @ delta)
    else:
        noise_sq = float("nan")
    recorder.append(t, float(np.linalg.norm(w)), float(np.linalg.norm(w_avg)),
                    subopt, stderr, noise_sq, 0)


# ---------------------------------------------------------------------------
# restart scheme
# ---------------------------------------------------------------------------


def accel_error_bound(T: int, H: float, B_sq: float, b: int,
                      Lstar: float) -> float:
    """Explicit suboptimality bound of the accelerated method after ``T`` steps."""
    sigma_star = math.sqrt(2.0 * H * Lstar)
    return (_C_DET * H * B_sq / T**2 + _C_MB * H * B_sq / (b * T)
            + _C_NOISE * sigma_star * math.sqrt(B_sq) / math.sqrt(b * T))


def stage_budget(eps: float, B_sq: float, H: float, b: int,
                 Lstar: float) -> int:
    """Smallest horizon whose error bound is at most ``eps``.

    The bound is strictly decreasing in ``T`` and tends to zero, so the
    doubling-then-bisection search always terminates.
    """
    if eps <= 0 or B_sq <= 0:
        raise ValueError("eps and B_sq must be positive")
    hi = 1
    while accel_error_bound(hi, H, B_sq, b, Lstar) > eps:
        hi *= 2
    if hi == 1:
        return 1
    lo = hi // 2  # bound(lo) > eps >= bound(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if accel_error_bound(mid, H, B_sq, b, Lstar) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class Stage:
    eps_t: float
    B_t: float
    T_t: int


@dataclass(frozen=True)
class StagePlan:
    """Restart schedule: geometrically shrinking targets and radii.

    Stage ``t`` (1-based) targets suboptimality ``theta**-t * Delta`` inside
    a ball of squared radius ``2 theta**(1-t) Delta / lam`` around the
    previous stage's output, with just enough iterations for the error
    bound to meet the target.
    """

    theta: float
    stages: tuple[Stage, ...]
    lam: float
    Delta: float
    H: float
    b: int
    Lstar: float

    @property
    def total_iterations(self) -> int:
        return sum(s.T_t for s in self.stages)

    def content(self) -> dict:
        return {
            "theta": self.theta, "lam": self.lam, "Delta": self.Delta,
            "H": self.H, "b": self.b, "Lstar": self.Lstar,
            "stages": [{"eps_t": s.eps_t, "B_t": s.B_t, "T_t": s.T_t}
                       for s in self.stages],
        }


def make_stage_plan(Delta: float, eps: float, theta: float, lam: float,
                    H: float, b: int, Lstar: float) -> StagePlan:
    """Plan ``ceil(log_theta(Delta / eps))`` restart stages.

    Returns an empty plan when ``eps >= Delta`` (nothing to do).  The
    number-of-stages logarithm is evaluated with a 1e-9 tolerance so exact
    powers of ``theta`` do not round up.
    """
    if theta <= 1:
        raise ValueError(f"theta must exceed 1, got {theta}")
    if eps <= 0 or Delta <= 0:
        raise ValueError("eps and Delta must be positive")
    if lam <= 0:
        raise ValueError(f"growth constant must be positive, got {lam}")
    if eps >= Delta:
        n_stages = 0
    else:
        n_stages = math.ceil(math.log(Delta / eps) / math.log(theta) - 1e-9)
    stages = []
    for t in range(1, n_stages + 1):
        eps_t = theta**-t * Delta
        B_sq = 2.0 * theta ** (1 - t) * Delta / lam
        T_t = stage_budget(eps_t, B_sq, H, b, Lstar)
        stages.append(Stage(eps_t=eps_t, B_t=math.sqrt(B_sq), T_t=T_t))
    return StagePlan(theta=float(theta), stages=tuple(stages), lam=float(lam),
                     Delta=float(Delta), H=float(H), b=int(b),
                     Lstar=float(Lstar))


def run_restarted(problem: Problem, plan: StagePlan, seed: int = 0,
                  noise_sq_override: float | None = None
                  ) -> tuple[np.ndarray, RunTrace]:
    """Run the accelerated method stage by stage, re-centering each time.

    Every stage restarts the accelerated method from scratch in coordinates
    shifted to the previous stage's output, with the stage's own radius and
    horizon.  The returned trace is the concatenation over stages with a
    stage-index column; its norm columns measure distance from the active
    stage center.
    """
    noise_sq = (2.0 * plan.H * plan.Lstar if noise_sq_override is None
                else float(noise_sq_override))
    header = _run_header(problem, "restarted", plan.b, plan.total_iterations,
                         seed, extra={"plan": plan.content()})
    recorder = TraceRecorder(header)
    stream = problem.stream(seed)
    center = np.zeros(problem.d)
    t_offset = 0
    try:
        for stage_idx, st in enumerate(plan.stages, start=1):
            schedule = make_schedule(plan.H, plan.b, st.T_t, st.B_t, noise_sq)
            state = _zero_state(problem.d)
            for _ in range(st.T_t):
                state = acc_step(state, schedule, problem, stream, recorder,
                                 center=center, stage=stage_idx,
                                 t_offset=t_offset)
            center = center + state.w_ag
            t_offset += st.T_t
    except NonFiniteGradientError as err:
        recorder.aborted = True
        recorder.header["abort_reason"] = str(err)
    return center, recorder.build()
