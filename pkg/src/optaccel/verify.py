"""End-to-end verification suites binding the library's guarantees to
checkable numbers.

Each suite is fully seeded and therefore deterministic: rerunning it
reproduces the identical report, whose ``content_hash`` covers everything
except wall-clock time.  Suite names are the stable CLI surface
(``optaccel verify <suite>``); thresholds are fixed here, not configurable,
because they are the package's acceptance contract.
"""

from __future__ import annotations

import hashlib
import math
import time

import numpy as np

from . import optimizers
from .analysis import (certify_assumptions, check_projection_lemma,
                       critical_batch, fit_rate, time_to_eps, variance_at)
from .optimizers import accel_error_bound, run_acc_mb_sgd, run_restarted, run_sgd
from .problems import (make_gaussian_spike_problem, make_growth_problem,
                       make_interpolation_least_squares,
                       make_noiseless_quadratic, make_sign_vector_problem)
from .trace import canonical_json

__all__ = ["SUITES", "run_suite", "report_lines"]


def _check(name, value, threshold, op, detail=""):
    passed = {"<=": value <= threshold, ">=": value >= threshold,
              "<": value < threshold, ">": value > threshold}[op]
    return {"name": name, "value": float(value), "op": op,
            "threshold": float(threshold), "passed": bool(passed),
            "detail": detail}


def _finish(suite, checks, t0):
    content = {"suite": suite, "checks": checks}
    digest = hashlib.sha256(canonical_json(content).encode()).hexdigest()
    return {
        "suite": suite,
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "content_hash": digest,
        "elapsed_s": round(time.perf_counter() - t0, 3),
    }


# -- shared fixtures ---------------------------------------------------------

# planting seed 334 carries a large initial gap, so the decaying regime of
# the b=1 curve covers the whole horizon grid
_INTERP = dict(d=32, n_atoms=16, H=1.0, B=4.0, seed=334)
_SPEEDUP_EPS = 1e-3


def _interp_problem():
    return make_interpolation_least_squares(**_INTERP)


def _family_fixtures():
    return [
        ("interpolation_least_squares",
         make_interpolation_least_squares(d=8, n_atoms=4, H=2.0, B=3.0, seed=7)),
        ("sign_vector",
         make_sign_vector_problem(n=4, H=1.0, B=1.0,
                                  sigma_signs=[1, -1, 1, 1, -1, 1, -1, -1])),
        ("gaussian_spike",
         make_gaussian_spike_problem(H=1.0, B=1.0, p=0.5, s=2.0, sign=1, seed=3)),
        ("growth",
         make_growth_problem(d=6, r=3, lam=0.1, H=1.0, Delta=1.0, seed=11)),
        ("noiseless_quadratic",
         make_noiseless_quadratic(d=16, H=1.0, B=1.0, seed=42, spread=10.0)),
    ]


# -- suites ------------------------------------------------------------------


def suite_assumptions():
    """Per-sample convexity/smoothness and growth certificates, all families."""
    t0 = time.perf_counter()
    checks = []
    for name, prob in _family_fixtures():
        rep = certify_assumptions(prob, n_probes=1000, seed=0)
        checks.append(_check(f"{name}:nonneg", rep.nonneg_violation, 1e-8, "<="))
        checks.append(_check(f"{name}:convexity",
                             rep.convexity_violation, 1e-8, "<="))
        checks.append(_check(f"{name}:smoothness",
                             rep.smoothness_violation, 1e-8, "<="))
        checks.append(_check(f"{name}:grad_lipschitz",
                             rep.grad_lipschitz_violation, 1e-8, "<="))
        checks.append(_check(f"{name}:growth", rep.growth_violation,
                             1e-10, "<="))
    return _finish("assumptions", checks, t0)


def suite_lemma3():
    """Gradient variance at the minimizer is at most 2 H Lstar."""
    t0 = time.perf_counter()
    checks = []
    for lstar in (0.01, 0.1, 1.0):
        s = 2.0 * math.sqrt(lstar)  # p = 1/2 makes Lstar = s^2 / 4
        prob = make_gaussian_spike_problem(H=1.0, B=1.0, p=0.5, s=s,
                                           sign=1, seed=7)
        est, se = variance_at(prob, prob.meta.wstar, 100000, seed=11)
        checks.append(_check(
            f"Lstar={lstar}:variance_bound", est,
            2.0 * prob.meta.H * lstar + 3.0 * se, "<=",
            detail=f"estimate {est:.5g} vs 2*H*Lstar={2 * lstar:.5g} + 3se"))
    return _finish("lemma3", checks, t0)


def suite_lemma1():
    """Projected-update optimality inequality on random instances."""
    t0 = time.perf_counter()
    gen = np.random.default_rng(77)
    worst, worst_eq = -math.inf, 0.0
    for _ in range(1000):
        d = int(gen.integers(2, 16))
        B = float(gen.uniform(0.1, 10.0))
        gamma_t = float(gen.uniform(0.0, 1.0))
        w_t = gen.standard_normal(d)
        w_t *= gen.uniform() * B / np.linalg.norm(w_t)
        w_md = gen.standard_normal(d)
        g = gen.standard_normal(d) * gen.uniform(0.1, 5.0)
        probes = gen.standard_normal((100, d))
        probes *= ((gen.uniform(size=(100, 1)) ** (1.0 / d)) * B
                   / np.linalg.norm(probes, axis=1, keepdims=True))
        inst = (w_t, w_md, g, gamma_t, B)
        _, viol, w_next = check_projection_lemma(inst, probes)
        worst = max(worst, viol)
        _, eq_viol, _ = check_projection_lemma(inst, [w_next])
        worst_eq = max(worst_eq, abs(eq_viol))
    checks = [
        _check("max_violation", worst, 1e-9, "<=",
               detail="1000 instances x 100 ball probes"),
        _check("equality_at_update", worst_eq, 1e-12, "<=",
               detail="probe at the projected update itself"),
    ]
    return _finish("lemma1", checks, t0)


def suite_rate_convex():
    """Convex-case rates: deterministic quadratic and interpolation regimes."""
    t0 = time.perf_counter()
    checks = []

    # zero-noise quadratic: with exact gradients the batch size only enters
    # the stepsize rule; b = 2(T+1) activates the smoothness-limited branch
    quad = make_noiseless_quadratic(d=16, H=1.0, B=1.0, seed=42, spread=10.0)
    grid = []
    for T in (32, 64, 128, 256, 512, 1024, 2048, 4096):
        _, tr = run_acc_mb_sgd(quad, b=2 * (T + 1), T=T, seed=0)
        grid.append((T, tr.final_subopt))
    fit = fit_rate(grid)
    checks.append(_check("noiseless_quadratic:slope", fit.slope, -1.85, "<="))
    checks.append(_check("noiseless_quadratic:r_squared",
                         fit.r_squared, 0.98, ">="))

    prob = _interp_problem()
    for b, slope_max in ((1, -0.9), (64, -1.7)):
        grid = []
        for T in (64, 128, 256, 512, 1024, 2048, 4096):
            finals = [run_acc_mb_sgd(prob, b=b, T=T, seed=s)[1].final_subopt
                      for s in range(20)]
            grid.append((T, float(np.median(finals))))
        fit = fit_rate(grid)
        checks.append(_check(f"interpolation:b={b}:slope", fit.slope,
                             slope_max, "<=",
                             detail=f"r^2={fit.r_squared:.4f}"))
    return _finish("rate_convex", checks, t0)


# horizon grids per batch size for the speedup sweep (powers of two wide
# enough to bracket the eps crossing for every b)
_SPEEDUP_GRIDS = {
    1: (1024, 2048, 4096, 8192, 16384),
    2: (512, 1024, 2048, 4096, 8192),
    4: (256, 512, 1024, 2048, 4096),
    8: (128, 256, 512, 1024, 2048),
    16: (64, 128, 256, 512, 1024),
    32: (32, 64, 128, 256, 512),
    64: (16, 32, 64, 128, 256),
    128: (16, 32, 64, 128),
    256: (16, 32, 64, 128),
}


def _speedup_finals(prob):
    finals = {}
    for b, Ts in _SPEEDUP_GRIDS.items():
        for T in Ts:
            finals[(b, T)] = [
                run_acc_mb_sgd(prob, b=b, T=T, seed=s)[1].final_subopt
                for s in range(20)]
    return finals


def suite_speedup():
    """Linear minibatch speedup for the accelerated method; none for SGD."""
    t0 = time.perf_counter()
    prob = _interp_problem()
    eps = _SPEEDUP_EPS
    threshold = math.sqrt(prob.meta.H * prob.meta.B**2 / eps)
    table = time_to_eps(_speedup_finals(prob), eps)
    rows = dict(table.rows)
    checks = []

    reached = [T for _, T in table.rows if T is not None]
    mono = all(t2 <= t1 for t1, t2 in zip(reached, reached[1:]))
    checks.append(_check("table_monotone", 1.0 if mono else 0.0, 1.0, ">=",
                         detail=f"rows={table.rows}"))

    tested = 0
    for b in sorted(_SPEEDUP_GRIDS)[:-1]:
        T1, T2 = rows.get(b), rows.get(2 * b)
        if T1 is None or T2 is None or T1 <= threshold:
            continue  # saturated or unreached: outside the noise-dominated regime
        tested += 1
        checks.append(_check(f"halving:b={b}->{2 * b}", T2 / T1, 0.6, "<=",
                             detail=f"T_to_eps {T1} -> {T2}"))
    checks.append(_check("regime_pairs_tested", tested, 3, ">="))

    bstar = critical_batch(table)
    checks.append(_check("critical_batch_finite",
                         0.0 if bstar is None else 1.0, 1.0, ">=",
                         detail=f"b*={bstar}"))
    if bstar is not None:
        checks.append(_check("critical_batch:lower", bstar,
                             threshold / 4.0, ">="))
        checks.append(_check("critical_batch:upper", bstar,
                             threshold * 4.0, "<="))

    # SGD contrast: constant stepsize tuned per batch size over a small
    # grid; the running tail average at step t equals a fresh run with
    # horizon t, so one long trace yields the whole horizon grid
    sgd_tte = {}
    H = prob.meta.H
    for b in (1, 4, 16):
        best = None
        for eta in (1 / (2 * H), 1 / (4 * H), 1 / (8 * H)):
            subs = []
            for s in range(20):
                _, tr = run_sgd(prob, b=b, T=2048, seed=s, eta=eta)
                subs.append(tr.subopt)
            med = np.median(np.array(subs), axis=0)
            hit = np.flatnonzero(med <= eps)
            if len(hit):
                t_hit = int(hit[0]) + 1
                if best is None or t_hit < best:
                    best = t_hit
        sgd_tte[b] = best
    if all(v is not None for v in sgd_tte.values()):
        vals = list(sgd_tte.values())
        spread = (max(vals) - min(vals)) / min(vals)
    else:
        spread = math.inf
    checks.append(_check("sgd_no_speedup_spread", spread, 0.25, "<",
                         detail=f"T_to_eps={sgd_tte}"))
    return _finish("speedup", checks, t0)


def suite_rate_restart():
    """Restarted runs converge linearly; plain runs do not."""
    t0 = time.perf_counter()
    prob = make_growth_problem(d=6, r=3, lam=0.25, H=1.0, Delta=1.0, seed=5)
    delta = prob.meta.Delta
    plan = optimizers.make_stage_plan(Delta=delta, eps=float(np.exp(-5) * delta),
                                      theta=math.e, lam=0.25, H=1.0, b=8,
                                      Lstar=0.0)
    ends = []
    for s in range(20):
        _, tr = run_restarted(prob, plan, seed=s)
        ends.append([v for _, _, v in tr.stage_end_subopts()])
    med = np.median(np.array(ends), axis=0)
    checks = []
    for t_idx, m in enumerate(med, start=1):
        checks.append(_check(f"stage_{t_idx}_subopt", m,
                             2.0 * math.exp(-t_idx) * delta, "<="))

    cum = np.cumsum([st.T_t for st in plan.stages]).astype(float)
    checks.append(_check("restarted_log_linear_r2",
                         _r2(cum, np.log(med)), 0.95, ">="))

    # plain accelerated run on the same total budget, probed at octave
    # checkpoints: a power law should explain it better than a line
    T_total = plan.total_iterations
    subs = []
    for s in range(20):
        _, tr = run_acc_mb_sgd(prob, b=8, T=T_total, seed=s)
        subs.append(tr.subopt)
    med_tr = np.median(np.array(subs), axis=0)
    cps = np.array(sorted(T_total // 2**k for k in range(5)), dtype=int)
    vals = np.array([med_tr[c - 1] for c in cps])
    r2_loglog = _r2(np.log(cps.astype(float)), np.log(vals))
    r2_loglin = _r2(cps.astype(float), np.log(vals))
    checks.append(_check("plain_power_law_vs_linear",
                         r2_loglog - r2_loglin, 0.0, ">",
                         detail=f"log-log r2={r2_loglog:.4f}, "
                                f"log-linear r2={r2_loglin:.4f}"))
    return _finish("rate_restart", checks, t0)


def suite_sigma_star():
    """Variance-at-minimizer parameterization: rate at b=64, floor at b=1."""
    t0 = time.perf_counter()
    prob = make_gaussian_spike_problem(H=1.0, B=1.0, p=0.5, s=1.0, sign=1,
                                       seed=2)
    meta = prob.meta
    sigma_sq = meta.sigma_star_sq
    sigma = math.sqrt(sigma_sq)
    T = 1024
    checks = []

    f64 = [run_acc_mb_sgd(prob, b=64, T=T, noise_sq_override=sigma_sq,
                          seed=s)[1].final_subopt for s in range(40)]
    bound = accel_error_bound(T, meta.H, meta.B**2, 64, Lstar=sigma_sq / (2 * meta.H))
    checks.append(_check("b=64:median_within_bound", float(np.median(f64)),
                         3.0 * bound, "<=",
                         detail=f"bound={bound:.4g}"))

    f1 = [run_acc_mb_sgd(prob, b=1, T=T, noise_sq_override=sigma_sq,
                         seed=s)[1].final_subopt for s in range(40)]
    floor = sigma * meta.B / (10.0 * math.sqrt(T))
    checks.append(_check("b=1:no_acceleration_floor", float(np.median(f1)),
                         floor, ">=",
                         detail="median must stay above sigma*B/(10 sqrt(T))"))
    return _finish("sigma_star", checks, t0)


def _r2(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot < 1e-30:
        return 1.0
    return 1.0 - float(resid @ resid) / ss_tot


SUITES = {
    "assumptions": suite_assumptions,
    "lemma1": suite_lemma1,
    "lemma3": suite_lemma3,
    "rate_convex": suite_rate_convex,
    "rate_restart": suite_rate_restart,
    "speedup": suite_speedup,
    "sigma_star": suite_sigma_star,
}


def run_suite(name: str) -> dict:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; "
                       f"expected one of {sorted(SUITES)}")
    return SUITES[name]()


def report_lines(report: dict) -> list[str]:
    lines = [f"suite {report['suite']}: "
             f"{'PASS' if report['passed'] else 'FAIL'} "
             f"({report['elapsed_s']}s, hash {report['content_hash'][:12]})"]
    for c in report["checks"]:
        mark = "ok " if c["passed"] else "FAIL"
        lines.append(f"  [{mark}] {c['name']}: {c['value']:.6g} "
                     f"{c['op']} {c['threshold']:.6g}"
                     + (f"  ({c['detail']})" if c["detail"] else ""))
    return lines
