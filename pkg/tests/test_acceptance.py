"""Acceptance gate: one test per criterion, at the stated tolerances.

Each criterion prints one `[criterion N] PASS/FAIL` line (run with -s to see
them all).  Criteria whose stated windows are unattainable are asserted
as stated and fail honestly, with the measured values in the message; the
blocking analysis lives in the reviewer notes outside the package.  In
summary: 1, 8, 9 and 10 pass; 2, 3, 4, 5 and 6 pin asymptotic constants at
parameter values far outside the asymptotic regime; 7 additionally collides
with the exponential growth of the unstable mode, which no double-precision
bisection can track to a tenfold scale decay.
"""

import filecmp
import os
import warnings

import numpy as np
import pytest

from blowlab import cli, flow, inequalities as ineq, modulation, profiles, radial
from blowlab.config import parse_config

from conftest import l2_window


def report(criterion: int, ok: bool, detail: str) -> str:
    line = f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    return line


# ---------------------------------------------------------------------------


def test_criterion_1_static_identities(grid, fine_grid):
    orders = {}
    for name, build, target in (
        ("H(LambdaQ)", radial.lambda_q, lambda y: np.zeros_like(y)),
        ("H(Q)+2Q^3", radial.q_soliton, lambda y: -2.0 * radial.q_soliton(y) ** 3),
    ):
        errs = []
        for g in (grid, fine_grid):
            res = radial.apply_H(g.function(build(g.nodes))).values - target(g.nodes)
            errs.append(l2_window(g, res))
        orders[name] = np.log2(errs[0] / errs[1])
    y = np.logspace(-3, 3, 100)
    wronskian = np.max(np.abs(
        y**3 * (radial.gamma_growing(y) * radial.lambda_q_prime(y)
                - radial.gamma_growing_prime(y) * radial.lambda_q(y)) - 1.0))
    hardy = ineq.hardy_suite(
        ineq.TestFunctionSampler(seed=7), 50, grid=ineq.default_grid(n=8192))
    ok = (min(orders.values()) >= 1.8 and wronskian < 1e-8
          and hardy.details["identity"] < 1e-6)
    msg = report(1, ok, f"orders={ {k: round(v, 2) for k, v in orders.items()} }, "
                        f"wronskian dev={wronskian:.2e}, "
                        f"hardy identity={hardy.details['identity']:.2e}")
    assert ok, msg


def test_criterion_2_T1_asymptote(grid):
    t1 = profiles.build_T1(grid)
    i = np.searchsorted(grid.nodes, 1e3)
    ratio = t1.values[i] / (-4.0 * (np.log(grid.nodes[i]) - 0.5))
    ok = 0.98 <= ratio <= 1.02
    msg = report(2, ok, f"T1(1e3)/(-4(log y - 1/2)) = {ratio:.4f}; the "
                        f"construction's true far field is -4(log y - 2.706)")
    assert ok, msg


def test_criterion_3_radiation_constants(grid):
    t1 = profiles.build_T1(grid)
    y = grid.nodes
    scaled = {}
    plateaus_ok = True
    for b in (1e-2, 1e-3, 1e-4):
        sigma, c_b, _ = profiles.radiation_sigma(b, grid)
        scaled[b] = c_b * profiles.log_binv(b) / 2.0
        b0 = b**-0.5
        inner = y <= b0 / 4.0
        outer = y >= 6.0 * b0
        inner_dev = np.max(np.abs(sigma.values[inner] + c_b * t1.values[inner]))
        outer_dev = np.max(np.abs(
            sigma.values[outer] - 64.0 * radial.gamma_growing(y[outer])))
        plateaus_ok &= inner_dev < 1e-9 and outer_dev < 1e-7
    window_ok = all(0.85 <= v <= 1.15 for v in scaled.values())
    ok = window_ok and plateaus_ok
    msg = report(3, ok, f"c_b|log b|/2 = { {k: round(v, 2) for k, v in scaled.items()} } "
                        f"(window [0.85, 1.15]); plateau identities exact "
                        f"(inner = -c_b T1, outer = 64 Gamma): {plateaus_ok}")
    assert ok, msg


SWEEP4 = (1e-2, 3e-3, 1e-3, 3e-4)


@pytest.fixture(scope="module")
def sweep_reports(grid):
    return {b: profiles.error_Psi(b, "tilde", grid, M=50.0) for b in SWEEP4}


def test_criterion_4_residual_scalings(grid, sweep_reports):
    ratios = {"H": [], "w8": [], "H2": []}
    for b in SWEEP4:
        rep = sweep_reports[b]
        lb = profiles.log_binv(b)
        ratios["H"].append(rep.norm_H / (b**4 * lb**2))
        ratios["w8"].append(rep.norm_w8 / b**6)
        ratios["H2"].append(rep.norm_H2 * lb**2 / b**6)
    spreads = {k: max(v) / min(v) for k, v in ratios.items()}
    nh = np.array([sweep_reports[b].norm_H for b in SWEEP4])
    lbs = np.array([profiles.log_binv(b) for b in SWEEP4])
    slope = np.polyfit(np.log(SWEEP4), np.log(nh / lbs**2), 1)[0]
    ok = all(s < 5.0 for s in spreads.values()) and abs(slope - 4.0) <= 0.3
    spreads_excl = {
        k: max(v[1:]) / min(v[1:]) for k, v in ratios.items()
    }
    msg = report(4, ok, f"spreads={ {k: round(v, 1) for k, v in spreads.items()} } "
                        f"(need < 5), slope={slope:.2f} (need 4 +- 0.3); "
                        f"excluding the degenerate b=1e-2 member: "
                        f"spreads={ {k: round(v, 2) for k, v in spreads_excl.items()} }, "
                        f"slope={np.polyfit(np.log(SWEEP4[1:]), np.log(nh[1:] / lbs[1:]**2), 1)[0]:.2f}")
    assert ok, msg


def test_criterion_5_flux(grid, sweep_reports):
    vals = {}
    for b in (3e-3, 1e-3, 3e-4):
        vals[b] = sweep_reports[b].flux_ratio * profiles.log_binv(b) / b**2
    in_window = all(-2.6 <= v <= -1.4 for v in vals.values())
    seq = [vals[b] for b in (3e-3, 1e-3, 3e-4)]
    trending = abs(seq[2] + 2.0) < abs(seq[0] + 2.0)
    ok = in_window and trending
    msg = report(5, ok, f"flux*|log b|/b^2 = { {k: round(v, 2) for k, v in vals.items()} } "
                        f"(window [-2.6, -1.4]); sign negative: "
                        f"{all(v < 0 for v in vals.values())}")
    assert ok, msg


def test_criterion_6_reduced_law():
    tr = modulation.integrate_reduced(0.01, 1.0, 1e6)
    sb = tr.s[-1] * tr.b[-1]
    sb_ok = 0.95 <= sb <= 1.0
    deep = modulation.integrate_reduced(0.01, 1.0, 1e30, n_samples=1200)
    fit = modulation.fit_blowup_law(deep)
    mask = deep.lam <= deep.lam[-1] * 10.0
    comp = deep.lam[mask] * np.log(deep.tau[mask]) ** 2 / deep.tau[mask]
    drift = comp.max() / comp.min() - 1.0
    fit_ok = abs(fit.exponent - 1.0) <= 0.05 and drift < 0.05
    ok = sb_ok and fit_ok
    msg = report(6, ok, f"s*b(1e6)={sb:.4f} (window [0.95, 1.0]; the mandated "
                        f"2/|log b| correction gives 1 - 2/log s = 0.855); "
                        f"deep-window fit exponent={fit.exponent:.4f}, "
                        f"final-decade drift={drift:.3f} (both attained at s=1e30)")
    assert ok, msg


@pytest.fixture(scope="module")
def desk_scale_shot():
    """Criterion-7 runs: the stated bracket, then a widened demonstration."""
    params = flow.FlowParams(b0=0.01, kappa_exit_factor=2.0)
    cache = flow.ProfileCache(params)
    w = params.a_plus_window()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lo = flow.simulate(flow.replace(params, a_plus=-w), cache=cache)
        hi = flow.simulate(flow.replace(params, a_plus=+w), cache=cache)
    literal_bracket = (lo.classification, hi.classification)
    demo_params = flow.FlowParams(b0=0.01, kappa_exit_factor=2e4, max_steps=12000)
    bracket = flow.find_bracket(demo_params, cache=cache)
    result = flow.shoot(bracket[0], bracket[1], 40, demo_params, cache=cache)
    return literal_bracket, bracket, result


def test_criterion_7_desk_scale_simulation(desk_scale_shot):
    literal, bracket, result = desk_scale_shot
    best = result.best
    lam = best.series("lam")
    decay = 1.0 / np.nanmin(lam[np.isfinite(lam)])
    mr = flow.modulation_residuals(best)
    if mr["s"].size:
        lam_res = float(np.max(np.abs(mr["lam_res"]) / mr["b_mid"]))
    else:
        lam_res = np.inf
    width = result.bracket[1] - result.bracket[0]
    mechanics_ok = (result.iterations <= 40
                    and width <= (bracket[1] - bracket[0]) * 2.0**-39)
    tracked_ok = (best.classification is flow.RunClass.TypeII_tracking
                  and decay >= 10.0 and lam_res <= 0.2)
    ok = tracked_ok  # the criterion's substance
    msg = report(
        7, ok,
        f"stated bracket +-2b^2.5/|log b| classifies as "
        f"({literal[0].value}, {literal[1].value}) - no sign change (profile "
        f"residual forces kappa at ~1e3 x the admissible window); widened "
        f"bracket {bracket[1]:.3g} bisected {result.iterations} steps to "
        f"width {width:.2e} (mechanics ok: {mechanics_ok}); deepest run: "
        f"class={best.classification.value}, lambda decay x{decay:.3f} "
        f"(need x10; unstable mode grows e^(zeta s) ~ 10^229 over that "
        f"window), |lam_s/lam + b|/b max={lam_res:.2f}")
    assert ok, msg


def test_criterion_8_orthogonal_decomposition():
    params = flow.FlowParams(b0=1e-3, nodes_per_decade=100)
    cache = flow.ProfileCache(params)
    from scipy.interpolate import CubicSpline

    qt = CubicSpline(np.log(cache.grid.nodes), cache.qtilde_values(1e-3))
    worst_err = 0.0
    worst_res = 0.0
    for lam_true, delta in ((0.7, 1e-5), (0.7, 1e-4), (1.3, 1e-4)):
        r = flow._flow_grid(0.02 * lam_true, 30.0 * lam_true * 218.0, 100)
        y = r / lam_true
        inside = y <= cache.grid.y_max
        vals = np.where(inside, qt(np.log(np.minimum(y, cache.grid.y_max))),
                        radial.q_soliton(y))
        u = (vals + delta * np.exp(-(y**2)) * y**2) / lam_true
        lam, b, dd = flow.decompose(cache, r, u, (lam_true * 1.0005, 1e-3))
        worst_err = max(worst_err, abs(lam - lam_true) / (10.0 * delta),
                        abs(b - 1e-3) / (10.0 * delta))
        worst_res = max(worst_res, dd["res_phi"], dd["res_hphi"])
    ok = worst_err < 1.0 and worst_res < 1e-11
    msg = report(8, ok, f"worst (lam, b) error = {worst_err:.3f} x (10 delta), "
                        f"worst orthogonality residual = {worst_res:.2e}")
    assert ok, msg


def test_criterion_9_inequality_suites():
    sgrid = ineq.default_grid()
    refined = ineq.default_grid(n=8192)
    sub = ineq.subpositivity_suite(ineq.TestFunctionSampler(seed=3), 200, grid=sgrid)
    worsts = [
        ineq.coercivity_H_suite(ineq.TestFunctionSampler(seed=s), 100, grid=g).worst_ratio
        for s, g in ((11, sgrid), (211, sgrid), (11, refined))
    ]
    worsts2 = [
        ineq.coercivity_H2_suite(ineq.TestFunctionSampler(seed=s), 100, grid=g).worst_ratio
        for s, g in ((13, sgrid), (313, sgrid), (13, refined))
    ]
    adversarial = ineq.coercivity_H_adversarial(grid=sgrid)
    stable = (max(worsts) / min(worsts) < 1.3 and max(worsts2) / min(worsts2) < 1.3)
    ok = (sub.details["violations"] == 0
          and np.isfinite(worsts).all() and np.isfinite(worsts2).all()
          and stable and adversarial >= 10.0 * max(worsts))
    msg = report(9, ok, f"subpositivity violations={sub.details['violations']}/200 "
                        f"(C_fit={sub.details['C_fit']:.4f}); coercivity worst "
                        f"ratios H={max(worsts):.3f} H2={max(worsts2):.3f} "
                        f"(stability < x1.3: {stable}); adversarial/bulk = "
                        f"{adversarial / max(worsts):.1f} (need >= 10)")
    assert ok, msg


def test_criterion_10_determinism(tmp_path):
    cfg = parse_config("command=modulation b0=0.004 s_end=1e5 fit_s_end=1e8")
    m1 = cli.run(cfg, out_override=str(tmp_path))
    m2 = cli.run(cfg, out_override=str(tmp_path))
    same = filecmp.cmp(os.path.join(m1["run_dir"], "trajectory.csv"),
                       os.path.join(m2["run_dir"], "trajectory.csv"),
                       shallow=False)
    ok = bool(same)
    msg = report(10, ok, "identical config re-run produced byte-identical CSV")
    assert ok, msg
