"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import os
import time

import numpy as np
import pytest

from ossfield import cli, homog, io
from ossfield.cells import QuadratureSpec, ladder
from ossfield.fields import HARMONIZABLE, FieldSpec, identity_ladder, recurrence_residual, simulate
from ossfield.integral import (MatrixField, cf_exponent_complex, cf_exponent_real,
                               constant_field, integrate_complex, integrate_real)
from ossfield.linops import mat_pow
from ossfield.polar import polar_map
from ossfield.stable import (StableSpec, calibrate_subgaussian_constant, ecf_panel,
                             sample_isotropic_vector, subgaussian_constant_closed_form)
from ossfield.verify import (increments_negative_control, lebesgue_scaling_check,
                             norm_bound_slopes, oss_mc_test, oss_negative_control,
                             properness_test, stationary_increments_mc_test)

pytestmark = pytest.mark.acceptance

E2 = np.diag([2.0, 1.25])
K2 = homog.sum_powers([0.5, 0.8])


def report(log, n, title, ok, detail):
    log[n] = (title, bool(ok), detail)
    print(f"C{n} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    assert ok, f"criterion {n} failed: {detail}"


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def q_operator(rng, dim):
    a = rng.uniform(-0.5, 0.5, (dim, dim))
    shift = 0.5 + max(0.0, -np.linalg.eigvals(a).real.min())
    return a + (shift + rng.uniform(0, 2)) * np.eye(dim)


def test_c01_matrix_power_laws(acceptance_log):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(100):
        dim = 1 + k % 4
        E = rng.uniform(-1.5, 1.5, (dim, dim))
        r, s = np.exp(rng.uniform(-2, 2, 2))
        rE, sE = mat_pow(r, E), mat_pow(s, E)
        worst = max(worst,
                    rel(rE @ sE, mat_pow(r * s, E)),
                    rel(np.linalg.inv(rE), mat_pow(1 / r, E)),
                    rel(rE.T, mat_pow(r, E.T)),
                    abs(np.linalg.det(rE) - r ** np.trace(E)) / r ** np.trace(E))
    elapsed = time.perf_counter() - t0
    report(acceptance_log, 1, "matrix-power laws", worst <= 1e-9 and elapsed < 5,
           f"max rel error {worst:.2e} (<= 1e-9), {elapsed:.2f}s (< 5s)")


def test_c02_polar_decomposition(acceptance_log):
    ops = [np.diag([2.0, 10.0 / 3.0]), np.array([[2.0, 1.0], [0.0, 2.0]]),
           np.array([[2.0, 1.0], [-1.0, 2.0]]), np.array([[1.5, 0.4], [-0.2, 1.0]])]
    rng = np.random.default_rng(2)
    x = rng.standard_normal((10_000, 2)) * 10.0 ** rng.uniform(-2, 2, (10_000, 1))
    t0 = time.perf_counter()
    recon = scaling = 0.0
    for E in ops:
        pm = polar_map(E)
        tau, direction = pm.decompose(x)
        recon = max(recon, np.max(np.linalg.norm(pm.compose(tau, direction) - x, axis=1)
                                  / np.linalg.norm(x, axis=1)))
        for r in (0.1, 0.5, 2.0, 7.0, 30.0):
            t_r = pm.tau(x @ mat_pow(r, E).T)
            scaling = max(scaling, np.max(np.abs(t_r - r * tau) / (r * tau)))
    closed = np.sqrt(np.linalg.norm(x, axis=1) / 2)
    diag = np.max(np.abs(polar_map(np.diag([2.0, 2.0])).tau(x) - closed) / closed)
    elapsed = time.perf_counter() - t0
    ok = recon <= 1e-8 and scaling <= 1e-8 and diag <= 1e-8 and elapsed < 60
    report(acceptance_log, 2, "polar decomposition", ok,
           f"reconstruction {recon:.1e}, scaling {scaling:.1e}, closed form {diag:.1e} "
           f"(all <= 1e-8), {elapsed:.1f}s (< 60s)")


def test_c03_tau_sandwich(acceptance_log):
    lo_phi, hi_phi = homog.extrema_on_sphere(K2, E2)
    # tau(x) / phi(x) = 1 / phi(l(x)), so it lies in [1/max, 1/min] over Sigma_0
    lo, hi = 0.99 / hi_phi, 1.01 / lo_phi
    rng = np.random.default_rng(3)
    u = rng.standard_normal((10_000, 2))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    x = u * 10.0 ** rng.uniform(-3, 3, (10_000, 1))
    ratio = polar_map(E2).tau(x) / homog.evaluate(K2, x)
    ok = lo > 0 and ratio.min() >= lo and ratio.max() <= hi
    report(acceptance_log, 3, "tau sandwich", ok,
           f"ratio in [{ratio.min():.4f}, {ratio.max():.4f}] within fixed [{lo:.4f}, {hi:.4f}]")


def test_c04_stable_sampler(acceptance_log):
    t0 = time.perf_counter()
    worst, n = 0.0, 200_000
    for i, alpha in enumerate((0.8, 1.0, 1.5, 2.0)):
        for m in (1, 2, 3):
            rng = np.random.default_rng([4, i, m])
            x = sample_isotropic_vector(StableSpec(alpha, m), 1.0, rng, size=n)
            u = rng.standard_normal((20, m))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            th = u * rng.uniform(0.3, 2.0, (20, 1)) ** (1 / alpha)
            est, se = ecf_panel(x, th)
            theo = np.exp(-np.linalg.norm(th, axis=1) ** alpha)
            z = np.concatenate([(est.real - theo) / se[:, 0], est.imag / se[:, 1]])
            worst = max(worst, float(np.max(np.abs(z))))
    calib = max(abs(calibrate_subgaussian_constant(a) - subgaussian_constant_closed_form(a))
                for a in (0.8, 1.0, 1.5))
    elapsed = time.perf_counter() - t0
    ok = worst <= 4 and calib <= 1e-3 and elapsed < 180
    report(acceptance_log, 4, "stable sampler CF", ok,
           f"max |z| {worst:.2f} (<= 4) over 12 (alpha, m) x 20 thetas, kappa error "
           f"{calib:.1e} (<= 1e-3), {elapsed:.0f}s (< 180s)")


def _gaussian_field(A, B=None):
    def f(M):
        return lambda u: np.exp(-np.sum(u * u, axis=1))[:, None, None] * M[None]
    return MatrixField(2, 2, f(A), None if B is None else f(B))


def _z_with_proxy(est, se, gamma, proxy):
    """z after allowing the quadrature proxy as a relative error in the exponent."""
    theo = np.exp(-gamma)
    slack = theo * gamma * proxy
    excess = np.maximum(np.abs(est.real - theo) - slack, 0.0)
    return np.concatenate([excess / se[:, 0], np.abs(est.imag) / se[:, 1]])


def test_c05_stochastic_integral_cf(acceptance_log):
    n = 20_000
    A = np.array([[1.0, 0.5], [-0.3, 2.0]])
    B = np.array([[0.2, -1.0], [0.7, 0.4]])
    rng = np.random.default_rng(5)
    th = rng.standard_normal((20, 2)) * 0.5
    # piecewise constant: the discrete exponent is the exact one
    lattice = QuadratureSpec(rule="midpoint_lattice", box=(0.0, 1.0), cells_per_dim=4)
    pc = MatrixField(2, 2, lambda u: (constant_field(A, [0, 0], [0.5, 0.5]).real_part(u)
                                      + constant_field(B, [0.25, 0.5], [1, 1]).real_part(u)))
    X = integrate_real(pc, StableSpec(1.5, 2), lattice, 51, n_rep=n)
    est, se = ecf_panel(X, th)
    gam = np.array([cf_exponent_real(pc, t, lattice, 1.5) for t in th])
    exact = np.array([np.linalg.norm(A.T @ t) ** 1.5 * 0.25
                      + np.linalg.norm(B.T @ t) ** 1.5 * 0.375 for t in th])
    z_pc = _z_with_proxy(est, se, gam, 0.0)
    pc_exact = np.max(np.abs(gam - exact) / exact)
    # smooth integrands against the continuum exponent pi/alpha |.|^alpha
    q = QuadratureSpec(r_in=1e-3, r_out=5.0, angular=16, radial_per_shell=4)
    zs = []
    proxies = []
    for Q, cplx in ((_gaussian_field(A), False), (_gaussian_field(A, B), True)):
        alpha = 1.5 if not cplx else 1.2
        fn, integ = ((cf_exponent_complex, integrate_complex) if cplx
                     else (cf_exponent_real, integrate_real))
        X = integ(Q, StableSpec(alpha, 2), q, 52 + cplx, n_rep=n)
        est, se = ecf_panel(X, th)
        cont = np.array([(np.sum((A.T @ t) ** 2) + (np.sum((B.T @ t) ** 2) if cplx else 0))
                         ** (alpha / 2) * np.pi / alpha for t in th])
        proxy = max(fn(Q, t, q, alpha, with_error=True)[1] for t in th[:3])
        proxies.append(proxy)
        zs.append(np.max(_z_with_proxy(est, se, cont, proxy)))
    # alpha = 2: variance of <theta, X> equals twice the exponent
    X = integrate_real(_gaussian_field(A), StableSpec(2.0, 2), q, 54, n_rep=n)
    t = np.array([0.6, -0.8])
    gam2 = cf_exponent_real(_gaussian_field(A), t, q, 2.0)
    var = np.var(X @ t, ddof=1)
    z_var = abs(var - 2 * gam2) / (2 * gam2 * np.sqrt(2.0 / (n - 1)))
    ok = np.max(z_pc) <= 4 and pc_exact <= 1e-12 and max(zs) <= 4 and z_var <= 3
    report(acceptance_log, 5, "stochastic-integral CF", ok,
           f"piecewise-constant max |z| {np.max(z_pc):.2f} (exponent exact to {pc_exact:.0e}); "
           f"smooth real/complex max |z| {zs[0]:.2f}/{zs[1]:.2f} with proxies "
           f"{proxies[0]:.1e}/{proxies[1]:.1e}; alpha=2 variance {var:.4f} vs "
           f"{2 * gam2:.4f} ({z_var:.2f} SE <= 3)")


def _tau_kernel_spec(variant):
    E = np.array([[1.4, 0.5], [-0.3, 1.1]])
    op = E if variant == "moving_average" else E.T
    k = homog.custom(polar_map(op).tau, beta=1.0, dim=2)
    return FieldSpec(E=E, D=np.array([[0.6, 0.2], [-0.1, 0.5]]), alpha=1.3, kernel=k,
                     variant=variant)


def test_c06_recurrence(acceptance_log):
    rng = np.random.default_rng(6)
    res = {}
    for variant, kind in (("moving_average", "corrected"), ("harmonizable", "corrected"),
                          ("harmonizable", "literal")):
        spec = _tau_kernel_spec(variant)
        sub = np.random.default_rng(rng.integers(1 << 32))
        worst = 0.0
        for _ in range(100):
            r = float(np.exp(sub.uniform(-2.5, 2.5)))
            worst = max(worst, recurrence_residual(spec, r, sub.standard_normal(2),
                                                   sub.standard_normal((1, 2)) * 2, kind))
        res[(variant, kind)] = worst
    ma, hc = res[("moving_average", "corrected")], res[("harmonizable", "corrected")]
    ok = ma <= 1e-9 and hc <= 1e-9
    report(acceptance_log, 6, "recurrence identity", ok,
           f"moving-average {ma:.1e}, harmonizable corrected {hc:.1e} (<= 1e-9); "
           f"literal harmonizable {res[('harmonizable', 'literal')]:.2e} (reported only)")


def test_c07_oss_identity_ladder(acceptance_log):
    rng = np.random.default_rng(0)
    pairs = [(rng.normal(size=2), rng.normal(size=2)) for _ in range(2)]
    t0 = time.perf_counter()
    lines, ok = [], True
    for alpha, D in ((1.5, np.diag([0.4, 0.6])), (2.0, np.array([[0.5, 0.2], [0.0, 0.5]]))):
        spec = FieldSpec(E=E2, D=D, alpha=alpha, kernel=K2)
        lad = identity_ladder("oss", spec, 2.0, pairs, ladder(QuadratureSpec(), 3))
        ok = ok and lad.passed and lad.monotone
        lines.append(f"alpha={alpha}: gaps {', '.join(f'{g:.1e}' for g in lad.gaps)} "
                     f"tol {lad.tolerance:.1e}")
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 600
    report(acceptance_log, 7, "o.s.s. CF-exponent identity", ok,
           "; ".join(lines) + f"; {elapsed:.0f}s (< 600s)")


def test_c08_monte_carlo_tests(acceptance_log):
    spec = FieldSpec(E=E2, D=np.diag([0.4, 0.6]), alpha=1.5, kernel=K2,
                     quad=QuadratureSpec(tail_tol=1e-4))
    pts = np.array([[0.5, 0.0], [0.0, 0.5], [0.3, 0.3]])
    oss = oss_mc_test(spec, 2.0, pts, n_rep=20_000, seed=8)
    oss_ctrl = oss_negative_control(oss, spec, 1.5)
    inc = stationary_increments_mc_test(spec, [0.25, 0.25], pts, n_rep=20_000, seed=8)
    inc_ctrl = increments_negative_control(inc)
    ok = (oss.max_abs_z <= 4 and inc.max_abs_z <= 4
          and oss_ctrl.max_abs_z > 4 and inc_ctrl.max_abs_z > 4)
    report(acceptance_log, 8, "Monte Carlo o.s.s. and increments", ok,
           f"oss max |z| {oss.max_abs_z:.2f}, increments {inc.max_abs_z:.2f} (<= 4); "
           f"controls D'=1.5D {oss_ctrl.max_abs_z:.1f}, no base point "
           f"{inc_ctrl.max_abs_z:.1f} (> 4)")


def test_c09_properness(acceptance_log):
    harm = FieldSpec(E=E2, D=np.diag([0.4, 0.6]), alpha=1.5, kernel=K2, variant=HARMONIZABLE)
    x = simulate(harm, [[0.5, 0.3]], 5000, 9).replicates[:, 0, :]
    full = properness_test(x)
    degenerate = FieldSpec(E=[[1.25]], D=np.diag([0.625, 0.4]), alpha=2.0,
                           kernel=homog.sum_powers([0.8]))
    y = simulate(degenerate, [[0.7]], 5000, 9).replicates[:, 0, :]
    sus = properness_test(y)
    ok = full.verdict == "full" and sus.verdict == "suspect"
    report(acceptance_log, 9, "properness", ok,
           f"harmonizable at x=(0.5, 0.3): {full.verdict}; degenerate control "
           f"(q/alpha an eigenvalue of D): {sus.verdict}")


def test_c10_norm_bound_slopes(acceptance_log):
    small, large = np.geomspace(1e-24, 1e-20, 41), np.geomspace(1e20, 1e24, 41)
    out, ok = [], True
    for name, D in (("diagonal", np.diag([0.4, 0.6])),
                    ("jordan", np.array([[0.5, 1.0], [0.0, 0.5]]))):
        rep = norm_bound_slopes(D, small, large, slack=0.05)
        ok = ok and rep.within_slack
        out.append(f"{name} ({rep.slope_small:.3f}, {rep.slope_large:.3f}) vs "
                   f"({rep.h}, {rep.H})")
    report(acceptance_log, 10, "norm-bound slopes", ok, "; ".join(out) + " within 0.05")


def test_c11_lebesgue_scaling(acceptance_log):
    out, ok = [], True
    for E in (np.array([[1.5, 0.4], [-0.2, 1.0]]),
              np.array([[1.0, 0.3, 0.0], [0.0, 1.2, 0.1], [0.2, 0.0, 0.8]])):
        rep = lebesgue_scaling_check(E, 1_000_000, seed=11, r=2.0)
        ok = ok and rep.passed
        out.append(f"d={E.shape[0]}: rel error {rep.rel_error:.1e} (<= {rep.tolerance:.1e})")
    report(acceptance_log, 11, "Lebesgue scaling", ok, "; ".join(out))


def test_c12_end_to_end_determinism(acceptance_log, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("""
field:
  E: [[2.0, 0.0], [0.0, 1.25]]
  D: [[0.4, 0.0], [0.0, 0.6]]
  alpha: 1.5
  kernel: {kind: sum_powers, gammas: [0.5, 0.8], beta: 1.0}
points: {grid: {lo: [-1, -1], hi: [1, 1], n: [3, 3]}}
n_rep: 500
seed: 12
""")
    runs = {}
    for name, threads in (("a", 1), ("b", 4), ("c", 1)):
        out = str(tmp_path / name)
        assert cli.cmd_simulate(str(cfg), threads=threads, out=out) == 0
        runs[name] = (open(os.path.join(out, cli.SAMPLE_NAME), "rb").read(),
                      io.RunManifest.read(os.path.join(out, "manifest.json")).files)
    ok = runs["a"] == runs["b"] == runs["c"]
    report(acceptance_log, 12, "end-to-end determinism", ok,
           f"sample files byte-identical across threads 1/4/1 "
           f"({len(runs['a'][0])} bytes, sha256 {runs['a'][1][cli.SAMPLE_NAME][:12]})")
