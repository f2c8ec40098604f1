"""
Acceptance suite.  Each criterion prints one ``PASS``/``FAIL`` line and then
asserts; run ``python3 tests/test_acceptance.py`` for the lines alone.
"""
from __future__ import annotations

import math
import sys
import time

import numpy as np
import pytest

from gwi2.estimate import (
    cls_estimate,
    det_identity_check,
    normal_equations,
    stationary_tensors_from_path,
    subcritical_limit_covariance,
)
from gwi2.laws import (
    FiniteLaw,
    GwiModel,
    degeneracy_indicators,
    mean_matrix,
    preset,
)
from gwi2.limit import LimitConstants, SdeConfig, functional_rho, simulate_limit_path
from gwi2.mcharness import (
    McConfig,
    conditional_variance_check,
    estimator_samples,
    ks_statistic,
    moment_scaling_check,
    run_estimator_mc,
    run_limit_mc,
    third_moment_check,
)
from gwi2.model import MeanMatrix, eigen_decompose, matrix_power_putzer, spectral_radius
from gwi2.rng import generator
from gwi2.simulate import martingale_differences, simulate_gwi, uv_decompose

pytestmark = pytest.mark.slow

RESULTS: list[str] = []


def record(number, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({name}): {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _random_matrices(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        a, b, c, d = rng.uniform(0, 1.5, 4)
        if b > 0 and c > 0 and a + d > 0:
            out.append(MeanMatrix(a, b, c, d))
    return out


def test_criterion_1_exact_identities():
    t0 = time.perf_counter()
    worst = {}
    err = 0.0
    for m in _random_matrices(200, 1):
        p = np.eye(2)
        for k in range(21):
            err = max(err, float(np.max(np.abs(matrix_power_putzer(m, k) - p))) / max(1.0, np.max(np.abs(p))))
            p = p @ m.array
    worst["putzer"] = err

    err = 0.0
    for m in _random_matrices(200, 2):
        s = eigen_decompose(m)
        a = m.array
        checks = [
            a @ s.u_right - s.lambda_plus * s.u_right,
            s.u_left @ a - s.lambda_plus * s.u_left,
            a @ s.v_right - s.lambda_minus * s.v_right,
            s.v_left @ a - s.lambda_minus * s.v_left,
            [s.u_right.sum() - 1, s.u_right @ s.u_left - 1, np.linalg.det(s.basis) - 1],
        ]
        scale = max(1.0, float(np.max(np.abs(a))))
        err = max(err, max(float(np.max(np.abs(c))) for c in checks) / scale)
    worst["eigen"] = err

    model = preset("modelA")
    spec = eigen_decompose(mean_matrix(model))
    rec = det = adj = dn = 0.0
    for seed in range(50):
        traj = simulate_gwi(model, 200, seed)
        series = uv_decompose(traj, spec)
        x = np.outer(series.U, spec.u_right) + np.outer(series.V, spec.v_right)
        rec = max(rec, float(np.max(np.abs(x - traj.states))) / max(1.0, float(np.max(traj.states))))
        det = max(det, det_identity_check(series).rel_diff)
        ne = normal_equations(traj, model.m_eps)
        adj = max(adj, float(np.max(np.abs(ne.A @ ne.adjugate_A - ne.det_A * np.eye(2)))) / abs(ne.det_A))
        direct = martingale_differences(traj).T @ traj.states[:-1].astype(float)
        dn = max(dn, float(np.max(np.abs(ne.D(model.offspring_means) - direct))) / float(np.max(np.abs(direct))))
    worst.update(reconstruction=rec, det=det, adjugate=adj, D=dn)
    elapsed = time.perf_counter() - t0
    ok = (
        worst["putzer"] < 1e-10 and worst["eigen"] < 1e-12 and rec < 1e-8 and det < 1e-8
        and adj < 1e-8 and dn < 1e-9 and elapsed < 10
    )
    record(1, "exact identities", ok, ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s")


def test_criterion_2_cls_hand_example():
    states = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
    est = cls_estimate(states, [1, 1])
    ok = (
        est.m_hat is not None
        and np.array_equal(est.m_hat, [[-1.0, 0.0], [0.0, 0.0]])
        and est.rho_hat == 0.0
        and est.det_A == 1
    )
    record(2, "CLS hand example", ok, f"m_hat={est.m_hat.tolist()}, rho_hat={est.rho_hat}, det={est.det_A}")


def test_criterion_3_conditional_moments():
    t0 = time.perf_counter()
    model = preset("modelD")
    var = conditional_variance_check(model, (2, 3), reps=10**5, seed=3)
    third = third_moment_check(model, (1, 1), reps=10**5, seed=4)
    target_ok = np.allclose(var.target, [[1.5, 1.0], [1.0, 1.5]], atol=1e-12)
    uv_ok = np.allclose(var.target_uv, var.target, atol=1e-12)
    elapsed = time.perf_counter() - t0
    ok = target_ok and uv_ok and var.max_z < 4 and var.max_z_uv < 4 and third.max_z < 4 and elapsed < 30
    record(
        3, "conditional moments", ok,
        f"variance max z={var.max_z:.2f}, third-moment max z={third.max_z:.2f}, {elapsed:.1f}s",
    )


def test_criterion_4_subcritical():
    t0 = time.perf_counter()
    model = preset("modelC")
    m = model.offspring_means

    improved = 0
    for seed in range(200):
        states = simulate_gwi(model, 10**5, seed, method="multinomial").states
        e_small = cls_estimate(states[: 10**3 + 1], model.m_eps).m_hat
        e_big = cls_estimate(states, model.m_eps).m_hat
        improved += np.linalg.norm(e_big - m) < np.linalg.norm(e_small - m)
    frac = improved / 200

    long = simulate_gwi(model, 10**6, 12345, method="multinomial").states
    cov = subcritical_limit_covariance(model, stationary_tensors_from_path(long))
    mc = McConfig(reps=2000, n=2000, seed=7)
    samples, failures = estimator_samples(model, mc, "sub_mxi")
    samples = samples[~np.isnan(samples).any(axis=1)]
    emp = np.cov(samples.T)
    pred = cov.vec_cov
    big = np.abs(pred) > 0.1 * np.max(np.abs(pred))
    rel = np.max(np.abs(emp[big] - pred[big]) / np.abs(pred[big]))

    rho_samples, _ = estimator_samples(model, mc, "sub_rho")
    var_rho = float(np.nanvar(rho_samples, ddof=1))
    rel_rho = abs(var_rho - cov.var_rho) / cov.var_rho
    elapsed = time.perf_counter() - t0
    ok = frac >= 0.95 and rel < 0.15 and rel_rho < 0.15 and elapsed <= 600
    record(
        4, "subcritical consistency and normality", ok,
        f"improved {frac:.1%}, max covariance rel err {rel:.3f}, var_rho {var_rho:.4f} vs "
        f"{cov.var_rho:.4f} (rel {rel_rho:.3f}), failures {failures}, {elapsed:.0f}s",
    )


def test_criterion_5_critical_nondegenerate():
    t0 = time.perf_counter()
    model = preset("modelA")
    const = LimitConstants.from_model(model)
    est_mc = McConfig(reps=4000, n=1000, seed=11)
    lim_mc = McConfig(reps=4000, n=1, seed=12, dt=5e-4)
    ks_rho = ks_statistic(run_estimator_mc(model, est_mc, "rho_scaled"), run_limit_mc(const, lim_mc, "rho"))
    ks_mxi = ks_statistic(run_estimator_mc(model, est_mc, "mxi_proj"), run_limit_mc(const, lim_mc, "mxi_proj"))
    elapsed = time.perf_counter() - t0
    ok = ks_rho <= 0.08 and ks_mxi <= 0.08 and elapsed <= 900
    record(5, "critical nondegenerate limit", ok, f"KS rho={ks_rho:.4f}, KS mxi={ks_mxi:.4f}, {elapsed:.0f}s")


def test_criterion_6_degenerate():
    t0 = time.perf_counter()
    model = preset("modelD")
    ind = degeneracy_indicators(model)
    spec = eigen_decompose(mean_matrix(model))
    traj = simulate_gwi(model, 10**5, 21, method="multinomial")
    v = traj.states[:-1] @ spec.v_left
    avg = float(v @ v) / traj.n
    rel_m = abs(avg - 0.25) / 0.25

    const = LimitConstants.from_model(model)
    est = run_estimator_mc(model, McConfig(reps=3000, n=2000, seed=22), "mxi_degenerate_proj")
    lim = run_limit_mc(const, McConfig(reps=3000, n=1, seed=23), "mxi_degenerate_proj")
    ks = ks_statistic(est, lim)

    det_imm = GwiModel(model.offspring1, model.offspring2, FiniteLaw.point_mass(1, 1))
    flagged = degeneracy_indicators(det_imm).full_degenerate and not ind.full_degenerate
    elapsed = time.perf_counter() - t0
    ok = abs(ind.M - 0.25) < 1e-12 and rel_m < 0.05 and ks <= 0.10 and flagged and elapsed <= 900
    record(
        6, "degenerate critical regime", ok,
        f"mean V^2={avg:.4f} (rel {rel_m:.3f}), KS={ks:.4f}, full-degenerate flagged={flagged}, {elapsed:.0f}s",
    )


def test_criterion_7_existence():
    parts = []
    ok = True
    for name in ("modelA", "modelC"):
        vals, _ = estimator_samples(preset(name), McConfig(reps=1000, n=1000, seed=31), "existence")
        p_omega, p_tilde = vals.mean(axis=0)
        ok &= p_omega >= 0.99 and p_tilde >= 0.99
        parts.append(f"{name} P(omega)={p_omega:.3f} P(omega~)={p_tilde:.3f}")
    record(7, "existence probabilities", ok, ", ".join(parts))


def test_criterion_8_moment_scaling():
    t0 = time.perf_counter()
    a = moment_scaling_check(preset("modelA"), 2, [100, 200, 400, 800], reps=2000, seed=41)
    drift_a = {k: a.drift(k) for k in ("norm_ratio", "u_ratio", "v_ratio")}
    d = moment_scaling_check(preset("modelD"), 2, [100, 200, 400, 800], reps=2000, seed=42)
    drift_d = d.drift("v_raw")
    c = moment_scaling_check(preset("modelC"), 4, [100, 1000, 10000], reps=2000, seed=43)
    drift_c = c.drift("norm_raw")
    elapsed = time.perf_counter() - t0
    ok = max(drift_a.values()) < 3 and drift_d < 2 and drift_c < 2 and elapsed <= 300
    record(
        8, "moment scaling", ok,
        "modelA " + ", ".join(f"{k}={v:.2f}" for k, v in drift_a.items())
        + f"; modelD E V^2 drift={drift_d:.2f}; modelC E|X|^4 drift={drift_c:.2f}; {elapsed:.0f}s",
    )


def _unit_u_noise_constants():
    # every individual has exactly one child, so the total population is
    # driven by immigration alone and Vbar u_L = 0
    swap = FiniteLaw.from_mapping({(1, 0): 0.5, (0, 1): 0.5})
    model = GwiModel(swap, swap, FiniteLaw.from_mapping({(1, 0): 0.5, (1, 1): 0.5}))
    return LimitConstants.from_model(model)


def _rho_quantiles(const, dW_fine, dt_fine, levels):
    fine, coarse = [], []
    for dw in dW_fine:
        coarse_dw = dw[0::2] + dw[1::2]
        fine.append(functional_rho(simulate_limit_path(SdeConfig(const, dt_fine), dW=dw, dW_tilde=dw), const.drift))
        coarse.append(
            functional_rho(
                simulate_limit_path(SdeConfig(const, 2 * dt_fine), dW=coarse_dw, dW_tilde=coarse_dw), const.drift
            )
        )
    return np.quantile(fine, levels), np.quantile(coarse, levels)


def test_criterion_9_sde_sanity():
    const = _unit_u_noise_constants()
    path = simulate_limit_path(SdeConfig(const, 5e-4, seed=51))
    y_err = float(np.max(np.abs(path.Y - const.drift * path.t)))
    rho0 = functional_rho(path, const.drift)

    model_a = LimitConstants.from_model(preset("modelA"))
    rng = generator(52)
    dt_fine = 2.5e-4
    dW = rng.standard_normal((10**4, round(1 / dt_fine), 2)) * math.sqrt(dt_fine)
    levels = [0.05, 0.5, 0.95]
    q_fine, q_coarse = _rho_quantiles(model_a, dW, dt_fine, levels)
    rel = np.abs(q_fine - q_coarse) / np.abs(q_coarse)
    ok = y_err < 1e-12 and abs(rho0) < 1e-12 and np.max(rel) < 0.02
    record(
        9, "SDE sanity", ok,
        f"max |Y - drift t|={y_err:.1e}, rho functional={rho0:.1e}, dt-halving quantile rel change "
        + "/".join(f"{r:.4f}" for r in rel),
    )


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
