"""Acceptance gate: one test per release criterion, at its stated tolerance.

Each test prints one `[ACCEPTANCE] <name>: PASS/FAIL` line (run with -s to
see them live).  Runtime budgets are asserted where the criterion states one.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from oastats import (
    AvailabilityModel,
    NoiseModel,
    ObservationPanel,
    SimConfig,
    TruthSeries,
    WeightVector,
    build_variance_matrix,
    delta_bias,
    delta_variance,
    enumerate_exact,
    enumerate_rs_moments,
    estimate_moments,
    generate_synthetic,
    minimize_bias,
    minimize_missing_bias_closed_form,
    minimize_mse,
    minimize_variance,
    rs_moments,
    simulate,
    solve_qp,
)
from oastats.oa_solver import QpProblem

from conftest import rainfall_panel, random_psd, reference_qp_min, wavy_weights

FULL = AvailabilityModel(1.0)
ALPHA_GRID = tuple(round(0.1 * k, 10) for k in range(1, 11))


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"[ACCEPTANCE] {name}: PASS")


def oracle_fixtures():
    """The ten small fixtures used for enumeration-vs-model checks."""
    specs = [
        (10, 1, None), (11, 2, None), (12, 3, None), (10, 4, None), (12, 5, None),
        (11, 6, 0.37), (12, 7, 0.74), (10, 8, 1.11), (11, 9, 1.48), (12, 10, 1.85),
    ]
    noise = NoiseModel(0.2)
    out = []
    for n, seed, phase in specs:
        panel, truth = generate_synthetic(n, 48, 0.3, noise, seed=seed)
        if phase is None:
            beta = WeightVector.uniform(n)
        else:
            beta = WeightVector(wavy_weights(n, phase, amp=0.2))
        m = estimate_moments(panel, truth, noise, FULL)
        out.append((panel, truth, beta, m))
    return out


def test_closed_form_fixtures():
    with criterion("closed-form missing-bias fixtures"):
        minimize_missing_bias_closed_form([-2.0, 1.0, 1.0])  # warm-up
        start = time.perf_counter()
        sym = minimize_missing_bias_closed_form([-2.0, 1.0, 1.0])
        asym = minimize_missing_bias_closed_form([-3.0, 1.0, 3.0])
        elapsed = time.perf_counter() - start
        assert np.abs(sym.beta - np.array([1 / 3, 1 / 3, 1 / 3])).max() <= 1e-12
        assert np.abs(asym.beta - np.array([1 / 3, 1 / 2, 1 / 6])).max() <= 1e-12
        assert elapsed < 1e-3, f"closed form took {elapsed * 1e3:.3f} ms"


def test_alpha_one_reductions():
    with criterion("alpha=1 reductions to quadratic forms"):
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        for _ in range(20):
            n = int(rng.integers(2, 51))
            n_time = int(rng.integers(2, 201))
            sigma = float(rng.choice([0.0, 0.3, 1.0]))
            values = rng.normal(loc=rng.uniform(-5, 5), scale=2.0, size=(n, n_time))
            truth = TruthSeries(values.mean(axis=0) + rng.normal(scale=0.4, size=n_time))
            panel = ObservationPanel(values, tuple(f"s{i}" for i in range(n)))
            m = estimate_moments(panel, truth, NoiseModel(sigma), FULL)
            w = rng.random(n) + 0.05
            beta = WeightVector(w / w.sum())
            b = beta.beta

            dev = values - truth.values[None, :]
            d1_oracle = np.einsum("it,jt->ij", dev, dev) / n_time
            cov_oracle = np.cov(values, bias=True)
            if n == 1:
                cov_oracle = cov_oracle.reshape(1, 1)

            bias_sq, _, _ = delta_bias(m, beta, FULL, truth)
            variance = delta_variance(m, beta, FULL)
            want_bias = float(b @ d1_oracle @ b)
            want_var = float(b @ cov_oracle @ b)
            assert bias_sq == pytest.approx(want_bias, rel=1e-10)
            assert variance == pytest.approx(want_var, rel=1e-10)
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"reductions took {elapsed:.2f} s"


def test_oracle_equivalence():
    with criterion("enumeration-vs-model equivalence and small-alpha divergence"):
        start = time.perf_counter()
        for panel, truth, beta, m in oracle_fixtures():
            errs_bias, errs_var = {}, {}
            exact = {}
            for alpha in ALPHA_GRID:
                avail = AvailabilityModel(alpha)
                _, ex_bias, ex_var = enumerate_exact(panel, truth, beta, avail)
                model_bias, _, _ = delta_bias(m, beta, avail, truth)
                model_var = delta_variance(m, beta, avail)
                errs_bias[alpha] = abs(model_bias - ex_bias) / ex_bias
                errs_var[alpha] = abs(model_var - ex_var) / ex_var
                exact[alpha] = (ex_bias, ex_var)
            high = [a for a in ALPHA_GRID if a >= 0.5]
            worst = max(max(errs_bias[a], errs_var[a]) for a in high)
            assert worst <= 0.10, f"model error {worst:.3f} at alpha >= 0.5"
            # divergence concentrates at the smallest availability
            assert errs_var[0.1] > max(errs_var[a] for a in high)

            for alpha in (0.5, 0.9):
                avail = AvailabilityModel(alpha)
                res = simulate(
                    panel, truth, beta, avail, SimConfig(n_realizations=5000, seed=77)
                )
                ex_bias, ex_var = exact[alpha]
                var_series = _exact_conditional_var_series(panel, beta, avail)
                inflation = float(var_series.mean()) / 5000
                assert abs(res.sim_bias_sq - ex_bias - inflation) <= 3 * res.mc_stderr_bias + 1e-12
                assert abs(res.sim_variance - ex_var) <= 3 * res.mc_stderr_var
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0, f"oracle equivalence took {elapsed:.1f} s"


def _exact_conditional_var_series(panel, beta, avail):
    b = beta.beta
    n = panel.n_locations
    bits = ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(float)
    k = bits.sum(axis=1)
    w = avail.alpha**k * (1 - avail.alpha) ** (n - k)
    denom = bits @ b
    keep = denom > 0
    bits, w, denom = bits[keep], w[keep], denom[keep]
    w = w / w.sum()
    f = (bits * b) @ panel.values / denom[:, None]
    m1 = w @ f
    return np.maximum(w @ f**2 - m1**2, 0.0)


def test_ratio_moment_formulas():
    with criterion("closed-form R/S moments match exact enumeration"):
        rng = np.random.default_rng(303)
        start = time.perf_counter()
        for n in (2, 3, 5, 8):
            values = rng.normal(loc=6.0, scale=2.5, size=(n, 30))
            panel = ObservationPanel(values, tuple(f"s{i}" for i in range(n)))
            truth = TruthSeries(values.mean(axis=0))
            beta = WeightVector(wavy_weights(n, 0.31 * n))
            for alpha in (0.25, 0.5, 0.75, 1.0):
                avail = AvailabilityModel(alpha)
                m = estimate_moments(panel, truth, NoiseModel(0.0), avail)
                formula = rs_moments(m, beta, avail)
                exact = enumerate_rs_moments(panel, beta, avail)
                for name in ("mu_R", "mu_S", "var_R", "var_S", "cov_RS"):
                    got = getattr(formula, name)
                    want = getattr(exact, name)
                    assert got == pytest.approx(want, rel=1e-10, abs=1e-12), name
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"moment verification took {elapsed:.1f} s"


def test_qp_correctness():
    with criterion("active-set QP vs brute-force reference"):
        rng = np.random.default_rng(808)
        start = time.perf_counter()
        for k in range(100):
            n = int(rng.integers(2, 9))
            if k % 3 == 0:
                c = rng.random(n) + 0.1
                q = np.diag(c)
                sol = solve_qp(QpProblem(q))
                expected = (1.0 / c) / (1.0 / c).sum()
                assert np.abs(sol.beta.beta - expected).max() <= 1e-10
            else:
                rank = int(rng.integers(1, n + 1))
                q = random_psd(rng, n, rank=rank)
                sol = solve_qp(QpProblem(q))
                _, ref_obj = reference_qp_min(q)
                assert sol.objective == pytest.approx(ref_obj, rel=1e-6, abs=1e-9)
            assert sol.kkt_residual <= 1e-8 * (1.0 + np.abs(q).max())
            beta = sol.beta.beta
            assert abs(beta.sum() - 1.0) <= 1e-12 and beta.min() >= 0.0
            assert sol.rho.min() >= -1e-10
            assert np.abs(sol.rho * beta).max() <= 1e-12
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"QP verification took {elapsed:.1f} s"


def test_mse_dominance():
    with criterion("minimum-MSE weights dominate rival schemes"):
        panel, truth = rainfall_panel()
        noise = NoiseModel(0.2)
        m = estimate_moments(panel, truth, noise, FULL)
        avail = AvailabilityModel(0.9)
        q = build_variance_matrix(m, avail) + m.d1
        sol_mse = minimize_mse(m, avail)
        sol_bias = minimize_bias(m)
        sol_var = minimize_variance(m, avail)
        rivals = [WeightVector.uniform(m.n_locations), sol_bias.beta, sol_var.beta]
        for rival in rivals:
            rival_obj = float(rival.beta @ q @ rival.beta)
            assert sol_mse.objective <= rival_obj + 1e-10

        def exact_mse(wv):
            bias_sq, _, _ = delta_bias(m, wv, avail, truth)
            return bias_sq + delta_variance(m, wv, avail)

        assert exact_mse(sol_mse.beta) <= exact_mse(sol_bias.beta)


def test_sparsity_and_support_behavior():
    with criterion("weight concentration and support growth patterns"):
        panel, truth = rainfall_panel()
        noise = NoiseModel(0.2)
        m = estimate_moments(panel, truth, noise, FULL)
        sol_bias = minimize_bias(m)
        n = m.n_locations
        lowest_quartile = np.argsort(m.f_diag)[: n // 4]
        mass = float(sol_bias.beta.beta[lowest_quartile].sum())
        assert mass > 0.5, f"low-deviation quartile holds {mass:.2f} of the weight"

        support_full = len(minimize_variance(m, FULL).beta.support())
        support_partial = len(minimize_variance(m, AvailabilityModel(0.8)).beta.support())
        assert support_partial >= support_full


def test_determinism():
    with criterion("byte-reproducible simulation and synthesis"):
        panel, truth = generate_synthetic(8, 40, 0.3, NoiseModel(0.2), seed=5)
        panel2, truth2 = generate_synthetic(8, 40, 0.3, NoiseModel(0.2), seed=5)
        assert panel.values.tobytes() == panel2.values.tobytes()
        assert truth.values.tobytes() == truth2.values.tobytes()

        beta = WeightVector.uniform(8)
        avail = AvailabilityModel(0.7)
        cfg = SimConfig(n_realizations=400, seed=99)
        runs = [
            simulate(panel, truth, beta, avail, cfg),
            simulate(panel, truth, beta, avail, cfg),
            simulate(panel, truth, beta, avail, cfg, workers=4),
        ]
        baseline = runs[0]
        for other in runs[1:]:
            assert baseline.ensemble_mean_series.tobytes() == other.ensemble_mean_series.tobytes()
            assert baseline.sim_bias_sq == other.sim_bias_sq
            assert baseline.sim_variance == other.sim_variance
            assert baseline.mc_stderr_bias == other.mc_stderr_bias
            assert baseline.mc_stderr_var == other.mc_stderr_var
