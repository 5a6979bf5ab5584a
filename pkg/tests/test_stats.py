import math

import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, settings
from hypothesis import strategies as st

from rulecheck.analytics import RuleRevisionStats
from rulecheck.checkers import PRINCIPLES
from rulecheck.stats import (
    DesignMatrix,
    RegressionResult,
    VIFScreeningError,
    build_design_matrix,
    design_from_columns,
    fit_robust,
    ks_two_sample,
    mad_scale,
    relative_change,
    render_table,
    run_group_regression,
    vif,
)
from rulecheck.synthetic import (
    LOG4J_CONSTANT,
    LOG4J_EFFECTS,
    _labeled,
    log4j_like_group,
    single_positive_group,
)


def matrix(columns, y):
    return design_from_columns({f"x{i}": c for i, c in enumerate(columns)}, y)


# -- robust fit ------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(8))
def test_matches_statsmodels_huber(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(15, 80))
    cols = [rng.integers(0, 2, size=n).astype(float) for _ in range(3)]
    for c in cols:
        c[:2], c[2:4] = 1.0, 0.0
    y = 1.0 + cols[0] - 2.0 * cols[1] + rng.standard_t(2, size=n)
    m = matrix(cols, y)
    ours = fit_robust(m)
    ref = sm.RLM(m.y, m.X, M=sm.robust.norms.HuberT(t=1.345)).fit(
        maxiter=200, tol=1e-12, conv="coefs", cov="H1"
    )
    assert np.allclose(ours.coefficients, ref.params, atol=1e-6)
    assert np.allclose(ours.robust_std_errors, ref.bse, rtol=1e-4)
    assert np.allclose(ours.p_values, ref.pvalues, rtol=1e-4, atol=1e-10)
    assert ours.scale == pytest.approx(ref.scale, rel=1e-4)


def test_noiseless_fit_is_exact():
    x = np.tile([0.0, 1.0], 10)
    m = matrix([x], 2 + 3 * x)
    r = fit_robust(m)
    assert r.coefficients == pytest.approx((2.0, 3.0), abs=1e-9)
    ols, *_ = np.linalg.lstsq(m.X, m.y, rcond=None)
    assert np.allclose(r.coefficients, ols, atol=1e-9)
    assert r.p_values == (0.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gaussian_data_close_to_ols(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, 60)
    y = 2 + 3 * x + rng.normal(0, 0.1, 60)
    m = DesignMatrix(np.column_stack([np.ones(60), x]), y, ("intercept", "x"))
    r = fit_robust(m)
    ols, *_ = np.linalg.lstsq(m.X, y, rcond=None)
    # Huber downweights only the tails, so the estimates stay near least squares
    assert np.allclose(r.coefficients, ols, atol=0.05)


def test_outlier_resistance():
    rng = np.random.default_rng(11)
    x = rng.uniform(0, 10, 50)
    y = 2 + 3 * x + rng.normal(0, 0.5, 50)
    worst = int(np.argmax(x))
    y[worst] *= 100
    m = DesignMatrix(np.column_stack([np.ones(50), x]), y, ("intercept", "x"))
    robust = fit_robust(m).coef("x")
    ols = np.linalg.lstsq(m.X, y, rcond=None)[0][1]
    assert abs(robust - 3) / 3 < 0.05
    assert abs(ols - 3) / 3 > 0.20


def test_mad_scale_about_zero():
    r = np.array([-2.0, -1.0, 0.5, 1.0, 3.0])
    assert mad_scale(r) == pytest.approx(1.0 / 0.6744897501960817)


@settings(max_examples=50)
@given(st.floats(0.01, 5.0), st.floats(1.0, 10.0))
def test_p_value_monotone_in_standard_error(coef, factor):
    from scipy.stats import norm

    se = 0.5
    assert 2 * norm.sf(coef / (se * factor)) >= 2 * norm.sf(coef / se)


def test_scaled_noise_raises_p_values():
    rng = np.random.default_rng(3)
    x = np.tile([0.0, 1.0], 20)
    noise = rng.normal(0, 1, 40)
    quiet = fit_robust(matrix([x], 1 + 0.8 * x + 0.5 * noise))
    loud = fit_robust(matrix([x], 1 + 0.8 * x + 2.0 * noise))
    assert loud.p_value("x0") >= quiet.p_value("x0")


# -- VIF -------------------------------------------------------------------------

def test_vif_orthogonal_is_one():
    a = np.array([0, 0, 1, 1, 0, 0, 1, 1.0])
    b = np.array([0, 1, 0, 1, 0, 1, 0, 1.0])
    values = vif(matrix([a, b], np.arange(8.0)))
    assert values["x0"] == pytest.approx(1.0, abs=1e-9)
    assert values["x1"] == pytest.approx(1.0, abs=1e-9)


def test_vif_single_predictor():
    x = np.array([0, 1, 0, 1, 1, 0.0])
    assert vif(matrix([x], np.arange(6.0))) == {"x0": pytest.approx(1.0)}


def test_vif_flipped_bit_matches_hand_r2():
    x1 = np.array([0, 0, 0, 0, 1, 1, 1, 1.0])
    x2 = x1.copy()
    x2[0] = 1.0
    # explicit OLS of x1 on [1, x2] via the normal equations
    A = np.column_stack([np.ones(8), x2])
    beta = np.linalg.solve(A.T @ A, A.T @ x1)
    resid = x1 - A @ beta
    r2 = 1 - resid @ resid / np.sum((x1 - x1.mean()) ** 2)
    m = matrix([x1, x2], np.arange(8.0))
    values = vif(m, limit=None)
    assert values["x0"] == pytest.approx(1 / (1 - r2), rel=1e-12)
    assert values["x1"] == pytest.approx(values["x0"], rel=1e-12)


def test_vif_screen_and_rank():
    x1 = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 1.0] * 3)
    x2 = x1.copy()
    x2[0] = 1.0
    m = matrix([x1, x2], np.arange(36.0))
    with pytest.raises(VIFScreeningError) as err:
        vif(m, limit=5)
    assert err.value.limit == 5 and max(err.value.vifs.values()) > 5
    deficient = DesignMatrix(np.column_stack([np.ones(4), np.ones(4)]), np.zeros(4), ("intercept", "c"))
    with pytest.raises(np.linalg.LinAlgError):
        vif(deficient)


# -- KS --------------------------------------------------------------------------

def brute_ks(a, b):
    points = sorted(set(a) | set(b))
    return max(abs(sum(v <= t for v in a) / len(a) - sum(v <= t for v in b) / len(b)) for t in points)


def test_ks_examples():
    assert ks_two_sample([1, 2, 3], [1, 2, 3]) == (0.0, 1.0)
    assert ks_two_sample([1, 2], [5, 6, 7])[0] == 1.0
    d, _ = ks_two_sample([1, 2, 3], [1.5, 2.5, 3.5])
    assert d == pytest.approx(brute_ks([1, 2, 3], [1.5, 2.5, 3.5]))
    assert d == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        ks_two_sample([], [1])


@settings(max_examples=100)
@given(
    st.lists(st.integers(-20, 20), min_size=1, max_size=30),
    st.lists(st.integers(-20, 20), min_size=1, max_size=30),
)
def test_ks_matches_brute_force_and_is_monotone_invariant(a, b):
    d, p = ks_two_sample(a, b)
    assert d == pytest.approx(brute_ks(a, b), abs=1e-12)
    assert 0 <= p <= 1
    d2, _ = ks_two_sample([math.exp(v / 5) for v in a], [math.exp(v / 5) for v in b])
    assert d2 == pytest.approx(d, abs=1e-12)


def test_ks_p_value_asymptotic_distribution():
    from scipy.stats import kstwobign

    a, b = [0.1, 0.4, 0.7, 0.9], [0.3, 0.5, 0.6, 1.2, 1.5]
    d, p = ks_two_sample(a, b)
    assert p == pytest.approx(kstwobign.sf(math.sqrt(4 * 5 / 9) * d))


# -- design matrix ---------------------------------------------------------------

def test_single_positive_column_dropped():
    group, stats = single_positive_group()
    m = build_design_matrix(group, stats)
    assert "successful_action" not in m.columns
    assert m.dropped["successful_action"] == "degenerate"


def test_complementary_columns_aliased():
    x = np.array([0, 1, 0, 1, 1, 0, 0, 1.0])
    m = design_from_columns({"a": x, "b": 1 - x}, np.arange(8.0))
    assert m.columns == ("intercept", "a") and m.dropped == {"b": "aliased"}


def test_insufficient_observations():
    m = design_from_columns(
        {"a": [1, 1, 0, 0], "b": [1, 0, 1, 0], "c": [1, 0, 0, 1.0]}, [1, 2, 3, 4.0]
    )
    assert m.columns == ("intercept", "a", "b")
    assert m.dropped == {"c": "insufficient_observations"}


def test_identical_rules_intercept_only():
    labels = {p: True for p in PRINCIPLES}
    group = [_labeled(5_000_000 + i, "g", labels) for i in range(6)]
    stats = [RuleRevisionStats(r.sid, 1, 0, 0, 10, 1.0 + 0.1 * i) for i, r in enumerate(group)]
    r = run_group_regression(group, stats)
    assert r.columns == ("intercept",)
    assert set(r.dropped) == set(PRINCIPLES)
    assert r.coef("intercept") == pytest.approx(np.median([s.workload for s in stats]), abs=0.1)


def test_missing_stats_and_empty_group():
    group, stats = log4j_like_group()
    with pytest.raises(KeyError):
        build_design_matrix(group, stats[1:])
    with pytest.raises(ValueError):
        build_design_matrix([], stats)


@pytest.mark.parametrize("seed", range(5))
def test_every_principle_accounted_for(seed):
    group, stats = single_positive_group(seed)
    r = run_group_regression(group, stats, vif_limit=None)
    assert set(r.columns[1:]) | set(r.dropped) == set(PRINCIPLES)
    assert not set(r.columns) & set(r.dropped)


# -- group pipeline --------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_log4j_recovery(seed):
    group, stats = log4j_like_group(seed)
    r = run_group_regression(group, stats)
    for name, value in LOG4J_EFFECTS.items():
        assert r.coef(name) == pytest.approx(value, rel=0.15)
    assert r.significant() == set(LOG4J_EFFECTS)
    assert set(r.dropped) == set(LOG4J_CONSTANT) and r.n_obs == 9
    assert r.ks_p_value > 0.05


def test_relative_change_examples():
    # documentation fixture: constant 0.51, limited proxy -0.41
    assert 0.51 - 0.41 == pytest.approx(0.10)
    drop = -relative_change(0.51, -0.41)
    assert drop == pytest.approx(0.41 / 0.51)
    # the quoted 78% is not recoverable from the two rounded coefficients
    assert round(drop, 3) == 0.804
    assert -relative_change(7.45, -2.71) == pytest.approx(0.36, abs=0.005)
    assert -relative_change(7.45, -7.39) == pytest.approx(0.99, abs=0.005)


def test_render_table_layout():
    group, stats = log4j_like_group()
    r = run_group_regression(group, stats)
    other = RegressionResult(("intercept",), (0.5,), (0.1,), (0.2,), 4, dropped={"exceptions": "degenerate"})
    text = render_table({"Log4j": r, "Tiny": other})
    lines = text.splitlines()
    assert lines[0].split()[-2:] == ["Log4j", "Tiny"]
    row = next(line for line in lines if line.startswith("Alert Throttling"))
    assert "*" in row and "(<0.01*)" in row and row.rstrip().endswith("-")
    assert next(line for line in lines if line.startswith("N.obs.")).split()[-2:] == ["9", "4"]
    assert "Tiny: exceptions dropped (degenerate)" in text
    assert next(line for line in lines if line.startswith("Constant")).rstrip().endswith("0.50 (0.20)")


def test_result_to_dict():
    group, stats = log4j_like_group()
    d = run_group_regression(group, stats).to_dict()
    assert set(d) == {"n_obs", "coefficients", "robust_std_errors", "p_values", "vif", "dropped",
                      "ks", "scale", "iterations", "converged"}
    assert set(d["coefficients"]) == set(LOG4J_EFFECTS)
