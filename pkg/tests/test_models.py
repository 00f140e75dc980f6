"""Tests for the model-based estimation pipelines.

Coefficient-limit tests pass the data-generating survival coefficients
into the outcome stage directly, so the frozen limits below are checked
without stage-one noise. They were derived by evaluating the outcome
means of each survival class against the fitted design columns.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sacekit.errors import EstimationError
from sacekit.identify import strata_probs_stochastic
from sacekit.models import (
    ALL_METHODS,
    PROP_METHODS,
    SurvivalParamsER,
    bootstrap,
    estimate_sace,
    fit_ni,
    fit_outcome_er,
    fit_sm,
    fit_survival_er,
    fit_survival_sm,
    joint_survival_objective,
    sensitivity_sweep,
    stochastic_always_share,
    survival_design,
)
from sacekit.numerics import OptimizerResult, check_gradient, rng_stream
from sacekit.simulate import SimulationSetting, gen_dataset

TRUE_U = np.array([0.5, 0.5, 0.5])


def true_survival_er(delta2, covariate_names=("x1", "x2", "x3")):
    """Data-generating survival coefficients on the (1, x, a) design."""
    d2 = float(delta2)
    beta = np.array([2.0, d2 / 2.0, d2 / 2.0, d2 / 2.0, 1.0])
    gamma = np.array([0.0, -1.5 * d2, d2 / 2.0, d2 / 2.0, 1.0])
    opt = OptimizerResult(
        params=np.concatenate([beta, gamma]),
        loglik=0.0,
        converged=True,
        iterations=0,
        grad_norm=0.0,
        boundary_flag=False,
    )
    return SurvivalParamsER(
        beta_treated=beta,
        gamma_ratio=gamma,
        optimizer=opt,
        column_names=("intercept", *covariate_names, "a"),
    )


def test_survival_design_shape():
    d = survival_design(np.ones((4, 2)), np.zeros(4))
    assert d.shape == (4, 4)
    assert_allclose(d[:, 0], 1.0)


def test_joint_objective_gradient_is_analytic():
    rng = rng_stream(31)
    data, _ = gen_dataset(SimulationSetting(n=300, delta1=1, delta2=1, seed=7))
    v = survival_design(data.x, data.a)
    z, s = data.z, data.s
    objective = joint_survival_objective(v[z == 1], s[z == 1], v[z == 0], s[z == 0])
    for _ in range(5):
        point = rng.uniform(-0.8, 0.8, size=2 * v.shape[1])
        assert check_gradient(objective, point) < 1e-6


def test_fit_survival_er_recovers_truth():
    data, _ = gen_dataset(SimulationSetting(n=40_000, delta1=1, delta2=1, seed=41))
    fit = fit_survival_er(data)
    assert fit.optimizer.converged
    truth = true_survival_er(1)
    assert np.all(np.abs(fit.beta_treated - truth.beta_treated) < 0.25)
    assert np.all(np.abs(fit.gamma_ratio - truth.gamma_ratio) < 0.25)


def test_fitted_control_survival_never_exceeds_treated():
    # holds by construction, whatever the data
    data, _ = gen_dataset(SimulationSetting(n=500, delta1=0, delta2=1, seed=42))
    fit = fit_survival_er(data)
    rng = rng_stream(43)
    x = rng.normal(size=(200, 3))
    for a in (0, 1):
        av = np.full(200, a)
        assert np.all(fit.theta_control(x, av) <= fit.theta_treated(x, av) + 1e-15)


def test_outcome_er_coefficient_limits():
    data, _ = gen_dataset(SimulationSetting(n=120_000, delta1=0, delta2=0, seed=44))
    outcome = fit_outcome_er(data, true_survival_er(0))
    # control survivors: mean -1 + x'u with no substitution effect
    assert_allclose(outcome.control, [-1.0, *TRUE_U, 0.0], atol=0.08)
    # treated survivors: always-survivor mean at share 1, protected at 0,
    # so intercept 1 (the protected mean) and share coefficient -1
    assert_allclose(outcome.treated_mix, [1.0, *TRUE_U, -1.0], atol=0.08)


def test_pooled_ni_coefficient_limits():
    data, _ = gen_dataset(SimulationSetting(n=120_000, delta1=0, delta2=0, seed=45))
    outcome = fit_ni(data, true_survival_er(0))
    assert outcome.names["pooled"][-2:] == ("always_share", "z")
    assert_allclose(outcome.pooled, [0.0, *TRUE_U, 0.0, -1.0, 1.0], atol=0.08)


def test_pooled_ni_limits_under_level_shifted_outcomes():
    # outcome means move with the substitution level; the additive model
    # absorbs the shift into the level coefficient and keeps the effect
    data, _ = gen_dataset(
        SimulationSetting(n=120_000, delta1=0, delta2=0, er_violation=True, seed=46)
    )
    outcome = fit_ni(data, true_survival_er(0))
    assert_allclose(outcome.pooled, [6.0, *TRUE_U, 1.0, -2.0, 1.0], atol=0.08)


def test_prop_ni_point_is_the_pooled_z_coefficient():
    data, _ = gen_dataset(SimulationSetting(n=2000, delta1=1, delta2=0, seed=47))
    survival = fit_survival_er(data)
    est = estimate_sace(data, "prop-ni", survival=survival)
    direct = fit_ni(data, survival)
    assert est.point == float(direct.pooled[-1])


def test_end_to_end_recovery_at_moderate_n():
    data, _ = gen_dataset(SimulationSetting(n=5000, delta1=1, delta2=1, seed=48))
    survival = fit_survival_er(data)
    for method in ("prop-er", "prop-ni"):
        est = estimate_sace(data, method, survival=survival)
        assert est.converged
        assert abs(est.point - 1.0) < 0.2


def test_method_and_rho_validation():
    data, _ = gen_dataset(SimulationSetting(n=400, seed=49))
    with pytest.raises(ValueError, match="unknown method"):
        estimate_sace(data, "magic")
    with pytest.raises(ValueError, match="requires rho"):
        estimate_sace(data, "prop-sm")
    with pytest.raises(ValueError, match="does not apply"):
        estimate_sace(data, "prop-er", rho=0.5)
    with pytest.raises(ValueError, match="rho must lie"):
        estimate_sace(data, "prop-sm", rho=1.5)
    with pytest.raises(TypeError):
        estimate_sace(data, "prop-sm", rho=0.5, survival=true_survival_er(0))


def test_stochastic_share_matches_scalar_route():
    rng = rng_stream(50)
    th1 = rng.uniform(0.05, 0.95, size=40)
    th0 = rng.uniform(0.05, 0.95, size=40)
    for rho in (0.0, 0.25, 0.8, 1.0):
        vec = stochastic_always_share(th1, th0, rho)
        scalar = [strata_probs_stochastic(a, b, rho)[0] for a, b in zip(th1, th0)]
        assert_allclose(vec, scalar, rtol=1e-13)
    with pytest.raises(ValueError):
        stochastic_always_share(th1, th0, -0.1)


def test_fit_sm_interior_and_endpoint_rho():
    import warnings

    from sacekit.identify import IdentificationWarning

    data, _ = gen_dataset(SimulationSetting(n=3000, delta1=1, delta2=1, seed=51))
    survival = fit_survival_sm(data)
    with warnings.catch_warnings():
        # at full coupling the control-arm share column flattens; expected
        warnings.simplefilter("ignore", IdentificationWarning)
        fits = {
            rho: fit_sm(data, rho, assume_er=True, survival=survival)
            for rho in (0.0, 0.5, 1.0)
        }
    for fit in fits.values():
        assert np.isfinite(fit.effect)
        assert fit.always_mass > 0
    # stronger coupling leaves less room for treatment-harmed units
    assert fits[1.0].harmed_mass <= fits[0.5].harmed_mass <= fits[0.0].harmed_mass


def test_fit_sm_relaxed_variant_runs():
    data, _ = gen_dataset(SimulationSetting(n=3000, delta1=1, delta2=1, seed=52))
    survival = fit_survival_sm(data)
    fit = fit_sm(data, 0.5, assume_er=False, survival=survival)
    assert np.isfinite(fit.effect)
    names = fit.outcome.names["pooled_relaxed"]
    assert names[-3:] == ("z_x_treated_share", "z", "cz_x_control_share")
    coef = fit.outcome.pooled_relaxed
    assert_allclose(fit.effect, coef[-3] + coef[-2] - coef[-1], rtol=1e-12)


def test_estimate_sace_collects_weak_separation_warnings():
    data, _ = gen_dataset(SimulationSetting(n=1500, delta1=0, delta2=0, seed=53))
    # absurdly high threshold forces the weak-spread path
    est = estimate_sace(data, "prop-er", weak_threshold=0.999)
    assert any("weak" in w for w in est.warnings)
    d = est.to_dict()
    assert set(d) >= {"method", "point", "se", "converged", "warnings"}
    assert d["se"] is None


def test_bootstrap_deterministic_and_ordered():
    data, _ = gen_dataset(SimulationSetting(n=600, delta1=0, delta2=0, seed=54))
    est1 = bootstrap(data, "naive", n_boot=60, seed=9)
    est2 = bootstrap(data, "naive", n_boot=60, seed=9)
    assert est1.se == est2.se
    assert est1.q025 == est2.q025
    assert est1.q025 <= est1.q50 <= est1.q975
    assert est1.n_boot == 60
    est3 = bootstrap(data, "naive", n_boot=60, seed=10)
    assert est3.se != est1.se


def test_bootstrap_validation():
    data, _ = gen_dataset(SimulationSetting(n=300, seed=55))
    with pytest.raises(ValueError, match="unknown method"):
        bootstrap(data, "magic", n_boot=10)
    with pytest.raises(ValueError, match="at least 2"):
        bootstrap(data, "naive", n_boot=1)
    with pytest.raises(ValueError, match="requires rho"):
        bootstrap(data, "prop-sm", n_boot=10)


def test_bootstrap_counts_dropped_replicates():
    # a lone control-arm survivor vanishes from ~37% of resamples, which
    # makes the naive fit impossible in those replicates
    rng = rng_stream(56)
    n = 40
    z = np.ones(n, dtype=int)
    z[0] = 0
    s = np.ones(n, dtype=int)
    a = rng.integers(0, 2, size=n)
    y = rng.normal(size=n)
    from sacekit.data import Dataset

    data = Dataset.from_arrays(z, rng.normal(size=(n, 1)), a, s, y)
    est = bootstrap(data, "naive", n_boot=40, seed=11)
    assert est.n_failed > 0
    assert est.n_boot == 40
    assert any("dropped" in w for w in est.warnings)
    if est.n_failed > 4:
        assert any("unreliable" in w for w in est.warnings)


def test_sensitivity_sweep_grid_and_reuse():
    data, _ = gen_dataset(SimulationSetting(n=2500, delta1=1, delta2=1, seed=57))
    survival = fit_survival_sm(data)
    grid = [0.75, 0.0, 0.25, 0.5, 1.0]
    curve = sensitivity_sweep(data, grid, assume_er=True, survival=survival)
    rhos = [r.rho for r in curve.rows]
    assert rhos == sorted(rhos) and len(rhos) == 5
    harmed = [r.harmed_mass for r in curve.rows]
    assert np.all(np.diff(harmed) <= 1e-12)
    assert all(np.isfinite(r.effect) for r in curve.rows)
    # same survival object: rerun reproduces exactly
    again = sensitivity_sweep(data, grid, assume_er=True, survival=survival)
    assert [r.effect for r in again.rows] == [r.effect for r in curve.rows]
    with pytest.raises(ValueError):
        sensitivity_sweep(data, [])
    with pytest.raises(ValueError):
        sensitivity_sweep(data, [0.5, 1.2])


def test_sensitivity_curve_csv_format(tmp_path):
    from sacekit.models import SensitivityCurve, SensitivityRow

    curve = SensitivityCurve(
        assume_er=True,
        rows=[
            SensitivityRow(rho=0.0, harmed_mass=0.25, effect=1.5),
            SensitivityRow(rho=1.0, harmed_mass=0.0, effect=float("nan"), message="x"),
        ],
    )
    p = tmp_path / "curve.csv"
    curve.to_csv(str(p))
    lines = p.read_text().splitlines()
    assert lines[0] == "rho,pi_dl,delta"
    assert lines[1] == "0.0,0.25,1.5"
    assert lines[2] == "1.0,0.0,"  # failed point keeps its row


def test_method_registry():
    assert set(PROP_METHODS) == {"prop-er", "prop-ni", "prop-sm", "prop-sm-ni"}
    assert set(ALL_METHODS) == set(PROP_METHODS) | {"naive", "dgyz"}
