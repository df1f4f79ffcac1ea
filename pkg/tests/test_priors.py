import math

import numpy as np
import pytest

from etiv import (DataError, DgpConfig, MomentModel, PriorSpec,
                  build_training_prior, generate_dataset, log_prior,
                  two_step_gmm)


def test_standard_normal_ordinate():
    spec = PriorSpec.normal([0.0], [1.0])
    assert log_prior(spec, np.array([0.0])) == pytest.approx(
        -0.5 * math.log(2 * math.pi), abs=1e-12
    )


def test_student_t_limits_to_normal():
    spec_t = PriorSpec.student([0.0], [1.0], 1e6)
    spec_n = PriorSpec.normal([0.0], [1.0])
    assert abs(log_prior(spec_t, np.array([0.0]))
               - log_prior(spec_n, np.array([0.0]))) < 1e-3


def test_independence_sums():
    spec2 = PriorSpec.normal([0.3, -0.2], [1.0, 2.0])
    one_a = PriorSpec.normal([0.3], [1.0])
    one_b = PriorSpec.normal([-0.2], [2.0])
    x = np.array([0.5, 1.5])
    assert log_prior(spec2, x) == pytest.approx(
        log_prior(one_a, x[:1]) + log_prior(one_b, x[1:]), abs=1e-12
    )


def test_student_t_ordinate_formula():
    df, scale = 2.5, 3.0
    spec = PriorSpec.student([1.0], [scale], df)
    expected = (math.lgamma((df + 1) / 2) - math.lgamma(df / 2)
                - 0.5 * math.log(df * math.pi) - math.log(scale))
    assert log_prior(spec, np.array([1.0])) == pytest.approx(expected,
                                                             abs=1e-12)


def test_unimodality():
    spec = PriorSpec.student([0.5], [1.2], 2.5)
    vals = [log_prior(spec, np.array([0.5 + d])) for d in (0, 0.5, 1, 2, 5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_dimension_mismatch():
    spec = PriorSpec.normal([0.0], [1.0])
    with pytest.raises(DataError):
        log_prior(spec, np.array([0.0, 1.0]))


def test_validation():
    with pytest.raises(DataError):
        PriorSpec.normal([0.0], [0.0])
    with pytest.raises(DataError):
        PriorSpec.student([0.0], [1.0], -1.0)


def test_serialization_round_trip():
    spec = PriorSpec((("normal"), ("student_t")), [0.1, 0.2], [1.0, 2.0],
                     [np.nan, 2.5])
    spec2 = PriorSpec.from_dict(spec.to_dict())
    assert spec2.families == spec.families
    np.testing.assert_array_equal(spec2.locations, spec.locations)
    np.testing.assert_array_equal(spec2.scales, spec.scales)
    assert np.isnan(spec2.dfs[0]) and spec2.dfs[1] == 2.5


def test_sampling_moments():
    spec = PriorSpec.normal([2.0], [0.5])
    draws = spec.sample(np.random.default_rng(0), 20000)
    assert draws.mean() == pytest.approx(2.0, abs=0.02)
    assert draws.std() == pytest.approx(0.5, abs=0.02)


def test_training_prior_scale_is_twice_gmm_se():
    ds = generate_dataset(DgpConfig(n=400, seed=21, rho=0.3))
    model = MomentModel.for_dataset(ds).extended()
    fit = two_step_gmm(model, ds)
    spec = build_training_prior(ds, model)
    np.testing.assert_allclose(spec.locations, fit.estimate.flat(),
                               atol=1e-12)
    np.testing.assert_allclose(spec.scales, 2.0 * fit.std_errors, atol=1e-12)
    assert all(f == "student_t" for f in spec.families)
    assert np.all(spec.dfs == 2.5)


def test_training_prior_noiseless_centers_on_truth():
    rng = np.random.default_rng(33)
    n = 300
    z1 = np.column_stack([np.ones(n), rng.standard_normal(n)])
    z2 = rng.standard_normal(n)
    x = 1.0 + 0.5 * z1[:, 1] + z2 + rng.standard_normal(n)
    y = 2.0 * x + 1.0 * z1[:, 0] - 0.5 * z1[:, 1]  # no noise
    from etiv import Dataset
    ds = Dataset(y, x, z1, z2)
    model = MomentModel.for_dataset(ds)
    spec = build_training_prior(ds, model)
    np.testing.assert_allclose(spec.locations, [2.0, 1.0, -0.5], atol=1e-8)


def test_training_prior_location_stability_across_splits():
    locs, ses = [], []
    for seed in (101, 202):
        ds = generate_dataset(DgpConfig(n=4000, seed=seed, rho=0.3))
        model = MomentModel.for_dataset(ds).extended()
        fit = two_step_gmm(model, ds)
        locs.append(fit.estimate.flat())
        ses.append(fit.std_errors)
    combined = np.hypot(ses[0], ses[1])
    assert np.all(np.abs(locs[0] - locs[1]) < 3 * combined + 1e-6)
