import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etiv import (Dataset, MomentModel, ParamVector, moment_jacobian,
                  moment_matrix, moment_row, residual, residuals,
                  two_step_gmm)


def _flat_dataset(seed=0, n=30, d_x=1):
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal(n), rng.standard_normal((n, d_x)),
                   np.column_stack([np.ones(n), rng.standard_normal(n)]),
                   rng.standard_normal((n, d_x)))


def test_residual_arithmetic():
    ds = Dataset([3.0], [1.0], [1.0], [0.5])
    model = MomentModel.for_dataset(ds)
    params = ParamVector([1.0, 1.0])
    assert residual(model, ds, params, 0) == pytest.approx(1.0)


def test_residual_exact_fit():
    ds = _flat_dataset(seed=2)
    beta, gamma = 0.7, np.array([0.3, -0.4])
    y = beta * ds.x[:, 0] + ds.z1 @ gamma
    exact = Dataset(y, ds.x, ds.z1, ds.z2)
    model = MomentModel.for_dataset(exact)
    eps = residuals(model, exact, ParamVector([beta, *gamma]))
    np.testing.assert_allclose(eps, 0.0, atol=1e-12)


def test_residual_linearity():
    ds = _flat_dataset(seed=3)
    model = MomentModel.for_dataset(ds)
    p0 = ParamVector([1.0, 0.5, 0.5])
    p1 = ParamVector([1.3, 0.5, 0.5])
    shift = residuals(model, ds, p1) - residuals(model, ds, p0)
    np.testing.assert_allclose(shift, -0.3 * ds.x[:, 0], atol=1e-12)


def test_moment_row_base_is_eps_times_w():
    ds = _flat_dataset(seed=4)
    model = MomentModel.for_dataset(ds)
    params = ParamVector([0.2, -0.1, 0.4])
    eps = residuals(model, ds, params)
    row = moment_row(model, ds, params, 5)
    w5 = np.concatenate([ds.x[5], ds.z1[5], ds.z2[5]])
    np.testing.assert_allclose(row, eps[5] * w5, atol=1e-12)


def test_moment_row_extended_arithmetic():
    # eps=2, x=1, z-parts (1,3), v=0.5 -> (1.5, 2, 6)
    ds = Dataset([3.0], [1.0], [1.0], [3.0])
    model = MomentModel.for_dataset(ds).extended()
    params = ParamVector([1.0, 0.0], [0.5])
    np.testing.assert_allclose(
        moment_row(model, ds, params, 0), [1.5, 2.0, 6.0], atol=1e-12
    )


def test_partial_mask_touches_only_masked_position():
    ds = _flat_dataset(seed=5, d_x=2)
    base = MomentModel.for_dataset(ds)
    partial = base.with_mask((False, True))
    theta = [0.3, -0.2, 0.1, 0.5]
    rows_b = moment_matrix(base, ds, ParamVector(theta))
    rows_p = moment_matrix(partial, ds, ParamVector(theta, [0.7]))
    np.testing.assert_allclose(rows_p[:, 0], rows_b[:, 0], atol=1e-12)
    np.testing.assert_allclose(rows_p[:, 1], rows_b[:, 1] - 0.7, atol=1e-12)
    np.testing.assert_allclose(rows_p[:, 2:], rows_b[:, 2:], atol=1e-12)


def test_extended_equals_base_minus_shift():
    ds = _flat_dataset(seed=6)
    base = MomentModel.for_dataset(ds)
    ext = base.extended()
    theta = [0.5, 0.1, -0.3]
    v = 0.4
    rows_b = moment_matrix(base, ds, ParamVector(theta))
    rows_e = moment_matrix(ext, ds, ParamVector(theta, [v]))
    shift = np.zeros(base.d)
    shift[0] = v
    np.testing.assert_allclose(rows_e, rows_b - shift, atol=1e-12)


def test_clustered_moment_matrix_block_sums():
    rng = np.random.default_rng(9)
    n = 8
    cid = np.repeat([0, 1], 4)
    ds = Dataset(rng.standard_normal(n), rng.standard_normal(n),
                 np.column_stack([np.ones(n), rng.standard_normal(n)]),
                 rng.standard_normal(n), cluster_ids=cid)
    model = MomentModel.for_dataset(ds)
    flat_model = MomentModel(1, 2, 1, (False,), clustered=False)
    params = ParamVector([0.2, 0.1, 0.3])
    rows = moment_matrix(model, ds, params)
    flat = moment_matrix(flat_model, ds, params)
    assert rows.shape == (2, 4)
    np.testing.assert_allclose(rows[0], flat[:4].sum(axis=0), atol=1e-12)
    np.testing.assert_allclose(rows[1], flat[4:].sum(axis=0), atol=1e-12)


def test_mean_masked_rows_reproduce_gmm_v():
    ds = _flat_dataset(seed=10, n=200)
    model = MomentModel.for_dataset(ds).extended()
    fit = two_step_gmm(model, ds)
    # at the GMM estimate the masked moment rows average to zero, i.e.
    # v-hat equals the sample covariance of x with the residual
    base_rows = moment_matrix(model.base(), ds,
                              ParamVector(fit.estimate.theta))
    v_direct = base_rows[:, model.masked_indices].mean(axis=0)
    np.testing.assert_allclose(fit.estimate.v_free, v_direct, atol=1e-10)


def test_jacobian_matches_finite_differences():
    ds = _flat_dataset(seed=12, d_x=2)
    model = MomentModel.for_dataset(ds).with_mask((True, False))
    jac = moment_jacobian(model, ds)
    x0 = np.array([0.3, -0.2, 0.5, 0.1, 0.25])
    h = 1e-6
    fd = np.zeros_like(jac)
    for j in range(model.n_params):
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        gp = moment_matrix(model, ds, ParamVector.from_flat(model, xp)).mean(axis=0)
        gm = moment_matrix(model, ds, ParamVector.from_flat(model, xm)).mean(axis=0)
        fd[:, j] = (gp - gm) / (2 * h)
    np.testing.assert_allclose(jac, fd, rtol=1e-8, atol=1e-8)


def test_beta_zero_pins_coefficient():
    ds = _flat_dataset(seed=13, d_x=2)
    pinned = MomentModel.for_dataset(ds, beta_zero=(False, True))
    full = MomentModel.for_dataset(ds)
    assert pinned.p == full.p - 1
    assert pinned.param_names()[0] == "beta0"
    theta_pinned = [0.4, 0.2, -0.1]
    theta_full = [0.4, 0.0, 0.2, -0.1]
    rows_p = moment_matrix(pinned, ds, ParamVector(theta_pinned))
    rows_f = moment_matrix(full, ds, ParamVector(theta_full))
    np.testing.assert_allclose(rows_p, rows_f, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1),
       st.floats(-2, 2), st.floats(-2, 2))
def test_moment_matrix_affine_in_v(seed, v0, v1):
    ds = _flat_dataset(seed=seed % 1000, d_x=1)
    model = MomentModel.for_dataset(ds).extended()
    theta = [0.5, 0.2, 0.1]
    r0 = moment_matrix(model, ds, ParamVector(theta, [v0]))
    r1 = moment_matrix(model, ds, ParamVector(theta, [v1]))
    np.testing.assert_allclose(r1[:, 0] - r0[:, 0],
                               np.full(ds.n, v0 - v1), atol=1e-9)
    np.testing.assert_allclose(r1[:, 1:], r0[:, 1:], atol=1e-12)
