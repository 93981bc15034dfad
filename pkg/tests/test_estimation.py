import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heritcurves.datasets import TrioDataset, TwinDataset
from heritcurves.errors import DataError, DefinitenessError, InferenceUnavailableError, OptimizationError
from heritcurves.estimation import (
    TRIOS,
    TWINS,
    FitConfig,
    ParamVector,
    covariance,
    curve_bands,
    delta_method_se,
    fit,
    gradient,
    hessian,
    information_criteria,
    initial_points,
    model_scan,
    n_params,
    natural_parameters,
    negloglik,
    negloglik_trio,
    negloglik_twins,
    parameter_se,
    to_natural,
    to_unconstrained,
)
from heritcurves.mixture import TrioMixture, TwinJointModel, global_moments
from heritcurves.simulation import sample

import oracles


@pytest.fixture(scope="module")
def t2_data():
    from heritcurves import fixtures

    return sample(fixtures.twin_bmi(), 2000, seed=101).to_dataset()


@pytest.fixture(scope="module")
def t2_fit(t2_data):
    return fit(t2_data, 2, config=FitConfig(n_starts=3, seed=1))


def _random_theta(rng, m, design):
    per = 2 if design == TWINS else 3
    theta = np.concatenate(
        [
            rng.normal(0, 0.5, m - 1),
            rng.normal(0, 1.5, m),
            rng.normal(0, 0.3, m),
            rng.normal(0, 0.25, per * m),
        ]
    )
    return ParamVector(theta, m, design)


def _permute(pv: ParamVector, perm):
    """The same mixture with its components listed in another order."""
    b = pv.blocks()
    eta = np.concatenate([[0.0], pv.theta[b["logit"]]])[perm]
    parts = [eta[1:] - eta[0]]
    for key in list(b)[1:]:
        parts.append(pv.theta[b[key]][perm])
    return ParamVector(np.concatenate(parts), pv.m, pv.design)


# -- transforms -----------------------------------------------------------


@pytest.mark.parametrize("m", range(1, 8))
def test_parameter_counts(m):
    assert n_params(m, TWINS) == 5 * m - 1
    assert n_params(m, TRIOS) == 6 * m - 1


def test_single_component_layout():
    m = TwinJointModel.from_arrays([1.0], [0.0], [1.0], [0.0], [0.0])
    pv = to_unconstrained(m)
    assert len(pv) == 4
    np.testing.assert_array_equal(pv.theta, [0.0, 0.0, 0.0, 0.0])
    assert pv.names() == ["mu_1", "logsd_1", "MZ_1", "DZ_1"]


def test_round_trip_t4(t4):
    back = to_natural(to_unconstrained(t4))
    for a, b in zip(t4.components, back.components):
        assert a.weight == pytest.approx(b.weight, abs=1e-10)
        assert a.mean == pytest.approx(b.mean, abs=1e-10)
        assert a.sd == pytest.approx(b.sd, abs=1e-10)
        for lab in ("MF", "MC", "FC"):
            assert a.rho[lab] == pytest.approx(b.rho[lab], abs=1e-10)


def test_round_trip_t2_is_exact_on_theta(t2):
    pv = to_unconstrained(t2)
    again = to_unconstrained(to_natural(pv))
    np.testing.assert_allclose(again.theta, pv.theta, atol=1e-14)


def test_to_natural_sorts_and_rejects_non_finite():
    pv = ParamVector([0.0, 5.0, 1.0, np.log(2.0), np.log(1.0), 0.1, 0.2, 0.3, 0.4], 2, TWINS)
    model = to_natural(pv)
    assert list(model.sigma) == [1.0, 2.0]
    assert list(model.mu) == [1.0, 5.0]
    with pytest.raises(ValueError):
        to_natural(ParamVector([np.nan, 0, 0, 0], 1, TWINS))
    with pytest.raises(ValueError):
        ParamVector(np.zeros(5), 1, TWINS)


# -- likelihood -----------------------------------------------------------


def test_nll_single_standard_pair():
    theta = ParamVector(np.zeros(4), 1, TWINS)
    val = negloglik_twins(theta, (np.zeros((1, 2)), np.empty((0, 2))))
    assert val == pytest.approx(-math.log(1 / (2 * math.pi)), abs=1e-12)
    assert val == pytest.approx(1.8379, abs=1e-4)


def test_nll_single_standard_trio():
    val = negloglik_trio(ParamVector(np.zeros(5), 1, TRIOS), np.zeros((1, 3)))
    assert val == pytest.approx(1.5 * math.log(2 * math.pi), abs=1e-12)
    assert val == pytest.approx(2.7568, abs=1e-4)


def test_twin_nll_matches_naive_oracle(t2, rng):
    mz, dz = rng.normal(21.4, 0.9, (40, 2)), rng.normal(21.4, 0.9, (30, 2))
    expected = oracles.twin_nll(t2.p, t2.mu, t2.sigma, t2.rho("MZ"), t2.rho("DZ"), mz, dz)
    assert negloglik_twins(to_unconstrained(t2), (mz, dz)) == pytest.approx(expected, rel=1e-12)


def test_trio_nll_matches_naive_oracle(t4):
    y = sample(t4, 50, seed=3).draws
    rhos = list(zip(t4.rho("MF"), t4.rho("MC"), t4.rho("FC")))
    expected = oracles.trio_nll(t4.p, t4.mu, t4.sigma, rhos, y)
    assert abs(negloglik_trio(to_unconstrained(t4), y) - expected) < 1e-9


def test_twin_nll_is_additive(t2, rng):
    mz, dz = rng.normal(21, 1, (25, 2)), rng.normal(21, 1, (15, 2))
    pv = to_unconstrained(t2)
    whole = negloglik_twins(pv, (mz, dz))
    parts = negloglik_twins(pv, (mz, np.empty((0, 2)))) + negloglik_twins(pv, (np.empty((0, 2)), dz))
    assert whole == pytest.approx(parts, rel=1e-13)


def test_trio_nll_rejects_indefinite_theta():
    theta = np.concatenate([[0.0, 0.0], np.arctanh([0.9, 0.9, -0.9])])
    with pytest.raises(DefinitenessError):
        negloglik_trio(ParamVector(theta, 1, TRIOS), np.zeros((3, 3)))


def test_empty_data_is_an_error():
    with pytest.raises(DataError):
        negloglik_twins(ParamVector(np.zeros(4), 1, TWINS), (np.empty((0, 2)), np.empty((0, 2))))


def test_likelihood_dominance_at_truth(t4):
    y = sample(t4, 10_000, seed=8).draws
    truth = to_unconstrained(t4)
    base = negloglik_trio(truth, y) / len(y)
    rng = np.random.default_rng(9)
    checked = 0
    while checked < 20:
        pv = ParamVector(truth.theta + rng.normal(0, 0.1, len(truth)), truth.m, TRIOS)
        try:
            val = negloglik_trio(pv, y) / len(y)
        except DefinitenessError:
            continue
        checked += 1
        assert base <= val


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(3)))
def test_relabelling_leaves_likelihood_unchanged(seed, perm):
    rng = np.random.default_rng(seed)
    pv = _random_theta(rng, 3, TWINS)
    data = (rng.normal(0, 2, (10, 2)), rng.normal(0, 2, (10, 2)))
    assert negloglik_twins(_permute(pv, list(perm)), data) == pytest.approx(negloglik_twins(pv, data), rel=1e-12)


# -- score and Hessian ----------------------------------------------------


def _fd_gradient(f, x):
    g = np.empty_like(x)
    for i in range(len(x)):
        h = 1e-6 * (1 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


@pytest.mark.parametrize("draw", range(25))
def test_gradient_matches_finite_differences(draw):
    rng = np.random.default_rng([77, draw])
    design = TWINS if draw % 2 == 0 else TRIOS
    m = 1 + draw % 3
    while True:
        pv = _random_theta(rng, m, design)
        try:
            model = to_natural(pv)
            break
        except DefinitenessError:
            continue
    data = sample(model, 15 if design == TWINS else 25, seed=[77, draw, 1]).to_dataset()
    g = gradient(pv, data)
    fd = _fd_gradient(lambda x: negloglik(ParamVector(x, m, design), data), pv.theta)
    scale = max(1.0, np.max(np.abs(fd)))
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7 * scale)


def test_single_pair_score_by_hand():
    mu, s, rho = 0.3, 1.4, 0.45
    y1, y2 = 1.1, -0.2
    theta = ParamVector([mu, math.log(s), math.atanh(rho), 0.0], 1, TWINS)
    r1, r2 = (y1 - mu) / s, (y2 - mu) / s
    qf = r1 * r1 - 2 * rho * r1 * r2 + r2 * r2
    d_mu = -(r1 + r2) / (s * (1 + rho))
    d_logs = 2 - qf / (1 - rho**2)
    d_rho = -rho / (1 - rho**2) + (-r1 * r2 * (1 - rho**2) + rho * qf) / (1 - rho**2) ** 2
    expected = [d_mu, d_logs, d_rho * (1 - rho**2), 0.0]
    g = gradient(theta, (np.array([[y1, y2]]), np.empty((0, 2))))
    np.testing.assert_allclose(g, expected, rtol=1e-12, atol=1e-15)


def test_hessian_is_symmetric(t2, rng):
    data = (rng.normal(21, 1, (30, 2)), rng.normal(21, 1, (30, 2)))
    H = hessian(to_unconstrained(t2), data)
    np.testing.assert_array_equal(H, H.T)


# -- fitting --------------------------------------------------------------


def test_fit_converges_and_recovers(t2_fit, t2_data, t2):
    assert t2_fit.converged
    assert t2_fit.grad_norm < 1e-6
    g = gradient(t2_fit.theta, t2_data)
    assert np.max(np.abs(g)) < 1e-5
    names, truth = natural_parameters(t2)
    _, est = natural_parameters(t2_fit.model)
    se = delta_method_se(t2_fit, "parameters")
    z = np.abs(est - truth) / se
    assert np.all(z < 3), dict(zip(names, z))


def test_fit_result_invariants(t2_fit):
    assert t2_fit.Q == 9
    assert t2_fit.n == 4000
    aic, bic = information_criteria(t2_fit.log_likelihood, t2_fit.Q, t2_fit.n)
    assert t2_fit.aic == aic == -2 * t2_fit.log_likelihood + 2 * 9
    assert t2_fit.bic == bic == -2 * t2_fit.log_likelihood + math.log(4000) * 9
    assert list(t2_fit.model.sigma) == sorted(t2_fit.model.sigma)
    assert len(t2_fit.starts) == 3
    assert t2_fit.log_likelihood == pytest.approx(-min(s.value for s in t2_fit.starts), rel=1e-12)


def test_bic_penalty_is_heavier(t2_fit):
    for m in range(1, 6):
        Q = n_params(m, TWINS)
        aic, bic = information_criteria(0.0, Q, t2_fit.n)
        assert bic - aic == pytest.approx((math.log(t2_fit.n) - 2) * Q)
        assert bic > aic


def test_single_component_mean_oracle(t2):
    data = sample(t2, (800, 500), seed=4).to_dataset()
    res = fit(data, 1, config=FitConfig(n_starts=1))
    assert res.converged
    r_mz, r_dz = res.model.rho("MZ")[0], res.model.rho("DZ")[0]
    # closed-form GLS mean given the fitted correlations
    w_mz, w_dz = len(data.mz) / (1 + r_mz), len(data.dz) / (1 + r_dz)
    gls = (w_mz * data.mz.mean() + w_dz * data.dz.mean()) / (w_mz + w_dz)
    assert res.model.mu[0] == pytest.approx(gls, abs=1e-8)
    pooled = data.values().mean()
    assert abs(res.model.mu[0] - pooled) < 0.02 * res.model.sigma[0]


def test_single_component_trio_mean_and_sd(t4):
    data = TrioDataset(sample(t4, 3000, seed=12).draws)
    res = fit(data, 1, config=FitConfig(n_starts=1))
    assert res.converged
    assert res.model.mu[0] == pytest.approx(data.values().mean(), rel=2e-3)
    assert res.model.sigma[0] == pytest.approx(data.values().std(), rel=2e-2)


def test_degenerate_data_fails_loudly():
    data = TwinDataset(np.full((20, 2), 3.0), np.full((20, 2), 3.0))
    with pytest.raises((OptimizationError, DefinitenessError)):
        fit(data, 1)


def test_fit_needs_enough_families():
    data = TwinDataset(np.random.default_rng(0).normal(size=(3, 2)), np.random.default_rng(1).normal(size=(3, 2)))
    with pytest.raises(DataError):
        fit(data, 2)
    with pytest.raises(DataError):
        fit(TwinDataset(np.random.default_rng(0).normal(size=(30, 2)), np.empty((0, 2))), 1)


def test_monotone_in_number_of_starts(t2):
    data = sample(t2, 300, seed=21).to_dataset()
    lls = [fit(data, 2, config=FitConfig(n_starts=k, seed=5)).log_likelihood for k in (1, 2, 4)]
    assert lls[0] <= lls[1] <= lls[2]


def test_starts_are_reproducible(t2_data):
    cfg = FitConfig(n_starts=4, seed=3)
    a, b = initial_points(t2_data, 2, cfg), initial_points(t2_data, 2, cfg)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    prefix = initial_points(t2_data, 2, FitConfig(n_starts=2, seed=3))
    np.testing.assert_array_equal(prefix[1], a[1])


def test_all_failed_starts_carry_diagnostics(t2_data):
    with pytest.raises(OptimizationError) as info:
        fit(t2_data, 1, starts=[np.full(4, np.nan)])
    assert len(info.value.diagnostics) == 1


# -- model selection ------------------------------------------------------


def test_scan_twin_counts(t2_data):
    table = model_scan(t2_data, range(1, 4), config=FitConfig(n_starts=2))
    assert [r.Q for r in table.rows] == [4, 9, 14]
    assert table.best_m == 2
    assert min(r.delta_bic for r in table.rows) == 0.0
    for r in table.rows:
        assert r.aic == -2 * r.log_likelihood + 2 * r.Q
    text = table.to_text().splitlines()
    assert [int(line.split()[1]) for line in text[1:4]] == [4, 9, 14]


def test_scan_records_failures(t2):
    data = sample(t2, 4, seed=0).to_dataset()
    table = model_scan(data, [1, 2], config=FitConfig(n_starts=1))
    assert table.rows[1].status.startswith("failed")
    assert table.rows[1].Q == 9
    assert table.best_m == 1


# -- delta method ---------------------------------------------------------


def test_delta_method_on_a_coordinate(t2_fit):
    cov = covariance(t2_fit)
    b = t2_fit.theta.blocks()
    i = b["mu"].start
    se = delta_method_se(t2_fit, lambda mdl: to_unconstrained(mdl).theta[i])
    assert se == pytest.approx(math.sqrt(cov[i, i]), rel=1e-6)
    # chain rule through the sd transform
    j = b["logsd"].start
    se_sigma = delta_method_se(t2_fit, lambda mdl: mdl.sigma[0])
    assert se_sigma == pytest.approx(t2_fit.model.sigma[0] * math.sqrt(cov[j, j]), rel=1e-6)


def test_parameter_se_keys(t2_fit):
    se = parameter_se(t2_fit)
    assert "rho_MZ_2" in se and "global_rho_DZ" in se
    assert all(v > 0 for v in se.values())


def test_singular_hessian_is_reported(t2_fit):
    from dataclasses import replace

    broken = replace(t2_fit, hessian=np.zeros_like(t2_fit.hessian))
    with pytest.raises(InferenceUnavailableError):
        covariance(broken)
    indefinite = replace(t2_fit, hessian=-np.eye(len(t2_fit.theta)))
    with pytest.raises(InferenceUnavailableError):
        delta_method_se(indefinite, "global")


def test_curve_bands_widen_in_the_tails(t2_fit, t2_data):
    y = t2_data.values()
    grid = np.quantile(y, [0.5, 0.99])
    bands = curve_bands(t2_fit, grid)
    rho = bands["rho_MZ"]
    assert rho.se[1] > rho.se[0]
    assert np.all(rho.lower < rho.value) and np.all(rho.value < rho.upper)
    assert set(bands) == {"rho_MZ", "rho_DZ", "a2", "d2", "e2"}
    assert set(curve_bands(t2_fit, grid, design="ace", with_se=False)) == {"rho_MZ", "rho_DZ", "a2", "c2", "e2"}


def test_trio_fit_small(t4):
    data = TrioDataset(sample(t4, 3000, seed=31).draws)
    res = fit(data, 2, config=FitConfig(n_starts=2, seed=2))
    assert res.converged
    assert res.Q == 11
    assert isinstance(res.model, TrioMixture)
    bands = curve_bands(res, np.linspace(2500, 4500, 5))
    assert set(bands) == {"rho_MF", "rho_MC", "rho_FC", "a2", "c2", "e2"}
    total = bands["a2"].value + bands["c2"].value + bands["e2"].value
    np.testing.assert_allclose(total, 1.0, atol=1e-12)
