import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from outageid.bench import NoiseModel, OutageScenario, run_method, sample_placement, simulate_angles
from outageid.lars import (
    DegenerateDesignError,
    LassoPath,
    lars_path,
    select_outages,
    standardize,
)

from oracles import lasso_cd, path_vs_cd, soft_threshold


def _path_of(beta):
    beta = np.asarray(beta, dtype=float)
    return LassoPath(
        lambdas=np.array([1.0, 0.0]),
        betas=np.vstack([np.zeros_like(beta), beta]),
        betas_std=np.vstack([np.zeros_like(beta), beta]),
        active_sets=((), tuple(int(i) + 1 for i in np.flatnonzero(beta))),
        events=(),
        max_steps=1,
        line_ids=tuple(range(1, beta.size + 1)),
    )


def _kkt(design, y, path, tol=1e-8):
    X = design.columns
    yc = y - y.mean()
    for lam, b in zip(path.lambdas, path.betas_std):
        c = X.T @ (yc - X @ b)
        c[design.scales == 0] = 0.0
        act = b != 0
        assert np.all(np.abs(np.abs(c[act]) - lam) <= tol)
        assert np.all(np.abs(c[~act]) <= lam + tol)
        if lam > tol:
            assert np.all(np.sign(b[act]) == np.sign(c[act]))


def _planted(rng, K, L, a, snr=10.0):
    F = rng.standard_normal((K, L))
    support = rng.choice(L, size=a, replace=False)
    beta = np.zeros(L)
    beta[support] = rng.uniform(1, 3, a) * rng.choice([-1, 1], a)
    signal = F @ beta
    noise = rng.standard_normal(K)
    noise *= np.linalg.norm(signal) / (snr * np.linalg.norm(noise))
    return F, signal + noise


class TestStandardize:
    def test_constant_column_dropped(self):
        f = np.array([[1.0, 0.0], [1.0, 2.0], [1.0, 1.0]])
        d = standardize(f)
        assert d.dropped_columns == (1,)
        np.testing.assert_array_equal(d.columns[:, 0], 0.0)

    def test_two_row_column(self):
        d = standardize(np.array([[0.0, 1.0], [2.0, 0.0]]))
        np.testing.assert_allclose(d.columns[:, 0], [-1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_retained_columns_are_normalized(self, rng):
        d = standardize(rng.standard_normal((12, 30)) * 5 + 3)
        assert np.max(np.abs(d.columns.mean(axis=0))) <= 1e-12
        assert np.max(np.abs(np.linalg.norm(d.columns, axis=0) - 1)) <= 1e-12

    def test_all_constant(self):
        with pytest.raises(DegenerateDesignError):
            standardize(np.ones((4, 3)))

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            standardize(np.ones((1, 3)))


class TestOrthonormal:
    @pytest.fixture
    def design(self, rng):
        K, L = 12, 5
        Z = rng.standard_normal((K, L))
        Z -= Z.mean(axis=0)
        Q, _ = np.linalg.qr(Z)
        return standardize(Q)

    def test_transition_points_are_sorted_correlations(self, design, rng):
        y = design.columns @ np.array([3.0, -2.0, 1.0, 0.5, -0.25]) + 0.01 * rng.standard_normal(12)
        y -= y.mean()
        c = design.columns.T @ y
        path = lars_path(design, y, max_steps=10)
        expect = np.r_[np.sort(np.abs(c))[::-1], 0.0]
        np.testing.assert_allclose(path.lambdas, expect, atol=1e-12)

    def test_solution_is_soft_thresholding(self, design, rng):
        y = rng.standard_normal(12)
        c = design.columns.T @ (y - y.mean())
        path = lars_path(design, y, max_steps=10)
        for lam in np.linspace(0, np.abs(c).max(), 17):
            np.testing.assert_allclose(path.coef_at(lam), soft_threshold(c, lam), atol=1e-12)


def test_oracle_agrees_with_closed_form(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((10, 4)))
    y = rng.standard_normal(10)
    c = Q.T @ y
    for lam in (0.0, 0.1, 0.5, 1.0):
        np.testing.assert_allclose(lasso_cd(Q, y, lam), soft_threshold(c, lam), atol=1e-9)


def test_single_column_fit(rng):
    f = rng.standard_normal((8, 1))
    path = lars_path(standardize(f), f[:, 0] * 2.5, max_steps=3)
    assert len(path) == 2
    assert path.lambdas[0] == pytest.approx(2.5 * np.linalg.norm(f - f.mean()))
    assert path.terminal[0] == pytest.approx(2.5)


def test_matches_coordinate_descent(rng):
    for _ in range(50):
        F = rng.standard_normal((15, 40))
        y = rng.standard_normal(15)
        d = standardize(F)
        path = lars_path(d, y)
        assert path_vs_cd(d.columns, y, path.lambdas, path.betas_std) <= 1e-6


def test_path_invariants(rng):
    for trial in range(20):
        F, y = _planted(rng, 18, 35, 1 + trial % 3)
        d = standardize(F)
        path = lars_path(d, y)
        assert np.all(np.diff(path.lambdas) < 0)
        np.testing.assert_array_equal(path.betas[0], 0.0)
        yc = y - y.mean()
        assert path.lambdas[0] == pytest.approx(np.max(np.abs(d.columns.T @ yc)))
        _kkt(d, y, path)
        for prev, cur in zip(path.active_sets, path.active_sets[1:]):
            assert len(set(prev) ^ set(cur)) <= 1


def test_piecewise_linear_between_transitions(rng):
    F = rng.standard_normal((14, 25))
    y = rng.standard_normal(14)
    d = standardize(F)
    path = lars_path(d, y)
    yc = y - y.mean()
    for q in range(len(path) - 1):
        mid = 0.5 * (path.lambdas[q] + path.lambdas[q + 1])
        ref = lasso_cd(d.columns, yc, mid, tol=1e-12)
        assert np.max(np.abs(path.coef_at(mid) - ref)) <= 1e-6


def test_scale_equivariance(rng):
    F, y = _planted(rng, 16, 30, 2)
    d = standardize(F)
    p1 = lars_path(d, y)
    p2 = lars_path(d, 3.7 * y)
    np.testing.assert_allclose(p2.lambdas, 3.7 * p1.lambdas, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(p2.betas, 3.7 * p1.betas, rtol=1e-8, atol=1e-10)
    assert select_outages(p1).selected_lines == select_outages(p2).selected_lines


def test_max_steps_caps_path(rng):
    F, y = _planted(rng, 20, 40, 3)
    path = lars_path(standardize(F), y, max_steps=4)
    assert len(path) <= 5
    assert path.max_steps == 4


def test_default_steps_is_rank_limit(rng):
    F = rng.standard_normal((6, 20))
    path = lars_path(standardize(F), rng.standard_normal(6))
    assert path.max_steps == 5
    assert max(len(s) for s in path.active_sets) <= 5


def test_duplicate_columns(rng):
    F = rng.standard_normal((10, 6))
    F[:, 4] = F[:, 1]
    y = F[:, 1] * 2 + rng.standard_normal(10) * 0.1
    path = lars_path(standardize(F), y)
    assert np.all(np.isfinite(path.betas))
    for s in path.active_sets:
        assert not {2, 5} <= set(s)


def test_rejects_bad_input(rng):
    d = standardize(rng.standard_normal((5, 4)))
    with pytest.raises(ValueError):
        lars_path(d, [1.0, np.nan, 0, 0, 0])
    with pytest.raises(ValueError, match="3 entries"):
        lars_path(d, np.ones(3))
    with pytest.raises(ValueError):
        lars_path(d, np.ones(5) + np.arange(5), max_steps=0)


def test_zero_measurement():
    d = standardize(np.random.default_rng(0).standard_normal((5, 4)))
    path = lars_path(d, np.full(5, 3.0))
    assert len(path) == 1 and path.lambdas[0] == 0.0
    assert select_outages(path).selected_lines == ()


class TestSelection:
    def test_relative_threshold(self):
        res = select_outages(_path_of([0, 5, 0.1, -4]), gamma=0.3)
        assert res.selected_lines == (2, 4)
        assert res.coefficients == (5.0, -4.0)
        assert res.selection_rule == {"rule": "relative", "gamma": 0.3}

    def test_all_zero(self):
        assert select_outages(_path_of([0, 0, 0])).selected_lines == ()

    def test_top_k(self):
        assert select_outages(_path_of([0, 5, 0.1, -4]), top_k=3).selected_lines == (2, 4, 3)

    def test_ties_prefer_lower_id(self):
        assert select_outages(_path_of([1, -2, 2, 0]), top_k=1).selected_lines == (2,)

    def test_invalid_gamma(self):
        with pytest.raises(ValueError):
            select_outages(_path_of([1.0]), gamma=0)


def test_double_outage_17_25_regression(net39, full_map39):
    # seeded version of the 17 + 25 double outage with 19 PMUs
    pl = sample_placement(net39, 0.5, 1, pmu_count=19)
    scen = OutageScenario(lines=(17, 25), load_perturbation=np.ones(39))
    clean = simulate_angles(net39, scen)
    obs = NoiseModel().apply(clean, np.random.default_rng(1))[pl.rows]
    res = run_method("lasso", full_map39.select(pl), obs, max_steps=5, gamma=0.3)
    assert res.selected_lines == (17, 25)
    assert np.count_nonzero(res.path.terminal) == 5
    mags = np.sort(np.abs(res.path.terminal))[::-1]
    assert mags[2] < 0.3 * mags[0]


@settings(max_examples=40, deadline=None)
@given(
    st.integers(4, 12),
    st.integers(2, 20),
    st.integers(0, 2**32 - 1),
)
def test_kkt_property(K, L, seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((K, L))
    y = rng.standard_normal(K)
    d = standardize(F)
    path = lars_path(d, y)
    assert np.all(np.diff(path.lambdas) < 0)
    _kkt(d, y, path, tol=1e-7)
