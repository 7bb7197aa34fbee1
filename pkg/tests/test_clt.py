import numpy as np
import pytest

from rwre.clt import (centered_mean_bound, clt_check, degeneracy_directions,
                      quenched_mean_variance, quenched_samples)
from rwre.environment import EnvironmentModel, make_environment
from rwre.fitting import fit_exponent
from rwre.models import (dirichlet_drift_model, drift_model, support_2d)
from rwre.rng import derive_key
from rwre.walk import diffusive_scale, simulate


def _point_mass_model():
    return EnvironmentModel(support=support_2d([(1, 0)]),
                            kind="deterministic", probs=(1.0,))


def test_quenched_samples_point_mass():
    env = make_environment(_point_mass_model(), 1)
    s = quenched_samples(env, 64, 20, v=(1.0, 0.0), seed=2)
    assert np.allclose(s, 0.0)


def test_quenched_samples_single_walk_composition():
    from rwre.clt import _TAG_QS
    env = make_environment(dirichlet_drift_model(), 5)
    v = np.array([0.6, 0.0])
    s = quenched_samples(env, 128, 1, v=v, seed=9)
    path = simulate(env, (0, 0), 128, derive_key(9, _TAG_QS, 0))
    ref = diffusive_scale(path, v, 128, [1.0])
    assert np.allclose(s[0], ref[0])


def test_quenched_samples_homogeneous_covariance():
    env = make_environment(drift_model(), 12)
    s = quenched_samples(env, 1024, 800, v=(0.5, 0.0), seed=3)
    C = np.cov(s.T, ddof=1)
    assert np.linalg.norm(C - np.diag([0.25, 0.5])) < 0.08


def test_clt_check_degenerate_consistent():
    model = _point_mass_model()
    env_samples = [quenched_samples(make_environment(model, s), 64, 50,
                                    v=(1.0, 0.0), seed=s) for s in (1, 2)]
    rep = clt_check(env_samples, np.zeros((2, 2)), model.support)
    assert rep.flagged == []
    assert np.all(rep.degenerate_ok)
    assert np.isnan(rep.ks_pvalues).all()


def test_clt_check_synthetic_gaussian_self_test():
    # samples drawn from the reference law must pass at high rate
    D = np.diag([0.25, 0.5])
    sup = drift_model().support
    rng = np.random.default_rng(42)
    samples = [rng.multivariate_normal([0, 0], D, size=400)
               for _ in range(100)]
    rep = clt_check(samples, D, sup, level=0.05)
    assert rep.n_passed >= 90
    assert (rep.ks_pvalues[~np.isnan(rep.ks_pvalues)] > 0.05).mean() >= 0.9


def test_degeneracy_directions():
    span_model = drift_model()                     # J = {e1, e2, -e2}
    assert degeneracy_directions(span_model).shape[0] == 0
    line = _point_mass_model()                     # J = {e1}
    basis = degeneracy_directions(line)
    assert basis.shape == (2, 2)
    diag = EnvironmentModel(support=support_2d([(1, 0), (0, 1)]),
                            kind="deterministic", probs=(0.5, 0.5))
    basis = degeneracy_directions(diag)
    assert basis.shape == (1, 2)
    assert np.allclose(np.abs(basis[0]), [1 / np.sqrt(2), 1 / np.sqrt(2)])


def test_degenerate_direction_is_deterministic_in_path():
    # along u from degeneracy_directions, u.X_n has zero fluctuation
    model = EnvironmentModel(support=support_2d([(1, 0), (0, 1)]),
                             kind="deterministic", probs=(0.5, 0.5))
    u = degeneracy_directions(model)[0]
    env = make_environment(model, 3)
    path = simulate(env, (0, 0), 500, 8)
    proj = path.sites @ u
    assert np.allclose(proj, np.arange(501) * proj[1])


def test_fit_exponent_exact_power_data():
    n = np.array([4, 16, 64, 256, 1024])
    y = 3.7 * n ** 1.234
    fit = fit_exponent(n, y)
    assert abs(fit.slope - 1.234) < 1e-12
    assert fit.slope_se < 1e-12
    with pytest.raises(ValueError):
        fit_exponent([2, 4], [0.0, -1.0])


def test_quenched_mean_variance_deterministic_kind_is_zero():
    res = quenched_mean_variance(drift_model(), [16, 64], n_env=40,
                                 m_walks=40, seed=6)
    for n, corrected, trace, se in res["rows"]:
        assert trace <= 3 * se + 1e-9


def test_quenched_mean_variance_m_doubling_consistency():
    model = dirichlet_drift_model()
    a = quenched_mean_variance(model, [64], n_env=80, m_walks=40, seed=7)
    b = quenched_mean_variance(model, [64], n_env=80, m_walks=80, seed=8)
    ta, sa = a["rows"][0][2], a["rows"][0][3]
    tb, sb = b["rows"][0][2], b["rows"][0][3]
    assert abs(ta - tb) < 2 * np.hypot(sa, sb) + 0.05 * max(ta, tb)


def test_quenched_mean_variance_validation():
    with pytest.raises(ValueError):
        quenched_mean_variance(drift_model(), [16], n_env=1, m_walks=10)


def test_centered_mean_point_mass_exact():
    res = centered_mean_bound(_point_mass_model(), [8, 32, 128],
                              v_hat=(1.0, 0.0), reps=50, seed=1)
    assert np.allclose(res["deviation"], 0.0)
    assert np.allclose(res["se"], 0.0)


def test_centered_mean_homogeneous_within_noise():
    res = centered_mean_bound(drift_model(), [16, 64, 256],
                              v_hat=(0.5, 0.0), reps=2000, seed=2)
    assert np.all(np.abs(res["deviation"]) <= 4 * res["se"])
    assert res["trend_pvalue"] > 0.01
