import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import mc_marginal_correlations

from relikit.data import RatingsTable
from relikit.model import Hyperparameters, Model, ModelSpec, ParamVector
from relikit.posterior import (
    TABLE1_ROWS,
    marginal_correlations,
    posterior_predictive_kappa,
    predictor_covariance,
    summarize,
    table1_layout,
)
from relikit.sampler import PosteriorDraws, SamplerConfig, attach_model, sample
from relikit.sim import simulate_dataset, table1_hyper


# -- marginal correlations -----------------------------------------------------


def test_in_gait_values():
    c = marginal_correlations("IN", Hyperparameters(0.91, [0.79], [0.79]))
    assert c.corr_R == pytest.approx(0.70, abs=0.005)
    assert c.corr_T == pytest.approx(0.70, abs=0.005)
    assert c.rho_R == 0 and c.rho_T == 0


def test_pn_gait_corr_t():
    c = marginal_correlations("PN", Hyperparameters(0.89, [0.75], rho_T=0.50))
    assert c.corr_T == pytest.approx(0.792, abs=0.001)
    assert c.corr_T == pytest.approx(0.80, abs=0.01)


def test_fn_gait_derived_and_printed():
    h = Hyperparameters(0.70, [0.65], [0.64], rho_R=0.54, rho_T=0.47)
    d = marginal_correlations("FN", h)
    assert d.corr_R == pytest.approx(0.543, abs=0.001)
    assert d.corr_T == pytest.approx(0.836, abs=0.001)
    assert d.formula_variant == "derived"
    p = marginal_correlations("FN", h, "as_printed")
    assert p.corr_R == pytest.approx(d.corr_R, abs=1e-12)
    assert p.corr_T == pytest.approx((0.49 + 0.47 * 0.64**2) / (0.49 + 0.65**2 + 0.64**2), abs=1e-12)
    assert p.corr_T == pytest.approx(0.516, abs=0.001)


def test_in_equal_sigmas():
    c = marginal_correlations("IN", Hyperparameters(1.3, [1.3], [1.3]))
    assert c.corr_R == pytest.approx(2 / 3) and c.corr_T == pytest.approx(2 / 3)


def _random_hyper(kind, rng, J, K, separate=False):
    su = rng.uniform(0.1, 2)
    if kind == "IN":
        return Hyperparameters(su, rng.uniform(0.1, 2, 1), rng.uniform(0.1, 2, 1))
    if kind == "PN":
        return Hyperparameters(su, rng.uniform(0.1, 2, K if separate else 1), rho_T=rng.uniform(-1 / (K - 1) + 0.01, 0.99))
    return Hyperparameters(
        su, rng.uniform(0.1, 2, J if separate else 1), rng.uniform(0.1, 2, K if separate else 1),
        rho_R=rng.uniform(-1 / (J - 1) + 0.01, 0.99), rho_T=rng.uniform(-1 / (K - 1) + 0.01, 0.99),
    )


def test_in_identity_per_draw():
    rng = np.random.default_rng(0)
    for _ in range(100):
        h = _random_hyper("IN", rng, 3, 2)
        c = marginal_correlations("IN", h)
        tot = h.sigma_u**2 + h.sigma_v[0] ** 2 + h.sigma_w[0] ** 2
        assert c.corr_R + c.corr_T == pytest.approx(1 + h.sigma_u**2 / tot, abs=1e-12)


def test_pn_sign_check():
    rng = np.random.default_rng(1)
    for _ in range(100):
        h = _random_hyper("PN", rng, 3, 2)
        c = marginal_correlations("PN", h)
        assert (c.corr_T >= c.corr_R) == (h.rho_T >= 0)
        assert c.corr_R == pytest.approx(h.sigma_u**2 / (h.sigma_u**2 + h.sigma_v[0] ** 2))


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["IN", "PN", "FN"]), st.integers(0, 2**31), st.booleans())
def test_correlations_in_range(kind, seed, separate):
    rng = np.random.default_rng(seed)
    J, K = 3, 3
    h = _random_hyper(kind, rng, J, K, separate)
    for variant in ("derived", "as_printed"):
        c = marginal_correlations(kind, h, variant, J, K)
        for v in (c.corr_R, c.corr_T):
            assert -1 <= v <= 1


def test_fn_separate_structures_match_monte_carlo():
    h = Hyperparameters(0.6, [0.9, 0.5, 1.1], [1.2, 0.7], rho_R=0.3, rho_T=-0.4)
    c = marginal_correlations("FN", h, J=3, K=2)
    mc_R, mc_T = mc_marginal_correlations("FN", h, 3, 2, n=1_000_000, seed=5)
    assert c.pairs_R[(0, 1)] == pytest.approx(mc_R, abs=0.005)
    assert c.pairs_T[(0, 1)] == pytest.approx(mc_T, abs=0.005)


def test_predictor_covariance_is_symmetric_psd():
    h = table1_hyper("radiograph", "FN")
    cov = predictor_covariance("FN", h, 7, 2)
    assert np.allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() > 0


# -- posterior-predictive kappa -----------------------------------------------


def _draws_at(spec, table, hypers, intercept=0.0):
    """Synthetic posterior draws fixed at given hyperparameters."""
    m = Model(spec, table)
    base = m.constrain(np.zeros(m.dim))
    rows = []
    for h in hypers:
        beta = np.zeros(m.p)
        beta[0] = intercept
        pv = ParamVector(beta=beta, u=base.u, v=base.v, w=base.w, sigma_u=h.sigma_u, sigma_v=h.sigma_v,
                         sigma_w=h.sigma_w, rho_R=h.rho_R, rho_T=h.rho_T)
        rows.append(m.flatten(pv))
    values = np.array(rows)[None]
    return attach_model(PosteriorDraws(values=values, column_names=m.column_names()), spec, table)


def test_zero_variance_draws_give_chance_kappa():
    t = RatingsTable.from_array(np.zeros((32, 3, 2), int))
    h = Hyperparameters(1e-8, [1e-8], [1e-8])
    kp = posterior_predictive_kappa(ModelSpec("IN"), _draws_at(ModelSpec("IN"), t, [h] * 400), seed=1)
    assert kp.mean_inter == pytest.approx(0, abs=0.03)
    assert kp.mean_intra == pytest.approx(0, abs=0.03)


def test_kappa_increases_with_subject_variance():
    t = RatingsTable.from_array(np.zeros((32, 3, 2), int))
    means = []
    for su in (0.3, 1.0, 2.0):
        h = Hyperparameters(su, [0.79], [0.79])
        kp = posterior_predictive_kappa(ModelSpec("IN"), _draws_at(ModelSpec("IN"), t, [h] * 300), seed=2)
        means.append(kp.mean_inter)
    assert means[0] < means[1] < means[2]


def test_ppk_deterministic_and_thinned():
    t = RatingsTable.from_array(np.zeros((10, 3, 2), int))
    spec = ModelSpec("FN")
    d = _draws_at(spec, t, [table1_hyper("gait", "FN")] * 50)
    a = posterior_predictive_kappa(spec, d, seed=3)
    b = posterior_predictive_kappa(spec, d, seed=3)
    c = posterior_predictive_kappa(spec, d, seed=4)
    assert np.array_equal(a.inter, b.inter) and np.array_equal(a.intra, b.intra)
    assert not np.array_equal(a.inter, c.inter)
    assert posterior_predictive_kappa(spec, d, seed=3, max_draws=10).n_draws == 10


def test_ppk_counts_degenerate_replicates():
    t = RatingsTable.from_array(np.zeros((2, 2, 2), int))
    h = Hyperparameters(0.01, [0.01], [0.01])
    kp = posterior_predictive_kappa(ModelSpec("IN"), _draws_at(ModelSpec("IN"), t, [h] * 200, intercept=4.0), seed=5)
    assert kp.n_degenerate_inter > 0
    assert kp.n_degenerate_inter + len(kp.inter) == 200
    assert kp.n_degenerate_intra + len(kp.intra) == 200
    out = kp.to_dict()
    assert out["method"] == "conger" and out["n_degenerate_inter"] == kp.n_degenerate_inter


def test_ppk_respects_missing_cells():
    Y = np.zeros((6, 3, 2), int)
    mask = np.ones(Y.shape, bool)
    mask[0, 0, :] = False
    t = RatingsTable.from_array(Y, mask)
    kp = posterior_predictive_kappa(ModelSpec("IN"), _draws_at(ModelSpec("IN"), t, [table1_hyper("gait", "IN")] * 20), seed=6)
    assert kp.n_draws == 20


@pytest.mark.xfail(strict=True, reason="logit generation at the reference hyperparameters has true interrater kappa "
                                       "near 0.155, so the fitted posterior-predictive mean sits well below 0.26")
def test_in_fit_ppk_near_published_logit():
    t = simulate_dataset("IN", table1_hyper("gait", "IN"), (32, 3, 2), seed=10)
    draws = sample(ModelSpec("IN"), t, SamplerConfig(seed=11))
    kp = posterior_predictive_kappa(ModelSpec("IN"), draws, seed=12, max_draws=1000)
    assert kp.mean_inter == pytest.approx(0.26, abs=0.06)


def test_in_fit_ppk_near_published_probit():
    t = simulate_dataset("IN", table1_hyper("gait", "IN"), (32, 3, 2), seed=10, link="probit")
    spec = ModelSpec("IN", link="probit")
    draws = sample(spec, t, SamplerConfig(seed=11))
    kp = posterior_predictive_kappa(spec, draws, seed=12, max_draws=1000)
    assert kp.mean_inter == pytest.approx(0.26, abs=0.06)


# -- summaries -----------------------------------------------------------------


def test_constant_draws_summary():
    d = PosteriorDraws(values=np.full((2, 50, 1), 3.0), column_names=["a"])
    row = summarize(d)["a"]
    assert (row.mean, row.sd, row.lower, row.upper) == (3.0, 0.0, 3.0, 3.0)


def test_normal_draws_summary():
    x = np.random.default_rng(0).normal(2, 1, (2, 5000, 1))
    row = summarize(PosteriorDraws(values=x, column_names=["a"]))["a"]
    mcse = 1 / math.sqrt(x.size)
    assert abs(row.mean - 2) < 4 * mcse
    assert row.sd == pytest.approx(1, abs=0.03)
    assert row.lower == pytest.approx(2 - 1.96, abs=0.1) and row.upper == pytest.approx(2 + 1.96, abs=0.1)


def test_per_draw_correlations_differ_from_formula_at_mean():
    t = RatingsTable.from_array(np.zeros((4, 3, 2), int))
    spec = ModelSpec("IN")
    rng = np.random.default_rng(1)
    # right-skewed subject standard deviation
    hypers = [Hyperparameters(s, [0.8], [0.8]) for s in rng.lognormal(-1, 1.5, 500)]
    d = _draws_at(spec, t, hypers)
    d.spec = spec
    per_draw = summarize(d)["corr_R"].mean
    su = float(np.mean([h.sigma_u for h in hypers]))
    at_mean = marginal_correlations("IN", Hyperparameters(su, [0.8], [0.8])).corr_R
    assert abs(per_draw - at_mean) > 0.01


def test_table1_layout_rows():
    t = simulate_dataset("FN", table1_hyper("gait", "FN"), (8, 3, 2), seed=1)
    spec = ModelSpec("FN")
    d = sample(spec, t, SamplerConfig(niters=100, nwarmup=100, seed=1))
    s = summarize(d)
    layout = table1_layout(s)
    assert [r[0] for r in layout] == TABLE1_ROWS["FN"]
    values = dict(layout)
    assert values["rho^R"] == pytest.approx(s["rho_R"].mean)
    assert math.isnan(values["LOOIC"])
    assert "corr_T_as_printed" in s
