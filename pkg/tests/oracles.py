"""Independent reference implementations used as test oracles.

These are deliberately naive (explicit loops, scipy densities, dense
covariance matrices) and share no code with the package beyond reading
dataclass fields.
"""

import math

import numpy as np
from scipy import stats


# -- agreement by explicit pair counting -------------------------------------


def cohen_bruteforce(a, b):
    n = len(a)
    agree = sum(1 for x, y in zip(a, b) if x == y)
    p_o = agree / n
    # chance: probability that an independent draw from each rater's marginal agrees
    p_c = 0.0
    for c in (0, 1):
        pa = sum(1 for x in a if x == c) / n
        pb = sum(1 for y in b if y == c) / n
        p_c += pa * pb
    return p_o, p_c, (p_o - p_c) / (1 - p_c)


def scott_bruteforce(a, b):
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    pooled = list(a) + list(b)
    p_c = sum((sum(1 for x in pooled if x == c) / (2 * n)) ** 2 for c in (0, 1))
    return p_o, p_c, (p_o - p_c) / (1 - p_c)


def fleiss_bruteforce(slots):
    """Ordered pairs of distinct ratings within each item."""
    slots = [list(row) for row in slots]
    per_item = []
    for row in slots:
        pairs = [(row[m], row[m2]) for m in range(len(row)) for m2 in range(len(row)) if m != m2]
        per_item.append(sum(1 for x, y in pairs if x == y) / len(pairs))
    p_o = sum(per_item) / len(per_item)
    flat = [x for row in slots for x in row]
    p_c = sum((sum(1 for x in flat if x == c) / len(flat)) ** 2 for c in (0, 1))
    return p_o, p_c, (p_o - p_c) / (1 - p_c)


def conger_bruteforce(slots):
    """Chance agreement averaged over ordered pairs of distinct slots.

    ``slots`` may contain ``None`` for a missing rating. Items with fewer
    than two ratings are skipped; slot marginals use available entries.
    """
    rows = [list(r) for r in slots]
    M = len(rows[0])
    rows = [r for r in rows if sum(x is not None for x in r) >= 2]
    per_item = []
    for row in rows:
        avail = [x for x in row if x is not None]
        pairs = [(avail[a], avail[b]) for a in range(len(avail)) for b in range(len(avail)) if a != b]
        per_item.append(sum(1 for x, y in pairs if x == y) / len(pairs))
    p_o = sum(per_item) / len(per_item)
    marg = []
    for m in range(M):
        col = [r[m] for r in rows if r[m] is not None]
        if col:
            marg.append({c: sum(1 for x in col if x == c) / len(col) for c in (0, 1)})
    pairs = [(a, b) for a in range(len(marg)) for b in range(len(marg)) if a != b]
    p_c = sum(sum(marg[a][c] * marg[b][c] for c in (0, 1)) for a, b in pairs) / len(pairs)
    return p_o, p_c, (p_o - p_c) / (1 - p_c)


# -- dense covariance of the random effects ----------------------------------


def exchangeable(sigmas, rho):
    sigmas = np.asarray(sigmas, dtype=float)
    d = len(sigmas)
    cov = np.empty((d, d))
    for a in range(d):
        for b in range(d):
            cov[a, b] = sigmas[a] * sigmas[b] * (1.0 if a == b else rho)
    return cov


def _expand(sig, d):
    sig = np.atleast_1d(np.asarray(sig, dtype=float))
    return np.repeat(sig, d) if len(sig) == 1 else sig


def naive_log_posterior(kind, params, table, X, beta_sign, link, priors):
    """Joint log density of data and constrained parameters via scipy.stats.

    The LKJ normalizing constant is omitted (it cancels in differences).
    """
    I, J, K = table.I, table.J, table.K
    lp = 0.0
    eta = np.zeros(table.n_obs)
    for n in range(table.n_obs):
        i, j, k = table.subject[n], table.rater[n], table.time[n]
        e = float(np.dot(X[n], beta_sign * params.beta))
        if kind == "IN":
            e += params.u[i] + params.v[j] + params.w[k]
        elif kind == "PN":
            e -= params.u[i] + params.v[j, k]
        else:
            e += params.u[i] + params.v[i, j] + params.w[i, j, k]
        eta[n] = e
    if link == "logit":
        lp += float(np.sum(np.where(table.y == 1, stats.logistic.logcdf(eta), stats.logistic.logcdf(-eta))))
    else:
        lp += float(np.sum(np.where(table.y == 1, stats.norm.logcdf(eta), stats.norm.logcdf(-eta))))

    lp += float(np.sum(stats.norm.logpdf(params.beta, priors.beta_mean, priors.beta_sigma)))
    ig = stats.invgamma(priors.gamma_a, scale=priors.gamma_b)

    lp += float(np.sum(stats.norm.logpdf(params.u, 0, params.sigma_u)))
    lp += ig.logpdf(params.sigma_u**2)
    for s in np.atleast_1d(params.sigma_v):
        lp += ig.logpdf(s**2)
    if params.sigma_w is not None:
        for s in np.atleast_1d(params.sigma_w):
            lp += ig.logpdf(s**2)

    def rho_prior(rho, d, eta_lkj):
        if priors.rho_prior == "lkj":
            omega = exchangeable(np.ones(d), rho)
            return (eta_lkj - 1) * np.linalg.slogdet(omega)[1]
        return stats.beta.logpdf((rho + 1) / 2, priors.beta_a, priors.beta_b) - math.log(2)

    if kind == "IN":
        lp += float(np.sum(stats.norm.logpdf(params.v, 0, params.sigma_v[0])))
        lp += float(np.sum(stats.norm.logpdf(params.w, 0, params.sigma_w[0])))
    elif kind == "PN":
        cov = exchangeable(_expand(params.sigma_v, K), params.rho_T if K > 1 else 0.0)
        for j in range(J):
            lp += stats.multivariate_normal.logpdf(params.v[j], np.zeros(K), cov)
        if K > 1:
            lp += rho_prior(params.rho_T, K, priors.rho_T_eta)
    else:
        cov_v = exchangeable(_expand(params.sigma_v, J), params.rho_R if J > 1 else 0.0)
        for i in range(I):
            lp += stats.multivariate_normal.logpdf(params.v[i], np.zeros(J), cov_v)
        sw = np.asarray(params.sigma_w, dtype=float)
        for i in range(I):
            for j in range(J):
                if len(sw) == 1:
                    sig = np.repeat(sw, K)
                elif len(sw) == K:
                    sig = sw
                else:
                    sig = sw[j * K:(j + 1) * K]
                cov_w = exchangeable(sig, params.rho_T if K > 1 else 0.0)
                lp += stats.multivariate_normal.logpdf(params.w[i, j], np.zeros(K), cov_w)
        if J > 1:
            lp += rho_prior(params.rho_R, J, priors.rho_R_eta)
        if K > 1:
            lp += rho_prior(params.rho_T, K, priors.rho_T_eta)
    return float(lp)


# -- Monte-Carlo marginal correlations ----------------------------------------


def mc_predictor_draws(kind, hyper, J, K, n, rng):
    """``(n, J, K)`` random-effect sums for one subject, drawn by brute force."""
    u = rng.normal(0, hyper.sigma_u, size=(n, 1, 1))
    if kind == "IN":
        v = rng.normal(0, hyper.sigma_v[0], size=(n, J, 1))
        w = rng.normal(0, hyper.sigma_w[0], size=(n, 1, K))
        return u + v + w
    if kind == "PN":
        cov = exchangeable(_expand(hyper.sigma_v, K), hyper.rho_T)
        v = rng.multivariate_normal(np.zeros(K), cov, size=(n, J))
        return -(u + v)
    cov_v = exchangeable(_expand(hyper.sigma_v, J), hyper.rho_R)
    v = rng.multivariate_normal(np.zeros(J), cov_v, size=n)[:, :, None]
    cov_w = exchangeable(_expand(hyper.sigma_w, K), hyper.rho_T)
    w = rng.multivariate_normal(np.zeros(K), cov_w, size=(n, J))
    return u + v + w


def mc_marginal_correlations(kind, hyper, J, K, n=1_000_000, seed=0):
    """Empirical Corr^R (raters 1 and 2, averaged over times) and Corr^T (times 1 and 2, averaged over raters)."""
    rng = np.random.default_rng(seed)
    eta = mc_predictor_draws(kind, hyper, J, K, n, rng)
    corr_R = np.mean([np.corrcoef(eta[:, 0, k], eta[:, 1, k])[0, 1] for k in range(K)])
    corr_T = np.mean([np.corrcoef(eta[:, j, 0], eta[:, j, 1])[0, 1] for j in range(J)])
    return float(corr_R), float(corr_T)


# -- exact leave-one-out for a conjugate normal mean --------------------------


def conjugate_normal_exact_loo(y, sigma, mu0, tau0):
    """Exact elpd_loo for ``y_n ~ N(mu, sigma^2)``, ``mu ~ N(mu0, tau0^2)``.

    Each term refits the posterior without ``y_n`` and evaluates the
    posterior predictive density of ``y_n``.
    """
    y = np.asarray(y, dtype=float)
    total = 0.0
    for n in range(len(y)):
        rest = np.delete(y, n)
        prec = 1 / tau0**2 + len(rest) / sigma**2
        mean = (mu0 / tau0**2 + rest.sum() / sigma**2) / prec
        total += stats.norm.logpdf(y[n], mean, math.sqrt(sigma**2 + 1 / prec))
    return float(total)


def conjugate_normal_posterior(y, sigma, mu0, tau0):
    y = np.asarray(y, dtype=float)
    prec = 1 / tau0**2 + len(y) / sigma**2
    mean = (mu0 / tau0**2 + y.sum() / sigma**2) / prec
    return float(mean), float(math.sqrt(1 / prec))
