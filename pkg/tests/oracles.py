"""Independent numerical oracles used by the unit and acceptance tests.

Everything here deliberately avoids the library's factorized computation
paths: explicit matrix inverses, generic multivariate-normal densities and
1-d quadrature stand in for the closed forms under test.
"""

import numpy as np
from scipy.integrate import quad, simpson
from scipy.stats import multivariate_normal, norm


def naive_quad_form(y, design, w, c, p):
    """S via explicit inverses, straight from its definition."""
    W_inv = np.diag(1.0 / np.asarray(w, dtype=float))
    X = np.asarray(design, dtype=float)
    yw = np.asarray(y, dtype=float) - np.asarray(w, dtype=float) * (
        (1.0 - 2.0 * p) / (p * (1.0 - p))
    )
    A = X.T @ W_inv @ X
    proj = W_inv @ X @ np.linalg.inv(A) @ X.T @ W_inv
    return float(yw @ W_inv @ yw - (c / (c + 1.0)) * yw @ proj @ yw)


def al_density(p, sigma, eps):
    """Asymmetric Laplace density, direct formula."""
    rho = p * eps if eps >= 0 else (p - 1.0) * eps
    return p * (1.0 - p) / sigma * np.exp(-rho / sigma)


def normal_exponential_mixture(p, sigma, eps):
    """Quadrature of the scale mixture: N(eps; (1-2p)w/(p(1-p)),
    2*sigma*w/(p(1-p))) integrated against Exp(mean sigma) in w."""
    pq = p * (1.0 - p)

    def integrand(w):
        mean = (1.0 - 2.0 * p) * w / pq
        var = 2.0 * sigma * w / pq
        gauss = np.exp(-0.5 * (eps - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)
        return gauss * np.exp(-w / sigma) / sigma

    total, _ = quad(integrand, 0.0, np.inf, limit=400, epsabs=1e-12, epsrel=1e-10)
    return total


def al_normalization(p, sigma):
    """Integral of the asymmetric Laplace density over the real line,
    split at the kink."""
    left, _ = quad(lambda e: al_density(p, sigma, e), -np.inf, 0.0, limit=400)
    right, _ = quad(lambda e: al_density(p, sigma, e), 0.0, np.inf, limit=400)
    return left + right


def brute_force_log_marginal(state, y, spec, x, n_grid=3001, span=18.0):
    """(beta, sigma)-integration oracle for the marginalized posterior.

    The beta integral is the Gaussian convolution evaluated through an
    explicitly assembled covariance and a generic multivariate-normal
    density; the sigma integral is log-space quadrature on a dense grid.
    Shares the priors on z, gamma (constant) and c with the model but none
    of the Woodbury/Cholesky algebra under test.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    p = spec.p
    pq = p * (1.0 - p)
    design = spec.design_values(x, state.z, state.gamma)
    w = state.w
    c = state.c
    yw = y - (1.0 - 2.0 * p) / pq * w
    W = np.diag(w)
    A = design.T @ np.diag(1.0 / w) @ design
    M = W + c * design @ np.linalg.inv(A) @ design.T

    def log_integrand(log_sigma):
        sigma = np.exp(log_sigma)
        tau = 2.0 * sigma / pq
        like = multivariate_normal.logpdf(yw, mean=np.zeros(n), cov=tau * M)
        log_prior_w = -n * np.log(sigma) - w.sum() / sigma
        log_prior_sigma = -np.log(sigma)
        # + log_sigma from the substitution d sigma = sigma d log_sigma
        return like + log_prior_w + log_prior_sigma + log_sigma

    # center the grid where the integrand peaks
    coarse = np.linspace(-span, span, 121)
    values = np.array([log_integrand(s) for s in coarse])
    center = coarse[np.argmax(values)]
    grid = np.linspace(center - span, center + span, n_grid)
    logs = np.array([log_integrand(s) for s in grid])
    peak = logs.max()
    integral = simpson(np.exp(logs - peak), x=grid)
    log_sigma_integral = peak + np.log(integral)
    return float(
        log_sigma_integral + spec.log_prior_z(state.z) + spec.log_prior_c(state.c, n)
    )


def normal_pdf(x, mean, sd):
    return norm.pdf(x, loc=mean, scale=sd)
