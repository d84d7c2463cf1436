"""Dirichlet machinery: special functions, sampling, KL, and sample gradients.

Samples are produced as normalized independent Gamma(conc_k, 1) draws.
Gradients of a sample with respect to its concentrations use implicit
reparameterization: each Gamma draw g satisfies F(g; alpha) = u for fixed u,
so dg/dalpha = -(dF/dalpha) / pdf(g; alpha), with dF/dalpha obtained by
central differencing of the regularized incomplete gamma function.

A common-random-numbers path (`sample_from_uniforms`) draws g via the
inverse CDF from frozen uniforms; it is smooth in the concentrations, which
makes whole-model finite-difference gradient checks consistent.
"""

from __future__ import annotations

import numpy as np
from scipy import special as sp

# Gamma draws for very small shapes underflow to exact zero; clamping keeps
# normalization and the pdf in dsample_dconc finite without visible bias.
_DRAW_FLOOR = 1e-100


def special_fn(x):
    """(log Gamma(x), digamma(x)) for x > 0, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0):
        raise ValueError("special_fn requires x > 0")
    return sp.gammaln(x), sp.digamma(x)


def mean(conc):
    """Dirichlet mean conc / sum(conc); the deterministic stand-in for a draw."""
    conc = np.asarray(conc, dtype=np.float64)
    return conc / conc.sum(axis=-1, keepdims=True)


def sample(conc, rng):
    """Draw z ~ Dirichlet(conc). Returns (z, gamma_draws).

    The draws are kept because the reparameterization Jacobian needs them.
    """
    conc = np.asarray(conc, dtype=np.float64)
    if np.any(conc <= 0.0):
        raise ValueError("concentrations must be > 0")
    if conc.shape[-1] == 1:
        return np.ones_like(conc), np.maximum(rng.standard_gamma(conc), _DRAW_FLOOR)
    draws = np.maximum(rng.standard_gamma(conc), _DRAW_FLOOR)
    return draws / draws.sum(axis=-1, keepdims=True), draws


def sample_from_uniforms(conc, uniforms):
    """Inverse-CDF Dirichlet draw from frozen uniforms (common random numbers)."""
    conc = np.asarray(conc, dtype=np.float64)
    draws = np.maximum(sp.gammaincinv(conc, uniforms), _DRAW_FLOOR)
    if conc.shape[-1] == 1:
        return np.ones_like(conc), draws
    return draws / draws.sum(axis=-1, keepdims=True), draws


def gamma_draw_dalpha(alpha, g):
    """dg/dalpha for a Gamma(alpha, 1) draw g at fixed CDF level, elementwise.

    Implicit differentiation of F(g; alpha) = u. dF/dalpha uses central
    differences with a relative step; the density is evaluated in log space.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    h = alpha * 1e-5
    dF_dalpha = (sp.gammainc(alpha + h, g) - sp.gammainc(alpha - h, g)) / (2.0 * h)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        log_pdf = (alpha - 1.0) * np.log(g) - g - sp.gammaln(alpha)
        out = -dF_dalpha * np.exp(-log_pdf)
    return np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)


def dsample_dconc(conc, z, draws):
    """K x K Jacobian J[i, j] = dz_j / dconc_i for one sample.

    With S = sum of draws and dg_i = dg_i/dalpha_i:
    J[i, j] = (delta_ij - z_j) * dg_i / S, so every row sums to zero.
    """
    conc = np.asarray(conc, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    draws = np.asarray(draws, dtype=np.float64)
    k = conc.shape[0]
    if k == 1:
        return np.zeros((1, 1))
    dg = gamma_draw_dalpha(conc, draws)
    s = draws.sum()
    return (np.eye(k) - z[None, :]) * (dg / s)[:, None]


def backprop_sample(conc, z, draws, dLdz):
    """Pull a loss gradient at the sample back to the concentrations.

    Row i of the Jacobian is (e_i - z) * dg_i / S, so the contraction
    factors as dL/dconc_i = dg_i / S * (dLdz_i - <dLdz, z>). Batched over
    leading axes.
    """
    z = np.asarray(z, dtype=np.float64)
    draws = np.asarray(draws, dtype=np.float64)
    dLdz = np.asarray(dLdz, dtype=np.float64)
    if z.shape[-1] == 1:
        return np.zeros_like(z)
    dg = gamma_draw_dalpha(conc, draws)
    s = draws.sum(axis=-1, keepdims=True)
    inner = (dLdz * z).sum(axis=-1, keepdims=True)
    return dg / s * (dLdz - inner)


def kl(posterior, prior):
    """Closed-form KL(Dir(posterior) || Dir(prior)), row-wise for 2-d input."""
    a = np.asarray(posterior, dtype=np.float64)
    b = np.asarray(prior, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if np.any(a <= 0.0) or np.any(b <= 0.0):
        raise ValueError("concentrations must be > 0")
    a_sum = a.sum(axis=-1)
    b_sum = b.sum(axis=-1)
    out = (
        sp.gammaln(a_sum)
        - sp.gammaln(a).sum(axis=-1)
        - sp.gammaln(b_sum)
        + sp.gammaln(b).sum(axis=-1)
        + ((a - b) * (sp.digamma(a) - sp.digamma(a_sum)[..., None])).sum(axis=-1)
    )
    return out


def kl_grad_posterior(posterior, prior):
    """d kl / d posterior_k = trigamma(a_k)(a_k - b_k) - trigamma(A) sum(a - b)."""
    a = np.asarray(posterior, dtype=np.float64)
    b = np.asarray(prior, dtype=np.float64)
    diff = a - b
    a_sum = a.sum(axis=-1, keepdims=True)
    return sp.polygamma(1, a) * diff - sp.polygamma(1, a_sum) * diff.sum(axis=-1, keepdims=True)


# ---- logistic-normal fallback --------------------------------------------
#
# Laplace approximation of the Dirichlet in the softmax basis. Cheaper than
# the implicit-reparameterization path, at the cost of an approximation bias;
# the default training path does not use it.


def logistic_normal_params(conc):
    """Softmax-basis mean and standard deviation approximating Dir(conc)."""
    conc = np.asarray(conc, dtype=np.float64)
    k = conc.shape[-1]
    log_a = np.log(conc)
    mu = log_a - log_a.mean(axis=-1, keepdims=True)
    var = (1.0 - 2.0 / k) / conc + (1.0 / conc).sum(axis=-1, keepdims=True) / k**2
    return mu, np.sqrt(var)


def logistic_normal_sample(conc, rng=None, noise=None):
    """Approximate Dirichlet draw z = softmax(mu + sigma * eps). Returns (z, eps)."""
    mu, sigma = logistic_normal_params(conc)
    eps = rng.standard_normal(mu.shape) if noise is None else np.asarray(noise, dtype=np.float64)
    y = mu + sigma * eps
    y = y - y.max(axis=-1, keepdims=True)
    expy = np.exp(y)
    return expy / expy.sum(axis=-1, keepdims=True), eps


def logistic_normal_jacobian(conc, eps):
    """K x K Jacobian dz_j/dconc_i of the logistic-normal draw at frozen eps."""
    conc = np.asarray(conc, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    k = conc.shape[0]
    mu, sigma = logistic_normal_params(conc)
    z, _ = logistic_normal_sample(conc, noise=eps)
    # dy_k/da_i for y = mu + sigma * eps
    inv_a = 1.0 / conc
    dmu = np.eye(k) * inv_a[None, :] - inv_a[:, None] / k
    dvar = -np.eye(k) * (1.0 - 2.0 / k) * inv_a[None, :] ** 2 - (inv_a[:, None] ** 2) / k**2
    dsigma = dvar / (2.0 * sigma[None, :])
    dy = dmu + dsigma * eps[None, :]
    # dz_j/dy_k = z_j (delta_jk - z_k), contracted over k
    inner = dy @ z
    return z[None, :] * (dy - inner[:, None])
