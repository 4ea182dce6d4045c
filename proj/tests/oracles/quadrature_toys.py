"""Dense-grid posterior means for the two-cell toy models.

Panel (J = 2, T = 1): cell 1 has (unemployed, employed, inactive) = (3, 57, 40),
cell 2 has (30, 120, 100); the regional covariate x = (-1, 1). Coefficients
have N(0, 1e6) priors, dispersion phi has the Gamma(shape, rate) prior given
per toy. Parameters: Poisson and Binomial (intercept, slope on x); negative
binomial and Beta (intercept, phi); multinomial (employed intercept,
unemployed intercept).
"""
import numpy as np
from scipy import stats
from scipy.special import gammaln, expit

U = np.array([3.0, 30.0])
E = np.array([57.0, 120.0])
I = np.array([40.0, 100.0])
N = U + E + I
M = U + E
X = np.array([-1.0, 1.0])
V = 1e6

def coef_prior(b):
    return -0.5 * b * b / V

def poisson(a, b):
    eta = np.log(N)[:, None, None] + a + b * X[:, None, None]
    ll = U[:, None, None] * eta - np.exp(eta) - gammaln(U + 1)[:, None, None]
    return ll.sum(0) + coef_prior(a) + coef_prior(b)

def binomial(a, b):
    eta = a + b * X[:, None, None]
    ll = (U[:, None, None] * eta - M[:, None, None] * np.logaddexp(0, eta))
    return ll.sum(0) + coef_prior(a) + coef_prior(b)

NB_PRIOR = (2.0, 0.2)
def negbin(a, log_phi):
    phi = np.exp(log_phi)
    eta = np.log(N)[:, None, None] + a
    with np.errstate(invalid="ignore", divide="ignore"):
        ll = (gammaln(U[:, None, None] + phi) - gammaln(phi) - gammaln(U + 1)[:, None, None]
              + U[:, None, None] * eta + phi * np.log(-np.expm1(eta)))
        ll = np.where(eta < 0, ll, -np.inf)
    s, r = NB_PRIOR
    return ll.sum(0) + coef_prior(a) + s * log_phi - r * phi

BETA_PRIOR = (2.0, 0.05)
def beta(a, log_phi):
    phi = np.exp(log_phi)
    mu = expit(a)
    rr = U / M
    ll = stats.beta.logpdf(rr[:, None, None], mu * phi, (1 - mu) * phi)
    s, r = BETA_PRIOR
    return ll.sum(0) + coef_prior(a) + s * log_phi - r * phi

def multinomial(a1, a2):
    lse = np.logaddexp(np.logaddexp(0, a1), a2)
    ll = E[:, None, None] * (a1 - lse) + U[:, None, None] * (a2 - lse) + I[:, None, None] * (-lse)
    return ll.sum(0) + coef_prior(a1) + coef_prior(a2)

def grid_means(logpost, box, n=1201, transform=(lambda x: x, lambda y: y)):
    xs = np.linspace(*box[0], n)
    ys = np.linspace(*box[1], n)
    A, B = np.meshgrid(xs, ys, indexing="ij")
    lp = logpost(A, B)
    w = np.exp(lp - np.nanmax(lp))
    w = np.where(np.isfinite(w), w, 0.0)
    w /= w.sum()
    edge = max(w[0, :].max(), w[-1, :].max(), w[:, 0].max(), w[:, -1].max())
    assert edge < 1e-9, edge
    return (w * transform[0](A)).sum(), (w * transform[1](B)).sum()

def show(label, pair):
    print(f"{label}: {pair[0]:.10g} {pair[1]:.10g}")

show("poisson (intercept, slope)", grid_means(poisson, [(-6.5, -1.0), (-2.0, 3.5)]))
show("binomial (intercept, slope)", grid_means(binomial, [(-4.5, 0.0), (-1.5, 3.5)]))
show("negbin (intercept, phi)",
     grid_means(negbin, [(-12.0, np.log(1 / 250) - 1e-9), (-6.0, 5.5)], n=2001,
                transform=(lambda x: x, np.exp)))
show("beta (intercept, phi)",
     grid_means(beta, [(-9.0, 4.0), (-4.0, 7.0)], n=2001, transform=(lambda x: x, np.exp)))
show("multinomial (employed, unemployed)", grid_means(multinomial, [(-0.3, 1.2), (-3.0, -0.5)]))
