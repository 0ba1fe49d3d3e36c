"""Distributions of the pruning statistic and threshold calibration.

Under H0 (no component) the statistic retained after a search over ``N``
independent candidates is the maximum of ``N`` unit exponentials, i.e. a
Gumbel law with location ``log N`` and unit scale.  Values ``rho <= 1`` are
pruned automatically and collapse into a point mass of weight
``F_max(1) = exp(-N/e)``.  Under H1 the statistic is a scaled noncentral
chi-square with two degrees of freedom, truncated to ``rho > 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DomainError


def _check_n(N):
    if not N >= 1:
        raise DomainError(f"number of candidates must be >= 1, got {N}")


def gumbel_cdf(rho, N):
    """``F_max(rho) = exp(-N exp(-rho))``."""
    _check_n(N)
    return np.exp(-N * np.exp(-np.asarray(rho, dtype=float)))


def gumbel_pdf(rho, N):
    _check_n(N)
    z = -np.asarray(rho, dtype=float) + np.log(N)
    return np.exp(z - np.exp(z))


def h0_point_mass(N):
    return float(gumbel_cdf(1.0, N))


def h0_pdf(rho, N):
    """Continuous part of the H0 density; zero on ``[0, 1]`` where all mass is the atom.

    On ``rho > 1`` the Gumbel part is renormalised over ``(1, inf)`` and
    weighted by ``1 - F_max(1)``, which leaves the plain Gumbel density.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise DomainError("rho must be non-negative")
    return np.where(rho > 1, gumbel_pdf(rho, N), 0.0)


def h0_cdf(rho, N):
    """Right-continuous CDF of the pruned extreme-value law."""
    rho = np.asarray(rho, dtype=float)
    out = np.where(rho > 1, gumbel_cdf(rho, N), gumbel_cdf(1.0, N))
    return np.where(rho < 0, 0.0, out)


def marcum_q(a, b, complement: bool = False):
    """First-order Marcum Q-function ``Q_1(a, b)`` (or ``1 - Q_1`` with ``complement``).

    Uses the Poisson mixture ``Q_1(a, b) = sum_j Pois(j; a^2/2) Q_gamma(j + 1, b^2/2)``.
    The sum is restricted to a window of +-12 standard deviations around the
    Poisson mode, which keeps the cost at O(a) and the truncation error far
    below double precision.  Both tails are summed and the larger one is
    taken as one minus the smaller, so values near 0 and near 1 stay accurate.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if np.any(a < 0) or np.any(b < 0):
        raise DomainError("Marcum Q arguments must be non-negative")
    out = np.empty(a.shape)
    for idx in np.ndindex(a.shape):
        x, y = 0.5 * a[idx] ** 2, 0.5 * b[idx] ** 2
        spread = 12.0 * np.sqrt(x) + 30.0
        j = np.arange(max(0, int(np.floor(x - spread))), int(np.ceil(x + spread)) + 1)
        if x > 0:
            logw = j * np.log(x) - x - special.gammaln(j + 1)
        else:
            logw = np.where(j == 0, 0.0, -np.inf)
        w = np.exp(logw)
        upper = np.sum(w * special.gammaincc(j + 1, y))
        lower = np.sum(w * special.gammainc(j + 1, y))
        # the smaller tail is accurate; derive the larger one from it
        if upper <= lower:
            out[idx] = 1.0 - upper if complement else upper
        else:
            out[idx] = lower if complement else 1.0 - lower
    return out if out.ndim else float(out)


def h1_normalizer(eta):
    """``Z = int_1^inf exp(-(rho + eta/2)) I_0(sqrt(2 eta rho)) d rho = Q_1(sqrt(eta), sqrt(2))``."""
    return marcum_q(np.sqrt(eta), np.sqrt(2.0))


def _h1_kernel(rho, eta):
    x = np.sqrt(2.0 * eta * rho)
    return special.i0e(x) * np.exp(x - rho - 0.5 * eta)


def h1_pdf(rho, eta):
    """Truncated, normalised H1 density; zero for ``rho <= 1``."""
    if eta < 0:
        raise DomainError("noncentrality must be non-negative")
    rho = np.asarray(rho, dtype=float)
    safe = np.where(rho > 1, rho, 1.0)
    return np.where(rho > 1, _h1_kernel(safe, eta) / h1_normalizer(eta), 0.0)


def h1_cdf(rho, eta):
    rho = np.asarray(rho, dtype=float)
    Z = h1_normalizer(eta)
    cz = marcum_q(np.sqrt(eta), np.sqrt(2.0), complement=True)
    safe = np.where(rho > 1, rho, 1.0)
    cq = marcum_q(np.sqrt(eta), np.sqrt(2.0 * safe), complement=True)
    return np.where(rho > 1, np.clip((cq - cz) / Z, 0.0, 1.0), 0.0)


def noncentrality(weight, varsigma):
    """``eta = 2 |w|^2 / varsigma``."""
    return 2.0 * abs(weight) ** 2 / varsigma


def max_test_size(N):
    """Largest attainable size, reached by the standard threshold ``kappa = 1``."""
    _check_n(N)
    return float(-np.expm1(-N / np.e))


def threshold_from_size(eps, N):
    """Threshold ``kappa = log(N / log(1/(1 - eps)))`` of a test with size ``eps``."""
    bound = max_test_size(N)
    if not 0 < eps <= bound:
        raise DomainError(f"test size must lie in (0, 1 - exp(-N/e)] = (0, {bound:.6g}] for N={N}, got {eps}")
    if eps == bound:
        # 1 - eps may round to zero for large N; the boundary is kappa = 1 exactly
        return 1.0
    kappa = float(np.log(N / -np.log1p(-eps)))
    return max(kappa, 1.0)


def size_from_threshold(kappa, N):
    """``eps = 1 - exp(-N exp(-kappa))``."""
    if kappa < 1:
        raise DomainError("kappa must be >= 1")
    _check_n(N)
    return float(-np.expm1(-N * np.exp(-kappa)))


def threshold_table(Ns, kappas):
    """Rows ``(kappa, eps, N)`` of the test size as a function of the threshold."""
    return [(float(k), size_from_threshold(k, n), int(n)) for n in Ns for k in kappas]


def ks_distance(samples, cdf) -> float:
    """Kolmogorov-Smirnov sup-distance between ``samples`` and a model CDF."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 2:
        raise DomainError("need at least two samples")
    return float(stats.kstest(samples, cdf).statistic)


@dataclass(frozen=True)
class H0Dist:
    N: float

    @property
    def point_mass(self):
        return h0_point_mass(self.N)

    @property
    def location(self):
        return float(np.log(self.N))

    scale = 1.0

    def pdf(self, rho):
        return h0_pdf(rho, self.N)

    def cdf(self, rho):
        return h0_cdf(rho, self.N)

    def rvs(self, size, rng):
        """Draws of the pruned statistic; pruned draws are reported as 0."""
        g = stats.gumbel_r.rvs(loc=self.location, size=size, random_state=rng)
        return np.where(g > 1, g, 0.0)


@dataclass(frozen=True)
class H1Dist:
    eta: float

    @property
    def normalizer(self):
        return h1_normalizer(self.eta)

    def pdf(self, rho):
        return h1_pdf(rho, self.eta)

    def cdf(self, rho):
        return h1_cdf(rho, self.eta)


@dataclass(frozen=True)
class PruneTest:
    """Test ``rho > kappa`` of size ``epsilon`` among ``N`` candidates."""

    kappa: float
    epsilon: float
    N: float

    @classmethod
    def from_size(cls, epsilon, N):
        return cls(threshold_from_size(epsilon, N), float(epsilon), N)

    @classmethod
    def standard(cls, N):
        return cls(1.0, max_test_size(N), N)

    @property
    def h0(self):
        return H0Dist(self.N)

    def rejects(self, rho):
        return np.asarray(rho) > self.kappa
