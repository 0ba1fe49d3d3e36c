"""Independent reference implementations used by the test-suite.

Nothing here imports the package internals beyond plain data types; every
quantity is recomputed the slow, obvious way.
"""

import numpy as np
from scipy import integrate, stats


def dft_atom(spectrum, delay_samples, R, M=1, doppler=0.0, Ts=1.0, model="product"):
    """Atom from the explicit inverse-DFT sum, without FFTs."""
    n = np.arange(R)
    k = (np.arange(R) + R // 2) % R - R // 2
    base = (spectrum[None, :] * np.exp(2j * np.pi * np.outer(n - delay_samples, k) / R)).sum(1) / R
    out = np.empty((M, R), complex)
    for m in range(M):
        if model == "product":
            out[m] = base * np.exp(2j * np.pi * doppler * n * m * Ts)
        else:
            out[m] = base * np.exp(2j * np.pi * doppler * m * R * Ts)
    return out.ravel()


def dense_posterior(S, lam, alpha, y):
    Lam = lam * np.eye(S.shape[0]) if np.ndim(lam) == 0 else lam
    A = S.conj().T @ Lam @ S + np.diag(alpha)
    Phi = np.linalg.inv(A)
    return Phi @ S.conj().T @ Lam @ y, Phi


def dense_leave_one_out(S, lam, alpha, y, l):
    keep = np.arange(S.shape[1]) != l
    w, Phi = dense_posterior(S[:, keep], lam, np.asarray(alpha)[keep], y)
    return Phi, w, y - S[:, keep] @ w


def dense_stats_a2(s, lam, S_minus, alpha_minus, y):
    """varsigma, mu of a candidate atom from the full (L+1)-system inverse with alpha_new = 0."""
    S = np.column_stack([S_minus, s])
    Lam = lam * np.eye(S.shape[0]) if np.ndim(lam) == 0 else lam
    A = S.conj().T @ Lam @ S + np.diag(np.append(alpha_minus, 0.0))
    vs = np.linalg.inv(A)[-1, -1].real
    w, _ = dense_posterior(S_minus, lam, alpha_minus, y) if S_minus.shape[1] else (np.zeros(0), None)
    r = y - S_minus @ w
    return vs * (s.conj() @ Lam @ r), vs


def alternating_alpha(mu, vs, alpha0, iterations):
    """Alternate q(w) and q(alpha) updates of one component seen through (mu, varsigma)."""
    a = alpha0
    for _ in range(iterations):
        phi = 1.0 / (1.0 / vs + a)
        w = phi * mu / vs
        a = 1.0 / (abs(w) ** 2 + phi)
    return a


def marcum_q1(a, b):
    """Q_1(a, b) as the survival function of a noncentral chi-square with 2 dof."""
    return stats.ncx2.sf(b**2, 2, a**2)


def truncated_ncx2_pdf(rho, eta):
    """Density of rho = X/2, X ~ ncx2(2, eta), restricted to rho > 1."""
    Z = stats.ncx2.sf(2.0, 2, eta)
    return np.where(rho > 1, 2 * stats.ncx2.pdf(2 * rho, 2, eta) / Z, 0.0)


def gumbel_max_cdf(x, N):
    return stats.gumbel_r.cdf(x, loc=np.log(N))


def quad(f, a, b):
    return integrate.quad(f, a, b, limit=400, epsabs=1e-12, epsrel=1e-10)[0]


def random_complex(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hpd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(random_complex(rng, n, n))
    ev = np.geomspace(1.0, cond, n)
    return (Q * ev) @ Q.conj().T
