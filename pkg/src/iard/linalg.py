"""Weighted norms, Gaussian weight posteriors and leave-one-out downdates.

``lam`` (the noise precision) is either a positive scalar, standing for
``lam * I``, or a Hermitian positive-definite matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError, DomainError, IllConditionedError

CONDITION_LIMIT = 1e12


def apply_precision(lam, x):
    """``Lambda @ x`` for scalar or matrix precision."""
    if np.ndim(lam) == 0:
        return lam * x
    return lam @ x


def weighted_norm2(x, lam) -> float:
    """``x^H Lambda x``."""
    x = np.asarray(x)
    if np.ndim(lam) != 0 and np.shape(lam) != (x.shape[0], x.shape[0]):
        raise ConfigurationError(f"dimension mismatch: x has {x.shape[0]} rows, Lambda is {np.shape(lam)}")
    return float(np.vdot(x, apply_precision(lam, x)).real)


def weighted_gram(S, lam):
    return S.conj().T @ apply_precision(lam, S)


@dataclass
class WeightPosterior:
    """``q(w) = CN(mean, cov)`` together with the sparsity parameters."""

    mean: np.ndarray
    cov: np.ndarray
    alpha: np.ndarray

    @property
    def size(self):
        return self.mean.size


@dataclass
class LeaveOneOut:
    """Posterior with component ``l`` removed, its atoms and the matching residual."""

    cov: np.ndarray
    mean: np.ndarray
    residual: np.ndarray
    atoms: np.ndarray
    fallback: bool = False


def _cholesky_inverse(G):
    G = 0.5 * (G + G.conj().T)
    if G.shape[0] == 0:
        return np.zeros((0, 0), dtype=complex), 1.0
    ev = np.linalg.eigvalsh(G)
    cond = np.inf if ev[0] <= 0 else ev[-1] / ev[0]
    if not cond < CONDITION_LIMIT:
        raise IllConditionedError(f"posterior system is ill-conditioned (cond ~ {cond:.3g})", cond)
    c = sla.cho_factor(G, lower=True)
    return sla.cho_solve(c, np.eye(G.shape[0], dtype=complex)), cond


def posterior_a2(S, lam, alpha, y) -> WeightPosterior:
    """Joint posterior ``Phi = (S^H Lam S + diag(alpha))^-1``, ``w = Phi S^H Lam y``."""
    S = np.asarray(S, dtype=complex).reshape(len(y), -1)
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.size != S.shape[1]:
        raise ConfigurationError("alpha must have one entry per column of S")
    if not np.all(np.isfinite(alpha)):
        raise DomainError("pruned components (alpha = inf) must be removed from S")
    Phi, _ = _cholesky_inverse(weighted_gram(S, lam) + np.diag(alpha))
    Phi = 0.5 * (Phi + Phi.conj().T)
    w = Phi @ (S.conj().T @ apply_precision(lam, y))
    return WeightPosterior(w, Phi, alpha.copy())


def posterior_a1(s, lam, alpha, residual):
    """Scalar posterior ``(w_l, Phi_l)`` of one component against its residual."""
    Phi = 1.0 / (weighted_norm2(s, lam) + alpha)
    return complex(Phi * np.vdot(s, apply_precision(lam, residual))), float(Phi)


def downdate(Phi, l):
    """Covariance of the system with row/column ``l`` removed, from ``Phi``.

    Returns ``(Phi_minus, pivot)``; the update is only valid for ``pivot > 0``.
    """
    keep = np.arange(Phi.shape[0]) != l
    pivot = Phi[l, l].real
    col = Phi[keep, l]
    return Phi[np.ix_(keep, keep)] - np.outer(col, col.conj()) / pivot, pivot


def leave_one_out(S, lam, alpha, y, l, full: WeightPosterior) -> LeaveOneOut:
    """Remove component ``l`` from ``full`` by a rank-one downdate."""
    L = S.shape[1]
    if not 0 <= l < L:
        raise ConfigurationError(f"component index {l} outside active set of size {L}")
    keep = np.arange(L) != l
    S_minus = S[:, keep]
    if L == 1:
        return LeaveOneOut(np.zeros((0, 0), dtype=complex), np.zeros(0, dtype=complex), np.array(y, dtype=complex), S_minus)
    Phi_minus, pivot = downdate(full.cov, l)
    fallback = False
    if pivot > 0:
        w_minus = full.mean[keep] - full.cov[keep, l] * (full.mean[l] / pivot)
    else:
        fallback = True
        post = posterior_a2(S_minus, lam, np.asarray(alpha)[keep], y)
        Phi_minus, w_minus = post.cov, post.mean
    return LeaveOneOut(Phi_minus, w_minus, y - S_minus @ w_minus, S_minus, fallback)


def insert(Phi_minus, S_minus, s, lam, alpha_new, g, position):
    """Extend ``Phi_minus`` by one column ``s`` with sparsity ``alpha_new``.

    ``g`` is ``S^H Lam y`` for the enlarged system (new entry at ``position``).
    Returns the new ``(Phi, w)``.  Raises if the Schur complement is not positive.
    """
    lam_s = apply_precision(lam, s)
    b = S_minus.conj().T @ lam_s
    u = Phi_minus @ b
    d = float((np.vdot(s, lam_s) + alpha_new - np.vdot(b, u)).real)
    if not d > 0:
        raise IllConditionedError(f"non-positive Schur complement {d:.3g} while inserting a component")
    L = Phi_minus.shape[0] + 1
    Phi = np.empty((L, L), dtype=complex)
    order = np.r_[np.arange(position), np.arange(position + 1, L)]
    Phi[np.ix_(order, order)] = Phi_minus + np.outer(u, u.conj()) / d
    Phi[order, position] = -u / d
    Phi[position, order] = -u.conj() / d
    Phi[position, position] = 1.0 / d
    return Phi, Phi @ g
