"""Incremental automatic relevance determination (IARD) for multipath estimation.

Components are inserted one at a time by an incoherent (matched-filter) search
on the residual and then refined in round-robin sweeps.  Each refinement
updates the dispersion parameters, recomputes the pruning statistic
``rho = |mu|^2 / varsigma`` and either keeps the component with the closed-form
sparsity ``alpha = 1 / (|mu|^2 - varsigma)`` or removes it when
``rho <= kappa``.

Two posterior factorisations are supported:

``"a1"``
    independent weights; every component sees the residual with the other
    posterior means subtracted (the VB-SAGE form).
``"a2"``
    jointly Gaussian weights; the statistic uses the leave-one-out posterior
    obtained by a rank-one downdate.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg
from .errors import ConfigurationError, DomainError
from .linalg import LeaveOneOut, WeightPosterior, apply_precision, weighted_norm2
from .pruning import max_test_size, threshold_from_size
from .signal import AtomDictionary, DispersionParams, Measurement, ProbeSignal

ASSUMPTIONS = ("a1", "a2")
THRESHOLD_POLICIES = ("standard", "adjusted", "fixed")
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ComponentStats:
    """Projection weight ``mu``, its variance ``varsigma`` and ``rho = |mu|^2/varsigma``."""

    mu: complex
    varsigma: float

    def __post_init__(self):
        if not self.varsigma > 0:
            raise DomainError(f"varsigma must be positive, got {self.varsigma}")

    @property
    def rho(self) -> float:
        return abs(self.mu) ** 2 / self.varsigma


@dataclass(frozen=True)
class ComponentState:
    """Point estimates of one retained component."""

    theta: DispersionParams
    weight: complex
    alpha: float
    variance: float
    stats: ComponentStats

    @property
    def rho(self):
        return self.stats.rho


@dataclass(frozen=True)
class IardConfig:
    """Estimator settings.

    ``threshold`` selects ``kappa``: ``"standard"`` is 1, ``"adjusted"`` is
    derived from the test size ``epsilon`` and ``"fixed"`` uses ``kappa``
    verbatim.  ``n_candidates`` replaces ``N`` in the adjusted threshold.
    Delays are searched on a grid of ``Ts / delay_oversampling`` and Doppler
    on ``doppler_points`` values spanning ``doppler_range`` (only when M > 1),
    followed by golden-section refinement when ``refine`` is set.
    """

    assumption: str = "a2"
    threshold: str = "adjusted"
    epsilon: float = 1e-3
    kappa: float | None = None
    n_candidates: float | None = None
    max_components: int = 32
    max_sweeps: int = 200
    tol: float = 1e-6
    delay_oversampling: int = 8
    delay_range: tuple | None = None
    doppler_range: tuple = (-250.0, 250.0)
    doppler_points: int = 64
    refine: bool = True
    refine_iterations: int = 30
    refine_passes: int = 20
    stall_limit: int = 2
    doppler_model: str = "product"

    def __post_init__(self):
        if self.assumption not in ASSUMPTIONS:
            raise ConfigurationError(f"assumption must be one of {ASSUMPTIONS}")
        if self.threshold not in THRESHOLD_POLICIES:
            raise ConfigurationError(f"threshold must be one of {THRESHOLD_POLICIES}")
        if self.threshold == "fixed" and (self.kappa is None or self.kappa < 1):
            raise ConfigurationError("a fixed threshold needs kappa >= 1")
        if self.tol <= 0 or self.max_sweeps < 1 or self.max_components < 0:
            raise ConfigurationError("tolerances and budgets must be positive")
        if self.delay_oversampling < 1 or self.doppler_points < 1 or self.refine_iterations < 0:
            raise ConfigurationError("grid sizes must be positive")
        if self.doppler_range[0] > self.doppler_range[1]:
            raise ConfigurationError("empty Doppler search range")
        if self.delay_range is not None and not self.delay_range[0] <= self.delay_range[1]:
            raise ConfigurationError("empty delay search range")

    @classmethod
    def on_grid(cls, **kwargs):
        """Search restricted to the sampling instants, without refinement."""
        kwargs.setdefault("delay_oversampling", 1)
        kwargs.setdefault("refine", False)
        return cls(**kwargs)

    def kappa_for(self, N) -> float:
        if self.threshold == "standard":
            return 1.0
        if self.threshold == "fixed":
            return float(self.kappa)
        n = self.n_candidates or N
        if not self.epsilon <= max_test_size(n):
            raise ConfigurationError(f"epsilon={self.epsilon} exceeds the attainable test size for N={n}")
        return threshold_from_size(self.epsilon, n)


# ---------------------------------------------------------------------------
# search grid


@functools.lru_cache(maxsize=16)
def _conj_doppler(R, M, Ts, model, nus):
    m = np.arange(M)[:, None]
    phase = m * np.arange(R)[None, :] * Ts if model == "product" else np.repeat(m * R * Ts, R, axis=1)
    out = np.ascontiguousarray(np.exp(-2j * np.pi * np.asarray(nus)[None, :, None] * phase.T[:, None, :]))
    out.setflags(write=False)
    return out


class SearchGrid:
    """Delay(-Doppler) grid with cached atom norms for one measurement."""

    def __init__(self, dictionary: AtomDictionary, config: IardConfig, lam):
        self.dictionary = dictionary
        self.P = int(config.delay_oversampling)
        d = dictionary
        self.taus = np.arange(d.R * self.P) * d.Ts / self.P
        if config.delay_range is not None:
            lo, hi = config.delay_range
            self.tau_mask = (self.taus >= lo) & (self.taus <= hi)
        else:
            self.tau_mask = np.ones(self.taus.size, bool)
        if not self.tau_mask.any():
            raise ConfigurationError("delay search range contains no grid point")
        if d.M == 1:
            self.nus = np.zeros(1)
            self._dc = None
        else:
            lo, hi = config.doppler_range
            self.nus = np.linspace(lo, hi, config.doppler_points) if config.doppler_points > 1 else np.array([0.5 * (lo + hi)])
            self._dc = _conj_doppler(d.R, d.M, d.Ts, d.doppler_model, tuple(self.nus))
        self.tau_step = d.Ts / self.P
        self.nu_step = (self.nus[1] - self.nus[0]) if self.nus.size > 1 else 0.0
        self.doppler_range = config.doppler_range if d.M > 1 else (0.0, 0.0)
        self.delay_range = config.delay_range
        self.delay_basis = _SeriesBasis(d._freq / d.delay_span)
        self.doppler_basis = _SeriesBasis(d._phase.ravel()) if d.M > 1 else None
        self.lam = lam
        if np.ndim(lam) == 0:
            self.norms = lam * d.atom_energy
        else:
            self.norms = np.empty((self.nus.size, self.taus.size))
            for i, nu in enumerate(self.nus):
                for j, tau in enumerate(self.taus):
                    self.norms[i, j] = weighted_norm2(d.atom(tau, nu), lam)

    def correlate(self, x) -> np.ndarray:
        """``s(theta)^H x`` on the grid, shape ``(n_nu, n_tau)``."""
        return self.dictionary.project_grid(x, self.P, self.nus, self._dc)

    def norm2(self, tau, nu):
        if np.ndim(self.lam) == 0:
            return self.norms
        return weighted_norm2(self.dictionary.atom(tau, nu), self.lam)

    def argmax(self, values):
        """Grid maximiser, ties broken by lowest delay then lowest Doppler index."""
        v = np.where(self.tau_mask[None, :], values, -np.inf)
        flat = int(np.argmax(v.T))
        j, i = divmod(flat, self.nus.size)
        return DispersionParams(float(self.taus[j]), float(self.nus[i])), float(v[i, j])


# ---------------------------------------------------------------------------
# model state


@dataclass
class ModelState:
    """Current variational estimate for one measurement.

    ``Phi`` is always stored as a square matrix; under A1 it is diagonal.
    ``residual`` caches ``y - S w``.
    """

    measurement: Measurement
    dictionary: AtomDictionary
    assumption: str
    kappa: float
    thetas: list = field(default_factory=list)
    S: np.ndarray = None
    w: np.ndarray = None
    Phi: np.ndarray = None
    alpha: np.ndarray = None
    stats: list = field(default_factory=list)
    ids: list = field(default_factory=list)
    residual: np.ndarray = None
    sweeps: int = 0
    insertions: int = 0
    prunes: int = 0
    numerical_warnings: int = 0
    converged: bool = False
    last_change: float = np.inf
    last_pruned: bool = False
    bound_history: list = field(default_factory=list)
    grid: SearchGrid | None = None

    def __post_init__(self):
        N = self.measurement.N
        if self.S is None:
            self.S = np.zeros((N, 0), dtype=complex)
            self.w = np.zeros(0, dtype=complex)
            self.Phi = np.zeros((0, 0), dtype=complex)
            self.alpha = np.zeros(0)
        if self.residual is None:
            self.residual = self.measurement.y - self.S @ self.w
        self._lam_y = apply_precision(self.measurement.noise_precision, self.measurement.y)
        self._next_id = itertools.count(max(self.ids, default=-1) + 1)

    @classmethod
    def empty(cls, measurement, dictionary, config: IardConfig):
        if dictionary.N != measurement.N:
            raise ConfigurationError(f"dictionary produces {dictionary.N} samples, measurement has {measurement.N}")
        state = cls(measurement, dictionary, config.assumption, config.kappa_for(measurement.N))
        state.grid = SearchGrid(dictionary, config, measurement.noise_precision)
        return state

    @classmethod
    def seeded(cls, measurement, dictionary, config: IardConfig, thetas, alpha=None):
        """State with the given components already active (weights from their posterior).

        ``alpha`` defaults to zero (maximum-likelihood weights).  Under A1 the
        weights are obtained one after the other against the running residual.
        """
        state = cls.empty(measurement, dictionary, config)
        thetas = list(thetas)
        alpha = np.zeros(len(thetas)) if alpha is None else np.asarray(alpha, dtype=float)
        lam, y = measurement.noise_precision, measurement.y
        S = dictionary.atoms(thetas)
        if state.assumption == "a2":
            post = linalg.posterior_a2(S, lam, alpha, y)
            w, Phi = post.mean, post.cov
        else:
            w, phi, r = np.zeros(len(thetas), complex), np.zeros(len(thetas)), y.copy()
            for l in range(len(thetas)):
                w[l], phi[l] = linalg.posterior_a1(S[:, l], lam, alpha[l], r)
                r = r - w[l] * S[:, l]
            Phi = np.diag(phi).astype(complex)
        state.thetas, state.S, state.w, state.Phi, state.alpha = thetas, S, w, Phi, alpha.copy()
        state.residual = state.recompute_residual()
        state.stats = [stats_a1(S[:, l], lam, state.residual + w[l] * S[:, l]) for l in range(len(thetas))]
        state.ids = list(range(len(thetas)))
        state._next_id = itertools.count(len(thetas))
        return state

    @property
    def lam(self):
        return self.measurement.noise_precision

    @property
    def y(self):
        return self.measurement.y

    @property
    def L(self) -> int:
        return len(self.thetas)

    @property
    def posterior(self) -> WeightPosterior:
        return WeightPosterior(self.w, self.Phi, self.alpha)

    @property
    def components(self):
        return [
            ComponentState(self.thetas[l], complex(self.w[l]), float(self.alpha[l]), float(self.Phi[l, l].real), self.stats[l])
            for l in range(self.L)
        ]

    def recompute_residual(self):
        return self.y - self.S @ self.w

    def expected_fit(self) -> float:
        """``-E_q ||y - S w||^2_Lambda``: data term of the variational bound."""
        G = linalg.weighted_gram(self.S, self.lam)
        return -(weighted_norm2(self.residual, self.lam) + float(np.real(np.trace(G @ self.Phi))))

    # -- bookkeeping ------------------------------------------------------

    def _append(self, theta, s, w, Phi, alpha, stats):
        self.thetas.append(theta)
        self.S = np.column_stack([self.S, s])
        self.alpha = np.append(self.alpha, alpha)
        self.stats.append(stats)
        self.ids.append(next(self._next_id))
        if self.assumption == "a1":
            self.w = np.append(self.w, w)
            self.Phi = np.diag(np.append(np.diag(self.Phi).real, Phi)).astype(complex)
        else:
            self.w, self.Phi = w, Phi

    def _remove(self, l):
        keep = np.arange(self.L) != l
        del self.thetas[l], self.stats[l], self.ids[l]
        self.S = self.S[:, keep]
        self.alpha = self.alpha[keep]
        self.w = self.w[keep]
        self.Phi = self.Phi[np.ix_(keep, keep)]


# ---------------------------------------------------------------------------
# per-component statistics


def stats_a1(s, lam, residual) -> ComponentStats:
    """``varsigma = 1/||s||^2_Lam``, ``mu = varsigma s^H Lam r`` against the A1 residual."""
    e = weighted_norm2(s, lam)
    if not e > 0:
        raise DomainError("atom has zero weighted norm")
    vs = 1.0 / e
    return ComponentStats(complex(vs * np.vdot(s, apply_precision(lam, residual))), vs)


def stats_a2(s, lam, loo: LeaveOneOut) -> ComponentStats:
    """Statistics of ``s`` given the leave-one-out posterior of the other components.

    ``varsigma`` is the inverse Schur complement of ``s`` in the active system
    and ``mu = varsigma s^H Lam (y - S_-l w_-l)``.
    """
    lam_s = apply_precision(lam, s)
    b = loo.atoms.conj().T @ lam_s
    schur = float((np.vdot(s, lam_s) - np.vdot(b, loo.cov @ b)).real)
    if not schur > 0:
        raise linalg.IllConditionedError(f"non-positive Schur complement {schur:.3g}")
    vs = 1.0 / schur
    return ComponentStats(complex(vs * np.vdot(lam_s, loo.residual)), vs)


def alpha_fixed_point(stats: ComponentStats, kappa: float = 1.0) -> float:
    """Limit of the alternating ``(q(w), q(alpha))`` updates, or ``inf`` when ``rho <= kappa``."""
    if kappa < 1:
        raise DomainError("kappa must be >= 1")
    if stats.rho > kappa:
        return 1.0 / (abs(stats.mu) ** 2 - stats.varsigma)
    return np.inf


# ---------------------------------------------------------------------------
# dispersion-parameter search


class _Objective:
    """Expected log-likelihood as a function of ``theta_l``, other factors fixed.

    ``f(theta) = -||r_l - w_l s||^2 - 2 Re sum_k Phi_lk s_k^H Lam s - Phi_ll ||s||^2``
    which is evaluated as ``const + 2 Re s^H u - c ||s||^2``.
    """

    def __init__(self, state: ModelState, l: int, use_covariance=True):
        lam = state.lam
        s_l = state.S[:, l]
        w_l = state.w[l]
        r_l = state.residual + w_l * s_l
        v = np.conj(w_l) * r_l
        c = abs(w_l) ** 2
        if use_covariance:
            c += state.Phi[l, l].real
            others = np.arange(state.L) != l
            cross = state.Phi[l, others]
            if np.any(cross != 0):
                v = v - state.S[:, others] @ np.conj(cross)
        self.u = apply_precision(lam, v)
        self.c = c
        self.const = -weighted_norm2(r_l, lam)
        self.grid = state.grid
        self.dictionary = state.dictionary

    def at(self, theta: DispersionParams) -> float:
        p = self.dictionary.project(self.u, theta.tau, theta.doppler)
        return self.const + 2 * p.real - self.c * self.grid.norm2(theta.tau, theta.doppler)

    def on_grid(self):
        return self.const + 2 * self.grid.correlate(self.u).real - self.c * self.grid.norms


def _golden_max(f, lo, hi, iterations):
    """Golden-section search for a maximum on ``[lo, hi]``; returns best evaluated ``(x, f(x))``."""
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    best = max((f1, x1), (f2, x2))
    for _ in range(iterations):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
            best = max(best, (f1, x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
            best = max(best, (f2, x2))
    return best[1], best[0]


class _SeriesBasis:
    """Scaled powers ``t_n^k / k!`` of fixed positions, reused by :func:`_trig_series`."""

    max_terms = 40

    def __init__(self, pos):
        self.pos = np.asarray(pos, dtype=float)
        self.pmax = float(np.max(np.abs(self.pos))) if self.pos.size else 0.0
        t = self.pos / self.pmax if self.pmax > 0 else self.pos
        k = np.arange(self.max_terms)[:, None]
        self.powers = np.exp(k * np.log(np.abs(t) + 1e-300)[None, :] - np.cumsum(np.log(np.maximum(k, 1)), axis=0))
        self.powers *= np.where(t < 0, (-1.0) ** k, 1.0)
        self.powers[0] = 1.0


def _trig_series(coef, basis: _SeriesBasis, sign, x0, h):
    """Evaluator of ``g(x) = sum_n coef_n exp(sign 2 pi i pos_n x)`` for ``|x - x0| <= h``.

    The exponential is expanded around ``x0``; the number of Taylor terms is
    chosen so that the truncation error is below ``1e-17 * sum |coef|``.
    """
    pos, pmax = basis.pos, basis.pmax
    base = coef * np.exp(sign * 2j * np.pi * pos * x0)
    if pmax == 0.0 or h == 0.0:
        total = complex(base.sum())
        return lambda x: total
    a = 2 * np.pi * pmax * h
    if a > 4.0:
        # wide brackets: the expansion would cancel badly, evaluate directly
        return lambda x: complex(np.sum(coef * np.exp(sign * 2j * np.pi * pos * x)))
    terms, tail = 1, 1.0
    while tail > 1e-17 or terms < a:
        tail *= a / terms
        terms += 1
    moments = basis.powers[:terms] @ base
    # Horner coefficients in u = (x - x0) / h, highest power first
    poly = [complex(c) for c in (moments * (sign * 2j * np.pi * pmax * h) ** np.arange(terms))[::-1]]

    def g(x):
        u = (x - x0) / h
        acc = 0j
        for c in poly:
            acc = acc * u + c
        return acc

    return g


def _delay_line(obj: _Objective, nu, center, half_width):
    """Objective along delay at fixed Doppler, valid on ``center +- half_width``."""
    d = obj.dictionary
    z = d._fold(obj.u, nu)
    k = d._active
    coef = d._spec[k].conj() * np.fft.fft(z)[k] / d.R
    g = _trig_series(coef, obj.grid.delay_basis, 1.0, center, half_width)
    white = np.ndim(obj.grid.lam) == 0

    def f(tau):
        n2 = obj.grid.norms if white else obj.grid.norm2(tau % d.delay_span, nu)
        return obj.const + 2 * g(tau).real - obj.c * n2

    return f


def _doppler_line(obj: _Objective, tau, center, half_width):
    d = obj.dictionary
    q = d.delayed(tau).conj()[None, :] * obj.u.reshape(d.M, d.R)
    g = _trig_series(q.ravel(), obj.grid.doppler_basis, -1.0, center, half_width)
    white = np.ndim(obj.grid.lam) == 0

    def f(nu):
        n2 = obj.grid.norms if white else obj.grid.norm2(tau, nu)
        return obj.const + 2 * g(nu).real - obj.c * n2

    return f


def _newton_polish(obj: _Objective, tau, nu, iterations=4, h=1e-4):
    """Finite-difference Newton steps in grid-step units from ``(tau, nu)``.

    Golden-section alone leaves jitter of about 1e-6 grid steps, which shows
    up in the weights and keeps the sweep loop from meeting its tolerance.
    Newton lands on the same point to round-off from any nearby start.
    """
    grid = obj.grid
    span = obj.dictionary.delay_span
    two_d = grid.nus.size > 1
    ts, vs = grid.tau_step, grid.nu_step

    def inside(t, v):
        if grid.delay_range is not None and not grid.delay_range[0] <= t <= grid.delay_range[1]:
            return False
        return not two_d or grid.doppler_range[0] <= v <= grid.doppler_range[1]

    def f(t, v):
        p = obj.dictionary.project(obj.u, t % span, v)
        return 2 * p.real - obj.c * grid.norm2(t % span, v)

    f0 = f(tau, nu)
    for _ in range(iterations):
        if not (inside(tau - h * ts, nu - h * vs) and inside(tau + h * ts, nu + h * vs)):
            break
        fp, fm = f(tau + h * ts, nu), f(tau - h * ts, nu)
        g = [(fp - fm) / (2 * h)]
        H = [[(fp - 2 * f0 + fm) / h**2]]
        if two_d:
            gp, gm = f(tau, nu + h * vs), f(tau, nu - h * vs)
            fpp, fmm = f(tau + h * ts, nu + h * vs), f(tau - h * ts, nu - h * vs)
            hxy = (fpp - fp - gp + 2 * f0 - fm - gm + fmm) / (2 * h**2)
            g.append((gp - gm) / (2 * h))
            H = [[H[0][0], hxy], [hxy, (gp - 2 * f0 + gm) / h**2]]
        H, g = np.array(H), np.array(g)
        if np.any(np.linalg.eigvalsh(H) >= 0):
            break
        d = -np.linalg.solve(H, g)
        if np.max(np.abs(d)) > 1.0:
            break
        t_new = tau + d[0] * ts
        v_new = nu + d[1] * vs if two_d else nu
        if not inside(t_new, v_new):
            break
        f_new = f(t_new, v_new)
        if f_new < f0:
            break
        tau, nu, f0 = t_new, v_new, f_new
        if np.max(np.abs(d)) < 1e-9:
            break
    return tau % span, nu


def _refine(obj: _Objective, start: DispersionParams, f_start, config: IardConfig):
    # delay and Doppler are coupled: alternate line searches into the basin, then polish
    grid = obj.grid
    span = obj.dictionary.delay_span
    tau, nu, best = start.tau, start.doppler, f_start
    for _ in range(config.refine_passes):
        tau0, nu0 = tau, nu
        lo, hi = tau - grid.tau_step, tau + grid.tau_step
        if grid.delay_range is not None:
            lo, hi = max(lo, grid.delay_range[0]), min(hi, grid.delay_range[1])
        line = _delay_line(obj, nu, 0.5 * (lo + hi), 0.5 * (hi - lo))
        t, ft = _golden_max(line, lo, hi, config.refine_iterations)
        if ft > best:
            tau, best = t % span, ft
        if grid.nus.size == 1:
            break
        lo = max(nu - grid.nu_step, grid.doppler_range[0])
        hi = min(nu + grid.nu_step, grid.doppler_range[1])
        line = _doppler_line(obj, tau, 0.5 * (lo + hi), 0.5 * (hi - lo))
        v, fv = _golden_max(line, lo, hi, config.refine_iterations)
        if fv > best:
            nu, best = v, fv
        dt = min(abs(tau - tau0), span - abs(tau - tau0))
        if dt <= 1e-3 * grid.tau_step and abs(nu - nu0) <= 1e-3 * grid.nu_step:
            break
    tau, nu = _newton_polish(obj, tau, nu)
    theta = DispersionParams(float(tau), float(nu))
    return theta, obj.at(theta)


def optimize_theta(l: int, state: ModelState, config: IardConfig, use_covariance=True, trace=None) -> DispersionParams:
    """Maximise the expected log-likelihood over the dispersion parameters of component ``l``.

    Coarse grid search followed by coordinate-wise golden-section refinement.
    The incumbent ``state.thetas[l]`` is kept unless a strictly better point
    is found.  ``trace`` (a list) receives the objective of every accepted point.
    """
    if state.grid is None:
        raise ConfigurationError("state has no search grid")
    obj = _Objective(state, l, use_covariance)
    incumbent = state.thetas[l]
    f_inc = obj.at(incumbent)
    if trace is not None:
        trace.append(f_inc)
    theta, f_best = state.grid.argmax(obj.on_grid())
    if config.refine:
        theta, _ = _refine(obj, theta, f_best, config)
    f_best = obj.at(theta)
    # the polished optimum is reproducible to round-off, so any strict gain is accepted
    if theta != incumbent and f_best > f_inc:
        if trace is not None:
            trace.append(f_best)
        return theta
    return incumbent


def grid_rho(state: ModelState, residual=None):
    """Incoherent criterion ``|s^H Lam r|^2 / ||s||^2_Lam`` on the search grid."""
    r = state.residual if residual is None else residual
    corr = state.grid.correlate(apply_precision(state.lam, r))
    return np.abs(corr) ** 2 / state.grid.norms


def _stats_for_new(state: ModelState, s):
    if state.assumption == "a1":
        return stats_a1(s, state.lam, state.residual)
    loo = LeaveOneOut(state.Phi, state.w, state.residual, state.S)
    return stats_a2(s, state.lam, loo)


def _gram_rhs(state: ModelState, S):
    return S.conj().T @ state._lam_y


def init_component(state: ModelState, config: IardConfig):
    """Propose a component at the maximiser of the incoherent criterion.

    Returns the new :class:`ComponentState` or ``None`` when the proposal is
    pruned (or the residual is zero); the state is updated in place.
    """
    if not np.any(state.residual):
        return None
    theta, best = state.grid.argmax(grid_rho(state))
    if not best > 0:
        return None
    s = state.dictionary.atom(theta.tau, theta.doppler)
    st = _stats_for_new(state, s)
    alpha = alpha_fixed_point(st, state.kappa)
    if not np.isfinite(alpha):
        return None
    if state.assumption == "a1":
        w, Phi = linalg.posterior_a1(s, state.lam, alpha, state.residual)
        state._append(theta, s, w, Phi, alpha, st)
        state.residual = state.residual - w * s
    else:
        g = _gram_rhs(state, np.column_stack([state.S, s]))
        Phi, w = linalg.insert(state.Phi, state.S, s, state.lam, alpha, g, state.L)
        state._append(theta, s, w, Phi, alpha, st)
        state.residual = state.recompute_residual()
    state.insertions += 1
    return state.components[-1]


def _update_component(state: ModelState, l: int, config: IardConfig):
    """One Algorithm-2 step for component ``l``; returns ``False`` if it was pruned."""
    theta = optimize_theta(l, state, config)
    s = state.S[:, l] if theta == state.thetas[l] else state.dictionary.atom(theta.tau, theta.doppler)
    lam = state.lam
    if state.assumption == "a1":
        r_tilde = state.residual + state.w[l] * state.S[:, l]
        st = stats_a1(s, lam, r_tilde)
        alpha = alpha_fixed_point(st, state.kappa)
        if not np.isfinite(alpha):
            state._remove(l)
            state.residual = r_tilde
            return False
        w, Phi = linalg.posterior_a1(s, lam, alpha, r_tilde)
        state.thetas[l], state.S[:, l], state.w[l], state.Phi[l, l] = theta, s, w, Phi
        state.alpha[l], state.stats[l] = alpha, st
        state.residual = r_tilde - w * s
        return True
    loo = linalg.leave_one_out(state.S, lam, state.alpha, state.y, l, state.posterior)
    state.numerical_warnings += int(loo.fallback)
    st = stats_a2(s, lam, loo)
    alpha = alpha_fixed_point(st, state.kappa)
    if not np.isfinite(alpha):
        state._remove(l)
        state.Phi, state.w, state.residual = loo.cov, loo.mean, loo.residual
        return False
    S_new = state.S.copy()
    S_new[:, l] = s
    Phi, w = linalg.insert(loo.cov, loo.atoms, s, lam, alpha, _gram_rhs(state, S_new), l)
    state.thetas[l], state.S, state.w, state.Phi = theta, S_new, w, Phi
    state.alpha[l], state.stats[l] = alpha, st
    state.residual = state.recompute_residual()
    return True


def sweep_update(state: ModelState, config: IardConfig) -> ModelState:
    """One round-robin pass over all components (updated in place and returned)."""
    before = dict(zip(state.ids, state.w))
    pruned = False
    for cid in list(state.ids):
        l = state.ids.index(cid)
        if not _update_component(state, l, config):
            state.prunes += 1
            pruned = True
    state.residual = state.recompute_residual()
    state.sweeps += 1
    if state.L:
        scale = np.max(np.abs(state.w))
        change = max(abs(state.w[l] - before[cid]) for l, cid in enumerate(state.ids))
        state.last_change = float(change / scale) if scale > 0 else 0.0
    else:
        state.last_change = 0.0
    state.last_pruned = pruned
    state.bound_history.append(state.expected_fit())
    return state


def estimate(measurement: Measurement, probe: ProbeSignal, config: IardConfig = IardConfig()) -> ModelState:
    """Build the model bottom-up: insert, stabilise, repeat until nothing can be added.

    A new component is proposed only after a sweep that changed no weight by
    more than ``tol`` (relative) and pruned nothing.  The run stops when the
    proposal is rejected, ``max_components`` is reached, insertions keep being
    undone (``stall_limit``) or ``max_sweeps`` is exhausted; only the last case
    leaves ``converged = False``.
    """
    dictionary = AtomDictionary(probe, measurement.M, config.doppler_model)
    state = ModelState.empty(measurement, dictionary, config)
    stable, stalls, L_before = True, 0, 0
    while True:
        if stable:
            if state.L >= config.max_components:
                state.converged = True
                break
            L_before = state.L
            if init_component(state, config) is None:
                state.converged = True
                break
        if state.sweeps >= config.max_sweeps:
            state.converged = False
            break
        sweep_update(state, config)
        stable = state.last_change < config.tol and not state.last_pruned
        if stable and state.L <= L_before:
            stalls += 1
            if stalls >= config.stall_limit:
                state.converged = True
                break
    return state


def result_to_dict(state: ModelState, config: IardConfig) -> dict:
    """JSON-ready summary of an estimate."""
    return {
        "assumption": state.assumption,
        "components": [
            {
                "tau": c.theta.tau,
                "doppler": c.theta.doppler,
                "w_re": c.weight.real,
                "w_im": c.weight.imag,
                "alpha": c.alpha,
                "rho": c.rho,
            }
            for c in state.components
        ],
        "sweeps": state.sweeps,
        "converged": bool(state.converged),
        "threshold": {
            "policy": config.threshold,
            "kappa": state.kappa,
            "epsilon": config.epsilon if config.threshold == "adjusted" else None,
        },
    }


def with_assumption(config: IardConfig, assumption: str) -> IardConfig:
    return replace(config, assumption=assumption)
