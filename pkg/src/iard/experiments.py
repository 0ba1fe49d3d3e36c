"""Monte Carlo harness for the detection and super-resolution studies.

Every run draws a fresh probe (random subcarrier phases), scene and noise
from a seed derived from ``(base_seed, cell, run)``, so results do not depend
on the order in which cells or runs are evaluated.  All estimators in a cell
see the same measurements, which makes their metrics paired comparisons.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from itertools import product
from pathlib import Path

import numpy as np

from . import baselines, core
from .errors import ConfigurationError, IllConditionedError
from .pruning import gumbel_cdf, h0_pdf, h1_cdf, h1_pdf, ks_distance
from .signal import AtomDictionary, DispersionParams, SyntheticScene, make_ofdm_probe, synthesize

SCENARIOS = ("h0h1-validation", "single-component-detect", "superresolution")
ESTIMATORS = ("iard-a1", "iard-a2", "sage-bic-2")
CSV_COLUMNS = ["estimator", "snr_db", "delta", "K", "mean_L", "pd", "rmese_tau", "rmese_nu", "mean_seconds", "runs"]
EXTRA_COLUMNS = ["threshold", "hit_rate", "n_correct", "n_failed", "n_nonconverged", "ks"]


@dataclass(frozen=True)
class ExperimentSpec:
    """One study: the cartesian product of the axes, ``runs`` Monte Carlo runs per cell.

    ``K`` entries are subcarrier counts; ``None`` means ``K = R``.  ``M``
    defaults to 1 (delay only) for the detection scenarios and 25 for the
    super-resolution study.  ``iard`` holds extra :class:`IardConfig` fields.
    """

    scenario: str
    snr_db: tuple = (30.0,)
    delta: tuple = (1.0,)
    K: tuple = (None,)
    threshold: tuple = ("adjusted",)
    runs: int = 100
    base_seed: int = 0
    estimators: tuple = ("iard-a1", "iard-a2")
    R: int = 128
    M: int | None = None
    Ts: float = 4e-6
    epsilon: float = 1e-3
    on_grid: bool = False
    max_components: int = 32
    iard: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("snr_db", "delta", "K", "threshold", "estimators"):
            value = getattr(self, name)
            value = tuple(value) if isinstance(value, (list, tuple)) else (value,)
            object.__setattr__(self, name, value)
            if not value:
                raise ConfigurationError(f"axis {name!r} is empty")
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"scenario must be one of {SCENARIOS}")
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad and self.scenario != "h0h1-validation":
            raise ConfigurationError(f"unknown estimators {sorted(bad)}")
        for t in self.threshold:
            if t not in core.THRESHOLD_POLICIES[:2]:
                raise ConfigurationError(f"threshold axis accepts 'standard' or 'adjusted', got {t!r}")
        for k in self.K:
            if k is not None and not 1 <= int(k) <= self.R:
                raise ConfigurationError(f"K={k} outside [1, R={self.R}]")
        unknown = set(self.iard) - {f.name for f in fields(core.IardConfig)}
        if unknown:
            raise ConfigurationError(f"unknown estimator settings {sorted(unknown)}")

    @property
    def blocks(self) -> int:
        if self.M is not None:
            return int(self.M)
        return 25 if self.scenario == "superresolution" else 1

    @classmethod
    def from_dict(cls, data: dict):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown experiment keys {sorted(unknown)}")
        if "scenario" not in data:
            raise ConfigurationError("experiment spec needs a 'scenario'")
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def cells(self):
        if self.scenario == "h0h1-validation":
            return list(product(self.snr_db, (None,), self.K, ("standard",)))
        if self.scenario == "single-component-detect":
            return list(product(self.snr_db, (None,), self.K, self.threshold))
        return list(product(self.snr_db, self.delta, self.K, self.threshold))

    def config_for(self, estimator: str, threshold: str) -> core.IardConfig:
        kwargs = dict(self.iard)
        kwargs.setdefault("max_components", self.max_components)
        kwargs.update(threshold=threshold, epsilon=self.epsilon)
        if estimator.startswith("iard-"):
            kwargs["assumption"] = estimator[-2:]
        return core.IardConfig.on_grid(**kwargs) if self.on_grid else core.IardConfig(**kwargs)

    def content_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class MetricsRecord:
    """Aggregated metrics of one estimator in one cell.

    ``rmese_tau`` is in units of ``Ts`` and ``rmese_nu`` in units of
    ``1 / (R M Ts)``; both use only runs whose detected order is correct.
    ``hit_rate`` is the fraction of those runs in which every matched
    delay lies within half a sample of the truth.
    """

    estimator: str
    snr_db: float
    delta: float | None
    K: int
    threshold: str
    mean_L: float
    pd: float
    rmese_tau: float
    rmese_nu: float
    mean_seconds: float
    runs: int
    hit_rate: float = float("nan")
    n_correct: int = 0
    n_failed: int = 0
    n_nonconverged: int = 0
    ks: float = float("nan")

    def row(self, timing=True):
        d = asdict(self)
        if not timing:
            d["mean_seconds"] = ""
        return [_fmt(d[c]) for c in CSV_COLUMNS + EXTRA_COLUMNS]


@dataclass
class RunOutcome:
    """Result of one estimator on one measurement."""

    L: int
    tau_errors: np.ndarray
    nu_errors: np.ndarray
    seconds: float
    converged: bool = True
    failed: bool = False
    false_components: int = 0
    missed: int = 0


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_seed(base_seed: int, cell: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), int(cell), int(run)])


def rmese(errors) -> float:
    """Root median squared error; ``nan`` for an empty sample."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        return float("nan")
    return float(np.sqrt(np.median(e**2)))


# ---------------------------------------------------------------------------
# matching


@dataclass
class Matching:
    pairs: list
    tau_errors: np.ndarray
    nu_errors: np.ndarray
    false_estimates: list
    missed_truth: list


def component_match(truth, estimate, span=None) -> Matching:
    """Greedy one-to-one pairing by nearest delay.

    ``truth`` and ``estimate`` are sequences of :class:`DispersionParams`.  The
    globally closest remaining pair is matched first.  With ``span`` the delay
    distance is circular.  Errors are ``estimate - truth``.
    """
    truth, estimate = list(truth), list(estimate)
    cand = []
    for i, t in enumerate(truth):
        for j, e in enumerate(estimate):
            d = e.tau - t.tau
            if span is not None:
                d = (d + 0.5 * span) % span - 0.5 * span
            cand.append((abs(d), i, j, d))
    cand.sort()
    used_t, used_e, pairs, dt, dn = set(), set(), [], [], []
    for _, i, j, d in cand:
        if i in used_t or j in used_e:
            continue
        used_t.add(i)
        used_e.add(j)
        pairs.append((i, j))
        dt.append(d)
        dn.append(estimate[j].doppler - truth[i].doppler)
    return Matching(
        pairs,
        np.array(dt),
        np.array(dn),
        [j for j in range(len(estimate)) if j not in used_e],
        [i for i in range(len(truth)) if i not in used_t],
    )


# ---------------------------------------------------------------------------
# scenes


def make_scene(spec: ExperimentSpec, snr_db, delta, K, seed: np.random.SeedSequence):
    """Draw ``(probe, scene)`` for one run of ``spec``."""
    probe_seed, scene_seed, noise_seed = seed.generate_state(3)
    R, Ts = spec.R, spec.Ts
    probe = make_ofdm_probe(int(K or R), R, Ts, int(probe_seed))
    rng = np.random.default_rng(scene_seed)
    if spec.scenario == "superresolution":
        tau1 = rng.uniform(0.0, Ts)
        nu1 = rng.uniform(-200.0, 200.0)
        nu2 = nu1 + rng.uniform(-2.0, 2.0)
        phases = rng.uniform(0, 2 * np.pi, size=2)
        comps = [
            (np.exp(1j * phases[0]), DispersionParams(tau1, nu1)),
            (np.exp(1j * phases[1]), DispersionParams(tau1 + delta * Ts, nu2)),
        ]
    else:
        # one unit-magnitude component on the sampling grid
        tau = rng.integers(0, R) * Ts
        comps = [(np.exp(1j * rng.uniform(0, 2 * np.pi)), DispersionParams(float(tau)))]
    return probe, SyntheticScene(comps, float(snr_db), int(noise_seed))


def run_estimator(name, measurement, probe, config) -> tuple:
    """Return ``(thetas, converged, seconds)``."""
    t0 = time.perf_counter()
    if name == "sage-bic-2":
        res = baselines.bic_select(measurement, probe, config)
        fit = res.best
        thetas, converged = fit.thetas, fit.converged
    else:
        state = core.estimate(measurement, probe, config)
        thetas, converged = list(state.thetas), state.converged
    return thetas, converged, time.perf_counter() - t0


def evaluate_run(name, scene, probe, M, config, doppler_model="product") -> RunOutcome:
    measurement = synthesize(scene, probe, M, doppler_model)
    truth = [p for _, p in scene.components]
    try:
        thetas, converged, seconds = run_estimator(name, measurement, probe, config)
    except IllConditionedError:
        return RunOutcome(0, np.zeros(0), np.zeros(0), 0.0, converged=False, failed=True)
    span = len(probe) * probe.sample_period
    m = component_match(truth, thetas, span)
    return RunOutcome(len(thetas), m.tau_errors, m.nu_errors, seconds, converged, False, len(m.false_estimates), len(m.missed_truth))


def summarize(name, outcomes, n_true, snr_db, delta, K, threshold, Ts, R, M) -> MetricsRecord:
    ok = [o for o in outcomes if not o.failed]
    correct = [o for o in ok if o.L == n_true]
    tau = np.concatenate([o.tau_errors for o in correct]) / Ts if correct else np.zeros(0)
    nu = np.concatenate([o.nu_errors for o in correct]) * (R * M * Ts) if correct else np.zeros(0)
    hits = [bool(np.all(np.abs(o.tau_errors) < 0.5 * Ts)) for o in correct]
    return MetricsRecord(
        estimator=name,
        snr_db=float(snr_db),
        delta=None if delta is None else float(delta),
        K=int(K or R),
        threshold=threshold,
        mean_L=float(np.mean([o.L for o in ok])) if ok else float("nan"),
        pd=len(correct) / len(ok) if ok else float("nan"),
        rmese_tau=rmese(tau),
        rmese_nu=rmese(nu) if M > 1 else float("nan"),
        mean_seconds=float(np.mean([o.seconds for o in ok])) if ok else float("nan"),
        runs=len(outcomes),
        hit_rate=float(np.mean(hits)) if hits else float("nan"),
        n_correct=len(correct),
        n_failed=len(outcomes) - len(ok),
        n_nonconverged=sum(not o.converged for o in outcomes),
    )


# ---------------------------------------------------------------------------
# distribution validation


def statistic_samples(hypothesis: str, runs: int, snr_db=17.0, K=None, R=128, seed=0):
    """Grid-maximum statistic ``rho`` in delay-only scenes with ``K = R`` by default.

    ``"h0"`` uses pure noise, ``"h1"`` one unit-magnitude component at
    ``tau = 0``.  The search covers the ``R`` sampling instants, which are
    mutually orthogonal candidates when ``K = R``.  Values ``rho <= 1``
    (pruned) are reported as 0.
    """
    if hypothesis not in ("h0", "h1"):
        raise ConfigurationError("hypothesis must be 'h0' or 'h1'")
    cfg = core.IardConfig.on_grid(assumption="a1", threshold="standard")
    out = np.empty(runs)
    for i in range(runs):
        probe_seed, phase_seed, noise_seed = run_seed(seed, 0, i).generate_state(3)
        probe = make_ofdm_probe(int(K or R), R, 1.0, int(probe_seed))
        if hypothesis == "h0":
            comps = []
        else:
            phase = np.random.default_rng(phase_seed).uniform(0, 2 * np.pi)
            comps = [(np.exp(1j * phase), DispersionParams(0.0))]
        meas = synthesize(SyntheticScene(comps, snr_db, int(noise_seed)), probe)
        state = core.ModelState.empty(meas, AtomDictionary(probe), cfg)
        out[i] = core.grid_rho(state).max()
    return np.where(out > 1, out, 0.0)


def model_cdf(hypothesis, snr_db=17.0, N=128):
    if hypothesis == "h0":
        return lambda x: gumbel_cdf(x, N)
    eta = 2 * 10 ** (snr_db / 10)
    return lambda x: h1_cdf(x, eta)


def model_pdf(hypothesis, snr_db=17.0, N=128):
    if hypothesis == "h0":
        return lambda x: h0_pdf(x, N)
    eta = 2 * 10 ** (snr_db / 10)
    return lambda x: h1_pdf(x, eta)


def validate_distribution(hypothesis, snr_db, runs, seed=0, K=None, R=128, bins=60):
    """Rows ``(rho, model_pdf, empirical_pdf)`` on a histogram grid and the KS distance."""
    samples = statistic_samples(hypothesis, runs, snr_db, K, R, seed)
    kept = samples[samples > 1]
    edges = np.linspace(1.0, max(kept.max() if kept.size else 2.0, 2.0) * 1.05, bins + 1)
    hist, _ = np.histogram(kept, edges)
    density = hist / (runs * np.diff(edges))
    centers = 0.5 * (edges[1:] + edges[:-1])
    pdf = model_pdf(hypothesis, snr_db, R)(centers)
    ks = ks_distance(kept, model_cdf(hypothesis, snr_db, R)) if kept.size > 1 else float("nan")
    return np.column_stack([centers, pdf, density]), ks


# ---------------------------------------------------------------------------
# driver


def run_experiment(spec: ExperimentSpec, progress=None, return_outcomes=False):
    """Evaluate every cell of ``spec``; returns a list of :class:`MetricsRecord`.

    With ``return_outcomes`` the per-run outcomes are returned as well, keyed
    by ``(cell index, estimator)``.
    """
    table, raw = [], {}
    M = spec.blocks
    for ci, (snr, delta, K, threshold) in enumerate(spec.cells()):
        if spec.scenario == "h0h1-validation":
            for hyp in ("h0", "h1"):
                samples = statistic_samples(hyp, spec.runs, snr, K, spec.R, spec.base_seed + ci)
                kept = samples[samples > 1]
                ks = ks_distance(kept, model_cdf(hyp, snr, spec.R)) if kept.size > 1 else float("nan")
                nan = float("nan")
                table.append(MetricsRecord(hyp, float(snr), None, int(K or spec.R), threshold, float(np.mean(samples > 1)), nan, nan, nan, nan, spec.runs, ks=ks))
            continue
        n_true = 2 if spec.scenario == "superresolution" else 1
        outcomes = {name: [] for name in spec.estimators}
        configs = {name: spec.config_for(name, threshold) for name in spec.estimators}
        for run in range(spec.runs):
            probe, scene = make_scene(spec, snr, delta, K, run_seed(spec.base_seed, ci, run))
            for name in spec.estimators:
                outcomes[name].append(evaluate_run(name, scene, probe, M, configs[name], configs[name].doppler_model))
            if progress is not None:
                progress(ci, run)
        for name in spec.estimators:
            table.append(summarize(name, outcomes[name], n_true, snr, delta, K, threshold, spec.Ts, spec.R, M))
            raw[(ci, name)] = outcomes[name]
    return (table, raw) if return_outcomes else table


def table_csv(table, timing=True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS + EXTRA_COLUMNS)
    for rec in table:
        writer.writerow(rec.row(timing))
    return buf.getvalue()


def emit_results(table, path, spec: ExperimentSpec | None = None, timing=True):
    """Write the table to ``path`` (CSV) and a JSON manifest next to it.

    Wall-clock times are the only non-deterministic column; ``timing=False``
    leaves it blank so that repeated runs produce byte-identical files.
    """
    if not table:
        raise ConfigurationError("empty results table")
    path = Path(path)
    text = table_csv(table, timing)
    path.write_text(text)
    manifest = {
        "csv": path.name,
        "csv_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "rows": len(table),
    }
    if spec is not None:
        manifest.update(
            spec=spec.to_dict(),
            spec_sha256=spec.content_hash(),
            seeds={"base_seed": spec.base_seed, "per_run": "SeedSequence([base_seed, cell, run])"},
        )
    mpath = path.with_suffix(".json")
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path, mpath


def with_runs(spec: ExperimentSpec, runs: int) -> ExperimentSpec:
    return replace(spec, runs=runs)
