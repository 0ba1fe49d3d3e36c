"""Probe waveforms, dictionary atoms and synthetic multipath measurements.

A single multipath component with delay ``tau`` and Doppler ``nu`` is observed
over ``M`` consecutive probe blocks of ``R`` samples each.  Sample ``r`` of
block ``m`` is

    s[r - tau/Ts] * exp(j 2 pi nu r m Ts)        (``doppler_model="product"``, the default)
    s[r - tau/Ts] * exp(j 2 pi nu m R Ts)        (``doppler_model="conventional"``)

and the ``N = R*M`` samples are stacked with ``r`` running fastest.  Delays are
circular and realised as a phase ramp on the probe spectrum, which is exact
for the band-limited OFDM probe.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError

DOPPLER_MODELS = ("product", "conventional")


@dataclass(frozen=True)
class ProbeSignal:
    """Time-domain OFDM probe of ``R`` samples with ``K`` active subcarriers."""

    samples: np.ndarray
    sample_period: float
    num_subcarriers: int
    rng_seed: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def spectrum(self) -> np.ndarray:
        return np.fft.fft(self.samples)

    @property
    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real)


@dataclass(frozen=True)
class DispersionParams:
    """Delay ``tau`` in seconds and Doppler shift ``doppler`` in Hz."""

    tau: float
    doppler: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.tau) and np.isfinite(self.doppler)):
            raise DomainError(f"non-finite dispersion parameters {self}")


@dataclass(frozen=True)
class Measurement:
    """Observed vector with its (known) noise precision.

    ``noise_precision`` is a positive scalar for white noise or a Hermitian
    positive-definite ``N x N`` matrix.
    """

    y: np.ndarray
    noise_precision: float | np.ndarray
    sample_period: float = 1.0
    R: int | None = None
    M: int = 1

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex).ravel()
        object.__setattr__(self, "y", y)
        R = self.R if self.R is not None else y.size // self.M
        object.__setattr__(self, "R", int(R))
        if R * self.M != y.size:
            raise ConfigurationError(f"N={y.size} is not R*M={R}*{self.M}")
        lam = self.noise_precision
        if np.ndim(lam) == 0:
            lam = float(np.real(lam))
            if not lam > 0:
                raise DomainError("noise precision must be positive")
        else:
            lam = np.asarray(lam, dtype=complex)
            if lam.shape != (y.size, y.size):
                raise ConfigurationError(f"noise precision has shape {lam.shape}, expected {(y.size, y.size)}")
            if not np.allclose(lam, lam.conj().T, atol=1e-12 * np.abs(lam).max()):
                raise DomainError("noise precision is not Hermitian")
            try:
                np.linalg.cholesky(lam)
            except np.linalg.LinAlgError:
                raise DomainError("noise precision is not positive definite") from None
        object.__setattr__(self, "noise_precision", lam)

    @property
    def N(self) -> int:
        return self.y.size

    @property
    def white(self) -> bool:
        return np.ndim(self.noise_precision) == 0


@dataclass(frozen=True)
class SyntheticScene:
    """Ground-truth components ``[(weight, DispersionParams), ...]`` plus noise level."""

    components: list = field(default_factory=list)
    snr_db: float = 20.0
    seed: int = 0

    def __post_init__(self):
        comps = [(complex(w), p) for w, p in self.components]
        for w, _ in comps:
            if abs(w) == 0:
                raise DomainError("scene components must have non-zero weight")
        object.__setattr__(self, "components", comps)


def make_ofdm_probe(K: int, R: int, Ts: float = 1.0, seed: int = 0) -> ProbeSignal:
    """OFDM probe with ``K`` unit-magnitude, random-phase subcarriers.

    The active subcarriers are the ``K`` DFT bins closest to DC (signed
    frequencies ``-K//2 .. K - K//2 - 1``), so ``K < R`` keeps the sampling
    rate and shrinks the occupied bandwidth around the carrier.
    """
    if not (isinstance(K, (int, np.integer)) and isinstance(R, (int, np.integer))):
        raise ConfigurationError("K and R must be integers")
    if K <= 0 or K > R:
        raise ConfigurationError(f"need 1 <= K <= R, got K={K}, R={R}")
    if not Ts > 0:
        raise ConfigurationError("sample period must be positive")
    rng = np.random.default_rng(seed)
    spectrum = np.zeros(R, dtype=complex)
    spectrum[(np.arange(K) - K // 2) % R] = np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=K))
    return ProbeSignal(np.fft.ifft(spectrum), float(Ts), int(K), int(seed))


class AtomDictionary:
    """Continuous dictionary of delay(-Doppler) atoms built on one probe.

    Besides generating atoms this class evaluates inner products ``s(theta)^H x``
    cheaply, both at single points and on a whole delay-Doppler grid, using the
    probe spectrum directly.
    """

    def __init__(self, probe: ProbeSignal, M: int = 1, doppler_model: str = "product"):
        if M < 1:
            raise ConfigurationError("M must be >= 1")
        if doppler_model not in DOPPLER_MODELS:
            raise ConfigurationError(f"doppler_model must be one of {DOPPLER_MODELS}")
        self.probe = probe
        self.R = len(probe)
        self.M = int(M)
        self.Ts = probe.sample_period
        self.doppler_model = doppler_model
        self._spec = probe.spectrum
        self._active = np.flatnonzero(np.abs(self._spec) > 0)
        # signed bin frequencies; fractional delays interpolate band-limited around DC
        self._k = np.fft.fftfreq(self.R, 1.0 / self.R)
        self._freq = self._k[self._active]
        m = np.arange(self.M)[:, None]
        if doppler_model == "product":
            self._phase = m * np.arange(self.R)[None, :] * self.Ts
        else:
            self._phase = np.repeat(m * self.R * self.Ts, self.R, axis=1)
        # ||s(theta)||^2 is the same for every theta: delay and Doppler are unitary
        self.atom_energy = float(np.sum(np.abs(self._spec) ** 2) / self.R * self.M)

    @property
    def N(self) -> int:
        return self.R * self.M

    @property
    def delay_span(self) -> float:
        return self.R * self.Ts

    def doppler_phasor(self, nu) -> np.ndarray:
        """``(M, R)`` matrix of Doppler phase factors (or ``(n, M, R)`` for an array of ``nu``)."""
        nu = np.asarray(nu, dtype=float)
        if nu.ndim == 0 and self.M > 1:
            # row m is the m-th power of row 1, so build it by repeated products
            step = np.exp(2j * np.pi * float(nu) * self._phase[1])
            D = np.empty((self.M, self.R), dtype=complex)
            D[0] = 1.0
            np.cumprod(np.broadcast_to(step, (self.M - 1, self.R)), axis=0, out=D[1:])
            return D
        return np.exp(2j * np.pi * nu[..., None, None] * self._phase)

    def delayed(self, tau: float) -> np.ndarray:
        ramp = np.exp(-2j * np.pi * self._k * (tau / self.delay_span))
        return np.fft.ifft(self._spec * ramp)

    def atom(self, tau: float, nu: float = 0.0) -> np.ndarray:
        base = self.delayed(tau)
        if self.M == 1:
            # slow-time index m = 0 carries no Doppler phase in either model
            return base
        return (self.doppler_phasor(nu) * base).ravel()

    def atoms(self, thetas) -> np.ndarray:
        thetas = list(thetas)
        out = np.empty((self.N, len(thetas)), dtype=complex)
        for i, th in enumerate(thetas):
            out[:, i] = self.atom(th.tau, th.doppler)
        return out

    def _fold(self, x, nu):
        """Collapse the slow-time axis: ``z[r] = sum_m conj(D[m, r]) x[m, r]``."""
        X = np.asarray(x).reshape(self.M, self.R)
        if self.M == 1:
            return X[0] if np.ndim(nu) == 0 else np.broadcast_to(X[0], np.shape(nu) + (self.R,))
        D = self.doppler_phasor(nu)
        return np.sum(D.conj() * X, axis=-2)

    def project(self, x, tau: float, nu: float = 0.0) -> complex:
        """``s(tau, nu)^H x`` for a single point."""
        z = self._fold(x, nu)
        Z = np.fft.fft(z)
        ramp = np.exp(2j * np.pi * self._freq * (tau / self.delay_span))
        return complex(np.sum(self._spec[self._active].conj() * Z[self._active] * ramp) / self.R)

    def project_delays(self, x, taus, nu: float = 0.0) -> np.ndarray:
        """``s(tau, nu)^H x`` for an array of delays sharing one Doppler value."""
        z = self._fold(x, nu)
        c = self._spec[self._active].conj() * np.fft.fft(z)[self._active]
        taus = np.asarray(taus, dtype=float)
        ramp = np.exp(2j * np.pi * np.multiply.outer(taus / self.delay_span, self._freq))
        return ramp @ c / self.R

    def project_grid(self, x, oversampling: int, nus=None, folded=None) -> np.ndarray:
        """Inner products on the grid ``tau = j*Ts/oversampling`` for all ``nus``.

        Returns an array of shape ``(len(nus), R*oversampling)``.  ``folded``
        may carry precomputed ``conj(D)`` for the Doppler grid, laid out as
        ``(R, len(nus), M)``.
        """
        P = int(oversampling)
        nus = np.zeros(1) if nus is None else np.atleast_1d(np.asarray(nus, dtype=float))
        X = np.asarray(x).reshape(self.M, self.R)
        if self.M == 1:
            z = np.broadcast_to(X[0], (nus.size, self.R))
        else:
            Dc = folded if folded is not None else self.doppler_phasor(nus).conj().transpose(2, 0, 1)
            z = (Dc @ np.ascontiguousarray(X.T)[:, :, None])[..., 0].T
        c = self._spec.conj() * np.fft.fft(z, axis=-1)
        padded = np.zeros(c.shape[:-1] + (self.R * P,), dtype=complex)
        padded[..., self._k.astype(int) % (self.R * P)] = c
        return P * np.fft.ifft(padded, axis=-1)


def atom(probe: ProbeSignal, theta: DispersionParams, M: int = 1, doppler_model: str = "product") -> np.ndarray:
    """Vectorised atom ``s(theta)`` of length ``R*M`` (``r`` fastest)."""
    span = len(probe) * probe.sample_period
    if not (0.0 <= theta.tau < span):
        raise DomainError(f"delay {theta.tau} outside the unambiguous range [0, {span})")
    return AtomDictionary(probe, M, doppler_model).atom(theta.tau, theta.doppler)


def _reference_energy(dictionary):
    return dictionary.atom_energy


def synthesize(scene: SyntheticScene, probe: ProbeSignal, M: int = 1, doppler_model: str = "product") -> Measurement:
    """Superimpose the scene's components and add white circular Gaussian noise.

    The noise draw is rescaled so that
    ``10 log10(||sum w s||^2 / ||xi||^2) + 10 log10(N)`` equals ``scene.snr_db``
    exactly.  An empty scene uses the energy of one unit-weight atom as the
    signal reference.  The returned precision is ``N / ||xi||^2``.
    """
    dic = AtomDictionary(probe, M, doppler_model)
    N = dic.N
    clean = np.zeros(N, dtype=complex)
    for w, th in scene.components:
        clean += w * atom(probe, th, M, doppler_model)
    power = float(np.vdot(clean, clean).real) if scene.components else _reference_energy(dic)
    rng = np.random.default_rng(scene.seed)
    xi = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / np.sqrt(2)
    target = power * N / 10 ** (scene.snr_db / 10)
    xi *= np.sqrt(target / np.vdot(xi, xi).real)
    return Measurement(clean + xi, N / target, probe.sample_period, dic.R, dic.M)


def realized_snr_db(measurement: Measurement, clean: np.ndarray) -> float:
    noise = measurement.y - clean
    return float(10 * np.log10(np.vdot(clean, clean).real / np.vdot(noise, noise).real) + 10 * np.log10(measurement.N))


# ---------------------------------------------------------------------------
# configuration and CSV I/O


def load_config(path) -> dict:
    """Read a JSON or YAML configuration file into a dict."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return data


def scene_from_config(cfg: dict):
    """Build ``(probe, scene, M, doppler_model)`` from a config mapping.

    Keys: ``K, R, M, Ts, snr_db, seed, doppler_model`` and ``components``, a
    list of ``{tau, doppler, weight_mag, weight_phase}`` where ``tau`` is in
    seconds and ``weight_phase`` is radians or ``"random"``.
    """
    try:
        R = int(cfg["R"])
        K = int(cfg.get("K", R))
    except KeyError as exc:
        raise ConfigurationError(f"missing config key {exc}") from None
    M = int(cfg.get("M", 1))
    Ts = float(cfg.get("Ts", 1.0))
    seed = int(cfg.get("seed", 0))
    probe_seed, phase_seed, noise_seed = np.random.SeedSequence(seed).generate_state(3)
    rng = np.random.default_rng(phase_seed)
    comps = []
    for c in cfg.get("components", []) or []:
        mag = float(c.get("weight_mag", 1.0))
        phase = c.get("weight_phase", "random")
        phase = rng.uniform(0, 2 * np.pi) if phase == "random" else float(phase)
        comps.append((mag * np.exp(1j * phase), DispersionParams(float(c.get("tau", 0.0)), float(c.get("doppler", 0.0)))))
    probe = make_ofdm_probe(K, R, Ts, int(probe_seed))
    scene = SyntheticScene(comps, float(cfg.get("snr_db", 20.0)), int(noise_seed))
    return probe, scene, M, cfg.get("doppler_model", "product")


def write_measurement_csv(measurement: Measurement, path, **metadata):
    """Write ``index,re,im`` rows.  Scalar metadata goes into leading ``#`` lines."""
    meta = {"R": measurement.R, "M": measurement.M, "Ts": measurement.sample_period}
    if measurement.white:
        meta["noise_precision"] = measurement.noise_precision
    meta.update(metadata)
    with open(path, "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(["index", "re", "im"])
        for i, v in enumerate(measurement.y):
            writer.writerow([i, repr(float(v.real)), repr(float(v.imag))])


def read_measurement_csv(path):
    """Return ``(y, metadata)`` from a file written by :func:`write_measurement_csv`."""
    meta, rows = {}, []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    reader = csv.DictReader(body)
    for row in reader:
        rows.append((int(row["index"]), float(row["re"]) + 1j * float(row["im"])))
    rows.sort()
    return np.array([v for _, v in rows], dtype=complex), meta
