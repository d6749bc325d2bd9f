"""Rephasing photon-echo observables of the dimer.

The signal is organised as a list of Liouville pathways.  Each pathway
carries a complex weight (pulse amplitudes times the dipole projections,
optionally isotropically averaged) and names the chi element it samples,
the resonance ``m`` of the coherence time and the optical coherence that
radiates during the echo time.  Peak amplitudes, time-domain signals and
spectra are all contractions of that list.
"""

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exciton import PulseSpec, pulse_amplitude
from .units import C_CM_PER_FS, wavenumber_to_angular

EXCITONS = ("a", "b")
COHERENCES = ("ag", "bg", "fa", "fb")
# radiating coherence -> index of the exciton line it shares a frequency with
EMIT_LINE = {"ag": 0, "fb": 0, "bg": 1, "fa": 1}

_ISO = np.array([[4.0, -1.0, -1.0], [-1.0, 4.0, -1.0], [-1.0, -1.0, 4.0]]) / 30.0


@dataclass(frozen=True)
class DephasingSet:
    """Free-induction dephasing rates (fs^-1) of the optical coherences."""

    gamma: dict

    def __post_init__(self):
        g = {}
        for k in COHERENCES:
            if k not in self.gamma:
                raise ValueError(f"missing dephasing rate for {k!r}")
            v = float(self.gamma[k])
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"dephasing rate {k} must be >= 0, got {v}")
            g[k] = v
        object.__setattr__(self, "gamma", g)

    def __getitem__(self, key):
        try:
            return self.gamma[key]
        except KeyError:
            raise ValueError(f"unknown coherence label {key!r}") from None

    @classmethod
    def uniform(cls, gamma):
        return cls({k: gamma for k in COHERENCES})

    @classmethod
    def from_model(cls, model):
        """Every coherence at the mean of the alpha-g and beta-g rates."""
        return cls.uniform(0.5 * (model.rates["ag"] + model.rates["bg"]))


@dataclass(frozen=True)
class PolarizationConfig:
    """Lab-frame polarizations of the three pulses and the local oscillator."""

    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    e4: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        for attr in ("e1", "e2", "e3", "e4"):
            v = np.asarray(getattr(self, attr), dtype=float).reshape(-1)
            if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ValueError(f"{attr} must be a unit 3-vector")
            object.__setattr__(self, attr, v)

    @property
    def vectors(self):
        return (self.e1, self.e2, self.e3, self.e4)


_Z = np.array([0.0, 0.0, 1.0])
_X = np.array([1.0, 0.0, 0.0])
ZZZZ = PolarizationConfig(_Z, _Z, _Z, _Z, "zzzz")
ZZXX = PolarizationConfig(_Z, _Z, _X, _X, "zzxx")
CONFIGS = {"zzzz": ZZZZ, "zzxx": ZZXX}


@dataclass(frozen=True)
class PulseSequence:
    """Three pulses sharing an envelope width.

    Parameters
    ----------
    carriers : tuple of float
        Carrier frequencies in cm^-1.
    sigma : float
        Gaussian width in fs.
    lambda_scale : float
        Field amplitude scale.
    mode : {'gaussian', 'equal'}
        ``'gaussian'`` evaluates each amplitude from the pulse spectrum;
        ``'equal'`` sets every amplitude to ``common``.
    common : complex
        Amplitude used in ``'equal'`` mode.
    """

    carriers: tuple
    sigma: float
    lambda_scale: float = 1.0
    mode: str = "equal"
    common: complex = -1j

    def __post_init__(self):
        carriers = tuple(float(c) for c in self.carriers)
        if len(carriers) != 3:
            raise ValueError("need three carrier frequencies")
        if self.mode not in ("gaussian", "equal"):
            raise ValueError(f"unknown amplitude mode {self.mode!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "carriers", carriers)
        object.__setattr__(self, "common", complex(self.common))

    def coefficients(self, eigen):
        """(3, 2) array: amplitude of pulse k at the alpha and beta lines."""
        if self.mode == "equal":
            return np.full((3, 2), self.common, dtype=complex)
        out = np.empty((3, 2), dtype=complex)
        for k, carrier in enumerate(self.carriers):
            spec = PulseSpec(_Z, carrier, self.sigma, self.lambda_scale)
            out[k, 0] = pulse_amplitude(spec, eigen.omega_alpha_g)
            out[k, 1] = pulse_amplitude(spec, eigen.omega_beta_g)
        return out


def isotropic_average(mu_a, mu_b, mu_c, mu_d, config):
    """Orientational average of ``(mu_a.e1)(mu_b.e2)(mu_c.e3)(mu_d.e4)``."""
    e1, e2, e3, e4 = config.vectors
    lab = np.array([(e1 @ e2) * (e3 @ e4), (e1 @ e3) * (e2 @ e4), (e1 @ e4) * (e2 @ e3)])
    mol = np.array(
        [
            (mu_a @ mu_b) * (mu_c @ mu_d),
            (mu_a @ mu_c) * (mu_b @ mu_d),
            (mu_a @ mu_d) * (mu_b @ mu_c),
        ]
    )
    return float(lab @ _ISO @ mol)


def _projection(mu_a, mu_b, mu_c, mu_d, config):
    e1, e2, e3, e4 = config.vectors
    return float((mu_a @ e1) * (mu_b @ e2) * (mu_c @ e3) * (mu_d @ e4))


# ---------------------------------------------------------------------------
# pathways


@dataclass(frozen=True)
class Pathway:
    """One term of the rephasing signal.

    ``m`` is the line excited by the first pulse (coherence-time
    resonance), ``n`` the echo-time resonance, ``q`` the line of the second
    pulse, ``emit`` the radiating coherence and ``chi`` the sampled element.
    """

    m: int
    q: int
    n: int
    chi: str
    emit: str
    weight: complex


def _dipole_products(eigen, n):
    """(e3 dipole, e4 dipole, sign, emit, third-pulse line, chi row) per n.

    ``chi row`` is the waiting-time state seen by the third pulse, or
    ``None`` for the ground-state (-1 and chi_gg) entries.
    """
    ag, bg, fa, fb = (eigen.dipole(k) for k in COHERENCES)
    if n == 0:
        return [
            # ground-state bleach and stimulated emission at alpha
            (ag, ag, +1.0, "ag", 0, "gg"),
            (ag, ag, -1.0, "ag", 0, "aa"),
            # excited-state absorption from beta
            (fb, fb, +1.0, "fb", 0, "bb"),
            # alpha-beta coherence: absorption to f and emission to g
            (fa, fb, +1.0, "fb", 1, "ab"),
            (bg, ag, -1.0, "ag", 1, "ab"),
        ]
    return [
        (bg, bg, +1.0, "bg", 1, "gg"),
        (bg, bg, -1.0, "bg", 1, "bb"),
        (fa, fa, +1.0, "fa", 1, "aa"),
        (fb, fa, +1.0, "fa", 0, "ba"),
        (ag, bg, -1.0, "bg", 0, "ba"),
    ]


def pathways(eigen, config, coefficients, averaging=True):
    """All rephasing pathways with their complex weights.

    Parameters
    ----------
    eigen : EigenDimer
    config : PolarizationConfig
    coefficients : array_like, shape (3, 2)
        Pulse amplitudes, see :meth:`PulseSequence.coefficients`.
    averaging : bool
        Replace dipole projections by isotropic averages.

    Returns
    -------
    list of Pathway
    """
    coeffs = np.asarray(coefficients, dtype=complex)
    dip = (eigen.mu_alpha_g, eigen.mu_beta_g)
    proj = isotropic_average if averaging else _projection
    out = []
    for m in (0, 1):
        for q in (0, 1):
            col = EXCITONS[q] + EXCITONS[m]
            for n in (0, 1):
                for d3, d4, sign, emit, r, row in _dipole_products(eigen, n):
                    pref = -1j * coeffs[0, m] * coeffs[1, q] * coeffs[2, r]
                    w = pref * sign * proj(dip[m], dip[q], d3, d4, config)
                    out.append(Pathway(m, q, n, row + col, emit, w))
                    if row == "gg" and q == m:
                        # the "-1" entry, i.e. minus the ground-state survival
                        out.append(Pathway(m, q, n, "gggg", emit, -w))
    return out


def amplitude_weights(paths):
    """Collapse pathways into ``{(m, n): {chi label: weight}}``."""
    table = {(m, n): {} for m in (0, 1) for n in (0, 1)}
    for p in paths:
        row = table[(p.m, p.n)]
        row[p.chi] = row.get(p.chi, 0.0) + p.weight
    return table


COHERENCE_POPULATION = tuple(
    a + b + c + d
    for a, b in (("a", "a"), ("b", "b"), ("g", "g"), ("a", "b"), ("b", "a"))
    for c, d in (("a", "a"), ("b", "b"), ("a", "b"), ("b", "a"))
    if (a == b) != (c == d)
)


# ---------------------------------------------------------------------------
# peak amplitudes


class PeakAmplitudeSet:
    """Complex amplitudes ``S[k, m, n]`` of the four resonances.

    ``m`` indexes the coherence-time line and ``n`` the echo-time line,
    0 for alpha and 1 for beta.
    """

    def __init__(self, times, S, config="custom", carriers=None):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        S = np.asarray(S, dtype=complex)
        if S.shape != (times.size, 2, 2):
            raise ValueError(f"S must have shape ({times.size}, 2, 2), got {S.shape}")
        if not np.all(np.isfinite(S)):
            raise ValueError("peak amplitudes must be finite")
        self.times = times
        self.S = S
        self.config = config
        self.carriers = None if carriers is None else tuple(float(c) for c in carriers)

    def __getitem__(self, key):
        m, n = (EXCITONS.index(ch) for ch in key)
        return self.S[:, m, n]

    def __add__(self, other):
        return PeakAmplitudeSet(self.times, self.S + other.S, self.config, self.carriers)

    def scaled(self, factor):
        return PeakAmplitudeSet(self.times, self.S * factor, self.config, self.carriers)

    def to_csv(self, path):
        header = ["T_fs"]
        for m in EXCITONS:
            for n in EXCITONS:
                header += [f"S_{m}{n}_re", f"S_{m}{n}_im"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, T in enumerate(self.times):
                row = [format(T, ".17g")]
                for z in self.S[k].reshape(-1):
                    row += [format(z.real, ".17g"), format(z.imag, ".17g")]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, config="custom"):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        S = (data[:, 1::2] + 1j * data[:, 2::2]).reshape(-1, 2, 2)
        return cls(data[:, 0], S, config)


def peak_amplitudes_general(chi, eigen, pulses, config, averaging=True):
    """Four peak amplitudes from the full pathway sum.

    Parameters
    ----------
    chi : ProcessMatrix
    eigen : EigenDimer
    pulses : PulseSequence or array_like of shape (3, 2)
        Either a pulse sequence or a ready table of amplitudes.
    config : PolarizationConfig
    averaging : bool

    Returns
    -------
    PeakAmplitudeSet
    """
    if isinstance(pulses, PulseSequence):
        coeffs, carriers = pulses.coefficients(eigen), pulses.carriers
    else:
        coeffs, carriers = np.asarray(pulses, dtype=complex), None
    table = amplitude_weights(pathways(eigen, config, coeffs, averaging))
    S = np.zeros((len(chi), 2, 2), dtype=complex)
    for (m, n), row in table.items():
        for label, w in row.items():
            if w != 0:
                S[:, m, n] += w * chi[label]
    return PeakAmplitudeSet(chi.times, S, config.name, carriers)


def is_homodimer_geometry(eigen, tol=1e-10):
    scale = np.linalg.norm(eigen.mu_alpha_g) ** 2 + np.linalg.norm(eigen.mu_beta_g) ** 2
    return (
        abs(eigen.mu_alpha_g @ eigen.mu_beta_g) <= tol * scale
        and np.allclose(eigen.mu_f_alpha, eigen.mu_alpha_g, atol=tol * np.sqrt(scale))
        and np.allclose(eigen.mu_f_beta, -eigen.mu_beta_g, atol=tol * np.sqrt(scale))
    )


def peak_amplitudes_homodimer(chi, eigen, config, pulses=None):
    """Closed-form isotropically averaged amplitudes of a homodimer.

    Only the two standard configurations ``zzzz`` and ``zzxx`` are
    covered.  ``pulses`` defaults to an amplitude of ``-i`` everywhere.
    """
    if not is_homodimer_geometry(eigen):
        raise ValueError("closed-form amplitudes need homodimer geometry")
    name = config if isinstance(config, str) else config.name
    if name not in CONFIGS:
        raise ValueError(f"no closed form for configuration {name!r}")
    if pulses is None:
        pulses = PulseSequence((0.0, 0.0, 0.0), 1.0)
    C = pulses.coefficients(eigen) if isinstance(pulses, PulseSequence) else np.asarray(pulses)
    a = float(eigen.mu_alpha_g @ eigen.mu_alpha_g)
    b = float(eigen.mu_beta_g @ eigen.mu_beta_g)
    x = a * b
    if name == "zzzz":
        diag, cross, coh = 1 / 5, 1 / 15, -2 / 15
    else:
        diag, cross, coh = 1 / 15, 2 / 15, 1 / 15

    def c(k1, k2, k3):
        return -1j * C[0, k1] * C[1, k2] * C[2, k3]

    S = np.zeros((len(chi), 2, 2), dtype=complex)
    S[:, 0, 0] = c(0, 0, 0) * (
        diag * a * a * (chi["ggaa"] - 1 - chi["aaaa"]) + cross * x * chi["bbaa"]
    ) + c(0, 1, 1) * coh * x * chi["abba"]
    S[:, 0, 1] = c(0, 0, 1) * (
        cross * x * (chi["ggaa"] - 1 - chi["bbaa"]) + diag * a * a * chi["aaaa"]
    ) + c(0, 1, 0) * coh * x * chi["baba"]
    S[:, 1, 1] = c(1, 1, 1) * (
        diag * b * b * (chi["ggbb"] - 1 - chi["bbbb"]) + cross * x * chi["aabb"]
    ) + c(1, 0, 0) * coh * x * chi["baab"]
    S[:, 1, 0] = c(1, 1, 0) * (
        cross * x * (chi["ggbb"] - 1 - chi["aabb"]) + diag * b * b * chi["bbbb"]
    ) + c(1, 0, 1) * coh * x * chi["abab"]
    carriers = pulses.carriers if isinstance(pulses, PulseSequence) else None
    return PeakAmplitudeSet(chi.times, S, name, carriers)


# ---------------------------------------------------------------------------
# line shapes and spectra

_K = 2.0 * np.pi * C_CM_PER_FS  # rad/fs per cm^-1


def coherence_propagator(label, interval, deph, eigen):
    """``Theta(tau) exp((-i w - Gamma) tau)`` for the coherence ``label``.

    ``label`` is one of ``'ag'``, ``'bg'``, ``'fa'``, ``'fb'`` (oscillating
    at ``-w``) or their reverses ``'ga'``, ``'gb'``, ``'af'``, ``'bf'``.
    ``Theta(0) = 1``.
    """
    if label in COHERENCES:
        w = float(wavenumber_to_angular(eigen.transition_energy(label)))
        gamma = deph[label]
    elif label[::-1] in COHERENCES:
        w = -float(wavenumber_to_angular(eigen.transition_energy(label[::-1])))
        gamma = deph[label[::-1]]
    else:
        raise ValueError(f"unknown coherence label {label!r}")
    tau = np.asarray(interval, dtype=float)
    val = np.where(tau >= 0, np.exp((-1j * w - gamma) * np.maximum(tau, 0.0)), 0.0)
    return val if val.ndim else complex(val)


def lineshape_tau(axis, center, gamma):
    """``1 / (i (w_tau - w_m - i Gamma))`` on a cm^-1 axis, Gamma in fs^-1."""
    d = np.asarray(axis, dtype=float) - center
    return 1.0 / (1j * _K * d + gamma)


def lineshape_t(axis, center, gamma):
    """``1 / (i (-w_t + w_n - i Gamma))`` on a cm^-1 axis, Gamma in fs^-1."""
    d = np.asarray(axis, dtype=float) - center
    return 1.0 / (-1j * _K * d + gamma)


def uniform_axis(center, span, spacing):
    """Axis of spacing ``spacing`` covering ``center +- span/2``."""
    n = int(round(span / spacing))
    return center - 0.5 * n * spacing + spacing * np.arange(n + 1)


@dataclass
class Spectrum2D:
    """Complex 2D spectrum at one waiting time.

    ``values[i, j]`` is the signal at ``(omega_tau[i], omega_t[j])``.
    """

    omega_tau: np.ndarray
    omega_t: np.ndarray
    values: np.ndarray
    T: float
    config: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omega_tau = np.asarray(self.omega_tau, dtype=float)
        self.omega_t = np.asarray(self.omega_t, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.omega_tau.size, self.omega_t.size):
            raise ValueError("values shape does not match the axes")
        for name, ax in (("omega_tau", self.omega_tau), ("omega_t", self.omega_t)):
            if ax.size < 2:
                raise ValueError(f"{name} needs at least two points")
            step = np.diff(ax)
            if np.any(step <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            if np.max(np.abs(step - step[0])) > 1e-9 * max(1.0, abs(step[0])):
                raise ValueError(f"{name} must be uniformly spaced")

    def to_files(self, stem, digits=12):
        """Write ``stem.csv`` (long form) and ``stem.json`` (metadata)."""
        tau, t = np.meshgrid(self.omega_tau, self.omega_t, indexing="ij")
        table = np.column_stack(
            [tau.ravel(), t.ravel(), self.values.real.ravel(), self.values.imag.ravel()]
        )
        np.savetxt(
            f"{stem}.csv",
            table,
            delimiter=",",
            fmt=["%.10g", "%.10g", f"%.{digits}g", f"%.{digits}g"],
            header="omega_tau,omega_t,re,im",
            comments="",
        )
        side = {
            "T_fs": self.T,
            "config": self.config,
            "omega_tau": _axis_meta(self.omega_tau),
            "omega_t": _axis_meta(self.omega_t),
            "units": {"omega": "cm^-1", "T": "fs"},
        }
        side.update(self.meta)
        with open(f"{stem}.json", "w") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)

    @classmethod
    def from_files(cls, stem):
        with open(f"{stem}.json") as fh:
            side = json.load(fh)
        data = np.loadtxt(f"{stem}.csv", delimiter=",", skiprows=1, ndmin=2)
        n_tau, n_t = side["omega_tau"]["n"], side["omega_t"]["n"]
        if data.shape[0] != n_tau * n_t:
            raise ValueError(f"{stem}.csv: expected {n_tau * n_t} rows, found {data.shape[0]}")
        vals = (data[:, 2] + 1j * data[:, 3]).reshape(n_tau, n_t)
        tau = data[::n_t, 0]
        t = data[:n_t, 1]
        meta = {k: v for k, v in side.items() if k not in ("T_fs", "config", "omega_tau", "omega_t", "units")}
        return cls(tau, t, vals, float(side["T_fs"]), side["config"], meta)


def _axis_meta(ax):
    return {"start": float(ax[0]), "step": float(ax[1] - ax[0]), "n": int(ax.size)}


def _line_gammas(deph):
    return (deph["ag"], deph["bg"])


def assemble_spectrum(peaks, deph, omega_tau, omega_t, eigen=None, centers=None, k=0):
    """``i sum_mn l_tau,m(w_tau) l_t,n(w_t) S_mn(T)`` at the k-th waiting time.

    Line centers come from ``centers`` (cm^-1) or from ``eigen``.
    """
    if centers is None:
        if eigen is None:
            raise ValueError("need either eigen or centers")
        centers = (eigen.omega_alpha_g, eigen.omega_beta_g)
    omega_tau = np.asarray(omega_tau, dtype=float)
    omega_t = np.asarray(omega_t, dtype=float)
    for name, ax in (("omega_tau", omega_tau), ("omega_t", omega_t)):
        if not (ax[0] <= min(centers) and max(centers) <= ax[-1]):
            warnings.warn(f"{name} axis does not bracket both resonances", stacklevel=2)
    gam = _line_gammas(deph)
    A = np.column_stack([lineshape_tau(omega_tau, centers[m], gam[m]) for m in (0, 1)])
    B = np.column_stack([lineshape_t(omega_t, centers[n], gam[n]) for n in (0, 1)])
    vals = 1j * (A @ peaks.S[k] @ B.T)
    return Spectrum2D(omega_tau, omega_t, vals, float(peaks.times[k]), peaks.config)


def polarization_time_domain(chi, eigen, pulses, config, tau, t, deph, averaging=True):
    """Rephasing signal ``P(tau, T, t)`` for every waiting time in ``chi``.

    Each pathway contributes ``weight * chi(T) * G_gm(tau) * G_emit(t)``,
    where ``G_gm`` is the coherence left by the first pulse and ``G_emit``
    the radiating coherence.  Returns an array of shape
    ``(len(chi), len(tau), len(t))``.
    """
    if isinstance(pulses, PulseSequence):
        coeffs = pulses.coefficients(eigen)
    else:
        coeffs = np.asarray(pulses, dtype=complex)
    tau = np.asarray(tau, dtype=float)
    t = np.asarray(t, dtype=float)
    amp = {}
    for p in pathways(eigen, config, coeffs, averaging):
        if p.weight == 0:
            continue
        key = (p.m, p.emit)
        amp[key] = amp.get(key, 0.0) + p.weight * chi[p.chi]
    g_tau = [coherence_propagator("g" + EXCITONS[m], tau, deph, eigen) for m in (0, 1)]
    out = np.zeros((len(chi), tau.size, t.size), dtype=complex)
    for (m, emit), c in amp.items():
        outer = np.outer(g_tau[m], coherence_propagator(emit, t, deph, eigen))
        out += c[:, None, None] * outer[None]
    return out


def one_sided_fourier(P, tau, t, omega_tau, omega_t):
    """``i sum_tau sum_t dtau dt exp(-i w_tau tau) exp(i w_t t) P`` (Riemann).

    ``tau`` and ``t`` must be uniform grids starting at zero.
    """
    tau = np.asarray(tau, dtype=float)
    t = np.asarray(t, dtype=float)
    dtau, dt = tau[1] - tau[0], t[1] - t[0]
    Et = np.exp(-1j * np.outer(wavenumber_to_angular(omega_tau), tau))
    Ew = np.exp(1j * np.outer(t, wavenumber_to_angular(omega_t)))
    return 1j * dtau * dt * (Et @ P @ Ew)


def porphyrin_axis(center=16633.0, span=1050.0, spacing=1.0):
    return uniform_axis(center, span, spacing)
