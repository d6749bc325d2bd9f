"""Run configuration: sectioned ``key = value`` text files.

Every section and key is optional; missing values fall back to the
porphyrin-dimer example.  Errors carry the file line of the offending key.
"""

import configparser
import re
from dataclasses import dataclass, field

import numpy as np

from .exciton import homodimer, SiteDimer
from .process import (
    PORPHYRIN_BATH,
    PORPHYRIN_TEMPERATURE,
    PORPHYRIN_RATES,
    RedfieldModel,
)
from .spectroscopy import CONFIGS, DephasingSet, PulseSequence
from .units import fwhm_to_sigma

T_C = 47.5  # fs, about half the alpha-beta beat period
DEFAULT_MULTIPLES = (0.5, 1.0, 1.5, 2.0, 4.5, 5.0)

DEFAULT_TEXT = f"""\
[dimer]
omega_A = 16633
omega_B = 16633
J = 175
d = 1.0
phi_deg = 65

[bath]
model = redfield
temperature = {PORPHYRIN_TEMPERATURE:g}
k_down = {PORPHYRIN_RATES['aabb']:g}
r_abab = {PORPHYRIN_RATES['abab']:g}
r_ag = {PORPHYRIN_RATES['ag']:g}
r_bg = {PORPHYRIN_RATES['bg']:g}
r_fa = {PORPHYRIN_RATES['fa']:g}
r_fb = {PORPHYRIN_RATES['fb']:g}
r_fg = {PORPHYRIN_RATES['fg']:g}
reorganization_cm = {PORPHYRIN_BATH['reorganization_cm']:g}
cutoff_cm = {PORPHYRIN_BATH['cutoff_cm']:g}

[pulses]
carriers = 16546, 16546, 16546
fwhm_fs = 20
lambda = 1
amplitude_mode = equal
common = -1j
configs = zzzz, zzxx

[grid]
t_c_fs = {T_C:g}
t_multiples = {", ".join(f"{m:g}" for m in DEFAULT_MULTIPLES)}
omega_center = 16633
omega_span = 1050
omega_spacing = 1

[output]
directory = out
digits = 12

[noise]
level = 0
seed = 0

[inversion]
root_tol = 1e-3
ridge = 0
kappa_threshold = 15
"""


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    site: SiteDimer
    d: float
    phi: float
    model: RedfieldModel
    dephasing: DephasingSet
    pulses: PulseSequence
    configs: tuple
    times: np.ndarray
    omega_center: float
    omega_span: float
    omega_spacing: float
    output: str
    digits: int
    noise_level: float
    seed: int
    root_tol: float
    ridge: float
    kappa_threshold: float
    source: str = "<defaults>"
    raw: dict = field(default_factory=dict)

    def manifest(self):
        """Every parameter as plain JSON-compatible data."""
        return {
            "source": self.source,
            "dimer": {
                "omega_A": self.site.omega_A,
                "omega_B": self.site.omega_B,
                "J": self.site.J,
                "d_A": self.site.d_A.tolist(),
                "d_B": self.site.d_B.tolist(),
                "d": self.d,
                "phi_deg": float(np.degrees(self.phi)),
            },
            "bath": {
                "rates_fs": dict(self.model.rates),
                "leak_fs": dict(self.model.leak),
                "temperature_K": self.model.temperature,
                "omega_alpha_beta_cm": self.model.omega_alpha_beta,
                "bath_meta": dict(self.model.bath_meta),
                "dephasing_fs": dict(self.dephasing.gamma),
            },
            "pulses": {
                "carriers_cm": list(self.pulses.carriers),
                "sigma_fs": self.pulses.sigma,
                "lambda": self.pulses.lambda_scale,
                "amplitude_mode": self.pulses.mode,
                "common": [self.pulses.common.real, self.pulses.common.imag],
                "configs": list(self.configs),
            },
            "grid": {
                "T_fs": self.times.tolist(),
                "omega_center": self.omega_center,
                "omega_span": self.omega_span,
                "omega_spacing": self.omega_spacing,
            },
            "output": {"directory": self.output, "digits": self.digits},
            "noise": {"level": self.noise_level, "seed": self.seed},
            "inversion": {
                "root_tol": self.root_tol,
                "ridge": self.ridge,
                "kappa_threshold": self.kappa_threshold,
            },
        }


def _line_of(text, section, key):
    cur = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip().lower()
        elif cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.I):
            return n
    return None


class _Reader:
    def __init__(self, parser, text, source):
        self.p = parser
        self.text = text
        self.source = source

    def where(self, section, key):
        n = _line_of(self.text, section, key)
        loc = f"{self.source}:{n}" if n else self.source
        return f"{loc}: [{section}] {key}"

    def get(self, section, key, conv=float, default=None):
        if not self.p.has_option(section, key):
            if default is None:
                raise ConfigError(f"{self.source}: [{section}] {key} is required")
            return default
        raw = self.p.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{self.where(section, key)} = {raw!r}: {exc}") from None

    def check(self, ok, section, key, message):
        if not ok:
            raise ConfigError(f"{self.where(section, key)}: {message}")


def _floats(raw):
    return [float(x) for x in raw.replace(";", ",").split(",") if x.strip()]


def _names(raw):
    return [x.strip().lower() for x in raw.split(",") if x.strip()]


def load_config(path=None, text=None):
    """Parse a configuration file (or text) layered over the defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    parser.read_string(DEFAULT_TEXT, source="<defaults>")
    source = "<text>"
    user_text = ""
    if path is not None:
        source = str(path)
        try:
            with open(path) as fh:
                user_text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    elif text is not None:
        user_text = text
    try:
        parser.read_string(user_text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return _build(_Reader(parser, user_text, source))


def _build(r):
    dim = "dimer"
    wA, wB = r.get(dim, "omega_a"), r.get(dim, "omega_b")
    J = r.get(dim, "j")
    d = r.get(dim, "d")
    phi_deg = r.get(dim, "phi_deg")
    r.check(wA > 0, dim, "omega_a", "site energies must be positive")
    r.check(wB > 0, dim, "omega_b", "site energies must be positive")
    r.check(d > 0, dim, "d", "dipole norm must be positive")
    r.check(0 <= phi_deg <= 180, dim, "phi_deg", "angle must lie in [0, 180]")
    phi = np.radians(phi_deg)
    site = homodimer(wA, J, phi, d)
    if wB != wA:
        site = SiteDimer(wA, wB, J, site.d_A, site.d_B)

    # the alpha-beta gap follows from the site parameters
    gap = -2.0 * float(np.hypot(J, 0.5 * (wA - wB)))

    b = "bath"
    kind = r.get(b, "model", str).strip().lower()
    r.check(kind in ("redfield", "unitary"), b, "model", "use 'redfield' or 'unitary'")
    meta = {
        "reorganization_cm": r.get(b, "reorganization_cm"),
        "cutoff_cm": r.get(b, "cutoff_cm"),
    }
    if kind == "unitary":
        model = RedfieldModel.unitary(gap)
    else:
        temp = r.get(b, "temperature")
        r.check(temp > 0, b, "temperature", "must be positive")
        rates = {
            "aabb": r.get(b, "k_down"),
            "abab": r.get(b, "r_abab"),
            "ag": r.get(b, "r_ag"),
            "bg": r.get(b, "r_bg"),
            "fa": r.get(b, "r_fa"),
            "fb": r.get(b, "r_fb"),
            "fg": r.get(b, "r_fg"),
        }
        for k, v in rates.items():
            r.check(v >= 0, b, "k_down" if k == "aabb" else "r_" + k, "rates must be >= 0")
        leak = {"a": r.get(b, "leak_a", default=0.0), "b": r.get(b, "leak_b", default=0.0)}
        try:
            if r.p.has_option(b, "k_up"):
                rates["bbaa"] = r.get(b, "k_up")
                model = RedfieldModel(rates, temp, gap, bath_meta=meta, leak=leak)
                model.check_detailed_balance()
            else:
                model = RedfieldModel.from_downhill(rates, temp, gap, bath_meta=meta, leak=leak)
        except ValueError as exc:
            raise ConfigError(f"{r.where(b, 'k_up')}: {exc}") from None

    if r.p.has_option(b, "gamma"):
        g = r.get(b, "gamma")
        r.check(g >= 0, b, "gamma", "must be >= 0")
        deph = DephasingSet.uniform(g)
    elif kind == "unitary":
        # optical lines keep the default width so the spectra stay resolvable
        deph = DephasingSet.uniform(0.5 * (PORPHYRIN_RATES["ag"] + PORPHYRIN_RATES["bg"]))
    else:
        deph = DephasingSet.from_model(model)

    p = "pulses"
    carriers = r.get(p, "carriers", _floats)
    r.check(len(carriers) == 3, p, "carriers", "need three values")
    fwhm = r.get(p, "fwhm_fs")
    r.check(fwhm > 0, p, "fwhm_fs", "must be positive")
    mode = r.get(p, "amplitude_mode", str).strip().lower()
    r.check(mode in ("equal", "gaussian"), p, "amplitude_mode", "use 'equal' or 'gaussian'")
    common = r.get(p, "common", lambda s: complex(s.replace(" ", "")))
    r.check(abs(common.real) <= 1e-12 * max(abs(common), 1e-300) and common != 0,
            p, "common", "must be a nonzero purely imaginary number")
    pulses = PulseSequence(carriers, fwhm_to_sigma(fwhm), r.get(p, "lambda"), mode, common)
    configs = tuple(r.get(p, "configs", _names))
    for c in configs:
        r.check(c in CONFIGS, p, "configs", f"unknown polarization configuration {c!r}")

    gsec = "grid"
    if r.p.has_option(gsec, "t_fs"):
        times = np.array(r.get(gsec, "t_fs", _floats))
    else:
        tc = r.get(gsec, "t_c_fs")
        times = tc * np.array(r.get(gsec, "t_multiples", _floats))
    key = "t_fs" if r.p.has_option(gsec, "t_fs") else "t_multiples"
    r.check(times.size > 0, gsec, key, "no waiting times given")
    r.check(np.all(times > 0), gsec, key, "waiting times must be positive (no pulse overlap)")
    r.check(np.all(np.diff(times) > 0), gsec, key, "waiting times must increase")
    center = r.get(gsec, "omega_center")
    span = r.get(gsec, "omega_span")
    spacing = r.get(gsec, "omega_spacing")
    r.check(spacing > 0, gsec, "omega_spacing", "must be positive")
    r.check(span > spacing, gsec, "omega_span", "must exceed the spacing")

    return RunConfig(
        site=site,
        d=d,
        phi=phi,
        model=model,
        dephasing=deph,
        pulses=pulses,
        configs=configs,
        times=times,
        omega_center=center,
        omega_span=span,
        omega_spacing=spacing,
        output=r.get("output", "directory", str),
        digits=r.get("output", "digits", int),
        noise_level=r.get("noise", "level"),
        seed=r.get("noise", "seed", int),
        root_tol=r.get("inversion", "root_tol"),
        ridge=r.get("inversion", "ridge"),
        kappa_threshold=r.get("inversion", "kappa_threshold"),
        source=r.source,
        raw={s: dict(r.p.items(s)) for s in r.p.sections()},
    )
