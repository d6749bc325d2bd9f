"""Batch commands behind the command-line interface."""

import glob
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .exciton import diagonalize
from .inversion import ProtocolError, condition_number, run_protocol, stacked_system
from .process import ProcessMatrix, propagate_chi, validate_constraints
from .spectroscopy import (
    CONFIGS,
    Spectrum2D,
    assemble_spectrum,
    peak_amplitudes_general,
    uniform_axis,
)
from . import plotting

log = logging.getLogger(__name__)

THREADS_ENV = "DIMERQPT_THREADS"
CHI_ELEMENTS = ("aaaa", "bbaa", "bbbb", "aabb", "ggaa", "ggbb", "abab", "baab")


def n_threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map(fn, items):
    n = n_threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def spectrum_stem(config, T):
    return f"spectrum_{config}_T{T:08.3f}"


@dataclass
class Simulation:
    eigen: object
    chi: ProcessMatrix
    peaks: dict
    spectra: dict
    axis: np.ndarray


def simulate(cfg: RunConfig):
    """Oracle chi, peak amplitudes and spectra for every (T, configuration)."""
    eigen = diagonalize(cfg.site)
    chi = propagate_chi(cfg.model, eigen, cfg.times)
    peaks = {
        c: peak_amplitudes_general(chi, eigen, cfg.pulses, CONFIGS[c]) for c in cfg.configs
    }
    axis = uniform_axis(cfg.omega_center, cfg.omega_span, cfg.omega_spacing)
    jobs = [(c, k) for c in cfg.configs for k in range(len(cfg.times))]
    # one child seed per job keeps the noise independent of the thread count
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(jobs))

    def work(item):
        (c, k), seed = item
        spec = assemble_spectrum(peaks[c], cfg.dephasing, axis, axis, eigen, k=k)
        if cfg.noise_level > 0:
            rng = np.random.default_rng(seed)
            scale = cfg.noise_level * np.max(np.abs(spec.values))
            noise = rng.normal(size=spec.values.shape) + 1j * rng.normal(size=spec.values.shape)
            spec.values = spec.values + scale * noise
        spec.meta = {"noise_level": cfg.noise_level}
        return spec

    made = _map(work, list(zip(jobs, seeds)))
    spectra = {c: [] for c in cfg.configs}
    for (c, _), spec in zip(jobs, made):
        spectra[c].append(spec)
    return Simulation(eigen, chi, peaks, spectra, axis)


def _derived_manifest(cfg, eigen):
    coeffs = cfg.pulses.coefficients(eigen)
    return {
        "omega_alpha_cm": eigen.omega_alpha,
        "omega_beta_cm": eigen.omega_beta,
        "theta_rad": eigen.theta,
        "mu_alpha_g": eigen.mu_alpha_g.tolist(),
        "mu_beta_g": eigen.mu_beta_g.tolist(),
        "mu_f_alpha": eigen.mu_f_alpha.tolist(),
        "mu_f_beta": eigen.mu_f_beta.tolist(),
        "pulse_amplitudes": [[[z.real, z.imag] for z in row] for row in coeffs],
    }


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")


def cmd_simulate(cfg: RunConfig, out=None, dry_run=False, figures=True, ascii_preview=False):
    """Write spectra, peak amplitudes, the oracle chi and a manifest."""
    out = out or cfg.output
    _ensure_dir(out)
    manifest = cfg.manifest()
    manifest["output"]["directory"] = out
    eigen = diagonalize(cfg.site)
    manifest["derived"] = _derived_manifest(cfg, eigen)
    manifest["dry_run"] = bool(dry_run)
    if dry_run:
        _write_json(os.path.join(out, "manifest.json"), manifest)
        return manifest

    sim = simulate(cfg)
    files = []
    sim.chi.to_csv(os.path.join(out, "chi_oracle.csv"))
    files.append("chi_oracle.csv")
    spec_dir = os.path.join(out, "spectra")
    _ensure_dir(spec_dir)
    for c in cfg.configs:
        name = f"peaks_{c}.csv"
        sim.peaks[c].to_csv(os.path.join(out, name))
        files.append(name)
        for spec in sim.spectra[c]:
            stem = spectrum_stem(c, spec.T)
            spec.to_files(os.path.join(spec_dir, stem), digits=cfg.digits)
            files += [f"spectra/{stem}.csv", f"spectra/{stem}.json"]

    if figures:
        fig_dir = os.path.join(out, "figures")
        _ensure_dir(fig_dir)
        centers = (eigen.omega_alpha_g, eigen.omega_beta_g)
        for c in cfg.configs:
            for spec in sim.spectra[c]:
                plotting.plot_spectrum(spec, os.path.join(fig_dir, spectrum_stem(c, spec.T) + ".png"),
                                       centers)
            plotting.plot_amplitudes(sim.peaks[c], os.path.join(fig_dir, f"peaks_{c}.png"))
        plotting.plot_chi_traces(sim.chi, os.path.join(fig_dir, "chi_oracle.png"))
        files.append("figures/")

    if ascii_preview:
        first = sim.spectra[cfg.configs[0]][0]
        print(f"Re S  {first.config}  T={first.T:g} fs  (omega_tau up, omega_t right)")
        print(plotting.ascii_heatmap(first.values.real))

    manifest["files"] = files
    _write_json(os.path.join(out, "manifest.json"), manifest)
    return manifest


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"cannot serialise {type(x)}")


def load_spectra(in_dir):
    """``{config: [Spectrum2D, ...]}`` from a simulate output directory."""
    spec_dir = os.path.join(in_dir, "spectra")
    if not os.path.isdir(spec_dir):
        spec_dir = in_dir
    stems = sorted(p[:-5] for p in glob.glob(os.path.join(spec_dir, "spectrum_*.json")))
    spectra = {}
    for stem in stems:
        spec = Spectrum2D.from_files(stem)
        spectra.setdefault(spec.config, []).append(spec)
    return spectra


def _read_manifest(in_dir):
    path = os.path.join(in_dir, "manifest.json")
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        return json.load(fh)


def invert_data(spectra, manifest=None, **kw):
    """Run the protocol with normalisation taken from a manifest when present."""
    absolute = manifest is not None
    d = manifest["dimer"]["d"] if manifest else 1.0
    common = complex(*manifest["pulses"]["common"]) if manifest else -1j
    opts = {}
    if manifest:
        inv = manifest["inversion"]
        opts = dict(root_tol=inv["root_tol"], ridge=inv["ridge"],
                    kappa_threshold=inv["kappa_threshold"])
    opts.update(kw)
    return run_protocol(spectra, d=d, C=common, absolute=absolute, **opts)


def cmd_invert(in_dir, out_dir, figures=True):
    """Fit, extract the angle and reconstruct chi from a simulate directory."""
    if not os.path.isdir(in_dir):
        raise FileNotFoundError(f"input directory {in_dir} does not exist")
    spectra = load_spectra(in_dir)
    if not spectra:
        raise ProtocolError(1, f"no spectra found in {in_dir}")
    manifest = _read_manifest(in_dir)
    report = invert_data(spectra, manifest)
    _ensure_dir(out_dir)
    rec = report.reconstruction
    rec.chi.to_csv(os.path.join(out_dir, "chi_reconstructed.csv"))
    rec.chi_lstsq.to_csv(os.path.join(out_dir, "chi_lstsq.csv"))
    for cfg, amps in report.amplitudes.items():
        amps.to_csv(os.path.join(out_dir, f"fitted_peaks_{cfg}.csv"))
    summary = report.summary()
    summary["angle"] = {
        "xi_per_T": report.angle.xi_per_T,
        "roots_first": [[[z.real, z.imag] for z in r] for r in report.angle.roots_first],
        "roots_second": [[[z.real, z.imag] for z in r] for r in report.angle.roots_second],
        "times_fs": report.angle.times,
    }
    summary["fits"] = {
        cfg: [
            {"T_fs": f.T, "omega_alpha_g": f.omega_alpha_g, "omega_beta_g": f.omega_beta_g,
             "gamma_fs": f.gamma, "n_evals": f.n_evals, "converged": f.converged}
            for f in fits
        ]
        for cfg, fits in report.fits.items()
    }
    _write_json(os.path.join(out_dir, "report.json"), summary)
    if figures:
        oracle_path = os.path.join(in_dir, "chi_oracle.csv")
        if os.path.exists(oracle_path):
            plotting.plot_chi_traces(ProcessMatrix.from_csv(oracle_path),
                                     os.path.join(out_dir, "chi_traces.png"), rec.chi)
        else:
            plotting.plot_chi_traces(rec.chi, os.path.join(out_dir, "chi_traces.png"))
    return report


def stability_table(phi_min, phi_max, steps, threshold=15.0):
    """Rows of (phi, phi/pi, phi in degrees, kappa, threshold, kappa <= threshold)."""
    if not (0 <= phi_min < phi_max <= np.pi):
        raise ValueError("need 0 <= phi_min < phi_max <= pi")
    if steps < 2:
        raise ValueError("need at least two steps")
    rows = []
    for phi in np.linspace(phi_min, phi_max, steps):
        try:
            k = condition_number(stacked_system(phi))
        except ValueError:
            k = np.inf
        rows.append((phi, phi / np.pi, np.degrees(phi), k, threshold, bool(k <= threshold)))
    return rows


def write_stability(rows, path=None):
    header = "phi_rad,phi_over_pi,phi_deg,kappa,threshold,below_threshold"
    lines = [header] + [
        f"{r[0]:.17g},{r[1]:.17g},{r[2]:.17g},{r[3]:.17g},{r[4]:g},{int(r[5])}" for r in rows
    ]
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# round trip


def _chi_check(rec, oracle, rel=0.01, abs_tol=0.01):
    worst = 0.0
    failures = []
    for lb in CHI_ELEMENTS:
        ref, got = oracle[lb], rec[lb]
        err = np.abs(got - ref)
        big = np.abs(ref) > 0.05
        bad = np.where(big, err > rel * np.abs(ref), err > abs_tol)
        score = np.where(big, err / (rel * np.maximum(np.abs(ref), 1e-300)), err / abs_tol)
        worst = max(worst, float(np.max(score)))
        if np.any(bad):
            failures.append(lb)
    return worst, failures


def beat_phase_error(S_cross, times, omega):
    """Largest deviation of the per-step phase advance from ``omega dT``.

    Uses successive differences so that any T-independent offset in the
    cross-peak amplitude drops out.  The (alpha, beta) cross peak is fed
    by the beta-alpha coherence and advances with ``+omega_alpha_beta``;
    its mirror advances with ``-omega_alpha_beta``.
    """
    D = np.diff(S_cross)
    if D.size < 2:
        return 0.0
    ratio = D[1:] / D[:-1]
    dT = np.diff(times)
    if not np.allclose(dT, dT[0]):
        raise ValueError("phase check needs a uniform waiting-time grid")
    expected = omega * dT[0]
    err = np.angle(ratio * np.exp(-1j * expected))
    return float(np.max(np.abs(err)))


def roundtrip(cfg: RunConfig, out=None):
    """Simulate, invert and compare against the oracle.

    Returns ``{criterion: {"pass": bool, ...}}``.
    """
    sim = simulate(cfg)
    if out:
        cmd_simulate(cfg, out)
    if set(cfg.configs) != {"zzzz", "zzxx"}:
        raise ProtocolError(1, "the round trip needs both zzzz and zzxx")
    manifest = cfg.manifest()
    report = invert_data(sim.spectra, manifest)
    rec = report.reconstruction
    res = {}

    dphi = abs(np.degrees(report.angle.phi - cfg.phi))
    res["angle"] = {"pass": bool(dphi <= 0.1), "phi_deg": report.phi_deg, "error_deg": dphi}
    res["xi_spread"] = {
        "pass": bool(report.angle.spread < 1e-3 and not report.angle.failed_times),
        "spread": report.angle.spread,
        "failed_times": report.angle.failed_times,
    }
    worst, fails = _chi_check(rec.chi, sim.chi)
    res["chi"] = {"pass": not fails, "worst_score": worst, "failed_elements": fails}

    fid = []
    for c in ("zzzz", "zzxx"):
        true = sim.peaks[c].S
        for k, f in enumerate(report.fits[c]):
            scale = np.max(np.abs(true[k]))
            fid.append(1 - float(np.max(np.abs(f.S - true[k]))) / scale if scale else 1.0)
    res["fit_fidelity"] = {"pass": bool(min(fid) >= 0.99), "min_fidelity": min(fid)}

    cons = validate_constraints(sim.chi, 1e-10)
    res["physicality"] = {"pass": cons.ok, **cons.max_violation()}
    res["conditioning"] = {
        "pass": not rec.low_confidence,
        "kappa": rec.kappa,
        "threshold": cfg.kappa_threshold,
    }
    if all(v == 0 for v in cfg.model.rates.values()):
        from .units import wavenumber_to_angular

        w = float(wavenumber_to_angular(sim.eigen.omega_alpha_beta))
        S = report.amplitudes["zzxx"].S
        diag_var = max(
            float(np.ptp(np.abs(S[:, m, m])) / np.max(np.abs(S[:, m, m]))) for m in (0, 1)
        )
        try:
            tt = report.amplitudes["zzxx"].times
            perr = max(beat_phase_error(S[:, 0, 1], tt, w), beat_phase_error(S[:, 1, 0], tt, -w))
        except ValueError:
            perr = np.nan
        res["unitary_beats"] = {
            "pass": bool(diag_var < 1e-6 and perr < 1e-4),
            "diagonal_variation": diag_var,
            "phase_error_rad": perr,
        }
    res["flags"] = report.flags
    return res


def roundtrip_passed(res):
    return all(v["pass"] for k, v in res.items() if isinstance(v, dict) and "pass" in v)


__all__ = [
    "Simulation",
    "simulate",
    "cmd_simulate",
    "cmd_invert",
    "stability_table",
    "write_stability",
    "roundtrip",
    "roundtrip_passed",
    "load_spectra",
    "invert_data",
    "beat_phase_error",
]
