"""Process tomography of a homodimer from polarization-resolved spectra.

Pipeline: fit the four Lorentzian peaks of every spectrum, recover the
inter-dipole angle from two quadratic identities in ``xi = tan^2(phi/2)``,
then invert the linear relations between peak amplitudes and chi.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.ndimage import gaussian_filter, gaussian_filter1d
from scipy.signal import find_peaks

from .process import ProcessMatrix, validate_constraints
from .spectroscopy import PeakAmplitudeSet, lineshape_t, lineshape_tau
from .units import C_CM_PER_FS

_K = 2.0 * np.pi * C_CM_PER_FS

UNKNOWNS = ("aaaa", "bbaa", "bbbb", "aabb", "re_abab", "re_baab", "im_abab", "im_baab")


class ProtocolError(RuntimeError):
    """Failure of one protocol stage; ``stage`` is 1 (fit), 2 (angle) or 3 (chi)."""

    def __init__(self, stage, message):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


# ---------------------------------------------------------------------------
# peak fitting


@dataclass
class PeakFitResult:
    """Fitted line centres (cm^-1), width (fs^-1) and complex amplitudes."""

    omega_alpha_g: float
    omega_beta_g: float
    gamma: float
    S: np.ndarray
    residual_norm: float
    relative_residual: float
    converged: bool
    n_evals: int
    T: float = np.nan
    config: str = "custom"
    flags: list = field(default_factory=list)


def _design(omega_tau, omega_t, centers, gamma):
    A = np.column_stack([lineshape_tau(omega_tau, c, gamma) for c in centers])
    B = np.column_stack([lineshape_t(omega_t, c, gamma) for c in centers])
    return A, B


def _project(Y, A, B):
    """Best amplitudes for fixed lines and the explained energy.

    Model ``Y = i A S B^T``.  Orthonormal bases of both designs keep the
    explained energy bounded by ``|Y|^2`` even for nearly coincident lines.
    """
    Qa, Ra = np.linalg.qr(A)
    Qb, Rb = np.linalg.qr(B)
    W = Qa.conj().T @ Y @ Qb.conj()
    explained = float(np.vdot(W, W).real)
    with np.errstate(all="ignore"):
        S = -1j * np.linalg.solve(Rb, np.linalg.solve(Ra, W).T).T
    return S, explained


def _initial_guess(spec):
    """Line centres from smoothed marginal maxima and a width from the half maximum."""
    Y = np.abs(spec.values)
    spacing = spec.omega_tau[1] - spec.omega_tau[0]
    centers = []
    for axis, marginal in ((spec.omega_tau, Y.sum(axis=1)), (spec.omega_t, Y.sum(axis=0))):
        smooth = gaussian_filter1d(marginal, max(1.0, 0.01 * marginal.size), mode="nearest")
        idx, props = find_peaks(smooth, prominence=1e-3 * np.ptp(smooth))
        if idx.size >= 2:
            top = idx[np.argsort(props["prominences"])[-2:]]
            centers.append(np.sort(axis[top]))
    if centers:
        c = np.mean(centers, axis=0)
    else:
        c = None

    i, j = np.unravel_index(np.argmax(gaussian_filter(Y, 2.0)), Y.shape)
    row = gaussian_filter1d(Y[:, j], 2.0) ** 2
    half = row[i] / 2
    lo, hi = i, i
    while lo > 0 and row[lo] > half:
        lo -= 1
    while hi < row.size - 1 and row[hi] > half:
        hi += 1
    gamma_cm = max(0.5 * (hi - lo) * spacing, spacing)
    return c, gamma_cm


def fit_peaks(spec, init_hint=None, max_evals=2000, restarts=3, seed=0, tol=1e-10):
    """Fit ``i sum_mn l_tau,m l_t,n S_mn`` to a gridded spectrum.

    The amplitudes enter linearly and are projected out, so the simplex
    search runs over the two line centres and the shared width only.

    Parameters
    ----------
    spec : Spectrum2D
    init_hint : dict, optional
        ``omega_alpha_g``, ``omega_beta_g`` (cm^-1) and ``gamma`` (fs^-1)
        used as the starting point instead of the detected one.
    max_evals : int
        Objective evaluations per simplex run.
    restarts : int
        Extra runs from jittered starting points.
    seed : int
        Seed of the jitter.
    tol : float
        Relative objective change regarded as converged.

    Returns
    -------
    PeakFitResult
    """
    Y = spec.values
    tau, t = spec.omega_tau, spec.omega_t
    spacing = min(tau[1] - tau[0], t[1] - t[0])
    lo = max(tau[0], t[0])
    hi = min(tau[-1], t[-1])
    norm2 = float(np.vdot(Y, Y).real)
    flags = []

    hint_c = hint_g = None
    if init_hint is not None:
        hint_c = np.array([init_hint["omega_alpha_g"], init_hint["omega_beta_g"]], float)
        if "gamma" in init_hint:
            hint_g = init_hint["gamma"] / _K

    if norm2 == 0:
        c = hint_c if hint_c is not None else np.array([np.nan, np.nan])
        g = hint_g * _K if hint_g is not None else np.nan
        return PeakFitResult(
            c[0], c[1], g, np.zeros((2, 2), complex), 0.0, 0.0, True, 0,
            spec.T, spec.config, ["empty"],
        )

    det_c, det_g = _initial_guess(spec)
    if det_c is None and hint_c is None:
        raise ProtocolError(1, f"T={spec.T} {spec.config}: could not locate two peaks")
    c0 = hint_c if hint_c is not None else det_c
    g0 = hint_g if hint_g is not None else det_g

    def objective(x):
        A, B = _design(tau, t, x[:2], _K * x[2])
        _, explained = _project(Y, A, B)
        return (norm2 - explained) / norm2

    bounds = [(lo, hi), (lo, hi), (0.1 * spacing, hi - lo)]
    rng = np.random.default_rng(seed)
    best = None
    n_evals = 0
    starts = [np.array([c0[0], c0[1], g0])]
    for _ in range(restarts):
        jit = rng.normal(size=3) * np.array([0.2 * g0, 0.2 * g0, 0.1 * g0])
        starts.append(starts[0] + jit)
    for k, x0 in enumerate(starts):
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        step = np.array([max(0.1 * g0, spacing), max(0.1 * g0, spacing), 0.1 * g0])
        simplex = np.vstack([x0] + [x0 + np.eye(3)[i] * step[i] for i in range(3)])
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options=dict(
                initial_simplex=simplex, maxfev=max_evals, xatol=1e-6 * spacing,
                fatol=tol * 1e-4,
            ),
        )
        n_evals += res.nfev
        if best is None or res.fun < best.fun:
            best = res
        # a clean model fit cannot be improved by restarting
        if k == 0 and res.fun < 1e-12:
            break

    x = best.x
    order = np.argsort(x[:2])
    centers = x[:2][order]
    gamma = _K * x[2]
    A, B = _design(tau, t, centers, gamma)
    S, _ = _project(Y, A, B)
    resid = Y - 1j * (A @ S @ B.T)
    rnorm = float(np.linalg.norm(resid))
    # below the floor set by rounding of the stored grid the simplex may
    # wander without meeting its tolerances; the fit is still exact
    converged = bool(best.success or best.fun < 1e-12)
    if not converged:
        flags.append("not_converged")
    if centers[1] - centers[0] < x[2]:
        flags.append("degenerate")
        warnings.warn(
            f"T={spec.T} {spec.config}: resonances closer than their width", stacklevel=2
        )
    return PeakFitResult(
        float(centers[0]), float(centers[1]), float(gamma), S, rnorm,
        rnorm / np.sqrt(norm2), converged, n_evals, spec.T, spec.config, flags,
    )


# ---------------------------------------------------------------------------
# linear systems


def dipole_strengths(phi, d=1.0):
    """(mu_alpha_g^2, mu_beta_g^2) of a homodimer."""
    return 2 * d**2 * np.cos(phi / 2) ** 2, 2 * d**2 * np.sin(phi / 2) ** 2


def _block(p, x, sign):
    """8x6 block for one half of the spectrum; ``p`` is mu^4 of its diagonal line."""
    return np.array(
        [
            [2 / 5 * p, p / 5 - x / 15, 0, 2 * x / 15, 0, 0],
            [2 / 15 * p, p / 15 - 2 * x / 15, 0, -x / 15, 0, 0],
            [-p / 5 + x / 15, 2 * x / 15, 2 * x / 15, 0, 0, 0],
            [-p / 15 + 2 * x / 15, 4 * x / 15, -x / 15, 0, 0, 0],
            [0, 0, 0, 0, 0, -sign * 2 * x / 15],
            [0, 0, 0, 0, 0, sign * x / 15],
            [0, 0, 0, 0, -sign * 2 * x / 15, 0],
            [0, 0, 0, 0, sign * x / 15, 0],
        ]
    )


@dataclass(frozen=True)
class InversionSystem:
    """Real linear relations ``M chi = rhs`` between chi and the amplitudes.

    ``rhs`` is built from ``S / (i C^3)``; see :func:`system_rhs`.
    """

    M: np.ndarray
    labels: tuple
    phi: float
    d: float
    C: complex

    @property
    def norm_factor(self):
        """The real number ``i C^3`` that the amplitudes are divided by."""
        return (1j * self.C**3).real


def build_systems(phi, d=1.0, C=-1j):
    """Left-half and right-half systems (8x6 each) for angle ``phi``.

    Unknowns: ``[aaaa, bbaa, re_abab, re_baab, im_abab, im_baab]`` on the
    left half and ``[bbbb, aabb, ...]`` on the right half.  The ground-state
    columns are removed with the trace rule and ``chi_baba``, ``chi_abba``
    through Hermiticity.
    """
    if not (0 < phi < np.pi) or np.isclose(np.sin(phi), 0.0, atol=1e-12):
        raise ValueError("phi must lie strictly between 0 and pi (one exciton is dark)")
    if abs((1j * complex(C) ** 3).imag) > 1e-12 * abs(C) ** 3:
        raise ValueError("the common pulse amplitude must be purely imaginary")
    a, b = dipole_strengths(phi, d)
    x = a * b
    lhs = InversionSystem(
        _block(a * a, x, +1), ("aaaa", "bbaa", "re_abab", "re_baab", "im_abab", "im_baab"),
        phi, d, complex(C),
    )
    rhs = InversionSystem(
        _block(b * b, x, -1), ("bbbb", "aabb", "re_abab", "re_baab", "im_abab", "im_baab"),
        phi, d, complex(C),
    )
    return lhs, rhs


def stacked_system(phi, d=1.0, C=-1j):
    """The 16x8 matrix over :data:`UNKNOWNS`."""
    lhs, rhs = build_systems(phi, d, C)
    M = np.zeros((16, 8))
    M[:8, [0, 1, 4, 5, 6, 7]] = lhs.M
    M[8:, [2, 3, 4, 5, 6, 7]] = rhs.M
    return InversionSystem(M, UNKNOWNS, phi, d, complex(C))


def condition_number(system):
    """sigma_max / sigma_min; ``inf`` when the smallest singular value vanishes."""
    M = system.M if isinstance(system, InversionSystem) else np.asarray(system)
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] <= np.finfo(float).eps * s[0]:
        return np.inf
    return float(s[0] / s[-1])


def kappa(phi):
    return condition_number(stacked_system(phi))


def _norm_amplitudes(amps, C):
    """``S / (i C^3)`` for both configurations, shape (nT, 2 configs, 2, 2)."""
    f = (1j * complex(C) ** 3).real
    return np.stack([amps["zzzz"].S, amps["zzxx"].S], axis=1) / f


def system_rhs(amps, C=-1j):
    """Right-hand sides, shape (nT, 16), ordered like the stacked rows."""
    u = _norm_amplitudes(amps, C)
    out = np.empty((u.shape[0], 16))
    for half, (m, o) in enumerate(((0, 1), (1, 0))):
        vals = np.stack([u[:, 0, m, m], u[:, 1, m, m], u[:, 0, m, o], u[:, 1, m, o]], axis=1)
        out[:, 8 * half : 8 * half + 4] = vals.real
        out[:, 8 * half + 4 : 8 * half + 8] = vals.imag
    return out


# ---------------------------------------------------------------------------
# angle


@dataclass
class AngleSolution:
    """Roots of both quadratics per waiting time and the reconciled angle."""

    times: np.ndarray
    roots_first: list
    roots_second: list
    xi_per_T: np.ndarray
    xi: float
    phi: float
    spread: float
    unique: np.ndarray
    failed_times: list


def quadratic_coefficients(amps):
    """Coefficients (nT, 2, 3) of both quadratics, highest power first."""
    Z, X = amps["zzzz"].S, amps["zzxx"].S
    Sz, Sx = Z[:, 0, 0].real, X[:, 0, 0].real
    Tz, Tx = Z[:, 0, 1].real, X[:, 0, 1].real
    Uz, Ux = Z[:, 1, 0].real, X[:, 1, 0].real
    Bz, Bx = Z[:, 1, 1].real, X[:, 1, 1].real
    first = np.stack(
        [
            Uz - 3 * Ux - 2 * Tz + Tx,
            5 * Uz + 2 * Bz + 4 * Bx - 5 * Tz - 2 * Sz - 4 * Sx,
            2 * Uz - Ux - Tz + 3 * Tx,
        ],
        axis=1,
    )
    second = np.stack(
        [
            2 * Sz - Sx - Bz + 3 * Bx,
            Sz - 8 * Sx - 2 * Tz - 4 * Tx - Bz + 8 * Bx + 2 * Uz + 4 * Ux,
            Sz - 3 * Sx - 2 * Bz + Bx,
        ],
        axis=1,
    )
    return np.stack([first, second], axis=1)


def _roots(coef):
    scale = np.max(np.abs(coef))
    if scale == 0:
        return np.array([], dtype=complex)
    c = coef / scale
    if abs(c[0]) < 1e-12:
        return np.array([-c[2] / c[1]], dtype=complex) if abs(c[1]) > 1e-12 else np.array([])
    return np.roots(c).astype(complex)


def _positive_real(roots):
    r = [z.real for z in roots if abs(z.imag) <= 1e-9 * max(1.0, abs(z)) and z.real > 0]
    return np.array(sorted(r))


def extract_angle(amps, tol=1e-3):
    """Angle between the site dipoles from both polarization configurations.

    At each waiting time the positive real roots of the two quadratics are
    intersected within ``tol``.  Waiting times without a common root are
    listed in ``failed_times``; if none has one, ``ProtocolError`` (stage 2)
    is raised.
    """
    coef = quadratic_coefficients(amps)
    times = amps["zzzz"].times
    r1, r2, xi_T, uniq, failed = [], [], [], [], []
    for k in range(coef.shape[0]):
        a, b = _roots(coef[k, 0]), _roots(coef[k, 1])
        r1.append(a)
        r2.append(b)
        pa, pb = _positive_real(a), _positive_real(b)
        pairs = [(abs(x - y), 0.5 * (x + y)) for x in pa for y in pb if abs(x - y) <= tol]
        if not pairs:
            failed.append(float(times[k]))
            xi_T.append(np.nan)
            uniq.append(False)
            continue
        pairs.sort()
        xi_T.append(pairs[0][1])
        uniq.append(len(pairs) == 1)
    xi_T = np.array(xi_T)
    good = np.isfinite(xi_T)
    if not np.any(good):
        raise ProtocolError(
            2, "the two quadratic identities share no real positive root at any waiting time"
        )
    xi = float(np.median(xi_T[good]))
    spread = float(np.ptp(xi_T[good]))
    phi = float(2 * np.arctan(np.sqrt(xi)))
    return AngleSolution(times, r1, r2, xi_T, xi, phi, spread, np.array(uniq), failed)


# ---------------------------------------------------------------------------
# chi reconstruction


def closed_form_left(u, phi, d=1.0):
    """Elements from the left half of the spectrum.

    ``u`` holds ``S / (i C^3)`` with shape (nT, 2 configs, 2, 2).
    """
    p = 15.0 / (20.0 * d**4)
    c = np.cos(phi)
    sec2 = 1 / np.cos(phi / 2) ** 2
    csc2 = 1 / np.sin(phi / 2) ** 2
    t2, ct2 = np.tan(phi / 2) ** 2, 1 / np.tan(phi / 2) ** 2
    Az, Ax = u[:, 0, 0, 0].real, u[:, 1, 0, 0].real
    Xz, Xx = u[:, 0, 0, 1].real, u[:, 1, 0, 1].real
    diag, cross = Az + 2 * Ax, Xz + 2 * Xx
    im = 15.0 / (8.0 * d**4) * csc2 * sec2
    return {
        "ggaa": 1 - p * sec2 * (diag + cross),
        "aaaa": -p * sec2 * ((c - 1) * diag + c * cross),
        "bbaa": p * sec2 * (c * diag + (c + 1) * cross),
        "re_abab": p * (2 * diag + (ct2 + 2 * t2 + 5) * Xz - (3 * ct2 + t2) * Xx),
        "re_baab": p * ((ct2 + 2 * t2 + 1) * Az - (3 * ct2 + t2 + 8) * Ax - 2 * cross),
        "im_abab": [-im * u[:, 0, 0, 1].imag, 2 * im * u[:, 1, 0, 1].imag],
        "im_baab": [-im * u[:, 0, 0, 0].imag, 2 * im * u[:, 1, 0, 0].imag],
    }


def closed_form_right(u, phi, d=1.0):
    """Elements from the right half: the left-half forms with alpha and beta
    exchanged, ``phi -> pi - phi`` and the imaginary parts negated."""
    swapped = u[:, :, ::-1, ::-1]
    out = closed_form_left(swapped, np.pi - phi, d)
    return {
        "ggbb": out["ggaa"],
        "bbbb": out["aaaa"],
        "aabb": out["bbaa"],
        "re_abab": out["re_abab"],
        "re_baab": out["re_baab"],
        "im_abab": [-v for v in out["im_abab"]],
        "im_baab": [-v for v in out["im_baab"]],
    }


@dataclass
class ChiReconstruction:
    chi: ProcessMatrix
    chi_lstsq: ProcessMatrix
    vector: np.ndarray
    vector_lstsq: np.ndarray
    agreement: float
    re_coherence_mismatch: float
    kappa: float
    low_confidence: bool
    scale_note: str


def _chi_from_vector(times, v, ggaa, ggbb):
    els = {
        "gggg": np.ones_like(times),
        "aaaa": v[:, 0],
        "bbaa": v[:, 1],
        "bbbb": v[:, 2],
        "aabb": v[:, 3],
        "ggaa": ggaa,
        "ggbb": ggbb,
        "abab": v[:, 4] + 1j * v[:, 6],
        "baab": v[:, 5] + 1j * v[:, 7],
    }
    els["baba"] = np.conj(els["abab"])
    els["abba"] = np.conj(els["baab"])
    return ProcessMatrix.from_elements(times, els)


def invert_chi(amps, phi, d=1.0, C=-1j, ridge=0.0, kappa_threshold=15.0, absolute=True):
    """Reconstruct chi(T) from both configurations at a known angle.

    Real parts of the coherence elements average their left- and right-half
    determinations; imaginary parts average all four.  The stacked system is
    also solved by (optionally ridge-regularised) least squares, and the
    largest difference between the two routes is reported.
    """
    times = amps["zzzz"].times
    if not np.array_equal(times, amps["zzxx"].times):
        raise ProtocolError(3, "zzzz and zzxx amplitudes are on different time grids")
    u = _norm_amplitudes(amps, C)
    L = closed_form_left(u, phi, d)
    R = closed_form_right(u, phi, d)
    v = np.column_stack(
        [
            L["aaaa"],
            L["bbaa"],
            R["bbbb"],
            R["aabb"],
            0.5 * (L["re_abab"] + R["re_abab"]),
            0.5 * (L["re_baab"] + R["re_baab"]),
            np.mean(L["im_abab"] + R["im_abab"], axis=0),
            np.mean(L["im_baab"] + R["im_baab"], axis=0),
        ]
    )
    mismatch = float(
        max(
            np.max(np.abs(L["re_abab"] - R["re_abab"]), initial=0.0),
            np.max(np.abs(L["re_baab"] - R["re_baab"]), initial=0.0),
        )
    )

    sys = stacked_system(phi, d, C)
    y = system_rhs(amps, C)
    M = sys.M
    if ridge > 0:
        v_ls = np.linalg.solve(M.T @ M + ridge * np.eye(8), M.T @ y.T).T
    else:
        v_ls = np.linalg.lstsq(M, y.T, rcond=None)[0].T
    k = condition_number(sys)

    chi = _chi_from_vector(times, v, L["ggaa"], R["ggbb"])
    chi_ls = _chi_from_vector(times, v_ls, 1 - v_ls[:, 0] - v_ls[:, 1], 1 - v_ls[:, 2] - v_ls[:, 3])
    note = "absolute" if absolute else "up to the factor (C^3 d^4)^-1"
    return ChiReconstruction(
        chi, chi_ls, v, v_ls, float(np.max(np.abs(v - v_ls), initial=0.0)), mismatch, k,
        bool(k > kappa_threshold), note,
    )


# ---------------------------------------------------------------------------
# full protocol


@dataclass
class QPTReport:
    fits: dict
    angle: AngleSolution
    reconstruction: ChiReconstruction
    amplitudes: dict
    constraints: object
    flags: list

    @property
    def phi_deg(self):
        return float(np.degrees(self.angle.phi))

    def summary(self):
        return {
            "phi_deg": self.phi_deg,
            "xi": self.angle.xi,
            "xi_spread": self.angle.spread,
            "failed_times": self.angle.failed_times,
            "kappa": self.reconstruction.kappa,
            "low_confidence": self.reconstruction.low_confidence,
            "closed_vs_lstsq": self.reconstruction.agreement,
            "re_coherence_mismatch": self.reconstruction.re_coherence_mismatch,
            "normalization": self.reconstruction.scale_note,
            "constraint_violation": self.constraints.max_violation(),
            "residuals": {
                cfg: [
                    {"T_fs": f.T, "residual_norm": f.residual_norm,
                     "relative_residual": f.relative_residual, "flags": f.flags}
                    for f in fits
                ]
                for cfg, fits in self.fits.items()
            },
            "flags": self.flags,
        }


def run_protocol(spectra, d=1.0, C=-1j, root_tol=1e-3, ridge=0.0, kappa_threshold=15.0,
                 fit_kw=None, absolute=True):
    """Fit, extract the angle and invert.

    Parameters
    ----------
    spectra : dict
        ``{'zzzz': [Spectrum2D, ...], 'zzxx': [...]}`` on matching waiting times.

    Returns
    -------
    QPTReport
    """
    fit_kw = fit_kw or {}
    if not spectra or any(not spectra.get(cfg) for cfg in ("zzzz", "zzxx")):
        raise ProtocolError(1, "need spectra for both zzzz and zzxx")
    tz = [s.T for s in spectra["zzzz"]]
    tx = [s.T for s in spectra["zzxx"]]
    if sorted(tz) != sorted(tx):
        raise ProtocolError(1, f"waiting times differ between configurations: {tz} vs {tx}")

    fits, amps, flags = {}, {}, []
    for cfg in ("zzzz", "zzxx"):
        ordered = sorted(spectra[cfg], key=lambda s: s.T)
        try:
            fits[cfg] = [fit_peaks(s, **fit_kw) for s in ordered]
        except ProtocolError:
            raise
        except Exception as exc:
            raise ProtocolError(1, f"{cfg}: {exc}") from exc
        S = np.array([f.S for f in fits[cfg]])
        amps[cfg] = PeakAmplitudeSet([s.T for s in ordered], S, cfg)
        for f in fits[cfg]:
            flags += [f"{cfg}@T={f.T:g}:{x}" for x in f.flags]

    angle = extract_angle(amps, root_tol)
    if angle.failed_times:
        flags.append(f"no common root at T={angle.failed_times}")
    if not np.all(angle.unique[np.isfinite(angle.xi_per_T)]):
        flags.append("root intersection not unique")
    if angle.spread > root_tol:
        flags.append(f"xi spread {angle.spread:.3g} exceeds {root_tol:g}")
    try:
        rec = invert_chi(amps, angle.phi, d, C, ridge, kappa_threshold, absolute)
    except ValueError as exc:
        raise ProtocolError(3, str(exc)) from exc
    if rec.low_confidence:
        flags.append(f"kappa {rec.kappa:.3g} above threshold {kappa_threshold:g}")
    return QPTReport(fits, angle, rec, amps, validate_constraints(rec.chi, tol=1e-6), flags)
