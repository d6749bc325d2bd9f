"""Process matrix chi(T) of the single-exciton manifold and the secular
Redfield model that generates it.

Indices run over the states ``g`` (0), ``alpha`` (1) and ``beta`` (2).  The
element ``chi[k, a, b, c, d]`` is the amplitude carried from ``|c><d|`` at
``T = 0`` into ``|a><b|`` at ``T = times[k]``.  String labels use the letters
``g``, ``a`` and ``b``, so ``"bbaa"`` is the alpha -> beta population transfer.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .units import boltzmann_ratio, wavenumber_to_angular

STATE_LETTERS = "gab"
G, A, B = 0, 1, 2

#: Liouville columns tracked by the process matrix
TRACKED_COLUMNS = ((G, G), (A, A), (B, B), (A, B), (B, A))


def parse_label(label):
    """'bbaa' -> (2, 2, 1, 1)."""
    if len(label) != 4 or any(ch not in STATE_LETTERS for ch in label):
        raise ValueError(f"bad chi label {label!r}; use four letters from 'gab'")
    return tuple(STATE_LETTERS.index(ch) for ch in label)


def format_label(idx):
    return "".join(STATE_LETTERS[i] for i in idx)


def tracked_elements():
    """All (a, b, c, d) with (c, d) a tracked column, in CSV order."""
    out = []
    for c, d in TRACKED_COLUMNS:
        for a in range(3):
            for b in range(3):
                out.append((a, b, c, d))
    return out


class ProcessMatrix:
    """chi(T) sampled on a waiting-time grid.

    Parameters
    ----------
    times : array_like, shape (nT,)
        Waiting times in fs.
    values : array_like, shape (nT, 3, 3, 3, 3)
        Complex tensor entries.  Columns outside :data:`TRACKED_COLUMNS`
        are ignored by the constraint checks and the CSV writer.
    """

    def __init__(self, times, values):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        values = np.asarray(values, dtype=complex)
        if values.shape != (times.size, 3, 3, 3, 3):
            raise ValueError(
                f"values must have shape ({times.size}, 3, 3, 3, 3), got {values.shape}"
            )
        self._times = times
        self._values = values
        self._times.setflags(write=False)
        self._values.setflags(write=False)

    @property
    def times(self):
        return self._times

    @property
    def values(self):
        return self._values

    def __len__(self):
        return self._times.size

    def __getitem__(self, label):
        return self._values[(slice(None),) + parse_label(label)]

    def at(self, k):
        """Tensor at the k-th time, shape (3, 3, 3, 3)."""
        return self._values[k]

    def superoperator(self, k):
        """9x9 matrix acting on row-major vec(rho) at the k-th time."""
        return self._values[k].reshape(9, 9)

    def compose(self, other):
        """Pointwise composition ``self o other`` (other applied first)."""
        if len(self) != len(other):
            raise ValueError("time grids differ in length")
        vals = np.einsum("kabef,kefcd->kabcd", self._values, other.values)
        return ProcessMatrix(self._times + other.times, vals)

    def with_values(self, values):
        return ProcessMatrix(self._times, values)

    @classmethod
    def identity(cls, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        vals = np.zeros((times.size, 3, 3, 3, 3), dtype=complex)
        for c, d in TRACKED_COLUMNS:
            vals[:, c, d, c, d] = 1.0
        return cls(times, vals)

    @classmethod
    def from_elements(cls, times, elements):
        """Build from a ``{label: array}`` mapping; missing entries are zero."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        vals = np.zeros((times.size, 3, 3, 3, 3), dtype=complex)
        for label, v in elements.items():
            vals[(slice(None),) + parse_label(label)] = v
        return cls(times, vals)

    def to_csv(self, path):
        """Write ``T_fs`` then Re/Im of every tracked element, 17 significant digits."""
        elems = tracked_elements()
        header = ["T_fs"]
        for idx in elems:
            lbl = format_label(idx)
            header += [f"chi_{lbl}_re", f"chi_{lbl}_im"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, T in enumerate(self._times):
                row = [format(T, ".17g")]
                for idx in elems:
                    z = self._values[(k,) + idx]
                    row += [format(z.real, ".17g"), format(z.imag, ".17g")]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "T_fs":
            raise ValueError(f"{path}: not a chi CSV (missing T_fs header)")
        header = rows[0]
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
        data = data.reshape(-1, len(header))
        times = data[:, 0]
        vals = np.zeros((times.size, 3, 3, 3, 3), dtype=complex)
        for j, name in enumerate(header[1:], start=1):
            parts = name.split("_")
            if len(parts) != 3 or parts[0] != "chi" or parts[2] not in ("re", "im"):
                raise ValueError(f"{path}: unexpected column {name!r}")
            idx = (slice(None),) + parse_label(parts[1])
            if parts[2] == "re":
                vals[idx] += data[:, j]
            else:
                vals[idx] += 1j * data[:, j]
        return cls(times, vals)


# ---------------------------------------------------------------------------
# constraints


@dataclass(frozen=True)
class ConstraintReport:
    """Per-time maximal violations of the physicality constraints."""

    times: np.ndarray
    trace: np.ndarray
    hermiticity: np.ndarray
    ground: np.ndarray
    tol: float

    def passed(self, *checks):
        checks = checks or ("trace", "hermiticity", "ground")
        return all(float(np.max(getattr(self, c), initial=0.0)) <= self.tol for c in checks)

    @property
    def ok(self):
        return self.passed()

    def max_violation(self):
        return {
            c: float(np.max(getattr(self, c), initial=0.0))
            for c in ("trace", "hermiticity", "ground")
        }


def validate_constraints(chi, tol=1e-10):
    """Trace preservation, Hermiticity and ground-state inertness of ``chi``.

    Only the tracked columns enter.  Returns a :class:`ConstraintReport`.
    """
    v = chi.values
    nT = len(chi)
    trace = np.zeros(nT)
    herm = np.zeros(nT)
    for c, d in TRACKED_COLUMNS:
        tr = np.einsum("kaa->k", v[:, :, :, c, d])
        trace = np.maximum(trace, np.abs(tr - (1.0 if c == d else 0.0)))
        diff = v[:, :, :, c, d] - np.conj(np.swapaxes(v[:, :, :, d, c], 1, 2))
        herm = np.maximum(herm, np.abs(diff).reshape(nT, -1).max(axis=1))
    target = np.zeros((3, 3))
    target[G, G] = 1.0
    ground = np.abs(v[:, :, :, G, G] - target).reshape(nT, -1).max(axis=1)
    return ConstraintReport(chi.times.copy(), trace, herm, ground, tol)


# ---------------------------------------------------------------------------
# Kraus maps


class KrausSet:
    """Operator-sum representation on the {g, alpha, beta} space.

    Raises ``ValueError`` if ``sum E^dagger E`` differs from the identity
    by more than ``tol``.
    """

    def __init__(self, operators, tol=1e-10):
        ops = [np.asarray(E, dtype=complex) for E in operators]
        if not ops or any(E.shape != (3, 3) for E in ops):
            raise ValueError("Kraus operators must be a nonempty list of 3x3 matrices")
        total = sum(E.conj().T @ E for E in ops)
        err = float(np.max(np.abs(total - np.eye(3))))
        if err > tol:
            raise ValueError(f"incomplete Kraus set: |sum E^+E - 1| = {err:.3g}")
        self.operators = tuple(ops)

    @classmethod
    def random(cls, n_ops, rng=None, ground_inert=True):
        """Random complete set from a Haar-like isometry.

        With ``ground_inert`` every operator maps ``|g>`` onto a multiple of
        itself, so the ground state never leaves ``gg``.
        """
        rng = np.random.default_rng(rng)
        shape = (3 * n_ops, 3)
        M = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        if ground_inert:
            a = rng.normal(size=n_ops) + 1j * rng.normal(size=n_ops)
            v0 = np.zeros(3 * n_ops, dtype=complex)
            v0[0::3] = a / np.linalg.norm(a)
            M[:, 0] = v0
        Q, _ = np.linalg.qr(M)
        if ground_inert:
            # undo the sign/phase qr may put on the first column
            Q[:, 0] = M[:, 0]
        return cls([Q[3 * k : 3 * k + 3, :] for k in range(n_ops)])


def chi_from_kraus(kraus, T=0.0):
    """chi_abcd = sum_k E_ac conj(E_bd), returned on the single time ``T``."""
    vals = np.zeros((3, 3, 3, 3), dtype=complex)
    for E in kraus.operators:
        vals += np.einsum("ac,bd->abcd", E, E.conj())
    mask = np.zeros((3, 3), dtype=bool)
    for c, d in TRACKED_COLUMNS:
        mask[c, d] = True
    vals[:, :, ~mask] = 0.0
    return ProcessMatrix([T], vals[None])


# ---------------------------------------------------------------------------
# secular Redfield model

RATE_KEYS = ("bbaa", "aabb", "abab", "ag", "bg", "fa", "fb", "fg")

#: porphyrin dimer rates in fs^-1
PORPHYRIN_RATES = {
    "bbaa": 8.02e-4,
    "aabb": 5.07e-3,
    "abab": 2.93e-3,
    "ag": 1.23e-2,
    "bg": 1.45e-2,
    "fa": 1.23e-2,
    "fb": 1.45e-2,
    "fg": 4.77e-2,
}
PORPHYRIN_TEMPERATURE = 273.0
PORPHYRIN_BATH = {"reorganization_cm": 100.0, "cutoff_cm": 150.0}


class DetailedBalanceError(ValueError):
    pass


@dataclass(frozen=True)
class RedfieldModel:
    """Nonzero entries of a secular Redfield tensor.

    Parameters
    ----------
    rates : dict
        Keys from :data:`RATE_KEYS`, values in fs^-1.  ``"bbaa"`` is the
        uphill alpha -> beta transfer rate, ``"aabb"`` the downhill one,
        ``"abab"`` the exciton-coherence dephasing rate.  ``"ag"``, ``"bg"``,
        ``"fa"``, ``"fb"``, ``"fg"`` dephase the optical coherences.
    temperature : float
        Bath temperature in K.
    omega_alpha_beta : float
        ``omega_alpha - omega_beta`` in cm^-1 (negative).
    bath_meta : dict, optional
        Spectral-density parameters, carried along for the record only.
    leak : dict, optional
        Population decay to the ground state, keys ``"a"``/``"b"`` (fs^-1).
        Zero by default.
    """

    rates: dict
    temperature: float
    omega_alpha_beta: float
    bath_meta: dict = field(default=None)
    leak: dict = field(default=None)

    def __post_init__(self):
        rates = {k: 0.0 for k in RATE_KEYS}
        for k, v in dict(self.rates).items():
            if k not in rates:
                raise ValueError(f"unknown rate key {k!r}")
            rates[k] = float(v)
        leak = {"a": 0.0, "b": 0.0}
        for k, v in dict(self.leak or {}).items():
            if k not in leak:
                raise ValueError(f"unknown leak key {k!r}")
            leak[k] = float(v)
        for k, v in list(rates.items()) + [("leak_" + k, v) for k, v in leak.items()]:
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"rate {k} must be finite and nonnegative, got {v}")
        if self.omega_alpha_beta > 0:
            raise ValueError("omega_alpha_beta must be <= 0 (alpha is the lower exciton)")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "leak", leak)
        object.__setattr__(self, "bath_meta", dict(self.bath_meta or {}))

    @property
    def k_down(self):
        return self.rates["aabb"]

    @property
    def k_up(self):
        return self.rates["bbaa"]

    def boltzmann_factor(self):
        """exp(-omega_alpha_beta / kT), the expected downhill/uphill ratio."""
        if self.temperature <= 0:
            return np.inf
        return boltzmann_ratio(-self.omega_alpha_beta, self.temperature)

    def balance_error(self):
        """Relative deviation of k_down/k_up from the Boltzmann factor."""
        if self.k_up == 0 and self.k_down == 0:
            return 0.0
        if self.k_up == 0:
            return np.inf
        target = self.boltzmann_factor()
        return abs(self.k_down / self.k_up - target) / target

    def check_detailed_balance(self, tol=1e-6):
        err = self.balance_error()
        if err > tol:
            raise DetailedBalanceError(
                f"transfer rates violate detailed balance: k_down/k_up = "
                f"{self.k_down / self.k_up if self.k_up else np.inf:.6g}, "
                f"Boltzmann factor {self.boltzmann_factor():.6g} "
                f"(relative error {err:.3g} > {tol:g})"
            )

    @classmethod
    def from_downhill(cls, rates, temperature, omega_alpha_beta, **kw):
        """Fill in the uphill rate from the downhill one by detailed balance."""
        rates = dict(rates)
        ratio = boltzmann_ratio(-omega_alpha_beta, temperature)
        rates["bbaa"] = rates["aabb"] / ratio
        return cls(rates, temperature, omega_alpha_beta, **kw)

    @classmethod
    def unitary(cls, omega_alpha_beta):
        return cls({}, 0.0, omega_alpha_beta)


def porphyrin_model(complete_uphill=True):
    """Porphyrin-dimer rate table; by default the uphill rate is recomputed
    from the downhill one so that detailed balance holds exactly."""
    kw = dict(bath_meta=PORPHYRIN_BATH)
    if complete_uphill:
        return RedfieldModel.from_downhill(PORPHYRIN_RATES, PORPHYRIN_TEMPERATURE, -350.0, **kw)
    return RedfieldModel(PORPHYRIN_RATES, PORPHYRIN_TEMPERATURE, -350.0, **kw)


def two_state_populations(k_down, k_up, times, start="a"):
    """Populations (p_alpha, p_beta) of the closed two-level kinetics.

    Starting in alpha, ``p_alpha = p_eq + (1 - p_eq) exp(-(k_up + k_down) T)``
    with ``p_eq = k_down / (k_up + k_down)``.
    """
    times = np.asarray(times, dtype=float)
    k = k_up + k_down
    if k == 0:
        stay = np.ones_like(times)
        return (stay, 0 * stay) if start == "a" else (0 * stay, stay)
    p_eq = k_down / k
    decay = np.exp(-k * times)
    if start == "a":
        p_a = p_eq + (1.0 - p_eq) * decay
    elif start == "b":
        p_a = p_eq * (1.0 - decay)
    else:
        raise ValueError("start must be 'a' or 'b'")
    return p_a, 1.0 - p_a


def _gap_angular(model, eigen):
    gap = eigen.omega_alpha_beta
    if abs(gap - model.omega_alpha_beta) > 1e-6:
        raise ValueError(
            f"model gap {model.omega_alpha_beta} cm^-1 does not match the dimer's {gap} cm^-1"
        )
    return float(wavenumber_to_angular(gap))


def liouvillian(model, eigen):
    """9x9 generator L with d vec(rho)/dT = L vec(rho), row-major vec.

    Optical coherences between g and the excitons are included with their
    dephasing rates; the biexciton is outside this space.
    """
    r, lk = model.rates, model.leak
    la, lb = lk["a"], lk["b"]
    # measured from alpha so the alpha-beta gap keeps all its digits
    energies = wavenumber_to_angular(
        [-eigen.omega_alpha, 0.0, -eigen.omega_alpha_beta]
    )
    gamma = np.zeros((3, 3))
    gamma[A, B] = gamma[B, A] = r["abab"] + 0.5 * (la + lb)
    gamma[G, A] = gamma[A, G] = r["ag"] + 0.5 * la
    gamma[G, B] = gamma[B, G] = r["bg"] + 0.5 * lb

    L = np.zeros((9, 9), dtype=complex)
    for a in range(3):
        for b in range(3):
            if a != b:
                i = 3 * a + b
                L[i, i] = -1j * (energies[a] - energies[b]) - gamma[a, b]
    aa, bb, gg = 3 * A + A, 3 * B + B, 3 * G + G
    L[aa, aa] = -(model.k_up + la)
    L[aa, bb] = model.k_down
    L[bb, bb] = -(model.k_down + lb)
    L[bb, aa] = model.k_up
    L[gg, aa] = la
    L[gg, bb] = lb
    return L


def _columns_to_chi(times, cols):
    """cols: dict (c, d) -> array (nT, 9) of vec(rho(T)) for rho(0)=|c><d|."""
    vals = np.zeros((len(times), 3, 3, 3, 3), dtype=complex)
    for (c, d), v in cols.items():
        vals[:, :, :, c, d] = v.reshape(-1, 3, 3)
    return ProcessMatrix(times, vals)


def _rk4(L, x0, times, max_step):
    out = np.empty((len(times), x0.size), dtype=complex)
    x = x0.astype(complex)
    t = 0.0
    for k, target in enumerate(times):
        span = target - t
        if span > 0:
            n = int(np.ceil(span / max_step))
            h = span / n
            for _ in range(n):
                k1 = L @ x
                k2 = L @ (x + 0.5 * h * k1)
                k3 = L @ (x + 0.5 * h * k2)
                k4 = L @ (x + h * k3)
                x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t = target
        out[k] = x
    return out


def propagate_chi(model, eigen, times, method="closed", max_step=0.25, balance_tol=1e-6):
    """chi(T) of the secular Redfield equation of motion.

    Parameters
    ----------
    model : RedfieldModel
    eigen : EigenDimer
    times : array_like
        Sorted, nonnegative waiting times in fs.
    method : {'closed', 'rk4', 'expm'}
        Closed-form kinetics, fixed-step fourth-order Runge-Kutta, or the
        matrix exponential of the generator.
    max_step : float
        Largest RK4 step in fs.
    balance_tol : float or None
        Relative tolerance of the detailed-balance check; ``None`` skips it.

    Returns
    -------
    ProcessMatrix
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted and nonnegative")
    if balance_tol is not None:
        model.check_detailed_balance(balance_tol)
    w_ab = _gap_angular(model, eigen)

    if method == "closed":
        return _closed_form(model, w_ab, times)

    L = liouvillian(model, eigen)
    cols = {}
    for c, d in TRACKED_COLUMNS:
        x0 = np.zeros(9, dtype=complex)
        x0[3 * c + d] = 1.0
        if method == "rk4":
            cols[(c, d)] = _rk4(L, x0, times, max_step)
        elif method == "expm":
            cols[(c, d)] = np.array([expm(L * T) @ x0 for T in times])
        else:
            raise ValueError(f"unknown method {method!r}")
    return _columns_to_chi(times, cols)


def _closed_form(model, w_ab, times):
    la, lb = model.leak["a"], model.leak["b"]
    vals = np.zeros((times.size, 3, 3, 3, 3), dtype=complex)
    vals[:, G, G, G, G] = 1.0

    if la == 0 and lb == 0:
        pa, pb = two_state_populations(model.k_down, model.k_up, times, "a")
        vals[:, A, A, A, A], vals[:, B, B, A, A] = pa, pb
        pa, pb = two_state_populations(model.k_down, model.k_up, times, "b")
        vals[:, A, A, B, B], vals[:, B, B, B, B] = pa, pb
    else:
        K = np.array(
            [
                [0.0, la, lb],
                [0.0, -(model.k_up + la), model.k_down],
                [0.0, model.k_up, -(model.k_down + lb)],
            ]
        )
        for k, T in enumerate(times):
            P = expm(K * T)
            for j, s in enumerate((G, A, B)):
                for i, t in enumerate((G, A, B)):
                    vals[k, t, t, s, s] = P[i, j]

    gamma = model.rates["abab"] + 0.5 * (la + lb)
    coh = np.exp((-1j * w_ab - gamma) * times)
    vals[:, A, B, A, B] = coh
    vals[:, B, A, B, A] = np.conj(coh)
    return ProcessMatrix(times, vals)


def unitary_chi(eigen, times):
    """chi_abcd = delta_ac delta_bd exp(-i omega_ab T) on the tracked columns."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    w_ab = float(wavenumber_to_angular(eigen.omega_alpha_beta))
    vals = np.zeros((times.size, 3, 3, 3, 3), dtype=complex)
    for c, d in TRACKED_COLUMNS:
        w = {(A, B): w_ab, (B, A): -w_ab}.get((c, d), 0.0)
        vals[:, c, d, c, d] = np.exp(-1j * w * times)
    return ProcessMatrix(times, vals)


def literal_rate_forms(model, times):
    """Single-exponential population and coherence forms, one row per entry.

    The ``bbaa`` entry appears twice, with two different expressions.
    """
    T = np.asarray(times, dtype=float)
    up, down = model.k_up, model.k_down
    w_ab = float(wavenumber_to_angular(model.omega_alpha_beta))
    return [
        ("aaaa", 1.0 - np.exp(-up * T)),
        ("bbaa", np.exp(-up * T)),
        ("aabb", np.exp(-down * T)),
        ("bbaa", 1.0 - np.exp(-up * T)),
        ("abab", np.exp(-1j * w_ab * T) * np.exp(-model.rates["abab"] * T)),
    ]


def literal_rate_chi(model, times):
    """Evaluate :func:`literal_rate_forms` as written.

    The later ``bbaa`` row wins, ``bbbb`` has no row and stays zero, and
    ``aaaa`` starts at 0 instead of 1.  The result is not a valid process
    matrix; it exists only to contrast with :func:`propagate_chi`.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    vals = np.zeros((times.size, 3, 3, 3, 3), dtype=complex)
    vals[:, G, G, G, G] = 1.0
    for label, v in literal_rate_forms(model, times):
        vals[(slice(None),) + parse_label(label)] = v
    vals[:, B, A, B, A] = np.conj(vals[:, A, B, A, B])
    return ProcessMatrix(times, vals)
