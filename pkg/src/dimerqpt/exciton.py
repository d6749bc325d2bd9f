"""Coupled dimer: site Hamiltonian, exciton basis and pulse amplitudes."""

from dataclasses import dataclass, field

import numpy as np

from .units import wavenumber_to_angular


def _vec3(v, name):
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SiteDimer:
    """Two chromophores in the site basis.

    Energies in cm^-1.  ``J`` is the electronic coupling; a positive value
    stabilises the in-phase combination of the site excitations, so a
    homodimer has its symmetric exciton at ``omega - J``.
    """

    omega_A: float
    omega_B: float
    J: float
    d_A: np.ndarray
    d_B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d_A", _vec3(self.d_A, "d_A"))
        object.__setattr__(self, "d_B", _vec3(self.d_B, "d_B"))
        if not (self.omega_A > 0 and self.omega_B > 0):
            raise ValueError("site energies must be positive optical gaps")
        if np.linalg.norm(self.d_A) == 0 or np.linalg.norm(self.d_B) == 0:
            raise ValueError("both site transition dipoles must be nonzero")

    @property
    def phi(self):
        """Angle between the two site dipoles, in [0, pi]."""
        cos = self.d_A @ self.d_B / (np.linalg.norm(self.d_A) * np.linalg.norm(self.d_B))
        return float(np.arccos(np.clip(cos, -1.0, 1.0)))

    def single_exciton_hamiltonian(self):
        """2x2 block in the (A, B) basis, cm^-1."""
        return np.array([[self.omega_A, -self.J], [-self.J, self.omega_B]], dtype=float)


def homodimer(omega, J, phi, d=1.0):
    """Homodimer with site dipoles of norm ``d`` at angle ``phi`` (rad) in the xy plane."""
    d_A = d * np.array([1.0, 0.0, 0.0])
    d_B = d * np.array([np.cos(phi), np.sin(phi), 0.0])
    return SiteDimer(omega, omega, J, d_A, d_B)


@dataclass(frozen=True)
class EigenDimer:
    """Exciton-basis description of a dimer.

    The ground state sits at zero energy, so ``omega_alpha`` is also the
    alpha <- g transition energy.  ``alpha`` is always the lower exciton.
    """

    omega_bar: float
    delta: float
    theta: float
    omega_alpha: float
    omega_beta: float
    mu_alpha_g: np.ndarray
    mu_beta_g: np.ndarray
    mu_f_alpha: np.ndarray
    mu_f_beta: np.ndarray
    phi: float
    site: SiteDimer = field(repr=False, default=None)

    @property
    def omega_f(self):
        return self.omega_alpha + self.omega_beta

    # no exciton-exciton binding: the f <- beta and f <- alpha lines coincide
    # with alpha <- g and beta <- g by construction
    @property
    def omega_alpha_g(self):
        return self.omega_alpha

    @property
    def omega_beta_g(self):
        return self.omega_beta

    @property
    def omega_f_beta(self):
        return self.omega_alpha

    @property
    def omega_f_alpha(self):
        return self.omega_beta

    @property
    def omega_alpha_beta(self):
        """omega_alpha - omega_beta (<= 0 by the labelling convention)."""
        return self.omega_alpha - self.omega_beta

    @property
    def is_homodimer(self):
        return self.site is not None and self.site.omega_A == self.site.omega_B

    def dipole(self, label):
        """Transition dipole by label: 'ag', 'bg', 'fa' or 'fb'."""
        try:
            return {
                "ag": self.mu_alpha_g,
                "bg": self.mu_beta_g,
                "fa": self.mu_f_alpha,
                "fb": self.mu_f_beta,
            }[label]
        except KeyError:
            raise ValueError(f"unknown dipole label {label!r}") from None

    def transition_energy(self, label):
        """Energy (cm^-1) of the optical coherence named by ``label``."""
        try:
            return {
                "ag": self.omega_alpha_g,
                "bg": self.omega_beta_g,
                "fa": self.omega_f_alpha,
                "fb": self.omega_f_beta,
            }[label]
        except KeyError:
            raise ValueError(f"unknown coherence label {label!r}") from None


def exciton_rotation(theta):
    """Rotation taking (d_A, d_B) to (mu_alpha_g, mu_beta_g)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def biexciton_rotation(theta):
    """Matrix taking (d_A, d_B) to (mu_f_alpha, mu_f_beta)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[s, c], [c, -s]])


def diagonalize(site):
    """Exciton energies, mixing angle and transition dipoles of a dimer.

    The mixing angle is ``theta = atan2(J, -Delta) / 2``, which places the
    state ``cos(theta)|A> + sin(theta)|B>`` at the lower energy
    ``omega_bar - sqrt(J^2 + Delta^2)`` and calls it alpha.  For a homodimer
    this gives ``theta = pi/4`` when ``J > 0``; for ``J = 0`` it selects
    whichever site is lower.
    """
    omega_bar = 0.5 * (site.omega_A + site.omega_B)
    delta = 0.5 * (site.omega_A - site.omega_B)
    # +0.0 turns -0.0 into 0.0 so that atan2(0, 0) is 0 rather than pi
    theta = 0.5 * np.arctan2(site.J, -delta + 0.0)
    split = np.hypot(site.J, delta)

    sites = np.vstack([site.d_A, site.d_B])
    mu_ag, mu_bg = exciton_rotation(theta) @ sites
    mu_fa, mu_fb = biexciton_rotation(theta) @ sites

    return EigenDimer(
        omega_bar=omega_bar,
        delta=delta,
        theta=float(theta),
        omega_alpha=omega_bar - split,
        omega_beta=omega_bar + split,
        mu_alpha_g=mu_ag,
        mu_beta_g=mu_bg,
        mu_f_alpha=mu_fa,
        mu_f_beta=mu_fb,
        phi=site.phi,
        site=site,
    )


@dataclass(frozen=True)
class PulseSpec:
    """One Gaussian pulse: lab-frame polarization, carrier (cm^-1), width (fs)."""

    polarization: np.ndarray
    carrier: float
    sigma: float
    lambda_scale: float = 1.0

    def __post_init__(self):
        pol = _vec3(self.polarization, "polarization")
        if abs(np.linalg.norm(pol) - 1.0) > 1e-12:
            raise ValueError("polarization must be a unit vector")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "polarization", pol)


def gaussian_factor(sigma, detuning_cm):
    """exp(-sigma^2 delta^2 / 2) with delta converted to rad/fs."""
    dw = wavenumber_to_angular(detuning_cm)
    return np.exp(-0.5 * (sigma * dw) ** 2)


def pulse_amplitude(pulse, transition_energy):
    """Frequency amplitude of ``pulse`` at a transition energy (cm^-1).

    ``-(lambda / i) sqrt(2 pi sigma^2) exp(-sigma^2 (w_pg - w_i)^2 / 2)``,
    purely imaginary.
    """
    norm = -pulse.lambda_scale / 1j * np.sqrt(2.0 * np.pi * pulse.sigma**2)
    return complex(norm * gaussian_factor(pulse.sigma, transition_energy - pulse.carrier))


def unit_amplitude_lambda(sigma):
    """Field scale giving an on-resonance amplitude of exactly -i."""
    return -1.0 / np.sqrt(2.0 * np.pi * sigma**2)
