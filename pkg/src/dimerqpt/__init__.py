"""Polarization-controlled 2D photon-echo spectra of an excitonic dimer and
the process-tomography inversion that recovers chi(T) and the dipole angle."""

from .exciton import EigenDimer, PulseSpec, SiteDimer, diagonalize, homodimer
from .process import (
    KrausSet,
    ProcessMatrix,
    RedfieldModel,
    chi_from_kraus,
    porphyrin_model,
    propagate_chi,
    validate_constraints,
)
from .spectroscopy import (
    CONFIGS,
    DephasingSet,
    PeakAmplitudeSet,
    PulseSequence,
    Spectrum2D,
    assemble_spectrum,
    peak_amplitudes_general,
    peak_amplitudes_homodimer,
)
from .inversion import (
    ProtocolError,
    extract_angle,
    fit_peaks,
    invert_chi,
    kappa,
    run_protocol,
)
from .config import ConfigError, RunConfig, load_config

__version__ = "0.1.0"
