"""Spectra, localization and quantum-walk dynamics of non-Hermitian superlattices."""

from __future__ import annotations

__version__ = "0.1.0"

from .eigen import ConvergenceError, EigenDecomposition, eigenpairs, eigenvalues
from .lattice import (InvalidApproximantError, InvalidModelError, PotentialSequence,
                      SuperlatticeSpec, assemble_bloch, build_potential, clean_dispersion,
                      fibonacci_approximant, model)
from .localization import IprSummary, ipr, ipr_summary, localization_transition
from .qwalk import (WalkSpec, WalkState, WalkTrace, barrier_walk, electric_walk,
                    predicted_hc_walk, walk_band_matrix, walk_dynamics, walk_gauge_scan,
                    walk_quasienergies, walk_step)
from .spectra import (ComplexSpectrum, FlatBandReport, GaugeScan, band_structure,
                      flatband_analysis, loop_radius_check, max_im_energy, predicted_hc,
                      scan_gauge)
