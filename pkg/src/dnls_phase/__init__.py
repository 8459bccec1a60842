"""Numerical toolkit for the discrete nonlinear Schrodinger Gibbs measure on the torus.

Submodules
----------
lattice_spectrum
    Torus Laplacian spectrum, finite-volume spectral sums and mass equations.
free_field_thermo
    Infinite-volume free-field functions ``K``, ``K'``, ``C_d``, ``L``, ``W``.
soliton_solver
    Dirichlet ground states, minimal energy ``I(a)``, threshold ``R_p``, dynamics.
phase_diagram
    Variational free energy, phase classification and transition curve.
gff_sampler
    Spectral Gaussian free field samplers and concentration reports.
gibbs_sampler
    Metropolis sampling of the finite-volume measure and partition estimates.
"""

from .errors import DnlsPhaseError

__all__ = ["DnlsPhaseError"]
__version__ = "0.1.0"
