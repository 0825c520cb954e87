"""Fast direct and preconditioned solvers for the 2D Lippmann-Schwinger equation."""
from .special import bessel_j0, bessel_y0, hankel_h0, erf
from .discretization import (
    UniformGrid, build_grid, ProblemSpec, PlaneWave, CallbackIncident,
    Gaussian, Cavity, Lens, RandomBumps, PhotonicCrystal, Tabulated,
    CorrectionTable, fit_diagonal_correction, kernel_entry, potential_value,
    assemble_rhs, evaluate_scattered_field,
)
from .fast_apply import ConvolutionOperator, build_convolution, apply_G, apply_forward
from .lowrank import IdFactors, LrFactors, id_rows, lr_factor, entry_magnitude_stats
from .hbs import HbsTree, HbsFactors, build_tree, proxy_ring, compress, hbs_matvec
from .solver import ScatteringInverse, SolveWorkspace, build_inverse, apply_inverse, lemma1_check
from .krylov import GmresConfig, IterationLog, gmres, spectrum_probe

__version__ = "0.1.0"
