"""Semiclassical spectra and observable matrix elements of su(2) spin
Hamiltonians near classical critical energies.

The package computes exact spectra by banded diagonalization, regular
Bohr-Sommerfeld spectra from classical actions, and critical spectra
near hyperbolic points from the compatibility determinant of WKB
connection matrices, together with exact and semiclassical observable
matrix elements.
"""

import os as _os

# honor the thread-count variable before any BLAS-backed import
if "SPINSC_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["SPINSC_THREADS"])

from .numerics import (DEFAULT_TOL, RootBracket, find_root,
                       graded_quadrature, integrate_ode, log_gamma_complex,
                       polynomial_roots)
from .operator_algebra import (GradedSymbol, ModelParams, OperatorPoly,
                               generator, hamiltonian_operator, identity_op,
                               scaled_observable, symbol_of)
from .phase_space import (FixedPointInfo, OrbitBranch, bs_actions,
                          bs_spectrum, classical_energy, critical_energies,
                          find_critical_points, hyperbolic_points,
                          integrate_flow, level_set_branches, section,
                          sphere_area)
from .spectrum import (CoherentPolynomial, EigenSystem, SpinMatrix,
                       build_matrix, coherent_wavefunction,
                       default_hp_radius, eigensystem, exact_spectrum,
                       husimi_weight, wavefunction_zeros)
from .hp_quantization import (ConnectionMatrix, CriticalAssembly,
                              CriticalZero, HPLinearization,
                              assembly_spectrum, connection_matrix,
                              critical_spectrum, global_determinant,
                              homoclinic_closed_form, linearize_at_hp,
                              regularized_action)
from .matrix_elements import (MatrixElementRecord, ObservableSpec,
                              branch_fourier, critical_f0, critical_f_k,
                              effective_period, exact_f_k,
                              observable_matrix, regular_f_k)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
