"""Energy-preserving exponential AVF integrators and benchmark problems."""

from .matfun import exp_phi_pair, lemma_b_matrix, mat_exp, mat_phi
from .quadrature import avf_segment_integral, gauss_legendre
from .systems import GradientSystem, SecondOrderSystem, build_problem, second_to_first_order
from .integrators import IterationConfig, MethodId, integrate, reference_solution

__version__ = "0.1.0"
