"""Principal-value determinants of second variations of LQ problems.

The formula path combines the Jacobi-type flow, the boundary
symplectomorphisms A_i^s and the normalisation constants; the Galerkin
oracle discretises the compact operator K directly.
"""
from .symplectic import (BoundarySubspace, MetricPair, SymplecticFrame, annihilator_graph,
                         dilation, map_A0, map_A1, metric_operators, sigma, std_J,
                         symplectic_defect)
from .functions import Constant, Fourier, Sampled, as_function, random_fourier
from .problem import (DoubledProblem, LegendreError, NotStrictlyNormal, ProblemError, ProblemLQ,
                      build_drift, build_driftless, build_schrodinger, double_system,
                      normalize_legendre)
from .flow import ClosedFormS0, FlowSolution, closed_form_s0, fundamental_solution, monodromy
from .determinant import (DegenerateMetric, DetReport, det_Q, det_report, determinant,
                          hill_reference, normalization, periodic, scan_zeros, trace_K)
from .oracle import GalerkinK, SpectrumReport, assemble_K, kernel_dimension, pv_spectrum, refine

__version__ = "0.1.0"
