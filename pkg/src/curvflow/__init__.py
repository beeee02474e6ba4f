"""curvflow: curvature positivity certification for the complex hyperquadric
and lattice Yang-Mills gradient flow on the 2-sphere.

Subpackages
-----------
spectra      Hermitian eigenvalue utilities and 2-positivity classification.
quadric      Exact curvature algebra of the hyperquadric symmetric space.
sphere_mesh  Geodesic icosphere meshes and the dual-graph Poisson solver.
ym_lattice   Gauge fields, curvature extraction, the gradient flow, and its
             convergence / maximum-principle / heat-mode diagnostics.
pseudoindex  Exact integer arithmetic for the degree-estimate chain.
cli          Command-line front end (``curvflow`` entry point).
"""

from . import pseudoindex, quadric, spectra, sphere_mesh, ym_lattice
from .pseudoindex import (ClassificationResult, SplittingType, check_certificate,
                          classify_by_pseudoindex, m_positivity_bound)
from .quadric import (bisectional_closed, bisectional_trace, certify_two_positivity,
                      curvature_operator, orthogonal_ricci)
from .spectra import (HermitianMatrix, Positivity, PositivityClass, classify_field,
                      eigenvalues_ascending, lambda12_variational)
from .sphere_mesh import SphereMesh, build_icosphere, dual_poisson_solve, spherical_area
from .ym_lattice import (FlowConfig, GaugeField, curvature_field, flow_step,
                         gauge_scramble, holonomy, maxprin_monitor, monopole_field,
                         perturb, run_flow, total_degree, ym_energy, ym_gradient)

__version__ = "0.1.0"
