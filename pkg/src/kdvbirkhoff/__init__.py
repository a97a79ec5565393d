"""Truncated germ calculus, symplectic normal forms, and spectral Birkhoff
coordinates for KdV built from the Hill operator.

The package has three layers:

* ``phase_space`` / ``truncation`` / ``germs`` / ``forms`` -- weighted
  sequence spaces and a polynomial germ calculus (composition, inversion,
  differentials and adjoints, majorants, angle averaging, Poisson brackets,
  exact homotopy flows, germ-coefficient differential forms);
* ``normal_form`` -- the two-step normalization that turns a near-identity
  germ with commuting composed actions into a symplectic one;
* ``hill`` -- the spectral side: Hill-operator discretization, gap lengths,
  spectral projections and transformation operators, the gap-coordinate map
  and its closed-form Taylor kernels.

``cli`` drives the verification experiments (`kdvbirkhoff --help`).
"""

from .truncation import Truncation
from .phase_space import (GridFunction, ModeSequence, diag_weight,
                          fourier_analyze, fourier_synthesize,
                          reality_embed, reality_project, sobolev_norm,
                          weight_backward, weight_forward)
from .germs import (FlowMap, GermMatrix, ScalarGerm, TauPoly, TruncatedGerm,
                    adjoint_differential, compose, differential, flow,
                    gradient, invert, pairing_germ, poisson_bracket)
from .forms import (OneFormGerm, TwoFormGerm, exterior_derivative,
                    interior_product, neumann_inverse, omega0, primitive,
                    pullback, pullback_omega0)
from .normal_form import (NormalFormReport, NormalizationState, average_step,
                          exact_step, moser_solve, normalize, prepare,
                          verify_germ)
from .hill import (HillOperator, SpectralData, eval_Z2, eval_Z3,
                   gap_gradient, kdv_germ, kernel_Z2, kernel_Z3,
                   nu_poisson_bracket, psi2, psi_map, z_map)

__version__ = "0.1.0"
