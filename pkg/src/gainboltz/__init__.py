"""Gain-term-only Boltzmann toolkit: collision kinematics, gain quadrature,
homogeneous blowup runs and Picard iterates of the inhomogeneous problem."""

__version__ = "0.1.0"

from .classical import ClassicalCollision, hard_sphere_B, in_admissible_set, post_collision
from .core_model import (
    ClassicalHardSphere,
    ConfigurationError,
    DistributionField,
    DomainError,
    FourMomentum,
    RelativisticConstantSigma,
    RelativisticMaxwellian,
    SphereQuadrature,
    VelocityGrid,
    make_sphere_quadrature,
    make_velocity_grid,
)
from .dynamics import (
    BlowupReport,
    ComparisonState,
    Controls,
    InconclusiveRunError,
    check_domination,
    co_evolve,
    comparison_solution,
    evolve_full_homogeneous,
    evolve_truncated,
)
from .gain import (
    DeltaEstimate,
    EstimationError,
    check_monotone,
    estimate_delta,
    gain_apply,
    gain_on_grid,
    q_r_apply,
)
from .mild import (
    InhomogeneousConfig,
    PicardEvaluator,
    check_shrinking_ball,
    eval_phi,
    eval_picard,
    reduced_homogeneous_blowup,
)
from .oracle import McEstimate, mc_delta, mc_form_equivalence, mc_gain
from .relativistic import (
    RelativisticCollision,
    invariants_sg,
    kernel_B,
    kernel_k,
    post_collision_rel,
    post_momenta,
)
