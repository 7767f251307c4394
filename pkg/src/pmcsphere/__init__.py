"""Spectral toolkit for conformal immersions of S^2 with prescribed mean
curvature: harmonic analysis on the sphere, immersion geometry and its
structure-equation residuals, explicit minimal families, and a gauge-fixed
Gauss-Newton continuation solver."""

from .affine import AffineFunction, canonical_representative, class_membership
from .errors import (
    ChartDomainError,
    ConfigurationError,
    ConformalityError,
    DataError,
    InputError,
)
from .geometry import (
    BranchPoint,
    BranchScan,
    FundamentalForms,
    ImmersionField,
    codazzi_residual,
    conformality_residual,
    detect_branch_points,
    fundamental_forms,
    gauss_identity_residual,
    mc_residual,
    obstruction_vector,
    verify,
)
from .grid import (
    ChartPoint,
    HarmonicField,
    SphericalGrid,
    analyze,
    chart_gradient,
    integrate,
    synthesize,
    synthesize_at,
)
from .planar import (
    DiskGrid,
    PlanarImmersion,
    detect_branch_points_planar,
    enneper_blowdown,
    richardson_limit,
    total_curvature,
    variation_field_check,
    weierstrass_family,
)
from .solver import (
    ContinuationState,
    GaugeBasis,
    SolveResult,
    SolverConfig,
    affine_insolvability_check,
    gauge_basis,
    gauge_projected_step,
    normal_variation_operator,
    residual,
    solve_pmc,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
