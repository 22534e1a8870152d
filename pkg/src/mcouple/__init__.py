"""Explicit martingale couplings between discrete measures in convex order."""

from .errors import *  # noqa: F401,F403
from .measures import (
    DiscreteMeasure,
    OrderReport,
    cdf,
    check_order,
    from_atoms,
    is_symmetric,
    mean_and_moment,
    quantile,
    wasserstein_1d,
)
from .quantile_calculus import (
    BreakpointPartition,
    GeneralizedInverse,
    PiecewiseLinear,
    StepFunction,
    chi_maps,
    gen_inverse,
    partition,
    phi_maps,
    psi_pair,
)
from .qparam import QParam, q_it, q_mix, q_nit, q_product, q_zeta, validate_q
from .coupling_builder import (
    JointMeasure,
    KernelCell,
    build_coupling,
    build_itmc,
    build_kernel,
    build_submartingale,
    build_supermartingale,
    comonotone,
    lift_to_joint,
    sample,
)
from .analysis import (
    c_rho,
    comonotone_is_martingale,
    cost,
    crho_extremality,
    irreducible_components,
    left_curtain_family,
    monge_check,
    stability_experiment,
    verify_coupling,
)
from .lp_oracle import min_cost_coupling, w1_r2
from .discretize import discretize

__version__ = "0.1.0"
