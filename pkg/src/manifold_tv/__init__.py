"""Manifold-valued signal and image denoising with first and second order TV.

The package minimizes

    E(u) = 1/2 sum d(f, u)^2 + alpha TV1(u) + beta TV2(u)

for data on Euclidean spaces, the circle, spheres, SPD matrices and their
products, using an inexact cyclic proximal point algorithm whose second
order proximal maps are computed by Riemannian subgradient descent.
"""

from .cppa import (
    Diagnostics,
    FunctionalParams,
    ManifoldImage,
    SolverConfig,
    SplitPlan,
    build_split,
    cppa_run,
    functional_value,
    grid_search,
)
from .datagen import NoiseSpec, add_noise, gen_lemniscate, gen_s2_field, gen_spd_image, mean_error
from .differences import GradTriple, adjoint_midpoint_differential, d2, d11, grad_d2, grad_d11
from .exceptions import DomainError, ManifoldTVError, ParseError, ValidationError
from .imageio import export_csv, read_image, write_image
from .manifolds import Circle, Euclidean, Manifold, Product, manifold_from_descriptor, parse_manifold
from .proximal import (
    ProxSchedule,
    objective_psi,
    prox_d2,
    prox_d11,
    prox_data,
    prox_dist_pair,
    prox_tuples,
)
from .spd import SPD, SPDFrame, SymEigen, matrix_exp, matrix_log, spd_midpoint_weights, sym_eig
from .sphere import Sphere, SphereFrame, sphere_midpoint_weights

__version__ = "0.1.0"

__all__ = [
    "Circle", "Diagnostics", "DomainError", "Euclidean", "FunctionalParams", "GradTriple",
    "Manifold", "ManifoldImage", "ManifoldTVError", "NoiseSpec", "ParseError", "Product",
    "ProxSchedule", "SPD", "SPDFrame", "SolverConfig", "Sphere", "SphereFrame", "SplitPlan",
    "SymEigen", "ValidationError", "add_noise", "adjoint_midpoint_differential",
    "build_split", "cppa_run", "d11", "d2", "export_csv", "functional_value",
    "gen_lemniscate", "gen_s2_field", "gen_spd_image", "grad_d11", "grad_d2", "grid_search",
    "manifold_from_descriptor", "matrix_exp", "matrix_log", "mean_error", "objective_psi",
    "parse_manifold", "prox_d11", "prox_d2", "prox_data", "prox_dist_pair", "prox_tuples",
    "read_image", "spd_midpoint_weights", "sphere_midpoint_weights", "sym_eig",
    "write_image",
]
