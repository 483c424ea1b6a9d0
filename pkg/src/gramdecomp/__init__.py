"""Gramian decomposition of even-order symmetric tensors / polynomials via
a trace-minimizing moment-matrix completion SDP, with dual optimality
certificates."""

from .monomials import MonomialBasis, enumerate_basis, multinomial
from .polytensor import (
    Decomposition,
    MomentSequence,
    Polynomial,
    SymmetricTensor,
    moments_from_decomposition,
    moments_from_poly,
    poly_from_decomposition,
    poly_to_tensor,
    tensor_to_poly,
    verify_decomposition,
)
from .moments import (
    ExtractionError,
    KernelBasis,
    MomentMatrix,
    VandermondeMatrix,
    build_moment_matrix,
    build_vandermonde,
    check_flat_extension,
    extract_points,
    kernel_extension,
    moment_matrix_from_decomposition,
    numerical_rank,
    refine_decomposition,
)

__version__ = "0.1.0"

__all__ = [
    "MonomialBasis",
    "enumerate_basis",
    "multinomial",
    "Polynomial",
    "SymmetricTensor",
    "Decomposition",
    "MomentSequence",
    "tensor_to_poly",
    "poly_to_tensor",
    "poly_from_decomposition",
    "moments_from_poly",
    "moments_from_decomposition",
    "verify_decomposition",
    "MomentMatrix",
    "VandermondeMatrix",
    "KernelBasis",
    "ExtractionError",
    "build_moment_matrix",
    "build_vandermonde",
    "moment_matrix_from_decomposition",
    "numerical_rank",
    "check_flat_extension",
    "kernel_extension",
    "extract_points",
    "refine_decomposition",
    "__version__",
]
