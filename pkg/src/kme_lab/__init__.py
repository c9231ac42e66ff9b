"""Kernel mean embeddings of Gaussian and discrete measures, with minimax lower-bound tooling."""

from .errors import (
    ArgumentError,
    ConstructionError,
    IntegrationError,
    InternalConsistencyError,
    KmeLabError,
    PreconditionError,
    ReplicateError,
    UnsupportedCaseError,
)
from .geometry import IsotropicGaussian, TwoPointDiscrete, WeightedPointMeasure
from .kernels import (
    RadialKernel,
    custom_kernel,
    gaussian_kernel,
    gaussian_mixture_kernel,
    imq_kernel,
    kernel_constants,
    kernel_from_spec,
    kernel_to_spec,
    matern_kernel,
)

__version__ = "0.1.0"
