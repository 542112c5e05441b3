"""
Constructive deep ReLU approximation, covering-number capacity bounds and
depth-selection experiments.
"""
from ._version import version, version_info  # noqa:F401
from .errors import (  # noqa:F401
    ReluDepthError,
    InvalidInputError,
    InvalidConfigError,
    SpecViolationError,
    MalformedDocumentError,
    TaylorError,
    DivergenceError,
    VerificationFailure,
)
from .netcore import LayerSpec, ReluNet  # noqa:F401
