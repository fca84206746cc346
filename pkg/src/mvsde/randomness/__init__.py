from .brownian import (
    BrownianPath,
    BrownianPaths,
    available_backends,
    default_backend,
    increment,
    sample_at,
)
from .seeds import InitialLaw, SeedSpec, gaussian_initials

__all__ = [
    "BrownianPath",
    "BrownianPaths",
    "InitialLaw",
    "SeedSpec",
    "available_backends",
    "default_backend",
    "gaussian_initials",
    "increment",
    "sample_at",
]
