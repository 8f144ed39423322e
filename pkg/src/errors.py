"""
Exceptions raised by the spherical integral toolkit
"""


class SphericalIntegralError(Exception):
    """Base class for every error raised by this package"""


class DomainError(SphericalIntegralError):
    """Argument outside the domain where the quantity is defined"""


class RangeError(DomainError):
    """Value outside the attainable range of a transform"""


class SingularError(DomainError):
    """Evaluation point hits a positively weighted atom"""


class SizeError(DomainError):
    """Matrix size too small for the requested spectrum"""


class NotPDError(SphericalIntegralError):
    """Cholesky factorisation failed"""


class ConvergenceError(SphericalIntegralError):
    """Root finder or optimiser could not converge"""


class IdentityError(SphericalIntegralError):
    """An exact algebraic identity failed beyond tolerance"""


class QuadratureError(SphericalIntegralError):
    """Adaptive quadrature missed its error target"""


class DegenerateEigsError(SphericalIntegralError):
    """Eigenvalues too close for the bialternant formula"""


class SeedError(SphericalIntegralError):
    """Two parallel streams were given the same seed"""


class ConfigError(SphericalIntegralError):
    """Experiment configuration failed schema validation"""
