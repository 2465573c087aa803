"""Exception hierarchy shared by all modules."""


class LaeBoundError(Exception):
    """Base class for every error raised by this package."""


class UserError(LaeBoundError, ValueError):
    """Invalid arguments, configuration or input files (CLI exit code 1)."""


class DimensionError(UserError):
    pass


class ArgumentError(UserError):
    pass


class ParseError(UserError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDatasetError(UserError):
    pass


class CapacityError(UserError):
    pass


class NumericalError(LaeBoundError, ArithmeticError):
    """Numerical failure (CLI exit code 2)."""


class NotPSDError(NumericalError):
    def __init__(self, eigenvalue, tol):
        super().__init__(f"matrix is not PSD: eigenvalue {eigenvalue:.6g} < -{tol:.3g}")
        self.eigenvalue = eigenvalue
        self.tol = tol


class SingularMatrixError(NumericalError):
    def __init__(self, eigenvalue, tol):
        super().__init__(
            f"matrix is not positive definite: smallest eigenvalue {eigenvalue:.6g} <= {tol:.3g}"
        )
        self.eigenvalue = eigenvalue
        self.tol = tol


class DomainError(NumericalError):
    """lambda outside the region where the moment generating function is finite."""

    def __init__(self, lam, threshold):
        super().__init__(f"lambda={lam:.6g} must be below 1/(2*eta_1)={threshold:.6g}")
        self.lam = lam
        self.threshold = threshold


class NoFeasibleLambdaError(NumericalError):
    def __init__(self, threshold):
        super().__init__(
            f"every lambda in the grid was rejected; the MGF domain requires lambda < {threshold:.6g}"
        )
        self.threshold = threshold
