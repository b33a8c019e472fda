"""Exception hierarchy.

Every exception carries enough context to produce a one-line diagnostic;
the CLI maps the classes onto its exit-code contract.
"""

from __future__ import annotations


class NCSError(Exception):
    """Base class for all errors raised by ncsroute."""


class DimensionError(NCSError, ValueError):
    """Two matrices have incompatible shapes."""

    def __init__(self, first: str, second: str, detail: str):
        self.pair = (first, second)
        super().__init__(f"dimension mismatch between {first} and {second}: {detail}")


class ModelError(NCSError, ValueError):
    """A plant or controller violates a structural assumption."""


class UnstableSystemError(NCSError):
    """The closed loop is not Hurwitz (or lacks a required margin)."""

    def __init__(self, abscissa: float, message: str | None = None):
        self.abscissa = float(abscissa)
        super().__init__(message or f"closed loop is unstable (spectral abscissa {self.abscissa:.6g})")


class MarginError(UnstableSystemError):
    """The spectral abscissa does not clear a requested decay rate."""

    def __init__(self, abscissa: float, alpha: float, eigenvalue: complex):
        self.alpha = float(alpha)
        self.eigenvalue = complex(eigenvalue)
        super().__init__(
            abscissa,
            f"eigenvalue {self.eigenvalue:.6g} violates the decay margin "
            f"Re(lambda) < -{self.alpha:.6g}",
        )


class SingularSystemError(NCSError):
    """A linear solve is (numerically) singular."""


class PreconditionError(NCSError, ValueError):
    """An operation was called outside its domain (rank, sign, grid...)."""


class DegenerateResidualError(NCSError):
    """Residual energy vanishes; the ratio is undefined."""

    def __init__(self, residual: float):
        self.residual = float(residual)
        super().__init__(
            f"residual energy {self.residual:.3e} is below 1e-14; "
            "the routing matrix hides every mode from the residual"
        )


class CapUnattainableError(NCSError):
    """No sampled stabilizing routing matrix meets the residual-energy cap."""

    def __init__(self, epsilon_tr: float, min_residual: float):
        self.epsilon_tr = float(epsilon_tr)
        self.min_residual = float(min_residual)
        super().__init__(
            f"residual cap {self.epsilon_tr:.6g} unattainable; "
            f"minimum residual energy reached was {self.min_residual:.6g}"
        )


class DefectiveEigenstructureError(NCSError):
    """Eigenvector matrix is too ill-conditioned for modal diagnostics."""

    def __init__(self, condition: float):
        self.condition = float(condition)
        super().__init__(
            f"eigenvector matrix condition number {self.condition:.3e} exceeds 1e8; "
            "A_R is near-defective, interpret stealth scores with caution"
        )


class NumericalError(NCSError, ArithmeticError):
    """Internal numeric failure (overflow, non-convergence)."""


class ConfigError(NCSError, ValueError):
    """A configuration document failed validation."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
