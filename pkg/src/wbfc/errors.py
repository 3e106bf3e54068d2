"""Exception types shared across the package."""


class SingularTaskError(ValueError):
    """Task Jacobian lost row rank; carries the offending singular value."""

    def __init__(self, sigma, message=None):
        self.sigma = float(sigma)
        super().__init__(message or f"task Jacobian is rank deficient (sigma={sigma:.3e})")


class SingularContactError(SingularTaskError):
    """Contact Jacobian lost row rank."""


class IllPosedDecompositionError(ValueError):
    """Weighted selection matrix product is singular; the torque split is undefined."""


class NoContactError(ValueError):
    """Force distribution requested with zero active contacts."""


class QpSolverError(RuntimeError):
    """Dual active-set iteration failed; carries the last iterate when available."""

    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class DistributionInfeasibleError(QpSolverError):
    """Contact-force distribution QP did not converge."""


class TuningInfeasibleError(ValueError):
    """No filter time constant in the search range satisfies the certificate."""


class DcUncertaintyError(ValueError):
    """Static gain uncertainty is 100% or more; offset-free force control is impossible."""


class SimulationDivergedError(RuntimeError):
    """Integration produced non-finite state; carries the last valid world."""

    def __init__(self, message, last_world=None):
        self.last_world = last_world
        super().__init__(message)
