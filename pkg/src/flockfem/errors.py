"""Exception types shared across the solver and diagnostics."""


class FlockFemError(Exception):
    """Base class for all package-specific failures."""


class FloorViolation(FlockFemError):
    """Filtered density dropped below the configured floor.

    Carries the offending minimum and its location; signals approach to the
    continuation-criterion breakdown (1/rho_phi no longer controllable).
    """

    def __init__(self, min_value, location, floor):
        self.min_value = float(min_value)
        self.location = float(location)
        self.floor = float(floor)
        super().__init__(
            f"filtered density {self.min_value:.6g} at x={self.location:.6g} "
            f"fell below floor {self.floor:.6g}"
        )


class SolverFailure(FlockFemError):
    """Direct linear solve reported a (near-)singular matrix or a bad residual."""


class BlowUpSuspected(FlockFemError):
    """A runtime monitor tripped (density floor or velocity-gradient cap)."""

    def __init__(self, quantity, value, location, threshold):
        self.quantity = quantity
        self.value = float(value)
        self.location = float(location)
        self.threshold = float(threshold)
        super().__init__(
            f"monitor '{quantity}' = {self.value:.6g} at x={self.location:.6g} "
            f"crossed threshold {self.threshold:.6g}"
        )


class CFLViolation(FlockFemError):
    """Time step exceeds the configured ratio of the mesh width (strict mode)."""


class DegenerateSeries(FlockFemError):
    """Decay-rate fit requested on a series that cannot support it."""


class ConfigError(FlockFemError):
    """Run configuration failed validation."""
