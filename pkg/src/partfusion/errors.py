class PartFusionError(Exception):
    pass


class DegenerateInput(PartFusionError, ValueError):
    """Point set or embedding set too degenerate for the requested operation."""


class SingularInput(PartFusionError, ValueError):
    pass


class SingularScale(PartFusionError, ValueError):
    pass


class InvalidState(PartFusionError, ValueError):
    """Joint state outside ``[0, state_max]``."""


class AllZeroWeights(PartFusionError, ValueError):
    pass


class ShapeError(PartFusionError, ValueError):
    pass


class EmptyInput(PartFusionError, ValueError):
    pass


class ValidationFailure(PartFusionError, ValueError):
    """Input records violate type invariants."""
