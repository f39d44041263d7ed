"""Exception hierarchy shared by every module."""


class AmbiSddpError(Exception):
    """Base class."""


class NumericalFailure(AmbiSddpError):
    pass


class Infeasible(AmbiSddpError):
    pass


class Unbounded(AmbiSddpError):
    pass


class NodeLimit(AmbiSddpError):
    pass


class ModelError(AmbiSddpError):
    """Malformed or assumption-violating model data."""


class DimensionMismatch(ModelError):
    pass


class UnboundedInteger(ModelError):
    pass


class TooLarge(ModelError):
    pass


class BadBound(AmbiSddpError):
    pass


class DualInfeasible(AmbiSddpError):
    pass


class NegativeRadius(ModelError):
    pass


class EmptyDisjunct(ModelError):
    pass


class TooManyDisjuncts(ModelError):
    pass


class BadGrid(ModelError):
    pass


class DegenerateGeometry(ModelError):
    pass
