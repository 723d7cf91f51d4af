"""Exception hierarchy shared by the toolkit.

Each family maps onto one CLI exit-code category.
"""


class MoedaError(Exception):
    exit_code = 1


class ParseError(MoedaError):
    """Malformed input file: library JSON, .bench text, netlist dump or config."""

    exit_code = 2


class SchemaError(ParseError):
    pass


class StructuralError(ParseError):
    """A data structure violates an invariant (e.g. non-ascending table index)."""


class ConstraintError(MoedaError):
    """Inconsistent constraint or configuration values."""

    exit_code = 3


class EvaluationError(MoedaError):
    """A netlist or chromosome cannot be evaluated."""

    exit_code = 4


class MeasurementError(EvaluationError):
    pass


class RangeError(MeasurementError):
    pass
