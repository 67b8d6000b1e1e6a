"""Exception types.

``ContractError`` signals a caller bug (bad shapes, out-of-range arguments);
``DataError`` malformed or degenerate input data; ``NumericalError`` a
numerical breakdown that better inputs or parameters could avoid.
"""


class ContractError(ValueError):
    pass


class ParameterError(ValueError):
    pass


class DataError(ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(ArithmeticError):
    pass


class ClusteringError(NumericalError):
    """Sup-norm layer clustering could not produce the requested count."""

    def __init__(self, message, closest_k):
        self.closest_k = closest_k
        super().__init__(message)
