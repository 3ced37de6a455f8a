"""Exception hierarchy. Everything derives from ``QuantError`` (a ValueError)."""


class QuantError(ValueError):
    pass


class AllZero(QuantError):
    """Every count is zero, so there is nothing to normalize."""


class NegativeCount(QuantError):
    pass


class DimensionMismatch(QuantError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class DegenerateData(QuantError):
    pass


class EmptyHoldout(QuantError):
    pass


class EmptyTarget(QuantError):
    pass


class EmptyInput(QuantError):
    pass


class PriorMismatch(QuantError):
    pass


class NonFiniteLikelihood(QuantError):
    pass


class BudgetExceedsCell(QuantError):
    pass


class FeaturesUnavailable(QuantError):
    pass


class SimplexViolation(QuantError):
    pass


class ClassCatalogMismatch(QuantError):
    pass


class ParseError(QuantError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ConfigError(QuantError):
    pass
