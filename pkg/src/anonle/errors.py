"""Exception hierarchy shared by every module of the package."""


class AnonLEError(Exception):
    """Base class for all errors raised by anonle."""


class InvalidParameterError(AnonLEError, ValueError):
    pass


class GraphValidationError(AnonLEError, ValueError):
    """A graph violates a structural invariant (reciprocity, connectivity, ...)."""


class EdgeListParseError(GraphValidationError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class GenerationFailure(AnonLEError, RuntimeError):
    pass


class CapExceededError(AnonLEError, ValueError):
    pass


class NumericalFailure(AnonLEError, ArithmeticError):
    pass


class BitBudgetViolation(AnonLEError):
    """A payload exceeded the per-link, per-round CONGEST budget."""

    def __init__(self, round_index: int, node: int, port: int, kind: str, bits: int, budget: int):
        self.round_index = round_index
        self.node = node
        self.port = port
        self.kind = kind
        self.bits = bits
        self.budget = budget
        super().__init__(
            f"round {round_index}: link (node {node}, port {port}) carried {kind!r} "
            f"payload of {bits} bits over budget {budget}"
        )


class EncodingError(AnonLEError, ValueError):
    pass


class ProtocolCorruption(AnonLEError, RuntimeError):
    pass


class SpecError(AnonLEError, ValueError):
    """Experiment spec file could not be parsed or validated."""
