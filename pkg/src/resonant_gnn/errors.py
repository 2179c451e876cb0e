"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes do not agree."""


class ConfigError(ValueError):
    """Invalid configuration or argument combination."""


class ParseError(ValueError):
    """An input file could not be parsed."""


class StateError(RuntimeError):
    """An object is missing data required by the requested operation."""
