"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Tensor operands have incompatible or unsupported shapes."""


class GraphError(RuntimeError):
    """Reverse-mode bookkeeping misuse (e.g. backward without a recorded forward)."""


class ConfigError(ValueError):
    """A configuration value or combination violates its contract."""


class FormatError(ValueError):
    """A file does not conform to its declared binary or text format."""


class DataError(ValueError):
    """A dataset cannot be used (missing class, empty, unresolvable path)."""
