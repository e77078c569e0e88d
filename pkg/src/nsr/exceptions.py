"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """Shape, length or range of an argument is wrong."""


class NumericInputError(ValueError):
    """An input contains NaN (or another non-finite value where forbidden)."""


class ContractViolationError(RuntimeError):
    """An operation was called in a state its contract forbids."""


class EmptyBufferError(RuntimeError):
    """Sampling was requested from a replay buffer holding no episodes."""


class ConfigValidationError(ValueError):
    """A run configuration failed validation.

    ``violations`` lists every problem found, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid config: " + "; ".join(self.violations))
