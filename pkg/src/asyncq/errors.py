"""Exception types shared across the package."""


class UsageError(ValueError):
    """Invalid arguments or inputs supplied by the caller."""


class ConvergenceError(RuntimeError):
    """An iterative routine stopped before meeting its tolerance.

    ``value`` carries the last residual (or distance) observed.
    """

    def __init__(self, message, value):
        super().__init__(f"{message} (final value {value:.6g})")
        self.value = value


class NotErgodicError(RuntimeError):
    """The induced Markov chain is not uniformly ergodic."""
