"""Exception types raised across the package."""


class SFCMLError(Exception):
    """Base class for all errors raised by sfcml."""


class MalformedLine(SFCMLError, ValueError):
    def __init__(self, line_number, reason=""):
        self.line_number = line_number
        msg = f"malformed ratings line {line_number}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class EmptyDataset(SFCMLError, ValueError):
    pass


class InsufficientInteractions(SFCMLError, ValueError):
    def __init__(self, user, n_pos):
        self.user = user
        super().__init__(f"user {user} has {n_pos} positives; cannot fill train/val/test")


class IndexOutOfRange(SFCMLError, IndexError):
    pass


class InsufficientItems(SFCMLError, ValueError):
    pass


class DegenerateGraph(SFCMLError, ValueError):
    """The preference vector has no positives or no unobserved items."""

    def __init__(self, n_pos, n_items, user=None):
        self.user = user
        where = f" (user {user})" if user is not None else ""
        super().__init__(
            f"degenerate preference graph{where}: n_pos={n_pos}, N={n_items}; need 0 < n_pos < N"
        )


class TooLargeForDense(SFCMLError, ValueError):
    pass


class TooLargeForNaive(SFCMLError, ValueError):
    pass


class InvalidTriplet(SFCMLError, ValueError):
    pass


class NotEnoughNegatives(SFCMLError, ValueError):
    def __init__(self, n_neg, n_samples, user=None):
        self.user = user
        where = f" for user {user}" if user is not None else ""
        super().__init__(f"cannot draw {n_samples} distinct negatives from {n_neg}{where}")


class InvalidSample(SFCMLError, ValueError):
    pass


class MismatchedSpace(SFCMLError, ValueError):
    pass


class EmptyRelevantSet(SFCMLError, ValueError):
    pass


class DegenerateCandidates(SFCMLError, ValueError):
    pass


class NoEvaluableUsers(SFCMLError, ValueError):
    pass


class ConfigError(SFCMLError, ValueError):
    pass


class UnknownKey(ConfigError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown config key: {name}")


class InvalidValue(ConfigError):
    def __init__(self, key, text, reason=""):
        self.key = key
        self.text = text
        msg = f"invalid value for {key}: {text!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class MissingKey(ConfigError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing required config key: {name}")
