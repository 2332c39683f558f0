"""Exception hierarchy shared by every module of the package."""


class RecoveryError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(RecoveryError, ValueError):
    """Malformed argument: wrong shape, non-finite entries, bad index, ..."""


class InvalidRankError(InvalidInputError):
    pass


class ConfigurationError(RecoveryError, ValueError):
    """A solver or experiment configuration violates its invariants."""


class DivergenceError(RecoveryError, ArithmeticError):
    """A solver produced a non-finite iterate."""

    def __init__(self, solver: str, iteration: int):
        super().__init__(f"{solver}: non-finite iterate at iteration {iteration}")
        self.solver = solver
        self.iteration = iteration


class DegenerateStepError(RecoveryError, ArithmeticError):
    """Barzilai-Borwein step undefined because two snapshots coincide."""


class DomainError(RecoveryError, ValueError):
    """A closed-form constant was requested outside its domain of definition."""


class FormatError(RecoveryError, ValueError):
    """Unreadable or unsupported file contents (pixmaps, configs)."""


class ConfigParseError(FormatError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key
