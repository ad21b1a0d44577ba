"""Exception hierarchy shared by all modules."""


class Error(Exception):
    """Base class for marcusflow errors."""


class ParameterError(Error, ValueError):
    """Invalid parameter or inconsistent dimensions."""


class JumpTransportError(Error):
    """Non-finite state while transporting a jump along the fictitious-time ODE."""

    def __init__(self, message, jump=None, state=None):
        super().__init__(message)
        self.jump = jump
        self.state = state


class IntegrationError(Error):
    """The extended integral cannot be assembled from the given path."""


class EvaluationError(Error):
    """A flow derivative or composed evaluation could not be estimated."""


class ChangeOfVariablesError(Error):
    """The diffeomorphism is not invertible at a visited point."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class BreakdownError(Error):
    """The horizontal/vertical factorization does not exist at the requested point."""


class SpectralSelectionError(Error):
    """Requested real/complex eigenvalue counts are not available."""


class CascadeBreakdown(Error):
    """A nested trailing minor vanished during flag factorization."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


class DomainError(Error):
    """Point lies outside every tracked factor window."""


class DegeneracyError(Error):
    """A direction field vanishes on a non-excluded cell."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class ConfigError(Error):
    """Scenario configuration is invalid; names the offending field and line."""

    def __init__(self, message, field=None, line=None, source=None):
        self.field, self.line, self.source = field, line, source
        loc = []
        if source:
            loc.append(str(source))
        if line is not None:
            loc.append(f"line {line}")
        if field:
            loc.append(f"field '{field}'")
        super().__init__(f"{': '.join([', '.join(loc), message]) if loc else message}")
