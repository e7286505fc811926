"""Exception hierarchy shared by all simulator modules."""


class SimulatorError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SimulatorError):
    """Invalid parameter, inconsistent setup, or bad scenario configuration."""


class AddressError(SimulatorError):
    """Guest-physical address or range outside machine memory."""


class ConfigFileError(ConfigurationError):
    """Scenario config file failed validation.

    Carries the full list of (key, reason) pairs so callers can report
    every problem at once instead of one per invocation.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        lines = "; ".join(f"{key}: {reason}" for key, reason in self.problems)
        super().__init__(f"invalid config ({len(self.problems)} problem(s)): {lines}")


class ReportMismatchError(SimulatorError):
    """Two reports cannot be compared (different config digests)."""
