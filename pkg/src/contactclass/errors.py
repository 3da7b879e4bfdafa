"""Exception hierarchy shared by all modules."""


class ContactClassError(Exception):
    """Base class for errors raised by this package."""


class DomainError(ContactClassError, ValueError):
    """An argument lies outside the domain of a function."""


class BracketError(ContactClassError, ValueError):
    """A root-finding bracket does not contain a sign change."""


class ConvergenceError(ContactClassError, RuntimeError):
    """An iterative method hit its iteration limit."""


class ConfigError(ContactClassError, ValueError):
    """Invalid run configuration."""


class SimulationError(ContactClassError, RuntimeError):
    """A simulation produced an inconsistent state."""
