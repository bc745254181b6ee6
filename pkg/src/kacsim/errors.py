"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a kernel or geometric map."""


class ConfigError(ValueError):
    """An experiment or simulation configuration is malformed."""


class InvariantViolation(RuntimeError):
    """A conserved quantity drifted beyond its numerical budget."""


class PopulationExplosion(RuntimeError):
    """A branching population grew past its configured cap."""
