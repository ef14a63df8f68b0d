"""Exception types shared across the library and mapped to CLI exit codes."""


class ConfigError(Exception):
    """Bad or missing configuration (CLI exit code 2)."""


class HypothesisViolation(Exception):
    """A closed-form result was requested outside its range of validity (CLI exit code 3)."""


class NumericalFailure(Exception):
    """An iteration failed to converge or a solve blew up (CLI exit code 4)."""
