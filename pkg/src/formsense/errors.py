"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration file failed to parse or validate.

    The message is anchored to the offending section/field, e.g.
    ``"gains.epsilon: must be > 0"``.
    """


class InsufficientAgentsError(ValueError):
    """An operation that needs an isotropic formation was asked for fewer
    than three agents."""


class SingularGeometryError(ValueError):
    """The agent geometry carries no invertible position information
    (e.g. all bearings collinear), so the CRLB is unbounded."""
