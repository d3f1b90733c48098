class DimensionError(ValueError):
    """Shapes or declared tensor factors do not fit together."""


class InvalidStateError(ValueError):
    """A matrix fails the density-matrix or pure-state checks."""


class InvalidChannelError(ValueError):
    """Kraus operators do not describe a CPT map."""


class RankAmbiguityError(ValueError):
    """Eigenvalues sit too close to the rank cutoff to decide the rank."""


class UnboundedDualError(RuntimeError):
    """The sampled dual LP is unbounded (constraint states do not span)."""


class ConfigError(ValueError):
    """An experiment configuration cannot be parsed or resolved."""
