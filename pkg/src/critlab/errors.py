"""Exceptions raised by the model engines.

Every failure that a model detects at run time derives from :class:`ModelError`,
so callers such as the CLI can tell model-signalled failures apart from bad
configuration.
"""


class ModelError(Exception):
    """Base class for failures signalled by a model."""


class DiscretizationError(ModelError):
    """Time step too coarse for the requested dynamics."""


class UnstableMatrixError(ModelError):
    """A stability matrix has an eigenvalue with non-positive real part."""


class SingularMatrixError(ModelError):
    """A linear system needed by the model is singular."""


class DivergenceError(ModelError):
    """A trajectory grew without bound."""


class InfeasibleError(ModelError):
    """No equilibrium with strictly positive entries exists."""


class NonStationaryError(ModelError):
    """Parameters put the model outside its stationary regime."""


class FitError(ModelError):
    """A statistical fit could not be carried out."""


class BracketError(ModelError):
    """A root-finding range does not bracket the transition."""
