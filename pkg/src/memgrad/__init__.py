"""Gradient models of memristive circuits on sampled trajectory spaces."""
from . import circuits, elements, gradient, neuron, trajectory
from ._schema import ConfigError
from .circuits import *  # noqa: F401,F403
from .elements import *  # noqa: F401,F403
from .gradient import *  # noqa: F401,F403
from .neuron import *  # noqa: F401,F403
from .trajectory import *  # noqa: F401,F403

__version__ = "0.1.0"
