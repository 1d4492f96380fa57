"""Linear excitatory/inhibitory rate networks with row-balanced Gaussian coupling."""
__version__ = "0.1.0"

from .params import InitialCondition, ModelParams, NoiseLaw  # noqa: E402,F401
