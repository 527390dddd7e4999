"""Joint modeling of reward-based choices and response times with latent
engaged/lapsed strategy switching: simulation, fitting, and behavioral
metrics for the RL-HMM-DDM family of models."""

__version__ = "0.1.0"

from .wfpt import DdmParams, DomainError, SamplingError  # noqa: F401
