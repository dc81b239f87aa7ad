"""Unified token representation for return-conditioned offline RL policies.

Subpackages are plain modules: ``tensor`` (autodiff), ``tokenization``,
``mixers``, ``models``, ``envs``/``data``, ``training``/``evaluation``,
``analysis``/``rademacher`` and the ``cli``.
"""
from .errors import ConfigError, DimensionError, NonFiniteGradientError, NonFiniteLossError, UsageError, UTRError
from .models import ModelConfig, PolicyModel

__version__ = "0.1.0"

__all__ = ["ConfigError", "DimensionError", "ModelConfig", "NonFiniteGradientError", "NonFiniteLossError",
           "PolicyModel", "UTRError", "UsageError", "__version__"]
