"""Test-time-augmentation OOD detection toolkit.

The native extension provides scorers, metrics, augmentation, synthetic data
and the grid runner; ``ttaood.packio`` reads and writes packs with numpy only.
"""

from . import packio

try:
    from ._core import *  # noqa: F401,F403
    from ._core import DataError, Error, NumericalError, UsageError  # noqa: F401
except ImportError:  # packio stays usable without the native build
    pass

__version__ = "0.1.0"
