"""Flow classification with optimized histogram binnings and early exits."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
