"""Hot-kernel backend selection.

The compiled (Cython) backend is used when its extension module built;
set VOXADAPT_PURE=1 to force the pure-numpy fallback. Both backends
satisfy the same contracts; results within one backend are bit-stable.
"""

import os

from . import numpy_backend
from .numpy_backend import PAD_EDGE, PAD_ZERO, same_pad

__all__ = [
    "BACKEND",
    "PAD_EDGE",
    "PAD_ZERO",
    "available_backends",
    "conv1d_backward",
    "conv1d_forward",
    "get_backend",
    "layer_norm_backward",
    "layer_norm_forward",
    "same_pad",
]

if os.environ.get("VOXADAPT_PURE", ""):
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import compiled_backend as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = numpy_backend
        BACKEND = "numpy"

conv1d_forward = _impl.conv1d_forward
conv1d_with_cache = _impl.conv1d_with_cache
conv1d_backward = _impl.conv1d_backward
layer_norm_forward = _impl.layer_norm_forward
layer_norm_backward = _impl.layer_norm_backward


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        from . import compiled_backend  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Explicit backend module lookup (used by parity tests and benchmarks)."""
    if name == "numpy":
        return numpy_backend
    if name == "compiled":
        from . import compiled_backend

        return compiled_backend
    raise ValueError(f"unknown kernel backend: {name!r}")
