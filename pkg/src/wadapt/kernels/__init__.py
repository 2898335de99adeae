"""Hot kernels (conv2d / maxpool2d forward+backward) with two interchangeable
backends: a compiled Cython extension and a pure numpy fallback.

The compiled backend is preferred when present; set ``WADAPT_KERNELS=numpy``
or ``WADAPT_KERNELS=cython`` to force a choice. ``benchmarks/bench_kernels.py``
compares the two.
"""

import os

from . import numpy_ref

try:
    from . import _convpool as _ext
except ImportError:
    _ext = None

_forced = os.environ.get("WADAPT_KERNELS", "").strip().lower()
if _forced in ("numpy", "python", "ref"):
    _impl = numpy_ref
    BACKEND = "numpy"
elif _forced in ("cython", "ext", "compiled"):
    if _ext is None:
        raise ImportError(
            "WADAPT_KERNELS requested the compiled backend but wadapt.kernels._convpool "
            "is not built; run `python setup.py build_ext --inplace`"
        )
    _impl = _ext
    BACKEND = "cython"
elif _ext is not None:
    _impl = _ext
    BACKEND = "cython"
else:
    _impl = numpy_ref
    BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool2d_forward = _impl.maxpool2d_forward
maxpool2d_backward = _impl.maxpool2d_backward


def available_backends() -> dict:
    """Importable backend modules keyed by name."""
    out = {"numpy": numpy_ref}
    if _ext is not None:
        out["cython"] = _ext
    return out
