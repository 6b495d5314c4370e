"""Select the compiled kernels when available, else the NumPy fallback.

Set ``KLCETEST_PURE=1`` before import to force the fallback.
"""

import os

from . import _pure

NAME = "pure"
_impl = _pure

if not os.environ.get("KLCETEST_PURE"):
    try:
        from . import _ext as _impl  # noqa: F811
    except ImportError:
        pass
    else:
        NAME = "compiled"

# BLAS gemm beats a scalar loop for the resampled quadratic forms, so the
# bootstrap always takes the NumPy path (see benchmarks/bench_backends.py).
bootstrap_offdiag = _pure.bootstrap_offdiag

rbf_gram = _impl.rbf_gram
rbf_cross = _impl.rbf_cross
offdiag_quadratic = _impl.offdiag_quadratic
pava = _impl.pava
