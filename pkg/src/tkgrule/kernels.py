"""Backend selection for the graph kernels.

The compiled extension is used when it imports; set ``TKGRULE_PURE_PYTHON=1``
to force the pure-Python implementation.
"""
import os

if os.environ.get("TKGRULE_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import BACKEND, classify_many, enumerate_walks, ground_body
else:
    try:
        from ._kernels import BACKEND, classify_many, enumerate_walks, ground_body
    except ImportError:
        from ._kernels_py import BACKEND, classify_many, enumerate_walks, ground_body

__all__ = ["BACKEND", "classify_many", "enumerate_walks", "ground_body"]
