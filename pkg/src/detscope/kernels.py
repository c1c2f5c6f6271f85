"""Kernel backend selection.

Prefers the compiled extension, falls back to the numpy implementation.
Override with DETSCOPE_KERNELS=python|compiled (compiled raises if the
extension is missing).  Both backends are bitwise-identical; switching
never changes results.
"""

from __future__ import annotations

import os

_choice = os.environ.get("DETSCOPE_KERNELS", "auto").lower()

if _choice not in ("auto", "python", "compiled"):
    raise ValueError(
        f"DETSCOPE_KERNELS must be auto, python or compiled, got {_choice!r}"
    )

if _choice == "python":
    from . import _kernels_py as _impl

    BACKEND = "python"
elif _choice == "compiled":
    from . import _kernels as _impl  # type: ignore[attr-defined]

    BACKEND = "compiled"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"

pairwise_iou = _impl.pairwise_iou
greedy_match = _impl.greedy_match
