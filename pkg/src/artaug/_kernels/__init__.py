"""Kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise
the numpy/scipy fallback in :mod:`pure` is used. Set ARTAUG_KERNELS to
``pure`` or ``compiled`` to force one side (``compiled`` raises if the
extension is missing), or leave it on ``auto``.
"""

from __future__ import annotations

import logging
import os

from . import pure

logger = logging.getLogger(__name__)

_choice = os.environ.get("ARTAUG_KERNELS", "auto").lower()
_impl = pure
BACKEND = "pure"

if _choice not in ("auto", "pure", "compiled"):
    raise RuntimeError(f"ARTAUG_KERNELS must be auto|pure|compiled, got {_choice!r}")

if _choice != "pure":
    try:
        from . import _core

        _impl = _core
        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError(
                "ARTAUG_KERNELS=compiled but the _core extension is not built; "
                "reinstall the package with a working C toolchain"
            )
        logger.debug("compiled kernels not built, falling back to pure numpy")

local_entropy = _impl.local_entropy
canny_nms = _impl.canny_nms
hysteresis = _impl.hysteresis
largest_component_area = _impl.largest_component_area


def backend_name() -> str:
    return BACKEND
