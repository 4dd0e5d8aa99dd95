"""Pick the compiled pair loops when available, else the numpy fallback.

Set ``GRAINROM_PURE_PYTHON=1`` to force the fallback.
"""

import logging
import os

from . import _pycore

log = logging.getLogger(__name__)

_core = None
if os.environ.get("GRAINROM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core
    except ImportError:  # not built
        log.debug("compiled SPH core unavailable, using numpy fallback")

BACKENDS = {"python": _pycore}
if _core is not None:
    BACKENDS["cython"] = _core

NAME = "cython" if _core is not None else "python"
impl = BACKENDS[NAME]


def get(name=None):
    """Backend module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {sorted(BACKENDS)}") from None
