"""Kernel backend selection.

Two interchangeable implementations of advance_block exist: a compiled
extension (_ckernels, Cython) and a numpy fallback (_pykernels).  The
compiled one is picked when importable; set ASGD_KERNEL=py or ASGD_KERNEL=c
before import to force a choice.  Forcing c without the built extension
raises the underlying ImportError.
"""

import os

from ..errors import ConfigError


def _select():
    choice = os.environ.get("ASGD_KERNEL", "auto").strip().lower() or "auto"
    if choice not in ("auto", "c", "py"):
        raise ConfigError(f"ASGD_KERNEL must be 'c' or 'py', got {choice!r}")
    if choice in ("auto", "c"):
        try:
            from . import _ckernels
            return "c", _ckernels
        except ImportError:
            if choice == "c":
                raise
    from . import _pykernels
    return "py", _pykernels


BACKEND_NAME, _impl = _select()
advance_block = _impl.advance_block


def get_backend(name: str):
    """Fetch a backend module by name ('c' or 'py'); tests and benchmarks only."""
    if name == "py":
        from . import _pykernels
        return _pykernels
    if name == "c":
        from . import _ckernels
        return _ckernels
    raise ValueError("backend name must be 'c' or 'py'")
