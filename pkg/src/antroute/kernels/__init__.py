"""Kernel selection: compiled extension when available, pure Python otherwise.

Set ANTROUTE_PURE=1 to force the reference implementation even when the
compiled one is installed.
"""

import os

if os.environ.get("ANTROUTE_PURE", "0") not in ("", "0"):
    from . import reference as _impl
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import reference as _impl

IMPLEMENTATION = _impl.IMPLEMENTATION
pack_frame = _impl.pack_frame
unpack_frame = _impl.unpack_frame
Mempool = _impl.Mempool
ACTION_NEW = _impl.ACTION_NEW
ACTION_DUPLICATE = _impl.ACTION_DUPLICATE
ACTION_DUPLICATE_LOWER = _impl.ACTION_DUPLICATE_LOWER
ACTION_CONJUGATE = _impl.ACTION_CONJUGATE

__all__ = [
    "IMPLEMENTATION",
    "pack_frame",
    "unpack_frame",
    "Mempool",
    "ACTION_NEW",
    "ACTION_DUPLICATE",
    "ACTION_DUPLICATE_LOWER",
    "ACTION_CONJUGATE",
]
