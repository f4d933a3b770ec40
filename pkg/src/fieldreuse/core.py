"""Kernel selection.

Imports the compiled ``_core`` extension when it is available and falls back
to the pure-Python ``_pycore`` otherwise. Setting the environment variable
``FIELDREUSE_PURE=1`` forces the fallback.
"""

import os

from . import _pycore

if os.environ.get("FIELDREUSE_PURE", "") == "1":
    _impl = _pycore
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        _impl = _pycore

BACKEND = "compiled" if _impl is not _pycore else "python"

dfe_run = _impl.dfe_run
rls_dfe = _impl.rls_dfe
rls_track = _impl.rls_track
viterbi_hard = _impl.viterbi_hard

__all__ = ["BACKEND", "dfe_run", "rls_dfe", "rls_track", "viterbi_hard"]
