"""Hot loops behind the restless parity simulator.

The compiled extension ``_chain`` is used when it was built; otherwise the
pure-Python twin in ``_chain_py`` is loaded. Both consume identical
pre-sampled event arrays, so their outputs agree bit for bit.

Set ``PARITYSCOPE_PURE_PYTHON=1`` to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("PARITYSCOPE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._chain import run_chain  # noqa: F401
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        from ._chain_py import run_chain  # noqa: F401
else:
    from ._chain_py import run_chain  # noqa: F401

__all__ = ["run_chain", "BACKEND"]
