"""Pick the compiled kernels when importable, else the numpy fallback."""

import os

if os.environ.get("SENSOR_TRIAGE_PURE_PYTHON"):
    from . import _fallback as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels

        BACKEND = "compiled"
    except ImportError:  # extension not built
        from . import _fallback as kernels

        BACKEND = "python"

__all__ = ["BACKEND", "kernels"]
