"""Backend selection for the hot kernels.

GRAPHNLS_BACKEND=numpy forces the pure-numpy code paths, =numba requires
numba, anything else (or unset) picks numba when it is importable.
"""
import os
import warnings

_choice = os.environ.get("GRAPHNLS_BACKEND", "auto").strip().lower()

if _choice == "numpy":
    HAVE_NUMBA = False
else:
    try:
        import numba  # noqa: F401
        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False
        if _choice == "numba":
            warnings.warn(
                "GRAPHNLS_BACKEND=numba but numba is not importable; "
                "falling back to numpy kernels",
                RuntimeWarning,
            )

BACKEND = "numba" if HAVE_NUMBA else "numpy"
