"""Backend dispatch for the hot math kernels.

Two interchangeable implementations live here: ``_fast`` (compiled) and
``_ref`` (plain numpy). Both expose the same six functions with identical
semantics, so everything above this package is backend-agnostic.

Selection is controlled by the MBSENT_KERNELS environment variable, read
once at import:

  unset / "auto"  prefer the compiled backend, fall back to numpy
  "c" / "fast"    require the compiled backend, raise if missing
  "py" / "numpy"  force the numpy backend

``BACKEND`` records which one won.
"""

import os

_choice = os.environ.get("MBSENT_KERNELS", "auto").strip().lower()

if _choice in ("", "auto"):
    try:
        from . import _fast as _impl

        BACKEND = "c"
    except ImportError:
        from . import _ref as _impl

        BACKEND = "python"
elif _choice in ("c", "fast"):
    from . import _fast as _impl

    BACKEND = "c"
elif _choice in ("py", "numpy", "python"):
    from . import _ref as _impl

    BACKEND = "python"
else:
    raise ValueError(f"unrecognized MBSENT_KERNELS value: {_choice!r}")

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward

__all__ = [
    "BACKEND",
    "conv1d_forward",
    "conv1d_backward",
    "lstm_forward",
    "lstm_backward",
    "gru_forward",
    "gru_backward",
]
