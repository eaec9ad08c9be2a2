"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built and ``TARD_PURE_PYTHON`` is
unset; otherwise the numpy implementations in ``_pykernels`` are used.
``BACKEND`` names the active choice.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("TARD_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

window_min = _active.window_min
rbf_gram = _active.rbf_gram
rank_auc = _active.rank_auc

__all__ = ["BACKEND", "window_min", "rbf_gram", "rank_auc", "python_backend", "compiled_backend"]
