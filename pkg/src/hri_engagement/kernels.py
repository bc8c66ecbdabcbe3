"""Backend selection for the crossing-time kernel.

The compiled extension is used when it was built; otherwise the pure-Python
implementation is used. ``set_backend`` switches explicitly (benchmarks and
equivalence tests use it).
"""
import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active = "compiled" if _ckernels is not None else "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    _active = name


def crossing_times(offsets, durations, slopes, t_max: float, backend: str | None = None):
    impl = _BACKENDS[backend or _active]
    return impl.crossing_times(
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(durations, dtype=np.float64),
        np.ascontiguousarray(slopes, dtype=np.float64),
        float(t_max),
    )
