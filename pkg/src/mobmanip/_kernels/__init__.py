"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; otherwise the numpy
implementation is selected. :func:`use_backend` switches explicitly (tests and
benchmarks compare both).
"""

from __future__ import annotations

import logging
from types import ModuleType

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
    log.debug("compiled kernels unavailable, using the Python fallback")

_active: ModuleType = _ckernels or _pykernels


def available() -> list[str]:
    return [m.NAME for m in (_ckernels, _pykernels) if m is not None]


def backend() -> str:
    return _active.NAME


def use_backend(name: str) -> None:
    global _active
    mods = {"python": _pykernels, "cython": _ckernels}
    if name not in mods:
        raise ValueError(f"unknown backend {name!r}")
    if mods[name] is None:
        raise RuntimeError(f"backend {name!r} is not built")
    _active = mods[name]


def hamming_knn2(a, b):
    return _active.hamming_knn2(a, b)


def kd_query(*arrays, k):
    return _active.kd_query(*arrays, k)


def ransac_search(src, dst, samples, thresh2, confidence):
    return _active.ransac_search(src, dst, samples, thresh2, confidence)


minimal_homographies = _pykernels.minimal_homographies
transfer_errors = _pykernels.transfer_errors
