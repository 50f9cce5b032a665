"""Backend selection for the LCS kernel: compiled extension or pure Python.

The compiled core (``summ._clcs``, built from Cython) is preferred; if the
extension is missing or ``SUMM_PURE_PYTHON=1`` is set, the pure-Python
fallback is used instead.  ``summ bench-kernels`` compares the two.
"""

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

_FORCE_PYTHON = os.environ.get("SUMM_PURE_PYTHON", "") == "1"

if not _FORCE_PYTHON:
    try:
        from summ._clcs import lcs_length as _lcs_ids

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _FORCE_PYTHON = True
        logger.warning("compiled LCS kernel unavailable, using pure-Python fallback")

if _FORCE_PYTHON:
    from summ._lcs_py import lcs_length as _lcs_ids

    BACKEND = "python"


def _intern(a, b, as_array: bool):
    """Map the token strings of two sequences to shared integer ids."""
    ids: dict = {}
    a_ids = [ids.setdefault(t, len(ids)) for t in a]
    b_ids = [ids.setdefault(t, len(ids)) for t in b]
    if as_array:
        return np.asarray(a_ids, dtype=np.int64), np.asarray(b_ids, dtype=np.int64)
    return a_ids, b_ids


def lcs_tokens(a, b) -> int:
    """LCS length between two token-string sequences."""
    if not a or not b:
        return 0
    a_ids, b_ids = _intern(a, b, as_array=BACKEND == "compiled")
    return _lcs_ids(a_ids, b_ids)


def lcs_ids(a: np.ndarray, b: np.ndarray) -> int:
    """LCS length between two ``int64`` id arrays (no interning)."""
    if BACKEND == "compiled":
        return _lcs_ids(np.ascontiguousarray(a, dtype=np.int64), np.ascontiguousarray(b, dtype=np.int64))
    return _lcs_ids(list(a), list(b))


def benchmark_backends(n_pairs: int = 200, length: int = 80, seed: int = 0) -> dict:
    """Time both LCS backends on the same random id pairs.

    Returns per-backend seconds, pairs/sec, and the compiled-over-python
    speedup (None for any backend that is unavailable).
    """
    import time

    from summ._lcs_py import lcs_length as py_lcs
    try:
        from summ._clcs import lcs_length as c_lcs
    except ImportError:
        c_lcs = None

    rng = np.random.default_rng(seed)
    pairs = [
        (rng.integers(0, 50, size=length), rng.integers(0, 50, size=length))
        for _ in range(n_pairs)
    ]
    out = {"n_pairs": n_pairs, "length": length, "backend_active": BACKEND}

    start = time.perf_counter()
    py_results = [py_lcs(list(a), list(b)) for a, b in pairs]
    out["python_seconds"] = time.perf_counter() - start

    if c_lcs is not None:
        arrays = [(np.ascontiguousarray(a, dtype=np.int64),
                   np.ascontiguousarray(b, dtype=np.int64)) for a, b in pairs]
        start = time.perf_counter()
        c_results = [c_lcs(a, b) for a, b in arrays]
        out["compiled_seconds"] = time.perf_counter() - start
        if c_results != py_results:
            raise AssertionError("LCS backends disagree on benchmark inputs")
        out["speedup"] = out["python_seconds"] / out["compiled_seconds"]
    else:
        out["compiled_seconds"] = None
        out["speedup"] = None
    return out
