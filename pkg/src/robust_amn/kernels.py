"""Kernel dispatch: the compiled extension when importable, else the numpy fallback.

Set ``ROBUST_AMN_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("ROBUST_AMN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
rround_batch = _impl.rround_batch
brute_force_scan = _impl.brute_force_scan


def rround(ystar, estar, trials, rng, phases=32, max_phases=10**6):
    """Draw ``trials`` complete roundings of ``(ystar, estar)``.

    Unfinished trials keep their partial state and receive further phases, so
    every trial is an unconditioned run of the phase process.

    Returns ``(labels (T, N) int64, keep (T, m) int8)``.
    """
    ystar = np.ascontiguousarray(ystar, dtype=np.float64)
    estar = np.ascontiguousarray(estar, dtype=np.float64)
    N, K = ystar.shape
    m = estar.shape[0]
    labels = np.full((trials, N), -1, dtype=np.int64)
    keep = np.full((trials, m), -1, dtype=np.int8)
    todo = np.arange(trials)
    spent = 0
    while todo.size:
        if spent >= max_phases:
            raise RuntimeError(
                f"rounding did not terminate within {max_phases} phases for {todo.size} trial(s); "
                "check that every node row of ystar sums to 1"
            )
        n = todo.size
        ks = rng.integers(0, K, size=(n, phases))
        bs = rng.integers(0, 2, size=(n, phases))
        betas = 1.0 - rng.random((n, phases))  # (0, 1]: a zero marginal never fires
        lab = np.ascontiguousarray(labels[todo])
        kp = np.ascontiguousarray(keep[todo])
        used = rround_batch(ystar, estar, ks, bs, betas, lab, kp)
        labels[todo] = lab
        keep[todo] = kp
        todo = todo[used < 0]
        spent += phases
    return labels, keep
