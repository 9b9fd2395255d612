"""Deterministic ordered parallel map.

Work items are independent; results come back in submission order and every
reduction downstream runs over that fixed order, so the output does not depend
on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def ordered_map(fn, items, workers: int = 1) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def ordered_sum(arrays) -> np.ndarray:
    """Pairwise sum of a sequence of equally shaped arrays in the given order."""
    arrs = [np.asarray(a) for a in arrays]
    if not arrs:
        raise ValueError("nothing to sum")
    while len(arrs) > 1:
        nxt = [arrs[i] + arrs[i + 1] for i in range(0, len(arrs) - 1, 2)]
        if len(arrs) % 2:
            nxt.append(arrs[-1])
        arrs = nxt
    return arrs[0]
