"""Independent brute-force reference implementations used as test oracles.

These deliberately share no code with the package: IoU by counting unit
grid cells, divergence by direct scalar summation, greedy selection by a
literal while-loop. They stay slow and obvious.
"""

import math

import numpy as np


def grid_iou(a, b) -> float:
    """IoU of two integer-coordinate boxes by counting unit cells.

    Cell (i, j) covers [i, i+1) x [j, j+1); a box with integer corners
    contains exactly its area in cells, so the ratio is exact.
    """
    x_lo = min(a[0], b[0])
    y_lo = min(a[1], b[1])
    x_hi = max(a[2], b[2])
    y_hi = max(a[3], b[3])
    gx, gy = np.meshgrid(
        np.arange(x_lo, x_hi), np.arange(y_lo, y_hi), indexing="ij"
    )
    in_a = (gx >= a[0]) & (gx < a[2]) & (gy >= a[1]) & (gy < a[3])
    in_b = (gx >= b[0]) & (gx < b[2]) & (gy >= b[1]) & (gy < b[3])
    inter = int(np.count_nonzero(in_a & in_b))
    union = int(np.count_nonzero(in_a | in_b))
    return inter / union


def js_divergence_sum(p, q) -> float:
    """Base-2 Jensen-Shannon divergence by direct scalar summation."""
    mid = [(pi + qi) / 2.0 for pi, qi in zip(p, q)]
    total = 0.0
    for pi, qi, mi in zip(p, q, mid):
        if pi > 0.0:
            total += 0.5 * pi * math.log2(pi / mi)
        if qi > 0.0:
            total += 0.5 * qi * math.log2(qi / mi)
    return total


def softmax_direct(values) -> list[float]:
    """Softmax via per-entry math.exp, no vectorization or shifting."""
    exps = [math.exp(v) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def greedy_selection_loop(initial_pool, pool_dist, budget, js_fn) -> list[str]:
    """Literal greedy while-loop: repeatedly pop the argmax-divergence image.

    ``js_fn(dist, pool_dist)`` supplies the divergence; ties break toward
    the smaller image id.
    """
    remaining = list(initial_pool)
    final = []
    while len(final) < budget:
        best_id = None
        best_js = -1.0
        for image_id, dist in remaining:
            js = js_fn(dist, pool_dist)
            if js > best_js or (js == best_js and image_id < best_id):
                best_id, best_js = image_id, js
        final.append(best_id)
        remaining = [(i, d) for i, d in remaining if i != best_id]
    return final
