"""Numeric kernels for the per-image consistency scoring loop.

Two interchangeable backends: numba-compiled loops (default when numba is
importable) and vectorized numpy. Selection is controlled by the
``CALD_NUMBA`` environment variable at import time:

    CALD_NUMBA=0   force the pure-numpy path
    CALD_NUMBA=1   require numba (ImportError if missing)
    unset          use numba when available, else fall back

Both backends are always importable by explicit name (``*_numpy`` /
``*_numba``) so benchmarks and equivalence tests can compare them;
``iou_matrix`` and ``score_groups`` are bound to the active backend.

Group layout for ``score_groups``: one group per (image, augmentation)
pair. Boxes and score rows of all groups are packed contiguously and
delimited by offset arrays, so one call scores an entire batch.
"""

from __future__ import annotations

import os

import numpy as np

_FALSey = ("0", "false", "no", "off", "numpy")
_TRUEY = ("1", "true", "yes", "on", "numba")


def _resolve_backend() -> str:
    flag = os.environ.get("CALD_NUMBA", "").strip().lower()
    if flag in _FALSey:
        return "numpy"
    if flag in _TRUEY:
        import numba  # noqa: F401  -- fail loudly when explicitly requested

        return "numba"
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        return "numpy"


_BACKEND = _resolve_backend()


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return _BACKEND


# --------------------------------------------------------------------------
# pure-numpy backend
# --------------------------------------------------------------------------

def _box_areas(boxes: np.ndarray) -> np.ndarray:
    return (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])


def iou_matrix_numpy(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (N, 4) / (M, 4) box arrays, as (N, M)."""
    n, m = len(boxes_a), len(boxes_b)
    if n == 0 or m == 0:
        return np.zeros((n, m), dtype=np.float64)
    ix = np.minimum(boxes_a[:, None, 2], boxes_b[None, :, 2]) - np.maximum(
        boxes_a[:, None, 0], boxes_b[None, :, 0]
    )
    iy = np.minimum(boxes_a[:, None, 3], boxes_b[None, :, 3]) - np.maximum(
        boxes_a[:, None, 1], boxes_b[None, :, 1]
    )
    inter = np.maximum(ix, 0.0) * np.maximum(iy, 0.0)
    union = _box_areas(boxes_a)[:, None] + _box_areas(boxes_b)[None, :] - inter
    return np.minimum(inter / union, 1.0)


def _js_rows(p_raw: np.ndarray, q_raw: np.ndarray) -> np.ndarray:
    """Row-wise base-2 Jensen-Shannon divergence of raw nonnegative score rows."""
    p = p_raw / p_raw.sum(axis=1, keepdims=True)
    q = q_raw / q_raw.sum(axis=1, keepdims=True)
    mid = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = np.where(p > 0.0, p * np.log2(p / mid), 0.0)
        tq = np.where(q > 0.0, q * np.log2(q / mid), 0.0)
    return np.clip(0.5 * (tp.sum(axis=1) + tq.sum(axis=1)), 0.0, 1.0)


def score_groups_numpy(
    ref_boxes: np.ndarray,
    ref_scores: np.ndarray,
    ref_offsets: np.ndarray,
    pred_boxes: np.ndarray,
    pred_scores: np.ndarray,
    pred_offsets: np.ndarray,
    beta: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per group: min and mean of |m_k - beta| over its reference predictions.

    m_k = IoU(ref, matched pred) + confidence weight * (1 - JS divergence),
    with the max-IoU match (first index wins ties) and m_k = 0 for an
    unmatched reference. Groups with no references yield NaN; the caller
    applies its empty-image policy.
    """
    n_groups = len(ref_offsets) - 1
    out_min = np.full(n_groups, np.nan)
    out_mean = np.full(n_groups, np.nan)
    for g in range(n_groups):
        r0, r1 = ref_offsets[g], ref_offsets[g + 1]
        if r1 == r0:
            continue
        p0, p1 = pred_offsets[g], pred_offsets[g + 1]
        n_ref = r1 - r0
        m = np.zeros(n_ref)
        if p1 > p0:
            ious = iou_matrix_numpy(ref_boxes[r0:r1], pred_boxes[p0:p1])
            best_j = np.argmax(ious, axis=1)
            best_iou = ious[np.arange(n_ref), best_j]
            matched = best_iou > 0.0
            if matched.any():
                rs = ref_scores[r0:r1][matched]
                qs = pred_scores[p0:p1][best_j[matched]]
                weight = 0.5 * (rs.max(axis=1) + qs.max(axis=1))
                m[matched] = best_iou[matched] + weight * (1.0 - _js_rows(rs, qs))
        dist = np.abs(m - beta)
        out_min[g] = dist.min()
        out_mean[g] = dist.mean()
    return out_min, out_mean


# --------------------------------------------------------------------------
# numba backend: same semantics, explicit loops
# --------------------------------------------------------------------------

try:
    from numba import njit

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAS_NUMBA = False

if _HAS_NUMBA:

    @njit(cache=True, nogil=True)
    def _iou_matrix_nb(boxes_a, boxes_b):  # pragma: no cover - compiled
        n = boxes_a.shape[0]
        m = boxes_b.shape[0]
        out = np.zeros((n, m), dtype=np.float64)
        for i in range(n):
            ax0, ay0, ax1, ay1 = boxes_a[i, 0], boxes_a[i, 1], boxes_a[i, 2], boxes_a[i, 3]
            area_a = (ax1 - ax0) * (ay1 - ay0)
            for j in range(m):
                ix = min(ax1, boxes_b[j, 2]) - max(ax0, boxes_b[j, 0])
                if ix <= 0.0:
                    continue
                iy = min(ay1, boxes_b[j, 3]) - max(ay0, boxes_b[j, 1])
                if iy <= 0.0:
                    continue
                inter = ix * iy
                area_b = (boxes_b[j, 2] - boxes_b[j, 0]) * (boxes_b[j, 3] - boxes_b[j, 1])
                v = inter / (area_a + area_b - inter)
                out[i, j] = v if v < 1.0 else 1.0
        return out

    @njit(cache=True, nogil=True)
    def _score_groups_nb(
        ref_boxes, ref_scores, ref_offsets, pred_boxes, pred_scores, pred_offsets, beta
    ):  # pragma: no cover - compiled
        n_groups = ref_offsets.shape[0] - 1
        n_classes = ref_scores.shape[1]
        out_min = np.full(n_groups, np.nan)
        out_mean = np.full(n_groups, np.nan)
        for g in range(n_groups):
            r0, r1 = ref_offsets[g], ref_offsets[g + 1]
            if r1 == r0:
                continue
            p0, p1 = pred_offsets[g], pred_offsets[g + 1]
            best_d = np.inf
            acc = 0.0
            for k in range(r0, r1):
                rx0, ry0, rx1, ry1 = ref_boxes[k, 0], ref_boxes[k, 1], ref_boxes[k, 2], ref_boxes[k, 3]
                ref_area = (rx1 - rx0) * (ry1 - ry0)
                best_iou = 0.0
                best_j = -1
                for j in range(p0, p1):
                    ix = min(rx1, pred_boxes[j, 2]) - max(rx0, pred_boxes[j, 0])
                    if ix <= 0.0:
                        continue
                    iy = min(ry1, pred_boxes[j, 3]) - max(ry0, pred_boxes[j, 1])
                    if iy <= 0.0:
                        continue
                    inter = ix * iy
                    pred_area = (pred_boxes[j, 2] - pred_boxes[j, 0]) * (
                        pred_boxes[j, 3] - pred_boxes[j, 1]
                    )
                    v = inter / (ref_area + pred_area - inter)
                    if v > 1.0:
                        v = 1.0
                    if v > best_iou:
                        best_iou = v
                        best_j = j
                if best_j < 0:
                    m = 0.0
                else:
                    ref_sum = 0.0
                    ref_max = 0.0
                    pred_sum = 0.0
                    pred_max = 0.0
                    for c in range(n_classes):
                        v = ref_scores[k, c]
                        ref_sum += v
                        if v > ref_max:
                            ref_max = v
                        v = pred_scores[best_j, c]
                        pred_sum += v
                        if v > pred_max:
                            pred_max = v
                    js = 0.0
                    for c in range(n_classes):
                        p = ref_scores[k, c] / ref_sum
                        q = pred_scores[best_j, c] / pred_sum
                        mid = 0.5 * (p + q)
                        if p > 0.0:
                            js += 0.5 * p * np.log2(p / mid)
                        if q > 0.0:
                            js += 0.5 * q * np.log2(q / mid)
                    if js < 0.0:
                        js = 0.0
                    elif js > 1.0:
                        js = 1.0
                    m = best_iou + 0.5 * (ref_max + pred_max) * (1.0 - js)
                d = abs(m - beta)
                acc += d
                if d < best_d:
                    best_d = d
            out_min[g] = best_d
            out_mean[g] = acc / (r1 - r0)
        return out_min, out_mean

    iou_matrix_numba = _iou_matrix_nb
    score_groups_numba = _score_groups_nb
else:
    iou_matrix_numba = None
    score_groups_numba = None


if _BACKEND == "numba":
    iou_matrix = iou_matrix_numba
    score_groups = score_groups_numba
else:
    iou_matrix = iou_matrix_numpy
    score_groups = score_groups_numpy


def warmup() -> None:
    """Trigger JIT compilation with a tiny input (no-op on the numpy path)."""
    boxes = np.array([[0.0, 0.0, 1.0, 1.0]])
    scores = np.array([[0.5, 0.5]])
    offsets = np.array([0, 1], dtype=np.int64)
    iou_matrix(boxes, boxes)
    score_groups(boxes, scores, offsets, boxes, scores, offsets, 1.3)
