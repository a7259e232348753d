"""Reference (numpy / pure-Python) implementations of the hot kernels.

Same signatures and results as the compiled ``_ckernels`` module.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

NAME = "python"
_RANSAC_CHUNK = 64


def hamming_knn2(a: np.ndarray, b: np.ndarray):
    """Best and second-best Hamming match in ``b`` for every row of ``a``.

    ``a`` and ``b`` are ``(n, 32)`` / ``(m, 32)`` uint8 bit-packed
    descriptors. Ties go to the lower index. When ``m == 1`` the second
    match is reported as index -1, distance -1.
    """
    a64 = np.ascontiguousarray(a).view(np.uint64)
    b64 = np.ascontiguousarray(b).view(np.uint64)
    n, m = a64.shape[0], b64.shape[0]
    idx1 = np.empty(n, np.int64)
    idx2 = np.full(n, -1, np.int64)
    d1 = np.empty(n, np.int64)
    d2 = np.full(n, -1, np.int64)
    step = max(1, 2_000_000 // max(m, 1))
    for start in range(0, n, step):
        block = a64[start : start + step]
        dist = np.bitwise_count(block[:, None, :] ^ b64[None, :, :]).sum(axis=2, dtype=np.int64)
        rows = np.arange(block.shape[0])
        best = np.argmin(dist, axis=1)
        idx1[start : start + step] = best
        d1[start : start + step] = dist[rows, best]
        if m > 1:
            dist[rows, best] = np.iinfo(np.int64).max
            second = np.argmin(dist, axis=1)
            idx2[start : start + step] = second
            d2[start : start + step] = dist[rows, second]
    return idx1, d1, idx2, d2


def kd_query(data, ids, split_dim, split_val, left, right, start, end, queries, k):
    """Exact k-NN over a flattened k-d tree (see ``features.KdTree``).

    ``data`` holds the points in tree order and ``ids`` their original
    indices. Output is sorted by (squared distance, original index); slots
    beyond the tree size hold index -1 and distance inf.
    """
    nq = queries.shape[0]
    out_idx = np.full((nq, k), -1, np.int64)
    out_d2 = np.full((nq, k), np.inf)
    ids = ids.tolist()
    split_dim = split_dim.tolist()
    split_val = split_val.tolist()
    left = left.tolist()
    right = right.tolist()
    start = start.tolist()
    end = end.tolist()
    rows = data.tolist()
    for qi in range(nq):
        q = queries[qi].tolist()
        heap: list[tuple[float, int]] = []  # max-heap via negated keys
        stack = [(0, 0.0)]
        while stack:
            node, bound = stack.pop()
            if len(heap) == k and bound > -heap[0][0]:
                continue
            dim = split_dim[node]
            if dim < 0:
                for i in range(start[node], end[node]):
                    p = rows[i]
                    d2 = 0.0
                    for j in range(len(q)):
                        t = p[j] - q[j]
                        d2 += t * t
                    key = (-d2, -ids[i])
                    if len(heap) < k:
                        heapq.heappush(heap, key)
                    elif key > heap[0]:
                        heapq.heapreplace(heap, key)
                continue
            diff = q[dim] - split_val[node]
            near, far = (left[node], right[node]) if diff < 0 else (right[node], left[node])
            stack.append((far, diff * diff))
            stack.append((near, bound))
        best = sorted((-d, -i) for d, i in heap)
        out_d2[qi, : len(best)] = [b[0] for b in best]
        out_idx[qi, : len(best)] = [b[1] for b in best]
    return out_idx, out_d2


def _normalizer(pts: np.ndarray) -> np.ndarray:
    """Hartley similarity for each 4-point set: ``(c, 3, 3)``."""
    centroid = pts.mean(axis=1)
    mean_dist = np.linalg.norm(pts - centroid[:, None, :], axis=2).mean(axis=1)
    scale = np.where(mean_dist > 0, math.sqrt(2.0) / np.where(mean_dist > 0, mean_dist, 1.0), 0.0)
    t = np.zeros((pts.shape[0], 3, 3))
    t[:, 0, 0] = scale
    t[:, 1, 1] = scale
    t[:, 0, 2] = -scale * centroid[:, 0]
    t[:, 1, 2] = -scale * centroid[:, 1]
    t[:, 2, 2] = 1.0
    return t


def _collinear(pts: np.ndarray) -> np.ndarray:
    """True where any three of the four points are (nearly) collinear."""
    bad = np.zeros(pts.shape[0], bool)
    for a, b, c in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        u = pts[:, b] - pts[:, a]
        v = pts[:, c] - pts[:, a]
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        norm = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        bad |= cross <= 1e-6 * norm
    return bad


def minimal_homographies(src4: np.ndarray, dst4: np.ndarray):
    """Exact homographies through batches of four correspondences.

    Returns ``(H, ok)`` with ``H`` of shape ``(c, 3, 3)`` scaled so that
    ``H[2, 2] = 1`` and ``ok`` false for degenerate samples.
    """
    c = src4.shape[0]
    ok = ~(_collinear(src4) | _collinear(dst4))
    ts, td = _normalizer(src4), _normalizer(dst4)
    s = src4 * ts[:, None, [0], 0] + ts[:, None, :2, 2]
    d = dst4 * td[:, None, [0], 0] + td[:, None, :2, 2]
    a = np.zeros((c, 8, 8))
    rhs = np.zeros((c, 8))
    x, y, u, v = s[..., 0], s[..., 1], d[..., 0], d[..., 1]
    a[:, 0::2, 0] = x
    a[:, 0::2, 1] = y
    a[:, 0::2, 2] = 1.0
    a[:, 0::2, 6] = -u * x
    a[:, 0::2, 7] = -u * y
    a[:, 1::2, 3] = x
    a[:, 1::2, 4] = y
    a[:, 1::2, 5] = 1.0
    a[:, 1::2, 6] = -v * x
    a[:, 1::2, 7] = -v * y
    rhs[:, 0::2] = u
    rhs[:, 1::2] = v
    det = np.linalg.det(a)
    ok &= np.isfinite(det) & (np.abs(det) > 1e-12)
    a[~ok] = np.eye(8)
    h = np.linalg.solve(a, rhs[..., None])[..., 0]
    hn = np.concatenate([h, np.ones((c, 1))], axis=1).reshape(c, 3, 3)
    td_inv = np.linalg.inv(td)
    big = td_inv @ hn @ ts
    h33 = big[:, 2, 2]
    ok &= np.abs(h33) > 1e-12
    big[ok] /= h33[ok, None, None]
    hdet = np.linalg.det(big)
    ok &= np.isfinite(hdet) & (np.abs(hdet) > 0.0)
    big[~ok] = np.eye(3)
    return big, ok


def transfer_errors(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Symmetric squared transfer error for a batch of homographies: ``(c, n)``."""
    hinv = np.linalg.inv(h)

    def project(m, pts):
        w = m[:, None, 2, 0] * pts[None, :, 0] + m[:, None, 2, 1] * pts[None, :, 1] + m[:, None, 2, 2]
        x = m[:, None, 0, 0] * pts[None, :, 0] + m[:, None, 0, 1] * pts[None, :, 1] + m[:, None, 0, 2]
        y = m[:, None, 1, 0] * pts[None, :, 0] + m[:, None, 1, 1] * pts[None, :, 1] + m[:, None, 1, 2]
        bad = np.abs(w) < 1e-12
        w = np.where(bad, 1.0, w)
        return x / w, y / w, bad

    fx, fy, fbad = project(h, src)
    bx, by, bbad = project(hinv, dst)
    err = (fx - dst[None, :, 0]) ** 2 + (fy - dst[None, :, 1]) ** 2
    err += (bx - src[None, :, 0]) ** 2 + (by - src[None, :, 1]) ** 2
    err[fbad | bbad] = np.inf
    return err


def adaptive_limit(inliers: int, n: int, confidence: float, max_iters: int) -> int:
    """Iterations needed to draw one all-inlier 4-sample with ``confidence``."""
    w = inliers / n
    if w >= 1.0:
        return 0
    fail = 1.0 - w**4
    if fail >= 1.0:
        return max_iters
    need = math.log(1.0 - confidence) / math.log(fail)
    return int(min(max_iters, math.ceil(need)))


def ransac_search(src, dst, samples, thresh2, confidence):
    """Best 4-point hypothesis over ``samples`` with adaptive early exit.

    Returns ``(best_iteration, best_count, iterations_run)``; best_iteration
    is -1 when every sample was degenerate.
    """
    n = src.shape[0]
    max_iters = samples.shape[0]
    limit = max_iters
    best_i, best_count, i = -1, 0, 0
    while i < limit:
        stop = min(limit, i + _RANSAC_CHUNK)
        idx = samples[i:stop]
        hs, ok = minimal_homographies(src[idx], dst[idx])
        counts = np.zeros(len(idx), np.int64)
        if ok.any():
            counts[ok] = (transfer_errors(hs[ok], src, dst) < thresh2).sum(axis=1)
        for off in range(len(idx)):
            it = i + off
            if it >= limit:
                break
            if ok[off] and counts[off] > best_count:
                best_i, best_count = it, int(counts[off])
                limit = min(limit, max(it + 1, adaptive_limit(best_count, n, confidence, max_iters)))
        i = stop
    return best_i, best_count, min(limit, max_iters)
