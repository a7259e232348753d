"""Corner keypoints, binary descriptors and exact nearest-neighbour matching.

Detection is a Harris corner response on a lightly smoothed image with greedy
non-maximum suppression. Each keypoint gets an intensity-centroid
orientation and a 256-bit descriptor made of pairwise intensity comparisons
on a fixed, rotated sampling pattern.
"""

from __future__ import annotations

import logging
import random
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import EmptyDescriptorSet, EmptyTree, ImageTooSmall

log = logging.getLogger(__name__)

DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8
PATCH_RADIUS = 12
BORDER = PATCH_RADIUS + 2
MIN_SIZE = 32
HARRIS_K = 0.04
NMS_RADIUS = 3.0
RESPONSE_FRACTION = 0.01
_PATTERN_SEED = 0x0B21EF


def _sampling_pattern() -> np.ndarray:
    # stdlib Random.random() is reproducible across versions and platforms
    rng = random.Random(_PATTERN_SEED)
    pts = []
    while len(pts) < 2 * DESCRIPTOR_BITS:
        x, y = (rng.random() * 2 - 1) * PATCH_RADIUS, (rng.random() * 2 - 1) * PATCH_RADIUS
        if x * x + y * y <= PATCH_RADIUS**2:
            pts.append((x, y))
    return np.array(pts).reshape(DESCRIPTOR_BITS, 2, 2)


PATTERN = _sampling_pattern()


class Keypoint(NamedTuple):
    u: float
    v: float
    response: float
    orientation: float


class Match(NamedTuple):
    template_idx: int
    frame_idx: int
    distance: float
    second_distance: float | None = None


def _as_gray(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("expected a 2-D grayscale image")
    if img.shape[0] < MIN_SIZE or img.shape[1] < MIN_SIZE:
        raise ImageTooSmall(f"image {img.shape[1]}x{img.shape[0]} is below {MIN_SIZE}x{MIN_SIZE}")
    return img.astype(np.float64)


def harris_response(img: np.ndarray, sigma: float = 1.0, window: float = 1.5) -> np.ndarray:
    smooth = ndimage.gaussian_filter(img, sigma)
    ix = ndimage.sobel(smooth, axis=1)
    iy = ndimage.sobel(smooth, axis=0)
    sxx = ndimage.gaussian_filter(ix * ix, window)
    syy = ndimage.gaussian_filter(iy * iy, window)
    sxy = ndimage.gaussian_filter(ix * iy, window)
    return sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) ** 2


def _subpixel(r: np.ndarray, v: np.ndarray, u: np.ndarray):
    def offset(lo, mid, hi):
        denom = lo - 2 * mid + hi
        safe = np.where(denom < 0, denom, -1.0)
        return np.where(denom < 0, np.clip(0.5 * (lo - hi) / safe, -0.5, 0.5), 0.0)

    du = offset(r[v, u - 1], r[v, u], r[v, u + 1])
    dv = offset(r[v - 1, u], r[v, u], r[v + 1, u])
    return u + du, v + dv


def _orientations(smooth: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    ys, xs = np.mgrid[-PATCH_RADIUS : PATCH_RADIUS + 1, -PATCH_RADIUS : PATCH_RADIUS + 1]
    disk = xs**2 + ys**2 <= PATCH_RADIUS**2
    xs, ys = xs[disk], ys[disk]
    ui = np.rint(u).astype(int)[:, None] + xs
    vi = np.rint(v).astype(int)[:, None] + ys
    patch = smooth[vi, ui]
    return np.arctan2((patch * ys).sum(axis=1), (patch * xs).sum(axis=1))


def describe(smooth: np.ndarray, keypoints: list[Keypoint]) -> np.ndarray:
    """Pack 256 rotated pair comparisons per keypoint into ``(n, 32)`` uint8."""
    if not keypoints:
        return np.zeros((0, DESCRIPTOR_BYTES), np.uint8)
    kp = np.array([(k.u, k.v, k.orientation) for k in keypoints])
    c, s = np.cos(kp[:, 2]), np.sin(kp[:, 2])
    px, py = PATTERN[..., 0], PATTERN[..., 1]  # (256, 2)
    xs = kp[:, 0, None, None] + c[:, None, None] * px - s[:, None, None] * py
    ys = kp[:, 1, None, None] + s[:, None, None] * px + c[:, None, None] * py
    vals = ndimage.map_coordinates(smooth, [ys.ravel(), xs.ravel()], order=1, mode="nearest")
    vals = vals.reshape(len(keypoints), DESCRIPTOR_BITS, 2)
    bits = vals[..., 0] < vals[..., 1]
    return np.packbits(bits, axis=1)


def detect_and_describe(img, max_keypoints: int = 500):
    """Keypoints (strongest first) and their binary descriptors.

    Deterministic: identical images give bit-identical output.
    """
    gray = _as_gray(img)
    r = harris_response(gray)
    peak = float(r.max())
    if not peak > 1e-9:
        return [], np.zeros((0, DESCRIPTOR_BYTES), np.uint8)
    local_max = (r == ndimage.maximum_filter(r, size=5)) & (r > RESPONSE_FRACTION * peak)
    local_max[:BORDER] = local_max[-BORDER:] = False
    local_max[:, :BORDER] = local_max[:, -BORDER:] = False
    v, u = np.nonzero(local_max)
    resp = r[v, u]
    order = np.lexsort((u, v, -resp))
    v, u, resp = v[order], u[order], resp[order]
    fu, fv = _subpixel(r, v, u)

    # greedy suppression also merges plateaus that maximum_filter keeps twice
    keep: list[int] = []
    kept_xy = np.empty((0, 2))
    for i in range(len(u)):
        if len(keep) >= max_keypoints:
            break
        if kept_xy.shape[0] and np.min(np.hypot(kept_xy[:, 0] - fu[i], kept_xy[:, 1] - fv[i])) < NMS_RADIUS:
            continue
        keep.append(i)
        kept_xy = np.vstack([kept_xy, [fu[i], fv[i]]])
    keep_idx = np.array(keep, dtype=int)
    if keep_idx.size == 0:
        return [], np.zeros((0, DESCRIPTOR_BYTES), np.uint8)

    smooth = ndimage.gaussian_filter(gray, 2.0)
    theta = _orientations(smooth, fu[keep_idx], fv[keep_idx])
    kps = [
        Keypoint(float(fu[i]), float(fv[i]), float(resp[i]), float(t))
        for i, t in zip(keep_idx, theta)
    ]
    return kps, describe(smooth, kps)


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    return int(np.unpackbits(np.bitwise_xor(a, b)).sum())


def hamming_bruteforce_match(a: np.ndarray, b: np.ndarray) -> list[Match]:
    """Nearest ``b`` descriptor for every ``a`` descriptor (ties: lowest index)."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if len(a) == 0 or len(b) == 0:
        raise EmptyDescriptorSet("both descriptor sets must be non-empty")
    idx1, d1, idx2, d2 = _kernels.hamming_knn2(a, b)
    return [
        Match(i, int(j), float(d), float(e) if k >= 0 else None)
        for i, (j, d, k, e) in enumerate(zip(idx1, d1, idx2, d2))
    ]


class KdTree:
    """Exact k-d tree over float vectors (median split on the widest axis)."""

    LEAF_SIZE = 8

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise EmptyTree("k-d tree needs a non-empty (n, d) array")
        self.n, self.dim = pts.shape
        order = np.arange(self.n)
        split_dim, split_val, left, right, start, end = [], [], [], [], [], []

        def build(lo: int, hi: int) -> int:
            node = len(split_dim)
            for lst in (split_dim, split_val, left, right):
                lst.append(-1)
            start.append(lo)
            end.append(hi)
            if hi - lo <= self.LEAF_SIZE:
                return node
            block = pts[order[lo:hi]]
            spread = block.max(axis=0) - block.min(axis=0)
            dim = int(np.argmax(spread))
            if spread[dim] == 0.0:
                return node
            mid = (hi - lo) // 2
            part = np.argpartition(block[:, dim], mid)
            order[lo:hi] = order[lo:hi][part]
            split_dim[node] = dim
            split_val[node] = float(pts[order[lo + mid], dim])
            left[node] = build(lo, lo + mid)
            right[node] = build(lo + mid, hi)
            return node

        build(0, self.n)
        self.ids = order
        self.data = np.ascontiguousarray(pts[order])
        self.split_dim = np.array(split_dim, np.int64)
        self.split_val = np.array(split_val, np.float64)
        self.left = np.array(left, np.int64)
        self.right = np.array(right, np.int64)
        self.start = np.array(start, np.int64)
        self.end = np.array(end, np.int64)

    def __len__(self):
        return self.n

    def query(self, queries, k: int = 1):
        """``(indices, distances)`` of shape ``(m, min(k, n))``, nearest first."""
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        kk = min(k, self.n)
        idx, d2 = _kernels.kd_query(
            self.data, self.ids, self.split_dim, self.split_val,
            self.left, self.right, self.start, self.end, q, k=kk,
        )
        return idx, np.sqrt(d2)


def kdtree_knn(tree: KdTree, query, k: int = 1):
    if tree is None or len(tree) == 0:
        raise EmptyTree("empty k-d tree")
    idx, dist = tree.query(query, k)
    return idx[0], dist[0]


def unpack_descriptors(desc: np.ndarray) -> np.ndarray:
    """Bits as 0/1 floats; squared L2 between these equals Hamming distance."""
    return np.unpackbits(np.asarray(desc, dtype=np.uint8), axis=1).astype(np.float64)


def kdtree_match(a, b) -> list[Match]:
    """2-NN matches of float descriptors ``a`` against a k-d tree over ``b``."""
    a = np.asarray(a, dtype=np.float64)
    if len(a) == 0:
        raise EmptyDescriptorSet("query descriptor set is empty")
    tree = KdTree(b)
    idx, dist = tree.query(a, k=2)
    out = []
    for i in range(len(a)):
        second = float(dist[i, 1]) if idx.shape[1] > 1 else None
        out.append(Match(i, int(idx[i, 0]), float(dist[i, 0]), second))
    return out


def ratio_filter(matches: list[Match], ratio: float = 0.7):
    """Keep matches whose best distance is below ``ratio`` times the second best.

    Returns ``(kept, degenerate)``; a match is degenerate (and dropped) when
    its second distance is zero or missing.
    """
    kept, degenerate = [], []
    for m in matches:
        if m.second_distance is None or m.second_distance <= 0:
            degenerate.append(m)
        elif m.distance < ratio * m.second_distance:
            kept.append(m)
    if degenerate:
        log.debug("ratio test: %d degenerate matches dropped", len(degenerate))
    return kept, degenerate


def match_images(template, frame, *, method: str = "hamming", max_keypoints: int = 500, ratio: float = 0.8):
    """Correspondence array ``(n, 5)``: ``u_t, v_t, u_f, v_f, distance``."""
    kp_t, d_t = detect_and_describe(template, max_keypoints)
    kp_f, d_f = detect_and_describe(frame, max_keypoints)
    if len(kp_t) == 0 or len(kp_f) == 0:
        return np.zeros((0, 5))
    if method == "hamming":
        matches = hamming_bruteforce_match(d_t, d_f)
    elif method == "kdtree":
        # squared L2 over unpacked bits is the Hamming distance
        matches = [
            Match(m.template_idx, m.frame_idx, float(round(m.distance**2)),
                  None if m.second_distance is None else float(round(m.second_distance**2)))
            for m in kdtree_match(unpack_descriptors(d_t), unpack_descriptors(d_f))
        ]
    else:
        raise ValueError(f"unknown matching method {method!r}")
    kept, _ = ratio_filter(matches, ratio)
    rows = [(kp_t[m.template_idx].u, kp_t[m.template_idx].v, kp_f[m.frame_idx].u, kp_f[m.frame_idx].v, m.distance) for m in kept]
    return np.array(rows, dtype=np.float64).reshape(-1, 5)
