# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_pykernels`` exactly in behaviour."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, log, ceil, isfinite, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

NAME = "cython"

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


def hamming_knn2(a, b):
    cdef const uint64_t[:, ::1] av = np.ascontiguousarray(a).view(np.uint64)
    cdef const uint64_t[:, ::1] bv = np.ascontiguousarray(b).view(np.uint64)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], words = av.shape[1]
    idx1_a = np.empty(n, np.int64)
    d1_a = np.empty(n, np.int64)
    idx2_a = np.full(n, -1, np.int64)
    d2_a = np.full(n, -1, np.int64)
    cdef int64_t[::1] idx1 = idx1_a, d1 = d1_a, idx2 = idx2_a, d2 = d2_a
    cdef Py_ssize_t i, j, w
    cdef int64_t dist, b1, b2, i1, i2
    with nogil:
        for i in range(n):
            b1 = 1 << 62
            b2 = 1 << 62
            i1 = -1
            i2 = -1
            for j in range(m):
                dist = 0
                for w in range(words):
                    dist += __builtin_popcountll(av[i, w] ^ bv[j, w])
                if dist < b1:
                    b2 = b1
                    i2 = i1
                    b1 = dist
                    i1 = j
                elif dist < b2:
                    b2 = dist
                    i2 = j
            idx1[i] = i1
            d1[i] = b1
            if m > 1:
                idx2[i] = i2
                d2[i] = b2
    return idx1_a, d1_a, idx2_a, d2_a


cdef inline bint _key_less(double da, int64_t ia, double db, int64_t ib) nogil:
    return da < db or (da == db and ia < ib)


def kd_query(data, ids, split_dim, split_val, left, right, start, end, queries, int k):
    cdef const double[:, ::1] pts = np.ascontiguousarray(data, dtype=np.float64)
    cdef const int64_t[::1] pid = np.ascontiguousarray(ids, dtype=np.int64)
    cdef const int64_t[::1] sd = np.ascontiguousarray(split_dim, dtype=np.int64)
    cdef const double[::1] sv = np.ascontiguousarray(split_val, dtype=np.float64)
    cdef const int64_t[::1] lt = np.ascontiguousarray(left, dtype=np.int64)
    cdef const int64_t[::1] rt = np.ascontiguousarray(right, dtype=np.int64)
    cdef const int64_t[::1] st = np.ascontiguousarray(start, dtype=np.int64)
    cdef const int64_t[::1] en = np.ascontiguousarray(end, dtype=np.int64)
    cdef const double[:, ::1] qs = np.ascontiguousarray(queries, dtype=np.float64)
    cdef Py_ssize_t nq = qs.shape[0], dim = pts.shape[1], nnodes = sd.shape[0]
    out_idx_a = np.full((nq, k), -1, np.int64)
    out_d2_a = np.full((nq, k), INFINITY, np.float64)
    cdef int64_t[:, ::1] oi = out_idx_a
    cdef double[:, ::1] od = out_d2_a
    stack_node_a = np.empty(2 * nnodes + 2, np.int64)
    stack_bound_a = np.empty(2 * nnodes + 2, np.float64)
    cdef int64_t[::1] snode = stack_node_a
    cdef double[::1] sbound = stack_bound_a
    cdef Py_ssize_t qi, top, node, i, j, pos, filled
    cdef double bound, d2, t, diff
    with nogil:
        for qi in range(nq):
            filled = 0
            top = 0
            snode[0] = 0
            sbound[0] = 0.0
            top = 1
            while top > 0:
                top -= 1
                node = snode[top]
                bound = sbound[top]
                if filled == k and bound > od[qi, k - 1]:
                    continue
                if sd[node] < 0:
                    for i in range(st[node], en[node]):
                        d2 = 0.0
                        for j in range(dim):
                            t = pts[i, j] - qs[qi, j]
                            d2 += t * t
                        if filled < k:
                            pos = filled
                            filled += 1
                        elif _key_less(d2, pid[i], od[qi, k - 1], oi[qi, k - 1]):
                            pos = k - 1
                        else:
                            continue
                        # insertion into the sorted k-list
                        while pos > 0 and _key_less(d2, pid[i], od[qi, pos - 1], oi[qi, pos - 1]):
                            od[qi, pos] = od[qi, pos - 1]
                            oi[qi, pos] = oi[qi, pos - 1]
                            pos -= 1
                        od[qi, pos] = d2
                        oi[qi, pos] = pid[i]
                    continue
                diff = qs[qi, sd[node]] - sv[node]
                if diff < 0:
                    snode[top] = rt[node]
                    sbound[top] = diff * diff
                    snode[top + 1] = lt[node]
                    sbound[top + 1] = bound
                else:
                    snode[top] = lt[node]
                    sbound[top] = diff * diff
                    snode[top + 1] = rt[node]
                    sbound[top + 1] = bound
                top += 2
    return out_idx_a, out_d2_a


cdef bint _collinear4(double* p) nogil:
    cdef int a, b, c
    cdef double ux, uy, vx, vy, cross, norm
    for a in range(4):
        for b in range(a + 1, 4):
            for c in range(b + 1, 4):
                ux = p[2 * b] - p[2 * a]
                uy = p[2 * b + 1] - p[2 * a + 1]
                vx = p[2 * c] - p[2 * a]
                vy = p[2 * c + 1] - p[2 * a + 1]
                cross = fabs(ux * vy - uy * vx)
                norm = sqrt(ux * ux + uy * uy) * sqrt(vx * vx + vy * vy)
                if cross <= 1e-6 * norm:
                    return True
    return False


cdef void _normalize4(double* p, double* out, double* t) nogil:
    # t = (scale, tx, ty) so that out = scale * p + (tx, ty)
    cdef double cx = 0, cy = 0, md = 0, s
    cdef int i
    for i in range(4):
        cx += p[2 * i]
        cy += p[2 * i + 1]
    cx /= 4.0
    cy /= 4.0
    for i in range(4):
        md += sqrt((p[2 * i] - cx) ** 2 + (p[2 * i + 1] - cy) ** 2)
    md /= 4.0
    s = sqrt(2.0) / md if md > 0 else 0.0
    t[0] = s
    t[1] = -s * cx
    t[2] = -s * cy
    for i in range(4):
        out[2 * i] = s * p[2 * i] + t[1]
        out[2 * i + 1] = s * p[2 * i + 1] + t[2]


cdef bint _solve8(double* a, double* b) nogil:
    """Gaussian elimination with partial pivoting; solution left in b."""
    cdef int col, row, piv, j
    cdef double best, f, tmp
    for col in range(8):
        piv = col
        best = fabs(a[col * 8 + col])
        for row in range(col + 1, 8):
            if fabs(a[row * 8 + col]) > best:
                best = fabs(a[row * 8 + col])
                piv = row
        if best < 1e-14:
            return False
        if piv != col:
            for j in range(8):
                tmp = a[col * 8 + j]
                a[col * 8 + j] = a[piv * 8 + j]
                a[piv * 8 + j] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for row in range(col + 1, 8):
            f = a[row * 8 + col] / a[col * 8 + col]
            if f != 0.0:
                for j in range(col, 8):
                    a[row * 8 + j] -= f * a[col * 8 + j]
                b[row] -= f * b[col]
    for row in range(7, -1, -1):
        tmp = b[row]
        for j in range(row + 1, 8):
            tmp -= a[row * 8 + j] * b[j]
        b[row] = tmp / a[row * 8 + row]
    return True


cdef bint _minimal_h(double* src4, double* dst4, double* h) nogil:
    cdef double s[8]
    cdef double d[8]
    cdef double ts[3]
    cdef double td[3]
    cdef double a[64]
    cdef double rhs[8]
    cdef double hn[9]
    cdef double m[9]
    cdef int i, j
    cdef double x, y, u, v, inv, h33
    if _collinear4(src4) or _collinear4(dst4):
        return False
    _normalize4(src4, s, ts)
    _normalize4(dst4, d, td)
    for i in range(64):
        a[i] = 0.0
    for i in range(4):
        x = s[2 * i]
        y = s[2 * i + 1]
        u = d[2 * i]
        v = d[2 * i + 1]
        a[(2 * i) * 8 + 0] = x
        a[(2 * i) * 8 + 1] = y
        a[(2 * i) * 8 + 2] = 1.0
        a[(2 * i) * 8 + 6] = -u * x
        a[(2 * i) * 8 + 7] = -u * y
        a[(2 * i + 1) * 8 + 3] = x
        a[(2 * i + 1) * 8 + 4] = y
        a[(2 * i + 1) * 8 + 5] = 1.0
        a[(2 * i + 1) * 8 + 6] = -v * x
        a[(2 * i + 1) * 8 + 7] = -v * y
        rhs[2 * i] = u
        rhs[2 * i + 1] = v
    if not _solve8(a, rhs):
        return False
    for i in range(8):
        hn[i] = rhs[i]
    hn[8] = 1.0
    # m = hn @ Ts, Ts = [[s,0,tx],[0,s,ty],[0,0,1]]
    for i in range(3):
        m[3 * i + 0] = hn[3 * i + 0] * ts[0]
        m[3 * i + 1] = hn[3 * i + 1] * ts[0]
        m[3 * i + 2] = hn[3 * i + 0] * ts[1] + hn[3 * i + 1] * ts[2] + hn[3 * i + 2]
    # h = Td^-1 @ m, Td^-1 = [[1/s,0,-tx/s],[0,1/s,-ty/s],[0,0,1]]
    if td[0] == 0.0:
        return False
    inv = 1.0 / td[0]
    for j in range(3):
        h[0 + j] = inv * (m[0 + j] - td[1] * m[6 + j])
        h[3 + j] = inv * (m[3 + j] - td[2] * m[6 + j])
        h[6 + j] = m[6 + j]
    h33 = h[8]
    if not fabs(h33) > 1e-12:
        return False
    for i in range(9):
        h[i] /= h33
    return True


cdef bint _inverse3(double* h, double* out) nogil:
    cdef double det
    out[0] = h[4] * h[8] - h[5] * h[7]
    out[1] = h[2] * h[7] - h[1] * h[8]
    out[2] = h[1] * h[5] - h[2] * h[4]
    out[3] = h[5] * h[6] - h[3] * h[8]
    out[4] = h[0] * h[8] - h[2] * h[6]
    out[5] = h[2] * h[3] - h[0] * h[5]
    out[6] = h[3] * h[7] - h[4] * h[6]
    out[7] = h[1] * h[6] - h[0] * h[7]
    out[8] = h[0] * h[4] - h[1] * h[3]
    det = h[0] * out[0] + h[1] * out[3] + h[2] * out[6]
    if not (fabs(det) > 0.0) or not isfinite(det):
        return False
    cdef int i
    for i in range(9):
        out[i] /= det
    return True


cdef int64_t _count(double* h, double* hi, const double[:, ::1] src, const double[:, ::1] dst, double thresh2) nogil:
    cdef Py_ssize_t i, n = src.shape[0]
    cdef int64_t count = 0
    cdef double x, y, u, v, w, px, py, e
    for i in range(n):
        x = src[i, 0]
        y = src[i, 1]
        u = dst[i, 0]
        v = dst[i, 1]
        w = h[6] * x + h[7] * y + h[8]
        if fabs(w) < 1e-12:
            continue
        px = (h[0] * x + h[1] * y + h[2]) / w - u
        py = (h[3] * x + h[4] * y + h[5]) / w - v
        e = px * px + py * py
        w = hi[6] * u + hi[7] * v + hi[8]
        if fabs(w) < 1e-12:
            continue
        px = (hi[0] * u + hi[1] * v + hi[2]) / w - x
        py = (hi[3] * u + hi[4] * v + hi[5]) / w - y
        e += px * px + py * py
        if e < thresh2:
            count += 1
    return count


cdef Py_ssize_t _adaptive(int64_t inliers, Py_ssize_t n, double confidence, Py_ssize_t max_iters) nogil:
    cdef double w = <double>inliers / <double>n
    cdef double fail, need
    if w >= 1.0:
        return 0
    fail = 1.0 - w * w * w * w
    if fail >= 1.0:
        return max_iters
    need = ceil(log(1.0 - confidence) / log(fail))
    if need >= max_iters:
        return max_iters
    return <Py_ssize_t>need


def ransac_search(src, dst, samples, double thresh2, double confidence):
    cdef const double[:, ::1] sv = np.ascontiguousarray(src, dtype=np.float64)
    cdef const double[:, ::1] dv = np.ascontiguousarray(dst, dtype=np.float64)
    cdef const int64_t[:, ::1] smp = np.ascontiguousarray(samples, dtype=np.int64)
    cdef Py_ssize_t n = sv.shape[0], max_iters = smp.shape[0]
    cdef Py_ssize_t limit = max_iters, it, j, lim2
    cdef Py_ssize_t best_i = -1
    cdef int64_t best_count = 0, count
    cdef double s4[8]
    cdef double d4[8]
    cdef double h[9]
    cdef double hi[9]
    with nogil:
        it = 0
        while it < limit:
            for j in range(4):
                s4[2 * j] = sv[smp[it, j], 0]
                s4[2 * j + 1] = sv[smp[it, j], 1]
                d4[2 * j] = dv[smp[it, j], 0]
                d4[2 * j + 1] = dv[smp[it, j], 1]
            if _minimal_h(s4, d4, h) and _inverse3(h, hi):
                count = _count(h, hi, sv, dv, thresh2)
                if count > best_count:
                    best_count = count
                    best_i = it
                    lim2 = _adaptive(best_count, n, confidence, max_iters)
                    if lim2 < it + 1:
                        lim2 = it + 1
                    if lim2 < limit:
                        limit = lim2
            it += 1
    return int(best_i), int(best_count), int(limit)
