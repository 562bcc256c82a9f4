# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph and geometry kernels.

Every function here has a line-for-line twin in ``_pykernels`` and must
return bit-identical results; ``kernels`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def bfs_hops(const long[::1] indptr, const long[::1] indices, sources, long max_depth=-1):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[long, ndim=1] hops_arr = np.full(n, -1, dtype=np.int64)
    cdef long[::1] hops = hops_arr
    cdef long[::1] queue = np.empty(max(n, 1), dtype=np.int64)
    cdef Py_ssize_t head = 0, tail = 0, k
    cdef long u, v, s
    for s in sources:
        if hops[s] < 0:
            hops[s] = 0
            queue[tail] = s
            tail += 1
    while head < tail:
        u = queue[head]
        head += 1
        if max_depth >= 0 and hops[u] >= max_depth:
            continue
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if hops[v] < 0:
                hops[v] = hops[u] + 1
                queue[tail] = v
                tail += 1
    return hops_arr


cdef inline bint _less(double da, long na, double db, long nb) nogil:
    return da < db or (da == db and na < nb)


def dijkstra(const long[::1] indptr, const long[::1] indices,
             const double[::1] weights, long source):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[double, ndim=1] dist_arr = np.full(n, INFINITY)
    cdef cnp.ndarray[long, ndim=1] pred_arr = np.full(n, -1, dtype=np.int64)
    cdef double[::1] dist = dist_arr
    cdef long[::1] pred = pred_arr
    cdef Py_ssize_t cap = indices.shape[0] + 1
    cdef double[::1] hd = np.empty(cap, dtype=np.float64)
    cdef long[::1] hn = np.empty(cap, dtype=np.int64)
    cdef char[::1] done = np.zeros(max(n, 1), dtype=np.int8)
    cdef Py_ssize_t size = 0, i, child, parent, k
    cdef double d, nd, td
    cdef long u, v, tn

    dist[source] = 0.0
    hd[0] = 0.0
    hn[0] = source
    size = 1
    while size > 0:
        d = hd[0]
        u = hn[0]
        size -= 1
        if size > 0:
            # sift the last element down from the root
            td = hd[size]
            tn = hn[size]
            i = 0
            while True:
                child = 2 * i + 1
                if child >= size:
                    break
                if child + 1 < size and _less(hd[child + 1], hn[child + 1], hd[child], hn[child]):
                    child += 1
                if _less(hd[child], hn[child], td, tn):
                    hd[i] = hd[child]
                    hn[i] = hn[child]
                    i = child
                else:
                    break
            hd[i] = td
            hn[i] = tn
        if done[u]:
            continue
        done[u] = 1
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            nd = d + weights[k]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                i = size
                size += 1
                while i > 0:
                    parent = (i - 1) // 2
                    if _less(nd, v, hd[parent], hn[parent]):
                        hd[i] = hd[parent]
                        hn[i] = hn[parent]
                        i = parent
                    else:
                        break
                hd[i] = nd
                hn[i] = v
    return dist_arr, pred_arr


def box_iou(const double[:, ::1] lo, const double[:, ::1] hi,
            const double[::1] tlo, const double[::1] thi):
    cdef Py_ssize_t n = lo.shape[0], i, a
    cdef cnp.ndarray[double, ndim=1] out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double inter, va, vb, ext, top, bot
    vb = (thi[0] - tlo[0]) * (thi[1] - tlo[1]) * (thi[2] - tlo[2])
    for i in range(n):
        inter = 1.0
        for a in range(3):
            top = hi[i, a] if hi[i, a] < thi[a] else thi[a]
            bot = lo[i, a] if lo[i, a] > tlo[a] else tlo[a]
            ext = top - bot
            if ext < 0.0:
                ext = 0.0
            inter = inter * ext
        va = (hi[i, 0] - lo[i, 0]) * (hi[i, 1] - lo[i, 1]) * (hi[i, 2] - lo[i, 2])
        out[i] = inter / (va + vb - inter)
    return out_arr
