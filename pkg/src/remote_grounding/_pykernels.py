"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``."""
import heapq
from collections import deque

import numpy as np


def bfs_hops(indptr, indices, sources, max_depth=-1):
    n = len(indptr) - 1
    hops = np.full(n, -1, dtype=np.int64)
    queue = deque()
    for s in sources:
        if hops[s] < 0:
            hops[s] = 0
            queue.append(int(s))
    while queue:
        u = queue.popleft()
        if max_depth >= 0 and hops[u] >= max_depth:
            continue
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if hops[v] < 0:
                hops[v] = hops[u] + 1
                queue.append(int(v))
    return hops


def dijkstra(indptr, indices, weights, source):
    n = len(indptr) - 1
    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    dist[source] = 0.0
    heap = [(0.0, int(source))]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for k in range(indptr[u], indptr[u + 1]):
            v = int(indices[k])
            nd = d + weights[k]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, pred


def box_iou(lo, hi, tlo, thi):
    ext = np.minimum(hi, thi) - np.maximum(lo, tlo)
    ext = np.maximum(ext, 0.0)
    inter = ext[:, 0] * ext[:, 1] * ext[:, 2]
    va = (hi[:, 0] - lo[:, 0]) * (hi[:, 1] - lo[:, 1]) * (hi[:, 2] - lo[:, 2])
    vb = (thi[0] - tlo[0]) * (thi[1] - tlo[1]) * (thi[2] - tlo[2])
    return inter / (va + vb - inter)
