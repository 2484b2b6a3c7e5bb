# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels.py``."""


def bm25_accumulate(double[::1] scores, const int[::1] doc_ids,
                    const double[::1] tfs, const double[::1] doc_lens,
                    double idf, double k1, double b, double avgdl):
    cdef Py_ssize_t i, n = doc_ids.shape[0]
    cdef int d
    cdef double tf, norm
    cdef double kp1 = k1 + 1.0
    for i in range(n):
        d = doc_ids[i]
        tf = tfs[i]
        norm = k1 * ((1.0 - b) + ((b * doc_lens[d]) / avgdl))
        scores[d] += (idf * (tf * kp1)) / (tf + norm)


def weighted_disagreement(const long[::1] a, const long[::1] b,
                          const double[::1] weights, int k):
    cdef Py_ssize_t i, j, n = a.shape[0]
    cdef long x, y
    cdef long[:] counts
    cdef long[:] rows
    cdef long[:] cols
    cdef double observed = 0.0, expected = 0.0, w
    import array
    counts = array.array("l", [0]) * (k * k)
    rows = array.array("l", [0]) * k
    cols = array.array("l", [0]) * k
    for i in range(n):
        x = a[i]
        y = b[i]
        counts[x * k + y] += 1
        rows[x] += 1
        cols[y] += 1
    for i in range(k):
        for j in range(k):
            w = weights[i * k + j]
            observed += w * <double>counts[i * k + j]
            expected += w * <double>(rows[i] * cols[j])
    return observed / <double>n, expected / (<double>n * <double>n)
