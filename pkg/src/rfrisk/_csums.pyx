# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused weighted eigensum kernels.

Each call makes a single pass over the mode arrays and accumulates every
sum the solvers need, avoiding the temporaries of the numpy version.
"""


def weighted_sums(const double[::1] lam, const double[::1] vsq,
                  const double[::1] w, double gamma):
    cdef Py_ssize_t i, m = lam.shape[0]
    cdef double z = 0.0, q = 0.0, b1 = 0.0, b2 = 0.0, c1 = 0.0
    cdef double l, d, learn, resid, wi, wv
    with nogil:
        for i in range(m):
            l = lam[i]
            d = l + gamma
            learn = l / d
            resid = gamma / d
            wi = w[i]
            wv = wi * vsq[i]
            z += wi * learn
            q += wi * learn * learn
            b1 += wv * resid
            b2 += wv * resid * resid
            c1 += wv * learn / d
    return z, q, b1, b2, c1


def weighted_z(const double[::1] lam, const double[::1] w, double gamma):
    cdef Py_ssize_t i, m = lam.shape[0]
    cdef double z = 0.0
    with nogil:
        for i in range(m):
            z += w[i] * lam[i] / (lam[i] + gamma)
    return z
