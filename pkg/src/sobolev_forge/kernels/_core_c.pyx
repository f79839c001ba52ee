# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled forward kernels for the hot inner loops.

Same semantics as kernels._core_numpy; selected at import when built.
"""


def conv_layer_into(double[:, :, ::1] w, double[:, ::1] b,
                    double[:, :, ::1] z, double[:, :, ::1] out):
    """out[p, i, j] = relu(b[i, j] + sum_{k,l} w[j, k, l] * z[p, i+k, l])."""
    cdef Py_ssize_t n = z.shape[0], D = z.shape[1], C = z.shape[2]
    cdef Py_ssize_t Cp = w.shape[0], K = w.shape[1]
    cdef Py_ssize_t p, i, j, k, l, kmax
    cdef double acc
    with nogil:
        for p in range(n):
            for i in range(D):
                kmax = K if K < D - i else D - i
                for j in range(Cp):
                    acc = b[i, j]
                    for k in range(kmax):
                        for l in range(C):
                            acc += w[j, k, l] * z[p, i + k, l]
                    out[p, i, j] = acc if acc > 0.0 else 0.0


def mlp_layer_into(double[:, ::1] w, double[::1] b,
                   double[:, ::1] x, double[:, ::1] out, bint relu):
    """out[p, j] = (relu of) b[j] + sum_l w[j, l] * x[p, l]."""
    cdef Py_ssize_t n = x.shape[0], C = x.shape[1], Cp = w.shape[0]
    cdef Py_ssize_t p, j, l
    cdef double acc
    with nogil:
        for p in range(n):
            for j in range(Cp):
                acc = b[j]
                for l in range(C):
                    acc += w[j, l] * x[p, l]
                if relu and acc < 0.0:
                    acc = 0.0
                out[p, j] = acc
