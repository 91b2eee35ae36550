# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython RK4 kernel for the McSharry ECG limit-cycle ODE.

Traces are integrated one at a time with a scalar C inner loop; this is the
hot path when generating large simulated populations. Arithmetic mirrors the
NumPy fallback expression for expression.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, exp, floor, isfinite, sqrt

from ..errors import IntegrationDivergedError

cnp.import_array()

BACKEND_NAME = "native"

cdef double TWO_PI = 6.283185307179586476925287
cdef double PI = 3.141592653589793238462643


cdef inline double _wrap_centered(double dth) noexcept nogil:
    # wrap into (-pi, pi]
    cdef double w = dth - TWO_PI * floor((dth + PI) / TWO_PI)
    if w == -PI:
        w = PI
    return w


cdef inline double _forcing(double u, double v, double x,
                            const double* a, const double* b,
                            const double* theta,
                            double x0, double omega,
                            double* du, double* dv) noexcept nogil:
    cdef double r = sqrt(u * u + v * v)
    cdef double alpha = 1.0 - r
    cdef double phi = atan2(v, u)
    cdef double s = 0.0
    cdef double dth, g
    cdef int i
    du[0] = alpha * u - omega * v
    dv[0] = alpha * v + omega * u
    for i in range(5):
        dth = _wrap_centered(phi - theta[i])
        g = a[i] * dth * exp(-(dth * dth) / (2.0 * b[i] * b[i]))
        s = s + g
    return -s - (x - x0)


def rk4_mcsharry(object a_in, object b_in, object theta_in,
                 object x0_in, object omega_in,
                 object u0_in, object v0_in, object xinit_in,
                 double h, long n_steps, long stride):
    """Integrate a batch of McSharry systems with classical fixed-step RK4.

    Same contract as the NumPy fallback: returns ``(u, v, x)`` arrays of
    shape ``(n, n_steps // stride + 1)`` and raises
    :class:`IntegrationDivergedError` on a non-finite state.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] a = \
        np.ascontiguousarray(a_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] b = \
        np.ascontiguousarray(b_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] theta = \
        np.ascontiguousarray(theta_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x0 = \
        np.ascontiguousarray(x0_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] omega = \
        np.ascontiguousarray(omega_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u0 = \
        np.ascontiguousarray(u0_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v0 = \
        np.ascontiguousarray(v0_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xinit = \
        np.ascontiguousarray(xinit_in, dtype=np.float64)

    if stride < 1 or n_steps % stride != 0:
        raise ValueError("n_steps must be a non-negative multiple of stride")

    cdef long n = u0.shape[0]
    cdef long m = n_steps // stride + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] out_u = np.empty((n, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] out_v = np.empty((n, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] out_x = np.empty((n, m))

    cdef double h6 = h / 6.0
    cdef double h2 = h / 2.0
    cdef double u, v, x, xb, w
    cdef double k1u, k1v, k1x, k2u, k2v, k2x, k3u, k3v, k3x, k4u, k4v, k4x
    cdef const double* ai
    cdef const double* bi
    cdef const double* ti
    cdef long i, k, j
    cdef long bad_trace = -1
    cdef long bad_step = 0

    with nogil:
        for i in range(n):
            ai = &a[i, 0]
            bi = &b[i, 0]
            ti = &theta[i, 0]
            xb = x0[i]
            w = omega[i]
            u = u0[i]
            v = v0[i]
            x = xinit[i]
            out_u[i, 0] = u
            out_v[i, 0] = v
            out_x[i, 0] = x
            for k in range(n_steps):
                k1x = _forcing(u, v, x, ai, bi, ti, xb, w, &k1u, &k1v)
                k2x = _forcing(u + h2 * k1u, v + h2 * k1v, x + h2 * k1x,
                               ai, bi, ti, xb, w, &k2u, &k2v)
                k3x = _forcing(u + h2 * k2u, v + h2 * k2v, x + h2 * k2x,
                               ai, bi, ti, xb, w, &k3u, &k3v)
                k4x = _forcing(u + h * k3u, v + h * k3v, x + h * k3x,
                               ai, bi, ti, xb, w, &k4u, &k4v)
                u = u + h6 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
                v = v + h6 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
                x = x + h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                if not (isfinite(u) and isfinite(v) and isfinite(x)):
                    bad_trace = i
                    bad_step = k + 1
                    break
                if (k + 1) % stride == 0:
                    j = (k + 1) // stride
                    out_u[i, j] = u
                    out_v[i, j] = v
                    out_x[i, j] = x
            if bad_trace >= 0:
                break

    if bad_trace >= 0:
        raise IntegrationDivergedError(bad_step, bad_trace)
    return out_u, out_v, out_x
