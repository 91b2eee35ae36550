"""Pure-NumPy RK4 integrator for the McSharry ECG limit-cycle ODE.

Batched fallback used when the compiled extension is unavailable. All traces
in a batch advance in lockstep, so per-step NumPy overhead is amortized over
the batch; single-trace calls are noticeably slower than the C kernel.

The arithmetic (stage order, wave accumulation order, RK4 combination) is
written to mirror the Cython kernel expression for expression, so the two
backends agree to floating-point noise.
"""
import numpy as np

from ..errors import IntegrationDivergedError

BACKEND_NAME = "python"

_TWO_PI = 2.0 * np.pi


def _wrap_centered(dth):
    """Wrap angles into (-pi, pi]."""
    w = dth - _TWO_PI * np.floor((dth + np.pi) / _TWO_PI)
    return np.where(w == -np.pi, np.pi, w)


def _deriv(u, v, x, a, b, theta, x0, omega):
    r = np.sqrt(u * u + v * v)
    alpha = 1.0 - r
    du = alpha * u - omega * v
    dv = alpha * v + omega * u
    phi = np.arctan2(v, u)
    dth = _wrap_centered(phi[:, None] - theta)
    g = a * dth * np.exp(-(dth * dth) / (2.0 * b * b))
    # fixed left-to-right accumulation, matching the C kernel's wave loop
    s = g[:, 0]
    for k in range(1, g.shape[1]):
        s = s + g[:, k]
    dx = -s - (x - x0)
    return du, dv, dx


def rk4_mcsharry(a, b, theta, x0, omega, u0, v0, xinit, h, n_steps, stride):
    """Integrate a batch of McSharry systems with classical fixed-step RK4.

    Parameters
    ----------
    a, b, theta : ndarray, shape (n, 5)
        Wave amplitudes, widths (radians) and angular positions (radians).
    x0, omega, u0, v0, xinit : ndarray, shape (n,)
        Baseline voltage, angular frequency and initial state per trace.
    h : float
        Step size in seconds.
    n_steps : int
        Number of RK4 steps; must be a multiple of ``stride``.
    stride : int
        Keep every ``stride``-th state (plus the initial one).

    Returns
    -------
    (u, v, x) : ndarrays of shape (n, n_steps // stride + 1)

    Raises
    ------
    IntegrationDivergedError
        If any trace reaches a non-finite state; the error names the step.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    omega = np.ascontiguousarray(omega, dtype=np.float64)
    u = np.array(u0, dtype=np.float64, copy=True)
    v = np.array(v0, dtype=np.float64, copy=True)
    x = np.array(xinit, dtype=np.float64, copy=True)
    n = u.shape[0]
    n_steps = int(n_steps)
    stride = int(stride)
    if stride < 1 or n_steps % stride != 0:
        raise ValueError("n_steps must be a non-negative multiple of stride")

    m = n_steps // stride + 1
    out_u = np.empty((n, m))
    out_v = np.empty((n, m))
    out_x = np.empty((n, m))
    out_u[:, 0] = u
    out_v[:, 0] = v
    out_x[:, 0] = x

    h6 = h / 6.0
    h2 = h / 2.0
    for k in range(n_steps):
        k1u, k1v, k1x = _deriv(u, v, x, a, b, theta, x0, omega)
        k2u, k2v, k2x = _deriv(u + h2 * k1u, v + h2 * k1v, x + h2 * k1x,
                               a, b, theta, x0, omega)
        k3u, k3v, k3x = _deriv(u + h2 * k2u, v + h2 * k2v, x + h2 * k2x,
                               a, b, theta, x0, omega)
        k4u, k4v, k4x = _deriv(u + h * k3u, v + h * k3v, x + h * k3x,
                               a, b, theta, x0, omega)
        u = u + h6 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        v = v + h6 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        x = x + h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)

        ok = np.isfinite(u) & np.isfinite(v) & np.isfinite(x)
        if not ok.all():
            raise IntegrationDivergedError(k + 1, int(np.flatnonzero(~ok)[0]))
        if (k + 1) % stride == 0:
            j = (k + 1) // stride
            out_u[:, j] = u
            out_v[:, j] = v
            out_x[:, j] = x

    return out_u, out_v, out_x
