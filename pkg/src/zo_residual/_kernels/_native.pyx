# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Semantics mirror ``_fallback`` exactly."""

from libc.math cimport exp, fabs, isfinite, sin

import numpy as np

cdef enum:
    ONE_POINT = 0
    FORWARD = 1
    CENTRAL = 2
    RESIDUAL = 3


cdef inline double _half_sq(const double[::1] r, const double[::1] v, double s, Py_ssize_t m) noexcept nogil:
    cdef double acc = 0.0, z
    cdef Py_ssize_t j
    for j in range(m):
        z = r[j] + s * v[j]
        acc += z * z
    return 0.5 * acc


def qp_chain(int kind, const double[:, ::1] P, const double[:, ::1] U, double[::1] x, double[::1] r,
             double eta, double delta, double prev, double diverge_at,
             double[::1] f_obs, double[::1] gsq, double[::1] gap,
             double[:, ::1] X, double[::1] xsum, bint store):
    """Run ``U.shape[0]`` SGD steps on ``0.5 ||P^T (x - c)||^2``.

    ``r`` holds ``P^T (x - c)`` and is updated in place with ``x``.
    Returns ``(steps_done, status, prev)``; status 0 ok, 1 diverged,
    2 nonfinite.
    """
    cdef Py_ssize_t n = U.shape[0], d = P.shape[0], m = P.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double[::1] v = np.empty(m)
    cdef double y, y2, s, unorm, step, acc
    cdef int status = 0
    if n == 0:
        return 0, 0, prev
    with nogil:
        for i in range(n):
            for j in range(m):
                v[j] = 0.0
            unorm = 0.0
            for k in range(d):
                acc = U[i, k]
                unorm += acc * acc
                for j in range(m):
                    v[j] += P[k, j] * acc
            y = _half_sq(r, v, delta, m)
            if kind == ONE_POINT:
                y2 = 0.0
                s = y / delta
            elif kind == FORWARD:
                y2 = _half_sq(r, v, 0.0, m)
                s = (y - y2) / delta
            elif kind == CENTRAL:
                y2 = _half_sq(r, v, -delta, m)
                s = (y - y2) / (2.0 * delta)
            else:
                y2 = 0.0
                s = (y - prev) / delta
            if not (isfinite(y) and isfinite(y2)):
                status = 2
                break
            if fabs(y) > diverge_at or fabs(y2) > diverge_at:
                status = 1
                break
            if kind == RESIDUAL:
                prev = y
            f_obs[i] = y
            gsq[i] = s * s * unorm
            step = eta * s
            for k in range(d):
                if store:
                    X[i, k] = x[k]
                xsum[k] += x[k]
                x[k] -= step * U[i, k]
            for j in range(m):
                r[j] -= step * v[j]
            gap[i] = _half_sq(r, v, 0.0, m)
    return (i if status else n), status, prev


def lqr_rollouts(const double[:, ::1] A, const double[:, ::1] B, const double[:, ::1] Q,
                 const double[:, ::1] R, const double[:, :, ::1] K, const double[:, ::1] X0,
                 const double[:, :, ::1] W, double gamma, double clip):
    """Discounted finite-horizon costs of ``u = K x`` rollouts.

    ``K`` is ``(n, n_u, n_x)``, ``X0`` ``(n, n_x)``, ``W`` ``(n, H, n_x)``
    (already scaled).  Costs above ``clip`` (or nonfinite) are clipped.
    """
    cdef Py_ssize_t n = K.shape[0], nu = K.shape[1], nx = K.shape[2], H = W.shape[1]
    cdef Py_ssize_t e, k, i, j
    out = np.empty(n)
    cdef double[::1] out_v = out
    cdef double[::1] x = np.empty(nx)
    cdef double[::1] xn = np.empty(nx)
    cdef double[::1] u = np.empty(nu)
    cdef double cost, disc, qx, ru, acc
    with nogil:
        for e in range(n):
            for i in range(nx):
                x[i] = X0[e, i]
            cost = 0.0
            disc = 1.0
            for k in range(H):
                for i in range(nu):
                    acc = 0.0
                    for j in range(nx):
                        acc += K[e, i, j] * x[j]
                    u[i] = acc
                qx = 0.0
                for i in range(nx):
                    acc = 0.0
                    for j in range(nx):
                        acc += Q[i, j] * x[j]
                    qx += x[i] * acc
                ru = 0.0
                for i in range(nu):
                    acc = 0.0
                    for j in range(nu):
                        acc += R[i, j] * u[j]
                    ru += u[i] * acc
                cost += disc * (qx + ru)
                if not (cost <= clip):
                    cost = clip
                    break
                disc *= gamma
                for i in range(nx):
                    acc = W[e, k, i]
                    for j in range(nx):
                        acc += A[i, j] * x[j]
                    for j in range(nu):
                        acc += B[i, j] * u[j]
                    xn[i] = acc
                for i in range(nx):
                    x[i] = xn[i]
            out_v[e] = cost
    return out


def grid_episodes(const double[:, :, ::1] theta, const double[:, :, ::1] noise,
                  const long[::1] owner, const long[::1] target, const long[::1] offset,
                  const double[:, ::1] centers, const double[::1] amp, const double[::1] omega,
                  const double[::1] phase, const double[::1] m0, double noise_std,
                  double gamma, int horizon):
    """Accumulated discounted rewards of softmax resource-sharing episodes.

    ``theta`` is ``(n, n_actions, n_features)``; ``noise`` is
    ``(n, horizon + 1, n_agents)`` standard normals.
    """
    cdef Py_ssize_t n = theta.shape[0], na = theta.shape[1], nf = theta.shape[2]
    cdef Py_ssize_t ng = m0.shape[0]
    cdef Py_ssize_t e, k, i, a, p, lo, hi
    out = np.empty(n)
    cdef double[::1] out_v = out
    cdef double[::1] m = np.empty(ng)
    cdef double[::1] mn = np.empty(ng)
    cdef double[::1] dem = np.empty(ng)
    cdef double[:, ::1] psi = np.empty((ng, nf))
    cdef double[::1] z = np.empty(na)
    cdef double J, disc, acc, zmax, tot, dm, dd
    with nogil:
        for e in range(n):
            for i in range(ng):
                m[i] = m0[i]
            J = 0.0
            disc = 1.0
            for k in range(horizon + 1):
                for i in range(ng):
                    dem[i] = amp[i] * sin(omega[i] * k + phase[i]) + noise_std * noise[e, k, i]
                    if m[i] < 0.0:
                        J -= disc * m[i] * m[i]
                if k == horizon:
                    break
                disc *= gamma
                for i in range(ng):
                    for p in range(nf):
                        dm = m[i] - centers[p, 0]
                        dd = dem[i] - centers[p, 1]
                        psi[i, p] = dm * dm + dd * dd
                for a in range(na):
                    acc = 0.0
                    for p in range(nf):
                        acc += psi[owner[a], p] * theta[e, a, p]
                    z[a] = acc
                for i in range(ng):
                    mn[i] = -dem[i]
                for i in range(ng):
                    lo = offset[i]
                    hi = offset[i + 1]
                    zmax = z[lo]
                    for a in range(lo + 1, hi):
                        if z[a] > zmax:
                            zmax = z[a]
                    tot = 0.0
                    for a in range(lo, hi):
                        z[a] = exp(z[a] - zmax)
                        tot += z[a]
                    for a in range(lo, hi):
                        mn[target[a]] += (z[a] / tot) * m[i]
                for i in range(ng):
                    m[i] = mn[i]
            out_v[e] = J
    return out
