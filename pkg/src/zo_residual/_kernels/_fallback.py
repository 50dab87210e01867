"""Pure-Python/numpy versions of the compiled kernels.

Same signatures and results as ``_native`` (up to floating-point
reassociation); used when the extension is not built or when
``ZO_RESIDUAL_PURE_PYTHON`` is set.
"""

import math

import numpy as np

ONE_POINT, FORWARD, CENTRAL, RESIDUAL = 0, 1, 2, 3


def qp_chain(kind, P, U, x, r, eta, delta, prev, diverge_at, f_obs, gsq, gap, X, xsum, store):
    n = U.shape[0]
    for i in range(n):
        u = U[i]
        v = u @ P
        y = 0.5 * float(np.dot(r + delta * v, r + delta * v))
        if kind == ONE_POINT:
            y2 = 0.0
            s = y / delta
        elif kind == FORWARD:
            y2 = 0.5 * float(np.dot(r, r))
            s = (y - y2) / delta
        elif kind == CENTRAL:
            y2 = 0.5 * float(np.dot(r - delta * v, r - delta * v))
            s = (y - y2) / (2.0 * delta)
        else:
            y2 = 0.0
            s = (y - prev) / delta
        if not (math.isfinite(y) and math.isfinite(y2)):
            return i, 2, prev
        if abs(y) > diverge_at or abs(y2) > diverge_at:
            return i, 1, prev
        if kind == RESIDUAL:
            prev = y
        f_obs[i] = y
        gsq[i] = s * s * float(np.dot(u, u))
        step = eta * s
        if store:
            X[i] = x
        xsum += x
        x -= step * u
        r -= step * v
        gap[i] = 0.5 * float(np.dot(r, r))
    return n, 0, prev


def lqr_rollouts(A, B, Q, R, K, X0, W, gamma, clip):
    n, H = K.shape[0], W.shape[1]
    out = np.empty(n)
    for e in range(n):
        Ke = K[e]
        x = X0[e].copy()
        cost = 0.0
        disc = 1.0
        for k in range(H):
            u = Ke @ x
            cost += disc * (float(x @ Q @ x) + float(u @ R @ u))
            if not cost <= clip:
                cost = clip
                break
            disc *= gamma
            x = A @ x + B @ u + W[e, k]
        out[e] = cost
    return out


def grid_episodes(theta, noise, owner, target, offset, centers, amp, omega, phase, m0,
                  noise_std, gamma, horizon):
    n = theta.shape[0]
    out = np.empty(n)
    for e in range(n):
        out[e] = grid_trajectory(theta[e], noise[e], owner, target, offset, centers, amp, omega,
                                 phase, m0, noise_std, gamma, horizon)["J"]
    return out


def grid_trajectory(theta, noise, owner, target, offset, centers, amp, omega, phase, m0,
                    noise_std, gamma, horizon):
    """One episode with the full stock/demand/probability history."""
    ng = m0.shape[0]
    m = m0.astype(float).copy()
    J = 0.0
    disc = 1.0
    stocks, demands, probs = [], [], []
    for k in range(horizon + 1):
        dem = amp * np.sin(omega * k + phase) + noise_std * noise[k]
        stocks.append(m.copy())
        demands.append(dem)
        J -= disc * float(np.sum(np.where(m < 0.0, m * m, 0.0)))
        if k == horizon:
            break
        disc *= gamma
        psi = (m[:, None] - centers[None, :, 0]) ** 2 + (dem[:, None] - centers[None, :, 1]) ** 2
        z = np.einsum("ap,ap->a", psi[owner], theta)
        a = np.empty_like(z)
        for i in range(ng):
            lo, hi = offset[i], offset[i + 1]
            zi = np.exp(z[lo:hi] - z[lo:hi].max())
            a[lo:hi] = zi / zi.sum()
        probs.append(a)
        mn = -dem.copy()
        np.add.at(mn, target, a * m[owner])
        m = mn
    return {"J": J, "stock": np.array(stocks), "demand": np.array(demands), "probs": np.array(probs)}
