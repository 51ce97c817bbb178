"""Compiled inner loops for the likelihoods and the unit-cube map.

These run once per sampler step, where numpy's per-call overhead on arrays of
a few hundred elements dominates.  Inputs are assumed valid.
"""

import math

import numba
import numpy as np

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@numba.njit(cache=True)
def unit_to_box(u, lower, span, head, tail):
    d = u.size
    out = np.empty(d)
    top = 1.0
    for j in range(head, 0, -1):
        top *= u[j - 1] ** (1.0 / j)
        out[j - 1] = lower[j - 1] + top * span[j - 1]
    for j in range(head, d):
        out[j] = lower[j] + u[j] * span[j]
    if tail:
        cuts = np.sort(out[d - tail :])
        prev = 0.0
        for j in range(tail):
            out[d - tail + j] = cuts[j] - prev
            prev = cuts[j]
    return out


@numba.njit(cache=True)
def gmm_loglike(y, theta, s):
    # theta = (mu_1..mu_S, sigma_1..sigma_S, pi_1..pi_{S-1})
    const = np.empty(s)
    inv = np.empty(s)
    last = 1.0
    for k in range(s):
        if k < s - 1:
            w = theta[2 * s + k]
            last -= w
        else:
            w = last
        sig = theta[s + k]
        inv[k] = 1.0 / sig
        const[k] = (math.log(w) if w > 0.0 else -np.inf) - math.log(sig) - _HALF_LOG_2PI
    total = 0.0
    comp = np.empty(s)
    for i in range(y.size):
        top = -np.inf
        for k in range(s):
            z = (y[i] - theta[k]) * inv[k]
            comp[k] = const[k] - 0.5 * z * z
            if comp[k] > top:
                top = comp[k]
        if top == -np.inf:
            return -np.inf
        acc = 0.0
        for k in range(s):
            acc += math.exp(comp[k] - top)
        total += top + math.log(acc)
    return total


@numba.njit(cache=True)
def poly_loglike(design, y, theta):
    # theta = (w_1..w_N, gamma)
    n = design.shape[1]
    gamma = theta[n]
    rss = 0.0
    for i in range(y.size):
        f = 0.0
        for j in range(n):
            f += design[i, j] * theta[j]
        r = y[i] - f
        rss += r * r
    return 0.5 * y.size * (math.log(gamma) - 2.0 * _HALF_LOG_2PI) - 0.5 * gamma * rss


# likelihood kinds for ``walk``: the model hands over (kind, matrix, vector, int)
POLY = 0
GMM = 1


@numba.njit(cache=True)
def loglike(kind, mat, vec, k, theta):
    if kind == POLY:
        return poly_loglike(mat, vec, theta)
    return gmm_loglike(vec, theta, k)


@numba.njit(cache=True)
def walk(u, log_l, label, log_l_min, label_min, noise, labels, lower, span, head, tail, reflect, kind, mat, vec, k):
    """Constrained random walk; mirrors ``nested.explore`` step for step."""
    n_steps, d = noise.shape
    u = u.copy()
    u_new = np.empty(d)
    accepted = 0
    for i in range(n_steps):
        # Gibbs refresh of the tie-break label given the current position
        if log_l > log_l_min:
            label = labels[i]
        else:
            label = 1.0 - (1.0 - label_min) * labels[i]
        inside = True
        for j in range(d):
            x = u[j] + noise[i, j]
            if reflect:
                x = x % 2.0
                if x > 1.0:
                    x = 2.0 - x
            elif x < 0.0 or x > 1.0:
                inside = False
                break
            u_new[j] = x
        if not inside:
            continue
        theta = unit_to_box(u_new, lower, span, head, tail)
        ll = loglike(kind, mat, vec, k, theta)
        if ll > log_l_min or (ll == log_l_min and label > label_min):
            u[:] = u_new
            log_l = ll
            accepted += 1
    return u, log_l, label, accepted
