"""Numba-jitted kernel implementations (scalar loops, sequential reductions).

Reduction order is fixed (ascending channel, then ascending particle index) so
repeated calls are bit-stable. ``parallel=True`` is deliberately not used.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def masked_loglik(particles, H, b, r, y):
    n, d = particles.shape
    s = H.shape[0]
    logdet = 0.0
    for c in range(s):
        logdet += np.log(2.0 * np.pi * r[c])
    out = np.empty(n)
    for i in range(n):
        quad = 0.0
        for c in range(s):
            mu = b[c]
            for k in range(d):
                mu += H[c, k] * particles[i, k]
            z = y[c] - mu
            quad += z * z / r[c]
        out[i] = -0.5 * (quad + logdet)
    return out


@njit(cache=True)
def resample_indices(cum_weights, u0):
    n = cum_weights.shape[0]
    out = np.empty(n, np.int64)
    j = 0
    for i in range(n):
        pos = u0 + i / n
        while j < n - 1 and cum_weights[j] <= pos:
            j += 1
        out[i] = j
    return out


@njit(cache=True)
def weighted_mean(particles, weights):
    n, d = particles.shape
    out = np.zeros(d)
    for i in range(n):
        w = weights[i]
        for k in range(d):
            out[k] += w * particles[i, k]
    return out
