"""Independent oracles used to freeze expected values.

Everything here deliberately avoids the code paths under test: the adapted
policies are enumerated exhaustively instead of folded backward, classical
expectations go through binomial weights or quadrature, and Brownian
functionals are simulated with their own batching.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

# Asmussen-Glynn-Pitman discrete-monitoring constant -zeta(1/2)/sqrt(2 pi).
BGK_BETA = 0.5826


def enumerate_adapted_value(n, sigmas, step_scale, path_value, maximize=True):
    """Optimal adapted-policy expectation by brute-force policy enumeration.

    A policy assigns one sigma to every sign-history node of the depth-n
    binary tree; for each of the K^(2^n - 1) policies the expectation is the
    equal-weight average of ``path_value`` over all 2^n sign sequences.  Only
    feasible for tiny n, which is the point: it never performs a backward
    fold.
    """
    sigmas = list(sigmas)
    n_nodes = 2**n - 1  # history node id: level k, bits of the sign prefix
    best = None
    sign_seqs = list(itertools.product((1.0, -1.0), repeat=n))
    for assignment in itertools.product(range(len(sigmas)), repeat=n_nodes):
        total = 0.0
        for signs in sign_seqs:
            pos = 0.0
            positions = [0.0]
            node = 0  # breadth-first id of the current history node
            prefix = 0
            for k in range(n):
                sigma = sigmas[assignment[node]]
                pos += sigma * signs[k] * step_scale
                positions.append(pos)
                prefix = (prefix << 1) | (1 if signs[k] > 0 else 0)
                node = (2 ** (k + 1) - 1) + prefix
            total += path_value(positions)
        value = total / len(sign_seqs)
        if best is None or (value > best if maximize else value < best):
            best = value
    return best


def binomial_terminal_value(phi, sigma, n, h):
    """Classical E[phi(S_n)] for the constant-sigma two-point walk."""
    j = np.arange(n + 1)
    weights = np.array([math.comb(n, int(k)) for k in j], dtype=float) * 0.5**n
    positions = sigma * h * (2.0 * j - n)
    return float(np.dot(weights, phi(positions)))


def gauss_hermite_normal_expectation(phi, sigma, nodes=64):
    """E[phi(sigma Z)], Z standard normal, by Gauss-Hermite quadrature."""
    xs, ws = np.polynomial.hermite.hermgauss(nodes)
    return float(np.dot(ws, phi(math.sqrt(2.0) * sigma * xs)) / math.sqrt(math.pi))


def mpmath_normal_tail(x):
    """1 - Phi(x) by high-precision quadrature of the Gaussian density."""
    import mpmath as mp

    mp.mp.dps = 40
    val = mp.quad(lambda t: mp.exp(-t * t / 2) / mp.sqrt(2 * mp.pi), [x, mp.inf])
    return float(val)


def mc_small_ball(x, paths, steps, seed, corrected=True, batch=2048, chunk=1000):
    """Monte-Carlo estimate of P(sup_{[0,1]} |B| <= x) with its standard error.

    Euler paths on a uniform grid; with ``corrected`` the threshold is pulled
    in by the discrete-monitoring constant BGK_BETA * sqrt(dt), which removes
    the O(1/sqrt(steps)) bias of comparing a discrete maximum against a
    continuous-time ball.
    """
    dt = 1.0 / steps
    thr = x - BGK_BETA * math.sqrt(dt) if corrected else x
    hits = 0
    done = 0
    bidx = 0
    while done < paths:
        b = min(batch, paths - done)
        rng = np.random.Generator(np.random.Philox(key=[int(seed), int(bidx)]))
        pos = np.zeros(b, dtype=np.float32)
        runmax = np.zeros(b, dtype=np.float32)
        left = steps
        while left > 0:
            c = min(chunk, left)
            # float32 keeps the 1e10-draw budget affordable; the rounding
            # noise (~1e-5 per path) is far below the 3-sigma comparison.
            z = rng.standard_normal((b, c), dtype=np.float32)
            segment = np.cumsum(z, axis=1)
            segment *= np.float32(math.sqrt(dt))
            segment += pos[:, None]
            np.abs(segment, out=segment)
            np.maximum(runmax, segment.max(axis=1), out=runmax)
            pos = pos + np.float32(math.sqrt(dt)) * z.sum(axis=1)
            left -= c
        hits += int(np.count_nonzero(runmax <= thr))
        done += b
        bidx += 1
    p = hits / paths
    se = math.sqrt(max(p * (1.0 - p), 1e-300) / paths)
    return p, se


def mc_max_abs_moment(p_exponent, sigma, n, paths, seed):
    """Monte-Carlo E[max_k |S_k|^p] for the constant-sigma two-point walk."""
    rng = np.random.Generator(np.random.Philox(key=[int(seed), 11]))
    total = 0.0
    batch = 4096
    done = 0
    while done < paths:
        b = min(batch, paths - done)
        eps = rng.integers(0, 2, size=(b, n)).astype(float) * 2.0 - 1.0
        walk = np.cumsum(sigma * eps, axis=1)
        m = np.max(np.abs(walk), axis=1)
        total += float(np.sum(m**p_exponent))
        done += b
    return total / paths
