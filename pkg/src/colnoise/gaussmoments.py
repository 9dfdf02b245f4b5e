"""Gaussian moment combinatorics and quadratic-noise response cumulants.

Provides exact Hermite coefficient magnitudes, product moments of a
zero-mean Gaussian process via pairing enumeration, and the low-order
cumulants of the response of a linear system driven by the square of an
OU process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SizeError
from .model import NoiseSpec

_MAX_MOMENT_ORDER = 12
_MAX_CUMULANT_ORDER = 3


def hermite_abs(n, k):
    """|coefficient| of x^(n-2k) in the n-th probabilist Hermite polynomial.

    Exact integer n! / (2^k k! (n-2k)!).
    """
    if n < 0 or k < 0 or 2 * k > n:
        raise ParameterError(f"require 0 <= 2k <= n, got n={n}, k={k}")
    return math.factorial(n) // (2**k * math.factorial(k) * math.factorial(n - 2 * k))


@dataclass(frozen=True)
class CovSpec:
    """Time points plus a kernel evaluator; covariance matrix on demand."""

    times: tuple
    kernel: object  # callable (t, s) -> C(t, s), e.g. NoiseSpec.autocov

    def __init__(self, times, kernel):
        object.__setattr__(self, "times", tuple(float(t) for t in times))
        if isinstance(kernel, NoiseSpec):
            kernel = kernel.autocov
        if not callable(kernel):
            raise ParameterError("kernel must be callable or a NoiseSpec")
        object.__setattr__(self, "kernel", kernel)

    def matrix(self):
        ts = np.asarray(self.times)
        mat = np.asarray(self.kernel(ts[:, None], ts[None, :]), dtype=float)
        if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12):
            raise ParameterError("kernel evaluator produced an asymmetric matrix")
        if np.any(np.diag(mat) <= 0.0):
            raise ParameterError("kernel diagonal must be positive")
        return mat


def isserlis(cov):
    """Product moment E[Xi(s_1) ... Xi(s_n)] of a zero-mean Gaussian process.

    Zero for odd n; for even n the sum over all perfect pairings of the
    covariance products, enumerated recursively.  Supported up to n = 12
    (the pairing count grows as (n-1)!!).
    """
    n = len(cov.times)
    if n > _MAX_MOMENT_ORDER:
        raise SizeError(f"moment order {n} exceeds the supported maximum {_MAX_MOMENT_ORDER}")
    if n % 2 == 1:
        return 0.0
    if n == 0:
        return 1.0
    mat = cov.matrix()
    return _pair_sum(mat, tuple(range(n)))


def _pair_sum(mat, idx):
    """Recursive pairing sum: pair the first index with each partner."""
    if not idx:
        return 1.0
    first, rest = idx[0], idx[1:]
    total = 0.0
    for pos, j in enumerate(rest):
        total += mat[first, j] * _pair_sum(mat, rest[:pos] + rest[pos + 1:])
    return total


def pairing_count(n):
    """Number of perfect pairings of n items: (n-1)!! for even n, else 0."""
    if n % 2 == 1:
        return 0
    count = 1
    for m in range(n - 1, 0, -2):
        count *= m
    return count


def quadratic_cumulant(eta, kappa, noise, x0, n, t, *, t0=0.0, num=2001):
    """n-th cumulant of X(t) for dX/dt = eta X + kappa Xi^2(t), X(t0) = x0.

    The excitation squared is a quadratic form of the OU process, so the
    first cumulant is x0 e^{eta (t-t0)} + kappa * int C(s,s) e^{eta(t-s)} ds
    and higher cumulants are cyclic kernel-product integrals weighted by
    2^{n-1} (n-1)! kappa^n.  Orders above 3 are not implemented (no
    desk-scale independent check exists for them).

    ``num`` is the number of uniform quadrature nodes per axis.
    """
    if n < 1:
        raise ParameterError("cumulant order must be >= 1")
    if n > _MAX_CUMULANT_ORDER:
        raise SizeError(f"cumulant order {n} exceeds the supported maximum {_MAX_CUMULANT_ORDER}")
    if eta >= 0.0:
        raise ParameterError("requires eta < 0 (stable linear drift)")
    if not isinstance(noise, NoiseSpec) or noise.kind != "ou":
        raise ParameterError("requires an OU NoiseSpec")
    if t < t0:
        raise ParameterError("requires t >= t0")

    s = np.linspace(t0, t, num)
    decay = np.exp(eta * (t - s))
    if n == 1:
        integrand = noise.autocov(s, s) * decay
        return x0 * math.exp(eta * (t - t0)) + kappa * np.trapezoid(integrand, s)
    if n == 2:
        return 2.0 * kappa**2 * _cyclic2(noise, s, decay)
    return 4.0 * math.factorial(2) * kappa**3 * _cyclic3(noise, s, decay)


def _cyclic2(noise, s, decay):
    """Double integral of C(s1,s2)^2 e^{eta(2t-s1-s2)} over [t0,t]^2.

    Split along the diagonal s1 = s2 where the OU kernel has a kink: the
    integrand is symmetric, so integrate the lower triangle with the
    composite trapezoid rule and double it.
    """
    g = (noise.autocov(s[:, None], s[None, :]) ** 2) * decay[:, None] * decay[None, :]
    h = s[1] - s[0]
    # inner(j) = trapz of g[0:j+1, j] over s[0:j+1]; cumulative row sums
    csum = np.cumsum(g, axis=0)
    j = np.arange(s.size)
    inner = h * (csum[j, j] - 0.5 * g[0, j] - 0.5 * g[j, j])
    return 2.0 * np.trapezoid(inner, s)


def _cyclic3(noise, s, decay):
    """Triple cyclic integral via trace of the third power of the weighted
    kernel matrix M[i,j] = C(s_i,s_j) sqrt(w_i v_i w_j v_j)."""
    w = np.full(s.size, s[1] - s[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    root = np.sqrt(w * decay)
    m = noise.autocov(s[:, None], s[None, :]) * root[:, None] * root[None, :]
    return float(np.trace(m @ m @ m))
