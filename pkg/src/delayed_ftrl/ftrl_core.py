"""FTRL over the probability simplex with the hybrid Tsallis/negentropy regularizer.

The regularizer is separable::

    F(x) = sum_i  -2 * eta_inv * sqrt(x_i) + gamma_inv[i] * x_i * (log(x_i) - 1)

so the minimizer of ``<L, x> + F(x)`` on the simplex is characterised by a
single Lagrange multiplier ``nu`` with ``f_i'(x_i) = nu - L_i`` for every arm.
We solve that one-dimensional dual problem by safeguarded Newton and invert
each marginal derivative ``f_i'`` in the variable ``u = log(x)``.

Distributions are plain float64 numpy arrays; callers that want validation go
through :func:`solve_ftrl`, the engine calls the jitted kernel directly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

MAX_OUTER_ITER = 200
MAX_INNER_ITER = 100
INNER_RTOL = 1e-13
OUTER_TOL = 1e-14
UNDERFLOW = 1e-300

# kernel status codes
_OK = 0
_INNER_FAIL = 1
_OUTER_FAIL = 2


class SolverError(RuntimeError):
    """Raised when a root-finding loop exhausts its iteration cap."""


class SolverDiagnostic(UserWarning):
    """Emitted when a solved probability falls below the underflow floor."""


@dataclass(frozen=True)
class RegularizerWeights:
    """Inverse learning rates of the hybrid regularizer.

    ``eta_inv`` scales the Tsallis term, ``gamma_inv`` holds one negentropy
    weight per arm (all equal in the symmetric case).
    """

    eta_inv: float
    gamma_inv: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(self.gamma_inv, dtype=np.float64)
        if g.ndim != 1:
            raise ValueError("gamma_inv must be a vector")
        object.__setattr__(self, "gamma_inv", g)
        if not (math.isfinite(self.eta_inv) and self.eta_inv >= 0.0):
            raise ValueError(f"eta_inv must be finite and >= 0, got {self.eta_inv}")
        if not np.all(np.isfinite(g)) or np.any(g < 0.0):
            raise ValueError("gamma_inv entries must be finite and >= 0")
        if self.eta_inv == 0.0 and np.any(g == 0.0):
            raise ValueError("degenerate regularizer: eta_inv = 0 and some gamma_inv = 0")

    @classmethod
    def symmetric(cls, eta_inv: float, gamma_inv: float, K: int) -> "RegularizerWeights":
        return cls(float(eta_inv), np.full(K, float(gamma_inv)))

    @property
    def K(self) -> int:
        return self.gamma_inv.shape[0]


class Solution(NamedTuple):
    x: np.ndarray
    nu: float
    iterations: int
    underflow: bool


# ---------------------------------------------------------------------------
# jitted kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _marginal(x, a, b):
    return -a / math.sqrt(x) + b * math.log(x)


@njit(cache=True)
def _invert_log(c, a, b):
    """Return (u, status) with -a*exp(-u/2) + b*u = c, u = log(x).

    h(u) = -a e^{-u/2} + b u - c is increasing and concave in u, so Newton
    started left of the root climbs monotonically; the bracket guards it anyway.
    """
    if b == 0.0:
        # pure Tsallis: x = (a / -c)^2, needs c < 0
        if c >= 0.0:
            return math.inf, _INNER_FAIL
        return 2.0 * (math.log(a) - math.log(-c)), _OK
    if a == 0.0:
        return c / b, _OK
    if c < 0.0:
        # a root at u <= 0 clears both single-term roots; a root at u > 0 clears 0
        u_t = 2.0 * (math.log(a) - math.log(-c))
        u_e = c / b
        lo = min(max(u_t, u_e), 0.0)
        hi = max(2.0 * (math.log(2.0 * a) - math.log(-c)), c / (2.0 * b))
        u = lo
        e = math.exp(-0.5 * lo)
        if -a * e + b * lo - c > INNER_RTOL * (abs(c) + a * e + b * abs(lo)):
            # root lies left of lo; below both single-term roots h < 0.
            # Newton from the right end lands left of the root, then climbs.
            hi = lo
            lo = min(u_t, u_e)
    else:
        lo = c / b
        hi = lo + (a / b) * math.exp(-0.5 * lo)
        u = lo
    for _ in range(MAX_INNER_ITER):
        e = math.exp(-0.5 * u)
        h = -a * e + b * u - c
        scale = abs(c) + a * e + b * abs(u)
        if abs(h) <= INNER_RTOL * scale and math.isfinite(scale):
            return u, _OK
        if h < 0.0:
            lo = u
        else:
            hi = u
        dh = 0.5 * a * e + b
        un = u - h / dh
        if not (lo < un < hi):
            un = 0.5 * (lo + hi)
        if un == u or hi - lo <= 4e-16 * (1.0 + abs(u)):
            return u, _OK
        u = un
    return u, _INNER_FAIL


@njit(cache=True)
def _probs_at(nu, L, a, g, x):
    """Fill x with x_i(nu); return (sum, sum of 1/f''(x_i), status)."""
    s = 0.0
    ds = 0.0
    for i in range(L.shape[0]):
        u, st = _invert_log(nu - L[i], a, g[i])
        if st != _OK:
            return s, ds, st
        xi = math.exp(u)
        x[i] = xi
        s += xi
        # 1/f''(x) with f''(x) = a/2 x^{-3/2} + b/x
        ds += 1.0 / (0.5 * a / (xi * math.sqrt(xi)) + g[i] / xi) if xi > 0.0 else 0.0
    return s, ds, _OK


@njit(cache=True)
def _solve_kernel(L, a, g, x):
    """Solve the dual equation sum_i x_i(nu) = 1. Returns (nu, iterations, status)."""
    K = L.shape[0]
    if K == 1:
        x[0] = 1.0
        return L[0] + _marginal(1.0, a, g[0]), 0, _OK
    # x_i(nu) <= 1/K for every i at nu = lo, and x_i(nu) >= 1/K at nu = hi
    inv_k = 1.0 / K
    lo = math.inf
    hi = -math.inf
    hi_one = math.inf
    for i in range(K):
        v = L[i] + _marginal(inv_k, a, g[i])
        lo = min(lo, v)
        hi = max(hi, v)
        hi_one = min(hi_one, L[i] + _marginal(1.0, a, g[i]))
    hi = min(hi, hi_one)
    if hi <= lo:
        # every arm sits at exactly 1/K (symmetric instance)
        nu = lo
        s, ds, st = _probs_at(nu, L, a, g, x)
        return nu, 0, st
    # g(nu) = sum x_i(nu) - 1 is increasing and convex: Newton from the right
    nu = hi
    for it in range(1, MAX_OUTER_ITER + 1):
        s, ds, st = _probs_at(nu, L, a, g, x)
        if st != _OK:
            return nu, it, st
        r = s - 1.0
        if abs(r) <= OUTER_TOL * math.sqrt(K):
            return nu, it, _OK
        if r > 0.0:
            hi = nu
        else:
            lo = nu
        nn = nu - r / ds if ds > 0.0 else 0.5 * (lo + hi)
        if not (lo < nn < hi):
            nn = 0.5 * (lo + hi)
        if nn == nu:
            return nu, it, _OK
        nu = nn
    return nu, MAX_OUTER_ITER, _OUTER_FAIL


@njit(cache=True)
def _sample_inverse_cdf(x, u):
    c = 0.0
    K = x.shape[0]
    for i in range(K):
        c += x[i]
        if u < c:
            return i
    # u lands in the rounding gap above the last partial sum
    for i in range(K - 1, -1, -1):
        if x[i] > 0.0:
            return i
    return K - 1


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def marginal_derivative(x: float, w: RegularizerWeights, i: int) -> float:
    """Derivative of arm ``i``'s regularizer term at ``x``."""
    if not x > 0.0:
        raise ValueError(f"marginal derivative needs x > 0, got {x}")
    return -w.eta_inv / math.sqrt(x) + w.gamma_inv[i] * math.log(x)


def invert_marginal(target: float, w: RegularizerWeights, i: int) -> float:
    """Unique ``x > 0`` with ``marginal_derivative(x, w, i) == target``."""
    u, status = _invert_log(float(target), float(w.eta_inv), float(w.gamma_inv[i]))
    if status != _OK:
        raise SolverError(
            f"marginal inversion failed for target={target}, eta_inv={w.eta_inv}, "
            f"gamma_inv={w.gamma_inv[i]}"
        )
    return math.exp(u)


def solve_ftrl_full(L, w: RegularizerWeights) -> Solution:
    L = np.ascontiguousarray(L, dtype=np.float64)
    if L.ndim != 1 or L.shape[0] != w.K:
        raise ValueError(f"loss vector of shape {L.shape} does not match K={w.K}")
    if L.shape[0] < 1:
        raise ValueError("need at least one arm")
    if not np.all(np.isfinite(L)):
        raise ValueError("cumulative losses must be finite")
    x = np.empty_like(L)
    nu, it, status = _solve_kernel(L, float(w.eta_inv), w.gamma_inv, x)
    if status != _OK:
        kind = "inner" if status == _INNER_FAIL else "outer"
        raise SolverError(f"FTRL {kind} root-finding did not converge (nu={nu})")
    underflow = bool(np.min(x) < UNDERFLOW)
    if underflow:
        warnings.warn(
            f"solved probability {np.min(x):.3e} below {UNDERFLOW:g}", SolverDiagnostic
        )
    return Solution(x, float(nu), int(it), underflow)


def solve_ftrl(L, w: RegularizerWeights) -> np.ndarray:
    """Minimise ``<L, x> + F(x)`` over the simplex."""
    return solve_ftrl_full(L, w).x


def objective_value(x, L, w: RegularizerWeights) -> float:
    x = np.asarray(x, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if np.any(x < 0.0):
        raise ValueError("x must be non-negative")
    # 0 * log 0 = 0 so boundary points evaluate cleanly
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = np.where(x > 0.0, x * np.log(np.where(x > 0.0, x, 1.0)), 0.0)
    return float(
        L @ x - 2.0 * w.eta_inv * np.sum(np.sqrt(x)) + np.sum(w.gamma_inv * (xlogx - x))
    )


def kkt_residual(x, L, w: RegularizerWeights, nu: float) -> float:
    """Largest relative stationarity violation ``|f_i'(x_i) + L_i - nu| / (1 + |nu|)``."""
    x = np.asarray(x, dtype=np.float64)
    d = -w.eta_inv / np.sqrt(x) + w.gamma_inv * np.log(x)
    return float(np.max(np.abs(d + np.asarray(L) - nu)) / (1.0 + abs(nu)))
