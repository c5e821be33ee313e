"""Conormal Sobolev, truncated Gevrey, tangential and Gaussian-weighted layer norms.

Every infinite sum over the derivative order ``m`` is truncated at ``M``.
Vertical integrals use the grid's high-order quadrature weights.
Vertical derivatives come from repeated first-derivative stencils and are
trusted only up to ``y_cap``; what is dropped (orders above ``M`` and
vertical orders above the cap) is estimated by geometric extrapolation and
returned separately as a tail bound instead of being mixed into the value.

Derivatives are taken mode by mode in x. A mode whose vertical derivative
of order ``b`` falls below the roundoff that ``b`` stencil applications can
generate (``NOISE_FACTOR * eps * max|f_hat| * ||D||^b``) is discarded at that
order, so high-order mixed derivatives measure the field rather than
amplified rounding error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import NamedTuple

import numpy as np

from .grid import INTERIOR, LAYER, DomainError, Field, psi


class NormValue(NamedTuple):
    value: float
    tail: float

    @property
    def squared(self):
        return self.value ** 2


@dataclass(frozen=True)
class GevreyParams:
    gamma: float = 0.5
    k: int = 3
    rho0: float = 2.0
    lam: float = 1.0
    M: int | None = None
    delta: float | None = None      # None: use the grid's value
    t: float = 0.0
    y_cap: int = 6                  # highest vertical derivative order evaluated directly

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise DomainError("gamma must lie in (0, 1]")
        if self.k < 0:
            raise DomainError("k must be non-negative")
        if self.M is not None and self.M < self.k + 2:
            raise DomainError("truncation order M must be at least k + 2")

    @property
    def order(self):
        return self.k + 8 if self.M is None else self.M

    def rho(self):
        r = self.rho0 - self.lam * self.t
        if not 1.0 <= r <= 2.0:
            raise DomainError(f"rho(t) = {r:.4g} outside [1, 2] at t = {self.t}")
        return r

    def weight(self, m):
        """Factor multiplying the order-``m`` derivative sum."""
        j = m - self.k
        return self.rho() ** (2 * j) / math.factorial(j) ** (2.0 / self.gamma)

    def replace(self, **kw):
        from dataclasses import replace
        return replace(self, **kw)


@dataclass(frozen=True)
class LayerNormParams:
    a0: float = 0.25
    rho_p0: float = 2.0
    lambda_p: float = 1.0
    k: int = 3
    M: int | None = None
    gamma: float = 0.5
    t: float = 0.0
    z_cap: int = 6

    def __post_init__(self):
        if self.a0 <= 0:
            raise DomainError("a0 must be positive")

    @property
    def order(self):
        return self.k + 8 if self.M is None else self.M

    def rho_p(self):
        r = self.rho_p0 - self.lambda_p * self.t
        if r < 1.0:
            raise DomainError(f"rho_p(t) = {r:.4g} below 1 at t = {self.t}")
        return r

    def gevrey(self):
        return GevreyParams(self.gamma, self.k, self.rho_p0, self.lambda_p, self.order, None,
                            self.t, self.z_cap)


# ---------------------------------------------------------------------------
# tables of ||d_x^a V_b f||^2

def _x_energy(V, wv):
    """Per-wavenumber energy of each column, integrated with vertical weights ``wv``."""
    n = V.shape[0]
    F = np.fft.rfft(V, axis=0)
    c = np.full(F.shape[0], 2.0)
    c[0] = 1.0
    if n % 2 == 0:
        c[-1] = 1.0
    return (2 * np.pi / n ** 2) * c * ((np.abs(F) ** 2) @ wv)


def _x_moments(E, a_max):
    """``sum_k k^(2a) E_k`` for a = 0..a_max, Nyquist dropped once a >= 1."""
    k = np.arange(E.size, dtype=float)
    out = np.empty(a_max + 1)
    out[0] = E.sum()
    Ek = E.copy()
    Ek[-1] = 0.0
    for a in range(1, a_max + 1):
        out[a] = np.sum(Ek * k ** (2 * a))
    return out


NOISE_FACTOR = 100.0


def noise_floor(values, D, b, factor=NOISE_FACTOR):
    """Amplitude below which an x-mode of ``D^b values`` is indistinguishable from roundoff."""
    if factor <= 0:
        return 0.0
    amp = float(np.abs(np.fft.rfft(values, axis=0)).max()) if values.size else 0.0
    norm = float(np.abs(D).sum(axis=1).max())
    return factor * np.finfo(float).eps * amp * norm ** b


def derivative_table(values, D, wv, a_max, b_max, weight=None, noise=NOISE_FACTOR):
    """Matrix ``T[a, b] = || d_x^a (weight^b D^b f) ||^2`` on the given quadrature."""
    values = np.asarray(values, dtype=float)
    T = np.zeros((a_max + 1, b_max + 1))
    cur = values
    for b in range(b_max + 1):
        if b:
            cur = cur @ D.T
        F = np.fft.rfft(cur, axis=0)
        F[np.abs(F).max(axis=1) < noise_floor(values, D, b, noise)] = 0.0
        V = np.fft.irfft(F, n=values.shape[0], axis=0)
        if weight is not None and b:
            V = weight ** b * V
        T[:, b] = _x_moments(_x_energy(V, wv), a_max)
    return T


def _level_sums(T, M, cap):
    """Order sums ``S_m`` (vertical order <= cap) and an estimate of the capped part."""
    S = np.zeros(M + 1)
    missing = np.zeros(M + 1)
    for m in range(M + 1):
        for b in range(0, min(m, cap) + 1):
            S[m] += T[m - b, b]
        for b in range(cap + 1, m + 1):
            missing[m] += _extrapolate_column(T, m - b, b, cap)
    return S, missing


def _extrapolate_column(T, a, b, cap):
    """Geometric estimate of ``T[a, b]`` for b > cap from the last two trusted orders."""
    last, prev = T[a, cap], T[a, cap - 1] if cap >= 1 else 0.0
    if last == 0.0:
        return 0.0
    if prev <= 0.0:
        return math.inf
    return last * (last / prev) ** (b - cap)


def _geometric_tail(terms):
    """Estimate of sum over m > M from the last two weighted order terms."""
    last, prev = terms[-1], terms[-2]
    if last == 0.0:
        return 0.0
    if prev <= 0.0:
        return math.inf
    r = last / prev
    return math.inf if r >= 1 else last * r / (1 - r)


def _plain_sq(values, wv):
    return float(_x_energy(values, wv).sum())


def _gevrey(values, D, wv, p: GevreyParams, weight, shift):
    """Shared core. ``shift`` = 0 for X-type, 1 for Y-type (factor m-k, start at k+1)."""
    M = p.order
    cap = min(p.y_cap, M)
    T = derivative_table(values, D, wv, M, cap, weight)
    S, missing = _level_sums(T, M, cap)
    start = p.k + shift
    factor = (lambda m: m - p.k) if shift else (lambda m: 1.0)
    terms = [factor(m) * p.weight(m) * S[m] for m in range(start, M + 1)]
    miss = sum(factor(m) * p.weight(m) * missing[m] for m in range(start, M + 1))
    base = _plain_sq(values, wv)
    sq = float(sum(terms) + base)
    tail_sq = miss + (_geometric_tail(terms) if len(terms) >= 2 else 0.0)
    value = math.sqrt(sq)
    tail = _sqrt_tail(sq, tail_sq)
    return NormValue(value, tail)


def _sqrt_tail(sq, tail_sq):
    if tail_sq == 0.0:
        return 0.0
    if not math.isfinite(tail_sq):
        return math.inf
    return math.sqrt(sq + tail_sq) - math.sqrt(sq)


def _interior(f):
    if not isinstance(f, Field):
        raise DomainError("expected a Field")
    if f.kind != INTERIOR:
        raise DomainError("this norm acts on interior fields")
    return f


def _conormal_weight(f, p):
    delta = f.grid.delta if p.delta is None else p.delta
    return psi(f.grid.y_nodes, delta)[None, :]


# ---------------------------------------------------------------------------
# public evaluators

def conormal_sobolev(f: Field, s: int, delta=None) -> float:
    """Sum over ``k + l <= s`` of ``||Z^k d_x^l f||_2`` (norms, not squares)."""
    _interior(f)
    if not 0 <= s <= 6:
        raise DomainError("conormal Sobolev order must be between 0 and 6")
    g = f.grid
    w = psi(g.y_nodes, g.delta if delta is None else delta)[None, :]
    T = derivative_table(f.values, g.D1y, g.qy, s, s, w)
    return float(sum(math.sqrt(T[l, k]) for k in range(s + 1) for l in range(s + 1 - k)))


def gevrey_X(f: Field, p: GevreyParams) -> NormValue:
    """Conormal Gevrey norm with ``d^alpha = d_x^a1 Z^a2``."""
    _interior(f)
    g = f.grid
    return _gevrey(f.values, g.D1y, g.qy, p, _conormal_weight(f, p), 0)


def gevrey_Y(f: Field, p: GevreyParams) -> NormValue:
    """Like :func:`gevrey_X` with the extra factor ``m - k`` and ``m`` from ``k + 1``."""
    _interior(f)
    g = f.grid
    return _gevrey(f.values, g.D1y, g.qy, p, _conormal_weight(f, p), 1)


def gevrey_Xe(f: Field, p: GevreyParams) -> NormValue:
    """Gevrey norm with full derivatives ``d_x^a1 d_y^a2``."""
    _interior(f)
    g = f.grid
    return _gevrey(f.values, g.D1y, g.qy, p, None, 0)


def gevrey_Xx(g_profile, p: GevreyParams) -> NormValue:
    """Tangential Gevrey norm of an x-profile sampled on the periodic grid."""
    v = np.asarray(g_profile, dtype=float)
    if v.ndim != 1:
        raise DomainError("expected a one-dimensional x-profile")
    E = _x_energy(v[:, None], np.ones(1))
    M = p.order
    mom = _x_moments(E, M)
    terms = [p.weight(m) * mom[m] for m in range(p.k, M + 1)]
    sq = float(sum(terms) + mom[0])
    return NormValue(math.sqrt(sq), _sqrt_tail(sq, _geometric_tail(terms)))


def seminorms(f: Field, p: GevreyParams, kind="conormal"):
    """Weighted order sums ``|f|^2_{m,k}`` for m = k..M (trusted vertical orders only)."""
    _interior(f)
    g = f.grid
    weight = _conormal_weight(f, p) if kind == "conormal" else None
    M = p.order
    cap = min(p.y_cap, M)
    T = derivative_table(f.values, g.D1y, g.qy, M, cap, weight)
    S, _ = _level_sums(T, M, cap)
    return {m: p.weight(m) * S[m] for m in range(p.k, M + 1)}


def _gaussian_weight(g, a0):
    return np.exp(a0 * g.z_nodes ** 2)


def _check_weighted_decay(f, wt, what):
    g = f.grid
    far = g.z_nodes >= g.Z_max - 1.0
    worst = float(np.max(np.abs(f.values[:, far] * wt[None, far])))
    if worst > g.decay_tol:
        raise DomainError(f"{what}: weighted field near Z_max is {worst:.2e} "
                          f"(> {g.decay_tol:.0e}); the weight outruns the decay")


def layer_weighted_norm(f: Field, p: LayerNormParams, s: int = 0, z_order: int = 0) -> float:
    """``(sum_{|alpha| <= s} ||exp(a0 z^2) d~^alpha d_z^z_order f||^2)^(1/2)``.

    ``d~^alpha = d_x^a1 (delta z)^a2 d_z^a2``. Fails when the Gaussian weight
    outruns the decay of ``f`` near Z_max.
    """
    if f.kind != LAYER:
        raise DomainError("layer_weighted_norm acts on layer fields")
    g = f.grid
    wt = _gaussian_weight(g, p.a0)
    _check_weighted_decay(f, wt, "layer_weighted_norm")
    vals = f.values
    for _ in range(z_order):
        vals = vals @ g.D1z.T
    T = derivative_table(vals, g.D1z, g.qz * wt ** 2, s, s, (g.delta * g.z_nodes)[None, :])
    return float(math.sqrt(sum(T[a, b] for a in range(s + 1) for b in range(s + 1 - a))))


def gevrey_Xp(f: Field, p: LayerNormParams, y_type=False) -> NormValue:
    """Layer Gevrey norm with weight ``exp(rho_p(t) z^2)`` and ``d~^alpha``.

    ``y_type`` selects the companion norm with factor ``m - k`` plus the
    ``z``-weighted sum.
    """
    if f.kind != LAYER:
        raise DomainError("gevrey_Xp acts on layer fields")
    g = f.grid
    wt = np.exp(p.rho_p() * g.z_nodes ** 2)
    _check_weighted_decay(f, wt, "gevrey_Xp")
    gp = p.gevrey().replace(rho0=p.rho_p0, lam=p.lambda_p)
    zw = (g.delta * g.z_nodes)[None, :]
    out = _gevrey(f.values, g.D1z, g.qz * wt ** 2, gp, zw, 1 if y_type else 0)
    if not y_type:
        return out
    extra = _gevrey(f.values, g.D1z, g.qz * (g.z_nodes * wt) ** 2, gp, zw, 0)
    base = _plain_sq(f.values, g.qz * wt ** 2)
    sq = out.value ** 2 - base + extra.value ** 2
    return NormValue(math.sqrt(sq), out.tail + extra.tail)


def h1_outer_sum(f: Field, p: GevreyParams) -> NormValue:
    """Weighted sum over m of all full derivatives with ``m-3 <= |alpha| <= m+6``."""
    _interior(f)
    g = f.grid
    M = p.order
    top = M + 6
    cap = min(p.y_cap, top)
    T = derivative_table(f.values, g.D1y, g.qy, top, cap)
    S, missing = _level_sums(T, top, cap)
    terms, miss = [], 0.0
    for m in range(3, M + 1):
        w = p.replace(k=3).weight(m)
        lo = max(m - 3, 0)
        terms.append(w * S[lo:m + 7].sum())
        miss += w * missing[lo:m + 7].sum()
    total = float(sum(terms))
    return NormValue(total, miss + _geometric_tail(terms))


def h1_layer_sum(f: Field, p: LayerNormParams) -> NormValue:
    """Layer analogue of :func:`h1_outer_sum` with Gaussian weight and ``d_z^k``, k <= 2.

    The inner quantities are norms (not squares), as in the bound they certify.
    """
    if f.kind != LAYER:
        raise DomainError("h1_layer_sum acts on layer fields")
    g = f.grid
    wt = _gaussian_weight(g, p.a0)
    _check_weighted_decay(f, wt, "h1_layer_sum")
    gp = p.gevrey()
    M = p.order
    top = M + 6
    cap = min(p.z_cap, top)
    zw = (g.delta * g.z_nodes)[None, :]
    vals = f.values
    level = np.zeros(top + 1)
    missing = np.zeros(top + 1)
    for _ in range(3):
        T = derivative_table(vals, g.D1z, g.qz * wt ** 2, top, cap, zw)
        for n in range(top + 1):
            for b in range(0, min(n, cap) + 1):
                level[n] += math.sqrt(T[n - b, b])
            for b in range(cap + 1, n + 1):
                missing[n] += math.sqrt(_extrapolate_column(T, n - b, b, cap))
        vals = vals @ g.D1z.T
    terms, miss = [], 0.0
    for m in range(3, M + 1):
        w = gp.replace(k=3).weight(m)
        lo = max(m - 3, 0)
        terms.append(w * level[lo:m + 7].sum())
        miss += w * missing[lo:m + 7].sum()
    return NormValue(float(sum(terms)), miss + _geometric_tail(terms))


def pair_norm(fields, evaluator, p) -> NormValue:
    """Joint norm of a tuple of fields: square root of the summed squares."""
    vals = [evaluator(f, p) for f in fields]
    sq = sum(v.value ** 2 for v in vals)
    return NormValue(math.sqrt(sq), float(sum(v.tail for v in vals)))


# ---------------------------------------------------------------------------
# exact multi-index identities

def multi_indices(m):
    return [(a, m - a) for a in range(m + 1)]


def binom2(alpha, beta):
    return math.comb(alpha[0], beta[0]) * math.comb(alpha[1], beta[1])


@dataclass(frozen=True)
class IdentityCheck:
    m: int
    j: int
    product: tuple            # (lhs, rhs) of the convolution identity
    binomial: tuple           # ((alpha, lhs, rhs), ...) for every |alpha| = m

    @property
    def holds(self):
        return (self.product[0] == self.product[1]
                and all(l == r for _, l, r in self.binomial))


def _default_x(beta):
    return 3 * beta[0] - 2 * beta[1] + beta[0] * beta[1] + 1


def _default_y(beta):
    return beta[0] ** 2 - beta[1] + 5


def multiindex_identities(m, j, x=None, y=None) -> IdentityCheck:
    """Both multi-index identities evaluated exactly with Python integers.

    ``x`` and ``y`` map a multi-index to an integer (defaults are fixed
    polynomials); the convolution identity is checked on those sequences.
    """
    if not 0 <= j <= m <= 12:
        raise DomainError("need 0 <= j <= m <= 12")
    x = _default_x if x is None else x
    y = _default_y if y is None else y
    lhs = 0
    for alpha in multi_indices(m):
        for beta in multi_indices(j):
            if beta[0] <= alpha[0] and beta[1] <= alpha[1]:
                lhs += x(beta) * y((alpha[0] - beta[0], alpha[1] - beta[1]))
    rhs = sum(x(a) for a in multi_indices(j)) * sum(y(b) for b in multi_indices(m - j))
    rows = []
    for alpha in multi_indices(m):
        s = sum(binom2(alpha, beta) for beta in product(range(alpha[0] + 1), range(alpha[1] + 1))
                if sum(beta) == j)
        rows.append((alpha, s, math.comb(m, j)))
    return IdentityCheck(m, j, (lhs, rhs), tuple(rows))
