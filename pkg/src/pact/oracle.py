"""Exact ground truth at small and medium n.

Three independent routes to the distribution of the root cluster (and, for
small n, the full tree+colouring distribution):

* a weighted two-variable recursion evolved as truncated power series
  (``build_weight_table`` / ``exact_root_cluster_pmf``),
* the closed-form bivariate generating function available when alpha = 0
  (``closed_form_pmf_alpha0``),
* exhaustive enumeration of increasing trees with all colourings
  (``enumerate_small``, n <= 7).

Series are handled as exponential-generating-function coefficients
additionally rescaled by lam**n, where lam is the reciprocal of the
dominant singularity (lam = 1, 1 + 1/alpha, or d - 1).  The rescaling is
compatible with coefficient convolution and keeps every entry in float
range for n up to 10**6.

``series_moments`` integrates the linear coefficient recurrences for the
u-derivative series of the bivariate generating function, giving exact
falling-factorial moments of the root-cluster size for any n up to 10**6
(first moment) without Monte Carlo error.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .tree import RED, Model
from .stats import ColouredPattern, canonical_code

DEFAULT_N_EXACT_POSITIVE_ALPHA = 12
DEFAULT_N_EXACT = 40


def phi_factory(model: Model):
    """The outdegree weight driving the recursion: 1 for alpha = 0,
    Gamma(deg + 1/alpha)/Gamma(1/alpha) for alpha > 0, d!/(d-deg)! in
    d-ary mode (0 beyond saturation)."""
    if model.is_dary:
        d = model.d

        def phi(deg: int) -> float:
            if deg > d:
                return 0.0
            return float(math.factorial(d) // math.factorial(d - deg))

    elif model.alpha == 0.0:

        def phi(deg: int) -> float:
            return 1.0

    else:
        inv = 1.0 / model.alpha

        def phi(deg: int) -> float:
            return math.exp(math.lgamma(deg + inv) - math.lgamma(inv))

    return phi


def _model_kind(model: Model) -> str:
    if model.is_dary:
        return "dary"
    return "a0" if model.alpha == 0.0 else "a+"


def singularity_scale(model: Model) -> float:
    """lam such that the all-trees series has radius of convergence 1/lam."""
    kind = _model_kind(model)
    if kind == "a0":
        return 1.0
    if kind == "a+":
        return 1.0 + 1.0 / model.alpha
    return float(model.d - 1)


def all_trees_series(model: Model, nmax: int) -> np.ndarray:
    """Coefficients b_n/(n! lam^n) of the all-trees weight series, from the
    closed forms of the generating functions."""
    beta = np.zeros(nmax + 1)
    kind = _model_kind(model)
    if kind == "a0":
        beta[1:] = 1.0 / np.arange(1, nmax + 1)
        return beta
    if kind == "a+":
        e = model.alpha / (1.0 + model.alpha)
        sign = -1.0
    else:
        e = -1.0 / (model.d - 1)
        sign = 1.0
    c = 1.0
    for n in range(1, nmax + 1):
        c *= (e - (n - 1)) / n
        beta[n] = sign * (-1.0) ** n * c  # binomial(e, n) (-lam)^n / lam^n
    return beta


def _conv(a: np.ndarray, b: np.ndarray, length: int) -> np.ndarray:
    out = np.convolve(a, b)
    if out.shape[0] < length:
        out = np.concatenate([out, np.zeros(length - out.shape[0])])
    return out[:length]


@dataclass(eq=False)
class WeightTable:
    """Exact weighted counts of coloured trees by root-cluster size.

    ``r[n, k]`` is r_{n,k}/(n! lam^n) and ``b[n]`` is b_n/(n! lam^n); the
    pmf of the root-cluster size at n is r[n, 1:]/sum(r[n, 1:]).
    """

    model: Model
    n_max: int
    r: np.ndarray
    b: np.ndarray
    lam: float
    phi: object = field(default=None)

    def pmf(self, n: int) -> np.ndarray:
        """P(root cluster size = k) for k = 1..n, as an array of length n."""
        if not (1 <= n <= self.n_max):
            raise ValueError(f"n must be in 1..{self.n_max}")
        row = self.r[n, 1 : n + 1]
        return row / row.sum()

    def row_sum_error(self) -> float:
        """Max relative error of the identity sum_k r[n,k] = b[n]."""
        err = 0.0
        for n in range(1, self.n_max + 1):
            err = max(err, abs(self.r[n].sum() - self.b[n]) / abs(self.b[n]))
        return err


def build_weight_table(model: Model, n_max: int) -> WeightTable:
    """Evolve the root-degree recursion as truncated bivariate series.

    With S = p R + (1-p) B and F the composition of the degree-weight
    series with S, the coefficient rows obey (n+1) r_{n+1} = [x^n] F
    shifted by one in the cluster-size variable.  F is computed by the
    standard first-order recurrences for exp / negative-power / positive-
    power composition, so each row costs O(n^2) convolutions of cluster
    polynomials.
    """
    kind = _model_kind(model)
    p = model.p
    lam = singularity_scale(model)
    N = n_max
    K = N + 2
    beta = all_trees_series(model, N)
    rho = np.zeros((N + 1, K))
    S = np.zeros((N + 1, K))
    F = np.zeros((N + 1, K))
    rho[1, 1] = 1.0 / lam  # single-vertex weight, rescaled like every row
    F[0, 0] = 1.0
    S[1, 1] = p * rho[1, 1]
    S[1, 0] = (1 - p) * beta[1]
    for n in range(1, N):
        lim = n + 2
        acc = np.zeros(K)
        if kind == "a0":
            # F = exp(S):  n F_n = sum_m m S_m F_{n-m}
            for m in range(1, n + 1):
                acc += m * _conv(S[m, :lim], F[n - m, :lim], K)
        elif kind == "a+":
            # F = (1-S)^(-1/alpha):  n F_n = (1/alpha) sum (n-m) F_m S_{n-m}
            #                                + sum (j+1) F_{j+1} S_{n-1-j}
            inv = 1.0 / model.alpha
            for m in range(0, n):
                acc += inv * (n - m) * _conv(F[m, :lim], S[n - m, :lim], K)
            for j in range(0, n - 1):
                acc += (j + 1) * _conv(F[j + 1, :lim], S[n - 1 - j, :lim], K)
        else:
            # F = (1+S)^d:  n F_n = d sum (n-m) F_m S_{n-m}
            #                       - sum (j+1) F_{j+1} S_{n-1-j}
            d = model.d
            for m in range(0, n):
                acc += d * (n - m) * _conv(F[m, :lim], S[n - m, :lim], K)
            for j in range(0, n - 1):
                acc -= (j + 1) * _conv(F[j + 1, :lim], S[n - 1 - j, :lim], K)
        F[n] = acc / n
        rho[n + 1, 1:] = F[n, :-1] / ((n + 1) * lam)
        S[n + 1] = p * rho[n + 1]
        S[n + 1, 0] = (1 - p) * beta[n + 1]
    return WeightTable(
        model=model,
        n_max=N,
        r=rho,
        b=beta,
        lam=lam,
        phi=phi_factory(model),
    )


_TABLE_CACHE: dict[tuple, WeightTable] = {}


def _default_cap(model: Model) -> int:
    if _model_kind(model) == "a+":
        return DEFAULT_N_EXACT_POSITIVE_ALPHA
    return DEFAULT_N_EXACT


def exact_root_cluster_pmf(model: Model, n: int, n_max: int | None = None) -> np.ndarray:
    """P(root cluster size = k), k = 1..n, from the weighted recursion."""
    cap = n_max if n_max is not None else _default_cap(model)
    if n > cap:
        raise ValueError(f"n={n} exceeds the exact-oracle cap {cap}")
    key = (model.alpha, model.d, model.p, cap)
    table = _TABLE_CACHE.get(key)
    if table is None:
        table = build_weight_table(model, cap)
        _TABLE_CACHE[key] = table
    return table.pmf(n)


def closed_form_pmf_alpha0(n: int, p: float) -> np.ndarray:
    """Root-cluster pmf for alpha = 0 from the closed-form bivariate
    generating function -log(1 - u + u (1-x)^p)/p: the coefficient of u^k
    is g(x)^k/(pk) with g = 1 - (1-x)^p, and the all-trees coefficient is
    1/n, so P(k) = n [x^n] g^k / (p k)."""
    if p == 0.0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    g = np.zeros(n + 1)
    c = 1.0
    for m in range(1, n + 1):
        c *= (p - (m - 1)) / m
        g[m] = -((-1.0) ** m) * c
    out = np.zeros(n)
    power = np.zeros(n + 1)
    power[0] = 1.0
    for k in range(1, n + 1):
        power = _conv(power, g, n + 1)
        out[k - 1] = n * power[n] / (p * k)
    return out


@njit(cache=True)
def _first_moment_series(beta, c0, lam, N):
    rho1 = np.zeros(N + 1)
    pref = 0.0
    for n in range(1, N + 1):
        pref += rho1[n - 1]
        rho1[n] = c0 * pref / (n * lam) + beta[n]
    return rho1


def _derivative_weight_series(model: Model, j: int, nmax: int) -> np.ndarray:
    """Scaled coefficients of the j-th derivative of the degree-weight
    composition evaluated on the all-trees series; a pure binomial series
    (1 - lam x)^(-c) times a constant."""
    kind = _model_kind(model)
    if kind == "a0":
        const = model.p**j
        c = 1.0
    elif kind == "a+":
        inv = 1.0 / model.alpha
        const = model.p**j * math.exp(math.lgamma(j + inv) - math.lgamma(inv))
        c = (1.0 + model.alpha * j) / (1.0 + model.alpha)
    else:
        d = model.d
        if j > d:
            return np.zeros(nmax + 1)
        const = model.p**j * (math.factorial(d) / math.factorial(d - j))
        c = (d - j) / (d - 1.0)
    out = np.empty(nmax + 1)
    out[0] = 1.0
    for n in range(1, nmax + 1):
        out[n] = out[n - 1] * (n + c - 1.0) / n
    return const * out


def _linear_ode_params(model: Model) -> tuple[float, float]:
    """(c0, lam) with the homogeneous part of every moment ODE equal to
    c0/(1 - lam x) times the unknown."""
    kind = _model_kind(model)
    if kind == "a0":
        return model.p, 1.0
    if kind == "a+":
        return model.p / model.alpha, 1.0 + 1.0 / model.alpha
    return model.p * model.d, float(model.d - 1)


def series_moments(model: Model, k: int, nmax: int) -> np.ndarray:
    """Exact falling-factorial moments E[(|C_n|)(|C_n|-1)...(|C_n|-k+1)]
    of the root-cluster size, for n = 1..nmax (index n; entry 0 is nan).

    k = 1 runs in O(nmax); higher k costs O(k^2 nmax^2) coefficient
    convolutions and is intended for nmax up to a few thousand.
    """
    if k < 0 or k > 4:
        raise ValueError("supported moment orders are k in 0..4")
    beta = all_trees_series(model, nmax)
    out = np.full(nmax + 1, np.nan)
    if k == 0:
        out[1:] = 1.0
        return out
    c0, lam = _linear_ode_params(model)
    if k == 1:
        rho1 = _first_moment_series(beta, c0, lam, nmax)
        out[1:] = rho1[1:] / beta[1:]
        return out
    # general order: solve R_m for m = 1..k from
    #   R_m' = f1 R_m + sum_{j=2}^m f_j B_{m,j}(R_1..) + m T_{m-1}
    # with T_m = sum_{j=1}^m f_j B_{m,j}(R_1..) (T_0 = f_0).
    N = nmax
    f = {j: _derivative_weight_series(model, j, N) for j in range(0, k + 1)}
    R: dict[int, np.ndarray] = {}
    bell: dict[tuple[int, int], np.ndarray] = {}

    def bell_series(m: int, j: int) -> np.ndarray:
        # B_{m,j} over series arguments via the additive recurrence
        if (m, j) in bell:
            return bell[(m, j)]
        if j == 0:
            val = np.zeros(N + 1)
            if m == 0:
                val[0] = 1.0
        else:
            val = np.zeros(N + 1)
            for i in range(1, m - j + 2):
                val += math.comb(m - 1, i - 1) * _conv(R[i], bell_series(m - i, j - 1), N + 1)
        bell[(m, j)] = val
        return val

    def t_series(m: int) -> np.ndarray:
        if m == 0:
            return f[0]
        val = np.zeros(N + 1)
        for j in range(1, m + 1):
            val += _conv(f[j], bell_series(m, j), N + 1)
        return val

    for m in range(1, k + 1):
        g = m * t_series(m - 1)
        for j in range(2, m + 1):
            g += _conv(f[j], bell_series(m, j), N + 1)
        rm = np.zeros(N + 1)
        pref = 0.0
        # n lam rm[n] = c0 * prefix-sum(rm[:n]) + g[n-1]
        for n in range(1, N + 1):
            pref += rm[n - 1]
            rm[n] = (c0 * pref + g[n - 1]) / (n * lam)
        R[m] = rm
        bell.clear()
    out[1:] = R[k][1:] / beta[1:]
    return out


# ---------------------------------------------------------------------------
# exhaustive enumeration (n <= 7)
# ---------------------------------------------------------------------------

MAX_ENUMERATION_N = 7


@dataclass(eq=False)
class SmallEnumeration:
    """Exact joint law of (shape, colouring) at size n.

    ``code_probs`` conditions on a red root (mass 1); ``flip_probs`` is the
    blue-root law, i.e. the same outcomes re-canonicalized after swapping
    colours (a byte swap alone is wrong: it reorders siblings).
    """

    model: Model
    n: int
    code_probs: dict
    flip_probs: dict
    stat_probs: dict
    root_cluster_pmf: np.ndarray

    def uniform_code_probs(self) -> dict:
        """Distribution over canonical codes with the root colour uniform."""
        out: dict[bytes, float] = {}
        for src_probs in (self.code_probs, self.flip_probs):
            for code, w in src_probs.items():
                out[code] = out.get(code, 0.0) + 0.5 * w
        return out

    def pattern_probability(self, pattern: ColouredPattern) -> float:
        """P(tree of size n with its colouring matches the pattern), root
        colour uniform."""
        if pattern.size != self.n:
            raise ValueError("pattern size must equal the enumeration size")
        if pattern.root_colour == RED:
            return 0.5 * self.code_probs.get(pattern.code(), 0.0)
        return 0.5 * self.code_probs.get(pattern.flipped().code(), 0.0)


def _stat_tuple_from_arrays(parent, colour, n) -> tuple:
    red = 0
    red_c = blue_c = 0
    red_l = blue_l = 0
    outdeg = [0] * n
    for v in range(1, n):
        outdeg[parent[v]] += 1
    in_root = [False] * n
    in_root[0] = True
    root_size = 1
    for v in range(n):
        c = colour[v]
        if c == 0:
            red += 1
        if outdeg[v] == 0:
            if c == 0:
                red_l += 1
            else:
                blue_l += 1
        if v == 0 or colour[parent[v]] != c:
            if c == 0:
                red_c += 1
            else:
                blue_c += 1
        elif in_root[parent[v]]:
            in_root[v] = True
            root_size += 1
    return (red, n - red, red_c, blue_c, red_l, blue_l, root_size, colour[0])


def _mirror_stat(t: tuple) -> tuple:
    return (t[1], t[0], t[3], t[2], t[5], t[4], t[6], 1 - t[7])


@lru_cache(maxsize=None)
def enumerate_small(model: Model, n: int) -> SmallEnumeration:
    """Exhaustively enumerate growth histories and colourings.

    Every parent array with parent[v] < v is one growth history; its
    probability is the product of the attachment weights replayed in
    insertion order (zero-weight histories, e.g. saturated d-ary vertices,
    drop out automatically).  Colourings are enumerated conditional on a
    red root and weighted by p/(1-p) per edge.
    """
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"n={n} exceeds the enumeration cap {MAX_ENUMERATION_N}")
    alpha = model.alpha
    p = model.p
    code_probs: dict[bytes, float] = {}
    flip_probs: dict[bytes, float] = {}
    stat_probs: dict[tuple, float] = {}
    pmf = np.zeros(n + 1)
    colourings = list(itertools.product((0, 1), repeat=n - 1))
    for parents in itertools.product(*(range(v) for v in range(1, n))):
        parent = (0,) + parents
        outdeg = [0] * n
        hist = 1.0
        for v in range(1, n):
            u = parent[v]
            hist *= (alpha * outdeg[u] + 1.0) / (v + alpha * (v - 1))
            outdeg[u] += 1
        if hist == 0.0:
            continue
        for bits in colourings:
            colour = (0,) + bits
            w = hist
            for v in range(1, n):
                w *= p if colour[v] == colour[parent[v]] else 1.0 - p
            if w == 0.0:
                continue
            parent_arr = np.array(parent)
            colour_arr = np.array(colour, dtype=np.uint8)
            code = canonical_code((parent_arr, colour_arr))
            code_probs[code] = code_probs.get(code, 0.0) + w
            fcode = canonical_code((parent_arr, 1 - colour_arr))
            flip_probs[fcode] = flip_probs.get(fcode, 0.0) + w
            st = _stat_tuple_from_arrays(parent, colour, n)
            stat_probs[st] = stat_probs.get(st, 0.0) + 0.5 * w
            mir = _mirror_stat(st)
            stat_probs[mir] = stat_probs.get(mir, 0.0) + 0.5 * w
            pmf[st[6]] += w
    return SmallEnumeration(
        model=model,
        n=n,
        code_probs=code_probs,
        flip_probs=flip_probs,
        stat_probs=stat_probs,
        root_cluster_pmf=pmf,
    )
