"""Limit-law predictions in closed form.

Groups of results:

* regime classification: the boundary p = (3 - alpha)/4 separates sqrt(n)
  normal fluctuations, sqrt(n ln n) normal fluctuations, and a
  n^((2p+alpha-1)/(1+alpha)) non-normal scaling; p = 1/2 degenerates the
  latter two for colour-symmetric statistics.
* first-order constants and limit covariances for vertex / cluster / leaf
  counts per colour, and the per-pattern fringe densities ``fringe_mu``.
* the common supercritical limit variable: first two moments from
  ``z_moments``.
* root-cluster moment tables: Mittag-Leffler moments at alpha = 0,
  Bell-polynomial recursions for alpha > 0 and d-ary trees with their
  closed forms at alpha = 1 and d = 2, the log-scaled critical d-ary
  recursion, the total-progeny pmf of the subcritical d-ary limit, and
  the survival probability ``p_infinity``.

Power-series self-checks (``ck_ode_residual`` / ``dk_ode_residual``)
verify the moment recursions against the differential equations satisfied
by their exponential generating functions, using independent series
exp/log arithmetic rather than the Bell recurrence itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tree import Model
from . import oracle as _oracle
from . import urn as _urn

_BOUNDARY_TOL = 1e-9


def gamma_fn(x: float) -> float:
    """Gamma function for x > 0 (relative error well under 1e-12)."""
    if x <= 0:
        raise ValueError(f"gamma_fn requires x > 0, got {x}")
    return math.gamma(x)


def bell_partial(k: int, j: int, x) -> float:
    """Partial Bell polynomial B_{k,j}(x_1, ..., x_{k-j+1}).

    Evaluated by the additive recurrence
    B_{k,j} = sum_i C(k-1, i-1) x_i B_{k-i, j-1} rather than the partition
    sum; O(k^2 j) instead of super-exponential.
    """
    if not (1 <= j <= k):
        raise ValueError("bell_partial requires 1 <= j <= k")
    if len(x) < k - j + 1:
        raise ValueError("bell_partial needs at least k-j+1 arguments")
    table = np.zeros((k + 1, j + 1))
    table[0, 0] = 1.0
    band = k - j  # entries with kk - jj > band are never reached from (k, j)
    for kk in range(1, k + 1):
        for jj in range(max(1, kk - band), min(kk, j) + 1):
            s = 0.0
            for i in range(1, kk - jj + 2):
                s += math.comb(kk - 1, i - 1) * x[i - 1] * table[kk - i, jj - 1]
            table[kk, jj] = s
    return float(table[k, j])


@dataclass(frozen=True)
class Regime:
    kind: str  # "subcritical" | "critical" | "supercritical"
    degenerate: bool  # p == 1/2: colour-symmetric statistics degenerate

    @property
    def subcritical(self) -> bool:
        return self.kind == "subcritical"


def regime(model: Model) -> Regime:
    gap = 3.0 - model.alpha - 4.0 * model.p  # sign of lambda1 - 2 lambda2
    scale = _BOUNDARY_TOL * (1.0 + abs(1.0 + model.alpha))
    if gap > scale:
        kind = "subcritical"
    elif gap < -scale:
        kind = "supercritical"
    else:
        kind = "critical"
    return Regime(kind=kind, degenerate=model.p == 0.5)


def _z_moments_raw(alpha: float, p: float) -> tuple[float, float]:
    ez = gamma_fn(1.0 / (1.0 + alpha)) / gamma_fn((2.0 * p + alpha) / (1.0 + alpha))
    ez2 = (
        gamma_fn(1.0 / (1.0 + alpha))
        * (1.0 + alpha)
        * (4.0 * p + alpha - 2.0)
        / (gamma_fn((4.0 * p + 2.0 * alpha - 1.0) / (1.0 + alpha)) * (4.0 * p + alpha - 3.0))
    )
    return ez, ez2


def z_moments(model: Model) -> tuple[float, float]:
    """First two moments of the supercritical limit variable."""
    r = regime(model)
    if r.kind != "supercritical" or model.p == 0.5:
        raise ValueError("z_moments applies in the supercritical regime with p != 1/2")
    return _z_moments_raw(model.alpha, model.p)


# ---------------------------------------------------------------------------
# covariance closed forms for the two-colour statistics
# ---------------------------------------------------------------------------


_FLIP2 = np.array([[1.0, -1.0], [-1.0, 1.0]])


def vertex_covariance(model: Model) -> np.ndarray:
    """Limit covariance of the sqrt(n)-scaled red/blue vertex counts
    (subcritical, or any regime at p = 1/2)."""
    alpha, p = model.alpha, model.p
    if p == 0.5:
        return 0.25 * _FLIP2
    c = (4.0 * alpha * p - alpha - 1.0) / (4.0 * (4.0 * p + alpha - 3.0))
    return c * _FLIP2


def vertex_covariance_critical(model: Model) -> np.ndarray:
    alpha = model.alpha
    return (alpha - 1.0) ** 2 / (4.0 * (1.0 + alpha)) * _FLIP2


def cluster_covariance_full(model: Model) -> np.ndarray:
    """4x4 limit covariance of (red weight, blue weight, red clusters,
    blue clusters), subcritical scaling."""
    a, p = model.alpha, model.p
    pref = 1.0 / (4.0 * (a - 3.0 + 4.0 * p))
    s11 = -(a + 1.0) * (a * a + (4.0 * p - 2.0) * a + 1.0)
    s33 = -((p - 1.0) ** 2) * (a + 4.0 * p + 1.0)
    s34 = -(p - 1.0) * (4.0 * p * p + a * p - 3.0 * p + a + 1.0)
    s31 = (a + 1.0) * (a + 2.0 * p - 1.0)
    M = np.array(
        [
            [s11, -s11, s31, -s31],
            [-s11, s11, -s31, s31],
            [s31, -s31, s33, s34],
            [-s31, s31, s34, s33],
        ]
    )
    return pref * M


def cluster_covariance(model: Model) -> np.ndarray:
    """2x2 limit covariance of the scaled red/blue cluster counts."""
    a, p = model.alpha, model.p
    pref = (1.0 - p) / (4.0 * (3.0 - a - 4.0 * p))
    diag = (1.0 - p) * (a + 4.0 * p + 1.0)
    off = 3.0 * p - 4.0 * p * p - a * p - a - 1.0
    return pref * np.array([[diag, off], [off, diag]])


def cluster_covariance_critical_full(model: Model) -> np.ndarray:
    ap = model.alpha + 1.0
    return 0.25 * np.array(
        [
            [ap, -ap, -ap / 2.0, ap / 2.0],
            [-ap, ap, ap / 2.0, -ap / 2.0],
            [-ap / 2.0, ap / 2.0, ap / 4.0, -ap / 4.0],
            [ap / 2.0, -ap / 2.0, -ap / 4.0, ap / 4.0],
        ]
    )


def cluster_covariance_critical(model: Model) -> np.ndarray:
    return (model.alpha + 1.0) / 16.0 * _FLIP2


def leaf_covariance_full(model: Model) -> np.ndarray:
    """4x4 limit covariance of (red leaves, blue leaves, red non-leaf
    weight, blue non-leaf weight), subcritical scaling, p != 1/2."""
    a, p = model.alpha, model.p
    pref = (a + 1.0) / (
        4.0 * (2.0 + a) ** 2 * (3.0 + a) * (2.0 * p - 3.0) * (4.0 * p + a - 3.0)
    )
    s11 = (
        (8 * p**2 - 6 * p - 1) * a**3
        + (48 * p**2 - 46 * p + 1) * a**2
        + (112 * p**2 - 158 * p + 49) * a
        + 88 * p**2
        - 158 * p
        + 71
    )
    s12 = -(
        (8 * p**2 - 6 * p - 1) * a**3
        + (48 * p**2 - 50 * p + 7) * a**2
        + (96 * p**2 - 126 * p + 37) * a
        + 72 * p**2
        - 122 * p
        + 53
    )
    s33 = -(a + 1.0) * (
        (2 * p - 3) * a**4
        + 2 * (4 * p**2 - 7) * a**3
        + 4 * (10 * p**2 - 9 * p - 4) * a**2
        + (56 * p**2 - 60 * p - 4) * a
        + 8 * p**2
        + 14 * p
        - 23
    )
    s31 = (a + 1.0) * (
        (2 * p - 1) * a**3
        + (-8 * p**2 + 22 * p - 9) * a**2
        + (-32 * p**2 + 62 * p - 21) * a
        - 40 * p**2
        + 74 * p
        - 29
    )
    s32 = -(a + 1.0) * (
        (2 * p - 1) * a**3
        + (-8 * p**2 + 22 * p - 9) * a**2
        + (-32 * p**2 + 66 * p - 27) * a
        - 24 * p**2
        + 38 * p
        - 11
    )
    s34 = (a + 1.0) ** 2 * (
        (2 * p - 3) * a**3
        + (8 * p**2 - 2 * p - 11) * a**2
        + (32 * p**2 - 34 * p - 5) * a
        + 24 * p**2
        - 22 * p
        - 5
    )
    M = np.array(
        [
            [s11, s12, s31, s32],
            [s12, s11, s32, s31],
            [s31, s32, s33, s34],
            [s32, s31, s34, s33],
        ]
    )
    return pref * M


def leaf_covariance(model: Model) -> np.ndarray:
    """2x2 limit covariance of the scaled red/blue leaf counts (subcritical
    or p = 1/2)."""
    a, p = model.alpha, model.p
    if p == 0.5:
        pref = (a + 1.0) / (4.0 * (2.0 + a) ** 2 * (3.0 + a))
        diag = 7.0 + 6.0 * a + a * a
        off = -5.0 - 4.0 * a - a * a
        return pref * np.array([[diag, off], [off, diag]])
    return leaf_covariance_full(model)[:2, :2]


def leaf_covariance_merged(model: Model) -> np.ndarray:
    """3x3 limit covariance for the merged p = 1/2 leaf urn (red leaves,
    blue leaves, total non-leaf weight)."""
    a = model.alpha
    pref = (a + 1.0) / (4.0 * (2.0 + a) ** 2 * (3.0 + a))
    return pref * np.array(
        [
            [7 + 6 * a + a * a, -5 - 4 * a - a * a, -2 * (1 + a)],
            [-5 - 4 * a - a * a, 7 + 6 * a + a * a, -2 * (1 + a)],
            [-2 * (1 + a), -2 * (1 + a), 4 * (1 + a)],
        ]
    )


def leaf_covariance_critical(model: Model) -> np.ndarray:
    a = model.alpha
    return (a - 1.0) ** 2 * (a + 1.0) / (4.0 * (3.0 + a) ** 2) * _FLIP2


def leaf_covariance_critical_full(model: Model) -> np.ndarray:
    a = model.alpha
    A11 = (a - 1.0) ** 2 * (a + 1.0) / (4.0 * (3.0 + a) ** 2)
    A13 = -((a + 1.0) ** 2) * (a - 1.0) / (2.0 * (3.0 + a) ** 2)
    A33 = (1.0 + a) ** 3 / (3.0 + a) ** 2
    return np.array(
        [
            [A11, -A11, A13, -A13],
            [-A11, A11, -A13, A13],
            [A13, -A13, A33, -A33],
            [-A13, A13, -A33, A33],
        ]
    )


# ---------------------------------------------------------------------------
# global limit predictions
# ---------------------------------------------------------------------------

GLOBAL_STATISTICS = ("vertices", "clusters", "leaves", "fringe")


@dataclass(eq=False)
class LimitPrediction:
    statistic: str
    mean_coeff: np.ndarray  # strong-law constant: statistic / n -> mean_coeff
    regime: Regime
    scaling: str  # "sqrt_n" | "sqrt_n_ln_n" | "power"
    exponent: float | None = None  # for "power": (2p+alpha-1)/(1+alpha)
    covariance: np.ndarray | None = None
    limit_vector: np.ndarray | None = None  # limit = (root sign) * Z * limit_vector
    z_first_two: tuple | None = None
    # finite-n refinement of the supercritical second moment: the sqrt(n)
    # remainder adds remnant_diag * n^remnant_gap to E[(scaled dev)^2]
    remnant_gap: float | None = None
    remnant_diag: np.ndarray | None = None
    degenerate_limit: bool = False
    note: str = ""


def fringe_mu(patterns, model: Model) -> np.ndarray:
    """Per-vertex limiting densities of coloured fringe-subtree counts:
    the probability that the size-k tree-with-colouring matches the
    pattern, times 1/(alpha+1) over (k - 1 + 1/(alpha+1)) (k + 1/(alpha+1))."""
    inv = 1.0 / (model.alpha + 1.0)
    out = np.empty(len(patterns))
    for i, pat in enumerate(patterns):
        k = pat.size
        prob = _oracle.enumerate_small(model, k).pattern_probability(pat)
        out[i] = prob * inv / ((k - 1.0 + inv) * (k + inv))
    return out


def _supercritical_exponent(model: Model) -> float:
    return (2.0 * model.p + model.alpha - 1.0) / (1.0 + model.alpha)


def _mapped_remnant(model: Model, kind: str, mapping: np.ndarray):
    """Diagonal of the mapped sqrt(n)-remainder covariance (see
    urn.sigma_remnant); None when the urn is defective."""
    spec = _urn.build_urn(kind, model)
    analysis = _urn.eigen_analysis(spec)
    try:
        rem = _urn.sigma_remnant(spec, analysis)
    except _urn.NonDiagonalizableError:
        return None
    full = analysis.lambda1 * rem
    return np.diag(mapping @ full @ mapping.T).copy()


def _vertex_from_cluster_map(alpha: float) -> np.ndarray:
    """Vertex counts from the cluster-urn coordinates: each colour's count
    is (weight + alpha * own clusters - alpha * other clusters) / (1+alpha)
    up to a bounded root term."""
    return np.array([[1.0, 0.0, alpha, -alpha], [0.0, 1.0, -alpha, alpha]]) / (1.0 + alpha)


def global_limit(statistic: str, model: Model, patterns=None) -> LimitPrediction:
    """Mean constants, fluctuation scaling, and limit shape for one of the
    global statistics.  Fringe predictions take the pattern list and use
    the urn numerics; tabulated closed forms cover the rest."""
    alpha, p = model.alpha, model.p
    r = regime(model)
    if statistic == "vertices":
        mean = np.array([0.5, 0.5])
        if p == 0.5:
            return LimitPrediction(
                statistic, mean, r, "sqrt_n", covariance=vertex_covariance(model),
                degenerate_limit=r.kind != "subcritical",
            )
        if r.kind == "subcritical":
            return LimitPrediction(statistic, mean, r, "sqrt_n", covariance=vertex_covariance(model))
        if r.kind == "critical":
            return LimitPrediction(
                statistic, mean, r, "sqrt_n_ln_n", covariance=vertex_covariance_critical(model)
            )
        vec = np.array([2.0 * p - 1.0, 1.0 - 2.0 * p]) / (2.0 * (2.0 * p + alpha - 1.0))
        theta = _supercritical_exponent(model)
        return LimitPrediction(
            statistic, mean, r, "power", exponent=theta,
            limit_vector=vec, z_first_two=_z_moments_raw(alpha, p),
            remnant_gap=1.0 - 2.0 * theta,
            remnant_diag=_mapped_remnant(model, "cluster4", _vertex_from_cluster_map(alpha)),
        )
    if statistic == "clusters":
        mean = np.array([(1.0 - p) / 2.0] * 2)
        if r.kind == "subcritical":
            return LimitPrediction(statistic, mean, r, "sqrt_n", covariance=cluster_covariance(model))
        if r.kind == "critical":
            return LimitPrediction(
                statistic, mean, r, "sqrt_n_ln_n", covariance=cluster_covariance_critical(model)
            )
        vec = np.array([p - 1.0, 1.0 - p]) / (2.0 * (2.0 * p + alpha - 1.0))
        theta = _supercritical_exponent(model)
        sel = np.zeros((2, 4))
        sel[0, 2] = sel[1, 3] = 1.0
        return LimitPrediction(
            statistic, mean, r, "power", exponent=theta,
            limit_vector=vec, z_first_two=_z_moments_raw(alpha, p),
            remnant_gap=1.0 - 2.0 * theta,
            remnant_diag=_mapped_remnant(model, "cluster4", sel),
        )
    if statistic == "leaves":
        lf = (1.0 + alpha) / (4.0 + 2.0 * alpha)
        mean = np.array([lf, lf])
        if p == 0.5:
            return LimitPrediction(
                statistic, mean, r, "sqrt_n", covariance=leaf_covariance(model),
                degenerate_limit=r.kind != "subcritical",
            )
        if r.kind == "subcritical":
            return LimitPrediction(statistic, mean, r, "sqrt_n", covariance=leaf_covariance(model))
        if r.kind == "critical":
            return LimitPrediction(
                statistic, mean, r, "sqrt_n_ln_n", covariance=leaf_covariance_critical(model)
            )
        vec = np.array([2.0 * p - 1.0, 1.0 - 2.0 * p]) / (2.0 * alpha + 4.0 * p)
        theta = _supercritical_exponent(model)
        sel = np.zeros((2, 4))
        sel[0, 0] = sel[1, 1] = 1.0
        return LimitPrediction(
            statistic, mean, r, "power", exponent=theta,
            limit_vector=vec, z_first_two=_z_moments_raw(alpha, p),
            remnant_gap=1.0 - 2.0 * theta,
            remnant_diag=_mapped_remnant(model, "leaf4", sel),
        )
    if statistic == "fringe":
        if not patterns:
            raise ValueError("fringe predictions require a pattern list")
        mean = fringe_mu(patterns, model)
        spec = _urn.build_urn("fringe", model, patterns=patterns)
        # the urn sorts its pattern types; map rows back to the caller's order
        urn_codes = [q.code() for q in spec.patterns]
        perm = np.array([urn_codes.index(q.code()) for q in patterns])
        C = spec.x_from_y[perm, :]
        if p == 0.5 and r.kind != "subcritical":
            # the colour-symmetric pattern counts still satisfy a sqrt(n)
            # CLT (merged-urn argument), but the q+2-type urn is at or past
            # its own boundary; report means only
            return LimitPrediction(
                statistic, mean, r, "sqrt_n", degenerate_limit=True,
                note="p = 1/2 beyond the subcritical range: covariance not computed",
            )
        analysis = _urn.eigen_analysis(spec)
        if r.kind == "subcritical":
            try:
                cov = C @ (analysis.lambda1 * _urn.sigma_I(spec, analysis)) @ C.T
                return LimitPrediction(statistic, mean, r, "sqrt_n", covariance=cov)
            except _urn.NonDiagonalizableError:
                return LimitPrediction(
                    statistic, mean, r, "sqrt_n",
                    note="defective intensity matrix; covariance not computed",
                )
        if r.kind == "critical":
            cov = C @ _urn.sigma_II(spec, analysis) @ C.T
            return LimitPrediction(statistic, mean, r, "sqrt_n_ln_n", covariance=cov)
        vec = C @ _urn.supercritical_direction(spec, analysis)
        theta = _supercritical_exponent(model)
        rem = analysis.lambda1 * _urn.sigma_remnant(spec, analysis)
        return LimitPrediction(
            statistic, mean, r, "power", exponent=theta,
            limit_vector=vec, z_first_two=_z_moments_raw(alpha, p),
            remnant_gap=1.0 - 2.0 * theta,
            remnant_diag=np.diag(C @ rem @ C.T).copy(),
            degenerate_limit=p == 0.5,
        )
    raise ValueError(f"unknown statistic {statistic!r}; expected one of {GLOBAL_STATISTICS}")


# ---------------------------------------------------------------------------
# root-cluster moment tables
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class MomentTable:
    """Moments of the scaled root-cluster limit.

    moments[k] is the k-th integer moment of the limit of
    |root cluster| / n^scaling_exponent, except in the log-scaled critical
    d-ary case (kind "dary_critical"), where moments[k] is the constant in
    E[|C_n|^k] ~ moments[k] * (ln n)^(2k-1), and in the d-ary subcritical
    case ("dary_finite"), where the size converges without scaling and
    ``pmf`` holds its distribution.
    """

    kind: str
    scaling_exponent: float
    moments: dict = field(default_factory=dict)
    aux: dict = field(default_factory=dict)
    log_scaled: bool = False
    pmf: np.ndarray | None = None


def _ck_coeffs(alpha: float, p: float, kmax: int) -> list:
    c = [0.0, alpha / (p + alpha)]
    lg = math.lgamma(1.0 / alpha)
    for k in range(2, kmax + 1):
        s = 0.0
        for j in range(2, k + 1):
            s += (
                p**j
                * math.exp(math.lgamma(j + 1.0 / alpha) - lg)
                * bell_partial(k, j, c[1 : k - j + 2])
            )
        c.append(s / ((k - 1) * (p / alpha + 1.0)))
    return c


def _dk_coeffs(d: int, p: float, kmax: int) -> list:
    c = [0.0, 1.0 / (p * d - 1.0)]
    for k in range(2, kmax + 1):
        s = 0.0
        for j in range(2, min(k, d) + 1):
            s += (
                p**j
                * (math.factorial(d) / math.factorial(d - j))
                * bell_partial(k, j, c[1 : k - j + 2])
            )
        c.append(s / ((k - 1) * (p * d - 1.0)))
    return c


def _ek_coeffs(d: int, kmax: int) -> list:
    e = [0.0, 1.0 / (d - 1.0)]
    for k in range(2, kmax + 1):
        s = sum(math.comb(k, j) * e[j] * e[k - j] for j in range(1, k))
        e.append(s / (2.0 * d * (2 * k - 1)))
    return e


def root_cluster_limit(model: Model, kmax: int) -> MomentTable:
    """Moment table of the root-cluster limit law for the given model."""
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    alpha, p = model.alpha, model.p
    if model.is_dary:
        d = model.d
        if p < 1.0 / d - _BOUNDARY_TOL:
            pmf, _ = otter_dwass_pmf_adaptive(d, p)
            return MomentTable(kind="dary_finite", scaling_exponent=0.0, pmf=pmf)
        if abs(p - 1.0 / d) <= _BOUNDARY_TOL:
            e = _ek_coeffs(d, kmax)
            return MomentTable(
                kind="dary_critical",
                scaling_exponent=0.0,
                moments={k: e[k] for k in range(1, kmax + 1)},
                aux={k: e[k] for k in range(1, kmax + 1)},
                log_scaled=True,
            )
        dk = _dk_coeffs(d, p, kmax)
        expo = (p * d - 1.0) / (d - 1.0)
        moments = {}
        for k in range(1, kmax + 1):
            moments[k] = dk[k] * gamma_fn(1.0 / (d - 1.0)) / gamma_fn(
                (k * p * d - k + 1.0) / (d - 1.0)
            )
        return MomentTable(
            kind="dary_recursion",
            scaling_exponent=expo,
            moments=moments,
            aux={k: dk[k] for k in range(1, kmax + 1)},
        )
    if alpha == 0.0:
        if p == 0.0:
            return MomentTable(
                kind="mittag_leffler", scaling_exponent=0.0,
                moments={k: 1.0 for k in range(1, kmax + 1)},
            )
        moments = {
            k: math.factorial(k) / gamma_fn(p * k + 1.0) for k in range(1, kmax + 1)
        }
        return MomentTable(kind="mittag_leffler", scaling_exponent=p, moments=moments)
    ck = _ck_coeffs(alpha, p, kmax)
    expo = (p + alpha) / (1.0 + alpha)
    moments = {}
    for k in range(1, kmax + 1):
        arg = (k * p + alpha * (k - 1.0)) / (alpha + 1.0)
        if arg <= 0.0:  # p = 0, k = 1: point mass at zero after scaling
            moments[k] = 0.0
        else:
            moments[k] = ck[k] * (1.0 + alpha) * gamma_fn(1.0 / (1.0 + alpha)) / (
                alpha * gamma_fn(arg)
            )
    return MomentTable(
        kind="bell_recursion",
        scaling_exponent=expo,
        moments=moments,
        aux={k: ck[k] for k in range(1, kmax + 1)},
    )


def closed_form_alpha1(p: float, kmax: int) -> MomentTable:
    """Closed-form moments at alpha = 1 (plane-oriented recursive trees)."""
    moments = {}
    aux = {}
    for k in range(1, kmax + 1):
        logm = (
            math.log(2.0)
            + (k - 1) * math.log(p)
            + math.lgamma(k * p + k - 1.0)
            + 0.5 * math.log(math.pi)
            - (2 * k - 1) * math.log(p + 1.0)
            - math.lgamma(k * p)
            - math.lgamma((k * p + k - 1.0) / 2.0)
        )
        moments[k] = math.exp(logm)
        aux[k] = math.exp(
            (k - 1) * math.log(p)
            + math.lgamma(k * p + k - 1.0)
            - (2 * k - 1) * math.log(p + 1.0)
            - math.lgamma(k * p)
        )
    return MomentTable(
        kind="closed_alpha1", scaling_exponent=(p + 1.0) / 2.0, moments=moments, aux=aux
    )


def closed_form_d2(p: float, kmax: int) -> MomentTable:
    """Closed-form moments at d = 2 (binary search trees), p > 1/2."""
    if not p > 0.5:
        raise ValueError("closed_form_d2 requires p > 1/2")
    moments = {}
    aux = {}
    for k in range(1, kmax + 1):
        aux[k] = math.exp(
            math.lgamma(k + 1.0)
            + 2.0 * (k - 1) * math.log(p)
            - (2 * k - 1) * math.log(2.0 * p - 1.0)
        )
        moments[k] = aux[k] / gamma_fn(k * (2.0 * p - 1.0) + 1.0)
    return MomentTable(
        kind="closed_d2", scaling_exponent=2.0 * p - 1.0, moments=moments, aux=aux
    )


def otter_dwass_pmf(d: int, p: float, kmax: int) -> np.ndarray:
    """Total-progeny pmf of the binomial(d, p) branching tree: entry k-1 is
    P(size = k) = C(kd, k-1) p^(k-1) (1-p)^(kd-k+1) / k, evaluated in log
    space."""
    if d < 2:
        raise ValueError("d must be >= 2")
    out = np.zeros(kmax)
    for k in range(1, kmax + 1):
        if p == 0.0:
            out[k - 1] = 1.0 if k == 1 else 0.0
            continue
        if p == 1.0:
            out[k - 1] = 0.0
            continue
        logv = (
            -math.log(k)
            + math.lgamma(k * d + 1.0)
            - math.lgamma(k - 1 + 1.0)
            - math.lgamma(k * d - k + 2.0)
            + (k - 1) * math.log(p)
            + (k * d - k + 1) * math.log1p(-p)
        )
        out[k - 1] = math.exp(logv)
    return out


def otter_dwass_pmf_adaptive(d: int, p: float, tail: float = 1e-9, kmax_cap: int = 100000):
    """Extend the pmf until the missing mass (relative to the survival
    complement) is below ``tail``.  Returns (pmf, kmax)."""
    target = 1.0 - p_infinity(d, p)
    kmax = 64
    while True:
        pmf = otter_dwass_pmf(d, p, kmax)
        if target - pmf.sum() <= tail or kmax >= kmax_cap:
            return pmf, kmax
        kmax *= 2


def p_infinity(d: int, p: float) -> float:
    """Survival probability of the percolated infinite d-ary root cluster:
    smallest positive root of 1 - x = (1 - p x)^d; zero when p <= 1/d."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must lie in [0, 1]")
    if p * d <= 1.0:
        return 0.0

    def g(x: float) -> float:
        return (1.0 - p * x) ** d - (1.0 - x)

    lo, hi = 0.0, 1.0
    # g < 0 just right of 0, g(1) >= 0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14:
            break
    return (lo + hi) / 2.0


# ---------------------------------------------------------------------------
# series self-checks for the moment recursions
# ---------------------------------------------------------------------------


def _ser_mul(a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    out = np.convolve(a[: order + 1], b[: order + 1])
    return out[: order + 1]


def _ser_log1p(u: np.ndarray, order: int) -> np.ndarray:
    # w = log(1+u), u[0] = 0:  n w_n = n u_n - sum_m m w_m u_{n-m}
    w = np.zeros(order + 1)
    for n in range(1, order + 1):
        s = n * u[n]
        for m in range(1, n):
            s -= m * w[m] * u[n - m]
        w[n] = s / n
    return w


def _ser_exp(u: np.ndarray, order: int) -> np.ndarray:
    # w = exp(u), u[0] = 0:  n w_n = sum_m m u_m w_{n-m}
    w = np.zeros(order + 1)
    w[0] = 1.0
    for n in range(1, order + 1):
        s = 0.0
        for m in range(1, n + 1):
            s += m * u[m] * w[n - m]
        w[n] = s / n
    return w


def ck_ode_residual(alpha: float, p: float, order: int) -> float:
    """Coefficientwise residual of x c' = (alpha/(p+alpha)) (c - 1 +
    (1 - p c)^(-1/alpha)) for the exponential generating function of the
    alpha > 0 moment coefficients, through the given order.  The composed
    right side is expanded with series log/exp, independent of the Bell
    recurrence."""
    ck = _ck_coeffs(alpha, p, order)
    c = np.zeros(order + 1)
    for k in range(1, order + 1):
        c[k] = ck[k] / math.factorial(k)
    w = _ser_log1p(-p * c, order)
    inv = _ser_exp(-w / alpha, order)  # (1 - p c)^(-1/alpha)
    rhs = (alpha / (p + alpha)) * (c + inv)
    rhs[0] = (alpha / (p + alpha)) * (c[0] - 1.0 + inv[0])
    lhs = c * np.arange(order + 1)
    return float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))))


def dk_ode_residual(d: int, p: float, order: int) -> float:
    """Coefficientwise residual of x t' = ((1 + p t)^d - t - 1)/(pd - 1)
    for the d-ary moment coefficients, through the given order."""
    dk = _dk_coeffs(d, p, order)
    t = np.zeros(order + 1)
    for k in range(1, order + 1):
        t[k] = dk[k] / math.factorial(k)
    base = p * t.copy()
    base[0] += 1.0
    power = np.zeros(order + 1)
    power[0] = 1.0
    for _ in range(d):
        power = _ser_mul(power, base, order)
    rhs = (power - t) / (p * d - 1.0)
    rhs[0] = (power[0] - t[0] - 1.0) / (p * d - 1.0)
    lhs = t * np.arange(order + 1)
    return float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))))
