"""Generalized Polya urns: construction, simulation, and limit analytics.

An urn has q ball types with activities a_i >= 0.  At each step a ball is
drawn with probability proportional to activity times count, and a random
replacement vector for the drawn type is added.  Ball counts are real
valued: fractional additions encode vertex-weight increments.

``build_urn`` produces the urns coupled to the coloured-tree process:

    weight2    2 types  (red weight, blue weight)
    cluster4   4 types  (+ red clusters, blue clusters; activity 0)
    leaf4      4 types  (red/blue leaves, red/blue non-leaf weight)
    leaf3      3 types  (leaves + merged non-leaf weight; p = 1/2 only)
    fringe     q+2 types for a downward-closed coloured-pattern set
               (patterns plus a catch-all weight type per colour)

Every replacement conserves total activity increase 1 + alpha per step, so
drawing n-1 times matches a tree grown to size n.

The limit covariances follow the dual-eigenbasis formulas: with B the
activity-weighted second moment of the replacements, the subcritical
scaled covariance is lambda1 * sigma_I and the critical one is sigma_II.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .tree import RED, BLUE, Model, RngStream
from .stats import ColouredPattern

URN_KINDS = ("weight2", "cluster4", "leaf4", "leaf3", "fringe")

_SINGLE_RED = ColouredPattern.of([0], [RED])
_SINGLE_BLUE = ColouredPattern.of([0], [BLUE])


class UrnError(ValueError):
    pass


class RegimeError(UrnError):
    """Eigenvalue configuration outside the requested formula's domain."""


class NonDiagonalizableError(UrnError):
    """Defective intensity matrix; the plain dual-basis formulas do not
    apply (boundary cases alpha = 1-2p / alpha = -2p of the paired urns)."""


@dataclass(eq=False)
class UrnSpec:
    kind: str
    labels: tuple
    activities: np.ndarray
    outcomes: tuple  # per type: (m_i, q) replacement vectors
    probs: tuple  # per type: (m_i,) probabilities
    x0: np.ndarray
    weight_functional: np.ndarray  # red-minus-blue weight carried per ball
    patterns: tuple = ()
    pattern_activities: np.ndarray | None = None
    x_from_y: np.ndarray | None = None  # fringe counts from ball counts

    @property
    def q(self) -> int:
        return self.activities.shape[0]

    def mean_replacement(self, i: int) -> np.ndarray:
        return self.probs[i] @ self.outcomes[i]

    def intensity_matrix(self) -> np.ndarray:
        A = np.zeros((self.q, self.q))
        for j in range(self.q):
            A[:, j] = self.activities[j] * self.mean_replacement(j)
        return A


def _e(q: int, i: int, scale: float = 1.0) -> np.ndarray:
    v = np.zeros(q)
    v[i] = scale
    return v


def _two_colour_spec(kind, model, root_colour):
    alpha, p = model.alpha, model.p
    if kind == "weight2":
        acts = np.array([1.0, 1.0])
        outcomes = (
            np.stack([np.array([1 + alpha, 0.0]), np.array([alpha, 1.0])]),
            np.stack([np.array([0.0, 1 + alpha]), np.array([1.0, alpha])]),
        )
        probs = (np.array([p, 1 - p]),) * 2
        x0 = _e(2, 0 if root_colour == RED else 1)
        return UrnSpec(
            kind=kind,
            labels=("r", "b"),
            activities=acts,
            outcomes=outcomes,
            probs=probs,
            x0=x0,
            weight_functional=np.array([1.0, -1.0]),
        )
    if kind == "cluster4":
        acts = np.array([1.0, 1.0, 0.0, 0.0])
        outcomes = (
            np.stack([np.array([1 + alpha, 0, 0, 0]), np.array([alpha, 1, 0, 1])]),
            np.stack([np.array([0, 1 + alpha, 0, 0]), np.array([1, alpha, 1, 0])]),
            np.zeros((1, 4)),
            np.zeros((1, 4)),
        )
        probs = (np.array([p, 1 - p]), np.array([p, 1 - p]), np.array([1.0]), np.array([1.0]))
        x0 = _e(4, 0) + _e(4, 2) if root_colour == RED else _e(4, 1) + _e(4, 3)
        return UrnSpec(
            kind=kind,
            labels=("r", "b", "r_cluster", "b_cluster"),
            activities=acts,
            outcomes=outcomes,
            probs=probs,
            x0=x0,
            weight_functional=np.array([1.0, -1.0, 0.0, 0.0]),
        )
    if kind == "leaf4":
        acts = np.ones(4)
        outcomes = (
            np.stack([np.array([0, 0, 1 + alpha, 0]), np.array([-1, 1, 1 + alpha, 0])]),
            np.stack([np.array([0, 0, 0, 1 + alpha]), np.array([1, -1, 0, 1 + alpha])]),
            np.stack([np.array([1, 0, alpha, 0]), np.array([0, 1, alpha, 0])]),
            np.stack([np.array([0, 1, 0, alpha]), np.array([1, 0, 0, alpha])]),
        )
        probs = (np.array([p, 1 - p]),) * 4
        x0 = _e(4, 0 if root_colour == RED else 1)
        return UrnSpec(
            kind=kind,
            labels=("r_leaf", "b_leaf", "r_weight", "b_weight"),
            activities=acts,
            outcomes=outcomes,
            probs=probs,
            x0=x0,
            weight_functional=np.array([1.0, -1.0, 1.0, -1.0]),
        )
    raise UrnError(f"unknown urn kind {kind!r}")


def _leaf3_spec(model, root_colour):
    if model.p != 0.5:
        raise UrnError("the merged three-type leaf urn applies only at p = 1/2")
    alpha = model.alpha
    acts = np.ones(3)
    outcomes = (
        np.stack([np.array([0, 0, 1 + alpha]), np.array([-1, 1, 1 + alpha])]),
        np.stack([np.array([0, 0, 1 + alpha]), np.array([1, -1, 1 + alpha])]),
        np.stack([np.array([1, 0, alpha]), np.array([0, 1, alpha])]),
    )
    probs = (np.array([0.5, 0.5]),) * 3
    x0 = _e(3, 0 if root_colour == RED else 1)
    return UrnSpec(
        kind="leaf3",
        labels=("r_leaf", "b_leaf", "weight"),
        activities=acts,
        outcomes=outcomes,
        probs=probs,
        x0=x0,
        weight_functional=np.array([1.0, -1.0, 0.0]),
    )


def _subpattern(pat: ColouredPattern, root: int) -> ColouredPattern:
    """The fringe subtree of a pattern rooted at one of its vertices."""
    n = pat.size
    keep = [root]
    members = {root}
    for v in range(root + 1, n):  # descendants carry larger indices
        if int(pat.parent[v]) in members:
            members.add(v)
            keep.append(v)
    remap = {old: new for new, old in enumerate(keep)}
    parents = [0] + [remap[int(pat.parent[v])] for v in keep[1:]]
    colours = [int(pat.colour[v]) for v in keep]
    return ColouredPattern.of(parents, colours)


def _with_child(pat: ColouredPattern, v: int, colour: int) -> ColouredPattern:
    parents = list(pat.parent) + [v]
    colours = list(pat.colour) + [colour]
    parents[0] = 0
    return ColouredPattern.of(parents, colours)


def _check_downward_closed(patterns) -> dict:
    """Downward closure under removing any non-root leaf (equivalent to
    closure under root-preserving coloured subtrees).  Returns code->index."""
    index = {pat.code(): i for i, pat in enumerate(patterns)}
    if len(index) != len(patterns):
        raise UrnError("duplicate patterns (same canonical code)")
    for pat in patterns:
        n = pat.size
        if n == 1:
            continue
        child_count = np.zeros(n, dtype=int)
        for v in range(1, n):
            child_count[int(pat.parent[v])] += 1
        for v in range(1, n):
            if child_count[v] != 0:
                continue
            parents = [int(pat.parent[u]) for u in range(n) if u != v]
            # removing v shifts indices above it down by one
            parents = [u - 1 if u > v else u for u in parents]
            colours = [int(pat.colour[u]) for u in range(n) if u != v]
            sub = ColouredPattern.of(parents, colours)
            if sub.code() not in index:
                raise UrnError(
                    "pattern set is not downward closed: removing a leaf of "
                    f"a size-{n} pattern leaves the set"
                )
    return index


def _fringe_spec(model: Model, patterns, root_colour):
    alpha, p = model.alpha, model.p
    # the two singles come first, red then blue; the rest by (size, code)
    red_code, blue_code = _SINGLE_RED.code(), _SINGLE_BLUE.code()
    rank = {red_code: 0, blue_code: 1}
    pats = sorted(
        patterns, key=lambda q: (rank.get(q.code(), 2), q.size, q.code())
    )
    codes = [q.code() for q in pats]
    if red_code not in codes or blue_code not in codes:
        raise UrnError("the pattern set must contain both single-vertex patterns")
    index = _check_downward_closed(pats)
    qn = len(pats)
    Q = qn + 2
    star = {RED: qn, BLUE: qn + 1}
    a_pat = np.array([q.size * (1 + alpha) - alpha for q in pats])
    acts = np.concatenate([a_pat, [1.0, 1.0]])

    def decompose(pat: ColouredPattern) -> np.ndarray:
        i = index.get(pat.code())
        if i is not None:
            return _e(Q, i)
        vec = np.zeros(Q)
        deg = int((pat.parent[1:] == 0).sum()) if pat.size > 1 else 0
        vec[star[pat.root_colour]] += alpha * deg + 1.0
        for v in range(1, pat.size):
            if int(pat.parent[v]) == 0:
                vec += decompose(_subpattern(pat, v))
        return vec

    outcomes = []
    probs = []
    for i, pat in enumerate(pats):
        outs: dict[bytes, tuple[np.ndarray, float]] = {}
        child_count = np.zeros(pat.size)
        for v in range(1, pat.size):
            child_count[int(pat.parent[v])] += 1
        weights = alpha * child_count + 1.0
        for v in range(pat.size):
            for c in (RED, BLUE):
                pr = (weights[v] / a_pat[i]) * (p if c == int(pat.colour[v]) else 1 - p)
                if pr == 0.0:
                    continue
                grown = _with_child(pat, v, c)
                delta = decompose(grown) - _e(Q, i)
                key = delta.tobytes()
                if key in outs:
                    vec, acc = outs[key]
                    outs[key] = (vec, acc + pr)
                else:
                    outs[key] = (delta, pr)
        outcomes.append(np.stack([v for v, _ in outs.values()]))
        probs.append(np.array([w for _, w in outs.values()]))
    for colour in (RED, BLUE):
        outs = []
        prs = []
        for c_new, pr in ((RED, p if colour == RED else 1 - p), (BLUE, 1 - p if colour == RED else p)):
            delta = _e(Q, star[colour], alpha) + _e(Q, index[(_SINGLE_RED if c_new == RED else _SINGLE_BLUE).code()])
            outs.append(delta)
            prs.append(pr)
        outcomes.append(np.stack(outs))
        probs.append(np.array(prs))

    # pattern-in-pattern incidence: fringe counts are x_from_y @ ball counts
    C = np.zeros((qn, Q))
    for j, pat in enumerate(pats):
        for v in range(pat.size):
            sub = _subpattern(pat, v)
            i = index.get(sub.code())
            if i is not None:
                C[i, j] += 1.0
    wfun = np.zeros(Q)
    for j, pat in enumerate(pats):
        child_count = np.zeros(pat.size)
        for v in range(1, pat.size):
            child_count[int(pat.parent[v])] += 1
        w = alpha * child_count + 1.0
        sign = np.where(np.asarray(pat.colour) == RED, 1.0, -1.0)
        wfun[j] = float((sign * w).sum())
    wfun[qn] = 1.0
    wfun[qn + 1] = -1.0
    x0 = _e(Q, index[(_SINGLE_RED if root_colour == RED else _SINGLE_BLUE).code()])
    return UrnSpec(
        kind="fringe",
        labels=tuple(f"pattern{i}" for i in range(qn)) + ("star_r", "star_b"),
        activities=acts,
        outcomes=tuple(outcomes),
        probs=tuple(probs),
        x0=x0,
        weight_functional=wfun,
        patterns=tuple(pats),
        pattern_activities=a_pat,
        x_from_y=C,
    )


def build_urn(kind: str, model: Model, patterns=None, root_colour: int = RED) -> UrnSpec:
    """Construct one of the named urns coupled to the tree process."""
    if kind in ("weight2", "cluster4", "leaf4"):
        return _two_colour_spec(kind, model, root_colour)
    if kind == "leaf3":
        return _leaf3_spec(model, root_colour)
    if kind == "fringe":
        if not patterns:
            raise UrnError("fringe urn requires a pattern set")
        return _fringe_spec(model, patterns, root_colour)
    raise UrnError(f"unknown urn kind {kind!r}; expected one of {URN_KINDS}")


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _run_urn_kernel(acts, x, outcome_tensor, prob_table, steps, traj, record, rng):
    q = acts.shape[0]
    mmax = prob_table.shape[1]
    ok = True
    for t in range(steps):
        total = 0.0
        for i in range(q):
            total += acts[i] * x[i]
        r = rng.random() * total
        acc = 0.0
        pick = q - 1
        for i in range(q):
            acc += acts[i] * x[i]
            if r < acc:
                pick = i
                break
        r2 = rng.random()
        acc2 = 0.0
        m = mmax - 1
        for mm in range(mmax):
            acc2 += prob_table[pick, mm]
            if r2 < acc2:
                m = mm
                break
        for j in range(q):
            x[j] += outcome_tensor[pick, m, j]
            if x[j] < -1e-9:
                ok = False
        if record:
            for j in range(q):
                traj[t + 1, j] = x[j]
    return ok


def _padded_tables(spec: UrnSpec):
    q = spec.q
    mmax = max(o.shape[0] for o in spec.outcomes)
    tensor = np.zeros((q, mmax, q))
    table = np.zeros((q, mmax))
    for i in range(q):
        mi = spec.outcomes[i].shape[0]
        tensor[i, :mi, :] = spec.outcomes[i]
        table[i, :mi] = spec.probs[i]
    return tensor, table


def run_urn(spec: UrnSpec, steps: int, rng, return_trajectory: bool = False):
    """Evolve the urn ``steps`` draws from its initial state.

    Returns the final state vector, or the full (steps+1, q) trajectory.
    Raises UrnError if any count goes negative (malformed replacement law).
    """
    if isinstance(rng, RngStream):
        rng = rng.generator()
    tensor, table = _padded_tables(spec)
    x = spec.x0.astype(np.float64).copy()
    traj = np.empty((steps + 1, spec.q)) if return_trajectory else np.empty((1, spec.q))
    if return_trajectory:
        traj[0] = x
    ok = _run_urn_kernel(
        spec.activities, x, tensor, table, steps, traj, return_trajectory, rng
    )
    if not ok:
        raise UrnError("negative ball count produced during urn evolution")
    return traj if return_trajectory else x


# ---------------------------------------------------------------------------
# eigenstructure and limit covariances
# ---------------------------------------------------------------------------

_REL_TOL = 1e-9


@dataclass(eq=False)
class EigenAnalysis:
    eigenvalues: np.ndarray  # sorted by decreasing real part
    V: np.ndarray  # columns: right vectors, a^T v1 = 1
    U: np.ndarray  # columns: left vectors, U^T V = I
    diagonalizable: bool

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0].real)

    @property
    def lambda2(self) -> complex:
        return complex(self.eigenvalues[1])

    def regime(self, tol: float = _REL_TOL) -> str:
        gap = self.lambda1 - 2.0 * self.eigenvalues[1].real
        scale = tol * (1.0 + abs(self.lambda1))
        if gap > scale:
            return "subcritical"
        if gap < -scale:
            return "supercritical"
        return "critical"


def eigen_analysis(spec: UrnSpec) -> EigenAnalysis:
    """Dual eigenbases of the intensity matrix.

    The leading right vector is scaled so activities dot v1 = 1; the left
    basis is the transposed inverse of the right one, which enforces
    u_i^T v_j = delta_ij (and u1^T v1 = 1) in one stroke.
    """
    A = spec.intensity_matrix()
    w, V = np.linalg.eig(A)
    order = np.argsort(-w.real, kind="stable")
    w = w[order]
    V = V[:, order].astype(complex)
    scale = 1.0 + abs(w[0].real)
    if abs(w[0].imag) > _REL_TOL * scale:
        raise UrnError("leading eigenvalue is not real")
    if w.shape[0] > 1 and (w[0].real - w[1].real) <= _REL_TOL * scale:
        raise UrnError("leading eigenvalue is not simple")
    norm = spec.activities @ V[:, 0]
    if abs(norm) < 1e-12:
        raise UrnError("activities are orthogonal to the leading eigenvector")
    V[:, 0] = V[:, 0] / norm
    for j in range(1, V.shape[1]):
        k = int(np.argmax(np.abs(V[:, j])))
        V[:, j] = V[:, j] / V[k, j]
    cond = np.linalg.cond(V)
    diag = bool(np.isfinite(cond) and cond < 1e12)
    if not diag:
        return EigenAnalysis(eigenvalues=w, V=V, U=np.full_like(V, np.nan), diagonalizable=False)
    U = np.linalg.inv(V).T
    resid = np.abs(A @ V - V @ np.diag(w)).max() / max(1.0, np.abs(A).max())
    resid_left = np.abs(U.T @ A - np.diag(w) @ U.T).max() / max(1.0, np.abs(A).max())
    if max(resid, resid_left) > _REL_TOL:
        raise UrnError(f"eigenpair residual {max(resid, resid_left):.2e} exceeds 1e-9")
    return EigenAnalysis(eigenvalues=w, V=V, U=U, diagonalizable=True)


def _second_moment_matrix(spec: UrnSpec, v1: np.ndarray) -> np.ndarray:
    q = spec.q
    B = np.zeros((q, q))
    for i in range(q):
        Exx = np.einsum("m,mi,mj->ij", spec.probs[i], spec.outcomes[i], spec.outcomes[i])
        B += spec.activities[i] * v1[i].real * Exx
    return B


def sigma_I(spec: UrnSpec, analysis: EigenAnalysis) -> np.ndarray:
    """Subcritical limit shape: the scaled fluctuations are normal with
    covariance lambda1 * sigma_I."""
    if not analysis.diagonalizable:
        raise NonDiagonalizableError(
            "intensity matrix is defective; the dual-basis formula does not apply"
        )
    lam1 = analysis.lambda1
    w = analysis.eigenvalues
    if analysis.regime() != "subcritical":
        raise RegimeError("sigma_I requires lambda1 > 2 Re lambda2")
    B = _second_moment_matrix(spec, analysis.V[:, 0])
    q = spec.q
    S = np.zeros((q, q), dtype=complex)
    for j in range(1, q):
        for k in range(1, q):
            den = lam1 - w[j] - w[k]
            if abs(den) < 1e-12 * (1.0 + abs(lam1)):
                raise RegimeError("vanishing denominator lambda1 - lambda_j - lambda_k")
            S += (analysis.U[:, j] @ B @ analysis.U[:, k]) / den * np.outer(
                analysis.V[:, j], analysis.V[:, k]
            )
    if np.abs(S.imag).max() > 1e-9 * (1.0 + np.abs(S.real).max()):
        raise UrnError("sigma_I has a non-negligible imaginary part")
    S = S.real
    return (S + S.T) / 2.0


def sigma_remnant(spec: UrnSpec, analysis: EigenAnalysis) -> np.ndarray:
    """The sigma_I sum restricted to eigenvalue pairs with
    lambda_j + lambda_k < lambda1.  Equals sigma_I when subcritical; in the
    supercritical regime it is the variance of the n^(1/2)-scale remainder
    left after removing the dominant component, which enters second-moment
    predictions at relative order n^(1 - 2 lambda2/lambda1)."""
    if not analysis.diagonalizable:
        raise NonDiagonalizableError("intensity matrix is defective")
    lam1 = analysis.lambda1
    w = analysis.eigenvalues
    B = _second_moment_matrix(spec, analysis.V[:, 0])
    q = spec.q
    S = np.zeros((q, q), dtype=complex)
    for j in range(1, q):
        for k in range(1, q):
            den = lam1 - w[j] - w[k]
            if den.real <= _REL_TOL * (1.0 + abs(lam1)):
                continue
            S += (analysis.U[:, j] @ B @ analysis.U[:, k]) / den * np.outer(
                analysis.V[:, j], analysis.V[:, k]
            )
    S = S.real
    return (S + S.T) / 2.0


def sigma_II(spec: UrnSpec, analysis: EigenAnalysis) -> np.ndarray:
    """Critical limit shape: fluctuations scaled by sqrt(n ln n) are normal
    with covariance sigma_II (rank one)."""
    if not analysis.diagonalizable:
        raise NonDiagonalizableError("intensity matrix is defective")
    w = analysis.eigenvalues
    lam1 = analysis.lambda1
    scale = _REL_TOL * (1.0 + abs(lam1))
    if abs(w[1].imag) > scale or abs(lam1 - 2.0 * w[1].real) > scale:
        raise RegimeError("sigma_II requires lambda1 = 2 lambda2 with lambda2 real")
    if w.shape[0] > 2 and (w[1].real - w[2].real) <= scale:
        raise RegimeError("sigma_II requires lambda2 > Re lambda3")
    B = _second_moment_matrix(spec, analysis.V[:, 0])
    u2 = analysis.U[:, 1].real
    v2 = analysis.V[:, 1].real
    return float(u2 @ B @ u2) * np.outer(v2, v2)


def supercritical_direction(spec: UrnSpec, analysis: EigenAnalysis) -> np.ndarray:
    """The lambda2 right eigenvector scaled so the red-minus-blue weight
    functional maps it to 1; in that normalization the scalar limit along
    this direction is the common limit variable of the weight urn."""
    if not analysis.diagonalizable:
        raise NonDiagonalizableError("intensity matrix is defective")
    v2 = analysis.V[:, 1]
    if abs(v2.imag).max() > _REL_TOL * (1.0 + np.abs(v2.real).max()):
        raise RegimeError("lambda2 eigenvector is not real")
    v2 = v2.real
    norm = spec.weight_functional @ v2
    if abs(norm) < 1e-12:
        raise UrnError("weight functional is orthogonal to the lambda2 vector")
    return v2 / norm
