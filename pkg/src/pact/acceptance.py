"""The acceptance checks behind ``pact verify``.

Each criterion pins an experiment size, a reference value, and a
tolerance; together they exercise the subcritical / critical /
supercritical fluctuation laws for vertex, cluster, leaf, and fringe
counts, the root-cluster moment tables in every parameter range, the
exact small-n oracles against simulation, and the internal consistency of
the moment recursions.  Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import theory
from ._mc import batch_stats, root_cluster_checkpoints
from .oracle import (
    closed_form_pmf_alpha0,
    enumerate_small,
    exact_root_cluster_pmf,
    series_moments,
)
from .stats import all_patterns, cluster_counts
from .theory import gamma_fn
from .tree import Model, RngStream, grow_coloured_tree, percolation_forest

DEFAULT_SEED = 42


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name} ({self.seconds:.1f}s)"


def _within(value: float, target: float, rel: float) -> bool:
    return abs(value - target) <= rel * abs(target)


def _scaled_devs(model, n, reps, seed, cols, centre, scale):
    stats = batch_stats(model, n, reps, seed)
    return (stats[:, cols].astype(float) - n * np.asarray(centre)) / scale


def check_subcritical_vertex_variance(seed=DEFAULT_SEED) -> CheckResult:
    """alpha=0, p=0.6: variance and cross-covariance of the sqrt(n)-scaled
    red/blue vertex counts vs (4 alpha p - alpha - 1)/(4(4p + alpha - 3))."""
    model = Model.preferential(0.0, 0.6)
    n, reps = 10_000, 2000
    dev = _scaled_devs(model, n, reps, seed, (0, 1), (0.5, 0.5), math.sqrt(n))
    target = (4 * 0.0 * 0.6 - 0.0 - 1.0) / (4.0 * (4 * 0.6 + 0.0 - 3.0))
    var_r = float(dev[:, 0].var(ddof=1))
    cross = float(np.cov(dev.T, ddof=1)[0, 1])
    ok = _within(var_r, target, 0.15) and _within(cross, -target, 0.15)
    return CheckResult(
        "01 subcritical vertex variance",
        ok,
        {"variance": var_r, "cross": cross, "target": target},
    )


def check_critical_vertex_variance(seed=DEFAULT_SEED) -> CheckResult:
    """alpha=0, p=3/4: variance under the sqrt(n ln n) scaling vs 1/4."""
    model = Model.preferential(0.0, 0.75)
    n, reps = 100_000, 2000
    dev = _scaled_devs(model, n, reps, seed, (0,), (0.5,), math.sqrt(n * math.log(n)))
    var_r = float(dev[:, 0].var(ddof=1))
    ok = _within(var_r, 0.25, 0.20)
    return CheckResult(
        "02 critical vertex variance", ok, {"variance": var_r, "target": 0.25}
    )


def check_supercritical_vertices(seed=DEFAULT_SEED) -> CheckResult:
    """alpha=0, p=0.9: scaled deviation centred at zero, second moment vs
    E[Z^2]/4."""
    model = Model.preferential(0.0, 0.9)
    n, reps = 100_000, 2000
    theta = (2 * 0.9 + 0.0 - 1.0) / (1.0 + 0.0)
    dev = _scaled_devs(model, n, reps, seed, (0,), (0.5,), float(n) ** theta)[:, 0]
    se = dev.std(ddof=1) / math.sqrt(reps)
    _, ez2 = theory.z_moments(model)
    target = ez2 / 4.0
    m2 = float((dev**2).mean())
    ok = abs(dev.mean()) <= 4.0 * se and _within(m2, target, 0.15)
    return CheckResult(
        "03 supercritical vertex moments",
        ok,
        {"mean": float(dev.mean()), "mean_4se": 4 * se, "second_moment": m2, "target": target},
    )


def check_cluster_counts(seed=DEFAULT_SEED) -> CheckResult:
    """alpha=1, p=0.3: cluster means, scaled covariance vs the closed-form
    cluster matrix, plus the exact clusters = 1 + bichromatic-edges
    identity on sampled trees."""
    model = Model.preferential(1.0, 0.3)
    n, reps = 10_000, 2000
    stats = batch_stats(model, n, reps, seed)
    data = stats[:, (2, 3)].astype(float)
    mu = n * (1 - 0.3) / 2.0
    ok = True
    details = {}
    for i in range(2):
        se = data[:, i].std(ddof=1) / math.sqrt(reps)
        details[f"mean_{i}"] = float(data[:, i].mean())
        ok &= abs(data[:, i].mean() - mu) <= 4.0 * se
    dev = (data - mu) / math.sqrt(n)
    emp = np.cov(dev.T, ddof=1)
    pred = theory.cluster_covariance(model)
    details["cov"] = emp.tolist()
    details["cov_target"] = pred.tolist()
    ok &= bool(np.all(np.abs(emp - pred) <= 0.15 * np.abs(pred)))
    # structural identity on fresh trees
    for r in range(50):
        tree = grow_coloured_tree(model, 500, RngStream(seed + 1, r))
        rc, bc = cluster_counts(tree)
        bichromatic = int((tree.colour[1:] != tree.colour[tree.parent[1:]]).sum())
        labels = percolation_forest(tree)
        if rc + bc != 1 + bichromatic or rc + bc != np.unique(labels).shape[0]:
            ok = False
            details["identity_failure"] = r
            break
    return CheckResult("04 cluster counts", ok, details)


def check_leaf_covariances(seed=DEFAULT_SEED) -> CheckResult:
    """alpha=0 leaves: scaled covariance vs the closed-form matrix at p=0.3 and
    the special matrix at p=1/2."""
    ok = True
    details = {}
    for tag, p in (("p03", 0.3), ("p05", 0.5)):
        model = Model.preferential(0.0, p)
        n, reps = 10_000, 2000
        stats = batch_stats(model, n, reps, seed)
        lf = (1 + 0.0) / (4 + 2 * 0.0)
        dev = (stats[:, (4, 5)].astype(float) - n * lf) / math.sqrt(n)
        emp = np.cov(dev.T, ddof=1)
        pred = theory.leaf_covariance(model)
        details[tag] = {"cov": emp.tolist(), "target": pred.tolist()}
        ok &= bool(np.all(np.abs(emp - pred) <= 0.15 * np.abs(pred)))
    return CheckResult("05 leaf covariances", ok, details)


def check_fringe_densities(seed=DEFAULT_SEED) -> CheckResult:
    """Patterns up to size 3 at alpha = 0 and alpha = 1: empirical density
    within 4 SE of the predicted per-vertex density; single-vertex
    densities must equal the leaf constant identically."""
    from .stats import fringe_census

    ok = True
    details = {}
    patterns = all_patterns(3)
    singles = [q for q in patterns if q.size == 1]
    n, reps = 10_000, 500
    for alpha in (0.0, 1.0):
        model = Model.preferential(alpha, 0.4)
        mu = theory.fringe_mu(patterns, model)
        leaf_const = (1 + alpha) / (4 + 2 * alpha)
        for q in singles:
            ident = theory.fringe_mu([q], model)[0]
            if abs(ident - leaf_const) > 1e-12:
                ok = False
                details[f"identity_alpha{alpha}"] = ident
        counts = np.zeros((reps, len(patterns)))
        rng = RngStream(seed + int(alpha)).generator()
        for r in range(reps):
            counts[r] = fringe_census(grow_coloured_tree(model, n, rng), patterns)
        dens = counts / n
        bad = []
        for i in range(len(patterns)):
            se = dens[:, i].std(ddof=1) / math.sqrt(reps)
            if abs(dens[:, i].mean() - mu[i]) > 4.0 * se:
                bad.append(i)
        details[f"alpha{alpha}"] = {
            "max_abs_err": float(np.abs(dens.mean(axis=0) - mu).max()),
            "failed_patterns": bad,
        }
        ok &= not bad
    return CheckResult("06 fringe densities", ok, details)


def check_root_cluster_alpha0(seed=DEFAULT_SEED) -> CheckResult:
    """alpha=0, p=1/2: scaled root-cluster mean vs 1/Gamma(3/2) and second
    moment vs 2/Gamma(2)."""
    model = Model.preferential(0.0, 0.5)
    n, reps = 100_000, 5000
    stats = batch_stats(model, n, reps, seed)
    s = stats[:, 6].astype(float) / float(n) ** 0.5
    m1, m2 = float(s.mean()), float((s**2).mean())
    t1, t2 = 1.0 / gamma_fn(1.5), 2.0 / gamma_fn(2.0)
    ok = _within(m1, t1, 0.10) and _within(m2, t2, 0.15)
    return CheckResult(
        "07 root cluster alpha=0", ok, {"m1": m1, "t1": t1, "m2": m2, "t2": t2}
    )


def check_oracle_equivalence(seed=DEFAULT_SEED) -> CheckResult:
    """Exact pmf == enumeration marginal (and the closed form at alpha=0),
    and simulation within TV 0.01 of the exact pmf at n=7."""
    ok = True
    details = {}
    for p in (0.3, 0.6, 0.9):
        for tag, model in (
            ("alpha0", Model.preferential(0.0, p)),
            ("alpha1", Model.preferential(1.0, p)),
            ("dary2", Model.dary(2, p)),
        ):
            for n in range(2, 8):
                exact = exact_root_cluster_pmf(model, n)
                enum = enumerate_small(model, n).root_cluster_pmf[1 : n + 1]
                err = float(np.abs(exact - enum).max())
                if err > 1e-12:
                    ok = False
                    details[f"enum_{tag}_p{p}_n{n}"] = err
            if tag == "alpha0":
                for n in range(2, 13):
                    exact = exact_root_cluster_pmf(model, n)
                    cf = closed_form_pmf_alpha0(n, p)
                    err = float(np.abs(exact - cf).max())
                    if err > 1e-12:
                        ok = False
                        details[f"closed_{tag}_p{p}_n{n}"] = err
            n = 7
            reps = 1_000_000
            stats = batch_stats(model, n, reps, seed)
            emp = np.bincount(stats[:, 6], minlength=n + 1)[1:] / reps
            exact = exact_root_cluster_pmf(model, n)
            tv = 0.5 * float(np.abs(emp - exact).sum())
            details[f"tv_{tag}_p{p}"] = tv
            if tv > 0.01:
                ok = False
    return CheckResult("08 oracle equivalence", ok, details)


def check_moment_recursions(seed=DEFAULT_SEED) -> CheckResult:
    """Bell recursions vs closed forms (k <= 12, 1e-10) and generating-
    function residuals (order 15, 1e-9)."""
    ok = True
    details = {"max_rel_alpha1": 0.0, "max_rel_d2": 0.0, "max_resid": 0.0}
    for p in (0.15, 0.3, 0.45, 0.6, 0.75, 0.9):
        rec = theory.root_cluster_limit(Model.preferential(1.0, p), 12)
        closed = theory.closed_form_alpha1(p, 12)
        for k in range(1, 13):
            rel = abs(rec.moments[k] - closed.moments[k]) / abs(closed.moments[k])
            details["max_rel_alpha1"] = max(details["max_rel_alpha1"], rel)
    for p in (0.55, 0.65, 0.75, 0.85, 0.95):
        rec = theory.root_cluster_limit(Model.dary(2, p), 12)
        closed = theory.closed_form_d2(p, 12)
        for k in range(1, 13):
            rel = abs(rec.moments[k] - closed.moments[k]) / abs(closed.moments[k])
            details["max_rel_d2"] = max(details["max_rel_d2"], rel)
    for alpha, p in ((0.5, 0.3), (1.0, 0.7), (2.0, 0.6)):
        details["max_resid"] = max(details["max_resid"], theory.ck_ode_residual(alpha, p, 15))
    for d, p in ((2, 0.7), (3, 0.5), (4, 0.35)):
        details["max_resid"] = max(details["max_resid"], theory.dk_ode_residual(d, p, 15))
    ok = (
        details["max_rel_alpha1"] <= 1e-10
        and details["max_rel_d2"] <= 1e-10
        and details["max_resid"] <= 1e-9
    )
    return CheckResult("09 moment recursion cross-checks", ok, details)


def check_dary_sub_and_critical(seed=DEFAULT_SEED) -> CheckResult:
    """d=3, p=0.2: simulated root-cluster pmf within TV 0.02 of the
    total-progeny pmf; d=2, p=1/2: exact-series slope of E|C_n| against
    ln n within 10% of 1."""
    model = Model.dary(3, 0.2)
    n, reps = 10_000, 100_000
    stats = batch_stats(model, n, reps, seed)
    sizes = stats[:, 6]
    kcap = int(sizes.max())
    emp = np.bincount(sizes, minlength=kcap + 1)[1:] / reps
    pred = theory.otter_dwass_pmf(3, 0.2, max(kcap, 64))
    m = min(emp.shape[0], pred.shape[0])
    tv = 0.5 * (abs(emp[:m] - pred[:m]).sum() + emp[m:].sum() + pred[m:].sum())
    mom = series_moments(Model.dary(2, 0.5), 1, 100_000)
    slope = (mom[100_000] - mom[1000]) / (math.log(100_000) - math.log(1000))
    ok = tv <= 0.02 and _within(slope, 1.0, 0.10)
    return CheckResult(
        "10 d-ary subcritical pmf and critical slope",
        ok,
        {
            "tv": float(tv),
            "tv_gate": 0.02,
            "slope": float(slope),
            # the root cluster at n=1e4 is still growing in ~5% of runs
            # (open slots survive like n^(-1/(d-1))), which alone puts the
            # distance near 0.021; the gate only budgeted sampling error
            "note": "TV gate is tighter than the finite-size gap at n=1e4",
        },
    )


def check_dary_supercritical(seed=DEFAULT_SEED) -> CheckResult:
    """d=2, p=0.8: scaled mean vs 1/((2p-1)Gamma(2p)); survival probability
    vs the complement of the total-progeny mass."""
    p = 0.8
    model = Model.dary(2, p)
    n, reps = 100_000, 5000
    stats = batch_stats(model, n, reps, seed)
    s = stats[:, 6].astype(float) / float(n) ** (2 * p - 1)
    m1 = float(s.mean())
    t1 = 1.0 / ((2 * p - 1) * gamma_fn(2 * p))
    pinf = theory.p_infinity(2, p)
    pmf, kmax = theory.otter_dwass_pmf_adaptive(2, p, tail=1e-9)
    mass_gap = abs((1.0 - pinf) - pmf.sum())
    ok = (
        _within(m1, t1, 0.10)
        and abs(pinf - (2 * p - 1) / p**2) <= 1e-12
        and mass_gap <= 1e-6
    )
    return CheckResult(
        "11 d-ary supercritical",
        ok,
        {"m1": m1, "t1": t1, "p_infinity": pinf, "mass_gap": mass_gap, "kmax": kmax},
    )


def check_stabilization(seed=DEFAULT_SEED) -> CheckResult:
    """d=3, p=0.2: the root cluster should have stopped growing by n=10^4;
    observed as its size at n=10^4 equalling its size at n=2*10^4.  The
    window fraction is an upper bound on the stabilized-by-10^4
    probability, and it sits near 97.4%, so the 99% target is not
    attainable at this tree size (see the fill-rate analysis in the
    project notes)."""
    out = root_cluster_checkpoints(Model.dary(3, 0.2), 10_000, 20_000, 1000, seed)
    frac = float((out[:, 0] == out[:, 1]).mean())
    return CheckResult(
        "12 root-cluster stabilization (a.s. note)",
        frac >= 0.99,
        {"stable_fraction": frac, "gate": 0.99},
    )


DEFAULT_SUITE = (
    check_subcritical_vertex_variance,
    check_critical_vertex_variance,
    check_supercritical_vertices,
    check_cluster_counts,
    check_leaf_covariances,
    check_fringe_densities,
    check_root_cluster_alpha0,
    check_oracle_equivalence,
    check_moment_recursions,
    check_dary_sub_and_critical,
    check_dary_supercritical,
    check_stabilization,
)


def _smoke_oracle(seed=DEFAULT_SEED) -> CheckResult:
    model = Model.preferential(0.0, 0.6)
    exact = exact_root_cluster_pmf(model, 5)
    enum = enumerate_small(model, 5).root_cluster_pmf[1:6]
    err = float(np.abs(exact - enum).max())
    return CheckResult("smoke oracle", err <= 1e-12, {"err": err})


SMOKE_SUITE = (_smoke_oracle, check_moment_recursions)


def run_suite(seed: int = DEFAULT_SEED, suite: str = "default", echo=print) -> list:
    checks = DEFAULT_SUITE if suite == "default" else SMOKE_SUITE
    results = []
    for fn in checks:
        t0 = time.perf_counter()
        res = fn(seed)
        res.seconds = time.perf_counter() - t0
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results
