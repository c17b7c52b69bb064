"""Exhaustive-enumeration checks of the exact finite-sample guarantees.

For small populations these routines enumerate every (assignment, split)
pair with its exact probability and verify, to stated tolerances:

* unbiasedness of the cross-fitted estimator for arbitrary deterministic
  prediction rules;
* conditional independence of the two folds' assignments given the
  split, and identification of each fold's conditional law;
* the variance ordering between the oracle cross-fitted and the oracle
  adjusted estimator, with equality exactly under optimal plans;
* the exact expectation gap of the fold-wise variance estimator under
  completely randomized by-treatment splits;
* unbiasedness of the degrees-of-freedom-corrected weighted Gram that
  the stratified regressions invert.

Accumulation uses compensated (Kahan) summation so the tolerances hold
even for supports approaching the enumeration cap. Every report is a
pure function of its fixture; reruns are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .designs import (
    CompleteRandomization,
    Design,
    Stratified,
    assignment_prob,
    enumerate_assignments,
)
from .errors import (
    DataError,
    DegenerateStratum,
    InsufficientReplication,
    PredictorError,
    SupportTooLarge,
)
from .estimators import cross_fit_components, oracle_adjusted_estimate
from .population import Population, ate_true, realize
from .predictors import PREDICTORS, build_training_set, fit_mean, stratum_omega
from .splitters import (
    SplitByTreatmentCRE,
    SplitPlan,
    enumerate_splits,
    is_optimal_plan,
    split_from_membership,
    split_support_size,
)
from .variance import fold_variance

DEFAULT_CAP = 1_000_000


class Kahan:
    """Compensated accumulator; bounds rounding drift over long sums."""

    __slots__ = ("total", "_c")

    def __init__(self):
        self.total = 0.0
        self._c = 0.0

    def add(self, v: float) -> None:
        y = v - self._c
        t = self.total + y
        self._c = (t - self.total) - y
        self.total = t


@dataclass(frozen=True)
class EnumerationReport:
    """Outcome of one exhaustive verification."""

    claim: str
    fingerprint: str
    values: dict
    max_deviation: float
    tolerance: float
    passed: bool
    support: dict

    def __bool__(self) -> bool:
        return self.passed


def _fingerprint(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part).tobytes())
        else:
            h.update(json.dumps(part, sort_keys=True, default=str).encode())
    return h.hexdigest()[:12]


def _pop_fingerprint(pop: Population, *extra) -> str:
    strata = [] if pop.strata is None else pop.strata.tolist()
    return _fingerprint(pop.y1, pop.y0, pop.x, strata, *extra)


def _plan_json(plan) -> dict:
    if isinstance(plan, SplitPlan):
        return plan.to_json()
    return {"kind": "custom", "repr": repr(plan)}


def _enumerate_splits(plan, design, z, cap):
    if isinstance(plan, SplitPlan):
        return enumerate_splits(plan, design, z, cap=cap)
    return plan.enumerate_splits(design, z)


def _split_result(plan, design, z, membership):
    if isinstance(plan, SplitPlan):
        return split_from_membership(plan, design, z, membership)
    return plan.split_result(design, z, membership)


def _atom_count(design: Design, plan) -> int | None:
    if isinstance(plan, SplitPlan):
        return design.support_size() * split_support_size(plan, design)
    return None


def _check_cap(design, plan, cap):
    count = _atom_count(design, plan)
    if count is not None and count > cap:
        raise SupportTooLarge(count, cap)
    return count


def _resolve_fit(predictor):
    if callable(predictor):
        return predictor, getattr(predictor, "__name__", "custom")
    if predictor in PREDICTORS:
        return PREDICTORS[predictor][0], predictor
    raise DataError(f"unknown predictor {predictor!r}")


def _total_fit(fit, train):
    """Fit, degrading to the per-arm mean so enumeration never aborts."""
    try:
        return fit(train)
    except (PredictorError, DegenerateStratum):
        return fit_mean(train)


def verify_unbiasedness(
    pop: Population,
    design: Design,
    plan,
    predictor="mean",
    cap: int = DEFAULT_CAP,
    tol: float = 1e-10,
) -> EnumerationReport:
    """Exact expectation of the cross-fitted estimator over all atoms.

    Passes iff |E[tau_cf] - tau_true| <= tol. ``predictor`` may be a
    registry name or any deterministic fit callable; the expectation is
    over the joint law of (assignment, split), with the prediction
    functions refit on each atom's training fold.
    """
    count = _check_cap(design, plan, cap)
    fit, fit_name = _resolve_fit(predictor)
    tau_true = ate_true(pop)
    acc = Kahan()
    prob = Kahan()
    atoms = 0
    for z, pz in enumerate_assignments(design, cap=cap):
        observed = realize(pop, z)
        for membership, pm in _enumerate_splits(plan, design, z, cap):
            sr = _split_result(plan, design, z, membership)
            fitted = []
            for q in (1, 2):
                train = build_training_set(
                    observed, sr, held_out_fold=q, allow_empty_arm=True
                )
                fitted.append(_total_fit(fit, train))
            est = cross_fit_components(observed, sr, fitted)
            p = pz * pm
            acc.add(p * est.tau_hat)
            prob.add(p)
            atoms += 1
    dev = abs(acc.total - tau_true)
    prob_dev = abs(prob.total - 1.0)
    return EnumerationReport(
        claim="unbiasedness",
        fingerprint=_pop_fingerprint(pop, design.to_json(), _plan_json(plan), fit_name),
        values={
            "expected_tau": acc.total,
            "tau_true": tau_true,
            "probability_total": prob.total,
            "predictor": fit_name,
        },
        max_deviation=max(dev, prob_dev),
        tolerance=tol,
        passed=bool(dev <= tol and prob_dev <= 1e-12),
        support={"atoms": atoms, "expected_atoms": count},
    )


def verify_conditional_independence(
    design: Design, plan, cap: int = DEFAULT_CAP, tol: float = 1e-12
) -> EnumerationReport:
    """Factorization of the folds' joint conditional law, plus fold-law
    identification against the split's reported designs."""
    _check_cap(design, plan, cap)
    joint: dict = {}
    for z, pz in enumerate_assignments(design, cap=cap):
        for membership, pm in _enumerate_splits(plan, design, z, cap):
            key = membership.tobytes()
            bucket = joint.setdefault(key, {"m": membership, "z": {}})
            zkey = z.tobytes()
            bucket["z"][zkey] = bucket["z"].get(zkey, 0.0) + pz * pm
    max_dev = 0.0
    prob_total = Kahan()
    n_splits = 0
    for bucket in joint.values():
        membership = bucket["m"]
        pm_total = sum(bucket["z"].values())
        prob_total.add(pm_total)
        if pm_total <= 0.0:
            continue
        n_splits += 1
        idx1 = np.flatnonzero(membership == 1)
        idx2 = np.flatnonzero(membership == 2)
        cond = {}
        law1: dict = {}
        law2: dict = {}
        for zkey, p in bucket["z"].items():
            z = np.frombuffer(zkey, dtype=np.int8)
            a = z[idx1].tobytes()
            b = z[idx2].tobytes()
            pc = p / pm_total
            cond[(a, b)] = cond.get((a, b), 0.0) + pc
            law1[a] = law1.get(a, 0.0) + pc
            law2[b] = law2.get(b, 0.0) + pc
        for a, pa in law1.items():
            for b, pb in law2.items():
                pab = cond.get((a, b), 0.0)
                max_dev = max(max_dev, abs(pab - pa * pb))
        sr = _split_result(plan, design, None, membership)
        for fold_idx, law in ((0, law1), (1, law2)):
            fold_design = sr.fold_designs[fold_idx]
            seen = set()
            for zf, pf in enumerate_assignments(fold_design, cap=cap):
                key = zf.tobytes()
                seen.add(key)
                max_dev = max(max_dev, abs(law.get(key, 0.0) - pf))
            for key, p in law.items():
                if key not in seen:
                    max_dev = max(max_dev, abs(p))
    prob_dev = abs(prob_total.total - 1.0)
    return EnumerationReport(
        claim="conditional-independence",
        fingerprint=_fingerprint(design.to_json(), _plan_json(plan)),
        values={"splits": n_splits, "probability_total": prob_total.total},
        max_deviation=max(max_dev, prob_dev),
        tolerance=tol,
        passed=bool(max_dev <= tol and prob_dev <= 1e-12),
        support={"splits": n_splits},
    )


def _oracle_cf_moments(pop, design, plan, f_star, cap, with_variance=False):
    """First two exact moments of the oracle cross-fitted estimator,
    optionally with the exact expectation of its variance estimator."""
    e1 = Kahan()
    e2 = Kahan()
    ev = Kahan()
    atoms = 0
    for z, pz in enumerate_assignments(design, cap=cap):
        observed = realize(pop, z)
        for membership, pm in _enumerate_splits(plan, design, z, cap):
            sr = _split_result(plan, design, z, membership)
            est = cross_fit_components(observed, sr, (f_star, f_star))
            p = pz * pm
            e1.add(p * est.tau_hat)
            e2.add(p * est.tau_hat**2)
            if with_variance:
                n = observed.n
                sizes = sr.fold_sizes
                v = 0.0
                for q in (1, 2):
                    idx = sr.fold_indices(q)
                    v += (sizes[q - 1] / n) ** 2 * fold_variance(
                        sr.fold_designs[q - 1], observed.z[idx], est.residuals[idx]
                    )
                ev.add(p * v)
            atoms += 1
    return e1.total, e2.total, ev.total, atoms


def verify_variance_ordering(
    pop: Population,
    design: Design,
    plans,
    f_star,
    cap: int = DEFAULT_CAP,
    tol: float = 1e-10,
) -> EnumerationReport:
    """Oracle cross-fitted variance versus oracle adjusted variance.

    Every plan's exact variance must weakly exceed the adjusted
    estimator's, with equality within tolerance exactly for plans whose
    conditional treatment probabilities match the marginals.
    """
    ea = Kahan()
    ea2 = Kahan()
    for z, pz in enumerate_assignments(design, cap=cap):
        t = oracle_adjusted_estimate(pop, design, z, f_star)
        ea.add(pz * t)
        ea2.add(pz * t**2)
    var_adj = ea2.total - ea.total**2
    values = {"var_adjusted": var_adj}
    passed = True
    max_dev = 0.0
    total_atoms = 0
    for j, plan in enumerate(plans):
        e1, e2, _, atoms = _oracle_cf_moments(pop, design, plan, f_star, cap)
        var_plan = e2 - e1**2
        optimal = is_optimal_plan(plan, design) if isinstance(plan, SplitPlan) else False
        values[f"var_plan_{j}"] = var_plan
        values[f"optimal_plan_{j}"] = optimal
        total_atoms += atoms
        gap = var_plan - var_adj
        if gap < -tol:
            passed = False
            max_dev = max(max_dev, -gap)
        if optimal and abs(gap) > tol:
            passed = False
            max_dev = max(max_dev, abs(gap))
        if not optimal and gap <= tol:
            passed = False
            max_dev = max(max_dev, tol - gap)
    return EnumerationReport(
        claim="variance-ordering",
        fingerprint=_pop_fingerprint(
            pop, design.to_json(), [_plan_json(p) for p in plans]
        ),
        values=values,
        max_deviation=max_dev,
        tolerance=tol,
        passed=passed,
        support={"atoms": total_atoms},
    )


def verify_variance_identity_cre(
    pop: Population,
    design: CompleteRandomization,
    plan: SplitByTreatmentCRE,
    f_star,
    cap: int = DEFAULT_CAP,
    tol: float = 1e-9,
) -> EnumerationReport:
    """Exact expectation gap of the oracle variance estimator under a
    completely randomized by-treatment split.

    N * (E[Vhat] - Var(tau_oracle_cf)) must equal the residual-scale
    effect-heterogeneity sum of squares, exactly.
    """
    if not isinstance(design, CompleteRandomization) or not isinstance(
        plan, SplitByTreatmentCRE
    ):
        raise DataError("the exact identity is stated for CRE by-treatment splits")
    cells = (
        plan.n1_fold1,
        plan.n0_fold1,
        design.n1 - plan.n1_fold1,
        design.n0 - plan.n0_fold1,
    )
    if min(cells) < 2:
        raise InsufficientReplication(
            f"every fold-arm cell needs at least 2 units, got {cells}"
        )
    e1, e2, ev, atoms = _oracle_cf_moments(pop, design, plan, f_star, cap, with_variance=True)
    var_cf = e2 - e1**2
    n = pop.n
    tau_eps = (pop.y1 - f_star.predict(1, pop.x, pop.strata)) - (
        pop.y0 - f_star.predict(0, pop.x, pop.strata)
    )
    rhs = float(np.sum((tau_eps - tau_eps.mean()) ** 2) / (n - 1))
    lhs = n * (ev - var_cf)
    dev = abs(lhs - rhs)
    return EnumerationReport(
        claim="variance-identity",
        fingerprint=_pop_fingerprint(pop, design.to_json(), plan.to_json()),
        values={
            "lhs": lhs,
            "rhs": rhs,
            "expected_vhat": ev,
            "var_oracle_cf": var_cf,
        },
        max_deviation=dev,
        tolerance=tol,
        passed=bool(dev <= tol),
        support={"atoms": atoms},
    )


def verify_gram_expectation(
    pop: Population,
    design: Stratified,
    plan,
    held_out_fold: int = 1,
    arm: int = 1,
    cap: int = DEFAULT_CAP,
    tol: float = 1e-10,
) -> EnumerationReport:
    """Unbiasedness of the corrected weighted Gram, stratum by stratum.

    The indicator of landing in the training fold with the given arm is,
    within each stratum, a uniform fixed-size subset; enumerating those
    subsets, the average corrected within-subset centered Gram must
    equal the population stratum-weighted Gram.
    """
    import itertools
    import math

    if pop.strata is None or not isinstance(design, Stratified):
        raise DataError("the Gram identity needs a stratified design")
    sizes = design.stratum_sizes
    train_fold = 3 - held_out_fold
    counts = {}
    for k in range(1, design.n_strata + 1):
        a, b = plan.fold1[k - 1]
        nk1 = design.treated[k - 1]
        nk0 = sizes[k - 1] - nk1
        fold = {1: (a, b), 2: (nk1 - a, nk0 - b)}
        counts[k] = {"n": sizes[k - 1], "n1": nk1, "n0": nk0, "fold": fold}
    d = pop.d
    expected = np.zeros((d, d))
    target = np.zeros((d, d))
    atoms = 0
    max_dev = 0.0
    for k in range(1, design.n_strata + 1):
        units = design.units_in(k)
        nk = sizes[k - 1]
        n_cell = counts[k]["fold"][train_fold][0 if arm == 1 else 1]
        if n_cell < 2:
            raise InsufficientReplication(f"stratum {k} training cell has {n_cell} unit(s)")
        omega = stratum_omega(counts, k, arm)
        w_corr = omega * (nk - 1) / (n_cell - 1)
        n_subsets = math.comb(nk, n_cell)
        if n_subsets > cap:
            raise SupportTooLarge(n_subsets, cap)
        acc = np.zeros((d, d))
        for subset in itertools.combinations(units.tolist(), n_cell):
            xs = pop.x[list(subset)]
            c = xs - xs.mean(axis=0)
            acc += w_corr * (c.T @ c)
            atoms += 1
        expected += acc / n_subsets
        xk = pop.x[units]
        ck = xk - xk.mean(axis=0)
        target += omega * (ck.T @ ck)
    if d:
        max_dev = float(np.max(np.abs(expected - target)))
    return EnumerationReport(
        claim="gram-expectation",
        fingerprint=_pop_fingerprint(pop, design.to_json(), _plan_json(plan), held_out_fold, arm),
        values={
            "expected_gram": expected.tolist(),
            "population_gram": target.tolist(),
        },
        max_deviation=max_dev,
        tolerance=tol,
        passed=bool(max_dev <= tol),
        support={"atoms": atoms},
    )
