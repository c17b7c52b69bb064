"""ATE point estimators.

Four routes to the average treatment effect of a fixed population:

* :func:`ht_estimate` - the inverse-probability-weighted difference of
  observed outcomes; unbiased under any design with known assignment
  probabilities, no covariates used.
* :func:`adjusted_estimate` - the plug-in covariate-adjusted estimator
  that fits and evaluates on the same sample. Shipped as the biased
  baseline; its finite-sample bias is what cross-fitting removes.
* :func:`cross_fit_estimate` - the conditional cross-fitted estimator:
  split into two conditionally independent folds, fit each fold's
  prediction functions on the other fold, adjust with the conditional
  treatment probabilities given the split, and recombine by fold size.
  Unbiased for every deterministic prediction rule.
* :func:`oracle_adjusted_estimate` - the adjusted estimator with fixed,
  externally supplied prediction functions; the benchmark the theory
  compares against (requires the full potential-outcome table, so it
  lives in simulation and verification code paths).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .designs import Design, treatment_probs
from .errors import DataError, DegenerateFold, PredictorError, DegenerateStratum
from .population import ObservedData, Population, realize
from .predictors import (
    PREDICTORS,
    FittedPredictor,
    build_training_set,
    calibrate_no_harm,
    fit_mean,
    fit_ols_interacted,
    resolve_spec,
)
from .splitters import SplitPlan, SplitResult, default_plan, split


@dataclass(frozen=True)
class CrossFitEstimate:
    """The cross-fitted point estimate and its per-fold bookkeeping.

    ``fold_mu[q-1][z]`` is fold q's adjusted mean-outcome estimate for
    arm z, ``fold_tau[q-1]`` their difference, and ``tau_hat`` the fold
    sizes' weighted combination. ``residuals[i]`` is the observed
    outcome minus the other fold's prediction at unit i's covariates and
    realized arm; every variance formula downstream consumes these
    cross-fitted residuals fold-locally.
    """

    tau_hat: float
    fold_mu: tuple
    fold_tau: tuple
    residuals: np.ndarray
    z: np.ndarray
    split: SplitResult
    predictor_ids: tuple

    @property
    def n(self) -> int:
        return self.split.n

    def to_json(self) -> dict:
        return {
            "tau_hat": self.tau_hat,
            "fold_mu": [list(m) for m in self.fold_mu],
            "fold_tau": list(self.fold_tau),
            "fold_sizes": list(self.split.fold_sizes),
            "predictors": list(self.predictor_ids),
            "plan": self.split.plan.to_json(),
            "design": self.split.design.to_json(),
        }


def ht_estimate(observed: ObservedData, design: Design) -> float:
    """Inverse-probability-weighted ATE estimate."""
    p1 = treatment_probs(design, 1)
    z = observed.z
    y = observed.y
    terms = np.where(z == 1, y / p1, -y / (1.0 - p1))
    return float(np.sum(terms) / observed.n)


def _adjusted_mu(y, z, x, strata, p1, predictor, arm: int) -> float:
    f = predictor.predict(arm, x, strata)
    n = y.shape[0]
    mask = z == arm
    p = p1 if arm == 1 else 1.0 - p1
    return float(np.sum((y[mask] - f[mask]) / p[mask]) / n + np.sum(f) / n)


def adjusted_estimate(observed: ObservedData, design: Design, fitted: FittedPredictor) -> float:
    """Plug-in covariate-adjusted estimate with a full-sample predictor.

    The predictor is typically fit on the very data it adjusts, which
    reuses each outcome twice and biases the estimate; this function
    exists as the comparison baseline for that phenomenon.
    """
    p1 = treatment_probs(design, 1)
    mu1 = _adjusted_mu(observed.y, observed.z, observed.x, observed.strata, p1, fitted, 1)
    mu0 = _adjusted_mu(observed.y, observed.z, observed.x, observed.strata, p1, fitted, 0)
    return mu1 - mu0


def oracle_adjusted_estimate(pop: Population, design: Design, z, f_star) -> float:
    """Adjusted estimate using fixed prediction functions.

    ``f_star`` is anything with a ``predict(arm, x, strata)`` method;
    because it does not depend on the data, this estimator is unbiased
    and sets the efficiency benchmark.
    """
    observed = realize(pop, z)
    return adjusted_estimate(observed, design, f_star)


def cross_fit_components(
    observed: ObservedData, split_result: SplitResult, fitted_for_fold
) -> CrossFitEstimate:
    """Evaluate the cross-fitted estimator for fixed fold predictors.

    ``fitted_for_fold[q-1]`` is the predictor used on fold q (trained on
    the complementary fold). Empty folds carry zero combination weight
    and empty arm sums contribute nothing; callers that consider those
    outcomes defective must check before calling (the production
    pipeline does).
    """
    n = observed.n
    residuals = np.zeros(n)
    fold_mu = []
    fold_tau = []
    tau_hat = 0.0
    predictor_ids = []
    for q in (1, 2):
        idx = split_result.fold_indices(q)
        pred = fitted_for_fold[q - 1]
        predictor_ids.append(getattr(pred, "kind", "?"))
        if idx.size == 0:
            fold_mu.append((0.0, 0.0))
            fold_tau.append(0.0)
            continue
        x = observed.x[idx]
        strata = None if observed.strata is None else observed.strata[idx]
        y = observed.y[idx]
        z = observed.z[idx]
        f1 = pred.predict(1, x, strata)
        f0 = pred.predict(0, x, strata)
        p1 = split_result.cond_prob[idx, 1]
        p0 = split_result.cond_prob[idx, 0]
        nq = idx.size
        mask1 = z == 1
        mu1 = float(np.sum((y[mask1] - f1[mask1]) / p1[mask1]) / nq + np.sum(f1) / nq)
        mu0 = float(np.sum((y[~mask1] - f0[~mask1]) / p0[~mask1]) / nq + np.sum(f0) / nq)
        fold_mu.append((mu0, mu1))
        fold_tau.append(mu1 - mu0)
        tau_hat += (nq / n) * (mu1 - mu0)
        residuals[idx] = y - np.where(mask1, f1, f0)
    return CrossFitEstimate(
        tau_hat=tau_hat,
        fold_mu=tuple(fold_mu),
        fold_tau=tuple(fold_tau),
        residuals=residuals,
        z=observed.z,
        split=split_result,
        predictor_ids=tuple(predictor_ids),
    )


def _fit_with_fallback(train, name: str, options: dict, calibrate: bool):
    """Fit the requested predictor, degrading instead of aborting.

    The chain is: requested fit, then (for the interacted least squares
    family) the same fit restricted to independent columns, then the
    per-arm mean. Calibration failures fall back to the uncalibrated
    base fit.
    """
    fit, _ = PREDICTORS[name]
    label = name
    try:
        base = fit(train, **options)
    except (PredictorError, DegenerateStratum):
        base = None
        if name == "ols":
            try:
                base = fit_ols_interacted(train, drop_collinear=True)
                label = f"{name}(reduced)"
            except (PredictorError, DegenerateStratum):
                base = None
        if base is None:
            base = fit_mean(train)
            label = f"{name}->mean"
    if calibrate:
        try:
            base = calibrate_no_harm(base, train)
            label = f"{label}+cal"
        except (PredictorError, DegenerateStratum):
            pass
    return base, label


def cross_fit_estimate(
    observed: ObservedData,
    design: Design,
    plan: SplitPlan | None = None,
    predictor_spec="ols",
    rng: np.random.Generator | None = None,
) -> CrossFitEstimate:
    """Run the full conditional cross-fitting pipeline once.

    Splits the sample under ``plan`` (the design's default plan when
    omitted), fits the requested prediction functions on each fold's
    complement, and evaluates the combined estimator. A fold realized
    with no units in some arm (possible only under coin-flip splits)
    raises DegenerateFold: the fold's arm mean would average nothing.
    Predictor failures never abort; they degrade along a documented
    fallback chain that ends at the per-arm mean.
    """
    if rng is None:
        raise DataError("cross_fit_estimate needs a seeded random generator")
    if plan is None:
        plan = default_plan(design)
    name, options, calibrate = resolve_spec(predictor_spec)
    _, weighting = PREDICTORS[name]
    result = split(plan, design, observed.z, rng)
    for q in (1, 2):
        idx = result.fold_indices(q)
        if idx.size == 0:
            raise DegenerateFold(f"fold {q} is empty")
        zq = observed.z[idx]
        for zarm in (0, 1):
            if not np.any(zq == zarm):
                raise DegenerateFold(f"fold {q} has no units in arm {zarm}")
    fitted = []
    ids = []
    for q in (1, 2):
        try:
            train = build_training_set(observed, result, held_out_fold=q, weighting=weighting)
        except (PredictorError, DegenerateStratum):
            train = build_training_set(observed, result, held_out_fold=q, weighting="ipw")
        pred, label = _fit_with_fallback(train, name, options, calibrate)
        fitted.append(pred)
        ids.append(label)
    est = cross_fit_components(observed, result, fitted)
    return CrossFitEstimate(
        tau_hat=est.tau_hat,
        fold_mu=est.fold_mu,
        fold_tau=est.fold_tau,
        residuals=est.residuals,
        z=est.z,
        split=est.split,
        predictor_ids=tuple(ids),
    )
