"""Design-specific variance estimators and confidence intervals.

Each fold of a cross-fitted estimate is, conditionally on the split, a
randomized experiment with a known law, so its contribution to the
sampling variance is estimated with that design's classical variance
formula applied to the cross-fitted residuals. The two fold estimates
recombine with squared fold-size weights. The resulting interval is
asymptotically conservative: its expectation exceeds the truth by the
(unidentifiable) variance of unit-level effect heterogeneity on the
residual scale, reported separately by :func:`conservativeness_gap`.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .designs import Bernoulli, CompleteRandomization, Design, MatchedPairs, Stratified
from .errors import DataError, InsufficientReplication
from .estimators import CrossFitEstimate
from .population import Population


@dataclass(frozen=True)
class VarianceEstimate:
    """Combined variance estimate, per-fold detail, and the interval."""

    v_cf: float
    fold_v: tuple
    alpha: float
    ci: tuple

    def to_json(self) -> dict:
        return {
            "v_cf": self.v_cf,
            "fold_v": list(self.fold_v),
            "alpha": self.alpha,
            "ci": list(self.ci),
        }


def fold_variance(fold_design: Design, z_fold: np.ndarray, eps_fold: np.ndarray) -> float:
    """Variance estimate for one fold under its conditional design.

    ``z_fold`` and ``eps_fold`` are the fold's assignments and
    cross-fitted residuals in the fold design's unit order.
    """
    z = np.asarray(z_fold)
    eps = np.asarray(eps_fold, dtype=float)
    nq = z.shape[0]
    if isinstance(fold_design, Bernoulli):
        if nq < 2:
            raise InsufficientReplication(f"fold has {nq} unit(s)")
        r1 = fold_design.r1
        d = np.where(z == 1, eps / r1, -eps / (1.0 - r1))
        return float(np.sum((d - d.mean()) ** 2) / nq**2)
    if isinstance(fold_design, CompleteRandomization):
        total = 0.0
        for zarm, n_arm in ((1, fold_design.n1), (0, fold_design.n0)):
            if n_arm < 2:
                raise InsufficientReplication(f"arm {zarm} has {n_arm} unit(s) in a fold")
            e = eps[z == zarm]
            total += float(np.sum((e - e.mean()) ** 2) / (n_arm * (n_arm - 1)))
        return total
    if isinstance(fold_design, Stratified):
        sizes = fold_design.stratum_sizes
        total = 0.0
        for k in range(1, fold_design.n_strata + 1):
            units = fold_design.units_in(k)
            nk = sizes[k - 1]
            inner = 0.0
            for zarm, n_arm in ((1, fold_design.treated[k - 1]), (0, nk - fold_design.treated[k - 1])):
                if n_arm < 2:
                    raise InsufficientReplication(
                        f"stratum {k} arm {zarm} has {n_arm} unit(s) in a fold"
                    )
                e = eps[units[z[units] == zarm]]
                inner += float(np.sum((e - e.mean()) ** 2) / (n_arm * (n_arm - 1)))
            total += (nk / nq) ** 2 * inner
        return total
    if isinstance(fold_design, MatchedPairs):
        if fold_design.n_pairs < 2:
            raise InsufficientReplication("a fold needs at least 2 pairs")
        taus = []
        for k in range(1, fold_design.n_pairs + 1):
            units = fold_design.units_in(k)
            e = eps[units]
            zz = z[units]
            taus.append(float(np.sum(np.where(zz == 1, e, -e))))
        taus = np.asarray(taus)
        tbar = 2.0 * taus.sum() / nq
        return float(4.0 / ((nq - 2) * nq) * np.sum((taus - tbar) ** 2))
    raise DataError(f"unsupported fold design: {fold_design!r}")


def variance_cf(
    estimate: CrossFitEstimate, design: Design | None = None, alpha: float = 0.05
) -> VarianceEstimate:
    """Cross-fitted variance estimate and confidence interval.

    Dispatches each fold to the variance formula of its conditional
    design (recorded in the split); ``design`` is accepted for interface
    symmetry but the fold laws carry everything needed.
    """
    split_result = estimate.split
    fold_v = []
    for q in (1, 2):
        idx = split_result.fold_indices(q)
        fold_v.append(
            fold_variance(
                split_result.fold_designs[q - 1],
                estimate.z[idx],
                estimate.residuals[idx],
            )
        )
    n = estimate.n
    sizes = split_result.fold_sizes
    v_cf = sum((sizes[q - 1] / n) ** 2 * fold_v[q - 1] for q in (1, 2))
    ci = confidence_interval(estimate.tau_hat, v_cf, alpha)
    return VarianceEstimate(v_cf=float(v_cf), fold_v=tuple(fold_v), alpha=alpha, ci=ci)


def confidence_interval(tau_hat: float, v, alpha: float = 0.05) -> tuple:
    """Two-sided normal interval around the point estimate."""
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must lie strictly between 0 and 1")
    v_cf = getattr(v, "v_cf", v)
    if v_cf < 0:
        raise DataError("variance must be nonnegative")
    zq = NormalDist().inv_cdf(1.0 - alpha / 2.0)
    half = zq * float(np.sqrt(v_cf))
    return (tau_hat - half, tau_hat + half)


def conservativeness_gap(
    pop: Population, design: Design, plan=None, f_star=None
) -> float:
    """The known expectation excess of the variance estimator.

    Computes the design-appropriate heterogeneity term on the residual
    scale from the full potential-outcome table (so this is a
    simulation/verification tool, not an estimator). ``f_star`` supplies
    the fixed prediction functions; omitted, residuals are the raw
    outcomes.
    """
    if f_star is None:
        e1 = pop.y1.copy()
        e0 = pop.y0.copy()
    else:
        e1 = pop.y1 - f_star.predict(1, pop.x, pop.strata)
        e0 = pop.y0 - f_star.predict(0, pop.x, pop.strata)
    tau_eps = e1 - e0
    n = pop.n
    if isinstance(design, (Bernoulli, CompleteRandomization)):
        return float(np.sum((tau_eps - tau_eps.mean()) ** 2) / (n - 1))
    if isinstance(design, Stratified):
        total = 0.0
        for k in range(1, design.n_strata + 1):
            units = design.units_in(k)
            t = tau_eps[units]
            total += len(units) / (n * (len(units) - 1)) * float(np.sum((t - t.mean()) ** 2))
        return total
    if isinstance(design, MatchedPairs):
        pair_means = np.array(
            [tau_eps[design.units_in(k)].mean() for k in range(1, design.n_pairs + 1)]
        )
        return float(4.0 / (n - 2) * np.sum((pair_means - tau_eps.mean()) ** 2))
    raise DataError(f"unsupported design: {design!r}")
