"""Prediction-function layer: weighted fits behind one fit/predict contract.

Every fitter consumes a :class:`TrainingSet` (rows from the fold being
trained on, with inverse-probability or degrees-of-freedom-corrected
weights) and returns a :class:`FittedPredictor` exposing per-arm
prediction functions. Fits are pure functions of their training set, so
cross-fitting keeps the held-out fold untouched by construction.

Shipped families: zero and per-arm mean baselines, interacted weighted
least squares, stratum-indicator WLS and the shared-slope variant for
stratified experiments, the within-pair difference regression for
matched pairs, a Poisson GLM via iteratively reweighted least squares,
and a no-harm calibration wrapper that re-regresses outcomes on the two
base predictions. Third parties can register additional fitters with
:func:`register_predictor`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .designs import Design, MatchedPairs, Stratified
from .errors import (
    DataError,
    DegenerateStratum,
    EmptyArm,
    MissingStratum,
    NoConvergence,
    PredictorError,
    Separation,
    SingularDesign,
)
from .population import ObservedData
from .splitters import SplitResult, inclusion_probs

CONDITION_LIMIT = 1e10
GLM_COEF_LIMIT = 1e2
ETA_CLIP = 30.0


@dataclass
class TrainingSet:
    """Rows available for fitting one fold's prediction functions."""

    x: np.ndarray
    y: np.ndarray
    arm: np.ndarray
    weights: np.ndarray
    strata: np.ndarray | None = None
    index: np.ndarray | None = None
    held_out_fold: int | None = None
    design_kind: str = ""

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def arm_rows(self, z: int) -> np.ndarray:
        return np.flatnonzero(self.arm == z)


@dataclass
class FittedPredictor:
    """Per-arm prediction functions plus fit diagnostics."""

    kind: str
    _fn: callable
    diagnostics: dict = field(default_factory=dict)

    def predict(self, arm: int, x, strata=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise DataError("predict expects an (m, d) covariate matrix")
        out = np.asarray(self._fn(arm, x, strata), dtype=float)
        return out


def predictor_from_functions(f1, f0, kind: str = "fixed") -> FittedPredictor:
    """Wrap two plain per-arm functions of the covariate matrix."""
    return FittedPredictor(
        kind=kind,
        _fn=lambda arm, x, s: np.broadcast_to(
            np.asarray(f1(x) if arm == 1 else f0(x), dtype=float), (x.shape[0],)
        ).copy(),
    )


def stratum_fold_counts(observed: ObservedData, split: SplitResult) -> dict:
    """Realized per-stratum unit counts, overall and per (fold, arm)."""
    if observed.strata is None:
        raise DataError("observed data carry no stratum labels")
    out = {}
    for k in range(1, int(observed.strata.max()) + 1):
        units = np.flatnonzero(observed.strata == k)
        zk = observed.z[units]
        mk = split.membership[units]
        fold = {}
        for q in (1, 2):
            fold[q] = (int(np.sum((mk == q) & (zk == 1))), int(np.sum((mk == q) & (zk == 0))))
        out[k] = {
            "n": len(units),
            "n1": int(zk.sum()),
            "n0": int(len(units) - zk.sum()),
            "fold": fold,
        }
    return out


def stratum_omega(counts: dict, k: int, z: int) -> float:
    """Variance-minimizing stratum weight built from the fold counts."""
    c = counts[k]
    total = 0.0
    for q in (1, 2):
        n_q1, n_q0 = c["fold"][q]
        n_q = n_q1 + n_q0
        n_qz = n_q1 if z == 1 else n_q0
        if n_q == 0:
            continue
        if n_qz == 0:
            raise DegenerateStratum(f"stratum {k} fold {q} has no units in arm {z}")
        total += n_q * n_q / (n_qz * (c["n"] - 1))
    return total


def build_training_set(
    observed: ObservedData,
    split: SplitResult,
    held_out_fold: int,
    weighting: str = "ipw",
    allow_empty_arm: bool = False,
) -> TrainingSet:
    """Collect the rows of the fold complementary to ``held_out_fold``.

    With ``weighting="ipw"`` each row in arm z receives weight
    1 / P(unit lands in the training fold with Z = z), the inverse of
    the joint fold-and-arm inclusion probability under the plan. With
    ``weighting="stratum-dof"`` (for the stratum-indicator and shared
    slope fits) the weight is instead the stratum weight scaled by
    (N_k - 1)/(n_kz - 1), where n_kz counts the training fold's arm-z
    units in stratum k; the correction pays for the intercepts the fit
    spends on each stratum.
    """
    if held_out_fold not in (1, 2):
        raise DataError("held_out_fold must be 1 or 2")
    train_fold = 3 - held_out_fold
    rows = split.fold_indices(train_fold)
    if rows.size == 0 and not allow_empty_arm:
        raise EmptyArm(f"fold {train_fold} is empty")
    z_rows = observed.z[rows]
    if not allow_empty_arm:
        for zarm in (0, 1):
            if not np.any(z_rows == zarm):
                raise EmptyArm(f"fold {train_fold} has no units in arm {zarm}")
    if weighting == "ipw":
        incl = inclusion_probs(split.plan, split.design)
        w = 1.0 / incl[train_fold - 1, rows, z_rows]
    elif weighting == "stratum-dof":
        if observed.strata is None:
            raise DataError("stratum weights need stratum labels")
        counts = stratum_fold_counts(observed, split)
        w = np.empty(rows.shape[0], dtype=float)
        for j, i in enumerate(rows):
            k = int(observed.strata[i])
            zarm = int(observed.z[i])
            n_qz = counts[k]["fold"][train_fold][0 if zarm == 1 else 1]
            if n_qz < 2:
                raise DegenerateStratum(
                    f"stratum {k} has {n_qz} training unit(s) in arm {zarm}; "
                    "the corrected weights need at least 2"
                )
            omega = stratum_omega(counts, k, zarm)
            w[j] = omega * (counts[k]["n"] - 1) / (n_qz - 1)
    else:
        raise DataError(f"unknown weighting mode: {weighting!r}")
    return TrainingSet(
        x=observed.x[rows],
        y=observed.y[rows],
        arm=z_rows.astype(np.int8),
        weights=w,
        strata=None if observed.strata is None else observed.strata[rows],
        index=rows,
        held_out_fold=held_out_fold,
        design_kind=split.design.kind,
    )


def full_sample_training_set(observed: ObservedData, design: Design) -> TrainingSet:
    """All units with plain inverse treatment-probability weights.

    This is the (biased) plug-in route: the same data will fit the
    predictor and feed the estimator.
    """
    from .designs import treatment_probs

    p1 = treatment_probs(design, 1)
    w = 1.0 / np.where(observed.z == 1, p1, 1.0 - p1)
    return TrainingSet(
        x=observed.x,
        y=observed.y,
        arm=observed.z.astype(np.int8),
        weights=w,
        strata=observed.strata,
        index=np.arange(observed.n),
        held_out_fold=None,
        design_kind=design.kind,
    )


def _weighted_lstsq(a: np.ndarray, b: np.ndarray, w: np.ndarray):
    """Least squares of b on a with row weights w; returns (coef, cond)."""
    sw = np.sqrt(w)
    aw = a * sw[:, None]
    bw = b * sw
    coef, _, rank, sv = np.linalg.lstsq(aw, bw, rcond=None)
    if sv.size == 0 or sv[0] == 0.0:
        return coef, np.inf
    cond = np.inf if (rank < a.shape[1] or sv[-1] == 0.0) else float(sv[0] / sv[-1])
    return coef, cond


def _independent_columns(a: np.ndarray, w: np.ndarray) -> list:
    """Greedy selection of numerically independent columns (first kept)."""
    sw = np.sqrt(w)
    aw = a * sw[:, None]
    keep = []
    basis = np.empty((a.shape[0], 0))
    for j in range(a.shape[1]):
        col = aw[:, j]
        if basis.shape[1]:
            coef, *_ = np.linalg.lstsq(basis, col, rcond=None)
            resid = col - basis @ coef
        else:
            resid = col
        scale = max(np.linalg.norm(col), 1e-12)
        if np.linalg.norm(resid) > 1e-8 * scale:
            keep.append(j)
            basis = np.column_stack([basis, col])
    return keep


def fit_zero(train: TrainingSet) -> FittedPredictor:
    """The trivial predictor: zero for every unit and arm."""
    return FittedPredictor(kind="zero", _fn=lambda arm, x, s: np.zeros(x.shape[0]))


def fit_mean(train: TrainingSet) -> FittedPredictor:
    """Per-arm weighted mean of the training outcomes (0 for an empty arm)."""
    means = {}
    for zarm in (0, 1):
        rows = train.arm_rows(zarm)
        if rows.size == 0:
            means[zarm] = 0.0
        else:
            w = train.weights[rows]
            means[zarm] = float(np.sum(w * train.y[rows]) / np.sum(w))
    return FittedPredictor(
        kind="mean", _fn=lambda arm, x, s: np.full(x.shape[0], means[arm])
    )


def fit_ols_interacted(train: TrainingSet, drop_collinear: bool = False) -> FittedPredictor:
    """Per-arm weighted least squares of y on (1, x).

    Raises SingularDesign when an arm has too few rows or the weighted
    design is ill-conditioned; with ``drop_collinear=True`` the fit
    instead restricts itself to a numerically independent column subset.
    """
    params = {}
    conds = {}
    d = train.d
    for zarm in (0, 1):
        rows = train.arm_rows(zarm)
        if rows.size == 0:
            raise EmptyArm(f"no training rows in arm {zarm}")
        a = np.column_stack([np.ones(rows.size), train.x[rows]])
        w = train.weights[rows]
        y = train.y[rows]
        cols = list(range(d + 1))
        if drop_collinear:
            cols = _independent_columns(a, w)
            a = a[:, cols]
        elif rows.size <= d + 1:
            raise SingularDesign(
                f"arm {zarm} has {rows.size} rows for {d + 1} coefficients"
            )
        coef, cond = _weighted_lstsq(a, y, w)
        if not drop_collinear and cond > CONDITION_LIMIT:
            raise SingularDesign(f"arm {zarm} design condition {cond:.2e}")
        full = np.zeros(d + 1)
        full[cols] = coef
        params[zarm] = full
        conds[zarm] = cond

    def _fn(arm, x, s):
        c = params[arm]
        return c[0] + x @ c[1:]

    return FittedPredictor(kind="ols", _fn=_fn, diagnostics={"cond": conds})


def _stratum_dummies(strata_rows: np.ndarray, labels: list) -> np.ndarray:
    cols = [(strata_rows == k).astype(float) for k in labels]
    return np.column_stack(cols) if cols else np.empty((strata_rows.size, 0))


def fit_wls_stratum_indicators(train: TrainingSet) -> FittedPredictor:
    """Per-arm WLS of y on covariates plus one intercept per stratum.

    Meant for by-treatment splits of stratified experiments with the
    degrees-of-freedom-corrected weights. Prediction requires the
    stratum label and fails with MissingStratum for labels not seen in
    training.
    """
    if train.strata is None:
        raise DataError("stratum-indicator fit needs stratum labels")
    labels = sorted(set(int(v) for v in train.strata))
    params = {}
    conds = {}
    d = train.d
    for zarm in (0, 1):
        rows = train.arm_rows(zarm)
        if rows.size == 0:
            raise EmptyArm(f"no training rows in arm {zarm}")
        for k in labels:
            if np.sum(train.strata[rows] == k) < 2:
                raise DegenerateStratum(
                    f"stratum {k} has fewer than 2 training rows in arm {zarm}"
                )
        a = np.column_stack([_stratum_dummies(train.strata[rows], labels), train.x[rows]])
        coef, cond = _weighted_lstsq(a, train.y[rows], train.weights[rows])
        if cond > CONDITION_LIMIT:
            raise SingularDesign(f"arm {zarm} design condition {cond:.2e}")
        params[zarm] = (dict(zip(labels, coef[: len(labels)])), coef[len(labels):])
        conds[zarm] = cond

    def _fn(arm, x, s):
        if s is None:
            raise MissingStratum("prediction requires stratum labels")
        alphas, beta = params[arm]
        out = x @ beta
        for j, lab in enumerate(np.asarray(s)):
            try:
                out[j] += alphas[int(lab)]
            except KeyError:
                raise MissingStratum(f"stratum {int(lab)} absent from training") from None
        return out

    return FittedPredictor(kind="wls-strata", _fn=_fn, diagnostics={"cond": conds})


def fit_tom(train: TrainingSet) -> FittedPredictor:
    """Joint fit with a slope shared across arms and per-(stratum, arm)
    intercepts, under the same corrected weights as the stratum WLS."""
    if train.strata is None:
        raise DataError("shared-slope fit needs stratum labels")
    labels = sorted(set(int(v) for v in train.strata))
    for zarm in (0, 1):
        rows = train.arm_rows(zarm)
        if rows.size == 0:
            raise EmptyArm(f"no training rows in arm {zarm}")
        for k in labels:
            if np.sum(train.strata[rows] == k) < 2:
                raise DegenerateStratum(
                    f"stratum {k} has fewer than 2 training rows in arm {zarm}"
                )
    cells = [(k, zarm) for k in labels for zarm in (0, 1)]
    dummies = np.column_stack(
        [
            ((train.strata == k) & (train.arm == zarm)).astype(float)
            for k, zarm in cells
        ]
    )
    a = np.column_stack([dummies, train.x])
    coef, cond = _weighted_lstsq(a, train.y, train.weights)
    if cond > CONDITION_LIMIT:
        raise SingularDesign(f"design condition {cond:.2e}")
    alphas = {cell: coef[j] for j, cell in enumerate(cells)}
    beta = coef[len(cells):]

    def _fn(arm, x, s):
        if s is None:
            raise MissingStratum("prediction requires stratum labels")
        out = x @ beta
        for j, lab in enumerate(np.asarray(s)):
            key = (int(lab), arm)
            if key not in alphas:
                raise MissingStratum(f"stratum {int(lab)} absent from training")
            out[j] += alphas[key]
        return out

    return FittedPredictor(kind="tom", _fn=_fn, diagnostics={"cond": cond})


def fit_paired_difference(train: TrainingSet, pair_map=None) -> FittedPredictor:
    """Slope of within-pair outcome differences on covariate differences.

    Differences are treated-minus-control within each complete pair of
    the training fold. There is no intercept; both arms share the fitted
    function x @ beta. All-zero covariate differences yield the zero
    slope rather than an error.
    """
    pairs = train.strata if pair_map is None else np.asarray(pair_map)
    if pairs is None:
        raise DataError("paired-difference fit needs pair labels")
    dx = []
    dy = []
    for k in sorted(set(int(v) for v in pairs)):
        rows = np.flatnonzero(pairs == k)
        if rows.size != 2 or set(train.arm[rows].tolist()) != {0, 1}:
            raise DataError(
                f"pair {k} is incomplete in the training fold; use a whole-pair split"
            )
        t, c = (rows[0], rows[1]) if train.arm[rows[0]] == 1 else (rows[1], rows[0])
        dx.append(train.x[t] - train.x[c])
        dy.append(train.y[t] - train.y[c])
    dx = np.asarray(dx)
    dy = np.asarray(dy)
    if dx.size == 0 or np.max(np.abs(dx)) == 0.0:
        beta = np.zeros(train.d)
        cond = np.inf
    else:
        beta, _, rank, sv = np.linalg.lstsq(dx, dy, rcond=None)
        cond = np.inf if (rank < train.d or sv[-1] == 0.0) else float(sv[0] / sv[-1])
        if cond > CONDITION_LIMIT:
            raise SingularDesign(f"pair-difference design condition {cond:.2e}")

    return FittedPredictor(
        kind="paired-diff",
        _fn=lambda arm, x, s: x @ beta,
        diagnostics={"cond": cond},
    )


def _poisson_deviance(y, mu, w):
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return 2.0 * float(np.sum(w * (term - (y - mu))))


def fit_poisson_glm(train: TrainingSet, max_iter: int = 100, tol: float = 1e-8) -> FittedPredictor:
    """Per-arm weighted Poisson regression with a log link, via IRLS."""
    if np.any(train.y < 0):
        raise DataError("Poisson regression needs nonnegative outcomes")
    params = {}
    iters = {}
    d = train.d
    for zarm in (0, 1):
        rows = train.arm_rows(zarm)
        if rows.size == 0:
            raise EmptyArm(f"no training rows in arm {zarm}")
        if rows.size < d + 1:
            raise SingularDesign(f"arm {zarm} has {rows.size} rows for {d + 1} coefficients")
        a = np.column_stack([np.ones(rows.size), train.x[rows]])
        y = train.y[rows]
        w = train.weights[rows]
        if np.sum(y) == 0.0:
            # the log-link intercept is unbounded below on an all-zero arm
            raise Separation(f"arm {zarm} outcomes are all zero")
        theta = np.zeros(d + 1)
        theta[0] = np.log(np.sum(w * y) / np.sum(w) + 1e-8)
        dev = np.inf
        converged = False
        for it in range(max_iter):
            eta = a @ theta
            mu = np.exp(np.clip(eta, -ETA_CLIP, ETA_CLIP))
            work = eta + (y - mu) / mu
            theta, cond = _weighted_lstsq(a, work, w * mu)
            if cond > CONDITION_LIMIT:
                raise SingularDesign(f"arm {zarm} IRLS design condition {cond:.2e}")
            if np.max(np.abs(theta)) > GLM_COEF_LIMIT:
                raise Separation(f"arm {zarm} coefficients diverged (separation)")
            new_dev = _poisson_deviance(y, np.exp(np.clip(a @ theta, -ETA_CLIP, ETA_CLIP)), w)
            if abs(new_dev - dev) < tol:
                dev = new_dev
                converged = True
                iters[zarm] = it + 1
                break
            dev = new_dev
        if not converged:
            raise NoConvergence(f"arm {zarm} IRLS did not converge in {max_iter} iterations")
        params[zarm] = theta

    def _fn(arm, x, s):
        c = params[arm]
        return np.exp(np.clip(c[0] + x @ c[1:], -ETA_CLIP, ETA_CLIP))

    return FittedPredictor(kind="poisson", _fn=_fn, diagnostics={"iterations": iters})


def calibrate_no_harm(base: FittedPredictor, train: TrainingSet) -> FittedPredictor:
    """Second-stage linear calibration on the two base predictions.

    For each arm, regresses the training outcomes on (1, g1(x), g0(x))
    where g1/g0 are the base predictor's two arms. When the two base
    predictions are collinear the fit degrades to a single-regressor
    calibration and finally to the arm mean, so calibrated adjustment
    never does worse than no adjustment asymptotically.
    """
    g1 = base.predict(1, train.x, train.strata)
    g0 = base.predict(0, train.x, train.strata)
    params = {}
    for zarm in (0, 1):
        rows = train.arm_rows(zarm)
        if rows.size == 0:
            raise EmptyArm(f"no training rows in arm {zarm}")
        if rows.size < 4:
            raise SingularDesign(f"arm {zarm} has {rows.size} rows; calibration needs 4")
        y = train.y[rows]
        ones = np.ones(rows.size)
        a = np.column_stack([ones, g1[rows], g0[rows]])
        coef, cond = _weighted_lstsq(a, y, ones)
        if cond <= CONDITION_LIMIT:
            params[zarm] = ("both", coef)
            continue
        own = g1[rows] if zarm == 1 else g0[rows]
        a = np.column_stack([ones, own])
        coef, cond = _weighted_lstsq(a, y, ones)
        if cond <= CONDITION_LIMIT:
            params[zarm] = ("own", coef)
            continue
        params[zarm] = ("mean", np.array([float(np.mean(y))]))

    def _fn(arm, x, s):
        mode, coef = params[arm]
        if mode == "mean":
            return np.full(x.shape[0], coef[0])
        b1 = base.predict(1, x, s)
        b0 = base.predict(0, x, s)
        if mode == "both":
            return coef[0] + coef[1] * b1 + coef[2] * b0
        own = b1 if arm == 1 else b0
        return coef[0] + coef[1] * own

    return FittedPredictor(
        kind=f"{base.kind}+cal",
        _fn=_fn,
        diagnostics={"base": base.diagnostics, "modes": {z: params[z][0] for z in params}},
    )


def fit_adversarial(train: TrainingSet) -> FittedPredictor:
    """A deliberately terrible deterministic predictor for stress tests:
    a huge constant read off the first training outcome.

    The 1e4 scale keeps the constant four orders of magnitude beyond the
    data while leaving enough double-precision headroom for the
    enumeration checks' 1e-10 tolerance.
    """
    c = 1e4 * float(train.y[0]) if train.n_rows else 0.0
    return FittedPredictor(kind="adversarial", _fn=lambda arm, x, s: np.full(x.shape[0], c))


#: name -> (fit callable, training-set weighting mode)
PREDICTORS = {
    "zero": (fit_zero, "ipw"),
    "mean": (fit_mean, "ipw"),
    "ols": (fit_ols_interacted, "ipw"),
    "wls-strata": (fit_wls_stratum_indicators, "stratum-dof"),
    "tom": (fit_tom, "stratum-dof"),
    "paired-diff": (fit_paired_difference, "ipw"),
    "poisson": (fit_poisson_glm, "ipw"),
    "adversarial": (fit_adversarial, "ipw"),
}


def register_predictor(name: str, fit, weighting: str = "ipw") -> None:
    """Add a third-party fit routine to the registry.

    ``fit`` must accept a TrainingSet (plus keyword options) and return
    a FittedPredictor; ``weighting`` picks which weights the pipeline
    builds into the training set.
    """
    if weighting not in ("ipw", "stratum-dof"):
        raise DataError(f"unknown weighting mode: {weighting!r}")
    PREDICTORS[name] = (fit, weighting)


def resolve_spec(spec) -> tuple:
    """Parse a predictor spec into (name, options, calibrate).

    Accepts "name", "name+cal", or {"name": ..., "options": {...},
    "calibrate": bool}.
    """
    if isinstance(spec, str):
        name, _, suffix = spec.partition("+")
        calibrate = suffix == "cal"
        if suffix and not calibrate:
            raise DataError(f"unknown predictor suffix {suffix!r}")
        options = {}
    elif isinstance(spec, dict):
        name = spec.get("name", "")
        options = dict(spec.get("options", {}))
        calibrate = bool(spec.get("calibrate", False))
    else:
        raise DataError(f"cannot parse predictor spec: {spec!r}")
    if name not in PREDICTORS:
        raise DataError(f"unknown predictor {name!r}; registered: {sorted(PREDICTORS)}")
    return name, options, calibrate


def centered_weighted_gram(x: np.ndarray, strata: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Sum over strata of the weighted Gram of within-stratum-centered rows.

    This is the cross-product matrix the stratum-indicator WLS inverts
    once the stratum intercepts are profiled out.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros((x.shape[1], x.shape[1]))
    for k in sorted(set(int(v) for v in strata)):
        rows = np.flatnonzero(strata == k)
        w = weights[rows]
        centered = x[rows] - np.average(x[rows], axis=0, weights=w)
        out += (centered * w[:, None]).T @ centered
    return out
