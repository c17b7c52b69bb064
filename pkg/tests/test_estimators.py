import math

import numpy as np
import pytest

from condcf import (
    Bernoulli,
    BernoulliSplit,
    CompleteRandomization,
    DegenerateFold,
    MatchedPairs,
    SplitByStratum,
    SplitByTreatmentCRE,
    Stratified,
    SplitByTreatmentSRE,
    adjusted_estimate,
    ate_true,
    cross_fit_components,
    cross_fit_estimate,
    enumerate_assignments,
    full_sample_training_set,
    ht_estimate,
    oracle_adjusted_estimate,
    predictor_from_functions,
    realize,
    sample_assignment,
    split,
)
from condcf.population import Population
from condcf.predictors import fit_mean, fit_ols_interacted

ZERO = predictor_from_functions(lambda x: np.zeros(x.shape[0]), lambda x: np.zeros(x.shape[0]))


def test_ht_arm_means_under_cre():
    design = CompleteRandomization(4, 2)
    pop = Population(y1=[1.0, 1.0, 0.5, 0.5], y0=[0.0, 0.0, 0.0, 0.0], x=np.zeros((4, 1)))
    obs = realize(pop, [1, 1, 0, 0])
    assert ht_estimate(obs, design) == pytest.approx(1.0)


def test_ht_matched_pairs_formula():
    rng = np.random.default_rng(0)
    design = MatchedPairs(pairs=(1, 1, 2, 2, 3, 3))
    pop = Population(y1=rng.normal(size=6), y0=rng.normal(size=6),
                     x=np.zeros((6, 1)), strata=design.pairs)
    z = sample_assignment(design, rng)
    obs = realize(pop, z)
    taus = []
    for k in (1, 2, 3):
        units = design.units_in(k)
        taus.append(float(np.sum(np.where(z[units] == 1, obs.y[units], -obs.y[units]))))
    assert ht_estimate(obs, design) == pytest.approx(2.0 / 6.0 * sum(taus), abs=1e-12)


def test_ht_exactly_unbiased_by_enumeration():
    rng = np.random.default_rng(1)
    design = CompleteRandomization(4, 2)
    pop = Population(y1=rng.normal(size=4), y0=rng.normal(size=4), x=np.zeros((4, 1)))
    expected = math.fsum(
        p * ht_estimate(realize(pop, z), design) for z, p in enumerate_assignments(design)
    )
    assert expected == pytest.approx(ate_true(pop), abs=1e-12)


def test_adjusted_zero_predictor_reduces_to_ht():
    rng = np.random.default_rng(2)
    design = CompleteRandomization(8, 3)
    pop = Population(y1=rng.normal(size=8), y0=rng.normal(size=8), x=rng.normal(size=(8, 2)))
    z = sample_assignment(design, rng)
    obs = realize(pop, z)
    assert adjusted_estimate(obs, design, ZERO) == pytest.approx(
        ht_estimate(obs, design), abs=1e-12
    )


def test_adjusted_constant_predictor_cancels_under_cre():
    rng = np.random.default_rng(3)
    design = CompleteRandomization(8, 4)
    pop = Population(y1=rng.normal(size=8), y0=rng.normal(size=8), x=rng.normal(size=(8, 1)))
    z = sample_assignment(design, rng)
    obs = realize(pop, z)
    const = predictor_from_functions(
        lambda x: np.full(x.shape[0], 3.7), lambda x: np.full(x.shape[0], 3.7)
    )
    assert adjusted_estimate(obs, design, const) == pytest.approx(
        ht_estimate(obs, design), abs=1e-12
    )


def test_cross_fit_combination_identities():
    rng = np.random.default_rng(4)
    design = CompleteRandomization(12, 6)
    pop = Population(y1=rng.normal(size=12), y0=rng.normal(size=12), x=rng.normal(size=(12, 2)))
    z = sample_assignment(design, rng)
    obs = realize(pop, z)
    est = cross_fit_estimate(obs, design, SplitByTreatmentCRE(3, 3), "ols", rng)
    sizes = est.split.fold_sizes
    combo = sum(sizes[q] / 12 * est.fold_tau[q] for q in (0, 1))
    assert est.tau_hat == combo
    for q in (0, 1):
        assert est.fold_tau[q] == est.fold_mu[q][1] - est.fold_mu[q][0]


@pytest.mark.parametrize(
    "design,plan",
    [
        (Bernoulli(40, 0.4), BernoulliSplit(0.5)),
        (CompleteRandomization(12, 6), SplitByTreatmentCRE(3, 3)),
        (Stratified(strata=(1,) * 8 + (2,) * 8, treated=(4, 4)),
         SplitByTreatmentSRE(fold1=((2, 2), (2, 2)))),
        (MatchedPairs(pairs=tuple(np.repeat(np.arange(1, 7), 2))), SplitByStratum(3)),
    ],
)
def test_zero_predictor_optimal_plan_reduces_to_ht(design, plan):
    rng = np.random.default_rng(5)
    strata = getattr(design, "strata", getattr(design, "pairs", None))
    pop = Population(
        y1=rng.normal(size=design.n),
        y0=rng.normal(size=design.n),
        x=rng.normal(size=(design.n, 1)),
        strata=strata,
    )
    z = sample_assignment(design, rng)
    obs = realize(pop, z)
    est = cross_fit_estimate(obs, design, plan, "zero", rng)
    assert est.tau_hat == pytest.approx(ht_estimate(obs, design), abs=1e-12)


def test_constant_shift_invariance_under_count_based_split():
    rng = np.random.default_rng(6)
    design = CompleteRandomization(10, 5)
    pop = Population(y1=rng.normal(size=10), y0=rng.normal(size=10), x=rng.normal(size=(10, 1)))
    z = sample_assignment(design, rng)
    obs = realize(pop, z)
    result = split(SplitByTreatmentCRE(2, 2), design, z, rng)
    f = predictor_from_functions(lambda x: x[:, 0], lambda x: -x[:, 0])
    f_shift = predictor_from_functions(lambda x: x[:, 0] + 11.0, lambda x: -x[:, 0] + 11.0)
    a = cross_fit_components(obs, result, (f, f))
    b = cross_fit_components(obs, result, (f_shift, f_shift))
    assert a.tau_hat == pytest.approx(b.tau_hat, abs=1e-12)


def test_exhaustive_unbiasedness_small_cre():
    # joint expectation over (assignment, split) with a data-dependent fit
    from condcf.splitters import enumerate_splits, split_from_membership
    from condcf import build_training_set

    rng = np.random.default_rng(7)
    design = CompleteRandomization(6, 3)
    plan = SplitByTreatmentCRE(1, 2)
    pop = Population(y1=rng.normal(size=6), y0=rng.normal(size=6), x=rng.normal(size=(6, 1)))
    acc = []
    for z, pz in enumerate_assignments(design):
        obs = realize(pop, z)
        for m, pm in enumerate_splits(plan, design, z):
            sr = split_from_membership(plan, design, z, m)
            fitted = [
                fit_mean(build_training_set(obs, sr, held_out_fold=q)) for q in (1, 2)
            ]
            acc.append(pz * pm * cross_fit_components(obs, sr, fitted).tau_hat)
    assert math.fsum(acc) == pytest.approx(ate_true(pop), abs=1e-10)


def test_degenerate_fold_raises():
    # tiny Bernoulli experiment: some coin-split fold will miss an arm
    rng = np.random.default_rng(8)
    design = Bernoulli(4, 0.5)
    pop = Population(y1=np.ones(4), y0=np.zeros(4), x=np.zeros((4, 1)))
    saw_degenerate = False
    for _ in range(200):
        z = sample_assignment(design, rng)
        obs = realize(pop, z)
        try:
            cross_fit_estimate(obs, design, BernoulliSplit(0.5), "zero", rng)
        except DegenerateFold:
            saw_degenerate = True
            break
    assert saw_degenerate


def test_oracle_adjusted_perfect_predictions_hit_truth():
    rng = np.random.default_rng(9)
    design = CompleteRandomization(8, 4)
    y1 = rng.normal(size=8)
    y0 = rng.normal(size=8)
    pop = Population(y1=y1, y0=y0, x=np.arange(8).reshape(8, 1).astype(float))
    perfect = predictor_from_functions(
        lambda x: y1[x[:, 0].astype(int)], lambda x: y0[x[:, 0].astype(int)]
    )
    for z, _ in enumerate_assignments(design):
        tau = oracle_adjusted_estimate(pop, design, z, perfect)
        assert tau == pytest.approx(ate_true(pop), abs=1e-12)


def test_predictor_fallback_never_aborts():
    rng = np.random.default_rng(10)
    design = CompleteRandomization(8, 4)
    # constant covariate makes the interacted OLS singular
    pop = Population(y1=rng.normal(size=8), y0=rng.normal(size=8), x=np.ones((8, 1)))
    z = sample_assignment(design, rng)
    obs = realize(pop, z)
    est = cross_fit_estimate(obs, design, SplitByTreatmentCRE(2, 2), "ols", rng)
    assert np.isfinite(est.tau_hat)
    assert any("mean" in pid or "reduced" in pid for pid in est.predictor_ids)


def test_full_sample_training_set_weights():
    rng = np.random.default_rng(11)
    design = CompleteRandomization(10, 4)
    pop = Population(y1=rng.normal(size=10), y0=rng.normal(size=10), x=rng.normal(size=(10, 1)))
    z = sample_assignment(design, rng)
    obs = realize(pop, z)
    train = full_sample_training_set(obs, design)
    assert np.allclose(train.weights[train.arm == 1], 10 / 4)
    assert np.allclose(train.weights[train.arm == 0], 10 / 6)


def test_plug_in_bias_vs_cross_fit_bias():
    # the plug-in estimator reuses data and is biased when noise aligns
    # with leverage; cross-fitting is exactly unbiased
    rng = np.random.default_rng(12)
    n, d = 80, 8
    x = rng.standard_t(2, size=(n, d))
    x -= x.mean(axis=0)
    ones = np.column_stack([np.ones(n), x])
    h = np.diag(ones @ np.linalg.pinv(ones.T @ ones) @ ones.T)
    eps1 = (h - h.mean()) / max(h.std(), 1e-12)
    pop = Population(y1=x @ np.ones(d) / np.sqrt(d) + eps1, y0=np.zeros(n), x=x)
    design = Bernoulli(n, 0.5)
    taus_adj = []
    taus_cf = []
    for _ in range(400):
        z = sample_assignment(design, rng)
        obs = realize(pop, z)
        try:
            est = cross_fit_estimate(obs, design, BernoulliSplit(0.5), "ols", rng)
        except DegenerateFold:
            continue
        fitted = fit_ols_interacted(full_sample_training_set(obs, design))
        taus_adj.append(adjusted_estimate(obs, design, fitted))
        taus_cf.append(est.tau_hat)
    bias_adj = abs(np.mean(taus_adj) - ate_true(pop))
    bias_cf = abs(np.mean(taus_cf) - ate_true(pop))
    assert bias_adj > 3 * bias_cf
