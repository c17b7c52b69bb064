import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condcf import (
    Bernoulli,
    BernoulliSplit,
    CompleteRandomization,
    DegenerateStratum,
    Hybrid,
    MatchedPairs,
    PlanIncompatible,
    SplitByStratum,
    SplitByTreatmentCRE,
    SplitByTreatmentSRE,
    Stratified,
    check_positivity,
    default_plan,
    is_optimal_plan,
    sample_assignment,
    split,
)
from condcf.splitters import (
    enumerate_splits,
    inclusion_probs,
    plan_from_json,
    split_support_size,
)


def test_split_by_treatment_cre_fold_designs():
    rng = np.random.default_rng(0)
    design = CompleteRandomization(10, 4)
    z = sample_assignment(design, rng)
    plan = SplitByTreatmentCRE(n1_fold1=2, n0_fold1=3)
    result = split(plan, design, z, rng)
    assert result.fold_designs[0] == CompleteRandomization(5, 2)
    assert result.fold_designs[1] == CompleteRandomization(5, 2)
    fold1 = result.fold_indices(1)
    assert np.allclose(result.cond_prob[fold1, 1], 2 / 5)


def test_split_by_stratum_mpe_fold_designs():
    rng = np.random.default_rng(1)
    design = MatchedPairs(pairs=(1, 1, 2, 2, 3, 3, 4, 4))
    z = sample_assignment(design, rng)
    result = split(SplitByStratum(k_fold1=2), design, z, rng)
    for q in (0, 1):
        fd = result.fold_designs[q]
        assert isinstance(fd, MatchedPairs)
        assert fd.n_pairs == 2
    assert np.allclose(result.cond_prob, 0.5)


def test_bernoulli_split_keeps_rate():
    rng = np.random.default_rng(2)
    design = Bernoulli(6, 0.3)
    z = sample_assignment(design, rng)
    result = split(BernoulliSplit(pi=0.5), design, z, rng)
    assert np.allclose(result.cond_prob[:, 1], 0.3)
    for q in (0, 1):
        fd = result.fold_designs[q]
        assert isinstance(fd, Bernoulli) and fd.r1 == 0.3


def test_split_by_treatment_sre_fold_designs():
    rng = np.random.default_rng(3)
    design = Stratified(strata=(1, 1, 1, 1, 2, 2, 2, 2), treated=(2, 2))
    z = sample_assignment(design, rng)
    plan = SplitByTreatmentSRE(fold1=((1, 1), (1, 1)))
    result = split(plan, design, z, rng)
    for q in (0, 1):
        fd = result.fold_designs[q]
        assert isinstance(fd, Stratified)
        assert fd.stratum_sizes == (2, 2)
        assert fd.treated == (1, 1)
    assert np.allclose(result.cond_prob[:, 1], 0.5)


def test_hybrid_fold_designs():
    rng = np.random.default_rng(4)
    design = Stratified(strata=(1,) * 6 + (2, 2, 2), treated=(3, 1))
    z = sample_assignment(design, rng)
    plan = Hybrid(by_treatment=((1, 1, 1),), whole_fold1=1)
    result = split(plan, design, z, rng)
    sizes = result.fold_sizes
    assert sizes[0] + sizes[1] == 9
    # stratum 2 lands wholesale in exactly one fold
    m2 = result.membership[6:]
    assert len(set(m2.tolist())) == 1
    assert check_positivity(result)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_partition_property(seed):
    rng = np.random.default_rng(seed)
    cases = [
        (Bernoulli(7, 0.4), BernoulliSplit(0.3)),
        (CompleteRandomization(8, 4), SplitByTreatmentCRE(2, 2)),
        (Stratified(strata=(1, 1, 1, 1, 2, 2, 2, 2), treated=(2, 2)),
         SplitByTreatmentSRE(fold1=((1, 1), (1, 1)))),
        (MatchedPairs(pairs=(1, 1, 2, 2, 3, 3)), SplitByStratum(1)),
    ]
    for design, plan in cases:
        z = sample_assignment(design, rng)
        result = split(plan, design, z, rng)
        assert np.all((result.membership == 1) | (result.membership == 2))
        assert result.fold_sizes[0] + result.fold_sizes[1] == design.n
        assert check_positivity(result)


def test_positivity_rejects_degenerate_table():
    rng = np.random.default_rng(5)
    design = CompleteRandomization(6, 3)
    z = sample_assignment(design, rng)
    result = split(SplitByTreatmentCRE(1, 1), design, z, rng)
    table = result.cond_prob.copy()
    table[0, 0] = 0.0
    bad = type(result)(
        membership=result.membership,
        fold_designs=result.fold_designs,
        cond_prob=table,
        plan=result.plan,
        design=result.design,
    )
    assert check_positivity(result)
    assert not check_positivity(bad)


def test_is_optimal_plan():
    cre = CompleteRandomization(1000, 500)
    assert is_optimal_plan(SplitByTreatmentCRE(250, 250), cre)
    assert not is_optimal_plan(SplitByTreatmentCRE(100, 400), cre)
    assert is_optimal_plan(BernoulliSplit(0.2), Bernoulli(10, 0.7))
    sre = Stratified(strata=(1,) * 8 + (2,) * 4, treated=(4, 2))
    assert is_optimal_plan(SplitByTreatmentSRE(fold1=((2, 2), (1, 1))), sre)
    assert not is_optimal_plan(SplitByTreatmentSRE(fold1=((1, 3), (1, 1))), sre)
    assert is_optimal_plan(SplitByStratum(1), sre)


def test_plan_validation_errors():
    with pytest.raises(PlanIncompatible):
        split(
            BernoulliSplit(0.5),
            CompleteRandomization(4, 2),
            [1, 1, 0, 0],
            np.random.default_rng(0),
        )
    with pytest.raises(PlanIncompatible):
        split(
            SplitByTreatmentCRE(2, 2),
            CompleteRandomization(6, 3),
            [1, 1, 0, 0, 0, 0],  # realized count mismatch
            np.random.default_rng(0),
        )
    sre_small = Stratified(strata=(1, 1, 1, 2, 2, 2), treated=(1, 1))
    with pytest.raises(DegenerateStratum):
        split(
            SplitByTreatmentSRE(fold1=((1, 1), (1, 1))),
            sre_small,
            sample_assignment(sre_small, np.random.default_rng(0)),
            np.random.default_rng(0),
        )
    with pytest.raises(PlanIncompatible):
        split(
            SplitByStratum(k_fold1=4),
            MatchedPairs(pairs=(1, 1, 2, 2)),
            [1, 0, 0, 1],
            np.random.default_rng(0),
        )


def test_default_plans():
    assert default_plan(Bernoulli(10, 0.3)) == BernoulliSplit(0.5)
    assert default_plan(CompleteRandomization(10, 4)) == SplitByTreatmentCRE(2, 3)
    plan = default_plan(CompleteRandomization(6, 3))
    assert is_optimal_plan(plan, CompleteRandomization(6, 3))
    assert default_plan(MatchedPairs(pairs=(1, 1, 2, 2, 3, 3))) == SplitByStratum(2)
    sre = Stratified(strata=(1,) * 8 + (2,) * 8, treated=(4, 4))
    assert default_plan(sre) == SplitByTreatmentSRE(fold1=((2, 2), (2, 2)))
    mixed = Stratified(strata=(1,) * 8 + (2, 2), treated=(4, 1))
    plan = default_plan(mixed)
    assert isinstance(plan, Hybrid)
    assert plan.by_treatment == ((1, 2, 2),)
    assert plan.whole_fold1 == 1


def test_split_support_size_and_enumeration_agree():
    rng = np.random.default_rng(6)
    cases = [
        (Bernoulli(4, 0.5), BernoulliSplit(0.4)),
        (CompleteRandomization(6, 3), SplitByTreatmentCRE(1, 2)),
        (Stratified(strata=(1, 1, 1, 1, 2, 2, 2, 2), treated=(2, 2)),
         SplitByTreatmentSRE(fold1=((1, 1), (1, 1)))),
        (MatchedPairs(pairs=(1, 1, 2, 2, 3, 3)), SplitByStratum(2)),
        (Stratified(strata=(1, 1, 1, 1, 2, 2), treated=(2, 1)),
         Hybrid(by_treatment=((1, 1, 1),), whole_fold1=1)),
    ]
    for design, plan in cases:
        z = sample_assignment(design, rng)
        splits = list(enumerate_splits(plan, design, z))
        assert len(splits) == split_support_size(plan, design)
        total = sum(p for _, p in splits)
        assert total == pytest.approx(1.0, abs=1e-12)


def test_inclusion_probs_match_enumeration():
    # P(i in fold q, Z_i = z) from the plan formulas must equal the joint
    # enumeration frequency over (assignment, split).
    from condcf import enumerate_assignments

    cases = [
        (Bernoulli(4, 0.3), BernoulliSplit(0.4)),
        (CompleteRandomization(5, 2), SplitByTreatmentCRE(1, 1)),
        (Stratified(strata=(1, 1, 1, 1, 2, 2), treated=(2, 1)),
         Hybrid(by_treatment=((1, 1, 1),), whole_fold1=1)),
        (MatchedPairs(pairs=(1, 1, 2, 2, 3, 3)), SplitByStratum(1)),
    ]
    for design, plan in cases:
        incl = inclusion_probs(plan, design)
        got = np.zeros_like(incl)
        for z, pz in enumerate_assignments(design):
            for m, pm in enumerate_splits(plan, design, z):
                for i in range(design.n):
                    got[m[i] - 1, i, z[i]] += pz * pm
        assert np.allclose(got, incl, atol=1e-12)


def test_plan_json_round_trip():
    plans = [
        BernoulliSplit(0.25),
        SplitByTreatmentCRE(3, 4),
        SplitByTreatmentSRE(fold1=((1, 2), (2, 1))),
        SplitByStratum(3),
        Hybrid(by_treatment=((1, 1, 1), (3, 2, 2)), whole_fold1=1),
    ]
    for plan in plans:
        assert plan_from_json(plan.to_json()) == plan
