"""Regenerate the shipped verification fixture corpus.

Run from the repository root:

    python3 scripts/make_fixtures.py

The populations are small seeded draws; values are embedded verbatim in
the JSON files so the corpus is stable regardless of RNG changes.
"""

import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "condcf" / "fixtures"


def population(seed, n, d=1, strata=None, scale=1.0, shift=0.0):
    rng = np.random.default_rng(seed)
    return {
        "y1": np.round(rng.normal(shift, scale, size=n), 6).tolist(),
        "y0": np.round(rng.normal(0.0, scale, size=n), 6).tolist(),
        "x": np.round(rng.normal(size=(n, d)), 6).tolist(),
        "strata": list(strata) if strata is not None else None,
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    fixtures = []

    fixtures.append({
        "id": "bre4-bern-even",
        "population": population(101, 4),
        "design": {"kind": "bernoulli", "n": 4, "r1": 0.5},
        "plan": {"kind": "bernoulli", "pi": 0.5},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    fixtures.append({
        "id": "bre5-bern-uneven",
        "population": population(102, 5),
        "design": {"kind": "bernoulli", "n": 5, "r1": 0.3},
        "plan": {"kind": "bernoulli", "pi": 0.4},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    fixtures.append({
        "id": "bre6-bern",
        "population": population(103, 6, shift=1.0),
        "design": {"kind": "bernoulli", "n": 6, "r1": 0.7},
        "plan": {"kind": "bernoulli", "pi": 0.5},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    fixtures.append({
        "id": "cre6-bt-balanced",
        "population": population(104, 6, shift=0.5),
        "design": {"kind": "complete", "n": 6, "n1": 3},
        "plan": {"kind": "by_treatment_cre", "n1_fold1": 2, "n0_fold1": 2},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    fixtures.append({
        "id": "cre6-bt-skewed",
        "population": population(105, 6),
        "design": {"kind": "complete", "n": 6, "n1": 3},
        "plan": {"kind": "by_treatment_cre", "n1_fold1": 1, "n0_fold1": 2},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    fixtures.append({
        "id": "cre8-bt-balanced",
        "population": population(106, 8, scale=1.5),
        "design": {"kind": "complete", "n": 8, "n1": 4},
        "plan": {"kind": "by_treatment_cre", "n1_fold1": 2, "n0_fold1": 2},
        "plans": [
            {"kind": "by_treatment_cre", "n1_fold1": 2, "n0_fold1": 2},
            {"kind": "by_treatment_cre", "n1_fold1": 1, "n0_fold1": 3},
            {"kind": "by_treatment_cre", "n1_fold1": 3, "n0_fold1": 1},
        ],
        "f_star": {"beta1": [0.8], "alpha1": 0.2, "beta0": [-0.3], "alpha0": 0.0},
        "claims": [
            "unbiasedness",
            "conditional-independence",
            "variance-ordering",
            "variance-identity",
        ],
    })
    fixtures.append({
        "id": "cre8-bt-skewed",
        "population": population(107, 8),
        "design": {"kind": "complete", "n": 8, "n1": 4},
        "plan": {"kind": "by_treatment_cre", "n1_fold1": 1, "n0_fold1": 3},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    strata44 = [1] * 4 + [2] * 4
    fixtures.append({
        "id": "sre44-by-treatment",
        "population": population(108, 8, strata=strata44, shift=0.7),
        "design": {"kind": "stratified", "strata": strata44, "treated": [2, 2]},
        "plan": {"kind": "by_treatment_sre", "fold1": [[1, 1], [1, 1]]},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    fixtures.append({
        "id": "sre44-by-stratum",
        "population": population(109, 8, strata=strata44),
        "design": {"kind": "stratified", "strata": strata44, "treated": [2, 2]},
        "plan": {"kind": "by_stratum", "k_fold1": 1},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    strata42 = [1] * 4 + [2] * 2
    fixtures.append({
        "id": "sre42-hybrid",
        "population": population(110, 6, strata=strata42),
        "design": {"kind": "stratified", "strata": strata42, "treated": [2, 1]},
        "plan": {"kind": "hybrid", "by_treatment": [[1, 1, 1]], "whole_fold1": 1},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    pairs4 = [1, 1, 2, 2, 3, 3, 4, 4]
    fixtures.append({
        "id": "mpe4-by-stratum",
        "population": population(111, 8, strata=pairs4, shift=0.4),
        "design": {"kind": "matched_pairs", "pairs": pairs4},
        "plan": {"kind": "by_stratum", "k_fold1": 2},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    pairs3 = [1, 1, 2, 2, 3, 3]
    fixtures.append({
        "id": "mpe3-by-stratum",
        "population": population(112, 6, strata=pairs3),
        "design": {"kind": "matched_pairs", "pairs": pairs3},
        "plan": {"kind": "by_stratum", "k_fold1": 1},
        "claims": ["unbiasedness", "conditional-independence"],
    })
    strata88 = [1] * 8 + [2] * 8
    fixtures.append({
        "id": "sre88-gram",
        "population": population(113, 16, d=2, strata=strata88),
        "design": {"kind": "stratified", "strata": strata88, "treated": [4, 4]},
        "plan": {"kind": "by_treatment_sre", "fold1": [[2, 2], [2, 2]]},
        "claims": ["gram-expectation"],
    })
    fixtures.append({
        "id": "cre8-bt-identity-2",
        "population": population(114, 8, scale=2.0, shift=-0.6),
        "design": {"kind": "complete", "n": 8, "n1": 4},
        "plan": {"kind": "by_treatment_cre", "n1_fold1": 2, "n0_fold1": 2},
        "f_star": {"beta1": [0.0], "alpha1": 0.0, "beta0": [0.0], "alpha0": 0.0},
        "claims": ["variance-identity"],
    })

    for fixture in fixtures:
        path = OUT / f"{fixture['id']}.json"
        path.write_text(json.dumps(fixture, indent=1) + "\n")
        print("wrote", path)


if __name__ == "__main__":
    main()
