"""Shipped verification fixtures and the claim runner behind ``verify``.

A fixture file bundles a small population, a design, one or more split
plans, and the exact claims to check by exhaustive enumeration. The
runner turns each (fixture, claim) pair into flat result rows suitable
for a pass/fail table.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from . import designs as dsg
from .errors import DataError
from .oracle import (
    verify_conditional_independence,
    verify_gram_expectation,
    verify_unbiasedness,
    verify_variance_identity_cre,
    verify_variance_ordering,
)
from .population import Population
from .predictors import predictor_from_functions
from .splitters import plan_from_json

CLAIMS = (
    "unbiasedness",
    "conditional-independence",
    "variance-ordering",
    "variance-identity",
    "gram-expectation",
)


def load_fixture(obj: dict) -> dict:
    """Materialize a fixture dict into package objects."""
    try:
        popspec = obj["population"]
        pop = Population(
            y1=np.asarray(popspec["y1"], dtype=float),
            y0=np.asarray(popspec["y0"], dtype=float),
            x=np.asarray(popspec["x"], dtype=float),
            strata=popspec.get("strata"),
        )
        design = dsg.from_json(obj["design"])
        plan = plan_from_json(obj["plan"])
        plans = [plan_from_json(p) for p in obj.get("plans", [])] or [plan]
        claims = list(obj["claims"])
        predictors = list(obj.get("predictors", ["zero", "mean", "adversarial"]))
        f_star = None
        if "f_star" in obj:
            fs = obj["f_star"]
            b1 = np.asarray(fs["beta1"], dtype=float)
            b0 = np.asarray(fs["beta0"], dtype=float)
            a1 = float(fs.get("alpha1", 0.0))
            a0 = float(fs.get("alpha0", 0.0))
            f_star = predictor_from_functions(
                lambda x, b1=b1, a1=a1: a1 + x @ b1,
                lambda x, b0=b0, a0=a0: a0 + x @ b0,
            )
        unknown = set(claims) - set(CLAIMS)
        if unknown:
            raise DataError(f"unknown claims: {sorted(unknown)}")
        return {
            "id": obj["id"],
            "population": pop,
            "design": design,
            "plan": plan,
            "plans": plans,
            "claims": claims,
            "predictors": predictors,
            "f_star": f_star,
            "gram": obj.get("gram", {}),
        }
    except (KeyError, TypeError, ValueError) as err:
        raise DataError(f"malformed fixture: {err}") from err


def shipped_fixture_files():
    """Paths of the fixture files bundled with the package, sorted."""
    root = resources.files("condcf") / "fixtures"
    return sorted(
        (p for p in root.iterdir() if p.name.endswith(".json")), key=lambda p: p.name
    )


def load_fixtures(paths=None) -> list:
    if paths is None:
        paths = shipped_fixture_files()
    out = []
    for path in paths:
        try:
            obj = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise DataError(f"cannot read fixture {path}: {err}") from err
        fixture = load_fixture(obj)
        fixture["source"] = str(path)
        out.append(fixture)
    return out


def run_fixture(fixture: dict, claims=None, cap: int = 1_000_000) -> list:
    """Run the fixture's claims; returns one result dict per check."""
    rows = []
    wanted = set(claims) if claims else None
    pop = fixture["population"]
    design = fixture["design"]
    plan = fixture["plan"]

    def _row(report, predictor=""):
        rows.append(
            {
                "fixture": fixture["id"],
                "claim": report.claim,
                "predictor": predictor,
                "deviation": report.max_deviation,
                "tolerance": report.tolerance,
                "atoms": report.support.get("atoms", report.support.get("splits", 0)),
                "passed": report.passed,
            }
        )

    for claim in fixture["claims"]:
        if wanted is not None and claim not in wanted:
            continue
        if claim == "unbiasedness":
            for predictor in fixture["predictors"]:
                _row(verify_unbiasedness(pop, design, plan, predictor, cap=cap), predictor)
        elif claim == "conditional-independence":
            _row(verify_conditional_independence(design, plan, cap=cap))
        elif claim == "variance-ordering":
            _row(
                verify_variance_ordering(
                    pop, design, fixture["plans"], fixture["f_star"], cap=cap
                )
            )
        elif claim == "variance-identity":
            _row(
                verify_variance_identity_cre(
                    pop, design, plan, fixture["f_star"], cap=cap
                )
            )
        elif claim == "gram-expectation":
            folds = fixture["gram"].get("held_out_folds", (1, 2))
            arms = fixture["gram"].get("arms", (0, 1))
            for fold in folds:
                for arm in arms:
                    _row(
                        verify_gram_expectation(pop, design, plan, fold, arm, cap=cap),
                        predictor=f"fold{fold}-arm{arm}",
                    )
    return rows
