"""Identification on a discrete population table, no sampling involved.

Builds a two-level population table whose always-survivor contrast is
exactly 1 by construction, then recovers that number through each of the
three identification routes. The second half shows what goes wrong when a
route is applied outside its regime: level-shifted outcome means break the
exclusion route but not the shift-and-solve route, and a misspecified
coupling degree biases the stochastic route.

Run: python3 demos/identification_oracle.py
"""

import warnings

import numpy as np

from sacekit import (
    CellStats,
    CellTable,
    sace_monotone_exclusion,
    sace_no_interaction,
    sace_stochastic_monotone,
    strata_probs_stochastic,
)

MU_ALWAYS_TREATED = 2.0
MU_ALWAYS_CONTROL = 1.0
MU_PROTECTED = 0.0
MU_HARMED = 3.0
TRUTH = MU_ALWAYS_TREATED - MU_ALWAYS_CONTROL


def cell(mass, p1, p0, m1, m0):
    return CellStats(
        mass=mass,
        p_surv_treated=p1,
        p_surv_control=p0,
        mean_treated=m1,
        mean_control=m0,
    )


def monotone_table(shift_per_level=0.0):
    """Two substitution levels under deterministic monotonicity.

    Treated survivors mix always survivors with protected units at a
    known weight (control over treated survival); control survivors are
    pure always survivors. ``shift_per_level`` adds a common location
    shift to every outcome mean at level a, which preserves the
    treated-minus-control contrast but violates mean exclusion.
    """
    cells = {}
    for a, (p1, p0) in enumerate([(0.7, 0.3), (0.8, 0.6)]):
        w = p0 / p1
        m1 = w * MU_ALWAYS_TREATED + (1.0 - w) * MU_PROTECTED
        m0 = MU_ALWAYS_CONTROL
        d = shift_per_level * a
        cells[((), a)] = cell(0.5, p1, p0, m1 + d, m0 + d)
    return CellTable(cells, mode="population")


def stochastic_table(rho):
    # same construction with a partial coupling: both arms are mixtures
    cells = {}
    for a, (p1, p0) in enumerate([(0.7, 0.3), (0.8, 0.6)]):
        always, protected, harmed, _ = strata_probs_stochastic(p1, p0, rho)
        m1 = (always * MU_ALWAYS_TREATED + protected * MU_PROTECTED) / p1
        m0 = (always * MU_ALWAYS_CONTROL + harmed * MU_HARMED) / p0
        cells[((), a)] = cell(0.5, p1, p0, m1, m0)
    return CellTable(cells, mode="population")


def main():
    print(f"target contrast inside the always-survivor stratum: {TRUTH}")
    print()
    print("each route applied to the table it is built for:")
    est = sace_monotone_exclusion(monotone_table())
    print(f"  monotone + exclusion          {est:+.12f}")
    est = sace_stochastic_monotone(stochastic_table(0.6), rho=0.6)
    print(f"  stochastic coupling rho=0.6   {est:+.12f}")
    est = sace_stochastic_monotone(monotone_table(), rho=1.0)
    print(f"  stochastic at rho=1           {est:+.12f}   (deterministic limit)")
    est = sace_no_interaction(monotone_table(shift_per_level=1.0))
    print(f"  additive shift-and-solve      {est:+.12f}   (level-shifted means)")
    print()

    print("routes applied outside their regime:")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        wrong = sace_monotone_exclusion(monotone_table(shift_per_level=1.0))
        print(
            f"  exclusion route on shifted means   {wrong:+.6f}"
            f"   (bias {wrong - TRUTH:+.3f}: the shift is folded into the mixture)"
        )
        for rho_used in (0.0, 0.3, 1.0):
            wrong = sace_stochastic_monotone(stochastic_table(0.6), rho=rho_used)
            print(
                f"  stochastic route, rho 0.6 data read at {rho_used:.1f}"
                f"   {wrong:+.6f}   (bias {wrong - TRUTH:+.3f})"
            )
    print()
    print(
        "the wrong-rho rows are the reason the estimators ship with a"
        " sensitivity sweep rather than a single rho."
    )
    assert np.isfinite(wrong)


if __name__ == "__main__":
    main()
